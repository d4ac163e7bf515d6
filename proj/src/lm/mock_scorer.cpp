#include "kgh/mock_scorer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>

#include "kgh/error.hpp"
#include "kgh/io.hpp"

namespace kgh {

using nlohmann::ordered_json;

namespace {

constexpr char kSep = '\x1f';
constexpr const char* kMask = "[MASK]";

std::string lookup_key(std::string_view tmpl, std::string_view digest, std::string_view focus) {
    std::string key;
    key.reserve(tmpl.size() + digest.size() + focus.size() + 2);
    key.append(tmpl).push_back(kSep);
    key.append(digest).push_back(kSep);
    key.append(focus);
    return key;
}

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::map<std::string, double> prob_map(const ordered_json& v, const std::string& what) {
    if (!v.is_object()) throw ParseError(what + " must be an object of token -> probability");
    std::map<std::string, double> out;
    for (const auto& [k, p] : v.items()) {
        if (!p.is_number()) throw ParseError(what + ": value for '" + k + "' must be a number");
        out[k] = p.get<double>();
    }
    return out;
}

} // namespace

MockTable MockTable::from_json(const ordered_json& doc, std::string_view origin) {
    const std::string o(origin);
    if (!doc.is_object()) throw ParseError(o + ": mock table must be a JSON object");
    MockTable t;
    if (doc.contains("scorer_id")) t.scorer_id = doc.at("scorer_id").get<std::string>();
    if (doc.contains("lmax")) t.lmax = doc.at("lmax").get<int>();
    if (!doc.contains("vocab") || !doc.at("vocab").is_array()) {
        throw ParseError(o + ": field 'vocab' must be a list of tokens");
    }
    for (const auto& tok : doc.at("vocab")) {
        if (!tok.is_string()) throw ParseError(o + ": field 'vocab' must be a list of tokens");
        t.vocab.push_back(tok.get<std::string>());
    }
    if (doc.contains("default")) t.default_weights = prob_map(doc.at("default"), o + ": field 'default'");
    if (doc.contains("hashed")) {
        const auto& h = doc.at("hashed");
        t.hashed = Hashed{h.value("seed", std::uint64_t{0}), h.value("sharpness", 1.0)};
    }
    if (doc.contains("entries")) {
        const auto& entries = doc.at("entries");
        if (!entries.is_array()) throw ParseError(o + ": field 'entries' must be a list");
        for (std::size_t i = 0; i < entries.size(); ++i) {
            const auto& e = entries[i];
            const std::string where = o + ": entries[" + std::to_string(i) + "]";
            if (!e.is_object()) throw ParseError(where + " must be an object");
            Entry entry;
            entry.template_id = e.value("template_id", std::string("*"));
            entry.context_digest = e.value("context_digest", std::string("*"));
            entry.focus = e.value("focus", std::string("*"));
            if (e.contains("probs")) entry.probs = prob_map(e.at("probs"), where + ".probs");
            if (e.contains("default")) entry.rest = prob_map(e.at("default"), where + ".default");
            t.entries.push_back(std::move(entry));
        }
    }
    return t;
}

ordered_json MockTable::to_json() const {
    ordered_json doc{{"scorer_id", scorer_id}, {"lmax", lmax}, {"vocab", vocab}};
    if (!default_weights.empty()) doc["default"] = default_weights;
    if (hashed) doc["hashed"] = {{"seed", hashed->seed}, {"sharpness", hashed->sharpness}};
    ordered_json entries = ordered_json::array();
    for (const auto& e : this->entries) {
        ordered_json j{{"template_id", e.template_id}, {"context_digest", e.context_digest}, {"focus", e.focus}};
        j["probs"] = e.probs;
        if (!e.rest.empty()) j["default"] = e.rest;
        entries.push_back(std::move(j));
    }
    doc["entries"] = std::move(entries);
    return doc;
}

MockScorer::MockScorer(MockTable table) : table_(std::move(table)) {
    const auto& vocab = table_.vocab;
    if (vocab.size() < 2) throw ValidationError("mock vocabulary needs at least 2 tokens");
    if (table_.lmax < 1) throw ValidationError("mock lmax must be at least 1");
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        const auto& tok = vocab[i];
        if (tok.empty() || tok == kMask || tok == "*" ||
            std::any_of(tok.begin(), tok.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); })) {
            throw ValidationError("invalid mock vocabulary token '" + tok + "'");
        }
        if (!ids_.emplace(tok, static_cast<TokenId>(i)).second) {
            throw ValidationError("duplicate mock vocabulary token '" + tok + "'");
        }
    }
    info_ = ScorerInfo{table_.scorer_id, static_cast<int>(vocab.size()), "whitespace", table_.lmax};

    if (!table_.default_weights.empty()) default_ = build_distribution({}, table_.default_weights, "table default");
    for (const auto& e : table_.entries) {
        if (e.template_id == "*" || e.context_digest == "*" || e.focus == "*") has_wildcards_ = true;
        auto key = lookup_key(e.template_id, e.context_digest, e.focus);
        auto dist = build_distribution(e.probs, e.rest, "entry " + e.focus + " / " + e.context_digest);
        if (!exact_.emplace(std::move(key), std::move(dist)).second) {
            throw ValidationError("duplicate mock entry for (" + e.template_id + ", " + e.context_digest + ", " +
                                  e.focus + ")");
        }
    }
}

MockScorer MockScorer::from_file(const std::filesystem::path& path) {
    const auto origin = path.string();
    return MockScorer(MockTable::from_json(parse_json(read_file(path), origin), origin));
}

std::vector<double> MockScorer::build_distribution(const std::map<std::string, double>& probs,
                                                   const std::map<std::string, double>& rest,
                                                   const std::string& what) const {
    const std::size_t v = table_.vocab.size();
    std::vector<double> p(v, -1.0);
    double listed = 0.0;
    for (const auto& [tok, prob] : probs) {
        const auto id = static_cast<std::size_t>(token_id(tok));
        if (!(prob > 0.0 && prob <= 1.0)) throw ValidationError(what + ": probability of '" + tok + "' not in (0, 1]");
        p[id] = prob;
        listed += prob;
    }
    std::vector<std::size_t> unlisted;
    for (std::size_t i = 0; i < v; ++i) {
        if (p[i] < 0.0) unlisted.push_back(i);
    }
    if (unlisted.empty()) {
        if (std::abs(listed - 1.0) > 1e-9) throw ValidationError(what + ": probabilities do not sum to 1");
    } else {
        const double leftover = 1.0 - listed;
        if (!(leftover > 0.0)) throw ValidationError(what + ": no probability mass left for unlisted tokens");
        std::vector<double> w(unlisted.size(), 1.0);
        if (!rest.empty()) {
            for (auto& x : w) x = 0.0;
            for (const auto& [tok, weight] : rest) {
                const auto id = static_cast<std::size_t>(token_id(tok));
                auto it = std::find(unlisted.begin(), unlisted.end(), id);
                if (it != unlisted.end()) w[static_cast<std::size_t>(it - unlisted.begin())] = weight;
            }
        }
        double total = 0.0;
        for (std::size_t k = 0; k < w.size(); ++k) {
            if (!(w[k] > 0.0)) {
                throw ValidationError(what + ": token '" + table_.vocab[unlisted[k]] + "' would get zero probability");
            }
            total += w[k];
        }
        for (std::size_t k = 0; k < w.size(); ++k) p[unlisted[k]] = leftover * w[k] / total;
    }
    for (auto& x : p) x = std::log(x);
    return p;
}

void MockScorer::hashed_into(const std::string& key, std::span<double> out) const {
    std::uint64_t state = fnv1a64(key) ^ (table_.hashed->seed * 0x9e3779b97f4a7c15ULL);
    double mx = -std::numeric_limits<double>::infinity();
    for (auto& x : out) {
        const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
        x = table_.hashed->sharpness * u;
        mx = std::max(mx, x);
    }
    double sum = 0.0;
    for (double x : out) sum += std::exp(x - mx);
    const double lse = mx + std::log(sum);
    for (auto& x : out) x -= lse;
}

TokenId MockScorer::token_id(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    if (it == ids_.end()) throw ValidationError("token '" + std::string(token) + "' is not in the mock vocabulary");
    return it->second;
}

TokenSeq MockScorer::tokenize(std::string_view text) const {
    std::istringstream in{std::string(text)};
    TokenSeq out;
    std::string word;
    while (in >> word) out.push_back(token_id(word));
    if (out.empty()) throw ValidationError("cannot tokenize empty text");
    return out;
}

std::string MockScorer::detokenize(std::span<const TokenId> tokens) const {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto id = tokens[i];
        if (id < 0 || static_cast<std::size_t>(id) >= table_.vocab.size()) {
            throw ValidationError("token id " + std::to_string(id) + " out of range");
        }
        if (i > 0) out += ' ';
        out += table_.vocab[static_cast<std::size_t>(id)];
    }
    return out;
}

std::string MockScorer::context_digest(const std::vector<SlotState>& slots) const {
    std::string out;
    for (std::size_t s = 0; s < slots.size(); ++s) {
        if (s > 0) out += " ; ";
        out += PromptTemplate::slot_letter(static_cast<int>(s));
        out += '=';
        const auto& st = slots[s];
        for (int i = 0; i < st.length; ++i) {
            if (i > 0) out += ' ';
            if (i < static_cast<int>(st.tokens.size())) {
                const auto id = st.tokens[static_cast<std::size_t>(i)];
                if (id < 0 || static_cast<std::size_t>(id) >= table_.vocab.size()) {
                    throw ValidationError("token id " + std::to_string(id) + " out of range");
                }
                out += table_.vocab[static_cast<std::size_t>(id)];
            } else {
                out += kMask;
            }
        }
    }
    return out;
}

std::string MockScorer::focus_key(const Focus& focus) {
    return std::string(1, PromptTemplate::slot_letter(focus.slot)) + "." + std::to_string(focus.index);
}

void MockScorer::logprobs_into(const MaskedQuery& query, std::span<double> out) const {
    validate_query(query, table_.lmax);
    const std::string& tmpl = query.prompt->text();
    const std::string digest = context_digest(query.slots);
    const std::string focus = focus_key(query.focus);
    const std::string key = lookup_key(tmpl, digest, focus);

    auto it = exact_.find(key);
    if (it == exact_.end() && has_wildcards_) {
        // Most specific first: focus, then template, then digest stay concrete longest.
        const std::string_view star = "*";
        const std::string_view t[2] = {tmpl, star};
        const std::string_view d[2] = {digest, star};
        const std::string_view f[2] = {focus, star};
        for (int m = 1; m < 8 && it == exact_.end(); ++m) {
            it = exact_.find(lookup_key(t[(m >> 1) & 1], d[m & 1], f[(m >> 2) & 1]));
        }
    }
    if (it != exact_.end()) {
        std::copy(it->second.begin(), it->second.end(), out.begin());
    } else if (!default_.empty()) {
        std::copy(default_.begin(), default_.end(), out.begin());
    } else if (table_.hashed) {
        hashed_into(key, out);
    } else {
        std::fill(out.begin(), out.end(), -std::log(static_cast<double>(out.size())));
    }
}

LogProbMatrix MockScorer::token_logprobs(std::span<const MaskedQuery> batch) const {
    if (batch.empty()) throw ValidationError("token_logprobs needs a nonempty batch");
    LogProbMatrix out(batch.size(), table_.vocab.size());
    for (std::size_t i = 0; i < batch.size(); ++i) logprobs_into(batch[i], out.row(i));
    return out;
}

} // namespace kgh
