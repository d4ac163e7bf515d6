#include "kgh/wire.hpp"

#include "kgh/error.hpp"

namespace kgh::wire {

using nlohmann::json;

namespace {

const char* kind_name(SlotState::Kind k) {
    switch (k) {
    case SlotState::Kind::kFilled: return "filled";
    case SlotState::Kind::kPartial: return "partial";
    case SlotState::Kind::kMasked: return "masked";
    }
    return "masked";
}

int slot_from_json(const json& v) {
    if (!v.is_string() || v.get<std::string>().size() != 1) throw ParseError("slot must be a single letter");
    const char c = v.get<std::string>()[0];
    if (c < 'A' || c > 'Z') throw ParseError("slot must be a single letter");
    return c - 'A';
}

} // namespace

json query_to_json(const MaskedQuery& q) {
    json states = json::array();
    for (std::size_t s = 0; s < q.slots.size(); ++s) {
        const auto& st = q.slots[s];
        json j{{"slot", std::string(1, PromptTemplate::slot_letter(static_cast<int>(s)))},
               {"state", kind_name(st.kind)},
               {"length", st.length}};
        if (st.kind != SlotState::Kind::kMasked) j["tokens"] = st.tokens;
        states.push_back(std::move(j));
    }
    return json{{"template", q.prompt->text()},
                {"slot_states", std::move(states)},
                {"focus",
                 {{"slot", std::string(1, PromptTemplate::slot_letter(q.focus.slot))}, {"index", q.focus.index}}}};
}

DecodedQuery query_from_json(const json& item) {
    try {
        DecodedQuery q;
        q.prompt = PromptTemplate(item.at("template").get<std::string>());
        const auto& states = item.at("slot_states");
        if (!states.is_array()) throw ParseError("slot_states must be a list");
        q.slots.resize(static_cast<std::size_t>(q.prompt.arity()));
        std::vector<bool> seen(q.slots.size(), false);
        for (const auto& st : states) {
            const int slot = slot_from_json(st.at("slot"));
            if (slot >= q.prompt.arity() || seen[static_cast<std::size_t>(slot)]) {
                throw ParseError("slot_states names unknown or repeated slot");
            }
            seen[static_cast<std::size_t>(slot)] = true;
            const auto kind = st.at("state").get<std::string>();
            const int length = st.at("length").get<int>();
            auto& out = q.slots[static_cast<std::size_t>(slot)];
            if (kind == "filled") {
                out = SlotState::filled(st.at("tokens").get<TokenSeq>());
                if (out.length != length) throw ParseError("filled slot length disagrees with its tokens");
            } else if (kind == "partial") {
                out = SlotState::partial(st.at("tokens").get<TokenSeq>(), length);
            } else if (kind == "masked") {
                out = SlotState::masked(length);
            } else {
                throw ParseError("unknown slot state '" + kind + "'");
            }
        }
        for (bool b : seen) {
            if (!b) throw ParseError("slot_states must cover every template slot");
        }
        q.focus = Focus{slot_from_json(item.at("focus").at("slot")), item.at("focus").at("index").get<int>()};
        return q;
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed query item: ") + e.what());
    }
}

json info_to_json(const ScorerInfo& info) {
    return json{{"scorer_id", info.scorer_id},
                {"vocab_size", info.vocab_size},
                {"tokenizer_id", info.tokenizer_id},
                {"lmax", info.lmax}};
}

ScorerInfo info_from_json(const json& doc) {
    try {
        ScorerInfo info;
        info.scorer_id = doc.at("scorer_id").get<std::string>();
        info.vocab_size = doc.at("vocab_size").get<int>();
        info.tokenizer_id = doc.value("tokenizer_id", std::string());
        info.lmax = doc.at("lmax").get<int>();
        if (info.vocab_size < 2 || info.lmax < 1) throw ProtocolError("scorer info out of range");
        return info;
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed /v1/info response: ") + e.what());
    }
}

} // namespace kgh::wire
