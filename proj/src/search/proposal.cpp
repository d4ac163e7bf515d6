#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <thread>

#include "kgh/search.hpp"
#include "kgh/simd/kernels.hpp"

namespace kgh {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Position {
    int slot;
    int index;
};

void add_stats(SearchStats& into, const SearchStats& s) {
    into.scorer_calls += s.scorer_calls;
    into.prune_count += s.prune_count;
    into.tuples_proposed += s.tuples_proposed;
    into.audit_calls += s.audit_calls;
    into.audit_tuples += s.audit_tuples;
    into.audit_violations += s.audit_violations;
}

class TupleSearch {
public:
    TupleSearch(const WeightedPromptSet& prompts, const Scorer& scorer, const SearchConfig& config)
        : prompts_(prompts),
          scorer_(scorer),
          config_(config),
          arity_(prompts.arity),
          vocab_(static_cast<std::size_t>(scorer.info().vocab_size)),
          heap_(config.max_candidates) {}

    ProposalResult run(const ProgressCallback& progress);

private:
    struct Worker {
        std::vector<TokenSeq> tokens; // per slot, the path so far
        std::vector<std::vector<double>> agg;
        std::vector<std::vector<std::int32_t>> order;
        std::vector<char> keep;
        std::vector<MaskedQuery> queries;
        SearchStats stats;
    };

    Worker make_worker() const {
        Worker w;
        const std::size_t depth = static_cast<std::size_t>(arity_ * config_.lmax);
        w.tokens.resize(static_cast<std::size_t>(arity_));
        w.agg.assign(depth, std::vector<double>(vocab_));
        w.order.assign(depth, std::vector<std::int32_t>(vocab_));
        w.keep.assign(vocab_, 0);
        w.queries.resize(prompts_.size());
        return w;
    }

    double prune_threshold() const {
        return config_.pruning ? threshold_.load(std::memory_order_relaxed) : -kInf;
    }

    bool is_last(std::size_t depth) const { return depth + 1 == positions_.size(); }

    void compute_agg(Worker& w, std::size_t depth, bool audit);
    void expand(Worker& w, std::size_t depth, double running);
    void expand_children(Worker& w, std::size_t depth, double running, std::size_t first, std::size_t count);
    void audit_node(Worker& w, std::size_t depth, double running, double threshold);
    void audit_token(Worker& w, std::size_t depth, double mtl, std::int32_t token, double threshold);
    void offer(Worker& w, double mtl);
    void run_length_vector(Worker& main);
    void run_parallel_root(Worker& main);

    const WeightedPromptSet& prompts_;
    const Scorer& scorer_;
    const SearchConfig& config_;
    const int arity_;
    const std::size_t vocab_;

    std::vector<int> lengths_;
    std::vector<Position> positions_;

    std::mutex heap_mu_;
    ProposalHeap heap_;
    std::atomic<double> threshold_{-kInf};
    std::atomic<bool> abort_{false};
    std::mutex stats_mu_;
    SearchStats thread_stats_;
    std::exception_ptr failure_;
};

void TupleSearch::compute_agg(Worker& w, std::size_t depth, bool audit) {
    const Position pos = positions_[depth];
    for (std::size_t p = 0; p < prompts_.size(); ++p) {
        MaskedQuery& q = w.queries[p];
        q.prompt = &prompts_.prompts[p].prompt;
        q.slots.resize(static_cast<std::size_t>(arity_));
        for (int s = 0; s < arity_; ++s) {
            const auto us = static_cast<std::size_t>(s);
            const int len = lengths_[us];
            if (s < pos.slot) {
                q.slots[us] = SlotState::filled(w.tokens[us]);
            } else if (s == pos.slot && pos.index > 0) {
                q.slots[us] = SlotState::partial(w.tokens[us], len);
            } else {
                q.slots[us] = SlotState::masked(len);
            }
        }
        q.focus = {pos.slot, pos.index};
    }
    const LogProbMatrix rows = scorer_.token_logprobs(w.queries);
    if (rows.rows() != prompts_.size() || rows.cols() != vocab_) {
        throw ProtocolError("scorer returned a distribution batch of the wrong shape");
    }
    (audit ? w.stats.audit_calls : w.stats.scorer_calls) += prompts_.size();

    auto& agg = w.agg[depth];
    std::fill(agg.begin(), agg.end(), 0.0);
    for (std::size_t p = 0; p < prompts_.size(); ++p) {
        simd::weighted_accumulate(agg, rows.row(p), prompts_.prompts[p].weight);
    }
}

void TupleSearch::offer(Worker& w, double mtl) {
    ++w.stats.tuples_proposed;
    // Strictly below the threshold can never enter; equal may win on ties.
    if (mtl < threshold_.load(std::memory_order_relaxed)) return;
    std::lock_guard lock(heap_mu_);
    heap_.offer(mtl, w.tokens);
    if (heap_.full()) threshold_.store(heap_.threshold(), std::memory_order_relaxed);
}

void TupleSearch::audit_token(Worker& w, std::size_t depth, double mtl, std::int32_t token, double threshold) {
    auto& slot_tokens = w.tokens[static_cast<std::size_t>(positions_[depth].slot)];
    slot_tokens.push_back(token);
    if (is_last(depth)) {
        ++w.stats.audit_tuples;
        if (!(mtl < threshold)) ++w.stats.audit_violations;
    } else {
        audit_node(w, depth + 1, mtl, threshold);
    }
    slot_tokens.pop_back();
}

void TupleSearch::audit_node(Worker& w, std::size_t depth, double running, double threshold) {
    compute_agg(w, depth, true);
    // copy: deeper audit levels reuse the same buffers
    const std::vector<double> agg = w.agg[depth];
    for (std::size_t v = 0; v < vocab_; ++v) {
        audit_token(w, depth, std::min(running, agg[v]), static_cast<std::int32_t>(v), threshold);
    }
}

void TupleSearch::expand(Worker& w, std::size_t depth, double running) {
    if (abort_.load(std::memory_order_relaxed)) return;
    const double entry_threshold = prune_threshold();
    if (running < entry_threshold) {
        ++w.stats.prune_count;
        if (config_.audit) audit_node(w, depth, running, entry_threshold);
        return;
    }
    compute_agg(w, depth, false);
    const auto& agg = w.agg[depth];
    auto& order = w.order[depth];

    const double threshold = prune_threshold();
    std::size_t n = 0;
    if (threshold == -kInf) {
        std::iota(order.begin(), order.end(), 0);
        n = vocab_;
    } else {
        n = simd::select_at_least(agg, threshold, order);
    }
    if (n < vocab_) {
        w.stats.prune_count += vocab_ - n;
        if (config_.audit) {
            std::fill(w.keep.begin(), w.keep.end(), 0);
            for (std::size_t k = 0; k < n; ++k) w.keep[static_cast<std::size_t>(order[k])] = 1;
            const std::vector<double> snapshot = agg;
            for (std::size_t v = 0; v < vocab_; ++v) {
                if (w.keep[v] == 0) {
                    audit_token(w, depth, std::min(running, snapshot[v]), static_cast<std::int32_t>(v), threshold);
                }
            }
        }
    }
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), [&agg](std::int32_t a, std::int32_t b) {
        const double x = agg[static_cast<std::size_t>(a)];
        const double y = agg[static_cast<std::size_t>(b)];
        return x != y ? x > y : a < b;
    });
    expand_children(w, depth, running, 0, n);
}

void TupleSearch::expand_children(Worker& w, std::size_t depth, double running, std::size_t first, std::size_t count) {
    const auto& agg = w.agg[depth];
    const auto& order = w.order[depth];
    auto& slot_tokens = w.tokens[static_cast<std::size_t>(positions_[depth].slot)];
    for (std::size_t k = first; k < count; ++k) {
        const std::int32_t v = order[k];
        const double mtl = std::min(running, agg[static_cast<std::size_t>(v)]);
        const double threshold = prune_threshold();
        if (mtl < threshold) {
            // children are sorted by agg, so every later one falls below too
            w.stats.prune_count += count - k;
            if (config_.audit) {
                const std::vector<double> snapshot = agg;
                const std::vector<std::int32_t> rest(order.begin() + static_cast<std::ptrdiff_t>(k),
                                                     order.begin() + static_cast<std::ptrdiff_t>(count));
                for (auto r : rest) {
                    audit_token(w, depth, std::min(running, snapshot[static_cast<std::size_t>(r)]), r, threshold);
                }
            }
            return;
        }
        slot_tokens.push_back(v);
        if (is_last(depth)) {
            offer(w, mtl);
        } else {
            expand(w, depth + 1, mtl);
        }
        slot_tokens.pop_back();
        if (abort_.load(std::memory_order_relaxed)) return;
    }
}

void TupleSearch::run_parallel_root(Worker& main) {
    compute_agg(main, 0, false);
    auto& order = main.order[0];
    std::iota(order.begin(), order.end(), 0);
    const auto& agg = main.agg[0];
    std::sort(order.begin(), order.end(), [&agg](std::int32_t a, std::int32_t b) {
        const double x = agg[static_cast<std::size_t>(a)];
        const double y = agg[static_cast<std::size_t>(b)];
        return x != y ? x > y : a < b;
    });

    std::atomic<std::size_t> next{0};
    auto body = [&] {
        Worker w = make_worker();
        try {
            for (std::size_t k = next.fetch_add(1); k < vocab_ && !abort_.load(); k = next.fetch_add(1)) {
                const std::int32_t v = order[k];
                const double mtl = agg[static_cast<std::size_t>(v)];
                const double threshold = prune_threshold();
                if (mtl < threshold) {
                    ++w.stats.prune_count;
                    if (config_.audit) audit_token(w, 0, mtl, v, threshold);
                    continue;
                }
                w.tokens[static_cast<std::size_t>(positions_[0].slot)].push_back(v);
                expand(w, 1, mtl);
                w.tokens[static_cast<std::size_t>(positions_[0].slot)].pop_back();
            }
        } catch (...) {
            std::lock_guard lock(stats_mu_);
            if (!failure_) failure_ = std::current_exception();
            abort_.store(true);
        }
        std::lock_guard lock(stats_mu_);
        add_stats(thread_stats_, w.stats);
    };
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < config_.workers; ++t) threads.emplace_back(body);
    for (auto& t : threads) t.join();
}

void TupleSearch::run_length_vector(Worker& main) {
    positions_.clear();
    for (int s = 0; s < arity_; ++s) {
        for (int i = 0; i < lengths_[static_cast<std::size_t>(s)]; ++i) positions_.push_back({s, i});
    }
    if (config_.workers > 1) {
        run_parallel_root(main);
    } else {
        expand(main, 0, kInf);
    }
}

ProposalResult TupleSearch::run(const ProgressCallback& progress) {
    Worker main = make_worker();
    lengths_.assign(static_cast<std::size_t>(arity_), 1);
    auto current_stats = [&] {
        SearchStats s = main.stats;
        std::lock_guard lock(stats_mu_);
        add_stats(s, thread_stats_);
        return s;
    };
    try {
        for (;;) {
            run_length_vector(main);
            if (failure_) std::rethrow_exception(failure_);
            if (progress) {
                const auto s = current_stats();
                progress({"propose", s.tuples_proposed, s.scorer_calls, s.prune_count});
            }
            // odometer over {1..lmax}^arity, last slot fastest
            int s = arity_ - 1;
            while (s >= 0 && lengths_[static_cast<std::size_t>(s)] == config_.lmax) {
                lengths_[static_cast<std::size_t>(s)] = 1;
                --s;
            }
            if (s < 0) break;
            ++lengths_[static_cast<std::size_t>(s)];
        }
    } catch (...) {
        failure_ = std::current_exception();
    }

    ProposalResult result;
    result.stats = current_stats();
    result.complete = !failure_;
    const auto entries = heap_.sorted();
    std::vector<TokenSeq> seqs;
    for (const auto& e : entries) seqs.insert(seqs.end(), e.tokens.begin(), e.tokens.end());
    std::vector<std::string> texts;
    try {
        texts = scorer_.detokenize_batch(seqs);
    } catch (...) {
        if (!failure_) throw;
        // keep the partial result usable even if detokenization is also down
        texts.clear();
        for (const auto& seq : seqs) {
            std::string t;
            for (auto id : seq) t += (t.empty() ? "#" : " #") + std::to_string(id);
            texts.push_back(std::move(t));
        }
    }
    const auto a = static_cast<std::size_t>(arity_);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        std::vector<std::string> ents;
        bool blank = false;
        for (std::size_t s = 0; s < a; ++s) {
            ents.push_back(trim(texts[i * a + s]));
            blank = blank || ents.back().empty();
        }
        if (blank) {
            ++result.stats.dropped_empty;
            continue;
        }
        result.candidates.push_back({EntityTuple(std::move(ents), entries[i].tokens), entries[i].mtl});
    }
    if (progress) {
        progress({"propose-done", result.stats.tuples_proposed, result.stats.scorer_calls, result.stats.prune_count});
    }
    if (failure_) {
        std::string what = "search aborted";
        try {
            std::rethrow_exception(failure_);
        } catch (const std::exception& e) {
            what += std::string(": ") + e.what();
        } catch (...) {
        }
        throw SearchAborted(std::move(result), failure_, what);
    }
    return result;
}

} // namespace

ProposalHeap::ProposalHeap(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw ValidationError("proposal heap capacity must be at least 1");
}

bool ProposalHeap::better(double mtl_a, const std::vector<TokenSeq>& a, double mtl_b, const std::vector<TokenSeq>& b) {
    if (mtl_a != mtl_b) return mtl_a > mtl_b;
    return a < b;
}

namespace {

// max-heap under "better" keeps the worst entry on top
bool heap_order(const ProposalHeap::Entry& x, const ProposalHeap::Entry& y) {
    return ProposalHeap::better(x.mtl, x.tokens, y.mtl, y.tokens);
}

} // namespace

bool ProposalHeap::offer(double mtl, const std::vector<TokenSeq>& tokens) {
    if (entries_.size() < capacity_) {
        entries_.push_back({mtl, tokens});
        std::push_heap(entries_.begin(), entries_.end(), heap_order);
        return true;
    }
    const auto& top = entries_.front();
    if (!better(mtl, tokens, top.mtl, top.tokens)) return false;
    std::pop_heap(entries_.begin(), entries_.end(), heap_order);
    entries_.back() = {mtl, tokens};
    std::push_heap(entries_.begin(), entries_.end(), heap_order);
    return true;
}

double ProposalHeap::threshold() const noexcept { return full() ? entries_.front().mtl : -kInf; }

std::vector<ProposalHeap::Entry> ProposalHeap::sorted() const {
    auto out = entries_;
    std::sort(out.begin(), out.end(), heap_order);
    return out;
}

ProposalResult propose_candidates(const WeightedPromptSet& prompts, const Scorer& scorer, const SearchConfig& config,
                                  const ProgressCallback& progress) {
    validate(config);
    validate(prompts);
    if (config.lmax > scorer.info().lmax) {
        throw ValidationError("search lmax " + std::to_string(config.lmax) + " exceeds the scorer's " +
                              std::to_string(scorer.info().lmax));
    }
    TupleSearch search(prompts, scorer, config);
    return search.run(progress);
}

} // namespace kgh
