#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <vector>

#include "blockmc/mcmc.hpp"
#include "blockmc/temporal.hpp"

namespace blockmc {

// contiguous training-prefix split
struct SplitSpec {
    double fraction = 0.5;

    std::int64_t boundary(std::int64_t total) const {
        if (fraction <= 0 || fraction > 1)
            throw config_error("split fraction must lie in (0, 1]");
        return static_cast<std::int64_t>(fraction * static_cast<double>(total));
    }
};

struct HoldoutResult {
    double delta_sigma = 0;
    double log_bound = 0;  // -delta_sigma <= ln P(validation | training, b*)
    double per_event = 0;
    std::int64_t validation_events = 0;
    double train_total = 0;
    double full_total = 0;
};

// greedy insertion of the new items followed by restricted sweeps
inline void restricted_descent(ChainState& st, const FitConfig& config,
                               const std::vector<std::int32_t>& new_tokens,
                               const std::vector<std::int32_t>& new_memories) {
    auto greedy_place = [&](bool token_side, std::int32_t item) {
        std::int32_t B = token_side || st.unified() ? st.num_token_groups()
                                                    : st.num_memory_groups();
        std::int32_t best_g = token_side ? st.token_groups()[item] : st.memory_groups()[item];
        double best_d = 0;
        for (std::int32_t g = 0; g <= B; ++g) {
            if (g == (token_side ? st.token_groups()[item] : st.memory_groups()[item])) continue;
            double d = st.delta_move(token_side, item, g);
            if (d < best_d) {
                best_d = d;
                best_g = g;
            }
        }
        if (best_d < 0) st.apply_move(token_side, item, best_g);
    };
    for (auto x : new_tokens) greedy_place(true, x);
    for (auto m : new_memories) greedy_place(false, m);
    rng_t rng(substream_seed(config.seed, 0x9e11d0ULL));
    SweepStats stats;
    double prev = st.total();
    for (int round = 0; round < std::max(10, config.sweeps_per_level); ++round) {
        mh_sweep(st, config.epsilon, -1.0, rng, stats);
        st.refresh();
        if (st.total() > prev - 1e-9) break;
        prev = st.total();
    }
    st.refresh();
}

// Lower bound on the predictive likelihood of the validation suffix: fit the
// training prefix, freeze its partition, let only validation-new tokens and
// memories move, and report the description-length difference.
inline HoldoutResult holdout_bound(const Sequence& seq, SplitSpec split, int order,
                                   FitConfig config, LogComb& comb) {
    const std::int64_t T = seq.length();
    std::int64_t S = split.boundary(T);
    if (S <= order) throw input_error("holdout_bound: training prefix too short");
    config.order = order;

    // training view with a trimmed alphabet
    std::vector<std::int32_t> trim(seq.alphabet.size(), -1);
    Sequence train;
    for (std::int64_t t = 0; t < S; ++t) {
        std::int32_t x = seq.tokens[t];
        if (trim[x] < 0) trim[x] = train.alphabet.intern(seq.alphabet.id_to_token[x]);
        train.tokens.push_back(trim[x]);
    }
    auto train_chain = build_chain(train, order, config.boundary);
    auto train_fit = agglomerative_search(train_chain, config, comb);

    HoldoutResult out;
    out.train_total = train_fit.breakdown.total;
    out.validation_events = T - S;
    if (S == T) {
        out.full_total = out.train_total;
        return out;
    }

    auto full_chain = build_chain(seq, order, config.boundary);
    std::vector<std::int32_t> tok_assign(seq.alphabet.size(), 0);
    std::vector<std::uint8_t> tok_frozen(seq.alphabet.size(), 0);
    for (std::int32_t x = 0; x < seq.alphabet.size(); ++x) {
        if (trim[x] >= 0) {
            tok_assign[x] = train_fit.token_groups[trim[x]];
            tok_frozen[x] = 1;
        }
    }
    std::vector<std::int32_t> mem_assign(full_chain.memory_count(), 0);
    std::vector<std::uint8_t> mem_frozen(full_chain.memory_count(), 0);
    std::vector<std::int32_t> new_tokens, new_memories;
    for (std::int32_t x = 0; x < seq.alphabet.size(); ++x)
        if (!tok_frozen[x]) new_tokens.push_back(x);
    for (std::int32_t m = 0; m < full_chain.memory_count(); ++m) {
        MemoryKey key;
        bool trained = true;
        for (auto id : full_chain.memories[m].window) {
            if (trim[id] < 0) {
                trained = false;
                break;
            }
            key.window.push_back(trim[id]);
        }
        std::int32_t tm = -1;
        if (trained) {
            auto it = train_chain.memory_index.find(key);
            if (it != train_chain.memory_index.end()) tm = it->second;
        }
        if (tm >= 0) {
            mem_assign[m] = train_fit.memory_groups[tm];
            mem_frozen[m] = 1;
        } else {
            new_memories.push_back(m);
        }
    }

    StateOptions sopt;
    sopt.k_prior = config.k_prior;
    sopt.unified = config.unified;
    if (config.unified) {
        ChainState st(full_chain, comb, sopt, tok_assign);
        st.frozen_tokens() = tok_frozen;
        restricted_descent(st, config, new_tokens, {});
        out.full_total = st.total();
    } else {
        ChainState st(full_chain, comb, sopt, tok_assign, mem_assign);
        st.frozen_tokens() = tok_frozen;
        st.frozen_memories() = mem_frozen;
        restricted_descent(st, config, new_tokens, new_memories);
        out.full_total = st.total();
    }
    out.delta_sigma = out.full_total - out.train_total;
    out.log_bound = -out.delta_sigma;
    out.per_event = out.validation_events ? out.log_bound / out.validation_events : 0.0;
    return out;
}

// Temporal variant: training prefix of the event stream, frozen node and
// label-partition entries for everything the training fit observed.
inline HoldoutResult holdout_bound_temporal(const EdgeStream& es, SplitSpec split, int order,
                                            TemporalFitConfig config, LogComb& comb) {
    const std::int64_t E = es.edge_count();
    std::int64_t K = split.boundary(E);
    if (K < 1) throw input_error("holdout_bound_temporal: empty training prefix");
    config.order = order;

    std::vector<EdgeRow> train_rows;
    for (std::int64_t e = 0; e < K; ++e)
        train_rows.push_back({es.node_names[es.events[e].first],
                              es.node_names[es.events[e].second], std::nullopt});
    auto train_es = ingest_edge_stream(train_rows, es.directed);
    auto train_fit = joint_fit(train_es, config, comb);

    // At n = 0 the fitted total describes the aggregated graph; predicting
    // the ordered stream with the memoryless model adds the uniform-ordering
    // cost ln E! (the dynamic factor's 1/E! reduction), which keeps
    // delta_sigma a true bound on the sequence predictive likelihood.
    auto ordering_cost = [&](std::int64_t events) {
        return (order == 0) ? comb.log_factorial(events) : 0.0;
    };

    HoldoutResult out;
    out.train_total = train_fit.breakdown.total + ordering_cost(K);
    out.validation_events = E - K;
    if (K == E) {
        out.full_total = out.train_total;
        return out;
    }

    // carry node memberships over by name; new nodes start in group 0
    std::vector<std::int32_t> c0(es.node_count(), 0);
    std::vector<std::uint8_t> frozen(es.node_count(), 0);
    for (std::int32_t v = 0; v < train_es.node_count(); ++v) {
        auto it = es.node_index.find(train_es.node_names[v]);
        c0[it->second] = train_fit.node_groups[v];
        frozen[it->second] = 1;
    }
    TemporalState st(es, comb, config, c0);
    st.frozen_nodes() = frozen;
    if (config.order >= 1 && train_es.edge_count() > config.order) {
        auto train_lc =
            label_sequence(train_es, train_fit.node_groups, config.order, config.base.boundary);
        detail::LabelGroupMemory lg;
        lg.directed = es.directed;
        lg.store(train_lc, train_fit.label_token_groups, train_fit.label_memory_groups,
                 config.unified_labels);
        st.set_label_groups(lg);
    }

    // greedy placement of new nodes, then restricted sweeps
    rng_t rng(substream_seed(config.base.seed, 0x9e11d1ULL));
    SweepStats stats;
    for (std::int32_t v = 0; v < es.node_count(); ++v) {
        if (frozen[v]) continue;
        std::int32_t C = st.num_node_groups();
        std::vector<std::int32_t> cand = st.node_groups();
        double best = st.total();
        std::int32_t best_g = cand[v];
        for (std::int32_t g = 0; g <= C; ++g) {
            if (g == st.node_groups()[v]) continue;
            cand[v] = g;
            double t = st.assignment_total(cand);
            if (t < best) {
                best = t;
                best_g = g;
            }
        }
        if (best_g != st.node_groups()[v]) {
            cand[v] = best_g;
            st.commit(cand, best);
        }
    }
    double prev = st.total();
    for (int round = 0; round < config.base.sweeps_per_level; ++round) {
        st.node_sweep(rng, stats);
        if (st.total() > prev - 1e-9) break;
        prev = st.total();
    }
    // restricted label phase: labels observed in training stay frozen
    if (st.has_dynamic_part()) {
        auto lc = label_sequence(es, st.node_groups(), config.order, config.base.boundary);
        std::vector<std::int32_t> tok, mem;
        st.label_groups().materialize(lc, tok, mem, config.unified_labels);
        StateOptions sopt;
        sopt.k_prior = config.base.k_prior;
        sopt.unified = config.unified_labels;
        ChainState cs(lc.chain, comb, sopt, tok, mem);
        // freeze by value against the training registry
        std::set<std::pair<std::int32_t, std::int32_t>> trained_labels;
        for (const auto& [rs, g] : st.label_groups().token_of) trained_labels.insert(rs);
        for (std::int32_t l = 0; l < lc.label_alphabet.size(); ++l)
            if (trained_labels.count(lc.pairs[l])) cs.frozen_tokens()[l] = 1;
        if (!config.unified_labels) {
            std::set<std::vector<std::int64_t>> trained_windows;
            for (const auto& [w, g] : st.label_groups().memory_of) trained_windows.insert(w);
            for (std::int32_t m = 0; m < lc.chain.memory_count(); ++m)
                if (trained_windows.count(
                        detail::LabelGroupMemory::window_value(lc, lc.chain.memories[m])))
                    cs.frozen_memories()[m] = 1;
        }
        double prev_cs = cs.total();
        for (int round = 0; round < config.base.sweeps_per_level; ++round) {
            mh_sweep(cs, config.base.epsilon, -1.0, rng, stats);
            cs.refresh();
            if (cs.total() > prev_cs - 1e-9) break;
            prev_cs = cs.total();
        }
        detail::LabelGroupMemory lg;
        lg.directed = es.directed;
        lg.store(lc, cs.token_groups(), cs.memory_groups(), config.unified_labels);
        st.set_label_groups(lg);
    }
    out.full_total = st.total() + ordering_cost(E);
    out.delta_sigma = out.full_total - out.train_total;
    out.log_bound = -out.delta_sigma;
    out.per_event = out.validation_events ? out.log_bound / out.validation_events : 0.0;
    return out;
}

// Sample a sequence from the sequential microcanonical process: hard block
// and frequency constraints are exhausted exactly.  Runs that walk into a
// state with no admissible continuation restart, up to max_attempts.
inline Sequence generate_sequence(const ChainCounts& chain, const Partition& part, rng_t& rng,
                                  int max_attempts = 1000) {
    if (chain.initial_memory < 0) throw input_error("generate_sequence: no initial memory");
    const int n = chain.order;
    std::vector<std::vector<std::int32_t>> group_tokens(part.num_token_groups);
    for (std::int32_t x = 0; x < chain.alphabet_size; ++x)
        group_tokens[part.token_group[x]].push_back(x);

    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        auto cells = part.block;
        auto e_tok = part.e_token;
        auto e_mem = part.e_memory;
        auto k = chain.token_emissions;
        MemoryKey window = chain.memories[chain.initial_memory];
        Sequence out;
        out.alphabet.id_to_token.resize(chain.alphabet_size);
        for (std::int32_t x = 0; x < chain.alphabet_size; ++x) {
            auto name = "t" + std::to_string(x);
            out.alphabet.id_to_token[x] = name;
            out.alphabet.token_to_id[name] = x;
        }
        for (auto it = window.window.rbegin(); it != window.window.rend(); ++it)
            out.tokens.push_back(*it);
        bool dead = false;
        for (std::int64_t step = 0; step < chain.total_transitions; ++step) {
            auto mit = chain.memory_index.find(window);
            if (mit == chain.memory_index.end()) {
                dead = true;
                break;
            }
            std::int32_t s = part.memory_group[mit->second];
            if (e_mem[s] == 0) {
                dead = true;
                break;
            }
            // token group r with probability e_rs / e_s
            std::int64_t pick =
                std::uniform_int_distribution<std::int64_t>(0, e_mem[s] - 1)(rng);
            std::int32_t r = -1;
            std::int64_t acc = 0;
            for (std::int32_t g = 0; g < part.num_token_groups; ++g) {
                auto it = cells.find(Partition::key(g, s));
                if (it == cells.end()) continue;
                acc += it->second;
                if (pick < acc) {
                    r = g;
                    break;
                }
            }
            if (r < 0) {
                dead = true;
                break;
            }
            // token within r with probability k_x / e_r
            std::int64_t pick2 =
                std::uniform_int_distribution<std::int64_t>(0, e_tok[r] - 1)(rng);
            std::int32_t x = -1;
            acc = 0;
            for (auto cand : group_tokens[r]) {
                acc += k[cand];
                if (pick2 < acc) {
                    x = cand;
                    break;
                }
            }
            if (x < 0) {
                dead = true;
                break;
            }
            cells[Partition::key(r, s)] -= 1;
            e_tok[r] -= 1;
            e_mem[s] -= 1;
            k[x] -= 1;
            out.tokens.push_back(x);
            for (int j = n - 1; j > 0; --j) window.window[j] = window.window[j - 1];
            window.window[0] = x;
        }
        if (!dead) return out;
    }
    throw input_error("generate_sequence: constraints could not be exhausted after " +
                      std::to_string(max_attempts) + " attempts");
}

// uniform random permutation of tokens; waits and epochs travel with their
// tokens
inline Sequence shuffle_null(const Sequence& seq, rng_t& rng) {
    if (seq.tokens.empty()) throw input_error("shuffle_null: empty sequence");
    const std::size_t T = seq.tokens.size();
    std::vector<std::size_t> perm(T);
    for (std::size_t i = 0; i < T; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    Sequence out;
    out.alphabet = seq.alphabet;
    out.tokens.resize(T);
    for (std::size_t i = 0; i < T; ++i) out.tokens[i] = seq.tokens[perm[i]];
    if (!seq.epochs.empty()) {
        out.epochs.resize(T);
        for (std::size_t i = 0; i < T; ++i) out.epochs[i] = seq.epochs[perm[i]];
    }
    if (seq.has_waits()) {
        // token t carries the gap before it; the displaced first token
        // inherits the leftover gap
        out.waits.assign(T - 1, 0.0);
        std::optional<double> leftover;
        std::optional<std::size_t> hole;
        for (std::size_t i = 0; i < T; ++i) {
            if (perm[i] == 0) {
                if (i >= 1) hole = i - 1;
            } else {
                double w = seq.waits[perm[i] - 1];
                if (i >= 1)
                    out.waits[i - 1] = w;
                else
                    leftover = w;
            }
        }
        if (hole && leftover) out.waits[*hole] = *leftover;
        return out;
    }
    return out;
}

}  // namespace blockmc
