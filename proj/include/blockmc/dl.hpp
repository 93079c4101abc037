#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "blockmc/chain.hpp"
#include "blockmc/logcomb.hpp"
#include "blockmc/partition.hpp"

namespace blockmc {

enum class KPriorMode { uniform, degree_hyperprior };

struct PriorConfig {
    KPriorMode k_prior_mode = KPriorMode::degree_hyperprior;
    Units units = Units::nats;
};

// Per-term description length in nats.  total equals the sum of the present
// terms; bits are a presentation-layer conversion only.
struct DlBreakdown {
    double seq_term = 0;
    double k_prior = 0;
    double ers_prior = 0;
    double es_prior = 0;
    double token_partition_prior = 0;
    double memory_partition_prior = 0;
    std::optional<double> static_net_term;
    std::optional<double> wait_term;
    double total = 0;

    double sum() const {
        double s = seq_term + k_prior + ers_prior + es_prior + token_partition_prior +
                   memory_partition_prior;
        if (static_net_term) s += *static_net_term;
        if (wait_term) s += *wait_term;
        return s;
    }
};

// -ln of the microcanonical sequence likelihood
//   P({x_t}|b, {e_rs}, {k_x}) = prod_rs e_rs! prod_x k_x! / (prod_r e_r! prod_s e_s!)
// with the block product running over all token-group x memory-group pairs.
inline double seq_term(const ChainCounts& chain, const Partition& part, LogComb& comb) {
    double acc = 0;
    for (const auto& [k, e] : part.block) acc -= comb.log_factorial(e);
    for (std::int32_t x = 0; x < chain.alphabet_size; ++x)
        acc -= comb.log_factorial(chain.token_emissions[x]);
    for (auto e : part.e_token) acc += comb.log_factorial(e);
    for (auto e : part.e_memory) acc += comb.log_factorial(e);
    return acc;
}

// -ln P({k_x}|{e_rs}, b): uniform multiset prior, or the two-level
// degree-frequency hyperprior with restricted partitions q(e_r, n_r).
inline double k_prior(const ChainCounts& chain, const Partition& part, const PriorConfig& cfg,
                      LogComb& comb) {
    (void)chain;
    double acc = 0;
    for (std::int32_t r = 0; r < part.num_token_groups; ++r) {
        if (cfg.k_prior_mode == KPriorMode::uniform) {
            acc += comb.log_multiset(part.token_occupancy[r], part.e_token[r]);
        } else {
            acc += comb.log_factorial(part.token_occupancy[r]);
            for (const auto& [k, cnt] : part.k_histogram[r]) acc -= comb.log_factorial(cnt);
            acc += comb.log_q(part.e_token[r], part.token_occupancy[r]);
        }
    }
    return acc;
}

// -ln P({e_rs}|{e_s}) = sum_s ln multiset(B_N, e_s)
inline double ers_prior(const Partition& part, LogComb& comb) {
    double acc = 0;
    for (auto e : part.e_memory) acc += comb.log_multiset(part.num_token_groups, e);
    return acc;
}

// -ln P({e_s}|b) = ln multiset(B_M, E)
inline double es_prior(const Partition& part, std::int64_t total_transitions, LogComb& comb) {
    return comb.log_multiset(part.num_memory_groups, total_transitions);
}

// -ln of the two-level partition prior P(b|{n_r}) P({n_r})
inline double partition_prior(const std::vector<std::int64_t>& occupancy, std::int64_t item_count,
                              std::int32_t group_count, LogComb& comb) {
    double acc = comb.log_factorial(item_count);
    for (auto n : occupancy) {
        if (n == 0) throw invariant_error("partition_prior: empty group");
        acc -= comb.log_factorial(n);
    }
    acc += comb.log_binom(item_count - 1, group_count - 1);
    return acc;
}

inline double partition_prior(const std::vector<std::int32_t>& assignment, std::int64_t item_count,
                              std::int32_t group_count, LogComb& comb) {
    std::vector<std::int64_t> occ(group_count, 0);
    for (auto g : assignment) occ[g] += 1;
    return partition_prior(occ, item_count, group_count, comb);
}

inline DlBreakdown total_dl(const ChainCounts& chain, const Partition& part,
                            const PriorConfig& cfg, LogComb& comb) {
    DlBreakdown b;
    b.seq_term = seq_term(chain, part, comb);
    b.k_prior = k_prior(chain, part, cfg, comb);
    b.ers_prior = ers_prior(part, comb);
    b.es_prior = es_prior(part, chain.total_transitions, comb);
    b.token_partition_prior =
        partition_prior(part.token_occupancy, chain.alphabet_size, part.num_token_groups, comb);
    // the unified variant keeps one partition and omits the other's prior
    b.memory_partition_prior =
        part.unified ? 0.0
                     : partition_prior(part.memory_occupancy, chain.memory_count(),
                                       part.num_memory_groups, comb);
    b.total = b.sum();
    return b;
}

// Sigma' of the order-scan table: the plain-chain Bayesian evidence with
// every token and memory in its own group and unit Dirichlet hyperparameters,
//   -ln prod_m (N-1)! / (a_m + N - 1)! prod_x a_xm!
inline double baseline_plain_dl(const ChainCounts& chain, LogComb& comb) {
    double acc = 0;
    const double lfN1 = comb.log_factorial(chain.alphabet_size - 1);
    for (std::int32_t m = 0; m < chain.memory_count(); ++m) {
        if (chain.memory_out[m] == 0) continue;
        acc -= lfN1 - comb.log_factorial(chain.memory_out[m] + chain.alphabet_size - 1);
        for (const auto& [x, a] : chain.mem_adj[m]) acc -= comb.log_factorial(a);
    }
    return acc;
}

// ln P({x_t}|p-hat) = sum a ln(a / a_mem); zero for deterministic chains
inline double mle_loglik(const ChainCounts& chain) {
    double acc = 0;
    for (std::int32_t m = 0; m < chain.memory_count(); ++m)
        for (const auto& [x, a] : chain.mem_adj[m])
            acc += static_cast<double>(a) *
                   std::log(static_cast<double>(a) / static_cast<double>(chain.memory_out[m]));
    return acc;
}

// conditional entropy H(X | memory) in nats per transition
inline double conditional_entropy(const ChainCounts& chain) {
    if (chain.total_transitions == 0) return 0;
    return -mle_loglik(chain) / static_cast<double>(chain.total_transitions);
}

// block maximum-likelihood objective
//   sum_rs e_rs ln(e_rs / (e_r e_s)) + sum_x k_x ln k_x
inline double sbm_ml_objective(const ChainCounts& chain, const Partition& part) {
    double acc = 0;
    for (const auto& [key, e] : part.block) {
        if (e == 0) continue;
        auto r = static_cast<std::int32_t>(key >> 32);
        auto s = static_cast<std::int32_t>(key & 0xffffffff);
        acc += static_cast<double>(e) *
               std::log(static_cast<double>(e) /
                        (static_cast<double>(part.e_token[r]) * static_cast<double>(part.e_memory[s])));
    }
    for (auto k : chain.token_emissions)
        if (k > 0) acc += static_cast<double>(k) * std::log(static_cast<double>(k));
    return acc;
}

}  // namespace blockmc
