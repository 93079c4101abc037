#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "blockmc/chain.hpp"
#include "blockmc/common.hpp"

namespace blockmc {

// Sufficient statistics for the continuous-time waiting-time evidence:
// per-memory totals Delta_m and counts k_m, plus the gamma-prior
// hyperparameters (alpha count-like, beta time-like, in seconds).
struct WaitStats {
    std::vector<double> total;        // Delta_m
    std::vector<std::int64_t> count;  // k_m
    double alpha = 1.0;
    double beta = 1.0;

    static WaitStats from_chain(const ChainCounts& chain, double alpha = 1.0,
                                double beta = 1.0) {
        if (!chain.has_waits)
            throw config_error("WaitStats: chain carries no waiting times");
        WaitStats ws;
        ws.total = chain.wait_total;
        ws.count = chain.memory_out;
        ws.alpha = alpha;
        ws.beta = beta;
        return ws;
    }

    void validate() const {
        if (alpha <= 0)
            throw config_error("waiting-time prior requires alpha > 0 (the Jeffreys limit is improper)");
        if (beta <= 0) throw config_error("waiting-time prior requires beta > 0");
    }
};

// -ln of one gamma-exponential evidence factor
//   beta^alpha Gamma(k + alpha) / (Gamma(alpha) (Delta + beta)^(k + alpha))
inline double wait_group_term(std::int64_t k, double delta, double alpha, double beta) {
    return -(alpha * std::log(beta) + std::lgamma(static_cast<double>(k) + alpha) -
             std::lgamma(alpha) -
             (static_cast<double>(k) + alpha) * std::log(delta + beta));
}

inline double wait_evidence_per_memory(const WaitStats& ws) {
    ws.validate();
    double acc = 0;
    for (std::size_t m = 0; m < ws.count.size(); ++m)
        acc += wait_group_term(ws.count[m], ws.total[m], ws.alpha, ws.beta);
    return acc;
}

inline double wait_evidence_per_group(const WaitStats& ws,
                                      const std::vector<std::int32_t>& memory_group,
                                      std::int32_t group_count) {
    ws.validate();
    if (memory_group.size() != ws.count.size())
        throw input_error("wait_evidence_per_group: partition does not cover memories");
    std::vector<std::int64_t> e(group_count, 0);
    std::vector<double> d(group_count, 0.0);
    for (std::size_t m = 0; m < ws.count.size(); ++m) {
        e[memory_group[m]] += ws.count[m];
        d[memory_group[m]] += ws.total[m];
    }
    double acc = 0;
    for (std::int32_t r = 0; r < group_count; ++r)
        acc += wait_group_term(e[r], d[r], ws.alpha, ws.beta);
    return acc;
}

// mu = ln(Delta / Delta_min): maps Pareto waiting times onto the exponential
// model so the same evidence machinery applies unchanged
inline std::vector<double> bursty_transform(const std::vector<double>& waits, double delta_min) {
    if (delta_min <= 0) throw config_error("bursty_transform: Delta_min must be positive");
    std::vector<double> out(waits.size());
    for (std::size_t i = 0; i < waits.size(); ++i) {
        if (waits[i] < delta_min)
            throw input_error("bursty_transform: wait below Delta_min at index " +
                              std::to_string(i));
        out[i] = std::log(waits[i] / delta_min);
    }
    return out;
}

// empirical-Bayes beta: the prior mean rate alpha/beta is matched to the
// average plug-in rate k_m / Delta_m over memories with observations
inline double estimate_beta(const WaitStats& ws) {
    double rate_sum = 0;
    std::int64_t eligible = 0;
    for (std::size_t m = 0; m < ws.count.size(); ++m) {
        if (ws.count[m] >= 1 && ws.total[m] > 0) {
            rate_sum += static_cast<double>(ws.count[m]) / ws.total[m];
            eligible += 1;
        }
    }
    if (eligible == 0)
        throw config_error("estimate_beta: no memory has observed waits; pass beta explicitly");
    return ws.alpha * static_cast<double>(eligible) / rate_sum;
}

}  // namespace blockmc
