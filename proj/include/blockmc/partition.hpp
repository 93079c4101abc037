#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <unordered_map>
#include <vector>

#include "blockmc/chain.hpp"
#include "blockmc/common.hpp"

namespace blockmc {

// Group assignments of tokens and memories with derived block aggregates.
// This is the immutable snapshot consumed by the description-length terms;
// the mutable inference state lives in state.hpp.
struct Partition {
    std::vector<std::int32_t> token_group;   // over the alphabet [0, N)
    std::vector<std::int32_t> memory_group;  // over observed memories [0, M)
    bool unified = false;
    std::int32_t num_token_groups = 0;   // B_N
    std::int32_t num_memory_groups = 0;  // B_M

    std::vector<std::int64_t> token_occupancy;   // n_r
    std::vector<std::int64_t> memory_occupancy;  // n_s
    std::unordered_map<std::uint64_t, std::int64_t> block;  // (r, s) -> e_rs
    std::vector<std::int64_t> e_token;   // e_r
    std::vector<std::int64_t> e_memory;  // e_s
    // per token group: emission count k -> number of tokens with that count
    std::vector<std::map<std::int64_t, std::int64_t>> k_histogram;

    static std::uint64_t key(std::int32_t r, std::int32_t s) {
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(r)) << 32) |
               static_cast<std::uint32_t>(s);
    }

    std::int64_t block_count(std::int32_t r, std::int32_t s) const {
        auto it = block.find(key(r, s));
        return it == block.end() ? 0 : it->second;
    }

    static Partition make(const ChainCounts& chain, std::vector<std::int32_t> token_assign,
                          std::vector<std::int32_t> memory_assign) {
        Partition p;
        p.token_group = std::move(token_assign);
        p.memory_group = std::move(memory_assign);
        p.finalize(chain);
        return p;
    }

    // unified variant: a single partition over symbols (order 1 only); each
    // symbol's token role and memory role share one group.
    static Partition make_unified(const ChainCounts& chain,
                                  const std::vector<std::int32_t>& symbol_assign) {
        if (chain.order != 1)
            throw config_error("unified partitions are defined for order 1 only");
        Partition p;
        p.unified = true;
        p.token_group = symbol_assign;
        p.memory_group.resize(chain.memory_count());
        for (std::int32_t m = 0; m < chain.memory_count(); ++m)
            p.memory_group[m] = symbol_assign[chain.memories[m].window[0]];
        p.finalize(chain);
        return p;
    }

    static Partition single_group(const ChainCounts& chain) {
        return make(chain, std::vector<std::int32_t>(chain.alphabet_size, 0),
                    std::vector<std::int32_t>(chain.memory_count(), 0));
    }

    static Partition singletons(const ChainCounts& chain) {
        std::vector<std::int32_t> t(chain.alphabet_size), m(chain.memory_count());
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<std::int32_t>(i);
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<std::int32_t>(i);
        return make(chain, std::move(t), std::move(m));
    }

    void finalize(const ChainCounts& chain) {
        if (static_cast<std::int32_t>(token_group.size()) != chain.alphabet_size)
            throw invariant_error("partition does not cover the token alphabet");
        if (static_cast<std::int32_t>(memory_group.size()) != chain.memory_count())
            throw invariant_error("partition does not cover the observed memories");
        for (auto g : token_group) num_token_groups = std::max(num_token_groups, g + 1);
        for (auto g : memory_group) num_memory_groups = std::max(num_memory_groups, g + 1);
        if (unified) num_memory_groups = num_token_groups;

        token_occupancy.assign(num_token_groups, 0);
        for (auto g : token_group) {
            if (g < 0) throw invariant_error("negative group label");
            token_occupancy[g] += 1;
        }
        memory_occupancy.assign(num_memory_groups, 0);
        for (auto g : memory_group) memory_occupancy[g] += 1;
        for (auto c : token_occupancy)
            if (c == 0) throw invariant_error("empty token group");
        if (!unified)
            for (auto c : memory_occupancy)
                if (c == 0) throw invariant_error("empty memory group");

        e_token.assign(num_token_groups, 0);
        e_memory.assign(num_memory_groups, 0);
        for (std::int32_t m = 0; m < chain.memory_count(); ++m) {
            std::int32_t s = memory_group[m];
            for (const auto& [x, a] : chain.mem_adj[m]) {
                std::int32_t r = token_group[x];
                block[key(r, s)] += a;
                e_token[r] += a;
                e_memory[s] += a;
            }
        }
        k_histogram.assign(num_token_groups, {});
        for (std::int32_t x = 0; x < chain.alphabet_size; ++x)
            k_histogram[token_group[x]][chain.token_emissions[x]] += 1;
    }
};

// 2 I(X;Y) / (H(X) + H(Y)); 1 when both partitions are trivial and equal
inline double normalized_mutual_information(const std::vector<std::int32_t>& a,
                                            const std::vector<std::int32_t>& b) {
    if (a.size() != b.size() || a.empty())
        throw input_error("normalized_mutual_information: size mismatch");
    double n = static_cast<double>(a.size());
    std::map<std::int32_t, double> ca, cb;
    std::map<std::pair<std::int32_t, std::int32_t>, double> cab;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ca[a[i]] += 1;
        cb[b[i]] += 1;
        cab[{a[i], b[i]}] += 1;
    }
    double ha = 0, hb = 0, mi = 0;
    for (auto& [g, c] : ca) ha -= c / n * std::log(c / n);
    for (auto& [g, c] : cb) hb -= c / n * std::log(c / n);
    for (auto& [gg, c] : cab)
        mi += c / n * std::log((c / n) / (ca[gg.first] / n * cb[gg.second] / n));
    if (ha + hb == 0) return 1.0;
    return 2.0 * mi / (ha + hb);
}

}  // namespace blockmc
