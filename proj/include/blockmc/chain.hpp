#pragma once

#include <algorithm>
#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

#include "blockmc/alphabet.hpp"
#include "blockmc/common.hpp"

namespace blockmc {

// n-gram of the n most recent tokens, most recent first
struct MemoryKey {
    std::vector<std::int32_t> window;
    bool operator==(const MemoryKey& o) const { return window == o.window; }
};

struct MemoryKeyHash {
    std::size_t operator()(const MemoryKey& k) const {
        std::uint64_t h = 1469598103934665603ULL;
        for (std::int32_t v : k.window) {
            h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(v));
            h *= 1099511628211ULL;
        }
        return static_cast<std::size_t>(h);
    }
};

enum class Boundary { condition_on_prefix, cyclic, reset_at_separators };

// Sparse sufficient statistics of an order-n chain.  Only observed memories
// appear; counts are immutable after construction.
struct ChainCounts {
    int order = 1;
    std::int32_t alphabet_size = 0;                   // N
    std::int64_t total_transitions = 0;               // E
    std::vector<MemoryKey> memories;                  // dense index -> key
    std::unordered_map<MemoryKey, std::int32_t, MemoryKeyHash> memory_index;
    std::vector<std::int64_t> token_emissions;        // k_x
    std::vector<std::int64_t> memory_out;             // a_mem
    // adjacency, sorted by the opposite index
    std::vector<std::vector<std::pair<std::int32_t, std::int64_t>>> mem_adj;  // m -> [(x, a)]
    std::vector<std::vector<std::pair<std::int32_t, std::int64_t>>> tok_adj;  // x -> [(m, a)]
    // per-memory waiting-time totals, present when the sequence carries waits
    std::vector<double> wait_total;
    bool has_waits = false;
    std::int32_t initial_memory = -1;  // seeding memory under condition_on_prefix

    std::int32_t memory_count() const { return static_cast<std::int32_t>(memories.size()); }

    std::int64_t count(std::int32_t token, std::int32_t mem) const {
        const auto& row = mem_adj[mem];
        auto it = std::lower_bound(row.begin(), row.end(), token,
                                   [](const auto& p, std::int32_t t) { return p.first < t; });
        return (it != row.end() && it->first == token) ? it->second : 0;
    }
};

// condition_prefix widens the conditioned-on prefix beyond the order (used
// by order scans so every order models the same emissions); -1 means the
// first `order` tokens.
inline ChainCounts build_chain(const Sequence& seq, int order,
                               Boundary boundary = Boundary::condition_on_prefix,
                               int condition_prefix = -1) {
    if (order < 1) throw input_error("build_chain: order must be >= 1");
    if (condition_prefix >= 0 && condition_prefix < order)
        throw input_error("build_chain: conditioning prefix shorter than the order");
    const std::int64_t T = seq.length();
    const std::int64_t prefix = condition_prefix < 0 ? order : condition_prefix;
    if (boundary == Boundary::cyclic) {
        if (T < 1) throw input_error("build_chain: empty sequence");
    } else {
        if (T <= prefix) throw input_error("build_chain: sequence shorter than the prefix + 1");
    }
    if (boundary == Boundary::reset_at_separators && !seq.alphabet.separator_id)
        throw input_error("build_chain: reset_at_separators requires a separator token");

    ChainCounts cc;
    cc.order = order;
    cc.alphabet_size = seq.alphabet.size();
    cc.token_emissions.assign(cc.alphabet_size, 0);
    cc.has_waits = seq.has_waits();

    auto token_at = [&](std::int64_t t) {
        if (boundary == Boundary::cyclic) return seq.tokens[((t % T) + T) % T];
        return seq.tokens[t];
    };

    std::unordered_map<std::int64_t, std::int64_t> cell;  // (mem << 32 | token) -> count
    MemoryKey key;
    key.window.resize(order);
    const std::int32_t sep = seq.alphabet.separator_id.value_or(-1);

    std::int64_t t0 = (boundary == Boundary::cyclic) ? 0 : prefix;
    for (std::int64_t t = t0; t < T; ++t) {
        for (int j = 0; j < order; ++j) key.window[j] = token_at(t - 1 - j);
        std::int32_t x = token_at(t);
        if (boundary == Boundary::reset_at_separators) {
            if (x == sep) continue;
            bool crosses = false;
            for (int j = 0; j < order; ++j)
                if (key.window[j] == sep) crosses = true;
            if (crosses) continue;
        }
        auto [it, inserted] = cc.memory_index.try_emplace(key, cc.memory_count());
        if (inserted) {
            cc.memories.push_back(key);
            cc.memory_out.push_back(0);
            if (cc.has_waits) cc.wait_total.push_back(0.0);
        }
        std::int32_t m = it->second;
        if (cc.initial_memory < 0) cc.initial_memory = m;
        cell[(static_cast<std::int64_t>(m) << 32) | static_cast<std::uint32_t>(x)] += 1;
        cc.token_emissions[x] += 1;
        cc.memory_out[m] += 1;
        cc.total_transitions += 1;
        if (cc.has_waits && t >= 1 && t - 1 < static_cast<std::int64_t>(seq.waits.size())) {
            if (seq.waits[t - 1] < 0) throw input_error("build_chain: negative waiting time");
            cc.wait_total[m] += seq.waits[t - 1];
        }
    }

    cc.mem_adj.resize(cc.memory_count());
    cc.tok_adj.resize(cc.alphabet_size);
    for (const auto& [k, v] : cell) {
        auto m = static_cast<std::int32_t>(k >> 32);
        auto x = static_cast<std::int32_t>(k & 0xffffffff);
        cc.mem_adj[m].emplace_back(x, v);
        cc.tok_adj[x].emplace_back(m, v);
    }
    for (auto& row : cc.mem_adj) std::sort(row.begin(), row.end());
    for (auto& row : cc.tok_adj) std::sort(row.begin(), row.end());
    return cc;
}

}  // namespace blockmc
