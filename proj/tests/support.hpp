// Shared test utilities: independent oracles (big-integer combinatorics,
// partition enumeration, the sequential-process simulator, quadrature) and
// small data generators.  Everything here is deliberately implemented from
// first principles, separate from the library code paths it checks.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "blockmc/chain.hpp"
#include "blockmc/partition.hpp"

namespace testsup {

// --- big natural numbers, base 2^32, for exact binomial evaluation --------

struct BigNat {
    std::vector<std::uint32_t> limbs{1};  // little endian

    void mul_small(std::uint64_t v) {
        std::uint64_t carry = 0;
        for (auto& l : limbs) {
            std::uint64_t cur = static_cast<std::uint64_t>(l) * v + carry;
            l = static_cast<std::uint32_t>(cur & 0xffffffffULL);
            carry = cur >> 32;
        }
        while (carry) {
            limbs.push_back(static_cast<std::uint32_t>(carry & 0xffffffffULL));
            carry >>= 32;
        }
    }

    void div_small(std::uint64_t v) {  // exact division
        std::uint64_t rem = 0;
        for (std::size_t i = limbs.size(); i-- > 0;) {
            std::uint64_t cur = (rem << 32) | limbs[i];
            limbs[i] = static_cast<std::uint32_t>(cur / v);
            rem = cur % v;
        }
        while (limbs.size() > 1 && limbs.back() == 0) limbs.pop_back();
    }

    double log() const {
        std::size_t k = limbs.size();
        double mant = 0;
        std::size_t take = std::min<std::size_t>(3, k);
        for (std::size_t i = 0; i < take; ++i)
            mant = mant * 4294967296.0 + limbs[k - 1 - i];
        return std::log(mant) + 32.0 * std::log(2.0) * static_cast<double>(k - take);
    }
};

inline double log_binomial_exact(std::int64_t n, std::int64_t k) {
    if (k < 0 || k > n) return -std::numeric_limits<double>::infinity();
    k = std::min(k, n - k);
    if (k == 0) return 0.0;
    BigNat b;
    for (std::int64_t i = 1; i <= k; ++i) {
        b.mul_small(static_cast<std::uint64_t>(n - k + i));
        b.div_small(static_cast<std::uint64_t>(i));
    }
    return b.log();
}

// --- restricted partition counts, independent of the library recurrence ---

// true enumeration (parts listed explicitly), fine for m <= ~70
inline std::uint64_t count_partitions_enumerate(int m, int max_parts, int max_value = -1) {
    if (max_value < 0) max_value = m;
    if (m == 0) return 1;
    if (max_parts == 0) return 0;
    std::uint64_t total = 0;
    for (int first = std::min(m, max_value); first >= 1; --first)
        total += count_partitions_enumerate(m - first, max_parts - 1, first);
    return total;
}

// different recurrence (by largest part) for larger m
inline std::uint64_t count_partitions_by_largest(int m, int n) {
    // partitions of m into parts of size at most n  == at most n parts (conjugate)
    std::vector<std::uint64_t> dp(m + 1, 0);
    dp[0] = 1;
    for (int part = 1; part <= n; ++part)
        for (int v = part; v <= m; ++v) dp[v] += dp[v - part];
    return dp[m];
}

// --- decrementing sequential process, test-side implementation ------------

struct ProcessCounts {
    std::map<std::pair<std::int32_t, std::int32_t>, std::int64_t> e;  // (r, s)
    std::vector<std::int64_t> e_r, e_s, k;

    static ProcessCounts from(const blockmc::ChainCounts& chain, const blockmc::Partition& part) {
        ProcessCounts pc;
        pc.e_r.assign(part.num_token_groups, 0);
        pc.e_s.assign(part.num_memory_groups, 0);
        pc.k = chain.token_emissions;
        for (std::int32_t m = 0; m < chain.memory_count(); ++m) {
            std::int32_t s = part.memory_group[m];
            for (const auto& [x, a] : chain.mem_adj[m]) {
                std::int32_t r = part.token_group[x];
                pc.e[{r, s}] += a;
                pc.e_r[r] += a;
                pc.e_s[s] += a;
            }
        }
        return pc;
    }
};

// probability of a full token sequence (prefix + emissions) under the
// decrementing process seeded by the constraint signature; 0 if the walk is
// inconsistent with the constraints
inline double process_probability(const blockmc::ChainCounts& chain,
                                  const blockmc::Partition& part,
                                  const std::vector<std::int32_t>& tokens) {
    ProcessCounts pc = ProcessCounts::from(chain, part);
    const int n = chain.order;
    double prob = 1.0;
    for (std::size_t t = n; t < tokens.size(); ++t) {
        blockmc::MemoryKey key;
        for (int j = 0; j < n; ++j) key.window.push_back(tokens[t - 1 - j]);
        auto it = chain.memory_index.find(key);
        if (it == chain.memory_index.end()) return 0.0;
        std::int32_t s = part.memory_group[it->second];
        std::int32_t x = tokens[t];
        std::int32_t r = part.token_group[x];
        auto ecell = pc.e.find({r, s});
        if (ecell == pc.e.end() || ecell->second == 0) return 0.0;
        if (pc.k[x] == 0 || pc.e_s[s] == 0 || pc.e_r[r] == 0) return 0.0;
        prob *= static_cast<double>(ecell->second) * static_cast<double>(pc.k[x]) /
                (static_cast<double>(pc.e_s[s]) * static_cast<double>(pc.e_r[r]));
        ecell->second -= 1;
        pc.e_s[s] -= 1;
        pc.e_r[r] -= 1;
        pc.k[x] -= 1;
    }
    // all budgets must be exhausted for a complete draw
    for (const auto& [rs, v] : pc.e)
        if (v != 0) return 0.0;
    return prob;
}

// enumerate all full sequences (same prefix, same length, tokens < N) whose
// constraint signature under `part` matches the reference chain's.  With
// `pooled_memories` (valid only when B_M == 1) candidate windows need not be
// registered: the single memory group covers every window.
inline std::vector<std::vector<std::int32_t>> enumerate_compatible_sequences(
    const blockmc::ChainCounts& chain, const blockmc::Partition& part,
    const std::vector<std::int32_t>& reference_tokens, bool pooled_memories = false) {
    const int n = chain.order;
    const std::int32_t N = chain.alphabet_size;
    const std::size_t T = reference_tokens.size();
    std::vector<std::vector<std::int32_t>> out;
    std::vector<std::int32_t> cur(reference_tokens.begin(), reference_tokens.begin() + n);

    std::map<std::pair<std::int32_t, std::int32_t>, std::int64_t> ref_blocks;
    {
        ProcessCounts pc = ProcessCounts::from(chain, part);
        ref_blocks = pc.e;
    }

    std::function<void()> rec = [&]() {
        if (cur.size() == T) {
            // recount candidate signature
            std::map<std::pair<std::int32_t, std::int32_t>, std::int64_t> blocks;
            std::vector<std::int64_t> k(N, 0);
            for (std::size_t t = n; t < T; ++t) {
                std::int32_t s;
                if (pooled_memories) {
                    s = 0;
                } else {
                    blockmc::MemoryKey key;
                    for (int j = 0; j < n; ++j) key.window.push_back(cur[t - 1 - j]);
                    auto it = chain.memory_index.find(key);
                    if (it == chain.memory_index.end()) return;
                    s = part.memory_group[it->second];
                }
                blocks[{part.token_group[cur[t]], s}] += 1;
                k[cur[t]] += 1;
            }
            if (blocks == ref_blocks && k == chain.token_emissions) out.push_back(cur);
            return;
        }
        for (std::int32_t x = 0; x < N; ++x) {
            cur.push_back(x);
            rec();
            cur.pop_back();
        }
    };
    rec();
    return out;
}

// --- quadrature ------------------------------------------------------------

inline double simpson(const std::function<double(double)>& f, double a, double b, int steps) {
    double h = (b - a) / steps;
    double acc = f(a) + f(b);
    for (int i = 1; i < steps; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

// --- generators ------------------------------------------------------------

inline std::vector<std::int32_t> random_tokens(std::int32_t alphabet, std::int64_t length,
                                               blockmc::rng_t& rng) {
    std::uniform_int_distribution<std::int32_t> d(0, alphabet - 1);
    std::vector<std::int32_t> out(length);
    for (auto& t : out) t = d(rng);
    return out;
}

inline blockmc::Sequence make_sequence(std::vector<std::int32_t> tokens, std::int32_t alphabet) {
    blockmc::Sequence s;
    for (std::int32_t i = 0; i < alphabet; ++i) s.alphabet.intern("t" + std::to_string(i));
    s.tokens = std::move(tokens);
    return s;
}

inline std::vector<std::int32_t> random_grouping(std::size_t items, std::int32_t groups,
                                                 blockmc::rng_t& rng) {
    // contiguous labels, every group nonempty (requires items >= groups)
    std::vector<std::int32_t> g(items);
    for (std::size_t i = 0; i < items; ++i)
        g[i] = (i < static_cast<std::size_t>(groups))
                   ? static_cast<std::int32_t>(i)
                   : std::uniform_int_distribution<std::int32_t>(0, groups - 1)(rng);
    std::shuffle(g.begin(), g.end(), rng);
    // relabel to make labels contiguous in first-appearance order
    std::map<std::int32_t, std::int32_t> remap;
    for (auto& v : g) {
        auto [it, fresh] = remap.try_emplace(v, static_cast<std::int32_t>(remap.size()));
        v = it->second;
    }
    return g;
}

// tokens from a planted block Markov chain: token group ratio `affinity` on
// the diagonal of the group transition matrix; memory group of a window is
// derived from its token groups via `mem_rule` (identity for order 1)
struct PlantedModel {
    std::int32_t alphabet = 20;
    std::int32_t token_groups = 2;
    double affinity = 9.0;  // diagonal-to-off ratio
    int order = 1;
    bool xor_rule = false;  // memory group = XOR of window token groups (order 2 signal)

    std::vector<std::int32_t> token_group_of;  // filled by generate

    std::vector<std::int32_t> generate(std::int64_t length, blockmc::rng_t& rng) {
        token_group_of.resize(alphabet);
        for (std::int32_t x = 0; x < alphabet; ++x)
            token_group_of[x] = x * token_groups / alphabet;
        std::vector<std::vector<std::int32_t>> members(token_groups);
        for (std::int32_t x = 0; x < alphabet; ++x) members[token_group_of[x]].push_back(x);

        std::uniform_real_distribution<double> u01(0, 1);
        std::uniform_int_distribution<std::int32_t> utok(0, alphabet - 1);
        std::vector<std::int32_t> seq;
        for (int i = 0; i < order; ++i) seq.push_back(utok(rng));
        for (std::int64_t t = order; t < length; ++t) {
            std::int32_t mem_group;
            if (xor_rule) {
                mem_group = 0;
                for (int j = 1; j <= order; ++j)
                    mem_group ^= (token_group_of[seq[t - j]] & 1);
            } else {
                mem_group = token_group_of[seq[t - 1]];
            }
            // row of the group transition matrix
            double diag = affinity / (affinity + (token_groups - 1));
            std::int32_t r;
            if (u01(rng) < diag)
                r = mem_group % token_groups;
            else {
                r = std::uniform_int_distribution<std::int32_t>(0, token_groups - 2)(rng);
                if (r >= mem_group % token_groups) ++r;
            }
            const auto& mem = members[r];
            seq.push_back(mem[std::uniform_int_distribution<std::size_t>(0, mem.size() - 1)(rng)]);
        }
        return seq;
    }
};

// --- statistics helpers -----------------------------------------------------

inline double chi_square_statistic(const std::vector<std::int64_t>& observed,
                                   const std::vector<double>& expected) {
    double acc = 0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        double d = observed[i] - expected[i];
        acc += d * d / expected[i];
    }
    return acc;
}

inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double d = 0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j])
            ++i;
        else
            ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / a.size() -
                                 static_cast<double>(j) / b.size()));
    }
    return d;
}

}  // namespace testsup

// --- temporal generators and the holdout oracle -----------------------------
// (shared by the temporal/predict suites and the acceptance runner)

#include "blockmc/predict.hpp"

namespace testsup {

inline blockmc::EdgeStream random_stream(std::int32_t nodes, std::int64_t edges,
                                         blockmc::rng_t& rng, bool directed = false) {
    std::vector<blockmc::EdgeRow> rows;
    std::uniform_int_distribution<std::int32_t> d(0, nodes - 1);
    for (std::int64_t e = 0; e < edges; ++e) {
        std::int32_t i = d(rng), j = d(rng);
        while (j == i) j = d(rng);
        rows.push_back({std::to_string(i), std::to_string(j), {}});
    }
    return blockmc::ingest_edge_stream(rows, directed);
}

// two planted node groups; the label process alternates between intra- and
// inter-group edges with persistence `stay`
inline blockmc::EdgeStream planted_temporal(std::int32_t nodes, std::int64_t edges, double stay,
                                            blockmc::rng_t& rng,
                                            std::vector<std::int32_t>* truth = nullptr) {
    std::vector<blockmc::EdgeRow> rows;
    std::uniform_real_distribution<double> u01(0, 1);
    auto node_of = [&](std::int32_t group) {
        std::int32_t half = nodes / 2;
        std::int32_t base = group == 0 ? 0 : half;
        std::int32_t span = group == 0 ? half : nodes - half;
        return base + std::uniform_int_distribution<std::int32_t>(0, span - 1)(rng);
    };
    bool intra = true;
    for (std::int64_t e = 0; e < edges; ++e) {
        if (u01(rng) > stay) intra = !intra;
        std::int32_t i, j;
        if (intra) {
            std::int32_t g = u01(rng) < 0.5 ? 0 : 1;
            i = node_of(g);
            do j = node_of(g); while (j == i);
        } else {
            i = node_of(0);
            j = node_of(1);
        }
        rows.push_back({std::to_string(i), std::to_string(j), {}});
    }
    auto es = blockmc::ingest_edge_stream(rows, false);
    if (truth) {
        truth->assign(es.node_count(), 0);
        for (std::int32_t v = 0; v < es.node_count(); ++v)
            (*truth)[v] = std::stoi(es.node_names[v]) < nodes / 2 ? 0 : 1;
    }
    return es;
}

// exact log of sum_b' P(full | b*, b') P(b*, b') over every completion of
// the frozen training partition, plus Sigma(train): dominates the reported
// holdout bound when the lower-bound inequality holds
inline double exact_log_predictive_upper(const blockmc::Sequence& seq, std::int64_t S, int order,
                                         const blockmc::FitConfig& config,
                                         blockmc::LogComb& comb) {
    using namespace blockmc;
    std::vector<std::int32_t> trim(seq.alphabet.size(), -1);
    Sequence train;
    for (std::int64_t t = 0; t < S; ++t) {
        std::int32_t x = seq.tokens[t];
        if (trim[x] < 0) trim[x] = train.alphabet.intern(seq.alphabet.id_to_token[x]);
        train.tokens.push_back(trim[x]);
    }
    auto train_chain = build_chain(train, order);
    auto train_fit = agglomerative_search(train_chain, config, comb);
    auto full_chain = build_chain(seq, order);

    std::vector<std::int32_t> tok_base(seq.alphabet.size(), -1);
    std::vector<std::int32_t> new_tokens;
    for (std::int32_t x = 0; x < seq.alphabet.size(); ++x) {
        if (trim[x] >= 0)
            tok_base[x] = train_fit.token_groups[trim[x]];
        else
            new_tokens.push_back(x);
    }
    std::vector<std::int32_t> mem_base(full_chain.memory_count(), -1);
    std::vector<std::int32_t> new_memories;
    for (std::int32_t m = 0; m < full_chain.memory_count(); ++m) {
        blockmc::MemoryKey key;
        bool trained = true;
        for (auto id : full_chain.memories[m].window) {
            if (trim[id] < 0) {
                trained = false;
                break;
            }
            key.window.push_back(trim[id]);
        }
        if (trained) {
            auto it = train_chain.memory_index.find(key);
            if (it != train_chain.memory_index.end()) {
                mem_base[m] = train_fit.memory_groups[it->second];
                continue;
            }
        }
        new_memories.push_back(m);
    }

    PriorConfig pcfg{config.k_prior, blockmc::Units::nats};
    double zmax = -1e300;
    std::vector<double> terms;
    std::vector<std::int32_t> tok(tok_base), mem(mem_base);
    std::function<void(std::size_t)> rec_mem;
    std::function<void(std::size_t)> rec_tok = [&](std::size_t i) {
        if (i == new_tokens.size()) {
            rec_mem(0);
            return;
        }
        std::int32_t hi = train_fit.num_token_groups;
        for (auto g : tok)
            if (g >= 0) hi = std::max(hi, g + 1);
        for (std::int32_t g = 0; g <= hi; ++g) {
            tok[new_tokens[i]] = g;
            rec_tok(i + 1);
        }
        tok[new_tokens[i]] = -1;
    };
    rec_mem = [&](std::size_t i) {
        if (i == new_memories.size()) {
            auto compact = [](std::vector<std::int32_t> v) {
                std::map<std::int32_t, std::int32_t> remap;
                for (auto& g : v) {
                    auto [it, fresh] =
                        remap.try_emplace(g, static_cast<std::int32_t>(remap.size()));
                    g = it->second;
                }
                return v;
            };
            auto part = Partition::make(full_chain, compact(tok), compact(mem));
            double sigma = total_dl(full_chain, part, pcfg, comb).total;
            terms.push_back(-sigma);
            zmax = std::max(zmax, -sigma);
            return;
        }
        std::int32_t hi = train_fit.num_memory_groups;
        for (auto g : mem)
            if (g >= 0) hi = std::max(hi, g + 1);
        for (std::int32_t g = 0; g <= hi; ++g) {
            mem[new_memories[i]] = g;
            rec_mem(i + 1);
        }
        mem[new_memories[i]] = -1;
    };
    rec_tok(0);
    double z = 0;
    for (auto t : terms) z += std::exp(t - zmax);
    return zmax + std::log(z) + train_fit.breakdown.total;
}

}  // namespace testsup
