#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "blockmc/edge_stream.hpp"
#include "blockmc/mcmc.hpp"

namespace blockmc {

// Aggregates of an edge stream under a node partition: label-pair edge
// counts m_rs (canonical r >= s when undirected), endpoint counts and group
// occupancies.
struct EdgeBlocks {
    std::int32_t num_groups = 0;  // C
    bool directed = false;
    std::vector<std::int64_t> occupancy;                       // n_r
    std::map<std::pair<std::int32_t, std::int32_t>, std::int64_t> m;  // m_rs
    std::vector<std::int64_t> endpoint;      // e-hat_r (undirected), or out
    std::vector<std::int64_t> endpoint_in;   // directed only

    static EdgeBlocks from(const EdgeStream& es, const std::vector<std::int32_t>& c) {
        if (static_cast<std::int32_t>(c.size()) != es.node_count())
            throw invariant_error("node partition does not cover the stream");
        EdgeBlocks b;
        b.directed = es.directed;
        for (auto g : c) b.num_groups = std::max(b.num_groups, g + 1);
        b.occupancy.assign(b.num_groups, 0);
        for (auto g : c) {
            if (g < 0) throw invariant_error("negative node group");
            b.occupancy[g] += 1;
        }
        for (auto n : b.occupancy)
            if (n == 0) throw invariant_error("empty node group");
        b.endpoint.assign(b.num_groups, 0);
        if (es.directed) b.endpoint_in.assign(b.num_groups, 0);
        for (const auto& [key, a] : es.adjacency) {
            auto i = static_cast<std::int32_t>(key >> 32);
            auto j = static_cast<std::int32_t>(key & 0xffffffff);
            std::int32_t r = c[i], s = c[j];
            if (es.directed) {
                b.m[{r, s}] += a;
                b.endpoint[r] += a;
                b.endpoint_in[s] += a;
            } else {
                if (r < s) std::swap(r, s);
                b.m[{r, s}] += a;
                if (r == s) {
                    b.endpoint[r] += 2 * a;
                } else {
                    b.endpoint[r] += a;
                    b.endpoint[s] += a;
                }
            }
        }
        return b;
    }
};

// Markov chain over the canonical edge labels (c_i, c_j) of the stream
struct LabelChain {
    Alphabet label_alphabet;
    std::vector<std::pair<std::int32_t, std::int32_t>> pairs;  // label id -> (r, s)
    Sequence seq;
    ChainCounts chain;
};

// Map each edge to its group-pair label and build the order-n chain over
// the resulting sequence.  The label alphabet is the full C(C+1)/2 (or C^2
// when directed) universe: labels with no occurrences are zero-count tokens,
// so a larger C pays for its whole label space in the chain priors.  With
// every label group merged the chain's frequency prior then cancels the
// static m_rs prior exactly, reducing the dynamic factor to 1/E!.
inline LabelChain label_sequence(const EdgeStream& es, const std::vector<std::int32_t>& c,
                                 int order, Boundary boundary = Boundary::condition_on_prefix) {
    if (static_cast<std::int32_t>(c.size()) != es.node_count())
        throw input_error("label_sequence: partition does not cover the stream's nodes");
    LabelChain lc;
    std::int32_t C = 0;
    for (auto g : c) C = std::max(C, g + 1);
    auto intern_pair = [&](std::int32_t r, std::int32_t s) {
        std::int32_t before = lc.label_alphabet.size();
        std::int32_t id = lc.label_alphabet.intern(std::to_string(r) + "," + std::to_string(s));
        if (id == before) lc.pairs.emplace_back(r, s);
        return id;
    };
    if (es.directed) {
        for (std::int32_t r = 0; r < C; ++r)
            for (std::int32_t s = 0; s < C; ++s) intern_pair(r, s);
    } else {
        for (std::int32_t r = 0; r < C; ++r)
            for (std::int32_t s = 0; s <= r; ++s) intern_pair(r, s);
    }
    for (const auto& [i, j] : es.events) {
        std::int32_t r = c[i], s = c[j];
        if (!es.directed && r < s) std::swap(r, s);
        lc.seq.tokens.push_back(lc.label_alphabet.lookup(std::to_string(r) + "," +
                                                         std::to_string(s)));
    }
    lc.seq.alphabet = lc.label_alphabet;
    lc.chain = build_chain(lc.seq, order, boundary);
    return lc;
}

namespace detail {

// label chain without the string registry, for inner-loop scoring; ids and
// ordering match label_sequence exactly
struct LiteLabelChain {
    ChainCounts chain;
    std::vector<std::pair<std::int32_t, std::int32_t>> pairs;
};

inline LiteLabelChain lite_label_chain(const EdgeStream& es, const std::vector<std::int32_t>& c,
                                       int order, Boundary boundary) {
    std::int32_t C = 0;
    for (auto g : c) C = std::max(C, g + 1);
    LiteLabelChain out;
    Sequence seq;
    if (es.directed) {
        out.pairs.reserve(static_cast<std::size_t>(C) * C);
        for (std::int32_t r = 0; r < C; ++r)
            for (std::int32_t s = 0; s < C; ++s) out.pairs.emplace_back(r, s);
        for (const auto& [i, j] : es.events) seq.tokens.push_back(c[i] * C + c[j]);
    } else {
        out.pairs.reserve(static_cast<std::size_t>(C) * (C + 1) / 2);
        for (std::int32_t r = 0; r < C; ++r)
            for (std::int32_t s = 0; s <= r; ++s) out.pairs.emplace_back(r, s);
        for (const auto& [i, j] : es.events) {
            std::int32_t r = c[i], s = c[j];
            if (r < s) std::swap(r, s);
            seq.tokens.push_back(r * (r + 1) / 2 + s);
        }
    }
    seq.alphabet.id_to_token.resize(out.pairs.size());
    out.chain = build_chain(seq, order, boundary);
    return out;
}

// -ln P({m_rs}): uniform multiset prior over the label cells
inline double m_prior_dl(const EdgeBlocks& b, std::int64_t E, LogComb& comb) {
    if (E == 0) return 0.0;
    std::int64_t cells = b.directed
                             ? static_cast<std::int64_t>(b.num_groups) * b.num_groups
                             : static_cast<std::int64_t>(b.num_groups) * (b.num_groups + 1) / 2;
    return comb.log_multiset(cells, E);
}

inline double sum_log_m_factorial(const EdgeBlocks& b, LogComb& comb) {
    double acc = 0;
    for (const auto& [rs, cnt] : b.m) acc += comb.log_factorial(cnt);
    return acc;
}

}  // namespace detail

// -ln P({A_ij}|c): the static part of the factorized likelihood, including
// the uniform m_rs prior but excluding the node partition prior.
inline double static_term(const EdgeStream& es, const EdgeBlocks& b, LogComb& comb) {
    if (es.edge_count() == 0) return 0.0;
    double acc = 0;
    const std::int64_t E = es.edge_count();
    if (!es.directed) {
        for (const auto& [rs, cnt] : b.m) {
            acc -= comb.log_factorial(cnt);
            if (rs.first == rs.second) acc -= static_cast<double>(cnt) * std::log(2.0);
        }
        for (auto e : b.endpoint) acc += comb.log_factorial(e);
        for (auto d : es.degree) acc -= comb.log_factorial(d);
        for (std::int32_t r = 0; r < b.num_groups; ++r)
            acc += comb.log_multiset(b.occupancy[r], b.endpoint[r]);
        acc += detail::m_prior_dl(b, E, comb);
    } else {
        for (const auto& [rs, cnt] : b.m) acc -= comb.log_factorial(cnt);
        for (auto e : b.endpoint) acc += comb.log_factorial(e);
        for (auto e : b.endpoint_in) acc += comb.log_factorial(e);
        for (auto d : es.degree) acc -= comb.log_factorial(d);
        for (auto d : es.in_degree) acc -= comb.log_factorial(d);
        for (std::int32_t r = 0; r < b.num_groups; ++r) {
            acc += comb.log_multiset(b.occupancy[r], b.endpoint[r]);
            acc += comb.log_multiset(b.occupancy[r], b.endpoint_in[r]);
        }
        acc += detail::m_prior_dl(b, E, comb);
    }
    return acc;
}

inline double static_term(const EdgeStream& es, const std::vector<std::int32_t>& c,
                          LogComb& comb) {
    return static_term(es, EdgeBlocks::from(es, c), comb);
}

// Total description length of the temporal model via the factorized form:
// static aggregated-graph term times the label-chain term with the shared
// m_rs bookkeeping divided out.  n = 0 is the static DCSBM alone.
inline DlBreakdown temporal_dl(const EdgeStream& es, const std::vector<std::int32_t>& c,
                               const std::vector<std::int32_t>& label_token_groups,
                               const std::vector<std::int32_t>& label_memory_groups, int order,
                               const PriorConfig& cfg, LogComb& comb, bool unified_labels = false,
                               Boundary boundary = Boundary::condition_on_prefix) {
    EdgeBlocks blocks = EdgeBlocks::from(es, c);
    DlBreakdown out;
    double pp_c = partition_prior(blocks.occupancy, es.node_count(), blocks.num_groups, comb);
    double stat = static_term(es, blocks, comb);
    if (order == 0 || es.edge_count() <= order) {
        out.static_net_term = stat + pp_c;
        out.total = out.sum();
        return out;
    }
    auto lc = label_sequence(es, c, order, boundary);
    Partition lp = unified_labels
                       ? Partition::make_unified(lc.chain, label_token_groups)
                       : Partition::make(lc.chain, label_token_groups, label_memory_groups);
    out = total_dl(lc.chain, lp, cfg, comb);
    out.static_net_term = stat + pp_c - detail::m_prior_dl(blocks, es.edge_count(), comb) +
                          detail::sum_log_m_factorial(blocks, comb);
    out.total = out.sum();
    return out;
}

// The same quantity evaluated along the direct product form: the
// edge-sequence likelihood conditioned on the label sequence, times the full
// nonparametric chain likelihood of the labels.  Kept as an independent
// route for the factorization-identity check.
inline double temporal_dl_direct(const EdgeStream& es, const std::vector<std::int32_t>& c,
                                 const std::vector<std::int32_t>& label_token_groups,
                                 const std::vector<std::int32_t>& label_memory_groups, int order,
                                 const PriorConfig& cfg, LogComb& comb,
                                 bool unified_labels = false,
                                 Boundary boundary = Boundary::condition_on_prefix) {
    EdgeBlocks b = EdgeBlocks::from(es, c);
    double pp_c = partition_prior(b.occupancy, es.node_count(), b.num_groups, comb);
    // -ln P({(i,j)_t} | {(r,s)_t}, c)
    double acc = 0;
    if (!es.directed) {
        for (const auto& [rs, cnt] : b.m)
            if (rs.first == rs.second) acc -= static_cast<double>(cnt) * std::log(2.0);
        for (auto e : b.endpoint) acc += comb.log_factorial(e);
        for (auto d : es.degree) acc -= comb.log_factorial(d);
        for (std::int32_t r = 0; r < b.num_groups; ++r)
            acc += comb.log_multiset(b.occupancy[r], b.endpoint[r]);
    } else {
        for (auto e : b.endpoint) acc += comb.log_factorial(e);
        for (auto e : b.endpoint_in) acc += comb.log_factorial(e);
        for (auto d : es.degree) acc -= comb.log_factorial(d);
        for (auto d : es.in_degree) acc -= comb.log_factorial(d);
        for (std::int32_t r = 0; r < b.num_groups; ++r) {
            acc += comb.log_multiset(b.occupancy[r], b.endpoint[r]);
            acc += comb.log_multiset(b.occupancy[r], b.endpoint_in[r]);
        }
    }
    if (order == 0 || es.edge_count() <= order)
        return acc + pp_c + detail::m_prior_dl(b, es.edge_count(), comb) -
               detail::sum_log_m_factorial(b, comb);
    auto lc = label_sequence(es, c, order, boundary);
    Partition lp = unified_labels
                       ? Partition::make_unified(lc.chain, label_token_groups)
                       : Partition::make(lc.chain, label_token_groups, label_memory_groups);
    return acc + pp_c + total_dl(lc.chain, lp, cfg, comb).total;
}

// ---- joint inference over node and label partitions -------------------------

struct TemporalFitConfig {
    FitConfig base;
    int order = 1;          // 0 gives a pure static DCSBM fit
    bool unified_labels = false;
};

struct TemporalFitResult {
    std::vector<std::int32_t> node_groups;
    std::int32_t num_node_groups = 1;  // C
    std::vector<std::int32_t> label_token_groups;
    std::vector<std::int32_t> label_memory_groups;
    std::vector<std::pair<std::int32_t, std::int32_t>> label_pairs;
    std::int32_t num_label_token_groups = 0;
    std::int32_t num_label_memory_groups = 0;
    DlBreakdown breakdown;
    double accept_rate = 0;
    std::uint64_t seed = 0;
    double wall_seconds = 0;
};

namespace detail {

// group memberships of label values and label-memory windows, keyed by
// value so they survive node-partition changes
struct LabelGroupMemory {
    bool directed = false;
    std::map<std::pair<std::int32_t, std::int32_t>, std::int32_t> token_of;
    std::map<std::vector<std::int64_t>, std::int32_t> memory_of;

    static std::vector<std::int64_t> window_value(
        const std::vector<std::pair<std::int32_t, std::int32_t>>& pairs, const MemoryKey& key) {
        std::vector<std::int64_t> v;
        for (auto id : key.window) {
            auto [r, s] = pairs[id];
            v.push_back((static_cast<std::int64_t>(r) << 32) | static_cast<std::uint32_t>(s));
        }
        return v;
    }
    static std::vector<std::int64_t> window_value(const LabelChain& lc, const MemoryKey& key) {
        return window_value(lc.pairs, key);
    }

    std::pair<std::int32_t, std::int32_t> canon(std::int32_t r, std::int32_t s) const {
        if (!directed && r < s) std::swap(r, s);
        return {r, s};
    }

    // carry the remembered groups through a node-group relabeling; groups
    // folded away by the rename merge their label entries onto the target
    LabelGroupMemory translate(const std::map<std::int32_t, std::int32_t>& rename) const {
        auto map_group = [&](std::int32_t g) -> std::int32_t {
            auto it = rename.find(g);
            return it == rename.end() ? -1 : it->second;
        };
        LabelGroupMemory out;
        out.directed = directed;
        for (const auto& [rs, grp] : token_of) {
            std::int32_t r = map_group(rs.first), s = map_group(rs.second);
            if (r < 0 || s < 0) continue;
            out.token_of.try_emplace(canon(r, s), grp);
        }
        for (const auto& [win, grp] : memory_of) {
            std::vector<std::int64_t> w;
            bool ok = true;
            for (auto v : win) {
                std::int32_t r = map_group(static_cast<std::int32_t>(v >> 32));
                std::int32_t s = map_group(static_cast<std::int32_t>(v & 0xffffffff));
                if (r < 0 || s < 0) {
                    ok = false;
                    break;
                }
                auto [rr, ss] = canon(r, s);
                w.push_back((static_cast<std::int64_t>(rr) << 32) |
                            static_cast<std::uint32_t>(ss));
            }
            if (ok) out.memory_of.try_emplace(std::move(w), grp);
        }
        return out;
    }

    // materialize contiguous assignments for one chain; unseen items join
    // group 0
    void materialize(const ChainCounts& chain,
                     const std::vector<std::pair<std::int32_t, std::int32_t>>& pairs,
                     std::vector<std::int32_t>& tok, std::vector<std::int32_t>& mem,
                     bool unified) const {
        std::int32_t L = chain.alphabet_size;
        tok.assign(L, 0);
        std::map<std::int32_t, std::int32_t> used;
        for (std::int32_t l = 0; l < L; ++l) {
            auto it = token_of.find(pairs[l]);
            std::int32_t g = (it == token_of.end()) ? 0 : it->second;
            auto [jt, fresh] = used.try_emplace(g, static_cast<std::int32_t>(used.size()));
            tok[l] = jt->second;
        }
        if (unified) {
            mem.clear();
            return;
        }
        std::int32_t M = chain.memory_count();
        mem.assign(M, 0);
        std::map<std::int32_t, std::int32_t> usedm;
        for (std::int32_t m = 0; m < M; ++m) {
            auto it = memory_of.find(window_value(pairs, chain.memories[m]));
            std::int32_t g = (it == memory_of.end()) ? 0 : it->second;
            auto [jt, fresh] = usedm.try_emplace(g, static_cast<std::int32_t>(usedm.size()));
            mem[m] = jt->second;
        }
    }
    void materialize(const LabelChain& lc, std::vector<std::int32_t>& tok,
                     std::vector<std::int32_t>& mem, bool unified) const {
        materialize(lc.chain, lc.pairs, tok, mem, unified);
    }

    void store(const ChainCounts& chain,
               const std::vector<std::pair<std::int32_t, std::int32_t>>& pairs,
               const std::vector<std::int32_t>& tok, const std::vector<std::int32_t>& mem,
               bool unified) {
        token_of.clear();
        memory_of.clear();
        for (std::int32_t l = 0; l < chain.alphabet_size; ++l) token_of[pairs[l]] = tok[l];
        if (unified) return;
        for (std::int32_t m = 0; m < chain.memory_count(); ++m)
            memory_of[window_value(pairs, chain.memories[m])] = mem[m];
    }
    void store(const LabelChain& lc, const std::vector<std::int32_t>& tok,
               const std::vector<std::int32_t>& mem, bool unified) {
        store(lc.chain, lc.pairs, tok, mem, unified);
    }
};

}  // namespace detail

// Joint state for the temporal model.  Node moves are scored by rebuilding
// the label chain under the candidate membership with the label partition
// held fixed by value; label sweeps run the chain machinery on the current
// label chain between node phases.
class TemporalState {
  public:
    TemporalState(const EdgeStream& es, LogComb& comb, TemporalFitConfig cfg,
                  std::vector<std::int32_t> c0)
        : es_(es), comb_(comb), cfg_(cfg) {
        adj_.resize(es.node_count());
        for (const auto& [key, a] : es.adjacency) {
            auto i = static_cast<std::int32_t>(key >> 32);
            auto j = static_cast<std::int32_t>(key & 0xffffffff);
            adj_[i].emplace_back(j, a);
            if (i != j) adj_[j].emplace_back(i, a);
        }
        frozen_nodes_.assign(es.node_count(), 0);
        labels_.directed = es.directed;
        c_ = compact(c0).first;
        total_ = evaluate(c_, labels_);
    }

    const std::vector<std::int32_t>& node_groups() const { return c_; }
    std::int32_t num_node_groups() const {
        std::int32_t C = 0;
        for (auto g : c_) C = std::max(C, g + 1);
        return C;
    }
    double total() const { return total_; }
    std::vector<std::uint8_t>& frozen_nodes() { return frozen_nodes_; }
    detail::LabelGroupMemory& label_groups() { return labels_; }
    const TemporalFitConfig& config() const { return cfg_; }
    const EdgeStream& stream() const { return es_; }

    bool has_dynamic_part() const {
        return cfg_.order >= 1 && es_.edge_count() > cfg_.order;
    }

    // compact labels, returning assignments plus old-group -> new-group map
    static std::pair<std::vector<std::int32_t>, std::map<std::int32_t, std::int32_t>> compact(
        const std::vector<std::int32_t>& c) {
        std::map<std::int32_t, std::int32_t> remap;
        std::vector<std::int32_t> out(c.size());
        for (std::size_t i = 0; i < c.size(); ++i) {
            auto [it, fresh] = remap.try_emplace(c[i], static_cast<std::int32_t>(remap.size()));
            out[i] = it->second;
        }
        return {out, remap};
    }

    double evaluate(const std::vector<std::int32_t>& cc,
                    const detail::LabelGroupMemory& labels) const {
        EdgeBlocks b = EdgeBlocks::from(es_, cc);
        double pp_c = partition_prior(b.occupancy, es_.node_count(), b.num_groups, comb_);
        double stat = static_term(es_, b, comb_);
        if (!has_dynamic_part()) return stat + pp_c;
        auto lc = detail::lite_label_chain(es_, cc, cfg_.order, cfg_.base.boundary);
        std::vector<std::int32_t> tok, mem;
        labels.materialize(lc.chain, lc.pairs, tok, mem, cfg_.unified_labels);
        PriorConfig pcfg{cfg_.base.k_prior, Units::nats};
        Partition lp = cfg_.unified_labels ? Partition::make_unified(lc.chain, tok)
                                           : Partition::make(lc.chain, tok, mem);
        return stat + pp_c + total_dl(lc.chain, lp, pcfg, comb_).total -
               detail::m_prior_dl(b, es_.edge_count(), comb_) +
               detail::sum_log_m_factorial(b, comb_);
    }

    // score a raw (possibly non-contiguous) candidate membership with the
    // current label groups carried through the relabeling
    double assignment_total(const std::vector<std::int32_t>& cand) const {
        auto [cc, rename] = compact(cand);
        auto translated = labels_.translate(rename);
        return evaluate(cc, translated);
    }

    std::map<std::int32_t, std::int32_t> commit(const std::vector<std::int32_t>& cand,
                                                double known_total) {
        auto [cc, rename] = compact(cand);
        labels_ = labels_.translate(rename);
        c_ = std::move(cc);
        total_ = known_total;
        return rename;
    }

    void set_assignment(const std::vector<std::int32_t>& c) {
        auto [cc, rename] = compact(c);
        labels_ = labels_.translate(rename);
        c_ = std::move(cc);
        total_ = evaluate(c_, labels_);
    }

    void set_label_groups(const detail::LabelGroupMemory& labels) {
        labels_ = labels;
        labels_.directed = es_.directed;
        total_ = evaluate(c_, labels_);
    }

    // one greedy sweep over the movable nodes
    void node_sweep(rng_t& rng, SweepStats& stats) {
        std::vector<std::int32_t> order(es_.node_count());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::int32_t>(i);
        std::shuffle(order.begin(), order.end(), rng);
        for (auto i : order) {
            if (frozen_nodes_[i]) continue;
            std::int32_t C = num_node_groups();
            std::int32_t target = propose_node_target(i, rng);
            if (target == c_[i]) {
                stats.proposed += 1;
                continue;
            }
            bool singleton = node_group_size(c_[i]) == 1;
            if (target == C && singleton) continue;
            stats.proposed += 1;
            std::vector<std::int32_t> cand = c_;
            cand[i] = target;
            double t = assignment_total(cand);
            if (t < total_) {
                commit(cand, t);
                stats.accepted += 1;
            }
        }
    }

    // re-optimize the label partition given the current memberships
    void label_phase(std::uint64_t seed) {
        if (!has_dynamic_part()) return;
        auto lc = label_sequence(es_, c_, cfg_.order, cfg_.base.boundary);
        FitConfig fc = cfg_.base;
        fc.seed = seed;
        fc.restarts = 1;
        fc.unified = cfg_.unified_labels;
        fc.wait_mode = WaitMode::none;
        fc.force_groups.reset();
        auto fit = agglomerative_search(lc.chain, fc, comb_);
        detail::LabelGroupMemory cand;
        cand.directed = es_.directed;
        cand.store(lc, fit.token_groups, fit.memory_groups, cfg_.unified_labels);
        double t = evaluate(c_, cand);
        if (t < total_) {
            labels_ = cand;
            total_ = t;
        }
    }

    // apply the single best merge of two node groups; false when C == 1 or
    // no candidate improves over doing nothing is required (merges always
    // apply: the ladder forces coarsening)
    bool merge_one(int candidates, rng_t& rng) {
        std::int32_t C = num_node_groups();
        if (C <= 1) return false;
        double best = std::numeric_limits<double>::infinity();
        std::vector<std::int32_t> best_cand;
        auto consider = [&](std::int32_t g, std::int32_t h) {
            if (g == h) return;
            std::vector<std::int32_t> cand = c_;
            for (auto& v : cand)
                if (v == g) v = h;
            double t = assignment_total(cand);
            if (t < best) {
                best = t;
                best_cand = std::move(cand);
            }
        };
        if (C <= candidates + 1) {
            for (std::int32_t g = 0; g < C; ++g)
                for (std::int32_t h = 0; h < C; ++h) consider(g, h);
        } else {
            for (std::int32_t g = 0; g < C; ++g)
                for (int k = 0; k < candidates; ++k) {
                    std::int32_t h = std::uniform_int_distribution<std::int32_t>(0, C - 2)(rng);
                    if (h >= g) ++h;
                    consider(g, h);
                }
        }
        if (best_cand.empty()) return false;
        commit(best_cand, best);
        return true;
    }

    // score once, then fold disjoint pairs down to target_C; used on the
    // coarse upper ladder where per-merge rescoring would dominate the cost
    void merge_round(std::int32_t target_C, int candidates, rng_t& rng) {
        while (num_node_groups() > target_C) {
            std::int32_t C = num_node_groups();
            struct Cand {
                double delta;
                std::int32_t g, h;
            };
            std::vector<Cand> list;
            for (std::int32_t g = 0; g < C; ++g) {
                double best = std::numeric_limits<double>::infinity();
                std::int32_t best_h = -1;
                auto consider = [&](std::int32_t h) {
                    if (h == g) return;
                    std::vector<std::int32_t> cand = c_;
                    for (auto& v : cand)
                        if (v == g) v = h;
                    double t = assignment_total(cand);
                    if (t < best) {
                        best = t;
                        best_h = h;
                    }
                };
                if (C <= candidates + 1) {
                    for (std::int32_t h = 0; h < C; ++h) consider(h);
                } else {
                    for (int k = 0; k < candidates; ++k) {
                        std::int32_t h =
                            std::uniform_int_distribution<std::int32_t>(0, C - 2)(rng);
                        if (h >= g) ++h;
                        consider(h);
                    }
                }
                if (best_h >= 0) list.push_back({best, g, best_h});
            }
            if (list.empty()) break;
            std::sort(list.begin(), list.end(), [](const Cand& a, const Cand& b) {
                if (a.delta != b.delta) return a.delta < b.delta;
                if (a.g != b.g) return a.g < b.g;
                return a.h < b.h;
            });
            std::vector<std::int32_t> alias(C);
            for (std::int32_t i = 0; i < C; ++i) alias[i] = i;
            std::vector<std::uint8_t> dirty(C, 0);
            int applied = 0;
            for (const auto& cand : list) {
                if (num_node_groups() <= target_C) break;
                if (dirty[cand.g] || dirty[cand.h]) continue;
                std::int32_t g = alias[cand.g], h = alias[cand.h];
                if (g == h || g < 0 || h < 0) continue;
                std::vector<std::int32_t> next = c_;
                for (auto& v : next)
                    if (v == g) v = h;
                double t = assignment_total(next);
                auto rename = commit(next, t);
                dirty[cand.g] = dirty[cand.h] = 1;
                for (auto& a : alias) {
                    if (a == g) a = h;
                    auto it = rename.find(a);
                    a = (it == rename.end()) ? -1 : it->second;
                }
                applied += 1;
            }
            if (applied == 0) {
                if (!merge_one(candidates, rng)) break;
            }
        }
    }

    std::int64_t node_group_size(std::int32_t g) const {
        std::int64_t n = 0;
        for (auto v : c_)
            if (v == g) n += 1;
        return n;
    }

    // neighbor-block proposal over the aggregated graph
    std::int32_t propose_node_target(std::int32_t i, rng_t& rng) const {
        std::int32_t C = num_node_groups();
        if (adj_[i].empty())
            return std::uniform_int_distribution<std::int32_t>(0, C)(rng);
        std::int64_t deg = 0;
        for (const auto& [j, a] : adj_[i]) deg += a;
        std::int64_t pick = std::uniform_int_distribution<std::int64_t>(0, deg - 1)(rng);
        std::int32_t t = -1;
        std::int64_t acc = 0;
        for (const auto& [j, a] : adj_[i]) {
            acc += a;
            if (pick < acc) {
                t = c_[j];
                break;
            }
        }
        EdgeBlocks b = EdgeBlocks::from(es_, c_);
        std::int64_t e_t = b.endpoint[t] + (es_.directed ? b.endpoint_in[t] : 0);
        double eps = cfg_.base.epsilon;
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        if (u01(rng) < eps * C / (eps * C + static_cast<double>(e_t)))
            return std::uniform_int_distribution<std::int32_t>(0, C)(rng);
        std::vector<std::pair<std::int32_t, std::int64_t>> nbr;
        std::int64_t tot = 0;
        for (const auto& [rs, cnt] : b.m) {
            auto [r, s] = rs;
            if (r == t) {
                nbr.emplace_back(s, cnt);
                tot += cnt;
            }
            if (s == t && r != t) {
                nbr.emplace_back(r, cnt);
                tot += cnt;
            }
        }
        if (tot == 0) return std::uniform_int_distribution<std::int32_t>(0, C)(rng);
        std::int64_t pick2 = std::uniform_int_distribution<std::int64_t>(0, tot - 1)(rng);
        acc = 0;
        for (const auto& [g, w] : nbr) {
            acc += w;
            if (pick2 < acc) return g;
        }
        return nbr.back().first;
    }

  private:
    const EdgeStream& es_;
    LogComb& comb_;
    TemporalFitConfig cfg_;
    std::vector<std::int32_t> c_;
    std::vector<std::vector<std::pair<std::int32_t, std::int64_t>>> adj_;
    std::vector<std::uint8_t> frozen_nodes_;
    detail::LabelGroupMemory labels_;
    double total_ = 0;
};

// Alternating maximization of the joint likelihood: greedy sweeps over node
// memberships with the label partition held fixed, label-chain fits between
// phases, and a merge ladder on the node groups that proceeds one merge at a
// time near the bottom so every small C is visited.
inline TemporalFitResult joint_fit(const EdgeStream& es, const TemporalFitConfig& cfg,
                                   LogComb& comb) {
    cfg.base.validate();
    if (cfg.order < 0) throw config_error("temporal order must be >= 0");
    auto t_start = std::chrono::steady_clock::now();

    double best_total = std::numeric_limits<double>::infinity();
    std::vector<std::int32_t> best_c;
    detail::LabelGroupMemory best_labels;
    SweepStats stats;

    for (int restart = 0; restart < cfg.base.restarts; ++restart) {
        rng_t rng(substream_seed(cfg.base.seed, 7000 + static_cast<std::uint64_t>(restart)));
        std::vector<std::int32_t> c0(es.node_count());
        for (std::size_t i = 0; i < c0.size(); ++i) c0[i] = static_cast<std::int32_t>(i);
        TemporalState st(es, comb, cfg, std::move(c0));
        auto offer = [&]() {
            std::int32_t best_C = 0;
            for (auto g : best_c) best_C = std::max(best_C, g + 1);
            bool better = st.total() < best_total - 1e-12;
            bool tie_simpler = std::abs(st.total() - best_total) <= 1e-9 &&
                               st.num_node_groups() < best_C;
            if (better || tie_simpler) {
                best_total = st.total();
                best_c = st.node_groups();
                best_labels = st.label_groups();
            }
        };
        int level = 0;
        while (true) {
            std::int32_t C = st.num_node_groups();
            st.label_phase(substream_seed(cfg.base.seed, 9000 + restart * 131 + level));
            // full sweep counts matter near the bottom of the ladder; the
            // coarse upper levels only need rough placement
            int sweeps = C > 12 ? std::max(2, cfg.base.sweeps_per_level / 3)
                                : cfg.base.sweeps_per_level;
            for (int s = 0; s < sweeps; ++s) st.node_sweep(rng, stats);
            st.label_phase(substream_seed(cfg.base.seed, 11000 + restart * 131 + level));
            offer();
            C = st.num_node_groups();
            if (C <= 1) break;
            std::int32_t target =
                C > 6 ? static_cast<std::int32_t>(std::floor(C / cfg.base.sigma_levels))
                      : C - 1;
            target = std::max<std::int32_t>(1, target);
            if (C > 12) {
                st.merge_round(target, cfg.base.merge_candidates, rng);
            } else {
                while (st.num_node_groups() > target) {
                    if (!st.merge_one(cfg.base.merge_candidates, rng)) break;
                    st.label_phase(substream_seed(cfg.base.seed, 13000 + restart * 131 + level));
                    offer();
                }
            }
            st.label_phase(substream_seed(cfg.base.seed, 14000 + restart * 131 + level));
            offer();
            level += 1;
        }
        // polish from the best joint state seen so far
        st.set_assignment(best_c);
        st.set_label_groups(best_labels);
        st.label_phase(substream_seed(cfg.base.seed, 15000 + restart));
        for (int s = 0; s < cfg.base.sweeps_per_level; ++s) st.node_sweep(rng, stats);
        st.label_phase(substream_seed(cfg.base.seed, 16000 + restart));
        offer();
    }

    // final assembly at the best joint state
    TemporalFitResult out;
    out.seed = cfg.base.seed;
    out.node_groups = best_c;
    out.num_node_groups = 0;
    for (auto g : best_c) out.num_node_groups = std::max(out.num_node_groups, g + 1);
    out.accept_rate = stats.proposed ? static_cast<double>(stats.accepted) / stats.proposed : 0;

    if (cfg.order >= 1 && es.edge_count() > cfg.order) {
        auto lc = label_sequence(es, best_c, cfg.order, cfg.base.boundary);
        std::vector<std::int32_t> tok, mem;
        best_labels.materialize(lc, tok, mem, cfg.unified_labels);
        PriorConfig pcfg{cfg.base.k_prior, Units::nats};
        out.label_token_groups = tok;
        out.label_memory_groups = mem;
        out.label_pairs = lc.pairs;
        out.breakdown = temporal_dl(es, best_c, tok, mem, cfg.order, pcfg, comb,
                                    cfg.unified_labels, cfg.base.boundary);
        Partition used = cfg.unified_labels ? Partition::make_unified(lc.chain, tok)
                                            : Partition::make(lc.chain, tok, mem);
        out.num_label_token_groups = used.num_token_groups;
        out.num_label_memory_groups = used.num_memory_groups;
        if (cfg.unified_labels) out.label_memory_groups = used.memory_group;
    } else {
        EdgeBlocks b = EdgeBlocks::from(es, best_c);
        DlBreakdown bd;
        bd.static_net_term = static_term(es, b, comb) +
                             partition_prior(b.occupancy, es.node_count(), b.num_groups, comb);
        bd.total = bd.sum();
        out.breakdown = bd;
    }
    out.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return out;
}

}  // namespace blockmc
