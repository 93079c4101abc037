#pragma once

#include <algorithm>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "blockmc/chain.hpp"
#include "blockmc/dl.hpp"
#include "blockmc/logcomb.hpp"
#include "blockmc/waiting.hpp"

namespace blockmc {

enum class WaitMode { none, per_memory, per_group };

struct StateOptions {
    KPriorMode k_prior = KPriorMode::degree_hyperprior;
    bool unified = false;
    WaitMode wait_mode = WaitMode::none;
    double wait_alpha = 1.0;
    double wait_beta = 1.0;
};

// Mutable inference state over one chain: partitions, block aggregates and
// cached description-length pieces, with O(local) move deltas.  Group labels
// stay contiguous; emptied groups are compacted away by swapping in the last
// label.  One state is owned by exactly one worker.
class ChainState {
  public:
    ChainState(const ChainCounts& chain, LogComb& comb, StateOptions opt,
               std::vector<std::int32_t> tok_assign, std::vector<std::int32_t> mem_assign = {})
        : chain_(chain), comb_(comb), opt_(opt) {
        comb_.ensure_factorials(static_cast<std::size_t>(chain.total_transitions) +
                                static_cast<std::size_t>(chain.alphabet_size) +
                                static_cast<std::size_t>(chain.memory_count()) + 64);
        if (opt_.unified && chain_.order != 1)
            throw config_error("unified mode requires order 1");
        tok_g_ = std::move(tok_assign);
        if (static_cast<std::int32_t>(tok_g_.size()) != chain_.alphabet_size)
            throw invariant_error("token assignment does not cover the alphabet");
        if (opt_.unified) {
            mem_of_sym_.assign(chain_.alphabet_size, -1);
            for (std::int32_t m = 0; m < chain_.memory_count(); ++m)
                mem_of_sym_[chain_.memories[m].window[0]] = m;
            mem_g_.resize(chain_.memory_count());
            for (std::int32_t m = 0; m < chain_.memory_count(); ++m)
                mem_g_[m] = tok_g_[chain_.memories[m].window[0]];
        } else {
            mem_g_ = std::move(mem_assign);
            if (static_cast<std::int32_t>(mem_g_.size()) != chain_.memory_count())
                throw invariant_error("memory assignment does not cover the memories");
        }
        if (opt_.wait_mode != WaitMode::none) {
            wait_stats_ = WaitStats::from_chain(chain_, opt_.wait_alpha, opt_.wait_beta);
            wait_stats_.validate();
        }
        frozen_tok_.assign(chain_.alphabet_size, 0);
        frozen_mem_.assign(chain_.memory_count(), 0);
        rebuild();
    }

    const ChainCounts& chain() const { return chain_; }
    LogComb& comb() { return comb_; }
    const StateOptions& options() const { return opt_; }
    bool unified() const { return opt_.unified; }
    std::int32_t num_token_groups() const { return Bn_; }
    std::int32_t num_memory_groups() const { return opt_.unified ? Bn_ : Bm_; }
    const std::vector<std::int32_t>& token_groups() const { return tok_g_; }
    const std::vector<std::int32_t>& memory_groups() const { return mem_g_; }
    std::vector<std::uint8_t>& frozen_tokens() { return frozen_tok_; }
    std::vector<std::uint8_t>& frozen_memories() { return frozen_mem_; }

    double total() const {
        return -P_cells_ - P_kconst_ + P_etok_ + P_emem_ + P_kprior_ + P_ers_ + P_es_ +
               P_pptok_ + P_ppmem_ + P_wait_;
    }

    DlBreakdown breakdown() const {
        DlBreakdown b;
        b.seq_term = -P_cells_ - P_kconst_ + P_etok_ + P_emem_;
        b.k_prior = P_kprior_;
        b.ers_prior = P_ers_;
        b.es_prior = P_es_;
        b.token_partition_prior = P_pptok_;
        b.memory_partition_prior = P_ppmem_;
        if (opt_.wait_mode != WaitMode::none) b.wait_term = P_wait_;
        b.total = b.sum();
        return b;
    }

    Partition snapshot() const {
        if (opt_.unified) return Partition::make_unified(chain_, tok_g_);
        return Partition::make(chain_, tok_g_, mem_g_);
    }

    // recompute every aggregate from the assignments (constructor path)
    void rebuild() {
        Bn_ = 0;
        for (auto g : tok_g_) Bn_ = std::max(Bn_, g + 1);
        if (opt_.unified) {
            Bm_ = Bn_;
        } else {
            Bm_ = 0;
            for (auto g : mem_g_) Bm_ = std::max(Bm_, g + 1);
        }
        n_tok_.assign(Bn_, 0);
        members_tok_.assign(Bn_, {});
        pos_tok_.assign(chain_.alphabet_size, -1);
        for (std::int32_t x = 0; x < chain_.alphabet_size; ++x) {
            n_tok_[tok_g_[x]] += 1;
            pos_tok_[x] = static_cast<std::int32_t>(members_tok_[tok_g_[x]].size());
            members_tok_[tok_g_[x]].push_back(x);
        }
        n_mem_.assign(Bm_, 0);
        members_mem_.assign(Bm_, {});
        pos_mem_.assign(chain_.memory_count(), -1);
        for (std::int32_t m = 0; m < chain_.memory_count(); ++m) {
            n_mem_[mem_g_[m]] += 1;
            pos_mem_[m] = static_cast<std::int32_t>(members_mem_[mem_g_[m]].size());
            members_mem_[mem_g_[m]].push_back(m);
        }
        for (auto c : n_tok_)
            if (c == 0) throw invariant_error("empty token group in assignment");
        if (!opt_.unified)
            for (auto c : n_mem_)
                if (c == 0) throw invariant_error("empty memory group in assignment");

        row_.assign(Bn_, {});
        col_.assign(Bm_, {});
        e_tok_.assign(Bn_, 0);
        e_mem_.assign(Bm_, 0);
        for (std::int32_t m = 0; m < chain_.memory_count(); ++m) {
            std::int32_t s = mem_g_[m];
            for (const auto& [x, a] : chain_.mem_adj[m]) {
                std::int32_t r = tok_g_[x];
                row_[r][s] += a;
                col_[s][r] += a;
                e_tok_[r] += a;
                e_mem_[s] += a;
            }
        }
        hist_.assign(Bn_, {});
        hsum_.assign(Bn_, 0.0);
        for (std::int32_t x = 0; x < chain_.alphabet_size; ++x)
            hist_[tok_g_[x]][chain_.token_emissions[x]] += 1;
        for (std::int32_t r = 0; r < Bn_; ++r)
            for (const auto& [k, c] : hist_[r]) hsum_[r] += comb_.log_factorial(c);
        if (opt_.wait_mode == WaitMode::per_group) {
            wsum_.assign(Bm_, 0.0);
            for (std::int32_t m = 0; m < chain_.memory_count(); ++m)
                wsum_[mem_g_[m]] += wait_stats_.total[m];
        }
        refresh();
    }

    // recompute the cached DL pieces from the aggregates
    void refresh() {
        P_cells_ = 0;
        for (const auto& r : row_)
            for (const auto& [s, e] : r) P_cells_ += comb_.log_factorial(e);
        P_etok_ = 0;
        for (auto e : e_tok_) P_etok_ += comb_.log_factorial(e);
        P_emem_ = 0;
        for (auto e : e_mem_) P_emem_ += comb_.log_factorial(e);
        P_kconst_ = 0;
        for (auto k : chain_.token_emissions) P_kconst_ += comb_.log_factorial(k);
        P_kprior_ = 0;
        for (std::int32_t r = 0; r < Bn_; ++r)
            P_kprior_ += kp_group(n_tok_[r], e_tok_[r], hsum_[r]);
        P_ers_ = 0;
        for (auto e : e_mem_) P_ers_ += comb_.log_multiset(Bn_, e);
        P_es_ = comb_.log_multiset(Bm_, chain_.total_transitions);
        P_pptok_ = comb_.log_factorial(chain_.alphabet_size) +
                   comb_.log_binom(chain_.alphabet_size - 1, Bn_ - 1);
        for (auto n : n_tok_) P_pptok_ -= comb_.log_factorial(n);
        if (opt_.unified) {
            P_ppmem_ = 0;
        } else {
            P_ppmem_ = comb_.log_factorial(chain_.memory_count()) +
                       comb_.log_binom(chain_.memory_count() - 1, Bm_ - 1);
            for (auto n : n_mem_) P_ppmem_ -= comb_.log_factorial(n);
        }
        P_wait_ = 0;
        if (opt_.wait_mode == WaitMode::per_memory) {
            P_wait_ = wait_evidence_per_memory(wait_stats_);
        } else if (opt_.wait_mode == WaitMode::per_group) {
            for (std::int32_t s = 0; s < Bm_; ++s)
                P_wait_ += wait_group_term(e_mem_[s], wsum_[s], opt_.wait_alpha, opt_.wait_beta);
        }
    }

    // ---- single-item moves --------------------------------------------------

    // Sigma(after) - Sigma(before) for moving one item; target == B proposes a
    // fresh group.  Pure; apply_move performs the same arithmetic and mutates.
    double delta_move(bool token_side, std::int32_t item, std::int32_t target) const {
        return const_cast<ChainState*>(this)->move_impl(token_side, item, target, false);
    }

    void apply_move(bool token_side, std::int32_t item, std::int32_t target) {
        move_impl(token_side, item, target, true);
    }

    // ---- merges -------------------------------------------------------------

    double delta_merge(bool token_side, std::int32_t g_from, std::int32_t g_to) const {
        return const_cast<ChainState*>(this)->merge_impl(token_side, g_from, g_to, false);
    }

    void apply_merge(bool token_side, std::int32_t g_from, std::int32_t g_to) {
        merge_impl(token_side, g_from, g_to, true);
    }

    // ---- proposals ----------------------------------------------------------

    // neighbor-block proposal with epsilon-uniform mixing; returns a group in
    // [0, B] where B means "fresh"
    std::int32_t propose_target(bool token_side, std::int32_t item, double epsilon,
                                rng_t& rng) const {
        std::int32_t B = side_groups(token_side);
        std::int64_t deg = item_weight(token_side, item);
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        if (deg == 0) {
            return static_cast<std::int32_t>(
                std::uniform_int_distribution<std::int32_t>(0, B)(rng));
        }
        // random incident transition -> opposite-side group t
        std::int64_t pick = std::uniform_int_distribution<std::int64_t>(0, deg - 1)(rng);
        std::int32_t t = -1;
        std::int64_t acc = 0;
        for_item_adjacency(token_side, item, [&](std::int32_t opp_group, std::int64_t c) {
            if (t >= 0) return;
            acc += c;
            if (pick < acc) t = opp_group;
        });
        std::int64_t e_t = opposite_margin(token_side, t);
        double r_uniform = epsilon * B / (epsilon * B + static_cast<double>(e_t));
        if (u01(rng) < r_uniform)
            return std::uniform_int_distribution<std::int32_t>(0, B)(rng);
        // adopt a group adjacent to t with probability proportional to counts
        const auto& through = token_side ? col_[t] : row_[t];
        std::int64_t pick2 = std::uniform_int_distribution<std::int64_t>(0, e_t - 1)(rng);
        acc = 0;
        for (const auto& [g, e] : through) {
            acc += e;
            if (pick2 < acc) return g;
        }
        return static_cast<std::int32_t>(through.begin()->first);  // unreachable
    }

    // probability that propose_target(...) yields `target` from the current
    // state; target == B queries the fresh-group outcome
    double proposal_prob(bool token_side, std::int32_t item, std::int32_t target,
                         double epsilon) const {
        std::int32_t B = side_groups(token_side);
        std::int64_t deg = item_weight(token_side, item);
        if (deg == 0) return 1.0 / (B + 1);
        double p = 0;
        for_item_adjacency(token_side, item, [&](std::int32_t t, std::int64_t c) {
            double w = static_cast<double>(c) / static_cast<double>(deg);
            std::int64_t e_t = opposite_margin(token_side, t);
            double r_uniform = epsilon * B / (epsilon * B + static_cast<double>(e_t));
            double term = r_uniform / (B + 1);
            if (target < B && e_t > 0) {
                const auto& through = token_side ? col_[t] : row_[t];
                auto it = through.find(target);
                std::int64_t e_rt = (it == through.end()) ? 0 : it->second;
                term += (1.0 - r_uniform) * static_cast<double>(e_rt) /
                        static_cast<double>(e_t);
            }
            p += w * term;
        });
        return p;
    }

    // ---- debug oracle --------------------------------------------------------

    // rebuild a partition snapshot and compare against total_dl from scratch
    double scratch_total() const {
        Partition p = snapshot();
        PriorConfig cfg{opt_.k_prior, Units::nats};
        double t = total_dl(chain_, p, cfg, comb_).total;
        if (opt_.wait_mode == WaitMode::per_memory) t += wait_evidence_per_memory(wait_stats_);
        if (opt_.wait_mode == WaitMode::per_group)
            t += wait_evidence_per_group(wait_stats_, mem_g_, num_memory_groups());
        return t;
    }

    const WaitStats& wait_stats() const { return wait_stats_; }

  private:
    double lf(std::int64_t m) const { return comb_.log_factorial(m); }

    double kp_group(std::int64_t n, std::int64_t e, double hsum) const {
        if (n == 0) return 0.0;
        if (opt_.k_prior == KPriorMode::uniform) return comb_.log_multiset(n, e);
        return lf(n) - hsum + comb_.log_q(e, n);
    }

    std::int32_t side_groups(bool token_side) const {
        return token_side || opt_.unified ? Bn_ : Bm_;
    }

    std::int64_t item_weight(bool token_side, std::int32_t item) const {
        if (opt_.unified) {
            std::int64_t w = chain_.token_emissions[item];
            std::int32_t m = mem_of_sym_[item];
            if (m >= 0) w += chain_.memory_out[m];
            return w;
        }
        return token_side ? chain_.token_emissions[item] : chain_.memory_out[item];
    }

    std::int64_t opposite_margin(bool token_side, std::int32_t t) const {
        if (opt_.unified) return token_side ? e_mem_[t] : e_tok_[t];
        return token_side ? e_mem_[t] : e_tok_[t];
    }

    // visit (opposite-side group, transition count) pairs of one item; in
    // unified mode both roles are visited
    template <class F>
    void for_item_adjacency(bool token_side, std::int32_t item, F&& f) const {
        if (opt_.unified) {
            for (const auto& [m, c] : chain_.tok_adj[item]) f(mem_g_[m], c);
            std::int32_t mm = mem_of_sym_[item];
            if (mm >= 0)
                for (const auto& [x, c] : chain_.mem_adj[mm]) f(tok_g_[x], c);
            return;
        }
        if (token_side)
            for (const auto& [m, c] : chain_.tok_adj[item]) f(mem_g_[m], c);
        else
            for (const auto& [x, c] : chain_.mem_adj[item]) f(tok_g_[x], c);
    }

    static std::uint64_t ckey(std::int32_t r, std::int32_t s) {
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(r)) << 32) |
               static_cast<std::uint32_t>(s);
    }

    std::int64_t cell(std::int32_t r, std::int32_t s) const {
        if (r >= Bn_ || s >= Bm_) return 0;
        auto it = row_[r].find(s);
        return it == row_[r].end() ? 0 : it->second;
    }

    void cell_add(std::int32_t r, std::int32_t s, std::int64_t d) {
        if (d == 0) return;
        auto& v = row_[r][s];
        v += d;
        if (v == 0) row_[r].erase(s);
        auto& w = col_[s][r];
        w += d;
        if (w == 0) col_[s].erase(r);
    }

    // net cell deltas of one candidate change, gathered into a flat list
    struct CellDeltas {
        std::vector<std::pair<std::uint64_t, std::int64_t>> v;
        void add(std::int32_t r, std::int32_t s, std::int64_t d) {
            std::uint64_t k = ckey(r, s);
            for (auto& [kk, dd] : v)
                if (kk == k) {
                    dd += d;
                    return;
                }
            v.emplace_back(k, d);
        }
    };

    // ---- the move engine ----------------------------------------------------

    double move_impl(bool token_side, std::int32_t item, std::int32_t target, bool apply) {
        if (opt_.unified) return unified_move_impl(item, target, apply);
        std::int32_t B = token_side ? Bn_ : Bm_;
        auto& assign = token_side ? tok_g_ : mem_g_;
        std::int32_t from = assign[item];
        if (target == from) return 0.0;
        if (target > B || target < 0) throw invariant_error("move target out of range");
        auto& occ = token_side ? n_tok_ : n_mem_;
        bool fresh = (target == B);
        bool death = (occ[from] == 1);
        if (fresh && death) return 0.0;  // relabeling only
        std::int32_t Bnew = B + (fresh ? 1 : 0) - (death ? 1 : 0);

        std::int64_t weight = token_side ? chain_.token_emissions[item] : chain_.memory_out[item];

        // cells
        CellDeltas cd;
        for_item_adjacency(token_side, item, [&](std::int32_t opp, std::int64_t c) {
            if (token_side) {
                cd.add(from, opp, -c);
                cd.add(target, opp, +c);
            } else {
                cd.add(opp, from, -c);
                cd.add(opp, target, +c);
            }
        });
        double dP_cells = 0;
        for (const auto& [k, d] : cd.v) {
            auto r = static_cast<std::int32_t>(k >> 32);
            auto s = static_cast<std::int32_t>(k & 0xffffffff);
            std::int64_t old = (fresh && ((token_side && r == target) || (!token_side && s == target)))
                                   ? 0
                                   : cell(r, s);
            dP_cells += lf(old + d) - lf(old);
        }

        double dP_etok = 0, dP_emem = 0, dP_kprior = 0, dP_ers = 0, dP_es = 0;
        double dP_pptok = 0, dP_ppmem = 0, dP_wait = 0;
        double new_ers_total = 0;
        std::int64_t e_from_old, e_to_old, n_from_old, n_to_old;
        if (token_side) {
            e_from_old = e_tok_[from];
            e_to_old = fresh ? 0 : e_tok_[target];
            n_from_old = n_tok_[from];
            n_to_old = fresh ? 0 : n_tok_[target];
            dP_etok = lf(e_from_old - weight) - lf(e_from_old) + lf(e_to_old + weight) -
                      lf(e_to_old);
            // k-prior via group-term replacement
            std::int64_t kx = chain_.token_emissions[item];
            double hs_from_new = hsum_[from] + lf(hist_cnt(from, kx) - 1) - lf(hist_cnt(from, kx));
            double hs_to_new =
                (fresh ? 0.0 : hsum_[target]) + lf(hist_cnt_or0(target, kx, fresh) + 1) -
                lf(hist_cnt_or0(target, kx, fresh));
            double kp_old = kp_group(n_from_old, e_from_old, hsum_[from]) +
                            (fresh ? 0.0 : kp_group(n_to_old, e_to_old, hsum_[target]));
            double kp_new =
                (death ? 0.0 : kp_group(n_from_old - 1, e_from_old - weight, hs_from_new)) +
                kp_group(n_to_old + 1, e_to_old + weight, hs_to_new);
            dP_kprior = kp_new - kp_old;
            if (Bnew != B) {
                for (auto e : e_mem_) new_ers_total += comb_.log_multiset(Bnew, e);
                dP_ers = new_ers_total - P_ers_;
            }
            dP_pptok = lf(n_from_old) - lf(n_from_old - 1) + lf(n_to_old) - lf(n_to_old + 1) +
                       comb_.log_binom(chain_.alphabet_size - 1, Bnew - 1) -
                       comb_.log_binom(chain_.alphabet_size - 1, B - 1);
        } else {
            e_from_old = e_mem_[from];
            e_to_old = fresh ? 0 : e_mem_[target];
            n_from_old = n_mem_[from];
            n_to_old = fresh ? 0 : n_mem_[target];
            dP_emem = lf(e_from_old - weight) - lf(e_from_old) + lf(e_to_old + weight) -
                      lf(e_to_old);
            dP_ers = comb_.log_multiset(Bn_, e_from_old - weight) -
                     comb_.log_multiset(Bn_, e_from_old) +
                     comb_.log_multiset(Bn_, e_to_old + weight) -
                     comb_.log_multiset(Bn_, e_to_old);
            if (Bnew != B)
                dP_es = comb_.log_multiset(Bnew, chain_.total_transitions) -
                        comb_.log_multiset(Bm_, chain_.total_transitions);
            dP_ppmem = lf(n_from_old) - lf(n_from_old - 1) + lf(n_to_old) - lf(n_to_old + 1) +
                       comb_.log_binom(chain_.memory_count() - 1, Bnew - 1) -
                       comb_.log_binom(chain_.memory_count() - 1, B - 1);
            if (opt_.wait_mode == WaitMode::per_group) {
                double w_item = wait_stats_.total[item];
                double a = opt_.wait_alpha, beta = opt_.wait_beta;
                double w_from_old = wsum_[from];
                double w_to_old = fresh ? 0.0 : wsum_[target];
                dP_wait = wait_group_term(e_from_old - weight, w_from_old - w_item, a, beta) -
                          wait_group_term(e_from_old, w_from_old, a, beta) +
                          wait_group_term(e_to_old + weight, w_to_old + w_item, a, beta) -
                          wait_group_term(e_to_old, w_to_old, a, beta);
                if (death)  // the emptied group's zero term is exact zero
                    dP_wait += 0.0;
            }
        }

        double delta = -dP_cells + dP_etok + dP_emem + dP_kprior + dP_ers + dP_es + dP_pptok +
                       dP_ppmem + dP_wait;
        if (!apply) return delta;

        // mutate
        if (fresh) push_group(token_side);
        for (const auto& [k, d] : cd.v)
            cell_add(static_cast<std::int32_t>(k >> 32),
                     static_cast<std::int32_t>(k & 0xffffffff), d);
        if (token_side) {
            e_tok_[from] -= weight;
            e_tok_[target] += weight;
            std::int64_t kx = chain_.token_emissions[item];
            hist_take(from, kx);
            hist_put(target, kx);
            n_tok_[from] -= 1;
            n_tok_[target] += 1;
            member_move(members_tok_, pos_tok_, item, from, target);
            tok_g_[item] = target;
        } else {
            e_mem_[from] -= weight;
            e_mem_[target] += weight;
            n_mem_[from] -= 1;
            n_mem_[target] += 1;
            member_move(members_mem_, pos_mem_, item, from, target);
            mem_g_[item] = target;
            if (opt_.wait_mode == WaitMode::per_group) {
                wsum_[from] -= wait_stats_.total[item];
                wsum_[target] += wait_stats_.total[item];
            }
        }
        P_cells_ += dP_cells;
        P_etok_ += dP_etok;
        P_emem_ += dP_emem;
        P_kprior_ += dP_kprior;
        if (token_side && Bnew != B)
            P_ers_ = new_ers_total;
        else
            P_ers_ += dP_ers;
        P_es_ += dP_es;
        P_pptok_ += dP_pptok;
        P_ppmem_ += dP_ppmem;
        P_wait_ += dP_wait;
        if (death) drop_group(token_side, from);
        return delta;
    }

    double unified_move_impl(std::int32_t sym, std::int32_t target, bool apply) {
        std::int32_t from = tok_g_[sym];
        if (target == from) return 0.0;
        if (target > Bn_ || target < 0) throw invariant_error("move target out of range");
        bool fresh = (target == Bn_);
        bool death = (n_tok_[from] == 1);
        if (fresh && death) return 0.0;
        std::int32_t Bnew = Bn_ + (fresh ? 1 : 0) - (death ? 1 : 0);
        std::int32_t mm = mem_of_sym_[sym];
        std::int64_t kx = chain_.token_emissions[sym];
        std::int64_t am = (mm >= 0) ? chain_.memory_out[mm] : 0;
        std::int64_t self = 0;
        if (mm >= 0) self = chain_.count(sym, mm);

        CellDeltas cd;
        for (const auto& [m, c] : chain_.tok_adj[sym]) {
            if (m == mm) continue;  // handled as the joint self part
            cd.add(from, mem_g_[m], -c);
            cd.add(target, mem_g_[m], +c);
        }
        if (mm >= 0) {
            for (const auto& [x, c] : chain_.mem_adj[mm]) {
                if (x == sym) continue;
                cd.add(tok_g_[x], from, -c);
                cd.add(tok_g_[x], target, +c);
            }
            if (self > 0) {
                cd.add(from, from, -self);
                cd.add(target, target, +self);
            }
        }
        double dP_cells = 0;
        for (const auto& [k, d] : cd.v) {
            auto r = static_cast<std::int32_t>(k >> 32);
            auto s = static_cast<std::int32_t>(k & 0xffffffff);
            std::int64_t old = (fresh && (r == target || s == target)) ? 0 : cell(r, s);
            dP_cells += lf(old + d) - lf(old);
        }

        std::int64_t e_from = e_tok_[from], e_to = fresh ? 0 : e_tok_[target];
        std::int64_t f_from = e_mem_[from], f_to = fresh ? 0 : e_mem_[target];
        std::int64_t n_from = n_tok_[from], n_to = fresh ? 0 : n_tok_[target];
        double dP_etok = lf(e_from - kx) - lf(e_from) + lf(e_to + kx) - lf(e_to);
        double dP_emem = lf(f_from - am) - lf(f_from) + lf(f_to + am) - lf(f_to);

        double hs_from_new = hsum_[from] + lf(hist_cnt(from, kx) - 1) - lf(hist_cnt(from, kx));
        double hs_to_new = (fresh ? 0.0 : hsum_[target]) +
                           lf(hist_cnt_or0(target, kx, fresh) + 1) -
                           lf(hist_cnt_or0(target, kx, fresh));
        double kp_old = kp_group(n_from, e_from, hsum_[from]) +
                        (fresh ? 0.0 : kp_group(n_to, e_to, hsum_[target]));
        double kp_new = (death ? 0.0 : kp_group(n_from - 1, e_from - kx, hs_from_new)) +
                        kp_group(n_to + 1, e_to + kx, hs_to_new);
        double dP_kprior = kp_new - kp_old;

        // ers: both the margins and possibly B change
        double dP_ers, new_ers_total = 0;
        if (Bnew != Bn_) {
            // evaluate over the post-move margin multiset
            for (std::int32_t s = 0; s < Bm_; ++s) {
                std::int64_t e = e_mem_[s];
                if (s == from) e -= am;
                if (!fresh && s == target) e += am;
                if (death && s == from) continue;
                new_ers_total += comb_.log_multiset(Bnew, e);
            }
            if (fresh) new_ers_total += comb_.log_multiset(Bnew, am);
            dP_ers = new_ers_total - P_ers_;
        } else {
            dP_ers = comb_.log_multiset(Bn_, f_from - am) - comb_.log_multiset(Bn_, f_from) +
                     comb_.log_multiset(Bn_, f_to + am) - comb_.log_multiset(Bn_, f_to);
        }
        double dP_es = (Bnew != Bn_)
                           ? comb_.log_multiset(Bnew, chain_.total_transitions) -
                                 comb_.log_multiset(Bn_, chain_.total_transitions)
                           : 0.0;
        double dP_pptok = lf(n_from) - lf(n_from - 1) + lf(n_to) - lf(n_to + 1) +
                          comb_.log_binom(chain_.alphabet_size - 1, Bnew - 1) -
                          comb_.log_binom(chain_.alphabet_size - 1, Bn_ - 1);
        double dP_wait = 0;
        if (opt_.wait_mode == WaitMode::per_group) {
            double wm = (mm >= 0) ? wait_stats_.total[mm] : 0.0;
            double a = opt_.wait_alpha, beta = opt_.wait_beta;
            dP_wait = wait_group_term(f_from - am, wsum_[from] - wm, a, beta) -
                      wait_group_term(f_from, wsum_[from], a, beta) +
                      wait_group_term(f_to + am, (fresh ? 0.0 : wsum_[target]) + wm, a, beta) -
                      wait_group_term(f_to, fresh ? 0.0 : wsum_[target], a, beta);
        }

        double delta = -dP_cells + dP_etok + dP_emem + dP_kprior + dP_ers + dP_es + dP_pptok +
                       dP_wait;
        if (!apply) return delta;

        if (fresh) push_group(true);  // unified: pushes both sides
        for (const auto& [k, d] : cd.v)
            cell_add(static_cast<std::int32_t>(k >> 32),
                     static_cast<std::int32_t>(k & 0xffffffff), d);
        e_tok_[from] -= kx;
        e_tok_[target] += kx;
        e_mem_[from] -= am;
        e_mem_[target] += am;
        hist_take(from, kx);
        hist_put(target, kx);
        n_tok_[from] -= 1;
        n_tok_[target] += 1;
        member_move(members_tok_, pos_tok_, sym, from, target);
        tok_g_[sym] = target;
        if (mm >= 0) {
            mem_g_[mm] = target;
            if (opt_.wait_mode == WaitMode::per_group) {
                wsum_[from] -= wait_stats_.total[mm];
                wsum_[target] += wait_stats_.total[mm];
            }
        }
        P_cells_ += dP_cells;
        P_etok_ += dP_etok;
        P_emem_ += dP_emem;
        P_kprior_ += dP_kprior;
        if (Bnew != Bn_)
            P_ers_ = new_ers_total;
        else
            P_ers_ += dP_ers;
        P_es_ += dP_es;
        P_pptok_ += dP_pptok;
        P_wait_ += dP_wait;
        if (death) drop_group(true, from);
        return delta;
    }

    // ---- merges -------------------------------------------------------------

    double merge_impl(bool token_side, std::int32_t g, std::int32_t h, bool apply) {
        if (g == h) return 0.0;
        if (opt_.unified) return unified_merge_impl(g, h, apply);
        double delta;
        if (token_side) {
            double dP_cells = 0;
            for (const auto& [s, eg] : row_[g]) {
                std::int64_t eh = cell(h, s);
                dP_cells += lf(eg + eh) - lf(eg) - lf(eh);
            }
            double dP_etok = lf(e_tok_[g] + e_tok_[h]) - lf(e_tok_[g]) - lf(e_tok_[h]);
            double hs_new = hsum_[h];
            for (const auto& [k, c] : hist_[g]) {
                auto it = hist_[h].find(k);
                std::int64_t ch = (it == hist_[h].end()) ? 0 : it->second;
                hs_new += lf(ch + c) - lf(ch);
            }
            double dP_kprior = kp_group(n_tok_[g] + n_tok_[h], e_tok_[g] + e_tok_[h], hs_new) -
                               kp_group(n_tok_[g], e_tok_[g], hsum_[g]) -
                               kp_group(n_tok_[h], e_tok_[h], hsum_[h]);
            double new_ers = 0;
            for (auto e : e_mem_) new_ers += comb_.log_multiset(Bn_ - 1, e);
            double dP_ers = new_ers - P_ers_;
            double dP_pptok = lf(n_tok_[g]) + lf(n_tok_[h]) - lf(n_tok_[g] + n_tok_[h]) +
                              comb_.log_binom(chain_.alphabet_size - 1, Bn_ - 2) -
                              comb_.log_binom(chain_.alphabet_size - 1, Bn_ - 1);
            delta = -dP_cells + dP_etok + dP_kprior + dP_ers + dP_pptok;
            if (!apply) return delta;
            // fold row g into h
            for (const auto& [s, eg] : row_[g]) {
                auto& vh = row_[h][s];
                vh += eg;
                col_[s].erase(g);
                col_[s][h] = vh;
            }
            row_[g].clear();
            e_tok_[h] += e_tok_[g];
            e_tok_[g] = 0;
            for (const auto& [k, c] : hist_[g]) hist_[h][k] += c;
            hist_[g].clear();
            hsum_[h] = hs_new;
            hsum_[g] = 0;
            for (auto x : members_tok_[g]) {
                tok_g_[x] = h;
                pos_tok_[x] = static_cast<std::int32_t>(members_tok_[h].size());
                members_tok_[h].push_back(x);
            }
            n_tok_[h] += n_tok_[g];
            n_tok_[g] = 0;
            members_tok_[g].clear();
            P_cells_ += dP_cells;
            P_etok_ += dP_etok;
            P_kprior_ += dP_kprior;
            P_ers_ = new_ers;
            P_pptok_ += dP_pptok;
            drop_group(true, g);
        } else {
            double dP_cells = 0;
            for (const auto& [r, eg] : col_[g]) {
                std::int64_t eh = cell(r, h);
                dP_cells += lf(eg + eh) - lf(eg) - lf(eh);
            }
            double dP_emem = lf(e_mem_[g] + e_mem_[h]) - lf(e_mem_[g]) - lf(e_mem_[h]);
            double dP_ers = comb_.log_multiset(Bn_, e_mem_[g] + e_mem_[h]) -
                            comb_.log_multiset(Bn_, e_mem_[g]) -
                            comb_.log_multiset(Bn_, e_mem_[h]);
            double dP_es = comb_.log_multiset(Bm_ - 1, chain_.total_transitions) -
                           comb_.log_multiset(Bm_, chain_.total_transitions);
            double dP_ppmem = lf(n_mem_[g]) + lf(n_mem_[h]) - lf(n_mem_[g] + n_mem_[h]) +
                              comb_.log_binom(chain_.memory_count() - 1, Bm_ - 2) -
                              comb_.log_binom(chain_.memory_count() - 1, Bm_ - 1);
            double dP_wait = 0;
            if (opt_.wait_mode == WaitMode::per_group) {
                double a = opt_.wait_alpha, beta = opt_.wait_beta;
                dP_wait = wait_group_term(e_mem_[g] + e_mem_[h], wsum_[g] + wsum_[h], a, beta) -
                          wait_group_term(e_mem_[g], wsum_[g], a, beta) -
                          wait_group_term(e_mem_[h], wsum_[h], a, beta);
            }
            delta = -dP_cells + dP_emem + dP_ers + dP_es + dP_ppmem + dP_wait;
            if (!apply) return delta;
            for (const auto& [r, eg] : col_[g]) {
                auto& vh = col_[h][r];
                vh += eg;
                row_[r].erase(g);
                row_[r][h] = vh;
            }
            col_[g].clear();
            e_mem_[h] += e_mem_[g];
            e_mem_[g] = 0;
            for (auto m : members_mem_[g]) {
                mem_g_[m] = h;
                pos_mem_[m] = static_cast<std::int32_t>(members_mem_[h].size());
                members_mem_[h].push_back(m);
            }
            n_mem_[h] += n_mem_[g];
            n_mem_[g] = 0;
            members_mem_[g].clear();
            if (opt_.wait_mode == WaitMode::per_group) {
                wsum_[h] += wsum_[g];
                wsum_[g] = 0;
            }
            P_cells_ += dP_cells;
            P_emem_ += dP_emem;
            P_ers_ += dP_ers;
            P_es_ += dP_es;
            P_ppmem_ += dP_ppmem;
            P_wait_ += dP_wait;
            drop_group(false, g);
        }
        return delta;
    }

    double unified_merge_impl(std::int32_t g, std::int32_t h, bool apply) {
        // gather all cells touching g or h, fold labels, diff the pieces
        std::unordered_map<std::uint64_t, std::int64_t> old_cells, new_cells;
        auto collect = [&](std::int32_t r, std::int32_t s, std::int64_t e) {
            old_cells[ckey(r, s)] = e;
            std::int32_t rr = (r == g) ? h : r;
            std::int32_t ss = (s == g) ? h : s;
            new_cells[ckey(rr, ss)] += e;
        };
        for (std::int32_t gg : {g, h}) {
            for (const auto& [s, e] : row_[gg]) collect(gg, s, e);
            for (const auto& [r, e] : col_[gg])
                if (r != g && r != h) collect(r, gg, e);
        }
        double dP_cells = 0;
        for (const auto& [k, e] : new_cells) dP_cells += lf(e);
        for (const auto& [k, e] : old_cells) dP_cells -= lf(e);

        double dP_etok = lf(e_tok_[g] + e_tok_[h]) - lf(e_tok_[g]) - lf(e_tok_[h]);
        double dP_emem = lf(e_mem_[g] + e_mem_[h]) - lf(e_mem_[g]) - lf(e_mem_[h]);
        double hs_new = hsum_[h];
        for (const auto& [k, c] : hist_[g]) {
            auto it = hist_[h].find(k);
            std::int64_t ch = (it == hist_[h].end()) ? 0 : it->second;
            hs_new += lf(ch + c) - lf(ch);
        }
        double dP_kprior = kp_group(n_tok_[g] + n_tok_[h], e_tok_[g] + e_tok_[h], hs_new) -
                           kp_group(n_tok_[g], e_tok_[g], hsum_[g]) -
                           kp_group(n_tok_[h], e_tok_[h], hsum_[h]);
        double new_ers = 0;
        for (std::int32_t s = 0; s < Bm_; ++s) {
            if (s == g) continue;
            std::int64_t e = e_mem_[s] + (s == h ? e_mem_[g] : 0);
            new_ers += comb_.log_multiset(Bn_ - 1, e);
        }
        double dP_ers = new_ers - P_ers_;
        double dP_es = comb_.log_multiset(Bn_ - 1, chain_.total_transitions) -
                       comb_.log_multiset(Bn_, chain_.total_transitions);
        double dP_pptok = lf(n_tok_[g]) + lf(n_tok_[h]) - lf(n_tok_[g] + n_tok_[h]) +
                          comb_.log_binom(chain_.alphabet_size - 1, Bn_ - 2) -
                          comb_.log_binom(chain_.alphabet_size - 1, Bn_ - 1);
        double dP_wait = 0;
        if (opt_.wait_mode == WaitMode::per_group) {
            double a = opt_.wait_alpha, beta = opt_.wait_beta;
            dP_wait = wait_group_term(e_mem_[g] + e_mem_[h], wsum_[g] + wsum_[h], a, beta) -
                      wait_group_term(e_mem_[g], wsum_[g], a, beta) -
                      wait_group_term(e_mem_[h], wsum_[h], a, beta);
        }
        double delta = -dP_cells + dP_etok + dP_emem + dP_kprior + dP_ers + dP_es + dP_pptok +
                       dP_wait;
        if (!apply) return delta;

        // rewrite cells
        for (const auto& [k, e] : old_cells) {
            auto r = static_cast<std::int32_t>(k >> 32);
            auto s = static_cast<std::int32_t>(k & 0xffffffff);
            row_[r].erase(s);
            col_[s].erase(r);
        }
        for (const auto& [k, e] : new_cells) {
            auto r = static_cast<std::int32_t>(k >> 32);
            auto s = static_cast<std::int32_t>(k & 0xffffffff);
            row_[r][s] = e;
            col_[s][r] = e;
        }
        e_tok_[h] += e_tok_[g];
        e_tok_[g] = 0;
        e_mem_[h] += e_mem_[g];
        e_mem_[g] = 0;
        for (const auto& [k, c] : hist_[g]) hist_[h][k] += c;
        hist_[g].clear();
        hsum_[h] = hs_new;
        hsum_[g] = 0;
        for (auto x : members_tok_[g]) {
            tok_g_[x] = h;
            pos_tok_[x] = static_cast<std::int32_t>(members_tok_[h].size());
            members_tok_[h].push_back(x);
            std::int32_t mth = mem_of_sym_[x];
            if (mth >= 0) mem_g_[mth] = h;
        }
        n_tok_[h] += n_tok_[g];
        n_tok_[g] = 0;
        members_tok_[g].clear();
        if (opt_.wait_mode == WaitMode::per_group) {
            wsum_[h] += wsum_[g];
            wsum_[g] = 0;
        }
        P_cells_ += dP_cells;
        P_etok_ += dP_etok;
        P_emem_ += dP_emem;
        P_kprior_ += dP_kprior;
        P_ers_ = new_ers;
        P_es_ += dP_es;
        P_pptok_ += dP_pptok;
        P_wait_ += dP_wait;
        drop_group(true, g);
        return delta;
    }

    // ---- group bookkeeping ---------------------------------------------------

    std::int64_t hist_cnt(std::int32_t r, std::int64_t k) const {
        auto it = hist_[r].find(k);
        return it == hist_[r].end() ? 0 : it->second;
    }
    std::int64_t hist_cnt_or0(std::int32_t r, std::int64_t k, bool fresh) const {
        return fresh ? 0 : hist_cnt(r, k);
    }
    void hist_take(std::int32_t r, std::int64_t k) {
        auto it = hist_[r].find(k);
        it->second -= 1;
        if (it->second == 0) hist_[r].erase(it);
        hsum_[r] += lf(hist_cnt(r, k)) - lf(hist_cnt(r, k) + 1);
    }
    void hist_put(std::int32_t r, std::int64_t k) {
        auto& c = hist_[r][k];
        c += 1;
        hsum_[r] += lf(c) - lf(c - 1);
    }

    void push_group(bool token_side) {
        if (opt_.unified) {
            row_.emplace_back();
            col_.emplace_back();
            e_tok_.push_back(0);
            e_mem_.push_back(0);
            n_tok_.push_back(0);
            members_tok_.emplace_back();
            hist_.emplace_back();
            hsum_.push_back(0.0);
            if (opt_.wait_mode == WaitMode::per_group) wsum_.push_back(0.0);
            Bn_ += 1;
            Bm_ += 1;
            return;
        }
        if (token_side) {
            row_.emplace_back();
            e_tok_.push_back(0);
            n_tok_.push_back(0);
            members_tok_.emplace_back();
            hist_.emplace_back();
            hsum_.push_back(0.0);
            Bn_ += 1;
        } else {
            col_.emplace_back();
            e_mem_.push_back(0);
            n_mem_.push_back(0);
            members_mem_.emplace_back();
            if (opt_.wait_mode == WaitMode::per_group) wsum_.push_back(0.0);
            Bm_ += 1;
        }
    }

    // remove empty group `f` by swapping the last label into its slot
    void drop_group(bool token_side, std::int32_t f) {
        if (opt_.unified) {
            std::int32_t L = Bn_ - 1;
            if (f != L) {
                // relabel every cell touching L to f; group f is empty here
                std::vector<std::pair<std::int32_t, std::int64_t>> rowL(row_[L].begin(),
                                                                        row_[L].end());
                std::vector<std::pair<std::int32_t, std::int64_t>> colL;
                for (const auto& [r, e] : col_[L])
                    if (r != L) colL.emplace_back(r, e);
                for (const auto& [s, e] : rowL) {
                    row_[L].erase(s);
                    col_[s].erase(L);
                }
                for (const auto& [r, e] : colL) {
                    row_[r].erase(L);
                    col_[L].erase(r);
                }
                for (const auto& [s, e] : rowL) {
                    std::int32_t ss = (s == L) ? f : s;
                    row_[f][ss] = e;
                    col_[ss][f] = e;
                }
                for (const auto& [r, e] : colL) {
                    row_[r][f] = e;
                    col_[f][r] = e;
                }
                e_tok_[f] = e_tok_[L];
                e_mem_[f] = e_mem_[L];
                n_tok_[f] = n_tok_[L];
                hist_[f] = std::move(hist_[L]);
                hsum_[f] = hsum_[L];
                members_tok_[f] = std::move(members_tok_[L]);
                for (auto x : members_tok_[f]) {
                    tok_g_[x] = f;
                    std::int32_t mth = mem_of_sym_[x];
                    if (mth >= 0) mem_g_[mth] = f;
                }
                if (opt_.wait_mode == WaitMode::per_group) wsum_[f] = wsum_[L];
            }
            row_.pop_back();
            col_.pop_back();
            e_tok_.pop_back();
            e_mem_.pop_back();
            n_tok_.pop_back();
            members_tok_.pop_back();
            hist_.pop_back();
            hsum_.pop_back();
            if (opt_.wait_mode == WaitMode::per_group) wsum_.pop_back();
            Bn_ -= 1;
            Bm_ -= 1;
            return;
        }
        if (token_side) {
            std::int32_t L = Bn_ - 1;
            if (f != L) {
                row_[f] = std::move(row_[L]);
                for (const auto& [s, e] : row_[f]) {
                    col_[s].erase(L);
                    col_[s][f] = e;
                }
                e_tok_[f] = e_tok_[L];
                n_tok_[f] = n_tok_[L];
                hist_[f] = std::move(hist_[L]);
                hsum_[f] = hsum_[L];
                members_tok_[f] = std::move(members_tok_[L]);
                for (auto x : members_tok_[f]) tok_g_[x] = f;
            }
            row_.pop_back();
            e_tok_.pop_back();
            n_tok_.pop_back();
            members_tok_.pop_back();
            hist_.pop_back();
            hsum_.pop_back();
            Bn_ -= 1;
        } else {
            std::int32_t L = Bm_ - 1;
            if (f != L) {
                col_[f] = std::move(col_[L]);
                for (const auto& [r, e] : col_[f]) {
                    row_[r].erase(L);
                    row_[r][f] = e;
                }
                e_mem_[f] = e_mem_[L];
                n_mem_[f] = n_mem_[L];
                members_mem_[f] = std::move(members_mem_[L]);
                for (auto m : members_mem_[f]) mem_g_[m] = f;
                if (opt_.wait_mode == WaitMode::per_group) wsum_[f] = wsum_[L];
            }
            col_.pop_back();
            e_mem_.pop_back();
            n_mem_.pop_back();
            members_mem_.pop_back();
            if (opt_.wait_mode == WaitMode::per_group) wsum_.pop_back();
            Bm_ -= 1;
        }
    }

    static void member_move(std::vector<std::vector<std::int32_t>>& members,
                            std::vector<std::int32_t>& pos, std::int32_t item, std::int32_t from,
                            std::int32_t to) {
        auto& mf = members[from];
        std::int32_t p = pos[item];
        std::int32_t last = mf.back();
        mf[p] = last;
        pos[last] = p;
        mf.pop_back();
        pos[item] = static_cast<std::int32_t>(members[to].size());
        members[to].push_back(item);
    }

  public:
    // direct read access for the search driver
    std::int64_t group_size(bool token_side, std::int32_t g) const {
        return (token_side || opt_.unified) ? n_tok_[g] : n_mem_[g];
    }
    const std::unordered_map<std::int32_t, std::int64_t>& row(std::int32_t r) const {
        return row_[r];
    }
    const std::unordered_map<std::int32_t, std::int64_t>& column(std::int32_t s) const {
        return col_[s];
    }
    std::int64_t token_margin(std::int32_t r) const { return e_tok_[r]; }
    std::int64_t memory_margin(std::int32_t s) const { return e_mem_[s]; }

  private:
    const ChainCounts& chain_;
    LogComb& comb_;
    StateOptions opt_;
    std::int32_t Bn_ = 0, Bm_ = 0;
    std::vector<std::int32_t> tok_g_, mem_g_;
    std::vector<std::int32_t> mem_of_sym_;  // unified only
    std::vector<std::int64_t> n_tok_, n_mem_;
    std::vector<std::int64_t> e_tok_, e_mem_;
    std::vector<std::unordered_map<std::int32_t, std::int64_t>> row_, col_;
    std::vector<std::unordered_map<std::int64_t, std::int64_t>> hist_;
    std::vector<double> hsum_;
    std::vector<double> wsum_;
    std::vector<std::vector<std::int32_t>> members_tok_, members_mem_;
    std::vector<std::int32_t> pos_tok_, pos_mem_;
    std::vector<std::uint8_t> frozen_tok_, frozen_mem_;
    WaitStats wait_stats_;
    double P_cells_ = 0, P_etok_ = 0, P_emem_ = 0, P_kconst_ = 0, P_kprior_ = 0, P_ers_ = 0,
           P_es_ = 0, P_pptok_ = 0, P_ppmem_ = 0, P_wait_ = 0;
};

}  // namespace blockmc
