#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "blockmc/state.hpp"

namespace blockmc {

struct FitConfig {
    std::uint64_t seed = 1;
    int order = 1;
    int sweeps_per_level = 10;
    double epsilon = 1.0;       // uniform mixing in move proposals
    double sigma_levels = 2.0;  // geometric spacing of the merge ladder
    int restarts = 4;
    int merge_candidates = 8;
    // finite inverse-temperature schedule (start, end) per ladder level;
    // absent means greedy minimization
    std::optional<std::pair<double, double>> beta_anneal;
    bool unified = false;
    KPriorMode k_prior = KPriorMode::degree_hyperprior;
    Boundary boundary = Boundary::condition_on_prefix;
    WaitMode wait_mode = WaitMode::none;
    double wait_alpha = 1.0;
    std::optional<double> wait_beta;  // defaults to the empirical-Bayes estimate
    std::optional<std::int32_t> force_groups;
    int final_sweeps = 20;

    void validate() const {
        if (epsilon <= 0) throw config_error("epsilon must be > 0");
        if (sigma_levels <= 1) throw config_error("sigma_levels must be > 1");
        if (restarts < 1) throw config_error("restarts must be >= 1");
        if (sweeps_per_level < 1) throw config_error("sweeps_per_level must be >= 1");
        if (unified && order != 1) throw config_error("unified mode requires order 1");
    }
};

struct OrderRow {
    int order = 0;
    std::int32_t num_token_groups = 0;
    std::int32_t num_memory_groups = 0;
    double total = 0;
    double baseline = 0;  // plain-chain evidence Sigma'
    double mle = 0;
};

struct FitResult {
    std::vector<std::int32_t> token_groups;
    std::vector<std::int32_t> memory_groups;
    std::int32_t num_token_groups = 1;
    std::int32_t num_memory_groups = 1;
    DlBreakdown breakdown;
    double accept_rate = 0;
    std::uint64_t seed = 0;
    int restarts = 1;
    int order = 1;
    std::vector<OrderRow> order_table;
    int best_order = 0;
    double wall_seconds = 0;
    double time_sweeps = 0, time_merges = 0;
};

struct SweepStats {
    std::int64_t proposed = 0;
    std::int64_t accepted = 0;
};

// One pass over all movable items in random order with Metropolis-Hastings
// acceptance targeting exp(-beta Sigma); beta <= 0 means greedy descent.
inline void mh_sweep(ChainState& st, double epsilon, double beta, rng_t& rng, SweepStats& stats,
                     bool allow_fresh = true) {
    std::vector<std::pair<std::uint8_t, std::int32_t>> items;
    for (std::int32_t x = 0; x < st.chain().alphabet_size; ++x)
        if (!st.frozen_tokens()[x]) items.emplace_back(1, x);
    if (!st.unified())
        for (std::int32_t m = 0; m < st.chain().memory_count(); ++m)
            if (!st.frozen_memories()[m]) items.emplace_back(0, m);
    std::shuffle(items.begin(), items.end(), rng);
    const bool greedy = !(beta > 0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    for (auto [side_u8, item] : items) {
        bool token_side = side_u8 != 0;
        std::int32_t B = token_side || st.unified() ? st.num_token_groups()
                                                    : st.num_memory_groups();
        std::int32_t from =
            token_side ? st.token_groups()[item] : st.memory_groups()[item];
        std::int32_t target = st.propose_target(token_side, item, epsilon, rng);
        if (!allow_fresh && target == B) continue;
        if (target == from) {
            stats.proposed += 1;
            continue;
        }
        bool from_singleton = st.group_size(token_side, from) == 1;
        if (target == B && from_singleton) continue;  // pure relabeling
        stats.proposed += 1;
        if (greedy) {
            double d = st.delta_move(token_side, item, target);
            if (d < 0) {
                st.apply_move(token_side, item, target);
                stats.accepted += 1;
            }
        } else {
            double p_fwd = st.proposal_prob(token_side, item, target, epsilon);
            double d = st.delta_move(token_side, item, target);
            st.apply_move(token_side, item, target);
            std::int32_t rev = from_singleton
                                   ? (token_side || st.unified() ? st.num_token_groups()
                                                                 : st.num_memory_groups())
                                   : from;
            double p_rev = st.proposal_prob(token_side, item, rev, epsilon);
            double log_acc = -beta * d + std::log(p_rev) - std::log(p_fwd);
            if (std::log(u01(rng)) < log_acc) {
                stats.accepted += 1;
            } else {
                st.apply_move(token_side, item, rev);
            }
        }
    }
}

namespace detail {

inline std::int32_t sample_merge_partner(const ChainState& st, bool token_side, std::int32_t g,
                                         double epsilon, rng_t& rng) {
    std::int32_t B = token_side || st.unified() ? st.num_token_groups() : st.num_memory_groups();
    if (B < 2) return -1;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::int64_t e_g = token_side ? st.token_margin(g) : st.memory_margin(g);
    auto uniform_partner = [&]() {
        std::int32_t h = std::uniform_int_distribution<std::int32_t>(0, B - 2)(rng);
        return h >= g ? h + 1 : h;
    };
    if (e_g == 0) return uniform_partner();
    double r_uniform = epsilon * B / (epsilon * B + static_cast<double>(e_g));
    if (u01(rng) < r_uniform) return uniform_partner();
    // two-hop block sample: g -> opposite group t -> partner
    const auto& through_map = token_side ? st.row(g) : st.column(g);
    std::int64_t pick = std::uniform_int_distribution<std::int64_t>(0, e_g - 1)(rng);
    std::int64_t acc = 0;
    std::int32_t t = -1;
    for (const auto& [opp, e] : through_map) {
        acc += e;
        if (pick < acc) {
            t = opp;
            break;
        }
    }
    std::int64_t e_t = token_side ? st.memory_margin(t) : st.token_margin(t);
    const auto& partner_map = token_side ? st.column(t) : st.row(t);
    std::int64_t pick2 = std::uniform_int_distribution<std::int64_t>(0, e_t - 1)(rng);
    acc = 0;
    for (const auto& [h, e] : partner_map) {
        acc += e;
        if (pick2 < acc) return h == g ? uniform_partner() : h;
    }
    return uniform_partner();
}

// greedy merges of sampled candidate pairs until the side has at most
// `target_B` groups
inline void merge_down(ChainState& st, bool token_side, std::int32_t target_B, int candidates,
                       double epsilon, rng_t& rng) {
    auto side_B = [&]() {
        return token_side || st.unified() ? st.num_token_groups() : st.num_memory_groups();
    };
    while (side_B() > target_B) {
        std::int32_t B = side_B();
        struct Cand {
            double delta;
            std::int32_t g, h;
        };
        std::vector<Cand> list;
        for (std::int32_t g = 0; g < B; ++g) {
            double best = std::numeric_limits<double>::infinity();
            std::int32_t best_h = -1;
            if (B <= candidates + 1) {
                for (std::int32_t h = 0; h < B; ++h) {
                    if (h == g) continue;
                    double d = st.delta_merge(token_side, g, h);
                    if (d < best) {
                        best = d;
                        best_h = h;
                    }
                }
            } else {
                for (int c = 0; c < candidates; ++c) {
                    std::int32_t h = sample_merge_partner(st, token_side, g, epsilon, rng);
                    if (h < 0 || h == g) continue;
                    double d = st.delta_merge(token_side, g, h);
                    if (d < best) {
                        best = d;
                        best_h = h;
                    }
                }
            }
            if (best_h >= 0) list.push_back({best, g, best_h});
        }
        std::sort(list.begin(), list.end(), [](const Cand& a, const Cand& b) {
            if (a.delta != b.delta) return a.delta < b.delta;
            if (a.g != b.g) return a.g < b.g;
            return a.h < b.h;
        });
        std::vector<std::int32_t> alias(B);
        for (std::int32_t i = 0; i < B; ++i) alias[i] = i;
        std::vector<std::uint8_t> dirty(B, 0);
        int applied = 0;
        for (const auto& cand : list) {
            if (side_B() <= target_B) break;
            if (dirty[cand.g] || dirty[cand.h]) continue;
            std::int32_t g = alias[cand.g], h = alias[cand.h];
            if (g == h) continue;
            std::int32_t L = side_B() - 1;  // label that will be swapped into g's slot
            st.apply_merge(token_side, g, h);
            dirty[cand.g] = dirty[cand.h] = 1;
            for (auto& a : alias) {
                if (a == g)
                    a = h;
                else if (a == L && g != L)
                    a = g;
            }
            // the fold target may itself have been relabeled
            for (auto& a : alias)
                if (a == h && h == L && g != L) a = g;
            applied += 1;
        }
        if (applied == 0 && !list.empty()) {
            // everything went stale; force the single best pair
            st.apply_merge(token_side, alias[list[0].g], alias[list[0].h]);
        }
        if (list.empty()) break;
    }
}

struct BestTracker {
    double total = std::numeric_limits<double>::infinity();
    std::int64_t groups = std::numeric_limits<std::int64_t>::max();
    std::vector<std::int32_t> tok, mem;

    void offer(ChainState& st) {
        st.refresh();
        double t = st.total();
        std::int64_t g = st.num_token_groups() + st.num_memory_groups();
        // exact ties go to the simpler partition
        if (t < total - 1e-12 || (std::abs(t - total) <= 1e-9 && g < groups)) {
            total = t;
            groups = g;
            tok = st.token_groups();
            mem = st.memory_groups();
        }
    }
};

}  // namespace detail

// Description-length minimization: start from singletons, alternate MH
// sweeps with greedy block merges along a geometric ladder, track the best
// partition ever visited, repeat over restarts and return the argmin.
inline FitResult agglomerative_search(const ChainCounts& chain, const FitConfig& config,
                                      LogComb& comb) {
    config.validate();
    auto t_start = std::chrono::steady_clock::now();
    FitResult out;
    out.seed = config.seed;
    out.restarts = config.restarts;
    out.order = chain.order;

    StateOptions sopt;
    sopt.k_prior = config.k_prior;
    sopt.unified = config.unified;
    sopt.wait_mode = chain.has_waits ? config.wait_mode : WaitMode::none;
    sopt.wait_alpha = config.wait_alpha;
    if (sopt.wait_mode != WaitMode::none) {
        if (config.wait_beta) {
            sopt.wait_beta = *config.wait_beta;
        } else {
            auto ws = WaitStats::from_chain(chain, config.wait_alpha, 1.0);
            sopt.wait_beta = estimate_beta(ws);
        }
    }

    detail::BestTracker best;
    SweepStats stats;
    double time_sweeps = 0, time_merges = 0;

    for (int restart = 0; restart < config.restarts; ++restart) {
        rng_t rng(substream_seed(config.seed, static_cast<std::uint64_t>(restart)));
        std::vector<std::int32_t> tok0(chain.alphabet_size), mem0(chain.memory_count());
        std::int32_t floor_tok = 1, floor_mem = 1;
        if (config.force_groups) {
            std::int32_t k = *config.force_groups;
            if (k < 1) throw config_error("force_groups must be >= 1");
            for (std::size_t i = 0; i < tok0.size(); ++i)
                tok0[i] = static_cast<std::int32_t>(i % k);
            for (std::size_t i = 0; i < mem0.size(); ++i)
                mem0[i] = static_cast<std::int32_t>(i % k);
            if (static_cast<std::int32_t>(tok0.size()) < k ||
                (!config.unified && static_cast<std::int32_t>(mem0.size()) < k))
                throw config_error("force_groups exceeds the item count");
            floor_tok = floor_mem = k;
        } else {
            for (std::size_t i = 0; i < tok0.size(); ++i)
                tok0[i] = static_cast<std::int32_t>(i);
            for (std::size_t i = 0; i < mem0.size(); ++i)
                mem0[i] = static_cast<std::int32_t>(i);
        }
        ChainState st(chain, comb, sopt, std::move(tok0),
                      config.unified ? std::vector<std::int32_t>{} : std::move(mem0));
        const bool allow_fresh = !config.force_groups.has_value();

        int level = 0;
        while (true) {
            double beta = -1.0;
            if (config.beta_anneal) {
                // geometric interpolation along the ladder
                double frac = std::min(1.0, level / 24.0);
                beta = config.beta_anneal->first *
                       std::pow(config.beta_anneal->second / config.beta_anneal->first, frac);
            }
            auto t0 = std::chrono::steady_clock::now();
            for (int sweep = 0; sweep < config.sweeps_per_level; ++sweep)
                mh_sweep(st, config.epsilon, beta, rng, stats, allow_fresh);
            time_sweeps += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                               .count();
            best.offer(st);
            bool tok_done = st.num_token_groups() <= floor_tok;
            bool mem_done = config.unified || st.num_memory_groups() <= floor_mem;
            if (tok_done && mem_done) break;
            auto t1 = std::chrono::steady_clock::now();
            if (!tok_done) {
                std::int32_t tgt = std::max<std::int32_t>(
                    floor_tok, static_cast<std::int32_t>(
                                   std::floor(st.num_token_groups() / config.sigma_levels)));
                detail::merge_down(st, true, tgt, config.merge_candidates, config.epsilon, rng);
            }
            if (!config.unified && !mem_done) {
                std::int32_t tgt = std::max<std::int32_t>(
                    floor_mem, static_cast<std::int32_t>(
                                   std::floor(st.num_memory_groups() / config.sigma_levels)));
                detail::merge_down(st, false, tgt, config.merge_candidates, config.epsilon, rng);
            }
            time_merges += std::chrono::duration<double>(std::chrono::steady_clock::now() - t1)
                               .count();
            best.offer(st);
            level += 1;
        }

        // polish from the best state found so far: greedy sweeps alternated
        // with strictly improving merges, which unsplit groups that
        // single-item moves cannot repair
        {
            ChainState polish(chain, comb, sopt, std::vector<std::int32_t>(best.tok),
                              config.unified ? std::vector<std::int32_t>{}
                                             : std::vector<std::int32_t>(best.mem));
            auto improving_merge = [&](bool token_side) {
                std::int32_t B = token_side || config.unified ? polish.num_token_groups()
                                                              : polish.num_memory_groups();
                if (B < 2 || B > 24) return false;
                double best_d = -1e-9;
                std::int32_t bg = -1, bh = -1;
                for (std::int32_t g = 0; g < B; ++g)
                    for (std::int32_t h = 0; h < B; ++h) {
                        if (g == h) continue;
                        double d = polish.delta_merge(token_side, g, h);
                        if (d < best_d) {
                            best_d = d;
                            bg = g;
                            bh = h;
                        }
                    }
                if (bg < 0) return false;
                polish.apply_merge(token_side, bg, bh);
                return true;
            };
            polish.refresh();
            double prev = polish.total();
            for (int round = 0; round < std::max(config.final_sweeps, 4); ++round) {
                mh_sweep(polish, config.epsilon, -1.0, rng, stats, allow_fresh);
                bool merged = false;
                if (!config.force_groups) {
                    merged |= improving_merge(true);
                    if (!config.unified) merged |= improving_merge(false);
                }
                polish.refresh();
                if (!merged && polish.total() > prev - 1e-9) break;
                prev = std::min(prev, polish.total());
            }
            best.offer(polish);
        }
    }

    // assemble the result from a fresh state over the best assignments
    ChainState final_state(chain, comb, sopt, std::vector<std::int32_t>(best.tok),
                           config.unified ? std::vector<std::int32_t>{}
                                          : std::vector<std::int32_t>(best.mem));
    out.token_groups = final_state.token_groups();
    out.memory_groups = final_state.memory_groups();
    out.num_token_groups = final_state.num_token_groups();
    out.num_memory_groups = final_state.num_memory_groups();
    out.breakdown = final_state.breakdown();
    out.accept_rate =
        stats.proposed ? static_cast<double>(stats.accepted) / stats.proposed : 0.0;
    out.time_sweeps = time_sweeps;
    out.time_merges = time_merges;
    out.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return out;
}

// Fit every order in [n_min, n_max] independently and report the argmin of
// the total description length, with the plain-chain baseline per order.
// Every order is conditioned on the same n_max-token prefix so the evidences
// describe identical data; ties keep the smaller order.
inline FitResult order_scan(const Sequence& seq, int n_min, int n_max, const FitConfig& config,
                            LogComb& comb) {
    if (n_min < 1 || n_max < n_min) throw config_error("order scan requires 1 <= n_min <= n_max");
    FitResult best;
    bool have = false;
    std::vector<OrderRow> table;
    for (int n = n_min; n <= n_max; ++n) {
        FitConfig c = config;
        c.order = n;
        auto chain = build_chain(seq, n, config.boundary, n_max);
        auto fit = agglomerative_search(chain, c, comb);
        OrderRow row;
        row.order = n;
        row.num_token_groups = fit.num_token_groups;
        row.num_memory_groups = fit.num_memory_groups;
        row.total = fit.breakdown.total;
        row.baseline = baseline_plain_dl(chain, comb);
        row.mle = mle_loglik(chain);
        table.push_back(row);
        if (!have || fit.breakdown.total < best.breakdown.total - 1e-9) {
            best = fit;
            best.best_order = n;
            have = true;
        }
    }
    best.order_table = table;
    best.order = best.best_order;
    return best;
}

}  // namespace blockmc
