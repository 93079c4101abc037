#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <map>

#include "blockmc/mcmc.hpp"
#include "support.hpp"

using namespace blockmc;

namespace {

ChainCounts random_chain(std::int32_t N, std::int64_t len, int order, rng_t& rng,
                         bool with_waits = false) {
    auto toks = testsup::random_tokens(N, len, rng);
    auto seq = testsup::make_sequence(toks, N);
    if (with_waits) {
        std::exponential_distribution<double> ex(2.0);
        seq.waits.resize(toks.size() - 1);
        for (auto& w : seq.waits) w = ex(rng) + 1e-6;
    }
    return build_chain(seq, order);
}

}  // namespace

TEST_CASE("delta equals scratch recompute across modes") {
    rng_t rng(101);
    LogComb comb;
    int checked = 0;
    for (int trial = 0; trial < 30; ++trial) {
        std::int32_t N = std::uniform_int_distribution<std::int32_t>(3, 8)(rng);
        int order = std::uniform_int_distribution<int>(1, 2)(rng);
        bool waits = (trial % 3 == 0);
        auto chain = random_chain(N, std::uniform_int_distribution<int>(20, 120)(rng), order, rng,
                                  waits);
        StateOptions opt;
        opt.k_prior = (trial % 2) ? KPriorMode::uniform : KPriorMode::degree_hyperprior;
        opt.unified = (order == 1 && trial % 4 == 0);
        opt.wait_mode = waits ? WaitMode::per_group : WaitMode::none;
        opt.wait_beta = 0.7;
        std::int32_t bt = std::uniform_int_distribution<std::int32_t>(1, N)(rng);
        auto tok = testsup::random_grouping(N, bt, rng);
        std::vector<std::int32_t> mem;
        if (!opt.unified) {
            std::int32_t bm =
                std::uniform_int_distribution<std::int32_t>(1, chain.memory_count())(rng);
            mem = testsup::random_grouping(chain.memory_count(), bm, rng);
        }
        ChainState st(chain, comb, opt, tok, mem);
        for (int mv = 0; mv < 40; ++mv) {
            bool token_side = opt.unified || (rng() % 2 == 0);
            std::int32_t item = token_side
                                    ? std::uniform_int_distribution<std::int32_t>(0, N - 1)(rng)
                                    : std::uniform_int_distribution<std::int32_t>(
                                          0, chain.memory_count() - 1)(rng);
            std::int32_t B = token_side || opt.unified ? st.num_token_groups()
                                                       : st.num_memory_groups();
            std::int32_t target = std::uniform_int_distribution<std::int32_t>(0, B)(rng);
            double before = st.scratch_total();
            double delta = st.delta_move(token_side, item, target);
            st.apply_move(token_side, item, target);
            double after = st.scratch_total();
            CHECK(std::abs(delta - (after - before)) < 1e-9);
            // the cached total stays in sync with the scratch total
            CHECK(std::abs(st.total() - after) < 1e-7);
            ++checked;
        }
    }
    CHECK(checked > 1000);
}

TEST_CASE("no-op move has zero delta") {
    rng_t rng(103);
    LogComb comb;
    auto chain = random_chain(5, 60, 1, rng);
    ChainState st(chain, comb, {}, testsup::random_grouping(5, 2, rng),
                  testsup::random_grouping(chain.memory_count(), 2, rng));
    CHECK(st.delta_move(true, 0, st.token_groups()[0]) == 0.0);
}

TEST_CASE("splitting out of a single group costs the prior but matches scratch") {
    rng_t rng(107);
    LogComb comb;
    auto chain = random_chain(6, 100, 1, rng);
    ChainState st(chain, comb, {}, std::vector<std::int32_t>(6, 0),
                  std::vector<std::int32_t>(chain.memory_count(), 0));
    double before = st.scratch_total();
    double delta = st.delta_move(true, 2, 1);  // fresh group
    st.apply_move(true, 2, 1);
    CHECK(std::abs(delta - (st.scratch_total() - before)) < 1e-9);
    CHECK(st.num_token_groups() == 2);
}

TEST_CASE("merge delta equals scratch recompute") {
    rng_t rng(109);
    LogComb comb;
    for (int trial = 0; trial < 15; ++trial) {
        std::int32_t N = 8;
        bool unified = trial % 3 == 0;
        auto chain = random_chain(N, 150, 1, rng);
        StateOptions opt;
        opt.unified = unified;
        auto tok = testsup::random_grouping(N, 4, rng);
        std::vector<std::int32_t> mem;
        if (!unified) mem = testsup::random_grouping(chain.memory_count(), 3, rng);
        ChainState st(chain, comb, opt, tok, mem);
        double before = st.scratch_total();
        double d = st.delta_merge(true, 0, 2);
        st.apply_merge(true, 0, 2);
        CHECK(std::abs(d - (st.scratch_total() - before)) < 1e-9);
        if (!unified && st.num_memory_groups() >= 2) {
            before = st.scratch_total();
            d = st.delta_merge(false, 1, 0);
            st.apply_merge(false, 1, 0);
            CHECK(std::abs(d - (st.scratch_total() - before)) < 1e-9);
        }
    }
}

TEST_CASE("proposal distribution sums to one") {
    rng_t rng(113);
    LogComb comb;
    for (int trial = 0; trial < 12; ++trial) {
        std::int32_t N = 5;
        bool unified = trial % 2 == 0;
        auto chain = random_chain(N, 40, 1, rng);
        StateOptions opt;
        opt.unified = unified;
        auto tok = testsup::random_grouping(N, 3, rng);
        std::vector<std::int32_t> mem;
        if (!unified) mem = testsup::random_grouping(chain.memory_count(), 2, rng);
        ChainState st(chain, comb, opt, tok, mem);
        for (std::int32_t x = 0; x < N; ++x) {
            double mass = 0;
            for (std::int32_t g = 0; g <= st.num_token_groups(); ++g)
                mass += st.proposal_prob(true, x, g, 1.0);
            CHECK(mass == doctest::Approx(1.0).epsilon(1e-10));
        }
        if (!unified) {
            for (std::int32_t m = 0; m < std::min<std::int32_t>(chain.memory_count(), 6); ++m) {
                double mass = 0;
                for (std::int32_t g = 0; g <= st.num_memory_groups(); ++g)
                    mass += st.proposal_prob(false, m, g, 0.5);
                CHECK(mass == doctest::Approx(1.0).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("proposal frequencies match proposal probabilities") {
    rng_t rng(127);
    LogComb comb;
    auto chain = random_chain(4, 50, 1, rng);
    ChainState st(chain, comb, {}, testsup::random_grouping(4, 2, rng),
                  testsup::random_grouping(chain.memory_count(), 2, rng));
    const int draws = 200000;
    std::vector<std::int64_t> cnt(st.num_token_groups() + 1, 0);
    for (int i = 0; i < draws; ++i) cnt[st.propose_target(true, 1, 1.0, rng)] += 1;
    for (std::int32_t g = 0; g <= st.num_token_groups(); ++g) {
        double expect = st.proposal_prob(true, 1, g, 1.0);
        CHECK(static_cast<double>(cnt[g]) / draws == doctest::Approx(expect).epsilon(0.05));
    }
}

TEST_CASE("greedy sweeps never increase the total") {
    rng_t rng(131);
    LogComb comb;
    auto chain = random_chain(8, 300, 1, rng);
    ChainState st(chain, comb, {}, testsup::random_grouping(8, 8, rng),
                  testsup::random_grouping(chain.memory_count(), chain.memory_count(), rng));
    SweepStats stats;
    double prev = st.scratch_total();
    for (int sweep = 0; sweep < 20; ++sweep) {
        mh_sweep(st, 1.0, -1.0, rng, stats);
        double cur = st.scratch_total();
        CHECK(cur <= prev + 1e-9);
        prev = cur;
    }
    CHECK(stats.proposed > 0);
}

namespace {

// canonical restricted-growth labeling of a partition class
std::vector<std::int32_t> canonical_partition(const std::vector<std::int32_t>& a) {
    std::map<std::int32_t, std::int32_t> remap;
    std::vector<std::int32_t> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        auto [it, fresh] = remap.try_emplace(a[i], static_cast<std::int32_t>(remap.size()));
        out[i] = it->second;
    }
    return out;
}

// exact stationary check: long-run partition-class frequencies against
// exp(-Sigma)/Z with Z summed over all partitions by enumeration
void tv_check_unified(std::int32_t N, std::int64_t len, std::uint64_t seed, double tol) {
    rng_t rng(seed);
    LogComb comb;
    auto chain = random_chain(N, len, 1, rng);
    StateOptions opt;
    opt.unified = true;
    opt.k_prior = KPriorMode::uniform;

    std::map<std::vector<std::int32_t>, double> exact;
    std::vector<std::int32_t> assign(N, 0);
    std::function<void(std::size_t, std::int32_t)> rec = [&](std::size_t i, std::int32_t hi) {
        if (i == assign.size()) {
            ChainState st(chain, comb, opt, assign);
            exact[assign] = -st.total();
            return;
        }
        for (std::int32_t g = 0; g <= hi; ++g) {
            assign[i] = g;
            rec(i + 1, std::max(hi, g + 1));
        }
    };
    rec(0, 0);
    double zmax = -1e300;
    for (auto& [a, lp] : exact) zmax = std::max(zmax, lp);
    double z = 0;
    for (auto& [a, lp] : exact) z += std::exp(lp - zmax);

    ChainState st(chain, comb, opt, std::vector<std::int32_t>(N, 0));
    SweepStats stats;
    std::map<std::vector<std::int32_t>, std::int64_t> freq;
    const int sweeps = 400000;
    for (int s = 0; s < sweeps; ++s) {
        mh_sweep(st, 1.0, 1.0, rng, stats);
        freq[canonical_partition(st.token_groups())] += 1;
    }
    double tv = 0;
    for (auto& [a, lp] : exact) {
        double p = std::exp(lp - zmax) / z;
        double f = freq.count(a) ? static_cast<double>(freq[a]) / sweeps : 0.0;
        tv += std::abs(p - f);
    }
    tv /= 2;
    CHECK(tv < tol);
}

}  // namespace

TEST_CASE("finite-temperature sampler matches exp(-Sigma)/Z") {
    tv_check_unified(2, 12, 137, 0.01);
    tv_check_unified(3, 10, 139, 0.015);
}

TEST_CASE("exhaustive global optimum recovery on tiny chains") {
    LogComb comb;
    int hits = 0;
    const int seeds = 5;
    for (int seed = 1; seed <= seeds; ++seed) {
        rng_t rng(seed * 977);
        auto toks = testsup::random_tokens(4, 25, rng);
        auto seq = testsup::make_sequence(toks, 4);
        auto chain = build_chain(seq, 1);
        double best = 1e300;
        std::vector<std::int32_t> ta(4), ma(chain.memory_count());
        std::function<void(std::size_t, std::int32_t)> rec_m;
        std::function<void(std::size_t, std::int32_t)> rec_t = [&](std::size_t i,
                                                                   std::int32_t hi) {
            if (i == ta.size()) {
                rec_m(0, 0);
                return;
            }
            for (std::int32_t g = 0; g <= std::min<std::int32_t>(hi, 3); ++g) {
                ta[i] = g;
                rec_t(i + 1, std::max(hi, g + 1));
            }
        };
        rec_m = [&](std::size_t i, std::int32_t hi) {
            if (i == ma.size()) {
                auto part = Partition::make(chain, ta, ma);
                PriorConfig cfg;
                best = std::min(best, total_dl(chain, part, cfg, comb).total);
                return;
            }
            for (std::int32_t g = 0; g <= std::min<std::int32_t>(hi, chain.memory_count() - 1);
                 ++g) {
                ma[i] = g;
                rec_m(i + 1, std::max(hi, g + 1));
            }
        };
        rec_t(0, 0);

        FitConfig config;
        config.seed = seed;
        config.restarts = 4;
        auto fit = agglomerative_search(chain, config, comb);
        if (std::abs(fit.breakdown.total - best) < 1e-9) ++hits;
        CHECK(fit.breakdown.total >= best - 1e-9);
    }
    CHECK(hits >= seeds - 1);
}

TEST_CASE("fit result breakdown re-verifies from scratch") {
    rng_t rng(149);
    LogComb comb;
    testsup::PlantedModel model;
    model.alphabet = 10;
    auto toks = model.generate(3000, rng);
    auto seq = testsup::make_sequence(toks, model.alphabet);
    auto chain = build_chain(seq, 1);
    FitConfig config;
    config.seed = 7;
    config.restarts = 2;
    auto fit = agglomerative_search(chain, config, comb);
    auto part = Partition::make(chain, fit.token_groups, fit.memory_groups);
    PriorConfig cfg;
    CHECK(std::abs(total_dl(chain, part, cfg, comb).total - fit.breakdown.total) < 1e-6);
}

TEST_CASE("determinism: identical seed and config give identical results") {
    rng_t rng(151);
    auto toks = testsup::random_tokens(8, 500, rng);
    auto seq = testsup::make_sequence(toks, 8);
    auto chain = build_chain(seq, 1);
    FitConfig config;
    config.seed = 4242;
    config.restarts = 2;
    LogComb comb1, comb2;
    auto f1 = agglomerative_search(chain, config, comb1);
    auto f2 = agglomerative_search(chain, config, comb2);
    CHECK(f1.token_groups == f2.token_groups);
    CHECK(f1.memory_groups == f2.memory_groups);
    CHECK(f1.breakdown.total == f2.breakdown.total);
    CHECK(f1.accept_rate == f2.accept_rate);
}

TEST_CASE("unified mode keeps token and memory assignments identical") {
    rng_t rng(157);
    LogComb comb;
    auto chain = random_chain(6, 200, 1, rng);
    StateOptions opt;
    opt.unified = true;
    ChainState st(chain, comb, opt, testsup::random_grouping(6, 3, rng));
    SweepStats stats;
    for (int sweep = 0; sweep < 10; ++sweep) {
        mh_sweep(st, 1.0, -1.0, rng, stats);
        for (std::int32_t m = 0; m < chain.memory_count(); ++m)
            CHECK(st.memory_groups()[m] == st.token_groups()[chain.memories[m].window[0]]);
    }
}

TEST_CASE("planted two-by-two structure is recovered") {
    LogComb comb;
    int good = 0;
    for (int seed = 1; seed <= 3; ++seed) {
        rng_t rng(seed * 1021);
        testsup::PlantedModel model;
        model.alphabet = 16;
        model.affinity = 9.0;
        auto toks = model.generate(8000, rng);
        auto seq = testsup::make_sequence(toks, model.alphabet);
        auto chain = build_chain(seq, 1);
        FitConfig config;
        config.seed = seed;
        config.restarts = 2;
        auto fit = agglomerative_search(chain, config, comb);
        double nmi = normalized_mutual_information(fit.token_groups, model.token_group_of);
        if (nmi > 0.99) ++good;
    }
    CHECK(good >= 2);
}

TEST_CASE("i.i.d. tokens collapse to a single group") {
    LogComb comb;
    int good = 0;
    for (int seed = 1; seed <= 3; ++seed) {
        rng_t rng(seed * 2029);
        auto toks = testsup::random_tokens(10, 5000, rng);
        auto seq = testsup::make_sequence(toks, 10);
        auto chain = build_chain(seq, 1);
        FitConfig config;
        config.seed = seed;
        config.restarts = 2;
        auto fit = agglomerative_search(chain, config, comb);
        if (fit.num_token_groups == 1 && fit.num_memory_groups == 1) ++good;
    }
    CHECK(good >= 2);
}

TEST_CASE("order scan finds planted second-order structure") {
    LogComb comb;
    rng_t rng(163);
    testsup::PlantedModel model;
    model.alphabet = 8;
    model.order = 2;
    model.xor_rule = true;
    model.affinity = 9.0;
    auto toks = model.generate(8000, rng);
    auto seq = testsup::make_sequence(toks, model.alphabet);
    FitConfig config;
    config.seed = 11;
    config.restarts = 2;
    auto fit = order_scan(seq, 1, 3, config, comb);
    CHECK(fit.best_order == 2);
    CHECK(fit.order_table.size() == 3);
}
