#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "blockmc/mcmc.hpp"
#include "blockmc/waiting.hpp"
#include "support.hpp"

using namespace blockmc;

TEST_CASE("unobserved memory contributes nothing") {
    WaitStats ws;
    ws.total = {0.0};
    ws.count = {0};
    ws.alpha = 1.0;
    ws.beta = 2.5;
    CHECK(wait_evidence_per_memory(ws) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("single observation closed form") {
    // k=1, alpha=1: evidence = beta / (Delta + beta)^2
    WaitStats ws;
    ws.total = {3.0};
    ws.count = {1};
    ws.alpha = 1.0;
    ws.beta = 0.5;
    double expect = -std::log(0.5 / ((3.0 + 0.5) * (3.0 + 0.5)));
    CHECK(wait_evidence_per_memory(ws) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("evidence matches numerical quadrature") {
    rng_t rng(211);
    for (int trial = 0; trial < 25; ++trial) {
        std::int64_t k = std::uniform_int_distribution<std::int64_t>(0, 15)(rng);
        double delta = std::uniform_real_distribution<double>(0.01, 20.0)(rng);
        double alpha = std::uniform_real_distribution<double>(0.3, 3.0)(rng);
        double beta = std::uniform_real_distribution<double>(0.1, 4.0)(rng);
        if (k == 0) delta = 0.0;
        WaitStats ws;
        ws.total = {delta};
        ws.count = {k};
        ws.alpha = alpha;
        ws.beta = beta;
        auto f = [&](double t) {
            if (t <= 0.0 || t >= 1.0) return 0.0;
            double lam = t / (1 - t);
            double jac = 1.0 / ((1 - t) * (1 - t));
            double logv = alpha * std::log(beta) + (alpha - 1 + k) * std::log(lam) -
                          lam * (delta + beta) - std::lgamma(alpha);
            return std::exp(logv) * jac;
        };
        double integral = testsup::simpson(f, 0.0, 1.0, 20000);
        double got = wait_evidence_per_memory(ws);
        CHECK(got == doctest::Approx(-std::log(integral)).epsilon(1e-6));
    }
}

TEST_CASE("per-group evidence pools memories") {
    rng_t rng(223);
    WaitStats ws;
    for (int m = 0; m < 12; ++m) {
        ws.count.push_back(std::uniform_int_distribution<std::int64_t>(0, 9)(rng));
        ws.total.push_back(ws.count.back() *
                           std::uniform_real_distribution<double>(0.1, 2.0)(rng));
    }
    ws.alpha = 1.0;
    ws.beta = 0.8;
    std::int64_t esum = 0;
    double dsum = 0;
    for (std::size_t m = 0; m < ws.count.size(); ++m) {
        esum += ws.count[m];
        dsum += ws.total[m];
    }
    std::vector<std::int32_t> one(ws.count.size(), 0);
    CHECK(wait_evidence_per_group(ws, one, 1) ==
          doctest::Approx(wait_group_term(esum, dsum, 1.0, 0.8)).epsilon(1e-12));
}

TEST_CASE("evidence additivity over identical groups") {
    WaitStats ws;
    ws.count = {3, 2, 3, 2};
    ws.total = {1.5, 0.7, 1.5, 0.7};
    ws.alpha = 1.0;
    ws.beta = 0.4;
    std::vector<std::int32_t> split = {0, 0, 1, 1};
    double two = wait_evidence_per_group(ws, split, 2);
    WaitStats half;
    half.count = {3, 2};
    half.total = {1.5, 0.7};
    half.alpha = 1.0;
    half.beta = 0.4;
    std::vector<std::int32_t> one = {0, 0};
    CHECK(two == doctest::Approx(2 * wait_evidence_per_group(half, one, 1)).epsilon(1e-12));
}

TEST_CASE("improper Jeffreys limit is rejected") {
    WaitStats ws;
    ws.count = {1};
    ws.total = {1.0};
    ws.alpha = 0.0;
    ws.beta = 1.0;
    CHECK_THROWS_AS(wait_evidence_per_memory(ws), config_error);
    ws.alpha = 1.0;
    ws.beta = 0.0;
    CHECK_THROWS_AS(wait_evidence_per_memory(ws), config_error);
}

TEST_CASE("bursty transform basics") {
    auto mu = bursty_transform({2.0, 2.0 * std::exp(1.0)}, 2.0);
    CHECK(mu[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(mu[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(bursty_transform({0.5}, 1.0), input_error);
    CHECK_THROWS_AS(bursty_transform({1.0}, 0.0), config_error);
}

TEST_CASE("bursty transform maps Pareto onto the exponential model") {
    rng_t rng(227);
    const double beta_hat = 1.7, dmin = 0.01;
    const int n = 100000;
    std::vector<double> waits(n);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (auto& w : waits) w = dmin * std::pow(1.0 - u01(rng), -1.0 / beta_hat);
    auto mu = bursty_transform(waits, dmin);
    double sum = 0;
    for (auto v : mu) sum += v;
    double rate = n / sum;  // exponential MLE
    CHECK(rate == doctest::Approx(beta_hat).epsilon(0.05));
}

TEST_CASE("estimate_beta closed forms") {
    WaitStats ws;
    ws.count = {4, 6, 2};
    ws.total = {2.0, 3.0, 1.0};  // every memory at rate exactly 2
    ws.alpha = 1.0;
    CHECK(estimate_beta(ws) == doctest::Approx(0.5).epsilon(1e-12));

    WaitStats single;
    single.count = {3};
    single.total = {1.5};
    single.alpha = 1.0;
    CHECK(estimate_beta(single) == doctest::Approx(0.5).epsilon(1e-12));

    WaitStats empty;
    empty.count = {0};
    empty.total = {0.0};
    CHECK_THROWS_AS(estimate_beta(empty), config_error);
}

TEST_CASE("estimate_beta on heterogeneous rates") {
    rng_t rng(229);
    WaitStats ws;
    double rate_sum = 0;
    int m_count = 50;
    for (int m = 0; m < m_count; ++m) {
        double rate = std::uniform_real_distribution<double>(0.5, 8.0)(rng);
        std::int64_t k = std::uniform_int_distribution<std::int64_t>(5, 40)(rng);
        ws.count.push_back(k);
        ws.total.push_back(static_cast<double>(k) / rate);
        rate_sum += rate;
    }
    ws.alpha = 1.0;
    double oracle = 1.0 / (rate_sum / m_count);
    CHECK(estimate_beta(ws) == doctest::Approx(oracle).epsilon(0.02));
}

TEST_CASE("joint total equals chain total plus wait term") {
    rng_t rng(233);
    LogComb comb;
    auto toks = testsup::random_tokens(5, 80, rng);
    auto seq = testsup::make_sequence(toks, 5);
    std::exponential_distribution<double> ex(3.0);
    seq.waits.resize(toks.size() - 1);
    for (auto& w : seq.waits) w = ex(rng) + 1e-6;
    auto chain = build_chain(seq, 1);

    StateOptions opt;
    opt.wait_mode = WaitMode::per_group;
    opt.wait_beta = 0.4;
    auto tok = testsup::random_grouping(5, 2, rng);
    auto mem = testsup::random_grouping(chain.memory_count(), 2, rng);
    ChainState st(chain, comb, opt, tok, mem);
    auto part = Partition::make(chain, tok, mem);
    PriorConfig cfg;
    double chain_dl = total_dl(chain, part, cfg, comb).total;
    auto ws = WaitStats::from_chain(chain, 1.0, 0.4);
    double wait_dl = wait_evidence_per_group(ws, mem, part.num_memory_groups);
    CHECK(st.total() == doctest::Approx(chain_dl + wait_dl).epsilon(1e-10));
    auto b = st.breakdown();
    REQUIRE(b.wait_term.has_value());
    CHECK(*b.wait_term == doctest::Approx(wait_dl).epsilon(1e-10));
}

TEST_CASE("planted waiting scales separate memory groups") {
    // tokens i.i.d., waits fast (1e-6 s) after half the memories and slow
    // (1 s) after the rest; the group-conditioned fit splits them
    int good = 0;
    for (int seed = 1; seed <= 3; ++seed) {
        rng_t rng(seed * 307);
        std::int32_t N = 10;
        std::int64_t T = 4000;
        auto toks = testsup::random_tokens(N, T, rng);
        auto seq = testsup::make_sequence(toks, N);
        seq.waits.resize(T - 1);
        std::exponential_distribution<double> fast(1e6), slow(1.0);
        for (std::int64_t t = 1; t < T; ++t)
            seq.waits[t - 1] = (toks[t - 1] < N / 2 ? fast(rng) : slow(rng)) + 1e-9;
        auto chain = build_chain(seq, 1);
        FitConfig config;
        config.seed = seed;
        config.restarts = 2;
        config.wait_mode = WaitMode::per_group;
        LogComb comb;
        auto fit = agglomerative_search(chain, config, comb);
        std::vector<double> wsum(fit.num_memory_groups, 0);
        std::vector<std::int64_t> wcnt(fit.num_memory_groups, 0);
        for (std::int32_t m = 0; m < chain.memory_count(); ++m) {
            wsum[fit.memory_groups[m]] += chain.wait_total[m];
            wcnt[fit.memory_groups[m]] += chain.memory_out[m];
        }
        double lo = 1e300, hi = 0;
        for (std::int32_t s = 0; s < fit.num_memory_groups; ++s) {
            if (wcnt[s] == 0) continue;
            double mean = wsum[s] / wcnt[s];
            lo = std::min(lo, mean);
            hi = std::max(hi, mean);
        }
        if (fit.num_memory_groups >= 2 && hi / lo >= 1e3) ++good;
    }
    CHECK(good >= 2);
}
