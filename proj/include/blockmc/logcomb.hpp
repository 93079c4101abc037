#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "blockmc/common.hpp"

namespace blockmc {

// Table of ln m!.  Entries are computed independently through lgamma so
// there is no cumulative drift; growth is exclusive-update, reads are safe
// from any number of threads once capacity is ensured.
class LogFactorialTable {
  public:
    explicit LogFactorialTable(std::size_t initial = 1024) { ensure(initial); }

    void ensure(std::size_t m_max) {
        if (m_max + 1 <= tab_.size()) return;
        std::size_t old = tab_.size();
        tab_.resize(m_max + 1);
        for (std::size_t m = old; m < tab_.size(); ++m)
            tab_[m] = std::lgamma(static_cast<double>(m) + 1.0);
        tab_[0] = 0.0;
    }

    double operator()(std::int64_t m) {
        assert(m >= 0);
        if (static_cast<std::size_t>(m) >= tab_.size())
            ensure(std::max<std::size_t>(m + 1, tab_.size() * 2));
        return tab_[static_cast<std::size_t>(m)];
    }

    std::size_t size() const { return tab_.size(); }

  private:
    std::vector<double> tab_;
};

namespace detail {

// dilogarithm Li2(z) for z in [0, 1]
inline double dilog(double z) {
    if (z <= 0.0) return 0.0;
    if (z > 0.5) {
        if (z >= 1.0) return M_PI * M_PI / 6.0;
        return M_PI * M_PI / 6.0 - std::log(z) * std::log1p(-z) - dilog(1.0 - z);
    }
    double sum = 0.0, zk = 1.0;
    for (int k = 1; k < 200; ++k) {
        zk *= z;
        double term = zk / (static_cast<double>(k) * k);
        sum += term;
        if (term < 1e-17 * sum) break;
    }
    return sum;
}

}  // namespace detail

// ln q(m, n): number of restricted partitions of the integer m into at most
// n parts, from the recurrence q(m, n) = q(m, n-1) + q(m-n, n).  Exact
// 64-bit integers below the overflow threshold, the same recurrence in log
// space above it.  Memoisation is capped by a global entry budget; queries
// past the budget are served by a saddle-point evaluation of the generating
// function, which only engages at scales beyond every exact tier.
class RestrictedPartitionTable {
  public:
    explicit RestrictedPartitionTable(std::size_t entry_budget = 30'000'000)
        : budget_(entry_budget) {}

    static constexpr std::int64_t kIntMax = 380;  // p(380) still fits in 64 bits

    double log_q(std::int64_t m, std::int64_t n) {
        assert(m >= 0 && n >= 1);
        if (m == 0 || n == 1) return 0.0;
        if (n > m) n = m;  // q(m, n) = q(m, m) for n >= m
        if (n == 2) return std::log(static_cast<double>(m / 2 + 1));
        if (m <= kIntMax) return std::log(static_cast<double>(q_int(m, n)));
        // fast path: already memoised
        if (static_cast<std::size_t>(n) < cols_.size() &&
            static_cast<std::size_t>(m) < cols_[n].size())
            return cols_[n][m];
        std::size_t projected = entries_;
        for (std::int64_t j = 3; j <= n; ++j) {
            std::size_t have = (static_cast<std::size_t>(j) < cols_.size()) ? cols_[j].size() : 0;
            if (static_cast<std::size_t>(m) + 1 > have)
                projected += static_cast<std::size_t>(m) + 1 - have;
        }
        if (projected > budget_) return log_q_saddle(static_cast<double>(m), static_cast<double>(n));
        if (cols_.size() <= static_cast<std::size_t>(n)) cols_.resize(n + 1);
        for (std::int64_t j = 3; j <= n; ++j) extend_col(j, m);
        return cols_[n][m];
    }

    // exact value for tests; requires m <= kIntMax
    std::uint64_t q_exact(std::int64_t m, std::int64_t n) {
        assert(m >= 0 && n >= 1 && m <= kIntMax);
        if (m == 0) return 1;
        if (n > m) n = m;
        return q_int(m, n);
    }

  private:
    std::uint64_t q_int(std::int64_t m, std::int64_t n) {
        grow_int(m);
        return int_tab_[idx(m, n)];
    }

    static std::size_t idx(std::int64_t m, std::int64_t n) {
        // triangular layout: row m holds n = 1..m
        return static_cast<std::size_t>(m * (m - 1) / 2 + (n - 1));
    }

    void grow_int(std::int64_t m_max) {
        if (m_max <= int_rows_) return;
        int_tab_.resize(idx(m_max, m_max) + 1);
        for (std::int64_t m = int_rows_ + 1; m <= m_max; ++m) {
            for (std::int64_t n = 1; n <= m; ++n) {
                std::uint64_t v;
                if (n == 1)
                    v = 1;
                else {
                    v = int_tab_[idx(m, n - 1)];
                    std::int64_t m2 = m - n;
                    if (m2 > 0)
                        v += int_tab_[idx(m2, std::min(n, m2))];
                    else
                        v += 1;  // q(0, n) = 1
                }
                int_tab_[idx(m, n)] = v;
            }
        }
        int_rows_ = m_max;
    }

    // col_[n][m] = ln q(m, n); columns extended in ascending n so that
    // col_[n-1] always covers the range needed by col_[n].
    double col_value(std::int64_t n, std::int64_t m) {
        if (m == 0) return 0.0;
        if (n == 1) return 0.0;
        if (n == 2) return std::log(static_cast<double>(m / 2 + 1));
        return cols_[n][m];
    }

    void extend_col(std::int64_t n, std::int64_t m_max) {
        auto& col = cols_[n];
        std::int64_t from = static_cast<std::int64_t>(col.size());
        if (from > m_max) return;
        col.resize(m_max + 1);
        entries_ += static_cast<std::size_t>(m_max + 1 - from);
        for (std::int64_t m = from; m <= m_max; ++m) {
            if (m == 0) {
                col[m] = 0.0;
                continue;
            }
            double a = col_value(n - 1, m);  // q(m, n-1)
            std::int64_t m2 = m - n;
            double b = (m2 < 0) ? -std::numeric_limits<double>::infinity()
                                : (m2 == 0 ? 0.0 : col[m2]);  // q(m-n, n)
            col[m] = log_sum_exp(a, b);
        }
    }

    // saddle-point evaluation of ln q(m, n) from the generating function
    // prod_{j<=n} (1 - x^j)^{-1}
    static double log_q_saddle(double m, double n) {
        double u = n / std::sqrt(m);
        if (u < 0.02) {
            // few-parts regime: q(m, n) ~ m^(n-1) / (n! (n-1)!)
            return (n - 1.0) * std::log(m) - std::lgamma(n + 1.0) - std::lgamma(n);
        }
        // solve v^2 = u^2 I(v),  I(v) = v ln(1-e^-v) + pi^2/6 - Li2(e^-v)
        auto I = [](double v) {
            double ev = std::exp(-v);
            return v * std::log1p(-ev) + M_PI * M_PI / 6.0 - detail::dilog(ev);
        };
        double lo = 1e-12, hi = u * M_PI / std::sqrt(6.0) + 5.0;
        for (int it = 0; it < 100; ++it) {
            double mid = 0.5 * (lo + hi);
            if (mid * mid - u * u * I(mid) < 0)
                lo = mid;
            else
                hi = mid;
        }
        double v = 0.5 * (lo + hi);
        double ev = std::exp(-v);
        double J = M_PI * M_PI / 6.0 - detail::dilog(ev);
        double g = v / u + (u / v) * J;
        double fterm = 1.0 - (1.0 + u * u / 2.0) * ev;
        if (fterm < 1e-300) fterm = 1e-300;
        double log_f = std::log(v) - 1.5 * std::log(2.0) - std::log(M_PI) - std::log(u) -
                       0.5 * std::log(fterm);
        return std::sqrt(m) * g + log_f - std::log(m);
    }

    std::size_t budget_;
    std::size_t entries_ = 0;
    std::int64_t int_rows_ = 0;
    std::vector<std::uint64_t> int_tab_;
    std::vector<std::vector<double>> cols_;
};

// Bundle of the combinatorial tables shared by every description-length
// term.  One instance per fit; all arithmetic is in nats.
class LogComb {
  public:
    explicit LogComb(std::size_t factorial_hint = 1024) : lf_(factorial_hint) {}

    double log_factorial(std::int64_t m) { return lf_(m); }

    double log_binom(std::int64_t n, std::int64_t k) {
        if (k < 0 || k > n) return -std::numeric_limits<double>::infinity();
        k = std::min(k, n - k);
        if (k == 0) return 0.0;
        if (static_cast<std::size_t>(n) < lf_.size())
            return lf_(n) - lf_(k) - lf_(n - k);
        if (k <= 1'000'000) {
            // short side summed directly; the lgamma difference would cancel
            double sum = 0.0, c = 0.0;
            for (std::int64_t i = 1; i <= k; ++i) {
                double y = std::log(static_cast<double>(n - k + i)) - c;
                double t = sum + y;
                c = (t - sum) - y;
                sum = t;
            }
            return sum - std::lgamma(static_cast<double>(k) + 1.0);
        }
        return std::lgamma(static_cast<double>(n) + 1.0) -
               std::lgamma(static_cast<double>(k) + 1.0) -
               std::lgamma(static_cast<double>(n - k) + 1.0);
    }

    // ln multiset(m, k) = ln C(m + k - 1, k): ways to distribute k
    // indistinct items over m bins.  Exact tables below 2e4, log-gamma or
    // short-side summation above (1e-10 relative there).
    double log_multiset(std::int64_t m, std::int64_t k) {
        if (m == 0 && k > 0)
            throw std::domain_error("log_multiset: cannot distribute items over zero bins");
        if (k == 0) return 0.0;
        return log_binom(m + k - 1, k);
    }

    double log_q(std::int64_t m, std::int64_t n) { return q_.log_q(m, n); }
    std::uint64_t q_exact(std::int64_t m, std::int64_t n) { return q_.q_exact(m, n); }

    void ensure_factorials(std::size_t m_max) { lf_.ensure(m_max); }

  private:
    LogFactorialTable lf_;
    RestrictedPartitionTable q_;
};

}  // namespace blockmc
