#include "p2pm/error.hpp"
#include "p2pm/lyapunov.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace p2pm;
using p2pm::testing::theta_by_parts;

namespace {

ProsumerParams ess(double kappa, double smin, double smax, double wmin = -2.0, double wmax = 2.0) {
    ProsumerParams p;
    p.kappa = kappa;
    p.soc_min = smin;
    p.soc_max = smax;
    p.w_min = wmin;
    p.w_max = wmax;
    return p;
}

}  // namespace

TEST(DriftPenalty, Examples) {
    const auto p1 = ess(1.0, 0.0, 5.0);
    EXPECT_DOUBLE_EQ(drift_penalty({0.04, -5.0}, -2.5, 0.0, p1), 0.0);
    EXPECT_NEAR(drift_penalty({0.04, -5.0}, -2.5, 1.0, p1), -0.08, 1e-15);
    // Pure quadratic when kappa = 1 and the queue is empty.
    for (double w : {-1.5, -0.2, 0.3, 1.9}) EXPECT_NEAR(drift_penalty({0.04, -2.0}, 0.0, w, p1), 0.02 * w * w, 1e-15);
}

TEST(DriftConstant, Examples) {
    EXPECT_DOUBLE_EQ(drift_upper_constant(ess(1.0, 0.0, 5.0), {0.04, -2.5}, 1.3), 0.0);
    EXPECT_DOUBLE_EQ(drift_upper_constant(ess(1.0, 0.0, 5.0), {0.04, 0.0}, 0.0), 0.0);
    EXPECT_NEAR(drift_upper_constant(ess(0.998, 0.0, 5.0), {0.04, -2.5}, 0.0), -4.99e-4, 1e-9);
}

TEST(Drift, ExactDriftDecomposition) {
    // exact - penalty = 1/2 delta [(k^2-1) S~^2 + 2k(1-k) S~ eps + (1-k)^2 eps^2]
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 2000; ++trial) {
        const auto p = ess(0.9 + 0.1 * u(rng), 0.0, 4.0 + 4.0 * u(rng));
        const LyapunovParams lp{0.01 + 0.04 * u(rng), -p.soc_max * u(rng)};
        const double st = p.soc_min + lp.epsilon + (p.soc_max - p.soc_min) * u(rng);
        const double w = p.w_min + (p.w_max - p.w_min) * u(rng);
        const double k = p.kappa, e = lp.epsilon;
        const double rest = 0.5 * lp.delta * ((k * k - 1.0) * st * st + 2.0 * k * (1.0 - k) * st * e +
                                              (1.0 - k) * (1.0 - k) * e * e);
        EXPECT_NEAR(exact_drift(p, lp, st, w), drift_penalty(lp, st, w, p) + rest, 1e-12);
    }
}

TEST(Drift, BoundHoldsWithoutLoss) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 10000; ++trial) {
        const auto p = ess(1.0, 0.0, 5.0 + 3.0 * u(rng));
        const LyapunovParams lp{0.01 + 0.04 * u(rng), -p.soc_max * u(rng)};
        const double st = lp.epsilon + p.soc_max * u(rng);
        const double w = -2.0 + 4.0 * u(rng);
        EXPECT_LE(exact_drift(p, lp, st, w), drift_upper_constant(p, lp, st) + drift_penalty(lp, st, w, p) + 1e-9);
    }
}

TEST(Soc, Update) {
    EXPECT_DOUBLE_EQ(next_soc(ess(1.0, 0.0, 5.0), 2.0, 0.0), 2.0);
    EXPECT_NEAR(next_soc(ess(0.998, 0.0, 5.0), 5.0, 0.0), 4.99, 1e-12);
    EXPECT_THROW((void)next_soc(ess(1.0, 0.0, 5.0), 5.0, 1.0), InvariantViolation);
    const auto s = update_soc(make_ess_state(Eigen::Vector2d(1.0, 2.0), {{0.04, -1.0}, {0.04, -2.0}}),
                              Eigen::Vector2d(0.5, -0.5), {ess(1.0, 0.0, 5.0), ess(1.0, 0.0, 5.0)},
                              {{0.04, -1.0}, {0.04, -2.0}});
    EXPECT_DOUBLE_EQ(s.soc[0], 1.5);
    EXPECT_DOUBLE_EQ(s.soc_tilde[0], 0.5);
    EXPECT_DOUBLE_EQ(s.soc_tilde[1], -0.5);
}

TEST(Theta, Examples) {
    const auto p = ess(1.0, 0.0, 5.0);
    EXPECT_NEAR(theta_bound({p}, {{0.04, -2.5}}).theta, 0.32, 1e-15);
    EXPECT_NEAR(theta_bound({p, p}, {{0.04, -2.5}, {0.04, -2.5}}).theta, 0.64, 1e-15);
    const auto q = ess(0.998, 0.0, 5.0);
    const auto g = theta_bound({q}, {{0.04, -2.5}});
    EXPECT_NEAR(g.theta, theta_by_parts(q, 0.04, -2.5), 1e-12);
    EXPECT_NEAR(theta_closed(q, {0.04, -2.5}), theta_by_parts(q, 0.04, -2.5), 1e-12);
    EXPECT_NEAR(g.terms.total(), g.terms.theta1 + g.terms.theta2 + g.terms.theta3, 0.0);
    EXPECT_EQ(g.terms.theta4, 0.0);
    EXPECT_GE(g.Lambda[0], std::max(std::pow(q.soc_min - 2.5, 2), std::pow(q.soc_max - 2.5, 2)));
}

TEST(Theta, ClosedMatchesPartsRandom) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto p = ess(0.95 + 0.05 * u(rng), 0.5 * u(rng), 5.0 + 3.0 * u(rng), -2.0 * u(rng), 2.0 * u(rng));
        const double d = 0.01 + 0.04 * u(rng), e = -p.soc_max + (p.soc_max - p.soc_min) * u(rng);
        EXPECT_NEAR(theta_closed(p, {d, e}), theta_by_parts(p, d, e), 1e-12);
    }
}

TEST(GapMinimization, DegenerateKappa) {
    const auto p = ess(1.0, 0.0, 6.0, -1.5, 2.0);
    const auto r = minimize_gap(p, GapSearch{});
    EXPECT_DOUBLE_EQ(r.delta_star, 1e-2);
    EXPECT_EQ(r.O_star, 0.5 * 1e-2 * 3.5 * 3.5);
}

TEST(GapMinimization, InnerMatchesGrid) {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const auto p = ess(0.9 + 0.099 * u(rng), 0.0, 5.0 + 3.0 * u(rng));
        const double d = 0.01 + 0.04 * u(rng);
        double eps = 0.0;
        const double inner = solve_gap_inner(p, d, -p.soc_max, -p.soc_min, &eps);
        double grid = std::numeric_limits<double>::infinity();
        for (double e = -p.soc_max; e <= -p.soc_min + 1e-12; e += 1e-3) grid = std::min(grid, theta_by_parts(p, d, e));
        grid = std::min(grid, theta_by_parts(p, d, -p.soc_min));
        EXPECT_NEAR(inner, grid, 1e-4);
        EXPECT_LE(inner, grid + 1e-12);
        EXPECT_GE(eps, -p.soc_max);
        EXPECT_LE(eps, -p.soc_min);
    }
}

TEST(GapMinimization, WithinBoundsAndNeverAboveSweptPoints) {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const GapSearch s{1e-2, 5e-2, 1e-3};
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = ess(0.99 + 0.01 * u(rng), 0.0, 5.0 + 3.0 * u(rng));
        const auto r = minimize_gap(p, s);
        EXPECT_GE(r.delta_star, s.delta_min);
        EXPECT_LE(r.delta_star, s.delta_max + 1e-12);
        EXPECT_EQ(r.evaluated, 41);
        for (int k = 0; k <= 40; ++k) {
            const double d = s.delta_min + k * s.delta_step;
            for (double e = -p.soc_max; e <= -p.soc_min + 1e-12; e += 0.25)
                EXPECT_LE(r.O_star, std::max(theta_closed(p, {d, e}), 0.0) + 1e-15);
        }
    }
}

TEST(GapMinimization, EmptySweepRejected) {
    EXPECT_THROW((void)minimize_gap(ess(1.0, 0.0, 5.0), GapSearch{0.05, 0.01, 1e-3}), ConfigError);
    EXPECT_THROW((void)minimize_gap(ess(1.0, 0.0, 5.0), GapSearch{0.01, 0.05, 0.0}), ConfigError);
}
