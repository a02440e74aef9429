#include "fixtures.hpp"

#include "p2pm/market.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace p2pm;
using p2pm::testing::vec;

namespace {

SlotState state(const Eigen::VectorXd& g, const Eigen::VectorXd& d, double buy = 2.0, double sell = 1.0) {
    SlotState s;
    s.pv = g;
    s.demand = d;
    s.price_buy = buy;
    s.price_sell = sell;
    return s;
}

}  // namespace

TEST(Roles, SignSplit) {
    const auto reg = classify_roles(state(vec({5, 1}), vec({1, 5})));
    EXPECT_EQ(reg.sellers, std::vector<int>{0});
    EXPECT_EQ(reg.buyers, std::vector<int>{1});
    EXPECT_EQ(reg.partners[0], std::vector<int>{1});
    EXPECT_EQ(reg.partners[1], std::vector<int>{0});
    EXPECT_TRUE(reg.active());
}

TEST(Roles, ZeroNetGenerationSitsOut) {
    const auto reg = classify_roles(state(vec({2, 5, 0}), vec({2, 1, 3})));
    EXPECT_EQ(reg.role[0], Role::Neutral);
    EXPECT_TRUE(reg.partners[0].empty());
    EXPECT_EQ(reg.partners[1], std::vector<int>{2});
    EXPECT_EQ(reg.partners[2], std::vector<int>{1});
}

TEST(Roles, AllBuyersMeansNoMarket) {
    const auto reg = classify_roles(state(vec({0, 0}), vec({1, 2})));
    EXPECT_TRUE(reg.sellers.empty());
    EXPECT_FALSE(reg.active());
    for (const auto& p : reg.partners) EXPECT_TRUE(p.empty());
}

TEST(Balance, BuyerShortfallBoughtFromGrid) {
    // Prosumer 1 buys 1 kWh from prosumer 0.
    const auto reg = classify_roles(state(vec({4, 0}), vec({1, 3})));
    Decision d = Decision::zeros(2);
    d.e(1, 0) = -1.0;
    d.e(0, 1) = 1.0;
    d.p = vec({2.0, -3.0});
    d.w = vec({0.5, 0.5});
    const auto [pb, ps] = power_balance(d, reg);
    EXPECT_DOUBLE_EQ(pb[1], 2.5);
    EXPECT_DOUBLE_EQ(ps[1], 0.0);
    // Seller: p = 2 covers 1 kWh traded and 0.5 charged, 0.5 left for the grid.
    EXPECT_DOUBLE_EQ(ps[0], 0.5);
}

TEST(Balance, SellerExactAndNoTrade) {
    const auto reg = classify_roles(state(vec({4, 0}), vec({1, 3})));
    Decision d = Decision::zeros(2);
    d.e(0, 1) = 1.5;
    d.e(1, 0) = -1.5;
    d.p = vec({2.0, -1.5});
    d.w = vec({0.5, 0.0});
    EXPECT_DOUBLE_EQ(power_balance(d, reg).second[0], 0.0);
    Decision z = Decision::zeros(2);
    z.p = vec({2.0, 0.0});
    EXPECT_DOUBLE_EQ(power_balance(z, reg).second[0], 2.0);
}

TEST(Objective, Examples) {
    ProsumerParams prm;
    prm.gamma = 3.0;
    prm.xi = 0.02;
    {
        const auto s = state(vec({1.0}), vec({1.0}));
        EXPECT_DOUBLE_EQ(objective(Decision::zeros(1), s, {prm}, classify_roles(s)), 0.0);
    }
    const auto s = state(vec({0.0}), vec({2.0}), 2.0, 0.5);
    const auto reg = classify_roles(s);
    Decision d = Decision::zeros(1);
    d.p = vec({-2.0});
    EXPECT_DOUBLE_EQ(objective(d, s, {prm}, reg), 4.0);
    d.w = vec({1.0});
    EXPECT_DOUBLE_EQ(objective(d, s, {prm}, reg), 6.02);
}

TEST(Losses, PairCosts) {
    const auto topo = make_topology({{0, 1, 0.01, 0.02}, {1, 2, 0.03, 0.04}});
    const auto lm = build_loss_model(topo, 10.0);
    EXPECT_DOUBLE_EQ(lm.g(0, 0), 0.0);
    EXPECT_NEAR(lm.g(0, 1), 0.5, 1e-12);
    EXPECT_DOUBLE_EQ(lm.g(0, 1), lm.g(1, 0));
    const auto zero = build_loss_model(topo, 0.0);
    EXPECT_EQ(zero.g.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Losses, FartherPartnerCostsMore) {
    // 0-1-2-3 feeder: from bus 1, bus 3 is electrically farther than bus 2.
    const auto topo = make_topology(p2pm::testing::feeder(3, 0.02, 0.01));
    const auto lm = build_loss_model(topo, 4.0);
    const double e = 0.7;
    EXPECT_GT(lm.g(0, 2) * e * e, lm.g(0, 1) * e * e);
}

TEST(Objective, DecomposesPerProsumer) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto topo = make_topology(p2pm::testing::feeder(5));
    const auto lm = build_loss_model(topo, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::VectorXd g(5), dd(5);
        for (int i = 0; i < 5; ++i) {
            g[i] = 2.0 * u(rng);
            dd[i] = 2.0 * u(rng);
        }
        const auto s = state(g, dd, 1.5, 0.5);
        const auto reg = classify_roles(s);
        std::vector<ProsumerParams> prm(5);
        Decision d = Decision::zeros(5);
        for (int i = 0; i < 5; ++i) {
            prm[i].alpha = u(rng);
            prm[i].beta = u(rng);
            prm[i].xi = 0.05 * u(rng);
            d.p[i] = g[i] - dd[i] * (0.5 + u(rng));
            d.w[i] = u(rng) - 0.5;
        }
        for (int b : reg.buyers)
            for (int sl : reg.sellers) {
                const double x = u(rng);
                d.e(sl, b) = x;
                d.e(b, sl) = -x;
            }
        double sum = 0.0;
        for (int i = 0; i < 5; ++i) sum += prosumer_objective(i, d, s, prm[i], reg, &lm);
        EXPECT_NEAR(sum, objective(d, s, prm, reg, &lm), 1e-12);
        // With tau = 0 the loss-aware objective is the plain one.
        const auto lm0 = build_loss_model(topo, 0.0);
        EXPECT_NEAR(objective(d, s, prm, reg, &lm0), objective(d, s, prm, reg), 1e-12);
    }
}

TEST(Params, Validation) {
    ProsumerParams p;
    EXPECT_NO_THROW(validate(p));
    p.alpha = -1.0;
    EXPECT_ANY_THROW(validate(p));
    p = {};
    p.kappa = 0.0;
    EXPECT_ANY_THROW(validate(p));
    p = {};
    p.soc_min = 6.0;
    EXPECT_ANY_THROW(validate(p));
    p = {};
    p.w_min = 0.5;
    EXPECT_ANY_THROW(validate(p));
}
