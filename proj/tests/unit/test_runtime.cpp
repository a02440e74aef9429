#include "fixtures.hpp"

#include "p2pm/error.hpp"
#include "p2pm/runtime.hpp"

#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <set>
#include <sstream>

using namespace p2pm;
using p2pm::testing::Grid;
using p2pm::testing::vec;

namespace {

struct Pair {
    Grid grid{p2pm::testing::feeder(2), vec({0.2, 0.2}), 100.0};
    SlotProblem sp;

    Pair() {
        std::vector<ProsumerParams> prm(2);
        prm[0].alpha = 0.12;
        prm[0].beta = 0.4;
        prm[1].alpha = 0.05;
        prm[1].beta = 1.0;
        for (auto& p : prm) {
            p.xi = 0.02;
            p.kappa = 0.998;
            p.reactive_ratio = 0.2;
        }
        prm[1].bus = 2;
        sp = p2pm::testing::make_slot(grid, prm, vec({2.0, 0.0}), vec({0.5, 1.0}), 1.4, 0.4, vec({2.0, 3.0}));
    }
};

ScenarioConfig small_config(int horizon) {
    ScenarioConfig c;
    c.horizon = horizon;
    c.slot_minutes = 24.0 * 60.0 / horizon;
    c.seed = 5;
    return c;
}

}  // namespace

TEST(MessageBus, CountsPerRound) {
    Pair pr;
    MessageBus bus(2);
    AdmmConfig c;
    c.k_max = 1;
    (void)run_slot_agents(pr.sp, c, nullptr, bus);
    // Opening broadcast, then two proposals, two shadow prices, two
    // injections and two network prices.
    EXPECT_EQ(bus.delivered(), 2 + 8);
    MessageBus bus3(2);
    c.k_max = 3;
    const auto sol = run_slot_agents(pr.sp, c, nullptr, bus3);
    EXPECT_EQ(bus3.delivered(), 2 + 8L * sol.record.iterations);
}

TEST(MessageBus, PartnerlessProsumersStillTalkToUtility) {
    Grid g(p2pm::testing::feeder(3), Eigen::VectorXd::Zero(3));
    std::vector<ProsumerParams> prm(3);
    auto sp = p2pm::testing::make_slot(g, prm, vec({0, 0, 0}), vec({1, 1, 1}), 1.4, 0.4, vec({1, 1, 1}));
    MessageBus bus(3);
    const auto sol = run_slot_agents(sp, AdmmConfig{}, nullptr, bus);
    EXPECT_EQ(sol.record.iterations, 1);
    EXPECT_EQ(bus.delivered(), 3 + 6);
}

TEST(MessageBus, DroppedMessageTimesOut) {
    Pair pr;
    MessageBus bus(2);
    bool dropped = false;
    bus.set_fault_hook([&](const AgentMessage& m) {
        if (!dropped && m.kind == MessageKind::ShadowPrice && m.k == 2) {
            dropped = true;
            return FaultAction::Drop;
        }
        return FaultAction::Deliver;
    });
    try {
        (void)run_slot_agents(pr.sp, AdmmConfig{}, nullptr, bus);
        FAIL() << "expected ProtocolError";
    } catch (const ProtocolError& e) {
        EXPECT_NE(std::string(e.what()).find("barrier timeout"), std::string::npos) << e.what();
        EXPECT_FALSE(e.agent().empty());
    }
}

TEST(MessageBus, DelayedMessageIsRejected) {
    Pair pr;
    MessageBus bus(2);
    bus.set_fault_hook([](const AgentMessage& m) {
        return m.kind == MessageKind::Injection && m.sender == 1 && m.k == 1 ? FaultAction::Delay
                                                                             : FaultAction::Deliver;
    });
    EXPECT_THROW((void)run_slot_agents(pr.sp, AdmmConfig{}, nullptr, bus), ProtocolError);
}

TEST(MessageBus, UnknownReceiver) {
    MessageBus bus(2);
    EXPECT_THROW(bus.post({MessageKind::TradeProposal, 0, 7, 0, 0, 1.0}), ProtocolError);
}

TEST(Agents, SameIteratesAsDirectSolve) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        Grid g(p2pm::testing::random_tree(4, rng), Eigen::VectorXd::Constant(4, 0.2), 100.0,
               uniform_limits(4, 0.95, 1.05, 7.0, 7.0));
        std::vector<ProsumerParams> prm(4);
        Eigen::VectorXd pv(4), d(4), soc(4);
        for (int i = 0; i < 4; ++i) {
            prm[i].bus = i + 1;
            prm[i].alpha = 0.02 + 0.1 * u(rng);
            prm[i].beta = 0.2 + 1.5 * u(rng);
            prm[i].xi = 0.02;
            prm[i].kappa = 0.998;
            prm[i].reactive_ratio = 0.2;
            pv[i] = 2.0 * u(rng);
            d[i] = 2.0 * u(rng);
            soc[i] = 5.0 * u(rng);
        }
        pv[0] = d[0] + 1.0;
        pv[1] = 0.0;
        StoragePolicy pol;
        pol.delta = 0.02;
        pol.epsilon = -2.0;
        const auto sp = p2pm::testing::make_slot(g, prm, pv, d, 1.4, 0.4, soc, pol);
        const auto direct = solve_slot(sp, AdmmConfig{});
        MessageBus bus(4);
        const auto agents = run_slot_agents(sp, AdmmConfig{}, nullptr, bus);
        EXPECT_EQ(agents.record.iterations, direct.record.iterations);
        EXPECT_LE((agents.decision.e - direct.decision.e).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_LE((agents.decision.p - direct.decision.p).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_LE((agents.decision.w - direct.decision.w).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_NEAR(agents.objective, direct.objective, 1e-9);
    }
}

TEST(Agents, AuditCarriesOnlyRoutingFields) {
    Pair pr;
    MessageBus bus(2);
    std::ostringstream log;
    bus.set_audit(&log);
    (void)run_slot_agents(pr.sp, AdmmConfig{}, nullptr, bus);
    std::istringstream in(log.str());
    std::string line;
    long lines = 0;
    const std::set<std::string> allowed{"t", "k", "agent", "kind", "to"};
    while (std::getline(in, line)) {
        ++lines;
        const auto j = nlohmann::json::parse(line);
        for (const auto& [key, _] : j.items()) EXPECT_TRUE(allowed.count(key)) << key;
        const std::string kind = j["kind"];
        const std::string from = j["agent"], to = j["to"];
        if (kind == "Injection") EXPECT_EQ(to, agent_name(kUtility));
        if (kind == "NetworkPrice") EXPECT_EQ(from, agent_name(kUtility));
        if (kind == "TradeProposal" || kind == "ShadowPrice") {
            // Only between market partners.
            EXPECT_NE(from, agent_name(kUtility));
            EXPECT_NE(to, agent_name(kUtility));
            EXPECT_NE(from, to);
        }
    }
    EXPECT_EQ(lines, bus.delivered());
}

TEST(Agents, ViewHoldsOnlyOwnData) {
    Pair pr;
    const auto v = make_view(1, pr.sp);
    EXPECT_EQ(v.id, 1);
    EXPECT_EQ(v.prm.alpha, pr.sp.params[1].alpha);
    EXPECT_EQ(v.soc, pr.sp.soc[1]);
    EXPECT_EQ(v.partners, std::vector<int>{0});
    EXPECT_EQ(v.loss.size(), 1u);
}

TEST(Horizon, DeterministicAndCounted) {
    const auto sc = generate_scenario(small_config(6));
    RunConfig rc;
    const auto a = run_horizon(sc, Algorithm::ProposedFramework, rc);
    const auto b = run_horizon(sc, Algorithm::ProposedFramework, rc);
    EXPECT_EQ(a.total_cost, b.total_cost);
    EXPECT_EQ(a.soc, b.soc);
    EXPECT_EQ(a.messages, b.messages);
    long expected = 0;
    for (const auto& s : a.slots) {
        long pairs = 0;
        int buyers = 0, sellers = 0;
        for (Role r : s.roles) {
            buyers += r == Role::Buyer;
            sellers += r == Role::Seller;
        }
        pairs = static_cast<long>(buyers) * sellers;
        expected += sc.size() + static_cast<long>(s.record.iterations) * (4 * pairs + 2L * sc.size());
    }
    EXPECT_EQ(a.messages, expected);
    EXPECT_FALSE(a.guarantee.has_value());
}

TEST(Horizon, MessagePassingMatchesDirect) {
    const auto sc = generate_scenario(small_config(4));
    RunConfig rc;
    const auto a = run_horizon(sc, Algorithm::ProposedOnline, rc);
    rc.message_passing = false;
    const auto b = run_horizon(sc, Algorithm::ProposedOnline, rc);
    EXPECT_NEAR(a.total_cost, b.total_cost, 1e-9);
}

TEST(Horizon, SocStaysInBounds) {
    const auto sc = generate_scenario(small_config(24));
    const auto r = run_horizon(sc, Algorithm::ProposedFramework, RunConfig{});
    ASSERT_EQ(r.soc.rows(), 25);
    for (int t = 0; t <= 24; ++t)
        for (int i = 0; i < sc.size(); ++i) {
            EXPECT_GE(r.soc(t, i), sc.ess[i].soc_min - 1e-9);
            EXPECT_LE(r.soc(t, i), sc.ess[i].soc_max + 1e-9);
        }
    EXPECT_NEAR(r.time_avg_cost, r.total_cost / 24.0, 1e-12);
}

TEST(Horizon, GuaranteeAddsTheta) {
    auto c = small_config(3);
    const auto sc = generate_scenario(c);
    const auto off = run_horizon(sc, Algorithm::Offline, RunConfig{});
    const auto a7 = run_horizon(sc, Algorithm::TheoreticalGuarantee, RunConfig{});
    ASSERT_TRUE(a7.guarantee.has_value());
    EXPECT_NEAR(*a7.guarantee, off.time_avg_cost + std::max(a7.theta, 0.0), 1e-6);
}

TEST(Horizon, TimeAveragedStorageActionBounded) {
    const int T = 96;
    const auto sc = generate_scenario(small_config(T));
    const auto r = run_horizon(sc, Algorithm::ProposedFramework, RunConfig{});
    for (int i = 0; i < sc.size(); ++i) {
        double mean = 0.0;
        for (const auto& s : r.slots) mean += s.decision.w[i];
        mean /= T;
        const auto& p = sc.ess[i];
        const double c = (p.soc_max - p.soc_min) / T;
        EXPECT_GE(mean, (1.0 - p.kappa) * p.soc_min - c) << "prosumer " << i;
        EXPECT_LE(mean, (1.0 - p.kappa) * p.soc_max + c) << "prosumer " << i;
    }
}
