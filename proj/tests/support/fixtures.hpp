#pragma once

#include "p2pm/admm.hpp"
#include "p2pm/market.hpp"
#include "p2pm/network.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <memory>
#include <random>
#include <vector>

namespace p2pm::testing {

// Owns the network data a SlotProblem borrows.
struct Grid {
    NetworkTopology topology;
    SensitivityMatrices sens;
    NetworkLimits limits;
    LossModel losses;

    Grid(const std::vector<Line>& lines, const Eigen::VectorXd& X, double power_base_kw = 1.0,
         NetworkLimits lim = {})
        : topology(make_topology(lines, 1.0, power_base_kw)), sens(build_sensitivity(topology, X)) {
        limits = lim.v_min.size() ? lim : uniform_limits(topology.bus_count, 0.5, 1.5, 1e6, 1e6);
        losses = build_loss_model(topology, 0.0);
    }
};

// Path feeder 0-1-2-..-n with identical lines.
inline std::vector<Line> feeder(int n, double r = 0.01, double x = 0.01) {
    std::vector<Line> lines;
    for (int b = 1; b <= n; ++b) lines.push_back({b - 1, b, r, x});
    return lines;
}

// Random recursive tree; parent of bus b drawn among 0..b-1.
inline std::vector<Line> random_tree(int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> ur(0.001, 0.05);
    std::vector<Line> lines;
    for (int b = 1; b <= n; ++b) {
        std::uniform_int_distribution<int> up(0, b - 1);
        lines.push_back({up(rng), b, ur(rng), ur(rng)});
    }
    std::shuffle(lines.begin(), lines.end(), rng);
    return lines;
}

inline SlotProblem make_slot(const Grid& g, const std::vector<ProsumerParams>& params, const Eigen::VectorXd& pv,
                             const Eigen::VectorXd& demand, double buy, double sell, const Eigen::VectorXd& soc,
                             StoragePolicy policy = {}) {
    SlotProblem sp;
    sp.topology = &g.topology;
    sp.sens = &g.sens;
    sp.limits = &g.limits;
    sp.params = params;
    sp.state.pv = pv;
    sp.state.demand = demand;
    sp.state.price_buy = buy;
    sp.state.price_sell = sell;
    sp.registry = classify_roles(sp.state);
    sp.soc = soc;
    sp.policy.assign(params.size(), policy);
    return sp;
}

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index k = 0;
    for (double x : v) out[k++] = x;
    return out;
}

}  // namespace p2pm::testing
