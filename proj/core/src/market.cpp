#include "p2pm/market.hpp"

#include "p2pm/error.hpp"

#include <cmath>
#include <string>

namespace p2pm {

void validate(const ProsumerParams& p) {
    const std::string who = "prosumer at bus " + std::to_string(p.bus) + ": ";
    if (!(p.alpha >= 0.0) || !(p.beta >= 0.0)) throw ConfigError(who + "alpha and beta must be >= 0");
    if (!(p.gamma >= 0.0)) throw ConfigError(who + "gamma must be >= 0");
    if (!(p.xi >= 0.0)) throw ConfigError(who + "xi must be >= 0");
    if (!(p.kappa > 0.0 && p.kappa <= 1.0)) throw ConfigError(who + "kappa must lie in (0, 1]");
    if (!(p.soc_min >= 0.0 && p.soc_min < p.soc_max)) throw ConfigError(who + "need 0 <= S_min < S_max");
    if (!(p.w_min <= 0.0 && 0.0 <= p.w_max)) throw ConfigError(who + "need w_min <= 0 <= w_max");
    if (!(p.reactive_ratio >= 0.0)) throw ConfigError(who + "reactive ratio must be >= 0");
    if (!(p.d_min_frac >= 0.0 && p.d_min_frac <= 1.0 && p.d_max_frac >= 1.0))
        throw ConfigError(who + "demand fractions must bracket 1");
}

void validate(const SlotState& s, int n) {
    if (s.pv.size() != n || s.demand.size() != n)
        throw DimensionError("slot " + std::to_string(s.t) + " profile length mismatch");
    for (int i = 0; i < n; ++i)
        if (!(s.pv[i] >= 0.0) || !(s.demand[i] >= 0.0))
            throw ConfigError("slot " + std::to_string(s.t) + ": negative generation or demand");
    if (!(s.price_sell >= 0.0) || !(s.price_buy >= s.price_sell))
        throw ConfigError("slot " + std::to_string(s.t) + ": need price_buy >= price_sell >= 0");
}

const char* to_string(Role r) {
    switch (r) {
        case Role::Buyer: return "buyer";
        case Role::Seller: return "seller";
        case Role::Neutral: return "neutral";
    }
    return "unknown";
}

MarketRegistry classify_roles(const SlotState& state) {
    const int n = static_cast<int>(state.pv.size());
    MarketRegistry reg;
    reg.role.assign(n, Role::Neutral);
    reg.partners.assign(n, {});
    for (int i = 0; i < n; ++i) {
        const double net = state.pv[i] - state.demand[i];
        if (net > 0.0) {
            reg.role[i] = Role::Seller;
            reg.sellers.push_back(i);
        } else if (net < 0.0) {
            reg.role[i] = Role::Buyer;
            reg.buyers.push_back(i);
        }
    }
    if (reg.active()) {
        for (int b : reg.buyers) reg.partners[b] = reg.sellers;
        for (int s : reg.sellers) reg.partners[s] = reg.buyers;
    }
    return reg;
}

Decision Decision::zeros(int n) {
    Decision d;
    d.e = Eigen::MatrixXd::Zero(n, n);
    d.p = d.w = d.grid_buy = d.grid_sell = d.demand = Eigen::VectorXd::Zero(n);
    return d;
}

double Decision::traded_energy() const { return e.cwiseMax(0.0).sum(); }

std::pair<Eigen::VectorXd, Eigen::VectorXd> power_balance(const Decision& d, const MarketRegistry& reg) {
    const int n = reg.size();
    Eigen::VectorXd pb = Eigen::VectorXd::Zero(n), ps = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        const double z = d.e.row(i).sum() + d.w[i] - d.p[i];
        switch (reg.role[i]) {
            case Role::Buyer: pb[i] = std::max(z, 0.0); break;
            case Role::Seller: ps[i] = std::max(-z, 0.0); break;
            case Role::Neutral:
                pb[i] = std::max(z, 0.0);
                ps[i] = std::max(-z, 0.0);
                break;
        }
    }
    return {pb, ps};
}

LossModel build_loss_model(const NetworkTopology& topology, double tau) {
    const int n = topology.bus_count;
    LossModel lm;
    lm.tau = tau;
    lm.impedance = (topology.r.array().square() + topology.x.array().square()).sqrt().matrix();
    lm.g = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            double z = 0.0;
            for (int l : path_lines(topology, i + 1, j + 1)) z += lm.impedance[l];
            lm.g(i, j) = lm.g(j, i) = tau * z;
        }
    }
    return lm;
}

std::pair<double, double> injection_box(const ProsumerParams& prm, double pv, double demand) {
    return {pv - prm.d_max_frac * demand, pv - prm.d_min_frac * demand};
}

double prosumer_objective(int i, const Decision& d, const SlotState& s, const ProsumerParams& prm,
                          const MarketRegistry& reg, const LossModel* losses) {
    double cost = 0.0;
    for (int j : reg.partners[i]) {
        const double e = d.e(i, j);
        cost += prm.alpha * e * e + prm.beta * e;
        if (losses) cost += losses->g(i, j) * e * e;
    }
    const double dev = d.p[i] - s.pv[i] + s.demand[i];
    cost += prm.gamma * dev * dev + std::abs(prm.xi * d.w[i]);
    const double z = d.e.row(i).sum() + d.w[i] - d.p[i];
    double pb = 0.0, ps = 0.0;
    switch (reg.role[i]) {
        case Role::Buyer: pb = std::max(z, 0.0); break;
        case Role::Seller: ps = std::max(-z, 0.0); break;
        case Role::Neutral:
            pb = std::max(z, 0.0);
            ps = std::max(-z, 0.0);
            break;
    }
    return cost - s.price_sell * ps + s.price_buy * pb;
}

double objective(const Decision& d, const SlotState& s, const std::vector<ProsumerParams>& params,
                 const MarketRegistry& reg, const LossModel* losses) {
    double total = 0.0;
    for (int i = 0; i < reg.size(); ++i) total += prosumer_objective(i, d, s, params[i], reg, losses);
    return total;
}

}  // namespace p2pm
