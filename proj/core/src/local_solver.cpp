#include "p2pm/admm.hpp"
#include "p2pm/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace p2pm {

double storage_cost(const StoragePolicy& pol, const ProsumerParams& prm, double soc, double w) {
    const double quad = pol.quadratic_drift ? 0.5 * w * w : 0.0;
    return pol.delta * ((prm.kappa * soc + pol.epsilon) * w + quad) + pol.extra_curvature * w * w +
           std::abs(prm.xi * w);
}

std::pair<double, double> storage_box(const ProsumerParams& prm, double soc) {
    const double lo = std::max(prm.w_min, prm.soc_min - prm.kappa * soc);
    const double hi = std::min(prm.w_max, prm.soc_max - prm.kappa * soc);
    return {std::min(lo, hi), hi};
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

// argmin over [lo, hi] of curv/2 w^2 + c w + xi |w|.
double storage_argmin(double c, double xi, double curv, double lo, double hi) {
    double w = 0.0;
    if (curv > 0.0) {
        if (c < -xi) w = -(c + xi) / curv;
        else if (c > xi) w = -(c - xi) / curv;
    } else {
        if (c < -xi) w = hi;
        else if (c > xi) w = lo;
    }
    return clamp(w, lo, hi);
}

struct LocalModel {
    const LocalProblem& lp;
    double p_lo, p_hi, w_lo, w_hi, c0, curv;
    bool fixed_w = false;
    double w_fixed = 0.0;

    explicit LocalModel(const LocalProblem& l) : lp(l) {
        if (!(lp.prm.gamma > 0.0)) throw ConfigError("gamma must be positive for the injection update");
        std::tie(p_lo, p_hi) = injection_box(lp.prm, lp.pv, lp.demand);
        std::tie(w_lo, w_hi) = storage_box(lp.prm, lp.soc);
        c0 = lp.policy.linear(lp.prm, lp.soc);
        curv = lp.policy.curvature();
    }

    double trade(size_t j, double m) const {
        const double den = 2.0 * (lp.prm.alpha + lp.loss[j]) + lp.eta;
        const double e = (-lp.prm.beta - m + lp.h[j] + lp.eta * lp.u[j]) / den;
        return lp.role == Role::Buyer ? std::min(e, 0.0) : std::max(e, 0.0);
    }
    double sum_trades(double m) const {
        double s = 0.0;
        for (size_t j = 0; j < lp.h.size(); ++j) s += trade(j, m);
        return s;
    }
    double injection(double m) const {
        return clamp(lp.pv - lp.demand + (m - lp.network_price) / (2.0 * lp.prm.gamma), p_lo, p_hi);
    }
    double storage(double m) const {
        if (fixed_w) return w_fixed;
        return storage_argmin(c0 + m, lp.prm.xi, curv, w_lo, w_hi);
    }
    // Net draw from the grid at marginal price m; nonincreasing in m.
    double z(double m) const { return sum_trades(m) + storage(m) - injection(m); }
};

// lo has z >= 0, hi has z <= 0.
void bisect(const LocalModel& mdl, double& lo, double& hi) {
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (mdl.z(mid) >= 0.0) lo = mid;
        else hi = mid;
    }
}

LocalSolution finish(const LocalModel& mdl, double lo, double hi) {
    LocalSolution s;
    const double m = 0.5 * (lo + hi);
    s.marginal = m;
    s.e.resize(mdl.lp.h.size());
    double se = 0.0;
    for (size_t j = 0; j < s.e.size(); ++j) se += (s.e[j] = mdl.trade(j, m));
    double p = mdl.injection(m);
    double w = mdl.storage(m);
    if (lo != hi) {
        // Close the balance inside the set-valued band of w and p at m.
        w = clamp(p - se, mdl.storage(hi), mdl.storage(lo));
        p = clamp(se + w, mdl.injection(lo), mdl.injection(hi));
    }
    s.p = p;
    s.w = w;
    return s;
}

LocalSolution at_price(const LocalModel& mdl, double m) { return finish(mdl, m, m); }

LocalSolution solve_model(const LocalModel& mdl) {
    const auto& lp = mdl.lp;
    LocalSolution s;
    switch (lp.role) {
        case Role::Buyer: {
            const double top = lp.price_buy;
            if (mdl.z(top) >= 0.0) {
                s = at_price(mdl, top);
                break;
            }
            const double z_floor = (mdl.fixed_w ? mdl.w_fixed : mdl.w_hi) - mdl.p_lo;
            if (z_floor < 0.0) {
                s.feasible = false;
                return s;
            }
            double hi = top, step = 1.0, lo = top - step;
            for (int it = 0; it < 200 && mdl.z(lo) < 0.0; ++it) {
                hi = lo;
                step *= 2.0;
                lo = top - step;
            }
            if (mdl.z(lo) < 0.0) throw SolverError("buyer balance bracket not found", mdl.z(lo));
            bisect(mdl, lo, hi);
            s = finish(mdl, lo, hi);
            break;
        }
        case Role::Seller: {
            const double bottom = lp.price_sell;
            if (mdl.z(bottom) <= 0.0) {
                s = at_price(mdl, bottom);
                break;
            }
            const double s_floor = mdl.p_hi - (mdl.fixed_w ? mdl.w_fixed : mdl.w_lo);
            if (s_floor < 0.0) {
                s.feasible = false;
                return s;
            }
            double lo = bottom, step = 1.0, hi = bottom + step;
            for (int it = 0; it < 200 && mdl.z(hi) > 0.0; ++it) {
                lo = hi;
                step *= 2.0;
                hi = bottom + step;
            }
            if (mdl.z(hi) > 0.0) throw SolverError("seller balance bracket not found", mdl.z(hi));
            bisect(mdl, lo, hi);
            s = finish(mdl, lo, hi);
            break;
        }
        case Role::Neutral: {
            if (mdl.z(lp.price_buy) >= 0.0) s = at_price(mdl, lp.price_buy);
            else if (mdl.z(lp.price_sell) <= 0.0) s = at_price(mdl, lp.price_sell);
            else {
                double lo = lp.price_sell, hi = lp.price_buy;
                bisect(mdl, lo, hi);
                s = finish(mdl, lo, hi);
            }
            break;
        }
    }
    if (lp.role == Role::Buyer) s.mu = std::max(lp.price_buy - s.marginal, 0.0);
    else if (lp.role == Role::Seller) s.mu = std::max(s.marginal - lp.price_sell, 0.0);
    return s;
}

}  // namespace

double local_lagrangian(const LocalProblem& lp, const std::vector<double>& e, double p, double w) {
    constexpr double tol = 1e-9;
    double L = 0.0, se = 0.0;
    for (size_t j = 0; j < e.size(); ++j) {
        if ((lp.role == Role::Buyer && e[j] > tol) || (lp.role == Role::Seller && e[j] < -tol)) return kInf;
        const double gap = lp.u[j] - e[j];
        L += (lp.prm.alpha + lp.loss[j]) * e[j] * e[j] + lp.prm.beta * e[j] + lp.h[j] * gap +
             0.5 * lp.eta * gap * gap;
        se += e[j];
    }
    const auto [p_lo, p_hi] = injection_box(lp.prm, lp.pv, lp.demand);
    const auto [w_lo, w_hi] = storage_box(lp.prm, lp.soc);
    if (p < p_lo - tol || p > p_hi + tol || w < w_lo - tol || w > w_hi + tol) return kInf;
    const double dev = p - lp.pv + lp.demand;
    L += lp.prm.gamma * dev * dev + storage_cost(lp.policy, lp.prm, lp.soc, w) + lp.network_price * p;
    const double z = se + w - p;
    switch (lp.role) {
        case Role::Buyer:
            if (z < -tol) return kInf;
            L += lp.price_buy * std::max(z, 0.0);
            break;
        case Role::Seller:
            if (z > tol) return kInf;
            L -= lp.price_sell * std::max(-z, 0.0);
            break;
        case Role::Neutral:
            L += lp.price_buy * std::max(z, 0.0) - lp.price_sell * std::max(-z, 0.0);
            break;
    }
    return L;
}

LocalSolution solve_local(const LocalProblem& lp) {
    if (lp.h.size() != lp.u.size() || lp.h.size() != lp.loss.size())
        throw DimensionError("local problem partner vectors differ in length");
    LocalModel mdl(lp);
    if (lp.policy.rule == StorageRule::Continuous) return solve_model(mdl);

    if (lp.policy.committed && *lp.policy.committed >= mdl.w_lo - 1e-12 && *lp.policy.committed <= mdl.w_hi + 1e-12) {
        mdl.fixed_w = true;
        mdl.w_fixed = *lp.policy.committed;
        LocalSolution s = solve_model(mdl);
        if (s.feasible) return s;
        mdl.fixed_w = false;
    }

    // Support-point rule: try 0 first so exact ties resolve to inaction.
    const double cand[3] = {0.0, lp.prm.w_min, lp.prm.w_max};
    LocalSolution best;
    best.feasible = false;
    double best_val = kInf;
    for (double w : cand) {
        if (w < mdl.w_lo - 1e-12 || w > mdl.w_hi + 1e-12) continue;
        mdl.fixed_w = true;
        mdl.w_fixed = w;
        LocalSolution s = solve_model(mdl);
        if (!s.feasible) continue;
        const double val = local_lagrangian(lp, s.e, s.p, s.w);
        if (val < best_val) {
            best_val = val;
            best = s;
        }
    }
    if (!best.feasible) {
        // Headroom rules out every support point; fall back to the interval.
        mdl.fixed_w = false;
        return solve_model(mdl);
    }
    return best;
}

LocalProblem make_local_problem(int i, const SlotProblem& sp, const DualState& duals, double R_i, double eta) {
    LocalProblem lp;
    lp.role = sp.registry.role[i];
    lp.prm = sp.params[i];
    lp.policy = sp.policy[i];
    lp.soc = sp.soc[i];
    lp.pv = sp.state.pv[i];
    lp.demand = sp.state.demand[i];
    lp.price_buy = sp.state.price_buy;
    lp.price_sell = sp.state.price_sell;
    lp.network_price = R_i;
    lp.eta = eta;
    const auto& partners = sp.registry.partners[i];
    lp.h.reserve(partners.size());
    lp.u.reserve(partners.size());
    lp.loss.reserve(partners.size());
    for (int j : partners) {
        lp.h.push_back(duals.h(i, j));
        lp.u.push_back(duals.u(i, j));
        lp.loss.push_back(sp.losses ? sp.losses->g(i, j) : 0.0);
    }
    return lp;
}

}  // namespace p2pm
