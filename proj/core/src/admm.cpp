#include "p2pm/admm.hpp"

#include "p2pm/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace p2pm {

void validate(const AdmmConfig& c) {
    if (!(c.eta > 0.0)) throw ConfigError("eta must be positive");
    if (!(c.tau_p > 0.0 && c.tau_u > 0.0 && c.tau_v > 0.0 && c.tau_P > 0.0 && c.tau_Q > 0.0 && c.tau_w > 0.0))
        throw ConfigError("dual step sizes must be positive");
    if (!(c.tol > 0.0)) throw ConfigError("tol must be positive");
    if (!(c.network_tol >= 0.0)) throw ConfigError("network_tol must be nonnegative");
    if (c.k_max < 1) throw ConfigError("k_max must be at least 1");
}

DualState DualState::zeros(int n) {
    DualState d;
    d.h = d.u = Eigen::MatrixXd::Zero(n, n);
    const Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
    d.mu = d.rho_p_up = d.rho_p_lo = d.rho_w_up = d.rho_w_lo = z;
    d.rho_v_up = d.rho_v_lo = d.rho_P_up = d.rho_P_lo = d.rho_Q_up = d.rho_Q_lo = z;
    return d;
}

double DualState::min_multiplier() const {
    const Eigen::VectorXd* all[] = {&mu,       &rho_p_up, &rho_p_lo, &rho_w_up, &rho_w_lo, &rho_v_up,
                                    &rho_v_lo, &rho_P_up, &rho_P_lo, &rho_Q_up, &rho_Q_lo};
    double m = std::numeric_limits<double>::infinity();
    for (const auto* v : all)
        if (v->size() > 0) m = std::min(m, v->minCoeff());
    return m;
}

Eigen::VectorXd SlotProblem::reactive_ratios() const {
    Eigen::VectorXd x(size());
    for (int i = 0; i < size(); ++i) x[i] = params[i].reactive_ratio;
    return x;
}

void validate(const SlotProblem& sp) {
    if (!sp.topology || !sp.sens || !sp.limits) throw ConfigError("slot problem lacks network data");
    const int n = sp.size();
    if (sp.topology->bus_count != n) throw DimensionError("prosumer count differs from bus count");
    if (sp.registry.size() != n || sp.soc.size() != n || static_cast<int>(sp.policy.size()) != n)
        throw DimensionError("slot problem vectors differ in length");
    validate(sp.state, n);
    if (!(sp.slot_hours > 0.0)) throw ConfigError("slot length must be positive");
    for (const auto& p : sp.params) validate(p);
}

double update_trade(Role role, const ProsumerParams& prm, double price, double mu, double h, double u, double eta,
                    double loss_g) {
    const double den = 2.0 * (prm.alpha + loss_g) + eta;
    switch (role) {
        case Role::Buyer: return std::min((-prm.beta - price + mu + h + eta * u) / den, 0.0);
        case Role::Seller: return std::max((-prm.beta - price - mu + h + eta * u) / den, 0.0);
        case Role::Neutral: return 0.0;
    }
    return 0.0;
}

namespace {

double role_price(Role r, const SlotState& s) { return r == Role::Seller ? s.price_sell : s.price_buy; }

// Sign with which mu enters the marginal price of energy.
double mu_sign(Role r) { return r == Role::Buyer ? -1.0 : (r == Role::Seller ? 1.0 : 0.0); }

}  // namespace

Eigen::VectorXd update_trades(int i, const SlotProblem& sp, const DualState& duals, double eta) {
    const Role role = sp.registry.role[i];
    const auto& partners = sp.registry.partners[i];
    Eigen::VectorXd row(partners.size());
    for (size_t k = 0; k < partners.size(); ++k) {
        const int j = partners[k];
        row[static_cast<Eigen::Index>(k)] =
            update_trade(role, sp.params[i], role_price(role, sp.state), duals.mu[i], duals.h(i, j), duals.u(i, j),
                         eta, sp.losses ? sp.losses->g(i, j) : 0.0);
    }
    return row;
}

double update_storage(Role role, const ProsumerParams& prm, const StoragePolicy& pol, double soc, double price,
                      double mu, double rho_w_up, double rho_w_lo) {
    const double c = pol.linear(prm, soc) + price + mu_sign(role) * mu + rho_w_up - rho_w_lo;
    const double curv = pol.curvature();
    const auto [lo, hi] = storage_box(prm, soc);
    if (pol.rule == StorageRule::SupportPoints) {
        if (pol.committed) return std::clamp(*pol.committed, lo, hi);
        const double cand[3] = {0.0, prm.w_min, prm.w_max};
        double best = std::numeric_limits<double>::infinity(), arg = std::clamp(0.0, lo, hi);
        for (double w : cand) {
            if (w < lo - 1e-12 || w > hi + 1e-12) continue;
            const double v = c * w + 0.5 * curv * w * w + std::abs(prm.xi * w);
            if (v < best) {
                best = v;
                arg = w;
            }
        }
        return arg;
    }
    double w = 0.0;
    if (curv > 0.0) {
        const double charge = std::min(std::max(-(prm.xi + c) / curv, 0.0), prm.soc_max - prm.kappa * soc);
        const double discharge = std::max(-std::max((-prm.xi + c) / curv, 0.0), prm.soc_min - prm.kappa * soc);
        if (charge > 0.0) w = charge;
        else if (discharge < 0.0) w = discharge;
    } else {
        if (c < -prm.xi) w = hi;
        else if (c > prm.xi) w = lo;
    }
    return std::clamp(w, lo, hi);
}

double update_injection(Role role, const ProsumerParams& prm, double pv, double demand, double price, double mu,
                        double rho_p_up, double rho_p_lo, double R) {
    if (!(prm.gamma > 0.0)) throw ConfigError("gamma must be positive for the injection update");
    return (2.0 * prm.gamma * (pv - demand) + price + mu_sign(role) * mu + rho_p_up - rho_p_lo - R) /
           (2.0 * prm.gamma);
}

std::pair<double, double> update_auxiliary(double e_ij, double e_ji, double h_ij, double h_ji, double eta) {
    const double u = (eta * (e_ij - e_ji) - (h_ij - h_ji)) / (2.0 * eta);
    return {u, -u};
}

double price_ascent(double h, double u, double e, double eta) { return h + eta * (u - e); }

double update_prices(double h_ij, double h_ji, double u_ij, double e_ij, double u_ji, double e_ji, double eta) {
    return 0.5 * (price_ascent(h_ij, u_ij, e_ij, eta) + price_ascent(h_ji, u_ji, e_ji, eta));
}

double balance_residual(Role role, double sum_e, double w, double p) {
    return role == Role::Seller ? p - sum_e - w : sum_e + w - p;
}

double update_mu(double mu, double r, double tau_u) { return std::max(mu - tau_u * r, 0.0); }

std::pair<double, double> update_rho_p(double up, double lo, double p, double pv, double d_min, double d_max,
                                       double tau_p) {
    return {std::max(up - tau_p * (p - pv + d_max), 0.0), std::max(lo + tau_p * (p - pv + d_min), 0.0)};
}

std::pair<double, double> update_rho_box(double up, double lo, double value, double vmin, double vmax, double tau) {
    return {std::max(up + tau * (value - vmax), 0.0), std::max(lo - tau * (value - vmin), 0.0)};
}

void update_network_duals(DualState& d, const FlowState& f, const NetworkLimits& lim, const AdmmConfig& c,
                          double slot_hours) {
    if (!(slot_hours > 0.0)) throw ConfigError("slot length must be positive");
    const double tv = c.tau_v * slot_hours, tP = c.tau_P * slot_hours, tQ = c.tau_Q * slot_hours;
    for (Eigen::Index i = 0; i < f.v.size(); ++i) {
        std::tie(d.rho_v_up[i], d.rho_v_lo[i]) =
            update_rho_box(d.rho_v_up[i], d.rho_v_lo[i], f.v[i], lim.v_min[i], lim.v_max[i], tv);
        std::tie(d.rho_P_up[i], d.rho_P_lo[i]) =
            update_rho_box(d.rho_P_up[i], d.rho_P_lo[i], f.P[i], lim.P_min[i], lim.P_max[i], tP);
        std::tie(d.rho_Q_up[i], d.rho_Q_lo[i]) =
            update_rho_box(d.rho_Q_up[i], d.rho_Q_lo[i], f.Q[i], lim.Q_min[i], lim.Q_max[i], tQ);
    }
}

NetworkPriceSignal compute_network_price(const SensitivityMatrices& sens, const DualState& d,
                                         const Eigen::VectorXd& X) {
    NetworkPriceSignal s;
    s.R = sens.Z.transpose() * (d.rho_v_up - d.rho_v_lo) + sens.B.transpose() * (d.rho_P_up - d.rho_P_lo) +
          X.cwiseProduct(sens.B.transpose() * (d.rho_Q_up - d.rho_Q_lo));
    return s;
}

double residual_contribution(const std::vector<double>& e_out, const std::vector<double>& e_in,
                             const std::vector<double>& u, const std::vector<double>& u_prev) {
    double acc = 0.0;
    for (size_t q = 0; q < e_out.size(); ++q) {
        const double a = e_out[q] + e_in[q], b = u[q] - e_out[q], c = u[q] - u_prev[q];
        acc += a * a + b * b + c * c;
    }
    return acc;
}

double residual(const MarketRegistry& reg, const Eigen::MatrixXd& e, const Eigen::MatrixXd& u,
                const Eigen::MatrixXd& u_prev) {
    double acc = 0.0;
    std::vector<double> eo, ei, uu, up;
    for (int i = 0; i < reg.size(); ++i) {
        eo.clear();
        ei.clear();
        uu.clear();
        up.clear();
        for (int j : reg.partners[i]) {
            eo.push_back(e(i, j));
            ei.push_back(e(j, i));
            uu.push_back(u(i, j));
            up.push_back(u_prev(i, j));
        }
        acc += residual_contribution(eo, ei, uu, up);
    }
    return std::sqrt(acc);
}

double slot_objective(const SlotProblem& sp, const Decision& d) {
    double total = objective(d, sp.state, sp.params, sp.registry, sp.losses);
    for (int i = 0; i < sp.size(); ++i)
        total += storage_cost(sp.policy[i], sp.params[i], sp.soc[i], d.w[i]) - std::abs(sp.params[i].xi * d.w[i]);
    return total;
}

FlowState slot_flows(const SlotProblem& sp, const Eigen::VectorXd& p_kwh) {
    return evaluate_flows(*sp.sens, *sp.topology, p_kwh / sp.slot_hours, sp.reactive_ratios());
}

Decision assemble_decision(const SlotProblem& sp, const std::vector<LocalSolution>& local) {
    const int n = sp.size();
    Decision d = Decision::zeros(n);
    for (int i = 0; i < n; ++i) {
        const auto& partners = sp.registry.partners[i];
        for (size_t k = 0; k < partners.size() && k < local[i].e.size(); ++k) d.e(i, partners[k]) = local[i].e[k];
        d.p[i] = local[i].p;
        d.w[i] = local[i].w;
    }
    std::tie(d.grid_buy, d.grid_sell) = power_balance(d, sp.registry);
    d.demand = sp.state.pv - d.p;
    return d;
}

ProsumerView make_view(int i, const SlotProblem& sp) {
    ProsumerView v;
    v.id = i;
    v.role = sp.registry.role[i];
    v.prm = sp.params[i];
    v.policy = sp.policy[i];
    v.soc = sp.soc[i];
    v.pv = sp.state.pv[i];
    v.demand = sp.state.demand[i];
    v.price_buy = sp.state.price_buy;
    v.price_sell = sp.state.price_sell;
    v.partners = sp.registry.partners[i];
    for (int j : v.partners) v.loss.push_back(sp.losses ? sp.losses->g(i, j) : 0.0);
    return v;
}

LocalDuals extract_local_duals(int i, const DualState& d) {
    LocalDuals l;
    l.h = d.h.row(i).transpose();
    l.u = d.u.row(i).transpose();
    l.mu = d.mu[i];
    l.rho_p_up = d.rho_p_up[i];
    l.rho_p_lo = d.rho_p_lo[i];
    l.rho_w_up = d.rho_w_up[i];
    l.rho_w_lo = d.rho_w_lo[i];
    return l;
}

void store_local_duals(int i, const LocalDuals& l, DualState& d) {
    d.h.row(i) = l.h.transpose();
    d.u.row(i) = l.u.transpose();
    d.mu[i] = l.mu;
    d.rho_p_up[i] = l.rho_p_up;
    d.rho_p_lo[i] = l.rho_p_lo;
    d.rho_w_up[i] = l.rho_w_up;
    d.rho_w_lo[i] = l.rho_w_lo;
}

namespace {

LocalProblem local_problem(const ProsumerView& v, const LocalDuals& d, double R_i, double eta) {
    LocalProblem lp;
    lp.role = v.role;
    lp.prm = v.prm;
    lp.policy = v.policy;
    lp.soc = v.soc;
    lp.pv = v.pv;
    lp.demand = v.demand;
    lp.price_buy = v.price_buy;
    lp.price_sell = v.price_sell;
    lp.network_price = R_i;
    lp.eta = eta;
    for (int j : v.partners) {
        lp.h.push_back(d.h[j]);
        lp.u.push_back(d.u[j]);
    }
    lp.loss = v.loss;
    return lp;
}

}  // namespace

LocalSolution sp1_update(const ProsumerView& v, LocalDuals& d, double R_i, const AdmmConfig& cfg) {
    if (cfg.balance == BalanceMode::ExactLocal || v.role == Role::Neutral) {
        LocalSolution s = solve_local(local_problem(v, d, R_i, cfg.eta));
        d.mu = s.mu;
        return s;
    }
    const auto& prm = v.prm;
    const double price = v.role == Role::Seller ? v.price_sell : v.price_buy;
    LocalSolution s;
    double se = 0.0;
    for (size_t q = 0; q < v.partners.size(); ++q) {
        const int j = v.partners[q];
        const double e = update_trade(v.role, prm, price, d.mu, d.h[j], d.u[j], cfg.eta, v.loss[q]);
        s.e.push_back(e);
        se += e;
    }
    s.w = update_storage(v.role, prm, v.policy, v.soc, price, d.mu, d.rho_w_up, d.rho_w_lo);
    s.p = update_injection(v.role, prm, v.pv, v.demand, price, d.mu, d.rho_p_up, d.rho_p_lo, R_i);
    d.mu = update_mu(d.mu, balance_residual(v.role, se, s.w, s.p), cfg.tau_u);
    s.mu = d.mu;
    const double dmin = prm.d_min_frac * v.demand, dmax = prm.d_max_frac * v.demand;
    std::tie(d.rho_p_up, d.rho_p_lo) = update_rho_p(d.rho_p_up, d.rho_p_lo, s.p, v.pv, dmin, dmax, cfg.tau_p);
    std::tie(d.rho_w_up, d.rho_w_lo) = update_rho_box(d.rho_w_up, d.rho_w_lo, s.w, prm.w_min, prm.w_max, cfg.tau_w);
    return s;
}

void pair_update(LocalDuals& d, int j, double e_ij, double e_ji, double h_ji, double eta) {
    const auto [u_ij, u_ji] = update_auxiliary(e_ij, e_ji, d.h[j], h_ji, eta);
    d.h[j] = update_prices(d.h[j], h_ji, u_ij, e_ij, u_ji, e_ji, eta);
    d.u[j] = u_ij;
}

Eigen::VectorXd network_price_per_slot(const SlotProblem& sp, const DualState& d) {
    return compute_network_price(*sp.sens, d, sp.reactive_ratios()).R;
}

double iterate_score(double r, double viol, const AdmmConfig& cfg) {
    const double net = cfg.network_tol > 0.0 ? viol / cfg.network_tol : (viol > 0.0 ? 1e300 : 0.0);
    return std::max(r / cfg.tol, net);
}

SlotSolution solve_slot(const SlotProblem& sp, const AdmmConfig& cfg, const DualState* warm) {
    validate(cfg);
    validate(sp);
    const int n = sp.size();
    const auto& reg = sp.registry;

    DualState duals = (warm && cfg.warm_start) ? *warm : DualState::zeros(n);
    std::vector<ProsumerView> views;
    std::vector<LocalDuals> ld;
    for (int i = 0; i < n; ++i) {
        views.push_back(make_view(i, sp));
        ld.push_back(extract_local_duals(i, duals));
    }
    Eigen::VectorXd R = network_price_per_slot(sp, duals);
    std::vector<LocalSolution> local(n);
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(n, n);

    SlotSolution best;
    double best_score = std::numeric_limits<double>::infinity();
    ConvergenceRecord rec;
    rec.residual.reserve(static_cast<size_t>(std::min(cfg.k_max, 4096)));
    std::vector<LocalDuals> best_ld;

    for (int k = 1; k <= cfg.k_max; ++k) {
        const Eigen::VectorXd R_used = R;

        // Sp1
        for (int i = 0; i < n; ++i) local[i] = sp1_update(views[i], ld[i], R[i], cfg);
        for (int i = 0; i < n; ++i) {
            const auto& partners = reg.partners[i];
            for (size_t q = 0; q < partners.size(); ++q) e(i, partners[q]) = local[i].e[q];
        }

        // Sp2 and Sp3, each side on its own copy; h_ji is the value before this round.
        double acc = 0.0;
        {
            std::vector<Eigen::VectorXd> h_prev(n);
            for (int i = 0; i < n; ++i) h_prev[i] = ld[i].h;
            std::vector<double> eo, ei, uu, up;
            for (int i = 0; i < n; ++i) {
                eo.clear();
                ei.clear();
                uu.clear();
                up.clear();
                for (int j : reg.partners[i]) {
                    up.push_back(ld[i].u[j]);
                    pair_update(ld[i], j, e(i, j), e(j, i), h_prev[j][i], cfg.eta);
                    eo.push_back(e(i, j));
                    ei.push_back(e(j, i));
                    uu.push_back(ld[i].u[j]);
                }
                acc += residual_contribution(eo, ei, uu, up);
            }
        }
        const double r = std::sqrt(acc);

        // Utility side.
        Eigen::VectorXd p(n);
        for (int i = 0; i < n; ++i) p[i] = local[i].p;
        const FlowState flows = slot_flows(sp, p);
        update_network_duals(duals, flows, *sp.limits, cfg, sp.slot_hours);
        R = network_price_per_slot(sp, duals);

        const double viol = max_violation(flows, *sp.limits);
        rec.residual.push_back(r);
        rec.iterations = k;
        rec.network_violation = viol;
        const bool done = r <= cfg.tol && viol <= cfg.network_tol;

        const double score = iterate_score(r, viol, cfg);
        if (done || score < best_score || k == 1) {
            best_score = score;
            best.decision = assemble_decision(sp, local);
            best_ld = ld;
            best.duals = duals;
            best.price.R = R_used;
            best.flows = flows;
        }
        if (done) {
            rec.converged = true;
            break;
        }
    }
    for (int i = 0; i < n; ++i) store_local_duals(i, best_ld[i], best.duals);
    best.record = std::move(rec);
    best.record.network_violation = max_violation(best.flows, *sp.limits);
    best.cost = objective(best.decision, sp.state, sp.params, sp.registry, sp.losses);
    best.objective = slot_objective(sp, best.decision);
    return best;
}

}  // namespace p2pm
