#include "p2pm/slot_qp.hpp"

#include "p2pm/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace p2pm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Builder {
    std::vector<Eigen::Triplet<double>> Q, Ae, Ai;
    std::vector<double> q, lb, ub, be, bi;
    double constant = 0.0;

    int add_var(double lo, double hi, double lin = 0.0) {
        q.push_back(lin);
        lb.push_back(lo);
        ub.push_back(hi);
        return static_cast<int>(q.size()) - 1;
    }
    int add_eq(double rhs) {
        be.push_back(rhs);
        return static_cast<int>(be.size()) - 1;
    }
    int add_in(double rhs) {
        bi.push_back(rhs);
        return static_cast<int>(bi.size()) - 1;
    }

    QpProblem finish() const {
        const int n = static_cast<int>(q.size());
        QpProblem qp;
        qp.Q.resize(n, n);
        qp.Q.setFromTriplets(Q.begin(), Q.end());
        qp.q = Eigen::Map<const Eigen::VectorXd>(q.data(), n);
        qp.lb = Eigen::Map<const Eigen::VectorXd>(lb.data(), n);
        qp.ub = Eigen::Map<const Eigen::VectorXd>(ub.data(), n);
        qp.constant = constant;
        qp.A_eq.resize(static_cast<int>(be.size()), n);
        qp.A_eq.setFromTriplets(Ae.begin(), Ae.end());
        qp.b_eq = Eigen::Map<const Eigen::VectorXd>(be.data(), static_cast<int>(be.size()));
        qp.A_in.resize(static_cast<int>(bi.size()), n);
        qp.A_in.setFromTriplets(Ai.begin(), Ai.end());
        qp.b_in = Eigen::Map<const Eigen::VectorXd>(bi.data(), static_cast<int>(bi.size()));
        return qp;
    }
};

// ESS split bounds for w in [lo, hi].
std::pair<std::pair<double, double>, std::pair<double, double>> split_box(double lo, double hi) {
    return {{std::max(lo, 0.0), std::max(hi, 0.0)}, {std::max(-hi, 0.0), std::max(-lo, 0.0)}};
}

void add_network_rows(Builder& b, const SlotProblem& sp, const SlotQpLayout& L) {
    const int n = sp.size();
    const double inv_h = 1.0 / sp.slot_hours;
    const Eigen::VectorXd X = sp.reactive_ratios();
    const Eigen::MatrixXd& Z = sp.sens->Z;
    const Eigen::MatrixXd& B = sp.sens->B;
    const NetworkLimits& lim = *sp.limits;
    const double v0 = sp.topology->v0;
    auto rows = [&](auto coef, double upper, double lower) {
        const int hi = b.add_in(upper), lo = b.add_in(-lower);
        for (int j = 0; j < n; ++j) {
            const double c = coef(j) * inv_h;
            if (c == 0.0) continue;
            b.Ai.emplace_back(hi, L.p_idx[j], c);
            b.Ai.emplace_back(lo, L.p_idx[j], -c);
        }
    };
    for (int i = 0; i < n; ++i) {
        if (std::isfinite(lim.v_max[i]) || std::isfinite(lim.v_min[i]))
            rows([&](int j) { return Z(i, j); }, lim.v_max[i] - v0, lim.v_min[i] - v0);
    }
    for (int l = 0; l < static_cast<int>(B.rows()); ++l) {
        rows([&](int j) { return B(l, j); }, lim.P_max[l], lim.P_min[l]);
        rows([&](int j) { return B(l, j) * X[j]; }, lim.Q_max[l], lim.Q_min[l]);
    }
}

// Appends one slot; w bounds [w_lo, w_hi] supplied by the caller.
SlotQpLayout append_slot(Builder& b, const SlotProblem& sp, const std::vector<std::pair<double, double>>& wbox,
                         bool drift, bool network) {
    const int n = sp.size();
    const MarketRegistry& reg = sp.registry;
    const SlotState& st = sp.state;
    SlotQpLayout L;
    L.offset = static_cast<int>(b.q.size());

    // Balance rows, one per prosumer that has a sign on its grid exchange.
    std::vector<int> bal(n, -1);

    for (int bi : reg.buyers)
        for (int si : reg.sellers) {
            const auto& pb = sp.params[bi];
            const auto& ps = sp.params[si];
            double a = pb.alpha + ps.alpha;
            if (sp.losses) a += sp.losses->g(bi, si) + sp.losses->g(si, bi);
            const int k = b.add_var(0.0, kInf, ps.beta - pb.beta);
            if (a != 0.0) b.Q.emplace_back(k, k, 2.0 * a);
            L.pairs.emplace_back(bi, si);
            L.pair_idx.push_back(k);
        }

    L.p_idx.assign(n, -1);
    L.wp_idx.assign(n, -1);
    L.wm_idx.assign(n, -1);
    L.y_idx.assign(n, -1);
    for (int i = 0; i < n; ++i) {
        const ProsumerParams& prm = sp.params[i];
        const auto [plo, phi] = injection_box(prm, st.pv[i], st.demand[i]);
        const double dg = st.demand[i] - st.pv[i];
        const Role role = reg.role[i];

        // grid term coefficients on p and w
        double grid_lin = 0.0;
        if (role == Role::Buyer) grid_lin = st.price_buy;
        else if (role == Role::Seller) grid_lin = st.price_sell;
        else grid_lin = st.price_sell;

        const int p = b.add_var(plo, phi, 2.0 * prm.gamma * dg - grid_lin);
        b.Q.emplace_back(p, p, 2.0 * prm.gamma);
        b.constant += prm.gamma * dg * dg;

        const auto [wpb, wmb] = split_box(wbox[i].first, wbox[i].second);
        double wl = grid_lin, wq = 0.0;
        if (drift) {
            wl += sp.policy[i].linear(prm, sp.soc[i]);
            wq = sp.policy[i].curvature();
        }
        const int wp = b.add_var(wpb.first, wpb.second, wl + prm.xi);
        const int wm = b.add_var(wmb.first, wmb.second, -wl + prm.xi);
        if (wq != 0.0) {
            b.Q.emplace_back(wp, wp, wq);
            b.Q.emplace_back(wm, wm, wq);
            b.Q.emplace_back(wp, wm, -wq);
            b.Q.emplace_back(wm, wp, -wq);
        }
        L.p_idx[i] = p;
        L.wp_idx[i] = wp;
        L.wm_idx[i] = wm;

        if (role == Role::Buyer) {
            // z = -sum x + w - p >= 0
            const int r = bal[i] = b.add_in(0.0);
            b.Ai.emplace_back(r, wp, -1.0);
            b.Ai.emplace_back(r, wm, 1.0);
            b.Ai.emplace_back(r, p, 1.0);
        } else if (role == Role::Seller) {
            // z = sum x + w - p <= 0
            const int r = bal[i] = b.add_in(0.0);
            b.Ai.emplace_back(r, wp, 1.0);
            b.Ai.emplace_back(r, wm, -1.0);
            b.Ai.emplace_back(r, p, -1.0);
        } else {
            // y >= w - p carries the buy-side premium
            const int y = b.add_var(0.0, kInf, st.price_buy - st.price_sell);
            L.y_idx[i] = y;
            const int r = b.add_in(0.0);
            b.Ai.emplace_back(r, wp, 1.0);
            b.Ai.emplace_back(r, wm, -1.0);
            b.Ai.emplace_back(r, p, -1.0);
            b.Ai.emplace_back(r, y, -1.0);
        }
    }
    // Trade variables enter both balance rows and the grid terms.
    for (size_t k = 0; k < L.pairs.size(); ++k) {
        const auto [bi, si] = L.pairs[k];
        const int x = L.pair_idx[k];
        b.Ai.emplace_back(bal[bi], x, 1.0);
        b.Ai.emplace_back(bal[si], x, 1.0);
        b.q[x] += -st.price_buy + st.price_sell;
    }
    if (network) add_network_rows(b, sp, L);
    L.end = static_cast<int>(b.q.size());
    return L;
}

}  // namespace

SlotQp build_slot_qp(const SlotProblem& sp, const SlotQpOptions& opt) {
    validate(sp);
    const int n = sp.size();
    if (opt.fixed_w && opt.fixed_w->size() != n) throw DimensionError("fixed ESS vector has wrong length");
    std::vector<std::pair<double, double>> wbox(n);
    for (int i = 0; i < n; ++i) {
        const auto& prm = sp.params[i];
        wbox[i] = opt.headroom ? storage_box(prm, sp.soc[i]) : std::pair{prm.w_min, prm.w_max};
        if (opt.fixed_w) wbox[i] = {(*opt.fixed_w)[i], (*opt.fixed_w)[i]};
    }
    Builder b;
    SlotQp out;
    out.layout = append_slot(b, sp, wbox, opt.drift, opt.network);
    out.qp = b.finish();
    return out;
}

Decision decode_slot(const SlotProblem& sp, const SlotQpLayout& L, const Eigen::VectorXd& x) {
    const int n = sp.size();
    Decision d = Decision::zeros(n);
    for (size_t k = 0; k < L.pairs.size(); ++k) {
        const auto [bi, si] = L.pairs[k];
        const double v = std::max(x[L.pair_idx[k]], 0.0);
        d.e(si, bi) = v;
        d.e(bi, si) = -v;
    }
    for (int i = 0; i < n; ++i) {
        d.p[i] = x[L.p_idx[i]];
        d.w[i] = x[L.wp_idx[i]] - x[L.wm_idx[i]];
    }
    std::tie(d.grid_buy, d.grid_sell) = power_balance(d, sp.registry);
    d.demand = sp.state.pv - d.p;
    return d;
}

HorizonQp build_horizon_qp(const std::vector<SlotProblem>& slots, bool network) {
    if (slots.empty()) throw ConfigError("horizon has no slots");
    const int n = slots.front().size();
    Builder b;
    HorizonQp hq;
    std::vector<int> prev;
    for (size_t t = 0; t < slots.size(); ++t) {
        const SlotProblem& sp = slots[t];
        validate(sp);
        if (sp.size() != n) throw DimensionError("slots differ in prosumer count");
        std::vector<std::pair<double, double>> wbox(n);
        for (int i = 0; i < n; ++i) wbox[i] = {sp.params[i].w_min, sp.params[i].w_max};
        SlotQpLayout L = append_slot(b, sp, wbox, false, network);
        std::vector<int> soc(n);
        for (int i = 0; i < n; ++i) {
            const auto& prm = sp.params[i];
            soc[i] = b.add_var(prm.soc_min, prm.soc_max);
            // S_{t+1} - kappa S_t - w_t = 0
            const double rhs = t == 0 ? prm.kappa * slots[0].soc[i] : 0.0;
            const int r = b.add_eq(rhs);
            b.Ae.emplace_back(r, soc[i], 1.0);
            b.Ae.emplace_back(r, L.wp_idx[i], -1.0);
            b.Ae.emplace_back(r, L.wm_idx[i], 1.0);
            if (t > 0) b.Ae.emplace_back(r, prev[i], -prm.kappa);
        }
        L.end = static_cast<int>(b.q.size());
        hq.slots.push_back(std::move(L));
        hq.soc_idx.push_back(soc);
        prev = std::move(soc);
    }
    hq.qp = b.finish();
    return hq;
}

std::vector<Decision> decode_horizon(const std::vector<SlotProblem>& slots, const HorizonQp& hq,
                                     const Eigen::VectorXd& x) {
    std::vector<Decision> out;
    out.reserve(slots.size());
    for (size_t t = 0; t < slots.size(); ++t) out.push_back(decode_slot(slots[t], hq.slots[t], x));
    return out;
}

}  // namespace p2pm
