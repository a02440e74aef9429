#include "p2pm/lyapunov.hpp"

#include "p2pm/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace p2pm {

namespace {

double max_term(const ProsumerParams& prm, double eps) {
    const double lo = prm.soc_min + eps, hi = prm.soc_max + eps;
    return std::max(lo * lo, hi * hi);
}

}  // namespace

EssState make_ess_state(const Eigen::VectorXd& soc, const std::vector<LyapunovParams>& lp) {
    if (static_cast<size_t>(soc.size()) != lp.size()) throw DimensionError("SoC and Lyapunov parameter count differ");
    EssState s;
    s.soc = soc;
    s.soc_tilde = soc;
    for (size_t i = 0; i < lp.size(); ++i) s.soc_tilde[i] += lp[i].epsilon;
    return s;
}

double drift_penalty(const LyapunovParams& lp, double st, double w, const ProsumerParams& prm) {
    return lp.delta * (prm.kappa * st * w + lp.epsilon * (1.0 - prm.kappa) * w + 0.5 * w * w);
}

double drift_upper_constant(const ProsumerParams& prm, const LyapunovParams& lp, double st) {
    const double k = prm.kappa, e = lp.epsilon;
    return lp.delta * (0.5 * (k * k - 1.0) * max_term(prm, e) + k * (1.0 - k) * st * e +
                       0.5 * (1.0 - k) * (1.0 - k) * e * e);
}

double exact_drift(const ProsumerParams& prm, const LyapunovParams& lp, double st, double w) {
    const double next = prm.kappa * st + w + (1.0 - prm.kappa) * lp.epsilon;
    return 0.5 * lp.delta * (next * next - st * st);
}

double next_soc(const ProsumerParams& prm, double soc, double w, double tol) {
    double s = prm.kappa * soc + w;
    if (s > prm.soc_max + tol || s < prm.soc_min - tol) {
        std::ostringstream os;
        os << "SoC of prosumer at bus " << prm.bus << " leaves [" << prm.soc_min << ", " << prm.soc_max
           << "]: " << s;
        throw InvariantViolation(os.str());
    }
    return std::clamp(s, prm.soc_min, prm.soc_max);
}

EssState update_soc(const EssState& ess, const Eigen::VectorXd& w, const std::vector<ProsumerParams>& params,
                    const std::vector<LyapunovParams>& lp) {
    const auto n = ess.soc.size();
    if (w.size() != n || static_cast<Eigen::Index>(params.size()) != n)
        throw DimensionError("update_soc size mismatch");
    Eigen::VectorXd s(n);
    for (Eigen::Index i = 0; i < n; ++i) s[i] = next_soc(params[i], ess.soc[i], w[i]);
    return make_ess_state(s, lp);
}

ThetaTerms theta_terms(const ProsumerParams& prm, const LyapunovParams& lp) {
    const double k = prm.kappa, d = lp.delta, e = lp.epsilon;
    const double mx = max_term(prm, e);
    const double dw = prm.w_max - prm.w_min;
    ThetaTerms t;
    t.theta1 = d * (0.5 * (k * k - 1.0) * mx + 0.5 * (1.0 - k) * (1.0 - k) * e * e);
    t.theta2 = d * k * (1.0 - k) * mx;
    t.theta3 = 0.5 * d * ((1.0 - k) * (1.0 - k) * prm.soc_max * prm.soc_max + dw * dw);
    t.theta4 = 0.0;
    return t;
}

double theta_closed(const ProsumerParams& prm, const LyapunovParams& lp) {
    const double k = prm.kappa, d = lp.delta, e = lp.epsilon;
    const double dw = prm.w_max - prm.w_min;
    return d * (k - 0.5 - 0.5 * k * k) * max_term(prm, e) + 0.5 * d * (k - 1.0) * (k - 1.0) * prm.soc_max * prm.soc_max +
           0.5 * d * (1.0 - k) * (1.0 - k) * e * e + 0.5 * d * dw * dw;
}

GapBound theta_bound(const std::vector<ProsumerParams>& params, const std::vector<LyapunovParams>& lp) {
    if (params.size() != lp.size()) throw DimensionError("theta_bound size mismatch");
    GapBound g;
    for (size_t i = 0; i < params.size(); ++i) {
        const ThetaTerms t = theta_terms(params[i], lp[i]);
        g.terms.theta1 += t.theta1;
        g.terms.theta2 += t.theta2;
        g.terms.theta3 += t.theta3;
        g.terms.theta4 += t.theta4;
        g.per_prosumer.push_back(t.total());
        g.M.push_back(drift_upper_constant(params[i], lp[i], 0.0));
        const double lam = max_term(params[i], lp[i].epsilon);
        g.Lambda.push_back(lam);
        const double k = params[i].kappa;
        g.Pi.push_back(lp[i].delta * (k - 0.5 - 0.5 * k * k) * lam);
        g.delta_star.push_back(lp[i].delta);
        g.epsilon_star.push_back(lp[i].epsilon);
        g.O_star.push_back(std::max(t.total(), 0.0));
    }
    g.theta = g.terms.total();
    return g;
}

double solve_gap_inner(const ProsumerParams& prm, double delta, double lo, double hi, double* eps_out) {
    if (lo > hi) throw ConfigError("empty shift box");
    // With Lambda tight the objective is linear on each side of the point
    // where the two squared terms swap, so the optimum is at a box end or
    // at that breakpoint.
    const double bp = -0.5 * (prm.soc_min + prm.soc_max);
    double cand[3] = {lo, bp, hi};
    int count = (bp > lo && bp < hi) ? 3 : 2;
    if (count == 2) cand[1] = hi;
    double best = std::numeric_limits<double>::infinity(), arg = lo;
    for (int c = 0; c < count; ++c) {
        const double v = theta_closed(prm, LyapunovParams{delta, cand[c]});
        if (v < best) {
            best = v;
            arg = cand[c];
        }
    }
    if (eps_out) *eps_out = arg;
    return best;
}

GapResult minimize_gap(const ProsumerParams& prm, const GapSearch& search) {
    return minimize_gap(prm, search, -prm.soc_max, -prm.soc_min);
}

GapResult minimize_gap(const ProsumerParams& prm, const GapSearch& s, double lo, double hi) {
    if (!(s.delta_step > 0.0)) throw ConfigError("delta step must be positive");
    if (!(s.delta_min <= s.delta_max)) throw ConfigError("empty delta sweep range");
    if (!(s.delta_min > 0.0)) throw ConfigError("delta must be positive");
    GapResult r;
    r.O_star = std::numeric_limits<double>::infinity();
    const double guard = 1e-9 * s.delta_step;
    for (int k = 0;; ++k) {
        const double d = s.delta_min + k * s.delta_step;
        if (d > s.delta_max + guard) break;
        double eps = 0.0;
        const double o = std::max(solve_gap_inner(prm, d, lo, hi, &eps), 0.0);
        ++r.evaluated;
        if (o <= r.O_star) {
            r.O_star = o;
            r.delta_star = d;
            r.epsilon_star = eps;
        }
    }
    r.Lambda = max_term(prm, r.epsilon_star);
    const double k = prm.kappa;
    r.Pi = r.delta_star * (k - 0.5 - 0.5 * k * k) * r.Lambda;
    return r;
}

}  // namespace p2pm
