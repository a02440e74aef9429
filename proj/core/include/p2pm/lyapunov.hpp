#pragma once

#include "p2pm/market.hpp"

#include <Eigen/Dense>

#include <vector>

namespace p2pm {

// Drift weight and queue shift of one prosumer.
struct LyapunovParams {
    double delta = 0.04;
    double epsilon = 0.0;
};

struct GapSearch {
    double delta_min = 1e-2;
    double delta_max = 5e-2;
    double delta_step = 1e-3;
};

struct EssState {
    Eigen::VectorXd soc;
    Eigen::VectorXd soc_tilde;
};

[[nodiscard]] EssState make_ess_state(const Eigen::VectorXd& soc, const std::vector<LyapunovParams>& lp);

// delta * [kappa*S~*w + eps*(1-kappa)*w + w^2/2]
[[nodiscard]] double drift_penalty(const LyapunovParams& lp, double soc_tilde, double w, const ProsumerParams& prm);

// The constant M of the one-step drift bound, squared max-term form.
[[nodiscard]] double drift_upper_constant(const ProsumerParams& prm, const LyapunovParams& lp, double soc_tilde);

// 1/2 delta [(kappa*S~ + w + (1-kappa)eps)^2 - S~^2]
[[nodiscard]] double exact_drift(const ProsumerParams& prm, const LyapunovParams& lp, double soc_tilde, double w);

// S' = kappa*S + w. Throws InvariantViolation when S' leaves [S_min, S_max]
// by more than tol.
[[nodiscard]] double next_soc(const ProsumerParams& prm, double soc, double w, double tol = 1e-9);
[[nodiscard]] EssState update_soc(const EssState& ess, const Eigen::VectorXd& w,
                                  const std::vector<ProsumerParams>& params,
                                  const std::vector<LyapunovParams>& lp);

struct ThetaTerms {
    double theta1 = 0.0;
    double theta2 = 0.0;
    double theta3 = 0.0;
    double theta4 = 0.0;
    [[nodiscard]] double total() const { return theta1 + theta2 + theta3 + theta4; }
};

[[nodiscard]] ThetaTerms theta_terms(const ProsumerParams& prm, const LyapunovParams& lp);

// Single-expression form of the gap for one prosumer.
[[nodiscard]] double theta_closed(const ProsumerParams& prm, const LyapunovParams& lp);

struct GapBound {
    double theta = 0.0;
    ThetaTerms terms;
    std::vector<double> per_prosumer;
    std::vector<double> M;       // drift constant at S~ = 0
    std::vector<double> Lambda;  // max((S_min+eps)^2, (S_max+eps)^2)
    std::vector<double> Pi;
    std::vector<double> O_star;
    std::vector<double> delta_star;
    std::vector<double> epsilon_star;

    [[nodiscard]] double clamped() const { return theta > 0.0 ? theta : 0.0; }
};

[[nodiscard]] GapBound theta_bound(const std::vector<ProsumerParams>& params, const std::vector<LyapunovParams>& lp);

struct GapResult {
    double delta_star = 0.0;
    double epsilon_star = 0.0;
    double O_star = 0.0;  // [Theta]^+ at the minimizer
    double Lambda = 0.0;
    double Pi = 0.0;
    int evaluated = 0;    // number of delta values swept
};

// Inner problem at fixed delta: min over eps in [lo, hi] with the auxiliary
// Lambda tight at the max-term. Returns the objective, writes the minimizer.
[[nodiscard]] double solve_gap_inner(const ProsumerParams& prm, double delta, double eps_lo, double eps_hi,
                                     double* eps_out);

// Sweep delta over [delta_min, delta_max] in delta_step increments. The
// default shift box is [-S_max, -S_min].
[[nodiscard]] GapResult minimize_gap(const ProsumerParams& prm, const GapSearch& search);
[[nodiscard]] GapResult minimize_gap(const ProsumerParams& prm, const GapSearch& search, double eps_lo,
                                     double eps_hi);

}  // namespace p2pm
