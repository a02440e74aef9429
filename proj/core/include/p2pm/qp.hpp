#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace p2pm {

using SparseMatrix = Eigen::SparseMatrix<double>;

// min 1/2 x'Qx + q'x + constant
// s.t. A_eq x = b_eq, A_in x <= b_in, lb <= x <= ub (entries may be infinite)
struct QpProblem {
    SparseMatrix Q;
    Eigen::VectorXd q;
    double constant = 0.0;
    Eigen::VectorXd lb, ub;
    SparseMatrix A_eq;
    Eigen::VectorXd b_eq;
    SparseMatrix A_in;
    Eigen::VectorXd b_in;

    [[nodiscard]] int size() const { return static_cast<int>(q.size()); }
    [[nodiscard]] double value(const Eigen::VectorXd& x) const;
    // Largest violation of any constraint at x.
    [[nodiscard]] double infeasibility(const Eigen::VectorXd& x) const;
};

void validate(const QpProblem& qp);

struct QpResult {
    Eigen::VectorXd x;
    double objective = 0.0;
    int iterations = 0;      // outer iterations
    long inner_iterations = 0;
    bool converged = false;
    double stationarity = 0.0;  // projected Lagrangian gradient, inf-norm
    double infeasibility = 0.0;
};

struct ProjectedGradientOptions {
    double grad_tol = 1e-6;
    double feas_tol = 1e-7;
    double rho = 10.0;
    int max_outer = 60;
    long max_inner = 400000;
};

// Augmented Lagrangian on the linear constraints; each sub-problem is a
// box-constrained smooth QP solved by accelerated projected gradient with
// adaptive restart.
[[nodiscard]] QpResult solve_qp_projected_gradient(const QpProblem& qp, const ProjectedGradientOptions& opt = {},
                                                   const Eigen::VectorXd* x0 = nullptr);

struct InteriorPointOptions {
    double tol = 1e-9;
    int max_iter = 120;
    double regularization = 1e-10;
};

// Mehrotra predictor-corrector on the sparse KKT system.
[[nodiscard]] QpResult solve_qp_interior_point(const QpProblem& qp, const InteriorPointOptions& opt = {});

}  // namespace p2pm
