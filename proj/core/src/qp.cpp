#include "p2pm/qp.hpp"

#include "p2pm/error.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace p2pm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& lb, const Eigen::VectorXd& ub) {
    return x.cwiseMax(lb).cwiseMin(ub);
}

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Largest eigenvalue of Q + rho*(Ae'Ae + Ai'Ai) by power iteration.
double lipschitz(const QpProblem& qp, double rho) {
    const int n = qp.size();
    Eigen::VectorXd v = Eigen::VectorXd::Ones(n) / std::sqrt(static_cast<double>(std::max(n, 1)));
    double lam = 0.0;
    for (int it = 0; it < 200; ++it) {
        Eigen::VectorXd w = qp.Q * v;
        if (qp.A_eq.rows()) w += rho * (qp.A_eq.transpose() * (qp.A_eq * v));
        if (qp.A_in.rows()) w += rho * (qp.A_in.transpose() * (qp.A_in * v));
        const double nw = w.norm();
        if (nw == 0.0) return 1.0;
        const double next = v.dot(w);
        v = w / nw;
        if (it > 10 && std::abs(next - lam) <= 1e-6 * std::abs(next)) {
            lam = next;
            break;
        }
        lam = next;
    }
    return 1.05 * lam + 1e-12;
}

}  // namespace

double QpProblem::value(const Eigen::VectorXd& x) const { return 0.5 * x.dot(Q * x) + q.dot(x) + constant; }

double QpProblem::infeasibility(const Eigen::VectorXd& x) const {
    double v = 0.0;
    if (A_eq.rows()) v = std::max(v, inf_norm(A_eq * x - b_eq));
    if (A_in.rows()) v = std::max(v, (A_in * x - b_in).cwiseMax(0.0).maxCoeff());
    v = std::max(v, (lb - x).cwiseMax(0.0).maxCoeff());
    v = std::max(v, (x - ub).cwiseMax(0.0).maxCoeff());
    return v;
}

void validate(const QpProblem& qp) {
    const int n = qp.size();
    if (qp.Q.rows() != n || qp.Q.cols() != n) throw DimensionError("QP Hessian has wrong shape");
    if (qp.lb.size() != n || qp.ub.size() != n) throw DimensionError("QP bounds have wrong length");
    if (qp.A_eq.rows() != qp.b_eq.size() || (qp.A_eq.rows() && qp.A_eq.cols() != n))
        throw DimensionError("QP equality block has wrong shape");
    if (qp.A_in.rows() != qp.b_in.size() || (qp.A_in.rows() && qp.A_in.cols() != n))
        throw DimensionError("QP inequality block has wrong shape");
    for (int i = 0; i < n; ++i)
        if (qp.lb[i] > qp.ub[i]) throw ConfigError("QP bound lb > ub at variable " + std::to_string(i));
}

QpResult solve_qp_projected_gradient(const QpProblem& qp, const ProjectedGradientOptions& opt,
                                     const Eigen::VectorXd* x0) {
    validate(qp);
    const int n = qp.size();
    const int me = static_cast<int>(qp.A_eq.rows()), mi = static_cast<int>(qp.A_in.rows());
    Eigen::VectorXd x = x0 ? project(*x0, qp.lb, qp.ub) : project(Eigen::VectorXd::Zero(n), qp.lb, qp.ub);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(me), z = Eigen::VectorXd::Zero(mi);
    double rho = opt.rho;
    double L = lipschitz(qp, rho);

    auto grad = [&](const Eigen::VectorXd& v) {
        Eigen::VectorXd g = qp.Q * v + qp.q;
        if (me) g += qp.A_eq.transpose() * (y + rho * (qp.A_eq * v - qp.b_eq));
        if (mi) g += qp.A_in.transpose() * (z + rho * (qp.A_in * v - qp.b_in)).cwiseMax(0.0);
        return g;
    };
    auto lagrangian_grad = [&](const Eigen::VectorXd& v) {
        Eigen::VectorXd g = qp.Q * v + qp.q;
        if (me) g += qp.A_eq.transpose() * y;
        if (mi) g += qp.A_in.transpose() * z;
        return g;
    };
    auto pg_norm = [&](const Eigen::VectorXd& v, const Eigen::VectorXd& g) {
        return inf_norm(v - project(v - g, qp.lb, qp.ub));
    };

    QpResult res;
    double inner_tol = std::max(opt.grad_tol, 1e-2);
    double prev_infeas = kInf;
    for (int outer = 1; outer <= opt.max_outer; ++outer) {
        res.iterations = outer;
        // FISTA on the box.
        Eigen::VectorXd xk = x, yk = x;
        double tk = 1.0;
        Eigen::VectorXd g = grad(yk);
        for (long it = 0; it < opt.max_inner; ++it) {
            const Eigen::VectorXd xn = project(yk - g / L, qp.lb, qp.ub);
            const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
            const Eigen::VectorXd step = xn - xk;
            if (g.dot(step) > 0.0) {
                // Restart momentum when it points uphill.
                yk = xn;
                tk = 1.0;
            } else {
                yk = xn + ((tk - 1.0) / tn) * step;
                tk = tn;
            }
            xk = xn;
            g = grad(yk);
            ++res.inner_iterations;
            if ((it & 15) == 15 || it + 1 == opt.max_inner) {
                if (pg_norm(xk, grad(xk)) <= inner_tol) break;
            }
        }
        x = xk;

        Eigen::VectorXd re = me ? Eigen::VectorXd(qp.A_eq * x - qp.b_eq) : Eigen::VectorXd();
        Eigen::VectorXd ri = mi ? Eigen::VectorXd(qp.A_in * x - qp.b_in) : Eigen::VectorXd();
        if (me) y += rho * re;
        if (mi) z = (z + rho * ri).cwiseMax(0.0);

        const double infeas = qp.infeasibility(x);
        const double stat = pg_norm(x, lagrangian_grad(x));
        res.stationarity = stat;
        res.infeasibility = infeas;
        if (infeas <= opt.feas_tol && stat <= opt.grad_tol) {
            res.converged = true;
            break;
        }
        inner_tol = std::max(opt.grad_tol, 0.1 * inner_tol);
        if (infeas > 0.25 * prev_infeas && rho < 1e8) {
            rho *= 10.0;
            L = lipschitz(qp, rho);
        }
        prev_infeas = infeas;
    }
    res.x = x;
    res.objective = qp.value(x);
    return res;
}

QpResult solve_qp_interior_point(const QpProblem& input, const InteriorPointOptions& opt) {
    validate(input);
    const int n = input.size();

    // Fixed variables become equality rows.
    QpProblem qp = input;
    {
        std::vector<Eigen::Triplet<double>> et;
        std::vector<double> ev;
        for (int k = 0; k < input.A_eq.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(input.A_eq, k); it; ++it) et.emplace_back(it.row(), it.col(), it.value());
        for (int i = 0; i < input.A_eq.rows(); ++i) ev.push_back(input.b_eq[i]);
        int r = static_cast<int>(input.A_eq.rows());
        for (int i = 0; i < n; ++i)
            if (input.lb[i] == input.ub[i]) {
                et.emplace_back(r++, i, 1.0);
                ev.push_back(input.lb[i]);
                qp.lb[i] = -kInf;
                qp.ub[i] = kInf;
            }
        qp.A_eq.resize(r, n);
        qp.A_eq.setFromTriplets(et.begin(), et.end());
        qp.b_eq = Eigen::Map<const Eigen::VectorXd>(ev.data(), r);
    }
    const int me = static_cast<int>(qp.A_eq.rows());

    // Stack A_in and the finite bounds into G x <= h.
    std::vector<Eigen::Triplet<double>> gt;
    std::vector<double> hv;
    int row = 0;
    if (qp.A_in.rows()) {
        for (int k = 0; k < qp.A_in.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(qp.A_in, k); it; ++it) gt.emplace_back(it.row(), it.col(), it.value());
        for (int i = 0; i < qp.A_in.rows(); ++i) hv.push_back(qp.b_in[i]);
        row = static_cast<int>(qp.A_in.rows());
    }
    for (int i = 0; i < n; ++i) {
        if (std::isfinite(qp.ub[i])) {
            gt.emplace_back(row++, i, 1.0);
            hv.push_back(qp.ub[i]);
        }
        if (std::isfinite(qp.lb[i])) {
            gt.emplace_back(row++, i, -1.0);
            hv.push_back(-qp.lb[i]);
        }
    }
    const int m = row;
    SparseMatrix G(m, n);
    G.setFromTriplets(gt.begin(), gt.end());
    const SparseMatrix Gt = G.transpose();
    const Eigen::Map<const Eigen::VectorXd> h(hv.data(), m);

    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        if (std::isfinite(qp.lb[i]) && std::isfinite(qp.ub[i])) x[i] = 0.5 * (qp.lb[i] + qp.ub[i]);
        else if (std::isfinite(qp.lb[i])) x[i] = qp.lb[i] + 1.0;
        else if (std::isfinite(qp.ub[i])) x[i] = qp.ub[i] - 1.0;
    }
    Eigen::VectorXd y = Eigen::VectorXd::Zero(me);
    Eigen::VectorXd s = (h - G * x).cwiseMax(1.0);
    Eigen::VectorXd zz = Eigen::VectorXd::Ones(m);

    const double qscale = 1.0 + inf_norm(qp.q);
    const double bscale = 1.0 + std::max(inf_norm(h), me ? inf_norm(qp.b_eq) : 0.0);

    // KKT pattern: [Q + G'WG + reg, A'; A, -reg].
    auto assemble = [&](const Eigen::VectorXd& wdiag, double reg) {
        SparseMatrix H = qp.Q + SparseMatrix(Gt * wdiag.asDiagonal() * G);
        std::vector<Eigen::Triplet<double>> kt;
        kt.reserve(static_cast<size_t>(H.nonZeros() + 2 * qp.A_eq.nonZeros() + n + me));
        for (int k = 0; k < H.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(H, k); it; ++it) kt.emplace_back(it.row(), it.col(), it.value());
        for (int i = 0; i < n; ++i) kt.emplace_back(i, i, reg);
        for (int k = 0; k < qp.A_eq.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(qp.A_eq, k); it; ++it) {
                kt.emplace_back(n + it.row(), it.col(), it.value());
                kt.emplace_back(it.col(), n + it.row(), it.value());
            }
        for (int i = 0; i < me; ++i) kt.emplace_back(n + i, n + i, -reg);
        SparseMatrix K(n + me, n + me);
        K.setFromTriplets(kt.begin(), kt.end());
        return K;
    };

    Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt;
    bool analyzed = false;

    QpResult res;
    for (int it = 1; it <= opt.max_iter; ++it) {
        res.iterations = it;
        const Eigen::VectorXd rd = qp.Q * x + qp.q + (me ? Eigen::VectorXd(qp.A_eq.transpose() * y) : Eigen::VectorXd::Zero(n)) + Gt * zz;
        const Eigen::VectorXd rp = me ? Eigen::VectorXd(qp.A_eq * x - qp.b_eq) : Eigen::VectorXd();
        const Eigen::VectorXd rg = G * x + s - h;
        const double mu = m ? s.dot(zz) / m : 0.0;
        const double pres = std::max(me ? inf_norm(rp) : 0.0, inf_norm(rg));
        const double dres = inf_norm(rd);
        res.stationarity = dres;
        res.infeasibility = pres;
        if (dres <= opt.tol * qscale && pres <= opt.tol * bscale && mu <= opt.tol) {
            res.converged = true;
            break;
        }

        // Near the end some s_i reach the floor; cap the barrier weights and,
        // if a pivot still vanishes, retry with more regularization.
        const Eigen::VectorXd wdiag = zz.cwiseQuotient(s).cwiseMin(1e16);
        SparseMatrix K;
        double reg = opt.regularization;
        for (int attempt = 0;; ++attempt, reg *= 100.0) {
            K = assemble(wdiag, reg);
            if (!analyzed) {
                ldlt.analyzePattern(K);
                analyzed = true;
            }
            ldlt.factorize(K);
            if (ldlt.info() == Eigen::Success) break;
            if (attempt == 4) throw SolverError("interior point: KKT factorization failed", mu);
        }

        auto solve_dir = [&](const Eigen::VectorXd& rc, Eigen::VectorXd& dx, Eigen::VectorXd& dy, Eigen::VectorXd& dz,
                             Eigen::VectorXd& ds) {
            Eigen::VectorXd rhs(n + me);
            rhs.head(n) = -rd - Gt * (wdiag.cwiseProduct(rg) - rc.cwiseQuotient(s));
            if (me) rhs.tail(me) = -rp;
            Eigen::VectorXd sol = ldlt.solve(rhs);
            // One step of iterative refinement against the regularized system.
            sol += ldlt.solve(rhs - K * sol);
            dx = sol.head(n);
            dy = me ? Eigen::VectorXd(sol.tail(me)) : Eigen::VectorXd();
            dz = wdiag.cwiseProduct(G * dx + rg) - rc.cwiseQuotient(s);
            ds = -(rc + s.cwiseProduct(dz)).cwiseQuotient(zz);
        };
        auto max_step = [](const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
            double a = 1.0;
            for (Eigen::Index i = 0; i < v.size(); ++i)
                if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
            return a;
        };

        Eigen::VectorXd dx, dy, dz, ds;
        const Eigen::VectorXd rc_aff = s.cwiseProduct(zz);
        solve_dir(rc_aff, dx, dy, dz, ds);
        const double a_aff = std::min(max_step(s, ds), max_step(zz, dz));
        const double mu_aff = m ? (s + a_aff * ds).dot(zz + a_aff * dz) / m : 0.0;
        const double sigma = mu > 0.0 ? std::pow(mu_aff / mu, 3) : 0.0;
        const Eigen::VectorXd rc = rc_aff + ds.cwiseProduct(dz) - Eigen::VectorXd::Constant(m, sigma * mu);
        solve_dir(rc, dx, dy, dz, ds);
        const double a = std::min(1.0, 0.99 * std::min(max_step(s, ds), max_step(zz, dz)));
        x += a * dx;
        if (me) y += a * dy;
        s += a * ds;
        zz += a * dz;
        s = s.cwiseMax(1e-300);
        zz = zz.cwiseMax(1e-300);
    }
    for (int i = 0; i < n; ++i)
        if (input.lb[i] == input.ub[i]) x[i] = input.lb[i];
    res.x = x;
    res.objective = input.value(x);
    res.infeasibility = input.infeasibility(x);
    return res;
}

}  // namespace p2pm
