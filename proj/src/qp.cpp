#include "opfbench/qp.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace opfbench {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Stack A_in and the finite box bounds into one G x <= h system.
void build_ineq(const QuadraticProgram& qp, Eigen::MatrixXd& g, Eigen::VectorXd& h) {
  const Eigen::Index n = qp.n_vars();
  std::vector<std::pair<int, double>> box;  // (+-(var+1), bound)
  if (qp.lb.size() == n || qp.ub.size() == n) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (qp.ub.size() == n && qp.ub(i) < kInf) box.push_back({static_cast<int>(i) + 1, qp.ub(i)});
      if (qp.lb.size() == n && qp.lb(i) > -kInf) {
        box.push_back({-(static_cast<int>(i) + 1), -qp.lb(i)});
      }
    }
  }
  const Eigen::Index mi = qp.a_in.rows() + static_cast<Eigen::Index>(box.size());
  g.setZero(mi, n);
  h.resize(mi);
  if (qp.a_in.rows() > 0) {
    g.topRows(qp.a_in.rows()) = qp.a_in;
    h.head(qp.a_in.rows()) = qp.b_in;
  }
  for (std::size_t k = 0; k < box.size(); ++k) {
    const Eigen::Index row = qp.a_in.rows() + static_cast<Eigen::Index>(k);
    const int signed_var = box[k].first;
    g(row, std::abs(signed_var) - 1) = signed_var > 0 ? 1.0 : -1.0;
    h(row) = box[k].second;
  }
}

}  // namespace

QpSolution solve_qp(const QuadraticProgram& qp, const QpOptions& opts) {
  const Eigen::Index n = qp.n_vars();
  Eigen::MatrixXd q = qp.q.size() > 0 ? qp.q : Eigen::MatrixXd::Zero(n, n);
  // Objective normalization: the argmin is invariant to positive scaling,
  // and well-scaled duals keep the KKT systems solvable when callers use
  // large penalty coefficients.
  const double obj_scale = std::max({1.0, qp.c.lpNorm<Eigen::Infinity>(),
                                     q.size() > 0 ? q.cwiseAbs().maxCoeff() : 0.0});
  q /= obj_scale;
  const Eigen::VectorXd c_s = qp.c / obj_scale;

  Eigen::MatrixXd g;
  Eigen::VectorXd h;
  build_ineq(qp, g, h);
  const Eigen::Index mi = g.rows();
  const Eigen::Index me = qp.a_eq.rows();

  QpSolution sol;

  // Pure equality-constrained QP: one KKT solve.
  if (mi == 0) {
    Eigen::MatrixXd kkt(n + me, n + me);
    kkt.setZero();
    kkt.topLeftCorner(n, n) = q;
    if (me > 0) {
      kkt.topRightCorner(n, me) = qp.a_eq.transpose();
      kkt.bottomLeftCorner(me, n) = qp.a_eq;
    }
    Eigen::VectorXd rhs(n + me);
    rhs.head(n) = -c_s;
    if (me > 0) rhs.tail(me) = qp.b_eq;
    const Eigen::VectorXd xy = kkt.partialPivLu().solve(rhs);
    sol.x = xy.head(n);
    if (!sol.x.allFinite()) {
      sol.status = QpStatus::Unbounded;
      sol.message = "singular KKT system without inequality constraints";
      return sol;
    }
    sol.status = QpStatus::Optimal;
    sol.objective = obj_scale * (0.5 * sol.x.dot(q * sol.x) + c_s.dot(sol.x)) + qp.c0;
    sol.objective_trace.push_back(sol.objective);
    return sol;
  }

  // Interior start: midpoint of finite boxes, slacks clamped positive.
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lo = qp.lb.size() == n ? qp.lb(i) : -kInf;
    const double hi = qp.ub.size() == n ? qp.ub(i) : kInf;
    if (lo > -kInf && hi < kInf) {
      x(i) = 0.5 * (lo + hi);
    } else if (lo > -kInf) {
      x(i) = lo + 1.0;
    } else if (hi < kInf) {
      x(i) = hi - 1.0;
    }
  }
  Eigen::VectorXd y = Eigen::VectorXd::Zero(me);
  Eigen::VectorXd s = (h - g * x).cwiseMax(1.0);
  Eigen::VectorXd z = Eigen::VectorXd::Ones(mi);

  const double bnorm = 1.0 + std::max(me > 0 ? qp.b_eq.lpNorm<Eigen::Infinity>() : 0.0,
                                      h.lpNorm<Eigen::Infinity>());
  const double cnorm = 1.0 + c_s.lpNorm<Eigen::Infinity>();

  Eigen::MatrixXd kkt(n + me, n + me);
  Eigen::VectorXd rhs(n + me);

  auto objective = [&](const Eigen::VectorXd& v) {
    return obj_scale * (0.5 * v.dot(q * v) + c_s.dot(v)) + qp.c0;
  };

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    const Eigen::VectorXd rd = q * x + c_s +
                               (me > 0 ? (qp.a_eq.transpose() * y).eval()
                                       : Eigen::VectorXd::Zero(n)) +
                               g.transpose() * z;
    const Eigen::VectorXd rp = me > 0 ? (qp.a_eq * x - qp.b_eq).eval() : Eigen::VectorXd();
    const Eigen::VectorXd rg = g * x + s - h;
    const double mu = s.dot(z) / static_cast<double>(mi);

    const double pres = std::max(me > 0 ? rp.lpNorm<Eigen::Infinity>() : 0.0,
                                 rg.lpNorm<Eigen::Infinity>()) / bnorm;
    const double dres = rd.lpNorm<Eigen::Infinity>() / cnorm;

    if (std::getenv("OPFBENCH_DEBUG_QP")) {
      std::fprintf(stderr, "[qp] it=%d pres=%.3e dres=%.3e mu=%.3e obj=%.6e xmax=%.3e\n", iter,
                   pres, dres, mu, objective(x), x.lpNorm<Eigen::Infinity>());
    }
    sol.objective_trace.push_back(objective(x));
    sol.iterations = iter;
    sol.primal_residual = pres;
    sol.dual_residual = dres;
    sol.complementarity = mu;

    if (pres < opts.tol && dres < opts.tol && mu < opts.tol) {
      sol.status = QpStatus::Optimal;
      sol.x = x;
      sol.objective = objective(x);
      return sol;
    }
    // Primal residual refusing to fall while complementarity collapses is
    // the infeasibility certificate.
    if (pres > 1e-6 && pres > 1e8 * mu) {
      sol.status = QpStatus::Infeasible;
      sol.x = x;
      sol.message = "primal residual stalled at " + std::to_string(pres);
      return sol;
    }
    if (x.lpNorm<Eigen::Infinity>() > 1e10 || objective(x) < -1e13) {
      sol.status = QpStatus::Unbounded;
      sol.x = x;
      return sol;
    }

    const Eigen::VectorXd w = z.cwiseQuotient(s);  // diag weights
    kkt.setZero();
    kkt.topLeftCorner(n, n) = q + g.transpose() * w.asDiagonal() * g;
    for (Eigen::Index i = 0; i < n; ++i) kkt(i, i) += 1e-12;
    if (me > 0) {
      kkt.topRightCorner(n, me) = qp.a_eq.transpose();
      kkt.bottomLeftCorner(me, n) = qp.a_eq;
      for (Eigen::Index i = 0; i < me; ++i) kkt(n + i, n + i) -= 1e-12;
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(kkt);

    auto solve_step = [&](const Eigen::VectorXd& rc) {
      // rc is the target of S dz + Z ds = -rc.
      rhs.head(n) = -rd - g.transpose() * (w.asDiagonal() * rg - rc.cwiseQuotient(s));
      if (me > 0) rhs.tail(me) = -rp;
      const Eigen::VectorXd dxy = lu.solve(rhs);
      const Eigen::VectorXd dx = dxy.head(n);
      const Eigen::VectorXd dz =
          w.asDiagonal() * (g * dx + rg) - rc.cwiseQuotient(s);
      const Eigen::VectorXd ds = -(rc + s.cwiseProduct(dz)).cwiseQuotient(z);
      return std::tuple<Eigen::VectorXd, Eigen::VectorXd, Eigen::VectorXd, Eigen::VectorXd>(
          dx, dxy.tail(me), dz, ds);
    };

    auto max_step = [](const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
      double a = 1.0;
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (dv(i) < 0) a = std::min(a, -v(i) / dv(i));
      }
      return a;
    };

    // Predictor.
    const Eigen::VectorXd rc_aff = s.cwiseProduct(z);
    auto [dx_aff, dy_aff, dz_aff, ds_aff] = solve_step(rc_aff);
    const double a_aff =
        std::min(max_step(s, ds_aff), max_step(z, dz_aff));
    const double mu_aff = (s + a_aff * ds_aff).dot(z + a_aff * dz_aff) / static_cast<double>(mi);
    const double sigma = std::pow(mu_aff / mu, 3);

    // Corrector.
    const Eigen::VectorXd rc =
        s.cwiseProduct(z) + ds_aff.cwiseProduct(dz_aff) -
        Eigen::VectorXd::Constant(mi, sigma * mu);
    auto [dx, dy, dz, ds] = solve_step(rc);

    const double alpha = 0.995 * std::min(max_step(s, ds), max_step(z, dz));
    const double a = std::min(1.0, alpha);
    x += a * dx;
    if (me > 0) y += a * dy;
    z += a * dz;
    s += a * ds;
    if (!x.allFinite() || !s.allFinite() || !z.allFinite()) {
      // Divergence with an unresolved primal residual is how infeasible
      // instances surface here.
      sol.status = sol.primal_residual > 100.0 * opts.tol ? QpStatus::Infeasible
                                                          : QpStatus::MaxIterations;
      sol.message = "iterates became non-finite (primal residual " +
                    std::to_string(sol.primal_residual) + ")";
      sol.x = x;
      return sol;
    }
  }

  sol.x = x;
  sol.objective = objective(x);
  // A primal residual still far from feasible after the full iteration
  // budget is treated as an infeasibility certificate.
  if (sol.primal_residual > 100.0 * opts.tol && sol.complementarity < sol.primal_residual) {
    sol.status = QpStatus::Infeasible;
    sol.message = "primal residual stuck at " + std::to_string(sol.primal_residual);
  } else {
    sol.status = QpStatus::MaxIterations;
    sol.message = "no convergence within iteration limit";
  }
  return sol;
}

}  // namespace opfbench
