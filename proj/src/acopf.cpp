#include "opfbench/acopf.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "opfbench/linear_opf.hpp"
#include "opfbench/qp.hpp"

namespace opfbench {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::VectorXd initial_dispatch(const Network& net, const LoadScenario& scenario) {
  const int ng = net.n_gens();
  Eigen::VectorXd pg(ng);
  double pg0_total = 0;
  for (int g = 0; g < ng; ++g) pg0_total += net.gens[g].pg0;
  const double target = scenario.pd.sum() * 1.02;  // rough loss allowance
  for (int g = 0; g < ng; ++g) {
    double v;
    if (pg0_total > 1e-9) {
      v = net.gens[g].pg0 * target / pg0_total;
    } else {
      v = target / ng;
    }
    pg(g) = std::clamp(v, net.gens[g].pmin, net.gens[g].pmax);
  }
  return pg;
}

struct TrustRegionQp {
  QuadraticProgram qp;
  int n, ng;
};

// Linearized OPF subproblem around the current AC-feasible point.
// Variables [vm, theta, pg, qg, xi]; xi is a shared elastic slack on the
// operational voltage bounds and MVA cuts so the subproblem stays feasible
// when the expansion point violates them. A small proximal term centered on
// the expansion point keeps the QP strictly convex along cost-flat
// directions (voltages, qg); its gradient vanishes at the fixed point, so
// the optimum is unbiased.
TrustRegionQp build_subproblem(const Network& net, const AdmittanceMatrix& adm,
                               const LoadScenario& scenario, const LinearizationPoint& ref,
                               const Eigen::VectorXd& pg_center,
                               const Eigen::VectorXd& qg_center, double trust_v,
                               double trust_theta, bool branch_limits) {
  const int n = net.n_buses();
  const int ng = net.n_gens();
  const int nb = static_cast<int>(net.branches.size());
  const int nv = 2 * n + 2 * ng + 1;
  const int xi = nv - 1;

  TrustRegionQp out;
  out.n = n;
  out.ng = ng;
  QuadraticProgram& qp = out.qp;

  double c1_scale = 1.0;
  for (const auto& g : net.gens) c1_scale = std::max(c1_scale, std::abs(g.c1));
  const double prox = 1e-3 * c1_scale;
  const double elastic = 1e3 * c1_scale;

  qp.q = Eigen::MatrixXd::Zero(nv, nv);
  qp.c = Eigen::VectorXd::Zero(nv);
  for (int g = 0; g < ng; ++g) {
    qp.q(2 * n + g, 2 * n + g) = 2.0 * net.gens[g].c2;
    qp.c(2 * n + g) = net.gens[g].c1;
    qp.c0 += net.gens[g].c0;
  }
  for (int b = 0; b < n; ++b) {
    qp.q(b, b) += prox;
    qp.c(b) -= prox * ref.v.vm(b);
    qp.q(n + b, n + b) += prox;
    qp.c(n + b) -= prox * ref.v.va(b);
  }
  for (int g = 0; g < ng; ++g) {
    qp.q(2 * n + g, 2 * n + g) += prox;
    qp.c(2 * n + g) -= prox * pg_center(g);
    qp.q(2 * n + ng + g, 2 * n + ng + g) += prox;
    qp.c(2 * n + ng + g) -= prox * qg_center(g);
  }
  qp.c(xi) = elastic;

  // Rows: n P-balance, n Q-balance, slack angle.
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n + 1, nv);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(2 * n + 1);
  for (int b = 0; b < n; ++b) {
    const double vr = ref.v.vm(b);
    const double gs = net.buses[b].gs, bs = net.buses[b].bs;
    // Shunt P = gs v^2 and Q = -bs v^2, linearized at vr and folded into
    // the balance rows.
    a(b, b) -= 2.0 * gs * vr;
    rhs(b) = scenario.pd(b) - gs * vr * vr;
    a(n + b, b) += 2.0 * bs * vr;
    rhs(n + b) = scenario.qd(b) + bs * vr * vr;
  }
  for (int g = 0; g < ng; ++g) {
    a(net.gens[g].bus, 2 * n + g) = 1.0;
    a(n + net.gens[g].bus, 2 * n + ng + g) = 1.0;
  }

  std::vector<BranchLinearModel> fwd(nb), rev(nb);
  for (int k = 0; k < nb; ++k) {
    fwd[k] = linearize_branch(net, adm, k, ref);
    rev[k] = linearize_branch_reverse(net, adm, k, ref);
    const auto& br = net.branches[k];
    const double vi = ref.v.vm(br.from), vj = ref.v.vm(br.to);
    const double d0 = ref.delta(k);
    auto add_flow = [&](int row, double c0, double avi, double avj, double ad) {
      a(row, br.from) -= avi;
      a(row, br.to) -= avj;
      a(row, n + br.from) -= ad;
      a(row, n + br.to) += ad;
      rhs(row) += c0 - avi * vi - avj * vj - ad * d0;
    };
    add_flow(br.from, fwd[k].p0, fwd[k].dp_dvi, fwd[k].dp_dvj, fwd[k].dp_dd);
    add_flow(n + br.from, fwd[k].q0, fwd[k].dq_dvi, fwd[k].dq_dvj, fwd[k].dq_dd);
    add_flow(br.to, rev[k].p0, rev[k].dp_dvi, rev[k].dp_dvj, rev[k].dp_dd);
    add_flow(n + br.to, rev[k].q0, rev[k].dq_dvi, rev[k].dq_dvj, rev[k].dq_dd);
  }
  a(2 * n, n + net.slack) = 1.0;
  rhs(2 * n) = ref.v.va(net.slack);
  qp.a_eq = std::move(a);
  qp.b_eq = std::move(rhs);

  // Elastic operational voltage bounds: vm_b <= vmax + xi, vm_b >= vmin - xi.
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> rrhs;
  for (int b = 0; b < n; ++b) {
    Eigen::VectorXd up = Eigen::VectorXd::Zero(nv);
    up(b) = 1.0;
    up(xi) = -1.0;
    rows.push_back(up);
    rrhs.push_back(net.buses[b].vmax);
    Eigen::VectorXd dn = Eigen::VectorXd::Zero(nv);
    dn(b) = -1.0;
    dn(xi) = -1.0;
    rows.push_back(dn);
    rrhs.push_back(-net.buses[b].vmin);
  }

  if (branch_limits) {
    // Tangent cut of the MVA circle per limited branch end, evaluated at
    // the reference flow and elastic like the voltage bounds. Exact on the
    // binding boundary as the iteration converges.
    for (int k = 0; k < nb; ++k) {
      const auto& br = net.branches[k];
      if (br.rate <= 0) continue;
      const double vi = ref.v.vm(br.from), vj = ref.v.vm(br.to);
      const double d0 = ref.delta(k);
      auto add_cut = [&](const BranchLinearModel& m, double p0, double q0) {
        const double s0 = std::hypot(p0, q0);
        if (s0 < 1e-9) return;  // far inside, gradient undefined at 0
        const double cp = p0 / s0, cq = q0 / s0;
        Eigen::VectorXd row = Eigen::VectorXd::Zero(nv);
        row(br.from) = cp * m.dp_dvi + cq * m.dq_dvi;
        row(br.to) = cp * m.dp_dvj + cq * m.dq_dvj;
        row(n + br.from) = cp * m.dp_dd + cq * m.dq_dd;
        row(n + br.to) = -(cp * m.dp_dd + cq * m.dq_dd);
        row(xi) = -1.0;
        const double c0 = s0 - row(br.from) * vi - row(br.to) * vj -
                          (cp * m.dp_dd + cq * m.dq_dd) * d0;
        rows.push_back(row);
        rrhs.push_back(br.rate - c0);
      };
      add_cut(fwd[k], fwd[k].p0, fwd[k].q0);
      add_cut(rev[k], rev[k].p0, rev[k].q0);
    }
  }
  qp.a_in = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), nv);
  qp.b_in = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    qp.a_in.row(static_cast<Eigen::Index>(r)) = rows[r];
    qp.b_in(static_cast<Eigen::Index>(r)) = rrhs[r];
  }

  qp.lb = Eigen::VectorXd::Constant(nv, -kInf);
  qp.ub = Eigen::VectorXd::Constant(nv, kInf);
  for (int b = 0; b < n; ++b) {
    qp.lb(b) = ref.v.vm(b) - trust_v;
    qp.ub(b) = ref.v.vm(b) + trust_v;
    qp.lb(n + b) = ref.v.va(b) - trust_theta;
    qp.ub(n + b) = ref.v.va(b) + trust_theta;
  }
  for (int g = 0; g < ng; ++g) {
    qp.lb(2 * n + g) = net.gens[g].pmin;
    qp.ub(2 * n + g) = net.gens[g].pmax;
    qp.lb(2 * n + ng + g) = net.gens[g].qmin;
    qp.ub(2 * n + ng + g) = net.gens[g].qmax;
  }
  qp.lb(xi) = 0.0;
  return out;
}

double bound_violation(const Network& net, const AdmittanceMatrix& adm, const VoltageState& v,
                       const Eigen::VectorXd& pg, const Eigen::VectorXd& qg,
                       bool branch_limits) {
  double viol = 0;
  for (int b = 0; b < net.n_buses(); ++b) {
    viol = std::max(viol, net.buses[b].vmin - v.vm(b));
    viol = std::max(viol, v.vm(b) - net.buses[b].vmax);
  }
  for (int g = 0; g < net.n_gens(); ++g) {
    viol = std::max(viol, net.gens[g].pmin - pg(g));
    viol = std::max(viol, pg(g) - net.gens[g].pmax);
    viol = std::max(viol, net.gens[g].qmin - qg(g));
    viol = std::max(viol, qg(g) - net.gens[g].qmax);
  }
  if (branch_limits) {
    const auto flows = branch_flows(v, net, adm);
    for (std::size_t k = 0; k < net.branches.size(); ++k) {
      if (net.branches[k].rate <= 0) continue;
      const double s = std::max(std::hypot(flows[k].p_from, flows[k].q_from),
                                std::hypot(flows[k].p_to, flows[k].q_to));
      viol = std::max(viol, s - net.branches[k].rate);
    }
  }
  return viol;
}

}  // namespace

double dispatch_cost(const Eigen::VectorXd& pg, const Network& net) {
  if (pg.size() != net.n_gens()) throw std::invalid_argument("dispatch length mismatch");
  double total = 0;
  for (int g = 0; g < net.n_gens(); ++g) {
    const auto& gen = net.gens[g];
    total += gen.c2 * pg(g) * pg(g) + gen.c1 * pg(g) + gen.c0;
  }
  return total;
}

OpfSolution solve_acopf(const Network& net, const AdmittanceMatrix& adm,
                        const LoadScenario& scenario, const AcopfOptions& opts) {
  OpfSolution sol;
  const int ng = net.n_gens();
  const int slack_gen = net.gen_at_bus[net.slack];
  if (slack_gen < 0) throw NetworkError("slack bus has no generator");

  GenSetpoints sp;
  sp.pg = initial_dispatch(net, scenario);
  sp.vm.resize(ng);
  for (int g = 0; g < ng; ++g) sp.vm(g) = net.gens[g].vg;

  VoltageState state;
  try {
    state = solve_newton(net, adm, scenario, sp).v;
  } catch (const NonConvergence&) {
    // Retry from a flat 1.0 voltage target before giving up.
    sp.vm.setOnes();
    try {
      state = solve_newton(net, adm, scenario, sp).v;
    } catch (const NonConvergence& e) {
      sol.converged = false;
      sol.final_mismatch = e.mismatch;
      return sol;
    }
  }

  Dispatch disp = recover_generation(state, net, adm, scenario);
  Eigen::VectorXd pg = sp.pg;
  pg(slack_gen) = disp.pg(slack_gen);
  double cost = dispatch_cost(pg, net);

  // Merit blends cost with operational-bound violation so that moves which
  // restore feasibility are acceptable even when they raise cost.
  double c1_scale = 1.0;
  for (const auto& g : net.gens) c1_scale = std::max(c1_scale, std::abs(g.c1));
  const double rho = 1e3 * c1_scale;
  double viol = bound_violation(net, adm, state, pg, disp.qg, opts.branch_limits);
  double merit = cost + rho * viol;

  double trust_v = opts.trust_v;
  double trust_theta = opts.trust_theta;
  bool qp_ever_solved = false;
  const bool debug = std::getenv("OPFBENCH_DEBUG_SLP") != nullptr;

  for (int iter = 0; iter < opts.max_outer; ++iter) {
    const LinearizationPoint ref = make_linearization_point(state, net, adm);
    bool accepted = false;
    double new_cost = cost, new_viol = viol;
    VoltageState new_state;
    Eigen::VectorXd new_pg, new_qg;

    for (int shrink = 0; shrink < 10 && !accepted; ++shrink) {
      TrustRegionQp sub = build_subproblem(net, adm, scenario, ref, pg, disp.qg, trust_v,
                                           trust_theta, opts.branch_limits);
      QpOptions qopts;
      qopts.tol = opts.qp_tol;
      const QpSolution qsol = solve_qp(sub.qp, qopts);
      if (debug) {
        std::fprintf(stderr, "[slp] iter=%d shrink=%d qstatus=%d trust_v=%g\n", iter, shrink,
                     static_cast<int>(qsol.status), trust_v);
      }
      if (!qsol.ok()) {
        trust_v *= 0.5;
        trust_theta *= 0.5;
        if (trust_v < 1e-5) {
          if (qsol.status == QpStatus::Infeasible && !qp_ever_solved) {
            throw OpfInfeasible("ac-opf subproblem infeasible at every trust region size");
          }
          break;
        }
        continue;
      }
      qp_ever_solved = true;

      const int n = net.n_buses();
      if (debug) {
        double dvm_gen = 0;
        for (int g = 0; g < ng; ++g) {
          dvm_gen += (qsol.x(net.gens[g].bus) - ref.v.vm(net.gens[g].bus)) / ng;
        }
        std::fprintf(stderr,
                     "[slp]   qp obj=%.6f xi=%.2e mean_dvm_gen=%+.4f pg_sum=%.4f\n",
                     qsol.objective, qsol.x(qsol.x.size() - 1), dvm_gen,
                     qsol.x.segment(2 * n, ng).sum());
      }
      GenSetpoints cand;
      cand.pg = qsol.x.segment(2 * n, ng);
      cand.vm.resize(ng);
      for (int g = 0; g < ng; ++g) cand.vm(g) = qsol.x(net.gens[g].bus);

      NewtonOptions nopts;
      nopts.flat_start = false;
      nopts.initial = state;
      try {
        VoltageState restored = solve_newton(net, adm, scenario, cand, nopts).v;
        Dispatch rd = recover_generation(restored, net, adm, scenario);
        Eigen::VectorXd pg_cand = cand.pg;
        pg_cand(slack_gen) = rd.pg(slack_gen);
        const double cost_cand = dispatch_cost(pg_cand, net);
        const double viol_cand =
            bound_violation(net, adm, restored, pg_cand, rd.qg, opts.branch_limits);
        const double merit_cand = cost_cand + rho * viol_cand;
        if (debug) {
          std::fprintf(stderr, "[slp]   cand cost=%.4f viol=%.3e merit=%.4f vs %.4f\n",
                       cost_cand, viol_cand, merit_cand, merit);
        }
        if (merit_cand <= merit + 1e-9 * (1.0 + std::abs(merit))) {
          accepted = true;
          new_cost = cost_cand;
          new_viol = viol_cand;
          new_state = restored;
          new_pg = pg_cand;
          new_qg = rd.qg;
        }
      } catch (const NonConvergence&) {
        // fall through to shrink
      } catch (const SingularJacobian&) {
      }
      if (!accepted) {
        trust_v *= 0.5;
        trust_theta *= 0.5;
        if (trust_v < 1e-5) break;
      }
    }

    if (!accepted) {
      // No trust-region step improves the merit. At a feasible point that
      // is the fixed-point optimality signal; otherwise the scenario is
      // declared non-convergent.
      sol.converged = viol < 1e-7 && iter > 0;
      sol.v = state;
      sol.pg = pg;
      sol.qg = disp.qg;
      sol.objective = cost;
      sol.iterations = iter;
      break;
    }

    const double step = (new_state.vm - state.vm).lpNorm<Eigen::Infinity>() +
                        (new_state.va - state.va).lpNorm<Eigen::Infinity>();
    const double dcost = std::abs(new_cost - cost);
    state = new_state;
    disp.pg = new_pg;
    disp.qg = new_qg;
    pg = new_pg;
    cost = new_cost;
    viol = new_viol;
    merit = new_cost + rho * new_viol;
    sol.trace.push_back({cost, step, viol});
    sol.iterations = iter + 1;

    const double stall_tol = opts.obj_tol * (1.0 + std::abs(cost));
    if (dcost < stall_tol && viol < 1e-7 && step < 1e-4 && iter > 0) {
      sol.converged = true;
      break;
    }
    // Persistently large violations that stopped improving mean the
    // scenario is operationally infeasible; stop grinding on it.
    if (iter >= 8 && viol > 1e-3) {
      const double old_viol = sol.trace[sol.trace.size() - 6].violation;
      if (viol > 0.9 * old_viol) {
        sol.converged = false;
        break;
      }
    }
    if (dcost < 100.0 * stall_tol) {
      // Cost has stalled: the iterate is circling re-linearized binding
      // constraints. Contracting the region shrinks that orbit
      // quadratically.
      trust_v = std::max(0.3 * trust_v, 1e-5);
      trust_theta = std::max(0.3 * trust_theta, 2e-5);
    } else if (step > 0.8 * (trust_v + trust_theta)) {
      trust_v = std::min(opts.trust_v, trust_v * 2.0);
      trust_theta = std::min(opts.trust_theta, trust_theta * 2.0);
    }
  }

  sol.v = state;
  sol.pg = pg;
  sol.qg = disp.qg;
  sol.objective = cost;
  const Eigen::VectorXcd s_inj = complex_injection(state, adm);
  double mm = 0;
  for (int b = 0; b < net.n_buses(); ++b) {
    std::complex<double> gen(0, 0);
    if (net.has_gen(b)) {
      const int g = net.gen_at_bus[b];
      gen = {pg(g), disp.qg(g)};
    }
    const std::complex<double> bal =
        gen - std::complex<double>(scenario.pd(b), scenario.qd(b)) - s_inj(b);
    mm = std::max(mm, std::abs(bal));
  }
  sol.final_mismatch = mm;
  if (mm > opts.mismatch_tol) sol.converged = false;
  if (debug) {
    // One diagnostic subproblem at the final point with the full region.
    const LinearizationPoint refd = make_linearization_point(state, net, adm);
    TrustRegionQp sub = build_subproblem(net, adm, scenario, refd, pg, disp.qg, opts.trust_v,
                                         opts.trust_theta, opts.branch_limits);
    const QpSolution qs = solve_qp(sub.qp, QpOptions{});
    if (qs.ok()) {
      const int n = net.n_buses();
      std::fprintf(stderr, "[slp-final] dvm per gen:");
      for (int g = 0; g < ng; ++g) {
        std::fprintf(stderr, " %+.4f", qs.x(net.gens[g].bus) - refd.v.vm(net.gens[g].bus));
      }
      std::fprintf(stderr, "\n[slp-final] qg:");
      for (int g = 0; g < ng; ++g) std::fprintf(stderr, " %+.4f", qs.x(2 * n + ng + g));
      std::fprintf(stderr, "\n[slp-final] vm range in qp: %.4f..%.4f (vmax %.3f)\n",
                   qs.x.head(n).minCoeff(), qs.x.head(n).maxCoeff(), net.buses[5].vmax);
      Eigen::VectorXd pgq = qs.x.segment(2 * n, ng);
      std::fprintf(stderr, "[slp-final] qp pg_sum=%.5f (current %.5f) pred_cost=%.4f cur=%.4f\n",
                   pgq.sum(), pg.sum(), dispatch_cost(pgq, net), cost);
    } else {
      std::fprintf(stderr, "[slp-final] diagnostic qp status=%d\n", (int)qs.status);
    }
  }
  return sol;
}

}  // namespace opfbench
