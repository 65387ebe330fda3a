#include "opfbench/linear_opf.hpp"

#include <cmath>

#include "opfbench/acopf.hpp"
#include "opfbench/qp.hpp"

namespace opfbench {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Effective series admittance of a branch in the i->j direction: the
// negated off-diagonal terminal block. Reduces to 1/(r+jx) for tap-free,
// shift-free lines.
std::complex<double> series_admittance(const AdmittanceMatrix& adm, int branch) {
  return -adm.blocks[branch][1];
}

double gen_cost(const Network& net, const Eigen::VectorXd& pg) {
  double total = 0;
  for (int g = 0; g < net.n_gens(); ++g) {
    const auto& gen = net.gens[g];
    total += gen.c2 * pg(g) * pg(g) + gen.c1 * pg(g) + gen.c0;
  }
  return total;
}

}  // namespace

LinearizationPoint make_linearization_point(const VoltageState& v, const Network& net,
                                            const AdmittanceMatrix& adm) {
  LinearizationPoint ref;
  ref.v = v;
  ref.flows = branch_flows(v, net, adm);
  ref.delta.resize(net.branches.size());
  for (std::size_t k = 0; k < net.branches.size(); ++k) {
    ref.delta(k) = v.va(net.branches[k].from) - v.va(net.branches[k].to);
  }
  return ref;
}

BranchLinearModel linearize_branch(const Network& net, const AdmittanceMatrix& adm, int branch,
                                   const LinearizationPoint& ref) {
  const auto& br = net.branches[branch];
  const auto& blk = adm.blocks[branch];
  const double gff = blk[0].real(), bff = blk[0].imag();
  const double gft = blk[1].real(), bft = blk[1].imag();
  const double vi = ref.v.vm(br.from), vj = ref.v.vm(br.to);
  const double cd = std::cos(ref.delta(branch)), sd = std::sin(ref.delta(branch));

  // p =  vi^2 gff + vi vj (gft cos d + bft sin d)
  // q = -vi^2 bff + vi vj (gft sin d - bft cos d)
  const double tp = gft * cd + bft * sd;
  const double tq = gft * sd - bft * cd;

  BranchLinearModel m;
  m.p0 = ref.flows[branch].p_from;
  m.dp_dvi = 2 * vi * gff + vj * tp;
  m.dp_dvj = vi * tp;
  m.dp_dd = vi * vj * (-gft * sd + bft * cd);
  m.q0 = ref.flows[branch].q_from;
  m.dq_dvi = -2 * vi * bff + vj * tq;
  m.dq_dvj = vi * tq;
  m.dq_dd = vi * vj * tp;
  return m;
}

BranchLinearModel linearize_branch_reverse(const Network& net, const AdmittanceMatrix& adm,
                                           int branch, const LinearizationPoint& ref) {
  const auto& br = net.branches[branch];
  const auto& blk = adm.blocks[branch];
  const double gtf = blk[2].real(), btf = blk[2].imag();
  const double gtt = blk[3].real(), btt = blk[3].imag();
  const double vi = ref.v.vm(br.from), vj = ref.v.vm(br.to);
  const double cd = std::cos(ref.delta(branch)), sd = std::sin(ref.delta(branch));

  // Same (dvi, dvj, d_delta) variables as the forward model, with
  // delta = va(from) - va(to):
  // p_t =  vj^2 gtt + vi vj (gtf cos d - btf sin d)
  // q_t = -vj^2 btt - vi vj (gtf sin d + btf cos d)
  const double tp = gtf * cd - btf * sd;
  const double tq = -(gtf * sd + btf * cd);

  BranchLinearModel m;
  m.p0 = ref.flows[branch].p_to;
  m.dp_dvi = vj * tp;
  m.dp_dvj = 2 * vj * gtt + vi * tp;
  m.dp_dd = vi * vj * (-gtf * sd - btf * cd);
  m.q0 = ref.flows[branch].q_to;
  m.dq_dvi = vj * tq;
  m.dq_dvj = -2 * vj * btt + vi * tq;
  m.dq_dd = vi * vj * (-gtf * cd + btf * sd);
  return m;
}

DcOpfResult dcopf(const Network& net, const LoadScenario& scenario, const DcOpfOptions& opts) {
  const int n = net.n_buses();
  const int ng = net.n_gens();
  const int nb = static_cast<int>(net.branches.size());
  const int nv = n + ng;  // [theta, pg]

  QuadraticProgram qp;
  qp.q = Eigen::MatrixXd::Zero(nv, nv);
  qp.c = Eigen::VectorXd::Zero(nv);
  for (int g = 0; g < ng; ++g) {
    qp.q(n + g, n + g) = 2.0 * net.gens[g].c2;
    qp.c(n + g) = net.gens[g].c1;
    qp.c0 += net.gens[g].c0;
  }

  // Nodal balance rows plus the slack angle reference.
  qp.a_eq = Eigen::MatrixXd::Zero(n + 1, nv);
  qp.b_eq = Eigen::VectorXd::Zero(n + 1);
  for (int b = 0; b < n; ++b) qp.b_eq(b) = scenario.pd(b);
  for (int g = 0; g < ng; ++g) qp.a_eq(net.gens[g].bus, n + g) = 1.0;
  for (int k = 0; k < nb; ++k) {
    const auto& br = net.branches[k];
    const double x = std::imag(1.0 / br.y_series);  // series reactance
    const double bcoef = 1.0 / x;                   // -b_ij with b_ij = -1/x
    // flow f->t subtracts from f's balance, adds to t's
    qp.a_eq(br.from, br.from) -= bcoef;
    qp.a_eq(br.from, br.to) += bcoef;
    qp.a_eq(br.to, br.from) += bcoef;
    qp.a_eq(br.to, br.to) -= bcoef;
    qp.b_eq(br.from) -= br.shift * bcoef;
    qp.b_eq(br.to) += br.shift * bcoef;
  }
  qp.a_eq(n, net.slack) = 1.0;
  qp.b_eq(n) = 0.0;

  int n_limited = 0;
  for (const auto& br : net.branches) n_limited += br.rate > 0 ? 1 : 0;
  qp.a_in = Eigen::MatrixXd::Zero(2 * n_limited, nv);
  qp.b_in = Eigen::VectorXd::Zero(2 * n_limited);
  int row = 0;
  for (int k = 0; k < nb; ++k) {
    const auto& br = net.branches[k];
    if (br.rate <= 0) continue;
    const double x = std::imag(1.0 / br.y_series);
    const double bcoef = 1.0 / x;
    // p = (theta_f - theta_t - shift)/x <= rate, and >= -rate
    qp.a_in(row, br.from) = bcoef;
    qp.a_in(row, br.to) = -bcoef;
    qp.b_in(row) = br.rate + br.shift * bcoef;
    qp.a_in(row + 1, br.from) = -bcoef;
    qp.a_in(row + 1, br.to) = bcoef;
    qp.b_in(row + 1) = br.rate - br.shift * bcoef;
    row += 2;
  }

  qp.lb = Eigen::VectorXd::Constant(nv, -kInf);
  qp.ub = Eigen::VectorXd::Constant(nv, kInf);
  for (int g = 0; g < ng; ++g) {
    qp.lb(n + g) = net.gens[g].pmin;
    qp.ub(n + g) = net.gens[g].pmax;
  }

  QpOptions qopts;
  qopts.tol = opts.qp_tol;
  const QpSolution sol = solve_qp(qp, qopts);
  if (!sol.ok()) {
    throw OpfInfeasible("dc-opf: " + std::string(sol.status == QpStatus::Infeasible
                                                     ? "infeasible"
                                                     : "solver failure"));
  }

  DcOpfResult res;
  res.v.vm = Eigen::VectorXd::Ones(n);
  res.v.va = sol.x.head(n);
  res.pg = sol.x.tail(ng);
  res.objective = gen_cost(net, res.pg);
  return res;
}

LinearizationPoint make_reference(const Dataset& train, const Network& net,
                                  const AdmittanceMatrix& adm, const ReferenceOptions& opts) {
  if (train.samples.empty()) {
    throw std::invalid_argument("reference requires a nonempty training set");
  }
  const int n = net.n_buses();

  if (opts.mode == ReferenceMode::NodeMean) {
    VoltageState mean;
    mean.vm = Eigen::VectorXd::Zero(n);
    mean.va = Eigen::VectorXd::Zero(n);
    for (const auto& s : train.samples) {
      mean.vm += s.voltage.vm;
      mean.va += s.voltage.va;
    }
    mean.vm /= static_cast<double>(train.samples.size());
    mean.va /= static_cast<double>(train.samples.size());
    return make_linearization_point(mean, net, adm);
  }

  LoadScenario mean_load;
  mean_load.pd = Eigen::VectorXd::Zero(n);
  mean_load.qd = Eigen::VectorXd::Zero(n);
  for (const auto& s : train.samples) {
    mean_load.pd += s.load.pd;
    mean_load.qd += s.load.qd;
  }
  mean_load.pd /= static_cast<double>(train.samples.size());
  mean_load.qd /= static_cast<double>(train.samples.size());

  if (opts.nr_at_nominal_dispatch) {
    const NewtonResult nr =
        solve_newton(net, adm, mean_load, GenSetpoints::from_case(net));
    return make_linearization_point(nr.v, net, adm);
  }
  const OpfSolution opf = solve_acopf(net, adm, mean_load);
  if (!opf.converged) {
    throw NonConvergence(opf.iterations, opf.final_mismatch);
  }
  return make_linearization_point(opf.v, net, adm);
}

HotStartResult hotstart_opf(const Network& net, const AdmittanceMatrix& adm,
                            const LoadScenario& scenario, const LinearizationPoint& ref,
                            const HotStartOptions& opts) {
  const int n = net.n_buses();
  const int ng = net.n_gens();
  const int nb = static_cast<int>(net.branches.size());
  const int nv = 2 * n + 2 * ng;  // [vm, theta, pg, qg]

  QuadraticProgram qp;
  qp.q = Eigen::MatrixXd::Zero(nv, nv);
  qp.c = Eigen::VectorXd::Zero(nv);
  for (int g = 0; g < ng; ++g) {
    qp.q(2 * n + g, 2 * n + g) = 2.0 * net.gens[g].c2;
    qp.c(2 * n + g) = net.gens[g].c1;
    qp.c0 += net.gens[g].c0;
  }

  // Rows: n P-balance, n Q-balance, slack angle.
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n + 1, nv);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(2 * n + 1);

  for (int b = 0; b < n; ++b) {
    const double vr = ref.v.vm(b);
    const double gs = net.buses[b].gs, bs = net.buses[b].bs;
    // Shunt P = gs v^2 and Q = -bs v^2, linearized at vr and folded into the
    // balance rows: pg - 2 gs vr vm - flows = pd - gs vr^2, and
    // qg + 2 bs vr vm - flows = qd + bs vr^2.
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
    // Flow leaving bus f: p_lin = p0 + a_vi (vm_i - vi) + a_vj (vm_j - vj)
    //                            + a_d (th_i - th_j - d0)
    auto add_flow = [&](int row, int bus_i, int bus_j, double c0, double avi, double avj,
                        double ad) {
      a(row, bus_i) -= avi;
      a(row, bus_j) -= avj;
      a(row, n + bus_i) -= ad;
      a(row, n + bus_j) += ad;
      rhs(row) += c0 - avi * vi - avj * vj - ad * d0;
    };
    // From-side contributions to the from bus, to-side to the to bus.
    add_flow(br.from, br.from, br.to, fwd[k].p0, fwd[k].dp_dvi, fwd[k].dp_dvj, fwd[k].dp_dd);
    add_flow(n + br.from, br.from, br.to, fwd[k].q0, fwd[k].dq_dvi, fwd[k].dq_dvj, fwd[k].dq_dd);
    add_flow(br.to, br.from, br.to, rev[k].p0, rev[k].dp_dvi, rev[k].dp_dvj, rev[k].dp_dd);
    add_flow(n + br.to, br.from, br.to, rev[k].q0, rev[k].dq_dvi, rev[k].dq_dvj, rev[k].dq_dd);
  }
  a(2 * n, n + net.slack) = 1.0;
  rhs(2 * n) = ref.v.va(net.slack);

  qp.a_eq = std::move(a);
  qp.b_eq = std::move(rhs);

  // Linearized MW limits on both branch ends.
  if (opts.branch_limits) {
    int n_limited = 0;
    for (const auto& br : net.branches) n_limited += br.rate > 0 ? 1 : 0;
    qp.a_in = Eigen::MatrixXd::Zero(4 * n_limited, nv);
    qp.b_in = Eigen::VectorXd::Zero(4 * n_limited);
    int row = 0;
    for (int k = 0; k < nb; ++k) {
      const auto& br = net.branches[k];
      if (br.rate <= 0) continue;
      const double vi = ref.v.vm(br.from), vj = ref.v.vm(br.to);
      const double d0 = ref.delta(k);
      auto add_limit = [&](const BranchLinearModel& m) {
        const double c0 = m.p0 - m.dp_dvi * vi - m.dp_dvj * vj - m.dp_dd * d0;
        for (int sign : {+1, -1}) {
          qp.a_in(row, br.from) = sign * m.dp_dvi;
          qp.a_in(row, br.to) = sign * m.dp_dvj;
          qp.a_in(row, n + br.from) = sign * m.dp_dd;
          qp.a_in(row, n + br.to) = -sign * m.dp_dd;
          qp.b_in(row) = br.rate - sign * c0;
          ++row;
        }
      };
      add_limit(fwd[k]);
      add_limit(rev[k]);
    }
  }

  qp.lb = Eigen::VectorXd::Constant(nv, -kInf);
  qp.ub = Eigen::VectorXd::Constant(nv, kInf);
  for (int b = 0; b < n; ++b) {
    qp.lb(b) = net.buses[b].vmin;
    qp.ub(b) = net.buses[b].vmax;
  }
  for (int g = 0; g < ng; ++g) {
    qp.lb(2 * n + g) = net.gens[g].pmin;
    qp.ub(2 * n + g) = net.gens[g].pmax;
    qp.lb(2 * n + ng + g) = net.gens[g].qmin;
    qp.ub(2 * n + ng + g) = net.gens[g].qmax;
  }

  QpOptions qopts;
  qopts.tol = opts.qp_tol;
  const QpSolution sol = solve_qp(qp, qopts);
  if (!sol.ok()) {
    throw OpfInfeasible("hot-start: " + std::string(sol.status == QpStatus::Infeasible
                                                        ? "infeasible"
                                                        : "solver failure"));
  }

  HotStartResult res;
  res.v.vm = sol.x.head(n);
  res.v.va = sol.x.segment(n, n);
  res.pg = sol.x.segment(2 * n, ng);
  res.qg = sol.x.tail(ng);
  res.objective = gen_cost(net, res.pg);
  return res;
}

MomentSummary compute_moments(const Dataset& ds, const std::vector<int>& split,
                              const LinearizationPoint& ref, const Network& net,
                              const AdmittanceMatrix& adm) {
  const int n = net.n_buses();
  const int nb = static_cast<int>(net.branches.size());
  MomentSummary m;
  m.ev2 = Eigen::VectorXd::Zero(n);
  m.ed2 = Eigen::VectorXd::Zero(nb);
  m.v_ub = ref.v.vm.maxCoeff();

  for (int idx : split) {
    const auto& s = ds.samples[idx];
    m.ev2 += (s.voltage.vm - ref.v.vm).cwiseAbs2();
    for (int k = 0; k < nb; ++k) {
      const auto& br = net.branches[k];
      const double d = s.voltage.va(br.from) - s.voltage.va(br.to) - ref.delta(k);
      m.ed2(k) += d * d;
    }
    m.v_ub = std::max(m.v_ub, s.voltage.vm.maxCoeff());
  }
  const double count = static_cast<double>(split.size());
  m.ev2 /= count;
  m.ed2 /= count;

  m.from.resize(nb);
  m.to.resize(nb);
  m.y_abs.resize(nb);
  m.g.resize(nb);
  m.b.resize(nb);
  m.y_angle.resize(nb);
  for (int k = 0; k < nb; ++k) {
    m.from(k) = net.branches[k].from;
    m.to(k) = net.branches[k].to;
    const std::complex<double> y = series_admittance(adm, k);
    m.y_abs(k) = std::abs(y);
    m.g(k) = y.real();
    m.b(k) = y.imag();
    m.y_angle(k) = std::arg(y);
  }
  return m;
}

double remainder_bound(const MomentSummary& m, int branch, FlowKind kind) {
  const double lead = kind == FlowKind::Active ? std::abs(m.g(branch)) : std::abs(m.b(branch));
  const double evi = m.ev2(m.from(branch));
  const double evj = m.ev2(m.to(branch));
  const double ed = m.ed2(branch);
  return lead * evi +
         m.y_abs(branch) * (m.v_ub * m.v_ub / 2.0 * ed +
                            m.v_ub * (std::sqrt(evj * ed) + std::sqrt(evi * ed)));
}

double mean_ref_gap_bound(const Eigen::MatrixXd& hessian_bound, const Eigen::MatrixXd& cov) {
  return 0.5 * (hessian_bound * cov.cwiseAbs()).trace();
}

}  // namespace opfbench
