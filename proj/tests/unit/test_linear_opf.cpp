#include <fstream>
#include <numbers>

#include "doctest.h"
#include "opfbench/acopf.hpp"
#include "opfbench/linear_opf.hpp"
#include "opfbench/rng.hpp"

using namespace opfbench;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  REQUIRE(f);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

Network load(const std::string& name) {
  return build_network(parse_case(read_file(std::string(OPFBENCH_DATA_DIR) + name)));
}

RawCase two_bus_raw(double r, double x, double pd_mw, double qd_mw) {
  RawCase c;
  c.base_mva = 100;
  c.buses = {{1, BusType::Slack, 0, 0, 0, 0, 1, 0, 1.1, 0.9},
             {2, BusType::PQ, pd_mw, qd_mw, 0, 0, 1, 0, 1.1, 0.9}};
  c.branches = {{1, 2, r, x, 0.0, 0, 0, 0, 1}};
  c.gens = {{1, pd_mw, 0, 300, -300, 1.0, 300, 0, 1}};
  c.costs = {{2, 0, 0, 0.02, 3, 0}};
  return c;
}

LinearizationPoint ref_at(const Network& net, const AdmittanceMatrix& adm,
                          const Eigen::VectorXd& vm, const Eigen::VectorXd& va) {
  VoltageState v;
  v.vm = vm;
  v.va = va;
  return make_linearization_point(v, net, adm);
}

}  // namespace

TEST_CASE("dc-opf solves the one-line analytic case") {
  // x = 0.2 pu so the classical susceptance is 5; serving 0.5 pu forces
  // theta_2 = -0.1 rad and dispatch 0.5.
  RawCase raw = two_bus_raw(0.0, 0.2, 50, 0);
  raw.branches[0].r = 0;
  const Network net = build_network(raw);
  const DcOpfResult res = dcopf(net, LoadScenario::nominal(net));
  CHECK(res.pg(0) == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(res.v.va(1) == doctest::Approx(-0.1).epsilon(1e-7));
  CHECK(res.v.vm(0) == 1.0);
  CHECK(res.v.vm(1) == 1.0);
}

TEST_CASE("dc-opf at zero load parks every generator at zero") {
  const Network net = load("/case30.m");
  LoadScenario sc = LoadScenario::nominal(net);
  sc.pd.setZero();
  sc.qd.setZero();
  const DcOpfResult res = dcopf(net, sc);
  CHECK(res.pg.cwiseAbs().maxCoeff() < 1e-7);
  CHECK(res.v.va.cwiseAbs().maxCoeff() < 1e-7);
  double c0_sum = 0;
  for (const auto& g : net.gens) c0_sum += g.c0;
  CHECK(std::abs(res.objective - c0_sum) < 1e-6);
}

TEST_CASE("dc-opf flows are gauge invariant") {
  const Network net = load("/case30.m");
  const DcOpfResult res = dcopf(net, LoadScenario::nominal(net));
  // Adding a constant to every angle leaves every branch flow unchanged.
  Eigen::VectorXd shifted = res.v.va.array() + 0.37;
  for (const auto& br : net.branches) {
    const double x = std::imag(1.0 / br.y_series);
    const double f0 = (res.v.va(br.from) - res.v.va(br.to)) / x;
    const double f1 = (shifted(br.from) - shifted(br.to)) / x;
    CHECK(f0 == doctest::Approx(f1).epsilon(1e-12));
  }
}

TEST_CASE("branch model at zero displacement returns the reference flows") {
  const Network net = load("/case118.m");
  const AdmittanceMatrix adm = build_ybus(net);
  Eigen::VectorXd vm = Eigen::VectorXd::Ones(net.n_buses());
  Eigen::VectorXd va = Eigen::VectorXd::Zero(net.n_buses());
  for (int i = 0; i < net.n_buses(); ++i) {
    vm(i) += 0.02 * std::sin(1.1 * i);
    va(i) += 0.04 * std::cos(0.9 * i);
  }
  const LinearizationPoint ref = ref_at(net, adm, vm, va);
  for (std::size_t k = 0; k < net.branches.size(); ++k) {
    const BranchLinearModel m = linearize_branch(net, adm, static_cast<int>(k), ref);
    CHECK(m.p(0, 0, 0) == ref.flows[k].p_from);
    CHECK(m.q(0, 0, 0) == ref.flows[k].q_from);
    const BranchLinearModel mr = linearize_branch_reverse(net, adm, static_cast<int>(k), ref);
    CHECK(mr.p(0, 0, 0) == ref.flows[k].p_to);
    CHECK(mr.q(0, 0, 0) == ref.flows[k].q_to);
  }
}

TEST_CASE("branch model coefficients match central finite differences") {
  const Network net = load("/case118.m");  // exercises taps
  const AdmittanceMatrix adm = build_ybus(net);
  Eigen::VectorXd vm = Eigen::VectorXd::Constant(net.n_buses(), 1.01);
  Eigen::VectorXd va = Eigen::VectorXd::Zero(net.n_buses());
  for (int i = 0; i < net.n_buses(); ++i) va(i) = 0.03 * std::sin(2.3 * i);
  const LinearizationPoint ref = ref_at(net, adm, vm, va);

  const double h = 1e-6;
  for (int k : {0, 7, 31, 95, 185}) {
    const auto& br = net.branches[k];
    const BranchLinearModel m = linearize_branch(net, adm, k, ref);

    auto flow_at = [&](double dvi, double dvj, double dva_i) {
      VoltageState v = ref.v;
      v.vm(br.from) += dvi;
      v.vm(br.to) += dvj;
      v.va(br.from) += dva_i;
      return branch_flows(v, net, adm)[k];
    };
    const double dp_dvi = (flow_at(h, 0, 0).p_from - flow_at(-h, 0, 0).p_from) / (2 * h);
    const double dp_dvj = (flow_at(0, h, 0).p_from - flow_at(0, -h, 0).p_from) / (2 * h);
    const double dp_dd = (flow_at(0, 0, h).p_from - flow_at(0, 0, -h).p_from) / (2 * h);
    CHECK(m.dp_dvi == doctest::Approx(dp_dvi).epsilon(1e-6));
    CHECK(m.dp_dvj == doctest::Approx(dp_dvj).epsilon(1e-6));
    CHECK(m.dp_dd == doctest::Approx(dp_dd).epsilon(1e-6));
    const double dq_dvi = (flow_at(h, 0, 0).q_from - flow_at(-h, 0, 0).q_from) / (2 * h);
    CHECK(m.dq_dvi == doctest::Approx(dq_dvi).epsilon(1e-6));
  }
}

TEST_CASE("linear loss model is the sum of the directed linear models") {
  const Network net = load("/case30.m");
  const AdmittanceMatrix adm = build_ybus(net);
  Eigen::VectorXd vm = Eigen::VectorXd::Constant(net.n_buses(), 1.02);
  Eigen::VectorXd va = Eigen::VectorXd::Zero(net.n_buses());
  for (int i = 0; i < net.n_buses(); ++i) va(i) = 0.05 * std::sin(1.7 * i);
  const LinearizationPoint ref = ref_at(net, adm, vm, va);

  Rng rng(99);
  for (std::size_t k = 0; k < net.branches.size(); ++k) {
    const BranchLinearModel f = linearize_branch(net, adm, static_cast<int>(k), ref);
    const BranchLinearModel r = linearize_branch_reverse(net, adm, static_cast<int>(k), ref);
    for (int trial = 0; trial < 5; ++trial) {
      const double dvi = rng.uniform(-0.05, 0.05);
      const double dvj = rng.uniform(-0.05, 0.05);
      const double dd = rng.uniform(-0.1, 0.1);
      // Loss linearization: p_ij + p_ji stays affine and equals the sum of
      // the two directed models for every displacement.
      const double loss_linear = f.p(dvi, dvj, dd) + r.p(dvi, dvj, dd);
      const double sum_models = (f.p0 + r.p0) + (f.dp_dvi + r.dp_dvi) * dvi +
                                (f.dp_dvj + r.dp_dvj) * dvj + (f.dp_dd + r.dp_dd) * dd;
      CHECK(loss_linear == doctest::Approx(sum_models).epsilon(1e-12));
    }
  }
}

TEST_CASE("halving the displacement quarters the truncation error") {
  const Network net = load("/case30.m");
  const AdmittanceMatrix adm = build_ybus(net);
  const LinearizationPoint ref =
      ref_at(net, adm, Eigen::VectorXd::Constant(30, 1.0), Eigen::VectorXd::Zero(30));

  Rng rng(2024);
  int in_band = 0, total = 0;
  for (int k : {0, 5, 17, 33}) {
    const auto& br = net.branches[k];
    const BranchLinearModel m = linearize_branch(net, adm, k, ref);
    for (int trial = 0; trial < 16; ++trial) {
      const double dvi = rng.uniform(-0.04, 0.04);
      const double dvj = rng.uniform(-0.04, 0.04);
      const double dd = rng.uniform(-0.08, 0.08);
      auto exact = [&](double s) {
        VoltageState v = ref.v;
        v.vm(br.from) += s * dvi;
        v.vm(br.to) += s * dvj;
        v.va(br.from) += s * dd;
        return branch_flows(v, net, adm)[k].p_from;
      };
      const double e1 = std::abs(exact(1.0) - m.p(dvi, dvj, dd));
      const double e2 = std::abs(exact(0.5) - m.p(dvi / 2, dvj / 2, dd / 2));
      if (e1 < 1e-12) continue;  // degenerate draw
      const double ratio = e1 / e2;
      ++total;
      if (ratio > 3.6 && ratio < 4.4) ++in_band;
    }
  }
  // Second-order scaling holds for the overwhelming majority of draws.
  CHECK(total > 40);
  CHECK(in_band >= total * 9 / 10);
}

TEST_CASE("hot-start at the reference load reproduces the reference") {
  // Wide bounds keep everything interior, so the linearized optimum must sit
  // on the expansion point itself.
  RawCase raw = two_bus_raw(0.02, 0.1, 40, 15);
  raw.buses[0].vmax = raw.buses[1].vmax = 1.5;
  raw.buses[0].vmin = raw.buses[1].vmin = 0.5;
  const Network net = build_network(raw);
  const AdmittanceMatrix adm = build_ybus(net);
  const LoadScenario sc = LoadScenario::nominal(net);
  const OpfSolution opf = solve_acopf(net, adm, sc);
  REQUIRE(opf.converged);
  const LinearizationPoint ref = make_linearization_point(opf.v, net, adm);
  const HotStartResult hot = hotstart_opf(net, adm, sc, ref);
  CHECK((hot.v.vm - opf.v.vm).cwiseAbs().maxCoeff() < 1e-5);
  CHECK((hot.v.va - opf.v.va).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("reference from identical samples equals that sample") {
  const Network net = load("/case30.m");
  const AdmittanceMatrix adm = build_ybus(net);
  const LoadScenario sc = LoadScenario::nominal(net);
  const NewtonResult nr = solve_newton(net, adm, sc, GenSetpoints::from_case(net));

  Dataset ds;
  for (int i = 0; i < 4; ++i) {
    Sample s;
    s.load = sc;
    s.voltage = nr.v;
    s.pg = Eigen::VectorXd::Zero(net.n_gens());
    s.qg = Eigen::VectorXd::Zero(net.n_gens());
    ds.samples.push_back(s);
  }
  const LinearizationPoint ref = make_reference(ds, net, adm);
  CHECK((ref.v.vm - nr.v.vm).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ref.v.va - nr.v.va).cwiseAbs().maxCoeff() == 0.0);
  // Reference flows are the exact flows at the reference.
  const auto flows = branch_flows(nr.v, net, adm);
  for (std::size_t k = 0; k < flows.size(); ++k) {
    CHECK(ref.flows[k].p_from == flows[k].p_from);
  }
}

TEST_CASE("zero-variance moments give a zero remainder bound") {
  const Network net = load("/case30.m");
  const AdmittanceMatrix adm = build_ybus(net);
  const LoadScenario sc = LoadScenario::nominal(net);
  const NewtonResult nr = solve_newton(net, adm, sc, GenSetpoints::from_case(net));
  Dataset ds;
  Sample s;
  s.load = sc;
  s.voltage = nr.v;
  s.pg = Eigen::VectorXd::Zero(net.n_gens());
  s.qg = Eigen::VectorXd::Zero(net.n_gens());
  ds.samples.push_back(s);
  const LinearizationPoint ref = make_reference(ds, net, adm);
  const MomentSummary m = compute_moments(ds, {0}, ref, net, adm);
  for (std::size_t k = 0; k < net.branches.size(); ++k) {
    CHECK(remainder_bound(m, static_cast<int>(k), FlowKind::Active) == 0.0);
    CHECK(remainder_bound(m, static_cast<int>(k), FlowKind::Reactive) == 0.0);
  }
}

TEST_CASE("monte-carlo mean linearization error respects the bound") {
  RawCase raw = two_bus_raw(0.03, 0.12, 30, 10);
  const Network net = build_network(raw);
  const AdmittanceMatrix adm = build_ybus(net);
  const LinearizationPoint ref =
      ref_at(net, adm, Eigen::VectorXd::Constant(2, 1.01), Eigen::VectorXd::Zero(2));
  const BranchLinearModel lin = linearize_branch(net, adm, 0, ref);

  Rng rng(7);
  const double av = 0.02, ad = 0.04;
  double sum_err_p = 0, sum_err_q = 0;
  double ev2_i = 0, ev2_j = 0, ed2 = 0;
  double v_ub = ref.v.vm.maxCoeff();
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const double dvi = rng.uniform(-av, av);
    const double dvj = rng.uniform(-av, av);
    const double dd = rng.uniform(-ad, ad);
    VoltageState v = ref.v;
    v.vm(0) += dvi;
    v.vm(1) += dvj;
    v.va(0) += dd;
    const BranchFlow exact = branch_flows(v, net, adm)[0];
    sum_err_p += std::abs(exact.p_from - lin.p(dvi, dvj, dd));
    sum_err_q += std::abs(exact.q_from - lin.q(dvi, dvj, dd));
    ev2_i += dvi * dvi;
    ev2_j += dvj * dvj;
    ed2 += dd * dd;
    v_ub = std::max(v_ub, std::max(v.vm(0), v.vm(1)));
  }
  MomentSummary m;
  m.ev2 = Eigen::Vector2d(ev2_i / draws, ev2_j / draws);
  m.ed2 = Eigen::VectorXd::Constant(1, ed2 / draws);
  m.v_ub = v_ub;
  m.from = Eigen::VectorXi::Constant(1, 0);
  m.to = Eigen::VectorXi::Constant(1, 1);
  const std::complex<double> y = net.branches[0].y_series;
  m.y_abs = Eigen::VectorXd::Constant(1, std::abs(y));
  m.g = Eigen::VectorXd::Constant(1, y.real());
  m.b = Eigen::VectorXd::Constant(1, y.imag());
  m.y_angle = Eigen::VectorXd::Constant(1, std::arg(y));

  CHECK(sum_err_p / draws <= remainder_bound(m, 0, FlowKind::Active));
  CHECK(sum_err_q / draws <= remainder_bound(m, 0, FlowKind::Reactive));
}

TEST_CASE("reactive bound dominates when |b| >= |g|") {
  MomentSummary m;
  m.ev2 = Eigen::Vector2d(1e-4, 2e-4);
  m.ed2 = Eigen::VectorXd::Constant(1, 3e-4);
  m.v_ub = 1.05;
  m.from = Eigen::VectorXi::Constant(1, 0);
  m.to = Eigen::VectorXi::Constant(1, 1);
  m.y_abs = Eigen::VectorXd::Constant(1, 5.1);
  m.g = Eigen::VectorXd::Constant(1, 1.0);
  m.b = Eigen::VectorXd::Constant(1, -5.0);
  m.y_angle = Eigen::VectorXd::Constant(1, std::atan2(-5.0, 1.0));
  CHECK(remainder_bound(m, 0, FlowKind::Reactive) >=
        remainder_bound(m, 0, FlowKind::Active));
}

TEST_CASE("mean-reference gap bound on a quadratic map with gaussian-ish samples") {
  // f(x) = x'Ax has Hessian 2A exactly, so |E f - f(E x)| = |Tr(A Cov)|,
  // and the bound 0.5 Tr(|2A| |Cov|) is tight for diagonal A and
  // uncorrelated coordinates.
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3, 3);
  a.diagonal() << 1.5, 0.7, 2.0;
  Rng rng(5);
  const int n_samp = 200000;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(3, 3);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  double f_mean = 0;
  std::vector<Eigen::Vector3d> xs(n_samp);
  for (auto& x : xs) {
    // Box-Muller pairs from the portable rng.
    for (int j = 0; j < 3; ++j) {
      const double u1 = std::max(rng.uniform01(), 1e-12);
      const double u2 = rng.uniform01();
      x(j) = 0.3 * std::sqrt(-2.0 * std::log(u1)) * std::cos(2 * std::numbers::pi * u2);
    }
    mean += x;
  }
  mean /= n_samp;
  for (const auto& x : xs) {
    cov += (x - mean) * (x - mean).transpose();
    f_mean += x.dot(a * x);
  }
  cov /= n_samp;
  f_mean /= n_samp;
  const double f_at_mean = mean.dot(a * mean);
  const double gap = std::abs(f_mean - f_at_mean);
  const double bound = mean_ref_gap_bound(2.0 * a.cwiseAbs(), cov);
  CHECK(gap <= bound * (1.0 + 1e-9));
  // Tight within 5% for a positive diagonal A.
  CHECK(gap == doctest::Approx(bound).epsilon(0.05));

  SUBCASE("zero covariance gives a zero bound") {
    CHECK(mean_ref_gap_bound(2.0 * a.cwiseAbs(), Eigen::MatrixXd::Zero(3, 3)) == 0.0);
  }
}
