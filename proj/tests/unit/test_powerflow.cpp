#include <fstream>

#include "doctest.h"
#include "opfbench/powerflow.hpp"

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

}  // namespace

TEST_CASE("flat voltage with no shunts gives zero injection") {
  const Network net = load("/case9.m");
  // case9 has line charging, so strip it for the zero-injection identity.
  Network stripped = net;
  for (auto& br : stripped.branches) br.b_charging = 0;
  const AdmittanceMatrix adm = build_ybus(stripped);
  VoltageState v;
  v.vm = Eigen::VectorXd::Ones(stripped.n_buses());
  v.va = Eigen::VectorXd::Zero(stripped.n_buses());
  CHECK(complex_injection(v, adm).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("injection matches the hand-expanded formula on two buses") {
  RawCase raw = two_bus_raw(1.0 / 26.0, 5.0 / 26.0, 50, 20);  // y_s = 1 - 5j
  const Network net = build_network(raw);
  const AdmittanceMatrix adm = build_ybus(net);
  VoltageState v;
  v.vm = Eigen::Vector2d(1.0, 0.98);
  v.va = Eigen::Vector2d(0.0, -0.02);
  const Eigen::VectorXcd s = complex_injection(v, adm);

  // S_i = v_i * conj(sum_k Y_ik v_k), expanded by hand for both buses.
  const std::complex<double> ys(1.0, -5.0);
  const std::complex<double> v1 = std::polar(1.0, 0.0);
  const std::complex<double> v2 = std::polar(0.98, -0.02);
  const std::complex<double> s1 = v1 * std::conj(ys * v1 - ys * v2);
  const std::complex<double> s2 = v2 * std::conj(-ys * v1 + ys * v2);
  CHECK(std::abs(s(0) - s1) < 1e-14);
  CHECK(std::abs(s(1) - s2) < 1e-14);
}

TEST_CASE("zero-load network converges immediately to a flat state") {
  RawCase raw = two_bus_raw(0.02, 0.1, 0, 0);
  const Network net = build_network(raw);
  const AdmittanceMatrix adm = build_ybus(net);
  GenSetpoints sp = GenSetpoints::from_case(net);
  sp.pg.setZero();
  const NewtonResult res = solve_newton(net, adm, LoadScenario::nominal(net), sp);
  CHECK(res.iterations <= 2);
  CHECK(res.v.vm(1) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(res.v.va(1) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("two-bus solution satisfies the receiving-end quadratic") {
  // With sending voltage 1<0 and impedance z = r + jx, the receiving
  // magnitude solves u^2 + u(2(Pr+Qx) - 1) + (P^2+Q^2)|z|^2 = 0, u = v2^2.
  const double r = 0.02, x = 0.1, p = 0.5, q = 0.2;
  RawCase raw = two_bus_raw(r, x, 100 * p, 100 * q);
  const Network net = build_network(raw);
  const AdmittanceMatrix adm = build_ybus(net);
  const NewtonResult res =
      solve_newton(net, adm, LoadScenario::nominal(net), GenSetpoints::from_case(net));

  const double b = 2.0 * (p * r + q * x) - 1.0;
  const double c = (p * p + q * q) * (r * r + x * x);
  const double u = (-b + std::sqrt(b * b - 4.0 * c)) / 2.0;
  CHECK(res.v.vm(1) == doctest::Approx(std::sqrt(u)).epsilon(1e-9));
}

TEST_CASE("case30 nominal load converges tightly from case setpoints") {
  const Network net = load("/case30.m");
  const AdmittanceMatrix adm = build_ybus(net);
  const NewtonResult res =
      solve_newton(net, adm, LoadScenario::nominal(net), GenSetpoints::from_case(net));
  CHECK(res.max_mismatch < 1e-8);
  CHECK(res.iterations <= 6);
  // Slack picks up losses: total generation slightly above 1.892 pu load.
  const Dispatch d = recover_generation(res.v, net, adm, LoadScenario::nominal(net));
  CHECK(d.pg.sum() > 1.892);
  CHECK(d.pg.sum() < 1.95);
}

TEST_CASE("newton solve is deterministic") {
  const Network net = load("/case30.m");
  const AdmittanceMatrix adm = build_ybus(net);
  const NewtonResult a =
      solve_newton(net, adm, LoadScenario::nominal(net), GenSetpoints::from_case(net));
  const NewtonResult b =
      solve_newton(net, adm, LoadScenario::nominal(net), GenSetpoints::from_case(net));
  CHECK((a.v.vm - b.v.vm).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.v.va - b.v.va).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("non-convergence reports iterations and mismatch") {
  RawCase raw = two_bus_raw(0.02, 0.1, 900, 300);  // far beyond deliverable power
  const Network net = build_network(raw);
  const AdmittanceMatrix adm = build_ybus(net);
  CHECK_THROWS_AS(
      solve_newton(net, adm, LoadScenario::nominal(net), GenSetpoints::from_case(net)),
      NonConvergence);
}

TEST_CASE("recovered generation reproduces specified injections after a solve") {
  const Network net = load("/case30.m");
  const AdmittanceMatrix adm = build_ybus(net);
  const LoadScenario sc = LoadScenario::nominal(net);
  const GenSetpoints sp = GenSetpoints::from_case(net);
  const NewtonResult res = solve_newton(net, adm, sc, sp);
  const Dispatch d = recover_generation(res.v, net, adm, sc);
  for (int g = 0; g < net.n_gens(); ++g) {
    if (net.gens[g].bus == net.slack) continue;
    CHECK(d.pg(g) == doctest::Approx(sp.pg(g)).epsilon(1e-7));
  }
}

TEST_CASE("finite-difference check of reactive response to a magnitude bump") {
  const Network net = load("/case30.m");
  const AdmittanceMatrix adm = build_ybus(net);
  const LoadScenario sc = LoadScenario::nominal(net);
  const NewtonResult res = solve_newton(net, adm, sc, GenSetpoints::from_case(net));

  const int gbus = net.gens[1].bus;
  VoltageState bumped = res.v;
  const double h = 1e-4;
  bumped.vm(gbus) += h;
  const Dispatch d0 = recover_generation(res.v, net, adm, sc);
  const Dispatch d1 = recover_generation(bumped, net, adm, sc);
  // dQg/dVm from the injection formula: central difference vs one-sided
  // agrees to O(h); just check the response is materially nonzero and
  // matches a half-step extrapolation.
  VoltageState half = res.v;
  half.vm(gbus) += h / 2;
  const Dispatch dh = recover_generation(half, net, adm, sc);
  const double slope_full = (d1.qg(1) - d0.qg(1)) / h;
  const double slope_half = (dh.qg(1) - d0.qg(1)) / (h / 2);
  CHECK(std::abs(slope_full) > 1.0);  // stiff reactive response
  CHECK(slope_half == doctest::Approx(slope_full).epsilon(1e-3));
}

TEST_CASE("effective load equals scenario load at non-generator buses of a solution") {
  const Network net = load("/case30.m");
  const AdmittanceMatrix adm = build_ybus(net);
  const LoadScenario sc = LoadScenario::nominal(net);
  const NewtonResult res = solve_newton(net, adm, sc, GenSetpoints::from_case(net));
  const Eigen::VectorXcd eff = effective_load(res.v, net, adm, sc);
  for (int b = 0; b < net.n_buses(); ++b) {
    CHECK(std::abs(eff(b).real() - sc.pd(b)) < 1e-6);
    CHECK(std::abs(eff(b).imag() - sc.qd(b)) < 1e-6);
  }
}

TEST_CASE("branch flow matches the polar hand formula on two buses") {
  const double r = 1.0 / 26.0, x = 5.0 / 26.0;
  RawCase raw = two_bus_raw(r, x, 50, 20);
  const Network net = build_network(raw);
  const AdmittanceMatrix adm = build_ybus(net);
  VoltageState v;
  v.vm = Eigen::Vector2d(1.02, 0.97);
  v.va = Eigen::Vector2d(0.01, -0.03);
  const auto flows = branch_flows(v, net, adm);

  const double g = 1.0, b = -5.0;  // y_s = 1 - 5j
  const double d = v.va(0) - v.va(1);
  const double p_hand = g * v.vm(0) * v.vm(0) -
                        v.vm(0) * v.vm(1) * (g * std::cos(d) + b * std::sin(d));
  CHECK(flows[0].p_from == doctest::Approx(p_hand).epsilon(1e-12));
}

TEST_CASE("injections balance losses and shunt absorption on arbitrary states") {
  const Network net = load("/case118.m");
  const AdmittanceMatrix adm = build_ybus(net);
  VoltageState v;
  v.vm = Eigen::VectorXd::Ones(net.n_buses());
  v.va = Eigen::VectorXd::Zero(net.n_buses());
  // Not a solution: perturb deterministically.
  for (int i = 0; i < net.n_buses(); ++i) {
    v.vm(i) += 0.03 * std::sin(0.7 * i);
    v.va(i) += 0.05 * std::cos(1.3 * i);
  }
  const Eigen::VectorXcd s = complex_injection(v, adm);
  const auto flows = branch_flows(v, net, adm);
  std::complex<double> total(s.sum());
  std::complex<double> loss(0, 0);
  for (const auto& f : flows) {
    loss += std::complex<double>(f.p_from + f.p_to, f.q_from + f.q_to);
  }
  std::complex<double> shunt(0, 0);
  for (int b = 0; b < net.n_buses(); ++b) {
    const double vm2 = v.vm(b) * v.vm(b);
    shunt += std::complex<double>(net.buses[b].gs * vm2, -net.buses[b].bs * vm2);
  }
  CHECK(std::abs(total - (loss + shunt)) < 1e-9);
}
