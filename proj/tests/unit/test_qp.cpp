#include <fstream>

#include "doctest.h"
#include "opfbench/linear_opf.hpp"
#include "opfbench/qp.hpp"

using namespace opfbench;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Textbook revised simplex, written only as a test oracle. The basis is
// refactorized from the original columns at every iteration, trading speed
// for numerical trustworthiness. Standard form: min c'x, Ax = b, x >= 0.
struct SimplexResult {
  bool ok = false;
  double objective = 0;
};

SimplexResult revised_simplex(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                              const Eigen::VectorXd& c, std::vector<Eigen::Index>& basis) {
  const Eigen::Index m = a.rows(), n = a.cols();
  int stalled = 0;
  double last_obj = kInf;
  for (int iter = 0; iter < 20000; ++iter) {
    Eigen::MatrixXd bmat(m, m);
    Eigen::VectorXd cb(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      bmat.col(i) = a.col(basis[i]);
      cb(i) = c(basis[i]);
    }
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(bmat);
    const Eigen::VectorXd xb = lu.solve(b);
    const Eigen::VectorXd y = lu.transpose().solve(cb);
    const double obj = cb.dot(xb);
    stalled = obj < last_obj - 1e-11 ? 0 : stalled + 1;
    last_obj = obj;
    const bool bland = stalled > 50;

    Eigen::Index enter = -1;
    double most_neg = -1e-9;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double dj = c(j) - y.dot(a.col(j));
      if (dj < most_neg) {
        enter = j;
        if (bland) break;
        most_neg = dj;
      }
    }
    if (enter < 0) return {true, obj};

    const Eigen::VectorXd w = lu.solve(a.col(enter));
    Eigen::Index leave = -1;
    double theta = kInf;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (w(i) > 1e-9) theta = std::min(theta, std::max(xb(i), 0.0) / w(i));
    }
    if (theta == kInf) return {false, 0};  // unbounded
    double best_pivot = 0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (w(i) > 1e-9 && std::max(xb(i), 0.0) / w(i) <= theta + 1e-9 && w(i) > best_pivot) {
        best_pivot = w(i);
        leave = i;
      }
    }
    if (leave < 0) return {false, 0};
    basis[leave] = enter;
  }
  return {false, 0};
}

SimplexResult simplex_standard(Eigen::MatrixXd a, Eigen::VectorXd b, Eigen::VectorXd c) {
  const Eigen::Index m = a.rows(), n = a.cols();
  for (Eigen::Index i = 0; i < m; ++i) {
    if (b(i) < 0) {
      a.row(i) = -a.row(i);
      b(i) = -b(i);
    }
  }
  // Phase 1: artificial identity basis, minimize the artificial sum.
  Eigen::MatrixXd a1(m, n + m);
  a1.leftCols(n) = a;
  a1.rightCols(m) = Eigen::MatrixXd::Identity(m, m);
  Eigen::VectorXd c1 = Eigen::VectorXd::Zero(n + m);
  c1.tail(m).setOnes();
  std::vector<Eigen::Index> basis(m);
  for (Eigen::Index i = 0; i < m; ++i) basis[i] = n + i;
  const SimplexResult phase1 = revised_simplex(a1, b, c1, basis);
  if (!phase1.ok || phase1.objective > 1e-7) return {false, 0};

  // Phase 2 keeps the artificial columns priced out of contention.
  Eigen::VectorXd c2 = Eigen::VectorXd::Zero(n + m);
  c2.head(n) = c;
  c2.tail(m).setConstant(1e10);
  const SimplexResult phase2 = revised_simplex(a1, b, c2, basis);
  if (!phase2.ok) return {false, 0};
  // Subtract any penalty from artificials stuck basic at zero level.
  Eigen::MatrixXd bmat(m, m);
  for (Eigen::Index i = 0; i < m; ++i) bmat.col(i) = a1.col(basis[i]);
  const Eigen::VectorXd xb = bmat.partialPivLu().solve(b);
  double obj = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (basis[i] < n) obj += c(basis[i]) * xb(i);
  }
  return {true, obj};
}

// Convert a box-bounded LP (finite bounds required) to standard form by
// shifting each variable to its lower bound, then solve with the simplex
// oracle.
double simplex_oracle(const QuadraticProgram& qp) {
  const Eigen::Index n = qp.n_vars();
  const Eigen::Index me = qp.a_eq.rows();
  const Eigen::Index mi = qp.a_in.rows();
  REQUIRE(((qp.lb.array() > -kInf) && (qp.ub.array() < kInf)).all());
  const Eigen::VectorXd shift = qp.lb;

  const Eigen::Index rows = me + mi + n;  // upper-bound row per variable
  const Eigen::Index cols = n + mi + n;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rows, cols);
  Eigen::VectorXd b(rows);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(cols);
  c.head(n) = qp.c;

  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < me; ++i, ++r) {
    a.row(r).head(n) = qp.a_eq.row(i);
    b(r) = qp.b_eq(i) - qp.a_eq.row(i).dot(shift);
  }
  Eigen::Index slack = n;
  for (Eigen::Index i = 0; i < mi; ++i, ++r) {
    a.row(r).head(n) = qp.a_in.row(i);
    a(r, slack++) = 1.0;
    b(r) = qp.b_in(i) - qp.a_in.row(i).dot(shift);
  }
  for (Eigen::Index j = 0; j < n; ++j, ++r) {
    a(r, j) = 1.0;
    a(r, slack++) = 1.0;
    b(r) = qp.ub(j) - qp.lb(j);
  }
  const SimplexResult res = simplex_standard(a, b, c);
  REQUIRE(res.ok);
  return res.objective + qp.c.dot(shift) + qp.c0;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  REQUIRE(f);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("min x^2 subject to x >= 3") {
  QuadraticProgram qp;
  qp.q = Eigen::MatrixXd::Constant(1, 1, 2.0);
  qp.c = Eigen::VectorXd::Zero(1);
  qp.lb = Eigen::VectorXd::Constant(1, 3.0);
  qp.ub = Eigen::VectorXd::Constant(1, kInf);
  const QpSolution sol = solve_qp(qp);
  REQUIRE(sol.ok());
  CHECK(sol.x(0) == doctest::Approx(3.0).epsilon(1e-7));
  CHECK(sol.objective == doctest::Approx(9.0).epsilon(1e-7));
}

TEST_CASE("linear cost over the 2-simplex lands on the best vertex") {
  QuadraticProgram qp;
  qp.c = Eigen::Vector3d(1.3, -0.4, 2.2);
  qp.a_eq = Eigen::MatrixXd::Ones(1, 3);
  qp.b_eq = Eigen::VectorXd::Ones(1);
  qp.lb = Eigen::VectorXd::Zero(3);
  qp.ub = Eigen::VectorXd::Constant(3, kInf);
  const QpSolution sol = solve_qp(qp);
  REQUIRE(sol.ok());
  // Brute force over the three vertices.
  double best = kInf;
  for (int v = 0; v < 3; ++v) best = std::min(best, qp.c(v));
  CHECK(sol.objective == doctest::Approx(best).epsilon(1e-7));
  CHECK(sol.x(1) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("dc-opf instance matches the simplex oracle with linear costs") {
  const RawCase raw =
      parse_case(read_file(std::string(OPFBENCH_DATA_DIR) + "/case30.m"));
  Network net = build_network(raw);
  for (auto& g : net.gens) g.c2 = 0;  // LP instance for the simplex oracle

  // Build the same LP the dc solver sees by calling it and reconstructing
  // the objective; the oracle solves the identical constraint set.
  const LoadScenario sc = LoadScenario::nominal(net);
  const DcOpfResult res = dcopf(net, sc);

  // Reconstruct the LP used internally.
  const int n = net.n_buses(), ng = net.n_gens();
  QuadraticProgram qp;
  qp.c = Eigen::VectorXd::Zero(n + ng);
  for (int g = 0; g < ng; ++g) {
    qp.c(n + g) = net.gens[g].c1;
    qp.c0 += net.gens[g].c0;
  }
  qp.a_eq = Eigen::MatrixXd::Zero(n + 1, n + ng);
  qp.b_eq = Eigen::VectorXd::Zero(n + 1);
  for (int b = 0; b < n; ++b) qp.b_eq(b) = sc.pd(b);
  for (int g = 0; g < ng; ++g) qp.a_eq(net.gens[g].bus, n + g) = 1.0;
  for (const auto& br : net.branches) {
    const double bij = 1.0 / std::imag(1.0 / br.y_series);
    qp.a_eq(br.from, br.from) -= bij;
    qp.a_eq(br.from, br.to) += bij;
    qp.a_eq(br.to, br.from) += bij;
    qp.a_eq(br.to, br.to) -= bij;
  }
  qp.a_eq(n, net.slack) = 1.0;
  int n_lim = 0;
  for (const auto& br : net.branches) n_lim += br.rate > 0 ? 1 : 0;
  qp.a_in = Eigen::MatrixXd::Zero(2 * n_lim, n + ng);
  qp.b_in = Eigen::VectorXd::Zero(2 * n_lim);
  int row = 0;
  for (const auto& br : net.branches) {
    if (br.rate <= 0) continue;
    const double bij = 1.0 / std::imag(1.0 / br.y_series);
    qp.a_in(row, br.from) = bij;
    qp.a_in(row, br.to) = -bij;
    qp.b_in(row) = br.rate;
    qp.a_in(row + 1, br.from) = -bij;
    qp.a_in(row + 1, br.to) = bij;
    qp.b_in(row + 1) = br.rate;
    row += 2;
  }
  qp.lb = Eigen::VectorXd::Constant(n + ng, -kInf);
  qp.ub = Eigen::VectorXd::Constant(n + ng, kInf);
  for (int g = 0; g < ng; ++g) {
    qp.lb(n + g) = net.gens[g].pmin;
    qp.ub(n + g) = net.gens[g].pmax;
  }
  // Angles are free; bound them loosely so the oracle's standard form stays
  // bounded (never binding at +-10 rad).
  for (int b = 0; b < n; ++b) {
    qp.lb(b) = -10;
    qp.ub(b) = 10;
  }

  const double oracle = simplex_oracle(qp);
  CHECK(res.objective == doctest::Approx(oracle).epsilon(1e-6));
}

TEST_CASE("constraint satisfaction within tolerance") {
  QuadraticProgram qp;
  qp.q = Eigen::MatrixXd::Identity(4, 4) * 2.0;
  qp.c = Eigen::VectorXd::Constant(4, -1.0);
  qp.a_eq = Eigen::MatrixXd::Ones(1, 4);
  qp.b_eq = Eigen::VectorXd::Constant(1, 2.0);
  qp.a_in = Eigen::MatrixXd::Zero(2, 4);
  qp.a_in(0, 0) = 1.0;
  qp.a_in(1, 1) = -1.0;
  qp.b_in = Eigen::Vector2d(0.3, -0.1);
  qp.lb = Eigen::VectorXd::Zero(4);
  qp.ub = Eigen::VectorXd::Ones(4);
  const QpSolution sol = solve_qp(qp);
  REQUIRE(sol.ok());
  const double bnorm = 1.0 + 2.0;
  CHECK(std::abs((qp.a_eq * sol.x - qp.b_eq)(0)) < 1e-8 * bnorm);
  CHECK(((qp.a_in * sol.x - qp.b_in).array() < 1e-8 * bnorm).all());
  CHECK((sol.x.array() >= -1e-8).all());
  CHECK((sol.x.array() <= 1.0 + 1e-8).all());
}

TEST_CASE("argmin is invariant to positive objective scaling") {
  QuadraticProgram qp;
  qp.q = Eigen::MatrixXd::Identity(3, 3);
  qp.q(0, 0) = 4.0;
  qp.c = Eigen::Vector3d(1.0, -2.0, 0.5);
  qp.a_eq = Eigen::MatrixXd::Ones(1, 3);
  qp.b_eq = Eigen::VectorXd::Ones(1);
  qp.lb = Eigen::VectorXd::Constant(3, -5.0);
  qp.ub = Eigen::VectorXd::Constant(3, 5.0);
  const QpSolution a = solve_qp(qp);
  QuadraticProgram scaled = qp;
  scaled.q *= 37.0;
  scaled.c *= 37.0;
  const QpSolution b = solve_qp(scaled);
  REQUIRE(a.ok());
  REQUIRE(b.ok());
  CHECK((a.x - b.x).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("infeasible box is detected") {
  QuadraticProgram qp;
  qp.q = Eigen::MatrixXd::Identity(2, 2);
  qp.c = Eigen::VectorXd::Zero(2);
  qp.a_in = Eigen::MatrixXd::Zero(2, 2);
  qp.a_in(0, 0) = 1.0;   // x0 <= -1
  qp.a_in(1, 0) = -1.0;  // x0 >= 1
  qp.b_in = Eigen::Vector2d(-1.0, -1.0);
  qp.lb = Eigen::VectorXd::Constant(2, -10.0);
  qp.ub = Eigen::VectorXd::Constant(2, 10.0);
  const QpSolution sol = solve_qp(qp);
  CHECK(sol.status == QpStatus::Infeasible);
}

TEST_CASE("unbounded descent is detected") {
  QuadraticProgram qp;
  qp.c = Eigen::VectorXd::Constant(1, -1.0);  // min -x, x >= 0
  qp.lb = Eigen::VectorXd::Zero(1);
  qp.ub = Eigen::VectorXd::Constant(1, kInf);
  const QpSolution sol = solve_qp(qp);
  CHECK(sol.status == QpStatus::Unbounded);
}

TEST_CASE("objective trace settles at the optimum") {
  QuadraticProgram qp;
  qp.q = Eigen::MatrixXd::Identity(5, 5) * 2.0;
  qp.c = Eigen::VectorXd::LinSpaced(5, -1.0, 1.0);
  qp.a_eq = Eigen::MatrixXd::Ones(1, 5);
  qp.b_eq = Eigen::VectorXd::Constant(1, 1.0);
  qp.lb = Eigen::VectorXd::Zero(5);
  qp.ub = Eigen::VectorXd::Ones(5);
  const QpSolution sol = solve_qp(qp);
  REQUIRE(sol.ok());
  REQUIRE(sol.objective_trace.size() >= 3);
  // Late iterations approach the final objective monotonically in error.
  const double final = sol.objective;
  const std::size_t half = sol.objective_trace.size() / 2;
  for (std::size_t i = half; i + 1 < sol.objective_trace.size(); ++i) {
    CHECK(std::abs(sol.objective_trace[i + 1] - final) <=
          std::abs(sol.objective_trace[i] - final) + 1e-9);
  }
}
