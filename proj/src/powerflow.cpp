#include "opfbench/powerflow.hpp"

#include <cmath>

namespace opfbench {

Eigen::VectorXcd VoltageState::phasors() const {
  Eigen::VectorXcd v(vm.size());
  for (Eigen::Index i = 0; i < vm.size(); ++i) v(i) = std::polar(vm(i), va(i));
  return v;
}

LoadScenario LoadScenario::nominal(const Network& net) {
  LoadScenario s;
  s.pd.resize(net.n_buses());
  s.qd.resize(net.n_buses());
  for (int b = 0; b < net.n_buses(); ++b) {
    s.pd(b) = net.buses[b].pd;
    s.qd(b) = net.buses[b].qd;
  }
  return s;
}

GenSetpoints GenSetpoints::from_case(const Network& net) {
  GenSetpoints sp;
  sp.pg.resize(net.n_gens());
  sp.vm.resize(net.n_gens());
  for (int g = 0; g < net.n_gens(); ++g) {
    sp.pg(g) = net.gens[g].pg0;
    sp.vm(g) = net.gens[g].vg;
  }
  return sp;
}

Eigen::VectorXcd complex_injection(const VoltageState& v, const AdmittanceMatrix& adm) {
  const Eigen::VectorXcd ph = v.phasors();
  return ph.array() * (adm.y * ph).array().conjugate();
}

namespace {

// Mismatch vector ordered as [dP(pv+pq); dQ(pq)].
Eigen::VectorXd mismatch_vector(const Eigen::VectorXcd& s_inj, const Eigen::VectorXd& p_spec,
                                const Eigen::VectorXd& q_spec, const std::vector<int>& ang_idx,
                                const std::vector<int>& mag_idx) {
  Eigen::VectorXd f(ang_idx.size() + mag_idx.size());
  Eigen::Index k = 0;
  for (int b : ang_idx) f(k++) = p_spec(b) - s_inj(b).real();
  for (int b : mag_idx) f(k++) = q_spec(b) - s_inj(b).imag();
  return f;
}

}  // namespace

NewtonResult solve_newton(const Network& net, const AdmittanceMatrix& adm,
                          const LoadScenario& scenario, const GenSetpoints& setpoints,
                          const NewtonOptions& opts) {
  const int n = net.n_buses();
  if (scenario.pd.size() != n || scenario.qd.size() != n) {
    throw std::invalid_argument("scenario dimension does not match network");
  }
  if (setpoints.pg.size() != net.n_gens()) {
    throw std::invalid_argument("setpoints must cover all in-service generators");
  }

  // Specified injections. At the slack bus both entries are free; at PV
  // buses only Q is free.
  Eigen::VectorXd p_spec = -scenario.pd;
  Eigen::VectorXd q_spec = -scenario.qd;
  for (int g = 0; g < net.n_gens(); ++g) p_spec(net.gens[g].bus) += setpoints.pg(g);

  std::vector<int> ang_idx, mag_idx;  // angle unknowns, magnitude unknowns
  for (int b = 0; b < n; ++b) {
    const bool pv = net.has_gen(b);
    if (b == net.slack) continue;
    ang_idx.push_back(b);
    if (!pv) mag_idx.push_back(b);
  }

  VoltageState state;
  if (opts.flat_start) {
    state.vm = Eigen::VectorXd::Ones(n);
    state.va = Eigen::VectorXd::Zero(n);
    state.va.setConstant(net.buses[net.slack].va0);
  } else {
    state = opts.initial;
  }
  // PV and slack magnitudes are pinned to their targets throughout.
  for (int g = 0; g < net.n_gens(); ++g) state.vm(net.gens[g].bus) = setpoints.vm(g);

  const Eigen::Index m = static_cast<Eigen::Index>(ang_idx.size() + mag_idx.size());
  Eigen::MatrixXd jac(m, m);

  Eigen::VectorXcd s_inj = complex_injection(state, adm);
  Eigen::VectorXd f = mismatch_vector(s_inj, p_spec, q_spec, ang_idx, mag_idx);
  double fnorm = f.lpNorm<Eigen::Infinity>();

  int iter = 0;
  for (; iter < opts.max_iter; ++iter) {
    if (fnorm < opts.tol) {
      return {state, iter, fnorm};
    }

    // Polar Jacobian. dS_i/dVa_j and dS_i/dVm_j from S = V .* conj(Y V).
    const Eigen::VectorXcd ph = state.phasors();
    const Eigen::VectorXcd yv = adm.y * ph;
    jac.setZero();
    for (Eigen::Index row = 0; row < m; ++row) {
      const bool is_p = row < static_cast<Eigen::Index>(ang_idx.size());
      const int i = is_p ? ang_idx[row] : mag_idx[row - ang_idx.size()];
      for (Eigen::Index col = 0; col < m; ++col) {
        const bool is_ang = col < static_cast<Eigen::Index>(ang_idx.size());
        const int j = is_ang ? ang_idx[col] : mag_idx[col - ang_idx.size()];
        std::complex<double> ds;  // dS_i/dx_j
        if (is_ang) {
          if (i == j) {
            ds = std::complex<double>(0, 1) * ph(i) *
                 std::conj(yv(i) - adm.y(i, i) * ph(i));
          } else {
            ds = ph(i) * std::conj(std::complex<double>(0, 1) * adm.y(i, j) * ph(j));
          }
        } else {
          const std::complex<double> ej = ph(j) / state.vm(j);
          if (i == j) {
            ds = ej * std::conj(yv(i)) + ph(i) * std::conj(adm.y(i, i) * ej);
          } else {
            ds = ph(i) * std::conj(adm.y(i, j) * ej);
          }
        }
        jac(row, col) = is_p ? -ds.real() : -ds.imag();
      }
    }

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
    const Eigen::VectorXd dx = lu.solve(-f);
    if (!dx.allFinite()) throw SingularJacobian();

    // Step with halving while the mismatch norm grows.
    double alpha = 1.0;
    VoltageState next = state;
    Eigen::VectorXd f_next;
    double fnorm_next = 0;
    for (int h = 0; h <= opts.max_halvings; ++h) {
      next = state;
      for (std::size_t k = 0; k < ang_idx.size(); ++k) next.va(ang_idx[k]) += alpha * dx(k);
      for (std::size_t k = 0; k < mag_idx.size(); ++k) {
        next.vm(mag_idx[k]) += alpha * dx(ang_idx.size() + k);
      }
      s_inj = complex_injection(next, adm);
      f_next = mismatch_vector(s_inj, p_spec, q_spec, ang_idx, mag_idx);
      fnorm_next = f_next.lpNorm<Eigen::Infinity>();
      if (fnorm_next <= fnorm || h == opts.max_halvings) break;
      alpha *= 0.5;
    }
    state = next;
    f = f_next;
    fnorm = fnorm_next;
    if (!std::isfinite(fnorm)) throw NonConvergence(iter + 1, fnorm);
  }
  if (fnorm < opts.tol) return {state, iter, fnorm};
  throw NonConvergence(iter, fnorm);
}

Dispatch recover_generation(const VoltageState& v, const Network& net,
                            const AdmittanceMatrix& adm, const LoadScenario& scenario) {
  const Eigen::VectorXcd s_inj = complex_injection(v, adm);
  Dispatch d;
  d.pg.resize(net.n_gens());
  d.qg.resize(net.n_gens());
  for (int g = 0; g < net.n_gens(); ++g) {
    const int b = net.gens[g].bus;
    d.pg(g) = s_inj(b).real() + scenario.pd(b);
    d.qg(g) = s_inj(b).imag() + scenario.qd(b);
  }
  return d;
}

Eigen::VectorXcd effective_load(const VoltageState& v, const Network& net,
                                const AdmittanceMatrix& adm, const LoadScenario& scenario) {
  const Eigen::VectorXcd s_inj = complex_injection(v, adm);
  Eigen::VectorXcd load(net.n_buses());
  for (int b = 0; b < net.n_buses(); ++b) {
    if (net.has_gen(b)) {
      load(b) = std::complex<double>(scenario.pd(b), scenario.qd(b));
    } else {
      load(b) = -s_inj(b);
    }
  }
  return load;
}

std::vector<BranchFlow> branch_flows(const VoltageState& v, const Network& net,
                                     const AdmittanceMatrix& adm) {
  const Eigen::VectorXcd ph = v.phasors();
  std::vector<BranchFlow> flows(net.branches.size());
  for (std::size_t k = 0; k < net.branches.size(); ++k) {
    const auto& br = net.branches[k];
    const auto& blk = adm.blocks[k];
    const std::complex<double> sf = ph(br.from) * std::conj(blk[0] * ph(br.from) + blk[1] * ph(br.to));
    const std::complex<double> st = ph(br.to) * std::conj(blk[2] * ph(br.from) + blk[3] * ph(br.to));
    flows[k] = {sf.real(), sf.imag(), st.real(), st.imag()};
  }
  return flows;
}

}  // namespace opfbench
