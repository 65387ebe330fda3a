#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "opfbench/network.hpp"

namespace opfbench {

struct VoltageState {
  Eigen::VectorXd vm;  // pu
  Eigen::VectorXd va;  // rad

  Eigen::VectorXcd phasors() const;
};

struct LoadScenario {
  Eigen::VectorXd pd;  // pu
  Eigen::VectorXd qd;

  static LoadScenario nominal(const Network& net);
};

struct BranchFlow {
  double p_from = 0, q_from = 0;
  double p_to = 0, q_to = 0;

  double p_loss() const { return p_from + p_to; }
};

struct Dispatch {
  Eigen::VectorXd pg;  // per generator, pu
  Eigen::VectorXd qg;
};

class NonConvergence : public std::runtime_error {
 public:
  NonConvergence(int iterations, double mismatch)
      : std::runtime_error("power flow did not converge after " + std::to_string(iterations) +
                           " iterations (max mismatch " + std::to_string(mismatch) + " pu)"),
        iterations(iterations),
        mismatch(mismatch) {}

  int iterations;
  double mismatch;
};

class SingularJacobian : public std::runtime_error {
 public:
  SingularJacobian() : std::runtime_error("singular power flow Jacobian") {}
};

/// S_inj = V .* conj(Y V), per bus.
Eigen::VectorXcd complex_injection(const VoltageState& v, const AdmittanceMatrix& adm);

struct GenSetpoints {
  Eigen::VectorXd pg;  // per generator, pu; the slack generator's entry is ignored
  Eigen::VectorXd vm;  // per generator, target magnitude at its bus

  static GenSetpoints from_case(const Network& net);
};

struct NewtonOptions {
  double tol = 1e-8;
  int max_iter = 30;
  int max_halvings = 4;
  // Start from Vm targets at PV/slack buses, flat 1.0 elsewhere, Va = 0.
  bool flat_start = true;
  VoltageState initial;  // used when flat_start is false
};

struct NewtonResult {
  VoltageState v;
  int iterations = 0;
  double max_mismatch = 0;
};

/// Polar Newton-Raphson on the PQ/PV/slack partition with step halving
/// (up to max_halvings) whenever the mismatch norm increases. Throws
/// NonConvergence / SingularJacobian.
NewtonResult solve_newton(const Network& net, const AdmittanceMatrix& adm,
                          const LoadScenario& scenario, const GenSetpoints& setpoints,
                          const NewtonOptions& opts = {});

/// S_g(b) = S_inj(b) + S_l(b) at every generator bus. Limit violations are
/// left in place; they are measured downstream, never clipped here.
Dispatch recover_generation(const VoltageState& v, const Network& net,
                            const AdmittanceMatrix& adm, const LoadScenario& scenario);

/// Load implied by a voltage state: -S_inj at buses without generators, the
/// true scenario load at generator buses (generation absorbs the mismatch
/// there, matching recover_generation).
Eigen::VectorXcd effective_load(const VoltageState& v, const Network& net,
                                const AdmittanceMatrix& adm, const LoadScenario& scenario);

std::vector<BranchFlow> branch_flows(const VoltageState& v, const Network& net,
                                     const AdmittanceMatrix& adm);

}  // namespace opfbench
