#pragma once

#include <Eigen/Dense>
#include <vector>

#include "opfbench/network.hpp"
#include "opfbench/powerflow.hpp"

namespace opfbench {

struct OpfSolution {
  VoltageState v;
  Eigen::VectorXd pg, qg;
  double objective = 0;  // $/h
  bool converged = false;
  int iterations = 0;
  double final_mismatch = 0;

  struct TraceEntry {
    double objective;
    double step_norm;
    double violation;  // worst operational-bound violation, pu
  };
  std::vector<TraceEntry> trace;
};

struct AcopfOptions {
  int max_outer = 40;
  double obj_tol = 1e-7;       // relative objective change
  double mismatch_tol = 1e-6;  // pu
  double trust_v = 0.05;       // pu per iteration
  double trust_theta = 0.1;    // rad per iteration
  bool branch_limits = true;
  double qp_tol = 1e-8;
};

/// Ground-truth solver: sequential QPs on re-linearized power flow with a
/// trust region, each step restored to AC feasibility by a Newton solve that
/// holds non-slack generator P and generator-bus voltage magnitudes.
OpfSolution solve_acopf(const Network& net, const AdmittanceMatrix& adm,
                        const LoadScenario& scenario, const AcopfOptions& opts = {});

/// Total polynomial generation cost in $/h (coefficients already on pu).
double dispatch_cost(const Eigen::VectorXd& pg, const Network& net);

}  // namespace opfbench
