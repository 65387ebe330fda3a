#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "opfbench/dataset.hpp"
#include "opfbench/network.hpp"
#include "opfbench/powerflow.hpp"

namespace opfbench {

class OpfInfeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operating point a first-order flow model is expanded around. Reference
/// flows are always the exact branch flows at (vm, va).
struct LinearizationPoint {
  VoltageState v;
  std::vector<BranchFlow> flows;
  Eigen::VectorXd delta;  // per branch, va(from) - va(to)
};

LinearizationPoint make_linearization_point(const VoltageState& v, const Network& net,
                                            const AdmittanceMatrix& adm);

/// Affine model of one branch's from-side flows in (dv_i, dv_j, d_delta).
struct BranchLinearModel {
  double p0 = 0, dp_dvi = 0, dp_dvj = 0, dp_dd = 0;
  double q0 = 0, dq_dvi = 0, dq_dvj = 0, dq_dd = 0;

  double p(double dvi, double dvj, double dd) const {
    return p0 + dp_dvi * dvi + dp_dvj * dvj + dp_dd * dd;
  }
  double q(double dvi, double dvj, double dd) const {
    return q0 + dq_dvi * dvi + dq_dvj * dvj + dq_dd * dd;
  }
};

/// Exact partial derivatives of the pi-model from-side flow at the
/// reference; to-side models come from linearize_branch_reverse.
BranchLinearModel linearize_branch(const Network& net, const AdmittanceMatrix& adm,
                                   int branch, const LinearizationPoint& ref);
BranchLinearModel linearize_branch_reverse(const Network& net, const AdmittanceMatrix& adm,
                                           int branch, const LinearizationPoint& ref);

struct DcOpfOptions {
  double qp_tol = 1e-8;
};

struct DcOpfResult {
  VoltageState v;  // vm identically 1.0, va from the LP
  Eigen::VectorXd pg;
  double objective = 0;
};

/// Classical DC optimal power flow: lossless b = -1/x flows, quadratic
/// cost, generation bounds and MW branch limits. No reactive model.
DcOpfResult dcopf(const Network& net, const LoadScenario& scenario,
                  const DcOpfOptions& opts = {});

enum class ReferenceMode { NodeMean, MeanLoadSolve };

struct ReferenceOptions {
  ReferenceMode mode = ReferenceMode::NodeMean;
  // MeanLoadSolve solves a full AC-OPF at the mean scenario by default; with
  // nr_at_nominal_dispatch it runs a plain power flow at case setpoints
  // instead (ablation).
  bool nr_at_nominal_dispatch = false;
};

/// Reference operating point from the training split: per-node voltage
/// means, or the solved voltages of the mean loading scenario.
LinearizationPoint make_reference(const Dataset& train, const Network& net,
                                  const AdmittanceMatrix& adm,
                                  const ReferenceOptions& opts = {});

struct HotStartOptions {
  bool branch_limits = true;  // linearized MW flow limits
  double qp_tol = 1e-8;
};

struct HotStartResult {
  VoltageState v;
  Eigen::VectorXd pg, qg;
  double objective = 0;
};

/// First-order Taylor OPF around a data-driven reference: linearized P and
/// Q balance, voltage and generation boxes, quadratic cost.
HotStartResult hotstart_opf(const Network& net, const AdmittanceMatrix& adm,
                            const LoadScenario& scenario, const LinearizationPoint& ref,
                            const HotStartOptions& opts = {});

/// Split statistics feeding the truncation-error bounds.
struct MomentSummary {
  Eigen::VectorXd ev2;      // per bus, E[(vm - ref vm)^2]
  Eigen::VectorXd ed2;      // per branch, E[(delta - ref delta)^2]
  double v_ub = 0;          // max observed magnitude
  Eigen::VectorXi from, to;  // branch endpoints (dense bus indices)
  Eigen::VectorXd y_abs;    // per branch |y|
  Eigen::VectorXd g, b;     // per branch series conductance/susceptance
  Eigen::VectorXd y_angle;  // per branch admittance angle
};

MomentSummary compute_moments(const Dataset& ds, const std::vector<int>& split,
                              const LinearizationPoint& ref, const Network& net,
                              const AdmittanceMatrix& adm);

enum class FlowKind { Active, Reactive };

/// Upper bound on E|second-order remainder| of the branch flow
/// linearization, from the split moments (Cauchy-Schwarz form).
double remainder_bound(const MomentSummary& m, int branch, FlowKind kind);

/// 0.5 * Tr(M |Sigma|): bound on |E[f(x)] - f(E[x])| for any map whose
/// Hessian is elementwise dominated by M.
double mean_ref_gap_bound(const Eigen::MatrixXd& hessian_bound, const Eigen::MatrixXd& cov);

}  // namespace opfbench
