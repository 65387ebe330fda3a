#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "opfbench/dataset.hpp"
#include "opfbench/network.hpp"

namespace opfbench {

class MetricsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Deterministic order-independent reduction.
double pairwise_sum(std::span<const double> values);

struct RegressionMetrics {
  double mse_va = 0, fvu_va = 0;
  double mse_vm = 0, fvu_vm = 0;
};

/// MSE over all (sample, node) pairs; FVU normalizes by the split's
/// population variance about its grand mean (per target). Throws on
/// constant targets.
RegressionMetrics regression_metrics(const std::vector<VoltageState>& preds, const Dataset& ds,
                                     const std::vector<int>& split);

struct PowerMetrics {
  double rel_opt_diff = 0;       // %
  double abs_rel_opt_diff = 0;   // %
  double pg_violation_rate = 0;  // % of (generator, sample) pairs
  double qg_violation_rate = 0;
  double tot_pd_err = 0;  // % aggregate effective-load error
  double tot_qd_err = 0;
  double nonzero_pd_err = 0;  // % mean per-bus error over nonzero loads
  double nonzero_qd_err = 0;
  int excluded = 0;  // samples dropped for non-finite predictions
};

struct PowerMetricsOptions {
  double violation_tol = 1e-4;  // pu outside [min, max] that counts
};

PowerMetrics power_metrics(const std::vector<VoltageState>& preds, const Dataset& ds,
                           const std::vector<int>& split, const Network& net,
                           const AdmittanceMatrix& adm, const PowerMetricsOptions& opts = {});

struct DemandErrorPoint {
  double demand = 0;  // aggregate active demand, pu
  double error = 0;   // sum over generators of |pg - pg_true|, pu
};

/// Per-sample dispatch error keyed by aggregate demand, sorted ascending.
std::vector<DemandErrorPoint> demand_sorted_error(const std::vector<VoltageState>& preds,
                                                  const Dataset& ds,
                                                  const std::vector<int>& split,
                                                  const Network& net,
                                                  const AdmittanceMatrix& adm);

double spearman(std::span<const double> a, std::span<const double> b);

struct ModelAccount {
  long parameter_count = 0;
  long mac_count = 0;
  double inference_seconds = 0;  // median
  double solver_seconds = 0;     // median
};

/// Median wall-clock seconds of fn over `runs` calls.
double median_seconds(const std::function<void()>& fn, int runs);

}  // namespace opfbench
