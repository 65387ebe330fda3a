#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "opfbench/dataset.hpp"
#include "opfbench/network.hpp"

namespace opfbench {

class BaselineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input layout shared by OLS and the neural predictors: (pd, qd) stacked
/// over the listed buses, in bus order.
struct FeatureLayout {
  std::vector<int> buses;

  int dim() const { return 2 * static_cast<int>(buses.size()); }
  Eigen::VectorXd features(const LoadScenario& sc) const;

  static FeatureLayout nonzero_load(const Network& net);
  static FeatureLayout all_buses(const Network& net);
};

struct LinearPredictor {
  enum class Kind { GridAvg, NodeAvg, Ols };

  Kind kind = Kind::GridAvg;
  // GridAvg keeps two scalars broadcast at predict time; NodeAvg per-node
  // vectors; Ols a dense affine map onto (vm || va).
  double grid_vm = 0, grid_va = 0;
  Eigen::VectorXd node_vm, node_va;
  Eigen::MatrixXd w;  // 2n x dim
  Eigen::VectorXd intercept;
  FeatureLayout layout;
  std::string case_fingerprint;
  bool rank_deficient = false;
  int n_buses = 0;
};

LinearPredictor fit_grid_average(const Dataset& train_split, const Network& net);
LinearPredictor fit_node_average(const Dataset& train_split, const Network& net);
/// QR-based least squares (minimum-norm on rank deficiency, which is also
/// flagged on the predictor).
LinearPredictor fit_ols(const Dataset& train_split, const Network& net,
                        const FeatureLayout& layout);

VoltageState predict(const LinearPredictor& p, const LoadScenario& scenario);

/// JSON round-trip for predictors (kind, shapes, row-major coefficients,
/// layout, case fingerprint).
std::string predictor_to_json(const LinearPredictor& p);
LinearPredictor predictor_from_json(const std::string& text);
void save_predictor(const LinearPredictor& p, const std::filesystem::path& path);
LinearPredictor load_predictor(const std::filesystem::path& path);

/// View of a dataset restricted to one split, for the fit_* entry points.
Dataset split_view(const Dataset& ds, const std::vector<int>& indices);

}  // namespace opfbench
