#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "opfbench/dataset.hpp"
#include "opfbench/network.hpp"
#include "opfbench/nn/autodiff.hpp"

namespace opfbench::nn {

enum class ModelKind { Mlp, OpFormer };
enum class FeatureSet { Feats2, Feats8 };

struct ModelConfig {
  ModelKind kind = ModelKind::Mlp;
  FeatureSet features = FeatureSet::Feats2;
  int n_buses = 0;

  // MLP: depth counts layers of units, input and output included, so 8
  // layers means 7 affine maps.
  int mlp_layers = 8;
  int mlp_hidden = 256;

  // Transformer encoder.
  int encoder_layers = 4;
  int token_dim = 16;
  int heads = 4;
  int ff_dim = 64;
  int head_layers = 3;   // affine layers after token concatenation
  int head_hidden = 48;

  double dropout = 0.1;

  std::vector<int> input_buses;  // MLP input: (pd, qd) at these buses

  int output_dim() const { return 2 * n_buses; }
  int token_features() const { return features == FeatureSet::Feats2 ? 2 : 8; }
};

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Model {
  ModelConfig cfg;
  std::vector<Eigen::MatrixXd> params;
  std::vector<std::string> param_names;

  // Input scaling (z-score for loads, min-max for static token features)
  // and target standardization, all from training statistics.
  Eigen::VectorXd feat_mean, feat_scale;
  Eigen::VectorXd target_mean, target_scale;
  Eigen::MatrixXd token_static;  // n_buses x 6, already min-max scaled

  std::string case_fingerprint;
  std::uint64_t seed = 0;

  long parameter_count() const;
  long mac_count() const;
};

/// Deterministic Glorot-uniform initialization from (seed).
Model build_model(const ModelConfig& cfg, const Network& net, std::uint64_t seed);

/// Forward pass for one batch. MLP consumes a batch x dim feature matrix;
/// the transformer consumes per-sample token matrices (n_buses x features)
/// and is applied sample by sample. Returns the prediction node(s) in
/// standardized target space.
Tape::Id forward_mlp(Tape& tape, const Model& model, const std::vector<Tape::Id>& param_ids,
                     Tape::Id batch, bool train, Rng* rng);
Tape::Id forward_opformer(Tape& tape, const Model& model,
                          const std::vector<Tape::Id>& param_ids, Tape::Id tokens, bool train,
                          Rng* rng);

/// Raw (already scaled) inputs for a scenario.
Eigen::MatrixXd mlp_features(const Model& model, const LoadScenario& sc);
Eigen::MatrixXd opformer_tokens(const Model& model, const LoadScenario& sc);

/// Deterministic eval-mode prediction, de-standardized to (vm, va).
VoltageState predict_nn(const Model& model, const LoadScenario& sc);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace opfbench::nn
