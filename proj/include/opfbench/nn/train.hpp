#pragma once

#include <vector>

#include "opfbench/nn/models.hpp"

namespace opfbench::nn {

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 2e-6;
  double momentum = 0.9;
  int epochs = 60;
  int batch_size = 128;
  std::uint64_t seed = 0;
  // Per-node z-scoring of (vm, va) targets before the joint L2 loss; turn
  // off to train on raw targets.
  bool standardize_targets = true;
};

struct TrainResult {
  std::vector<double> train_loss;  // per epoch, standardized target space
  std::vector<double> val_loss;
  int best_epoch = -1;
};

class TrainDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Single-threaded SGD (momentum, weight decay, cosine-annealed lr to 0)
/// with a fixed, seed-derived iteration order. The best-validation-loss
/// parameters are restored into the model on return.
TrainResult train(Model& model, const Dataset& ds, const std::vector<int>& train_idx,
                  const std::vector<int>& val_idx, const TrainConfig& cfg);

}  // namespace opfbench::nn
