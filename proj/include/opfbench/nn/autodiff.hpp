#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "opfbench/rng.hpp"

namespace opfbench::nn {

/// Reverse-mode tape over dense matrices. Nodes are appended in evaluation
/// order; backward() walks them in reverse. The tape owns values and
/// gradients; parameters enter as leaves once per batch and their gradients
/// are read back after backward().
class Tape {
 public:
  using Id = int;

  Id leaf(Eigen::MatrixXd value, bool needs_grad = false);

  Id matmul(Id a, Id b);
  Id add(Id a, Id b);
  Id add_rowvec(Id a, Id bias);  // bias is 1 x cols, broadcast over rows
  Id relu(Id a);
  Id scale(Id a, double s);
  Id softmax_rows(Id a);
  Id layer_norm_rows(Id a, Id gain, Id bias, double eps = 1e-5);
  Id dropout(Id a, double p, Rng& rng);  // inverted dropout, train mode
  Id concat_cols(const std::vector<Id>& parts);
  Id transpose(Id a);
  Id flatten_row(Id a);  // row-major flatten to 1 x (r*c)
  Id mse(Id pred, Id target);  // mean squared error over all entries, 1x1

  void backward(Id root);  // root must be 1x1

  const Eigen::MatrixXd& value(Id id) const { return nodes_[id].value; }
  const Eigen::MatrixXd& grad(Id id) const { return nodes_[id].grad; }

  /// Drop all nodes but keep allocated capacity for the next batch.
  void reset();
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
    std::function<void(Tape&)> back;  // empty for leaves
    bool needs_grad = false;
  };

  Id push(Eigen::MatrixXd value, bool needs_grad, std::function<void(Tape&)> back);
  void ensure_grad(Id id);

  std::vector<Node> nodes_;

  friend struct TapeAccess;
};

/// Max relative error between the tape gradient of a scalar-valued builder
/// and central finite differences, over every entry of every
/// gradient-carrying leaf. The builder must be deterministic.
double grad_check(
    const std::function<Tape::Id(Tape&, const std::vector<Tape::Id>&)>& build_loss,
    const std::vector<Eigen::MatrixXd>& leaves, double step = 1e-6);

}  // namespace opfbench::nn
