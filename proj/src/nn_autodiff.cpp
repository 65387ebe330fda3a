#include "opfbench/nn/autodiff.hpp"

#include <cmath>

namespace opfbench::nn {

struct TapeAccess {
  static Eigen::MatrixXd& grad(Tape& t, Tape::Id id) {
    t.ensure_grad(id);
    return t.nodes_[id].grad;
  }
  static bool needs_grad(const Tape& t, Tape::Id id) { return t.nodes_[id].needs_grad; }
};

namespace {

// Accumulate into the gradient of `id` only when something upstream wants it.
void accum(Tape& t, Tape::Id id, const Eigen::MatrixXd& g) {
  if (TapeAccess::needs_grad(t, id)) TapeAccess::grad(t, id) += g;
}

}  // namespace

Tape::Id Tape::push(Eigen::MatrixXd value, bool needs_grad, std::function<void(Tape&)> back) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = needs_grad;
  node.back = std::move(back);
  nodes_.push_back(std::move(node));
  return static_cast<Id>(nodes_.size()) - 1;
}

void Tape::ensure_grad(Id id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Eigen::MatrixXd::Zero(n.value.rows(), n.value.cols());
}

Tape::Id Tape::leaf(Eigen::MatrixXd value, bool needs_grad) {
  return push(std::move(value), needs_grad, {});
}

Tape::Id Tape::matmul(Id a, Id b) {
  const bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  Id out = push(nodes_[a].value * nodes_[b].value, ng, {});
  nodes_[out].back = [a, b, out](Tape& t) {
    const Eigen::MatrixXd& g = t.nodes_[out].grad;
    accum(t, a, g * t.nodes_[b].value.transpose());
    accum(t, b, t.nodes_[a].value.transpose() * g);
  };
  return out;
}

Tape::Id Tape::add(Id a, Id b) {
  const bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  Id out = push(nodes_[a].value + nodes_[b].value, ng, {});
  nodes_[out].back = [a, b, out](Tape& t) {
    accum(t, a, t.nodes_[out].grad);
    accum(t, b, t.nodes_[out].grad);
  };
  return out;
}

Tape::Id Tape::add_rowvec(Id a, Id bias) {
  const bool ng = nodes_[a].needs_grad || nodes_[bias].needs_grad;
  Eigen::MatrixXd v = nodes_[a].value;
  v.rowwise() += nodes_[bias].value.row(0);
  Id out = push(std::move(v), ng, {});
  nodes_[out].back = [a, bias, out](Tape& t) {
    const Eigen::MatrixXd& g = t.nodes_[out].grad;
    accum(t, a, g);
    accum(t, bias, g.colwise().sum());
  };
  return out;
}

Tape::Id Tape::relu(Id a) {
  Id out = push(nodes_[a].value.cwiseMax(0.0), nodes_[a].needs_grad, {});
  nodes_[out].back = [a, out](Tape& t) {
    const Eigen::MatrixXd mask =
        (t.nodes_[a].value.array() > 0.0).cast<double>().matrix();
    accum(t, a, t.nodes_[out].grad.cwiseProduct(mask));
  };
  return out;
}

Tape::Id Tape::scale(Id a, double s) {
  Id out = push(nodes_[a].value * s, nodes_[a].needs_grad, {});
  nodes_[out].back = [a, s, out](Tape& t) { accum(t, a, t.nodes_[out].grad * s); };
  return out;
}

Tape::Id Tape::softmax_rows(Id a) {
  Eigen::MatrixXd v = nodes_[a].value;
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const double m = v.row(r).maxCoeff();
    v.row(r) = (v.row(r).array() - m).exp();
    v.row(r) /= v.row(r).sum();
  }
  Id out = push(std::move(v), nodes_[a].needs_grad, {});
  nodes_[out].back = [a, out](Tape& t) {
    const Eigen::MatrixXd& s = t.nodes_[out].value;
    const Eigen::MatrixXd& g = t.nodes_[out].grad;
    Eigen::MatrixXd da(s.rows(), s.cols());
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      const double dot = g.row(r).dot(s.row(r));
      da.row(r) = s.row(r).cwiseProduct(g.row(r).array().matrix() -
                                        Eigen::RowVectorXd::Constant(s.cols(), dot));
    }
    accum(t, a, da);
  };
  return out;
}

Tape::Id Tape::layer_norm_rows(Id a, Id gain, Id bias, double eps) {
  const Eigen::MatrixXd& x = nodes_[a].value;
  const Eigen::Index c = x.cols();
  Eigen::MatrixXd xhat(x.rows(), c);
  Eigen::VectorXd inv_sigma(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().sum() / static_cast<double>(c);
    inv_sigma(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mu) * inv_sigma(r);
  }
  Eigen::MatrixXd y = xhat;
  y.array().rowwise() *= nodes_[gain].value.row(0).array();
  y.rowwise() += nodes_[bias].value.row(0);
  const bool ng =
      nodes_[a].needs_grad || nodes_[gain].needs_grad || nodes_[bias].needs_grad;
  Id out = push(std::move(y), ng, {});
  nodes_[out].back = [a, gain, bias, out, xhat, inv_sigma](Tape& t) {
    const Eigen::MatrixXd& g = t.nodes_[out].grad;
    const Eigen::RowVectorXd gn = t.nodes_[gain].value.row(0);
    accum(t, bias, g.colwise().sum());
    accum(t, gain, g.cwiseProduct(xhat).colwise().sum());
    if (!TapeAccess::needs_grad(t, a)) return;
    const Eigen::Index c2 = g.cols();
    Eigen::MatrixXd da(g.rows(), c2);
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const Eigen::RowVectorXd dy = g.row(r).cwiseProduct(gn);
      const double mean_dy = dy.mean();
      const double mean_dy_xhat = dy.dot(xhat.row(r)) / static_cast<double>(c2);
      da.row(r) = inv_sigma(r) * (dy.array() - mean_dy - xhat.row(r).array() * mean_dy_xhat);
    }
    accum(t, a, da);
  };
  return out;
}

Tape::Id Tape::dropout(Id a, double p, Rng& rng) {
  const Eigen::MatrixXd& x = nodes_[a].value;
  Eigen::MatrixXd mask(x.rows(), x.cols());
  const double keep = 1.0 - p;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      mask(r, c) = rng.uniform01() < p ? 0.0 : 1.0 / keep;
    }
  }
  Id out = push(x.cwiseProduct(mask), nodes_[a].needs_grad, {});
  nodes_[out].back = [a, out, mask](Tape& t) {
    accum(t, a, t.nodes_[out].grad.cwiseProduct(mask));
  };
  return out;
}

Tape::Id Tape::concat_cols(const std::vector<Id>& parts) {
  Eigen::Index cols = 0;
  bool ng = false;
  for (Id p : parts) {
    cols += nodes_[p].value.cols();
    ng = ng || nodes_[p].needs_grad;
  }
  const Eigen::Index rows = nodes_[parts.front()].value.rows();
  Eigen::MatrixXd v(rows, cols);
  Eigen::Index at = 0;
  for (Id p : parts) {
    v.middleCols(at, nodes_[p].value.cols()) = nodes_[p].value;
    at += nodes_[p].value.cols();
  }
  Id out = push(std::move(v), ng, {});
  nodes_[out].back = [parts, out](Tape& t) {
    Eigen::Index at2 = 0;
    for (Id p : parts) {
      const Eigen::Index c = t.nodes_[p].value.cols();
      accum(t, p, t.nodes_[out].grad.middleCols(at2, c));
      at2 += c;
    }
  };
  return out;
}

Tape::Id Tape::transpose(Id a) {
  Id out = push(nodes_[a].value.transpose(), nodes_[a].needs_grad, {});
  nodes_[out].back = [a, out](Tape& t) {
    accum(t, a, t.nodes_[out].grad.transpose());
  };
  return out;
}

Tape::Id Tape::flatten_row(Id a) {
  const Eigen::MatrixXd& x = nodes_[a].value;
  Eigen::MatrixXd v(1, x.size());
  Eigen::Index at = 0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) v(0, at++) = x(r, c);
  }
  Id out = push(std::move(v), nodes_[a].needs_grad, {});
  nodes_[out].back = [a, out](Tape& t) {
    const Eigen::MatrixXd& g = t.nodes_[out].grad;
    const Eigen::Index cols = t.nodes_[a].value.cols();
    Eigen::MatrixXd da(t.nodes_[a].value.rows(), cols);
    for (Eigen::Index i = 0; i < g.size(); ++i) da(i / cols, i % cols) = g(0, i);
    accum(t, a, da);
  };
  return out;
}

Tape::Id Tape::mse(Id pred, Id target) {
  const Eigen::MatrixXd diff = nodes_[pred].value - nodes_[target].value;
  Eigen::MatrixXd v(1, 1);
  v(0, 0) = diff.squaredNorm() / static_cast<double>(diff.size());
  Id out = push(std::move(v), nodes_[pred].needs_grad || nodes_[target].needs_grad, {});
  nodes_[out].back = [pred, target, out, diff](Tape& t) {
    const double g = t.nodes_[out].grad(0, 0);
    const double scale = 2.0 * g / static_cast<double>(diff.size());
    accum(t, pred, scale * diff);
    accum(t, target, -scale * diff);
  };
  return out;
}

void Tape::backward(Id root) {
  if (nodes_[root].value.size() != 1) {
    throw std::logic_error("backward requires a scalar root");
  }
  ensure_grad(root);
  nodes_[root].grad(0, 0) = 1.0;
  for (Id id = root; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.back && n.needs_grad && n.grad.size() > 0) n.back(*this);
  }
}

void Tape::reset() { nodes_.clear(); }

double grad_check(
    const std::function<Tape::Id(Tape&, const std::vector<Tape::Id>&)>& build_loss,
    const std::vector<Eigen::MatrixXd>& leaves, double step) {
  Tape tape;
  std::vector<Tape::Id> ids;
  ids.reserve(leaves.size());
  for (const auto& m : leaves) ids.push_back(tape.leaf(m, true));
  const Tape::Id loss = build_loss(tape, ids);
  tape.backward(loss);

  auto eval = [&](const std::vector<Eigen::MatrixXd>& pts) {
    Tape t;
    std::vector<Tape::Id> lids;
    for (const auto& m : pts) lids.push_back(t.leaf(m, false));
    return t.value(build_loss(t, lids))(0, 0);
  };

  double worst = 0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    const Eigen::MatrixXd& g = tape.grad(ids[li]);
    for (Eigen::Index r = 0; r < leaves[li].rows(); ++r) {
      for (Eigen::Index c = 0; c < leaves[li].cols(); ++c) {
        std::vector<Eigen::MatrixXd> up = leaves, dn = leaves;
        up[li](r, c) += step;
        dn[li](r, c) -= step;
        const double fd = (eval(up) - eval(dn)) / (2.0 * step);
        const double ad = g(r, c);
        const double err = std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
        worst = std::max(worst, err);
      }
    }
  }
  return worst;
}

}  // namespace opfbench::nn
