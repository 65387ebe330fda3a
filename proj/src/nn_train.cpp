#include "opfbench/nn/train.hpp"

#include <cmath>
#include <numbers>

namespace opfbench::nn {

namespace {

Eigen::VectorXd standardized_target(const Model& model, const Sample& s) {
  const int n = model.cfg.n_buses;
  Eigen::VectorXd t(2 * n);
  t.head(n) = s.voltage.vm;
  t.tail(n) = s.voltage.va;
  return (t - model.target_mean).cwiseQuotient(model.target_scale);
}

// Training statistics: per-feature z-score scales for the inputs and
// per-node target standardization.
void fit_scalers(Model& model, const Dataset& ds, const std::vector<int>& train_idx,
                 bool standardize_targets) {
  const double count = static_cast<double>(train_idx.size());
  const int n = model.cfg.n_buses;

  if (model.cfg.kind == ModelKind::Mlp) {
    const auto& buses = model.cfg.input_buses;
    const int d = 2 * static_cast<int>(buses.size());
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d), sq = Eigen::VectorXd::Zero(d);
    for (int i : train_idx) {
      for (std::size_t j = 0; j < buses.size(); ++j) {
        const double p = ds.samples[i].load.pd(buses[j]);
        const double q = ds.samples[i].load.qd(buses[j]);
        mean(2 * j) += p;
        mean(2 * j + 1) += q;
        sq(2 * j) += p * p;
        sq(2 * j + 1) += q * q;
      }
    }
    mean /= count;
    sq /= count;
    model.feat_mean = mean;
    model.feat_scale = (sq - mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
    for (int j = 0; j < d; ++j) {
      if (model.feat_scale(j) < 1e-12) model.feat_scale(j) = 1.0;
    }
  } else {
    // One shared (pd, qd) channel pair across tokens.
    double mp = 0, mq = 0, sp = 0, sq = 0;
    for (int i : train_idx) {
      mp += ds.samples[i].load.pd.sum();
      mq += ds.samples[i].load.qd.sum();
      sp += ds.samples[i].load.pd.squaredNorm();
      sq += ds.samples[i].load.qd.squaredNorm();
    }
    const double total = count * n;
    mp /= total;
    mq /= total;
    const double vp = std::max(0.0, sp / total - mp * mp);
    const double vq = std::max(0.0, sq / total - mq * mq);
    model.feat_mean = Eigen::Vector2d(mp, mq);
    model.feat_scale =
        Eigen::Vector2d(vp > 1e-24 ? std::sqrt(vp) : 1.0, vq > 1e-24 ? std::sqrt(vq) : 1.0);
  }

  model.target_mean = Eigen::VectorXd::Zero(2 * n);
  model.target_scale = Eigen::VectorXd::Ones(2 * n);
  if (standardize_targets) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(2 * n), sq2 = Eigen::VectorXd::Zero(2 * n);
    for (int i : train_idx) {
      const auto& s = ds.samples[i];
      mean.head(n) += s.voltage.vm;
      mean.tail(n) += s.voltage.va;
      sq2.head(n) += s.voltage.vm.cwiseAbs2();
      sq2.tail(n) += s.voltage.va.cwiseAbs2();
    }
    mean /= count;
    sq2 /= count;
    model.target_mean = mean;
    model.target_scale = (sq2 - mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
    for (int j = 0; j < 2 * n; ++j) {
      if (model.target_scale(j) < 1e-9) model.target_scale(j) = 1.0;
    }
  }
}

double eval_loss(const Model& model, const Dataset& ds, const std::vector<int>& idx) {
  double total = 0;
  for (int i : idx) {
    Tape tape;
    std::vector<Tape::Id> pids;
    pids.reserve(model.params.size());
    for (const auto& p : model.params) pids.push_back(tape.leaf(p));
    Tape::Id out;
    if (model.cfg.kind == ModelKind::Mlp) {
      out = forward_mlp(tape, model, pids, tape.leaf(mlp_features(model, ds.samples[i].load)),
                        false, nullptr);
    } else {
      out = forward_opformer(tape, model, pids,
                             tape.leaf(opformer_tokens(model, ds.samples[i].load)), false,
                             nullptr);
    }
    const Eigen::VectorXd target = standardized_target(model, ds.samples[i]);
    total += (tape.value(out).row(0).transpose() - target).squaredNorm() /
             static_cast<double>(target.size());
  }
  return total / static_cast<double>(idx.size());
}

}  // namespace

TrainResult train(Model& model, const Dataset& ds, const std::vector<int>& train_idx,
                  const std::vector<int>& val_idx, const TrainConfig& cfg) {
  if (train_idx.empty() || val_idx.empty()) {
    throw ModelError("training requires nonempty train and validation splits");
  }
  fit_scalers(model, ds, train_idx, cfg.standardize_targets);

  std::vector<Eigen::MatrixXd> velocity;
  velocity.reserve(model.params.size());
  for (const auto& p : model.params) velocity.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));

  TrainResult result;
  std::vector<Eigen::MatrixXd> best_params = model.params;
  double best_val = std::numeric_limits<double>::infinity();

  std::vector<int> order(train_idx);
  Tape tape;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr =
        cfg.lr * 0.5 *
        (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) /
                        static_cast<double>(cfg.epochs)));
    Rng shuffle_rng = Rng::stream(cfg.seed, 0xe90c0000ULL + static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);
    Rng dropout_rng =
        Rng::stream(cfg.seed, 0xd0900000ULL + static_cast<std::uint64_t>(epoch));

    double epoch_loss = 0;
    for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
      const std::size_t bsz = std::min<std::size_t>(cfg.batch_size, order.size() - at);
      tape.reset();
      std::vector<Tape::Id> pids;
      pids.reserve(model.params.size());
      for (const auto& p : model.params) pids.push_back(tape.leaf(p, true));

      Tape::Id loss;
      if (model.cfg.kind == ModelKind::Mlp) {
        // One batched forward pass.
        const int d = 2 * static_cast<int>(model.cfg.input_buses.size());
        Eigen::MatrixXd xb(bsz, d), yb(bsz, model.cfg.output_dim());
        for (std::size_t b = 0; b < bsz; ++b) {
          xb.row(b) = mlp_features(model, ds.samples[order[at + b]].load);
          yb.row(b) = standardized_target(model, ds.samples[order[at + b]]).transpose();
        }
        const Tape::Id out =
            forward_mlp(tape, model, pids, tape.leaf(std::move(xb)), true, &dropout_rng);
        loss = tape.mse(out, tape.leaf(std::move(yb)));
      } else {
        // Token sequences per sample, loss averaged over the batch.
        Tape::Id sum = -1;
        for (std::size_t b = 0; b < bsz; ++b) {
          const auto& s = ds.samples[order[at + b]];
          const Tape::Id out = forward_opformer(
              tape, model, pids, tape.leaf(opformer_tokens(model, s.load)), true, &dropout_rng);
          Eigen::MatrixXd target(1, model.cfg.output_dim());
          target.row(0) = standardized_target(model, s).transpose();
          const Tape::Id l = tape.mse(out, tape.leaf(std::move(target)));
          sum = sum < 0 ? l : tape.add(sum, l);
        }
        loss = tape.scale(sum, 1.0 / static_cast<double>(bsz));
      }

      const double lval = tape.value(loss)(0, 0);
      if (!std::isfinite(lval)) {
        throw TrainDivergence("training loss became non-finite at epoch " +
                              std::to_string(epoch));
      }
      epoch_loss += lval * static_cast<double>(bsz);
      tape.backward(loss);

      for (std::size_t pi = 0; pi < model.params.size(); ++pi) {
        const Eigen::MatrixXd g = tape.grad(pids[pi]) + cfg.weight_decay * model.params[pi];
        velocity[pi] = cfg.momentum * velocity[pi] + g;
        model.params[pi] -= lr * velocity[pi];
      }
    }
    result.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));

    const double vloss = eval_loss(model, ds, val_idx);
    result.val_loss.push_back(vloss);
    if (vloss < best_val) {
      best_val = vloss;
      best_params = model.params;
      result.best_epoch = epoch;
    }
  }

  model.params = best_params;
  return result;
}

}  // namespace opfbench::nn
