#include "opfbench/nn/models.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

namespace opfbench::nn {

using nlohmann::json;

namespace {

Eigen::MatrixXd glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-limit, limit);
  }
  return m;
}

void add_affine(Model& model, Rng& rng, const std::string& name, int in, int out) {
  model.params.push_back(glorot(in, out, rng));
  model.param_names.push_back(name + ".w");
  model.params.push_back(Eigen::MatrixXd::Zero(1, out));
  model.param_names.push_back(name + ".b");
}

void add_layernorm(Model& model, const std::string& name, int dim) {
  model.params.push_back(Eigen::MatrixXd::Ones(1, dim));
  model.param_names.push_back(name + ".gain");
  model.params.push_back(Eigen::MatrixXd::Zero(1, dim));
  model.param_names.push_back(name + ".bias");
}

}  // namespace

long Model::parameter_count() const {
  long total = 0;
  for (const auto& p : params) total += static_cast<long>(p.size());
  return total;
}

long Model::mac_count() const {
  const int n = cfg.n_buses;
  if (cfg.kind == ModelKind::Mlp) {
    long macs = 0;
    int in = 2 * static_cast<int>(cfg.input_buses.size());
    const int affine_maps = cfg.mlp_layers - 1;
    for (int l = 0; l < affine_maps; ++l) {
      const int out = l == affine_maps - 1 ? cfg.output_dim() : cfg.mlp_hidden;
      macs += static_cast<long>(in) * out;
      in = out;
    }
    return macs;
  }
  const int d = cfg.token_dim;
  const int dh = d / cfg.heads;
  long macs = static_cast<long>(n) * cfg.token_features() * d;  // embedding
  long per_layer = 0;
  per_layer += 4L * n * d * d;                  // q, k, v, o projections
  per_layer += 2L * cfg.heads * n * n * dh;     // scores and weighted sum
  per_layer += 2L * n * d * cfg.ff_dim;         // feedforward
  macs += per_layer * cfg.encoder_layers;
  int in = n * d;
  for (int l = 0; l < cfg.head_layers; ++l) {
    const int out = l == cfg.head_layers - 1 ? cfg.output_dim() : cfg.head_hidden;
    macs += static_cast<long>(in) * out;
    in = out;
  }
  return macs;
}

Model build_model(const ModelConfig& cfg, const Network& net, std::uint64_t seed) {
  if (cfg.n_buses != net.n_buses()) {
    throw ModelError("model config is for " + std::to_string(cfg.n_buses) +
                     " buses but the network has " + std::to_string(net.n_buses()));
  }
  Model model;
  model.cfg = cfg;
  model.seed = seed;
  model.case_fingerprint = net.fingerprint;
  Rng rng = Rng::stream(seed, 0x90de1);

  if (cfg.kind == ModelKind::Mlp) {
    if (model.cfg.input_buses.empty()) model.cfg.input_buses = net.load_buses();
    int in = 2 * static_cast<int>(model.cfg.input_buses.size());
    const int affine_maps = cfg.mlp_layers - 1;
    if (affine_maps < 1) throw ModelError("mlp needs at least 2 unit layers");
    for (int l = 0; l < affine_maps; ++l) {
      const int out = l == affine_maps - 1 ? cfg.output_dim() : cfg.mlp_hidden;
      add_affine(model, rng, "fc" + std::to_string(l), in, out);
      in = out;
    }
  } else {
    const int d = cfg.token_dim;
    if (d % cfg.heads != 0) throw ModelError("token_dim must be divisible by heads");
    add_affine(model, rng, "embed", cfg.token_features(), d);
    for (int l = 0; l < cfg.encoder_layers; ++l) {
      const std::string p = "enc" + std::to_string(l);
      add_affine(model, rng, p + ".q", d, d);
      add_affine(model, rng, p + ".k", d, d);
      add_affine(model, rng, p + ".v", d, d);
      add_affine(model, rng, p + ".o", d, d);
      add_layernorm(model, p + ".ln1", d);
      add_affine(model, rng, p + ".ff1", d, cfg.ff_dim);
      add_affine(model, rng, p + ".ff2", cfg.ff_dim, d);
      add_layernorm(model, p + ".ln2", d);
    }
    int in = cfg.n_buses * d;
    for (int l = 0; l < cfg.head_layers; ++l) {
      const int out = l == cfg.head_layers - 1 ? cfg.output_dim() : cfg.head_hidden;
      add_affine(model, rng, "head" + std::to_string(l), in, out);
      in = out;
    }
  }

  // Identity scaling until train() fills the statistics.
  const int fdim = cfg.kind == ModelKind::Mlp
                       ? 2 * static_cast<int>(model.cfg.input_buses.size())
                       : 2;
  model.feat_mean = Eigen::VectorXd::Zero(fdim);
  model.feat_scale = Eigen::VectorXd::Ones(fdim);
  model.target_mean = Eigen::VectorXd::Zero(cfg.output_dim());
  model.target_scale = Eigen::VectorXd::Ones(cfg.output_dim());
  if (cfg.kind == ModelKind::OpFormer && cfg.features == FeatureSet::Feats8) {
    model.token_static = Eigen::MatrixXd::Zero(cfg.n_buses, 6);
    for (int b = 0; b < net.n_buses(); ++b) {
      model.token_static(b, 0) = net.buses[b].bs;
      if (net.has_gen(b)) {
        const auto& g = net.gens[net.gen_at_bus[b]];
        model.token_static(b, 1) = g.pmax;
        model.token_static(b, 2) = g.qmax;
        model.token_static(b, 3) = g.qmin;
        model.token_static(b, 4) = g.c1;
        model.token_static(b, 5) = g.c2;
      }
    }
    // Min-max scale each static channel over buses.
    for (int c = 0; c < 6; ++c) {
      const double lo = model.token_static.col(c).minCoeff();
      const double hi = model.token_static.col(c).maxCoeff();
      if (hi > lo) {
        model.token_static.col(c) =
            (model.token_static.col(c).array() - lo) / (hi - lo);
      }
    }
  }
  return model;
}

namespace {

struct ParamCursor {
  const std::vector<Tape::Id>& ids;
  std::size_t at = 0;
  Tape::Id next() { return ids[at++]; }
};

Tape::Id affine(Tape& t, ParamCursor& pc, Tape::Id x) {
  const Tape::Id w = pc.next();
  const Tape::Id b = pc.next();
  return t.add_rowvec(t.matmul(x, w), b);
}

}  // namespace

Tape::Id forward_mlp(Tape& tape, const Model& model, const std::vector<Tape::Id>& param_ids,
                     Tape::Id batch, bool train, Rng* rng) {
  ParamCursor pc{param_ids};
  const int affine_maps = model.cfg.mlp_layers - 1;
  Tape::Id h = batch;
  for (int l = 0; l < affine_maps; ++l) {
    h = affine(tape, pc, h);
    if (l < affine_maps - 1) {
      h = tape.relu(h);
      if (train && model.cfg.dropout > 0) h = tape.dropout(h, model.cfg.dropout, *rng);
    }
  }
  return h;
}

Tape::Id forward_opformer(Tape& tape, const Model& model,
                          const std::vector<Tape::Id>& param_ids, Tape::Id tokens, bool train,
                          Rng* rng) {
  ParamCursor pc{param_ids};
  const int d = model.cfg.token_dim;
  const int heads = model.cfg.heads;
  const int dh = d / heads;
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tape::Id x = affine(tape, pc, tokens);
  for (int l = 0; l < model.cfg.encoder_layers; ++l) {
    const Tape::Id wq = pc.next(), bq = pc.next();
    const Tape::Id wk = pc.next(), bk = pc.next();
    const Tape::Id wv = pc.next(), bv = pc.next();
    const Tape::Id wo = pc.next(), bo = pc.next();
    const Tape::Id ln1_g = pc.next(), ln1_b = pc.next();
    const Tape::Id wf1 = pc.next(), bf1 = pc.next();
    const Tape::Id wf2 = pc.next(), bf2 = pc.next();
    const Tape::Id ln2_g = pc.next(), ln2_b = pc.next();

    const Tape::Id q = tape.add_rowvec(tape.matmul(x, wq), bq);
    const Tape::Id k = tape.add_rowvec(tape.matmul(x, wk), bk);
    const Tape::Id v = tape.add_rowvec(tape.matmul(x, wv), bv);

    // Heads are contiguous column slices of the joint projections.
    std::vector<Tape::Id> head_out;
    head_out.reserve(heads);
    for (int h = 0; h < heads; ++h) {
      auto slice = [&](Tape::Id m) {
        // A column slice is a matmul with a fixed selector; cheaper to take
        // a concat-free view via leaf-less slicing op. Selector matrices
        // keep the tape simple at these sizes.
        Eigen::MatrixXd sel = Eigen::MatrixXd::Zero(d, dh);
        for (int c = 0; c < dh; ++c) sel(h * dh + c, c) = 1.0;
        return tape.matmul(m, tape.leaf(sel));
      };
      const Tape::Id qh = slice(q);
      const Tape::Id kh = slice(k);
      const Tape::Id vh = slice(v);
      const Tape::Id scores =
          tape.scale(tape.matmul(qh, tape.transpose(kh)), attn_scale);
      const Tape::Id attn = tape.softmax_rows(scores);
      head_out.push_back(tape.matmul(attn, vh));
    }
    Tape::Id a = tape.concat_cols(head_out);
    a = tape.add_rowvec(tape.matmul(a, wo), bo);
    if (train && model.cfg.dropout > 0) a = tape.dropout(a, model.cfg.dropout, *rng);
    x = tape.layer_norm_rows(tape.add(x, a), ln1_g, ln1_b);

    Tape::Id f = tape.relu(tape.add_rowvec(tape.matmul(x, wf1), bf1));
    if (train && model.cfg.dropout > 0) f = tape.dropout(f, model.cfg.dropout, *rng);
    f = tape.add_rowvec(tape.matmul(f, wf2), bf2);
    x = tape.layer_norm_rows(tape.add(x, f), ln2_g, ln2_b);
  }

  Tape::Id h = tape.flatten_row(x);
  for (int l = 0; l < model.cfg.head_layers; ++l) {
    h = affine(tape, pc, h);
    if (l < model.cfg.head_layers - 1) {
      h = tape.relu(h);
      if (train && model.cfg.dropout > 0) h = tape.dropout(h, model.cfg.dropout, *rng);
    }
  }
  return h;
}

Eigen::MatrixXd mlp_features(const Model& model, const LoadScenario& sc) {
  const auto& buses = model.cfg.input_buses;
  Eigen::MatrixXd f(1, 2 * buses.size());
  for (std::size_t j = 0; j < buses.size(); ++j) {
    f(0, 2 * j) = (sc.pd(buses[j]) - model.feat_mean(2 * j)) / model.feat_scale(2 * j);
    f(0, 2 * j + 1) =
        (sc.qd(buses[j]) - model.feat_mean(2 * j + 1)) / model.feat_scale(2 * j + 1);
  }
  return f;
}

Eigen::MatrixXd opformer_tokens(const Model& model, const LoadScenario& sc) {
  const int n = model.cfg.n_buses;
  Eigen::MatrixXd t(n, model.cfg.token_features());
  for (int b = 0; b < n; ++b) {
    t(b, 0) = (sc.pd(b) - model.feat_mean(0)) / model.feat_scale(0);
    t(b, 1) = (sc.qd(b) - model.feat_mean(1)) / model.feat_scale(1);
  }
  if (model.cfg.features == FeatureSet::Feats8) {
    t.rightCols(6) = model.token_static;
  }
  return t;
}

VoltageState predict_nn(const Model& model, const LoadScenario& sc) {
  Tape tape;
  std::vector<Tape::Id> ids;
  ids.reserve(model.params.size());
  for (const auto& p : model.params) ids.push_back(tape.leaf(p));
  Tape::Id out;
  if (model.cfg.kind == ModelKind::Mlp) {
    out = forward_mlp(tape, model, ids, tape.leaf(mlp_features(model, sc)), false, nullptr);
  } else {
    out = forward_opformer(tape, model, ids, tape.leaf(opformer_tokens(model, sc)), false,
                           nullptr);
  }
  const Eigen::MatrixXd& y = tape.value(out);
  const int n = model.cfg.n_buses;
  VoltageState v;
  v.vm.resize(n);
  v.va.resize(n);
  for (int b = 0; b < n; ++b) {
    v.vm(b) = y(0, b) * model.target_scale(b) + model.target_mean(b);
    v.va(b) = y(0, n + b) * model.target_scale(n + b) + model.target_mean(n + b);
  }
  return v;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  json header;
  header["format_version"] = 1;
  header["kind"] = model.cfg.kind == ModelKind::Mlp ? "mlp" : "opformer";
  header["features"] = model.cfg.features == FeatureSet::Feats2 ? 2 : 8;
  header["n_buses"] = model.cfg.n_buses;
  header["mlp_layers"] = model.cfg.mlp_layers;
  header["mlp_hidden"] = model.cfg.mlp_hidden;
  header["encoder_layers"] = model.cfg.encoder_layers;
  header["token_dim"] = model.cfg.token_dim;
  header["heads"] = model.cfg.heads;
  header["ff_dim"] = model.cfg.ff_dim;
  header["head_layers"] = model.cfg.head_layers;
  header["head_hidden"] = model.cfg.head_hidden;
  header["dropout"] = model.cfg.dropout;
  header["input_buses"] = model.cfg.input_buses;
  header["case_fingerprint"] = model.case_fingerprint;
  header["seed"] = model.seed;
  header["feat_mean"] = std::vector<double>(model.feat_mean.begin(), model.feat_mean.end());
  header["feat_scale"] = std::vector<double>(model.feat_scale.begin(), model.feat_scale.end());
  header["target_mean"] =
      std::vector<double>(model.target_mean.begin(), model.target_mean.end());
  header["target_scale"] =
      std::vector<double>(model.target_scale.begin(), model.target_scale.end());
  header["token_static_rows"] = model.token_static.rows();
  std::vector<double> ts(model.token_static.size());
  for (Eigen::Index r = 0; r < model.token_static.rows(); ++r) {
    for (Eigen::Index c = 0; c < 6 && model.token_static.cols() == 6; ++c) {
      ts[r * 6 + c] = model.token_static(r, c);
    }
  }
  header["token_static"] = ts;
  std::vector<std::vector<long>> shapes;
  for (const auto& p : model.params) shapes.push_back({p.rows(), p.cols()});
  header["param_shapes"] = shapes;
  header["param_names"] = model.param_names;

  const std::string head = header.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ModelError("cannot write " + path.string());
  const char magic[4] = {'O', 'P', 'F', 'B'};
  f.write(magic, 4);
  const std::uint32_t version = 1;
  const std::uint64_t hlen = head.size();
  f.write(reinterpret_cast<const char*>(&version), sizeof version);
  f.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
  f.write(head.data(), static_cast<std::streamsize>(head.size()));
  for (const auto& p : model.params) {
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.cols(); ++c) {
        const double v = p(r, c);
        f.write(reinterpret_cast<const char*>(&v), sizeof v);
      }
    }
  }
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ModelError("cannot read " + path.string());
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "OPFB", 4) != 0) {
    throw ModelError("not a model container: " + path.string());
  }
  std::uint32_t version = 0;
  std::uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&version), sizeof version);
  f.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
  if (version != 1) throw ModelError("unsupported model container version");
  std::string head(hlen, '\0');
  f.read(head.data(), static_cast<std::streamsize>(hlen));
  json header = json::parse(head);

  Model model;
  model.cfg.kind = header.at("kind").get<std::string>() == "mlp" ? ModelKind::Mlp
                                                                 : ModelKind::OpFormer;
  model.cfg.features =
      header.at("features").get<int>() == 2 ? FeatureSet::Feats2 : FeatureSet::Feats8;
  model.cfg.n_buses = header.at("n_buses").get<int>();
  model.cfg.mlp_layers = header.at("mlp_layers").get<int>();
  model.cfg.mlp_hidden = header.at("mlp_hidden").get<int>();
  model.cfg.encoder_layers = header.at("encoder_layers").get<int>();
  model.cfg.token_dim = header.at("token_dim").get<int>();
  model.cfg.heads = header.at("heads").get<int>();
  model.cfg.ff_dim = header.at("ff_dim").get<int>();
  model.cfg.head_layers = header.at("head_layers").get<int>();
  model.cfg.head_hidden = header.at("head_hidden").get<int>();
  model.cfg.dropout = header.at("dropout").get<double>();
  model.cfg.input_buses = header.at("input_buses").get<std::vector<int>>();
  model.case_fingerprint = header.at("case_fingerprint").get<std::string>();
  model.seed = header.at("seed").get<std::uint64_t>();
  auto vec = [&](const char* key) {
    const auto v = header.at(key).get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()).eval();
  };
  model.feat_mean = vec("feat_mean");
  model.feat_scale = vec("feat_scale");
  model.target_mean = vec("target_mean");
  model.target_scale = vec("target_scale");
  const long ts_rows = header.at("token_static_rows").get<long>();
  const auto ts = header.at("token_static").get<std::vector<double>>();
  if (ts_rows > 0) {
    model.token_static.resize(ts_rows, 6);
    for (long r = 0; r < ts_rows; ++r) {
      for (int c = 0; c < 6; ++c) model.token_static(r, c) = ts[r * 6 + c];
    }
  }
  model.param_names = header.at("param_names").get<std::vector<std::string>>();
  const auto shapes = header.at("param_shapes").get<std::vector<std::vector<long>>>();
  for (const auto& sh : shapes) {
    Eigen::MatrixXd p(sh[0], sh[1]);
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.cols(); ++c) {
        double v;
        f.read(reinterpret_cast<char*>(&v), sizeof v);
        p(r, c) = v;
      }
    }
    model.params.push_back(std::move(p));
  }
  if (!f) throw ModelError("model container is truncated: " + path.string());
  return model;
}

}  // namespace opfbench::nn
