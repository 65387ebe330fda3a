#include "opfbench/baselines.hpp"

#include <fstream>

#include "json.hpp"

namespace opfbench {

using nlohmann::json;

Eigen::VectorXd FeatureLayout::features(const LoadScenario& sc) const {
  Eigen::VectorXd f(dim());
  for (std::size_t j = 0; j < buses.size(); ++j) {
    f(2 * j) = sc.pd(buses[j]);
    f(2 * j + 1) = sc.qd(buses[j]);
  }
  return f;
}

FeatureLayout FeatureLayout::nonzero_load(const Network& net) {
  return FeatureLayout{net.load_buses()};
}

FeatureLayout FeatureLayout::all_buses(const Network& net) {
  FeatureLayout l;
  l.buses.resize(net.n_buses());
  for (int b = 0; b < net.n_buses(); ++b) l.buses[b] = b;
  return l;
}

Dataset split_view(const Dataset& ds, const std::vector<int>& indices) {
  Dataset out;
  out.manifest = ds.manifest;
  out.manifest.k = static_cast<int>(indices.size());
  out.samples.reserve(indices.size());
  for (int i : indices) out.samples.push_back(ds.samples[i]);
  return out;
}

LinearPredictor fit_grid_average(const Dataset& train_split, const Network& net) {
  if (train_split.samples.empty()) throw BaselineError("empty training set");
  LinearPredictor p;
  p.kind = LinearPredictor::Kind::GridAvg;
  p.case_fingerprint = net.fingerprint;
  p.n_buses = net.n_buses();
  double sum_vm = 0, sum_va = 0;
  for (const auto& s : train_split.samples) {
    sum_vm += s.voltage.vm.sum();
    sum_va += s.voltage.va.sum();
  }
  const double count = static_cast<double>(train_split.samples.size()) * net.n_buses();
  p.grid_vm = sum_vm / count;
  p.grid_va = sum_va / count;
  return p;
}

LinearPredictor fit_node_average(const Dataset& train_split, const Network& net) {
  if (train_split.samples.empty()) throw BaselineError("empty training set");
  LinearPredictor p;
  p.kind = LinearPredictor::Kind::NodeAvg;
  p.case_fingerprint = net.fingerprint;
  p.n_buses = net.n_buses();
  p.node_vm = Eigen::VectorXd::Zero(net.n_buses());
  p.node_va = Eigen::VectorXd::Zero(net.n_buses());
  for (const auto& s : train_split.samples) {
    p.node_vm += s.voltage.vm;
    p.node_va += s.voltage.va;
  }
  p.node_vm /= static_cast<double>(train_split.samples.size());
  p.node_va /= static_cast<double>(train_split.samples.size());
  return p;
}

LinearPredictor fit_ols(const Dataset& train_split, const Network& net,
                        const FeatureLayout& layout) {
  const int k = static_cast<int>(train_split.samples.size());
  if (k == 0) throw BaselineError("empty training set");
  const int d = layout.dim();
  const int n = net.n_buses();

  // Design matrix with an intercept column; targets are (vm || va).
  Eigen::MatrixXd x(k, d + 1);
  Eigen::MatrixXd y(k, 2 * n);
  for (int i = 0; i < k; ++i) {
    x.row(i).head(d) = layout.features(train_split.samples[i].load).transpose();
    x(i, d) = 1.0;
    y.row(i).head(n) = train_split.samples[i].voltage.vm.transpose();
    y.row(i).tail(n) = train_split.samples[i].voltage.va.transpose();
  }

  // Complete orthogonal decomposition gives the minimum-norm solution and a
  // rank report for degenerate designs.
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(x);
  const Eigen::MatrixXd coef = cod.solve(y);  // (d+1) x 2n

  LinearPredictor p;
  p.kind = LinearPredictor::Kind::Ols;
  p.case_fingerprint = net.fingerprint;
  p.n_buses = n;
  p.layout = layout;
  p.w = coef.topRows(d).transpose();  // 2n x d
  p.intercept = coef.row(d).transpose();
  p.rank_deficient = cod.rank() < d + 1;
  return p;
}

VoltageState predict(const LinearPredictor& p, const LoadScenario& scenario) {
  VoltageState v;
  const int n = p.n_buses;
  switch (p.kind) {
    case LinearPredictor::Kind::GridAvg:
      v.vm = Eigen::VectorXd::Constant(n, p.grid_vm);
      v.va = Eigen::VectorXd::Constant(n, p.grid_va);
      return v;
    case LinearPredictor::Kind::NodeAvg:
      v.vm = p.node_vm;
      v.va = p.node_va;
      return v;
    case LinearPredictor::Kind::Ols: {
      if (scenario.pd.size() < p.n_buses) {
        throw BaselineError("scenario layout does not match the predictor");
      }
      const Eigen::VectorXd f = p.layout.features(scenario);
      if (f.size() != p.w.cols()) throw BaselineError("feature layout mismatch");
      const Eigen::VectorXd out = p.w * f + p.intercept;
      v.vm = out.head(n);
      v.va = out.tail(n);
      return v;
    }
  }
  throw BaselineError("unknown predictor kind");
}

std::string predictor_to_json(const LinearPredictor& p) {
  json j;
  switch (p.kind) {
    case LinearPredictor::Kind::GridAvg: j["kind"] = "grid-avg"; break;
    case LinearPredictor::Kind::NodeAvg: j["kind"] = "node-avg"; break;
    case LinearPredictor::Kind::Ols: j["kind"] = "ols"; break;
  }
  j["case_fingerprint"] = p.case_fingerprint;
  j["n_buses"] = p.n_buses;
  j["grid_vm"] = p.grid_vm;
  j["grid_va"] = p.grid_va;
  j["node_vm"] = std::vector<double>(p.node_vm.begin(), p.node_vm.end());
  j["node_va"] = std::vector<double>(p.node_va.begin(), p.node_va.end());
  j["layout_buses"] = p.layout.buses;
  j["rank_deficient"] = p.rank_deficient;
  std::vector<double> w(p.w.size());
  for (Eigen::Index r = 0; r < p.w.rows(); ++r) {
    for (Eigen::Index c = 0; c < p.w.cols(); ++c) w[r * p.w.cols() + c] = p.w(r, c);
  }
  j["w_rows"] = p.w.rows();
  j["w_cols"] = p.w.cols();
  j["w"] = w;
  j["intercept"] = std::vector<double>(p.intercept.begin(), p.intercept.end());
  return j.dump(2);
}

LinearPredictor predictor_from_json(const std::string& text) {
  json j = json::parse(text);
  LinearPredictor p;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "grid-avg") {
    p.kind = LinearPredictor::Kind::GridAvg;
  } else if (kind == "node-avg") {
    p.kind = LinearPredictor::Kind::NodeAvg;
  } else if (kind == "ols") {
    p.kind = LinearPredictor::Kind::Ols;
  } else {
    throw BaselineError("unknown predictor kind '" + kind + "'");
  }
  p.case_fingerprint = j.at("case_fingerprint").get<std::string>();
  p.n_buses = j.at("n_buses").get<int>();
  p.grid_vm = j.at("grid_vm").get<double>();
  p.grid_va = j.at("grid_va").get<double>();
  const auto nvm = j.at("node_vm").get<std::vector<double>>();
  const auto nva = j.at("node_va").get<std::vector<double>>();
  p.node_vm = Eigen::Map<const Eigen::VectorXd>(nvm.data(), nvm.size());
  p.node_va = Eigen::Map<const Eigen::VectorXd>(nva.data(), nva.size());
  p.layout.buses = j.at("layout_buses").get<std::vector<int>>();
  p.rank_deficient = j.at("rank_deficient").get<bool>();
  const Eigen::Index rows = j.at("w_rows").get<Eigen::Index>();
  const Eigen::Index cols = j.at("w_cols").get<Eigen::Index>();
  const auto w = j.at("w").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(w.size()) != rows * cols) {
    throw BaselineError("predictor JSON has inconsistent coefficient shape");
  }
  p.w.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) p.w(r, c) = w[r * cols + c];
  }
  const auto b = j.at("intercept").get<std::vector<double>>();
  p.intercept = Eigen::Map<const Eigen::VectorXd>(b.data(), b.size());
  return p;
}

void save_predictor(const LinearPredictor& p, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw BaselineError("cannot write " + path.string());
  f << predictor_to_json(p) << '\n';
}

LinearPredictor load_predictor(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw BaselineError("cannot read " + path.string());
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return predictor_from_json(text);
}

}  // namespace opfbench
