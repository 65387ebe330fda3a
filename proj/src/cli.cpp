#include "opfbench/cli.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "opfbench/acopf.hpp"
#include "opfbench/baselines.hpp"
#include "opfbench/datagen.hpp"
#include "opfbench/linear_opf.hpp"
#include "opfbench/metrics.hpp"
#include "opfbench/nn/train.hpp"
#include "opfbench/report.hpp"

namespace opfbench::cli {

namespace {

using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

int default_threads() {
  if (const char* env = std::getenv("OPFBENCH_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

Network load_network(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read case file " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return build_network(parse_case(text));
}

void write_run_record(const std::filesystem::path& path, const std::string& subcommand,
                      const std::vector<std::string>& args, const json& extra,
                      double wall_seconds) {
  json j;
  j["tool"] = "opfbench";
  j["version"] = kVersion;
  j["subcommand"] = subcommand;
  j["args"] = args;
  j["wall_clock_seconds"] = wall_seconds;
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  std::ofstream f(path);
  f << j.dump(2) << '\n';
}

std::vector<int> split_indices(const Dataset& ds, const std::string& name) {
  if (name == "train") return ds.splits.train;
  if (name == "val") return ds.splits.val;
  if (name == "test") return ds.splits.test;
  if (name == "all") {
    std::vector<int> all(ds.samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    return all;
  }
  throw std::runtime_error("unknown split '" + name + "'");
}

void write_predictions(const std::filesystem::path& path, const std::vector<int>& split,
                       const std::vector<VoltageState>& preds) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  const Eigen::Index n = preds.empty() ? 0 : preds.front().vm.size();
  f << "sample_id";
  for (Eigen::Index b = 0; b < n; ++b) f << ",vm_" << b;
  for (Eigen::Index b = 0; b < n; ++b) f << ",va_" << b;
  f << '\n';
  char buf[40];
  for (std::size_t i = 0; i < preds.size(); ++i) {
    f << split[i];
    for (Eigen::Index b = 0; b < n; ++b) {
      std::snprintf(buf, sizeof buf, "%.17g", preds[i].vm(b));
      f << ',' << buf;
    }
    for (Eigen::Index b = 0; b < n; ++b) {
      std::snprintf(buf, sizeof buf, "%.17g", preds[i].va(b));
      f << ',' << buf;
    }
    f << '\n';
  }
}

// Returns (sample ids, states).
std::pair<std::vector<int>, std::vector<VoltageState>> read_predictions(
    const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read predictions " + path.string());
  std::string header;
  std::getline(f, header);
  int n = 0;
  {
    std::size_t pos = 0;
    while ((pos = header.find(",vm_", pos)) != std::string::npos) {
      ++n;
      pos += 4;
    }
  }
  if (n == 0) throw std::runtime_error("prediction header has no vm_ columns");
  std::vector<int> ids;
  std::vector<VoltageState> states;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    std::getline(ls, tok, ',');
    ids.push_back(std::atoi(tok.c_str()));
    VoltageState v;
    v.vm.resize(n);
    v.va.resize(n);
    for (int b = 0; b < n; ++b) {
      std::getline(ls, tok, ',');
      v.vm(b) = std::strtod(tok.c_str(), nullptr);
    }
    for (int b = 0; b < n; ++b) {
      std::getline(ls, tok, ',');
      v.va(b) = std::strtod(tok.c_str(), nullptr);
    }
    states.push_back(std::move(v));
  }
  return {ids, states};
}

void parallel_samples(int count, int threads, const std::function<void(int)>& body);

struct GenDataArgs {
  std::string case_path, out_dir;
  int k = 200;
  double variation = 0.5;
  std::uint64_t seed = 0;
  int threads = default_threads();
  bool independent_pq = false;
};

int cmd_gen_data(const GenDataArgs& a, const std::vector<std::string>& argv) {
  const auto t0 = std::chrono::steady_clock::now();
  const Network net = load_network(a.case_path);
  const AdmittanceMatrix adm = build_ybus(net);
  DatagenOptions opts;
  opts.variation = a.variation;
  opts.threads = a.threads;
  opts.independent_pq = a.independent_pq;
  const Dataset ds = generate_dataset(net, adm, a.k, a.seed, opts);
  write_dataset(ds, a.out_dir);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json extra;
  extra["case_fingerprint"] = net.fingerprint;
  extra["seed"] = a.seed;
  extra["dataset_digest"] = dataset_digest(ds);
  extra["discarded"] = ds.manifest.discarded;
  write_run_record(std::filesystem::path(a.out_dir) / "run.json", "gen-data", argv, extra,
                   secs);
  std::cout << "wrote " << ds.samples.size() << " samples to " << a.out_dir << " (digest "
            << dataset_digest(ds) << ", " << ds.manifest.discarded << " discarded)\n";
  return 0;
}

struct FitArgs {
  std::string method, case_path, data_dir, out_path;
  std::uint64_t seed = 0;
  int epochs = 60;
  int batch = 128;
  double lr = 1e-3;
  int feats = 2;
  bool no_standardize = false;
  bool all_bus_features = false;
};

int cmd_fit(const FitArgs& a, const std::vector<std::string>& argv) {
  const auto t0 = std::chrono::steady_clock::now();
  const Network net = load_network(a.case_path);
  Dataset ds = read_dataset(a.data_dir);
  ds.require_fingerprint(net.fingerprint);
  const Dataset train = split_view(ds, ds.splits.train);

  json extra;
  extra["case_fingerprint"] = net.fingerprint;
  extra["seed"] = a.seed;

  if (a.method == "grid-avg" || a.method == "node-avg" || a.method == "ols") {
    LinearPredictor p;
    if (a.method == "grid-avg") {
      p = fit_grid_average(train, net);
    } else if (a.method == "node-avg") {
      p = fit_node_average(train, net);
    } else {
      const FeatureLayout layout = a.all_bus_features ? FeatureLayout::all_buses(net)
                                                      : FeatureLayout::nonzero_load(net);
      p = fit_ols(train, net, layout);
    }
    save_predictor(p, a.out_path);
  } else if (a.method == "mlp" || a.method == "opformer") {
    nn::ModelConfig cfg;
    cfg.kind = a.method == "mlp" ? nn::ModelKind::Mlp : nn::ModelKind::OpFormer;
    cfg.features = a.feats == 8 ? nn::FeatureSet::Feats8 : nn::FeatureSet::Feats2;
    cfg.n_buses = net.n_buses();
    if (cfg.kind == nn::ModelKind::Mlp && net.n_buses() > 100) cfg.mlp_hidden = 1024;
    nn::Model model = nn::build_model(cfg, net, a.seed);
    nn::TrainConfig tc;
    tc.epochs = a.epochs;
    tc.batch_size = a.batch;
    tc.lr = a.lr;
    tc.seed = a.seed;
    tc.standardize_targets = !a.no_standardize;
    const nn::TrainResult tr = nn::train(model, ds, ds.splits.train, ds.splits.val, tc);
    nn::save_model(model, a.out_path);
    extra["best_epoch"] = tr.best_epoch;
    extra["final_train_loss"] = tr.train_loss.back();
    extra["best_val_loss"] = tr.val_loss[tr.best_epoch];
    std::cout << a.method << ": best val loss " << tr.val_loss[tr.best_epoch] << " at epoch "
              << tr.best_epoch << '\n';
  } else {
    std::cerr << "unknown method '" << a.method << "'\n";
    return 2;
  }

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_run_record(a.out_path + ".run.json", "fit", argv, extra, secs);
  return 0;
}

struct SolveArgs {
  std::string method, case_path, data_dir, out_path;
  std::string split = "test";
  std::string reference = "node-mean";
  bool no_branch_limits = false;
  int threads = default_threads();
};

int cmd_solve(const SolveArgs& a, const std::vector<std::string>& argv) {
  const auto t0 = std::chrono::steady_clock::now();
  const Network net = load_network(a.case_path);
  const AdmittanceMatrix adm = build_ybus(net);
  Dataset ds = read_dataset(a.data_dir);
  ds.require_fingerprint(net.fingerprint);
  const std::vector<int> split = split_indices(ds, a.split);

  std::vector<VoltageState> preds(split.size());
  int failures = 0;

  if (a.method == "dcopf") {
    for (std::size_t i = 0; i < split.size(); ++i) {
      try {
        preds[i] = dcopf(net, ds.samples[split[i]].load).v;
      } catch (const OpfInfeasible&) {
        preds[i].vm = Eigen::VectorXd::Constant(net.n_buses(),
                                                std::numeric_limits<double>::quiet_NaN());
        preds[i].va = preds[i].vm;
        ++failures;
      }
    }
  } else if (a.method == "hotstart") {
    ReferenceOptions ropts;
    ropts.mode = a.reference == "mean-load-solve" ? ReferenceMode::MeanLoadSolve
                                                  : ReferenceMode::NodeMean;
    const Dataset train = split_view(ds, ds.splits.train);
    const LinearizationPoint ref = make_reference(train, net, adm, ropts);
    HotStartOptions hopts;
    hopts.branch_limits = !a.no_branch_limits;
    for (std::size_t i = 0; i < split.size(); ++i) {
      try {
        preds[i] = hotstart_opf(net, adm, ds.samples[split[i]].load, ref, hopts).v;
      } catch (const OpfInfeasible&) {
        preds[i].vm = Eigen::VectorXd::Constant(net.n_buses(),
                                                std::numeric_limits<double>::quiet_NaN());
        preds[i].va = preds[i].vm;
        ++failures;
      }
    }
  } else if (a.method == "acopf") {
    std::vector<char> failed(split.size(), 0);
    parallel_samples(static_cast<int>(split.size()), a.threads, [&](int i) {
      try {
        const OpfSolution sol = solve_acopf(net, adm, ds.samples[split[i]].load);
        if (sol.converged) {
          preds[i] = sol.v;
        } else {
          failed[i] = 1;
        }
      } catch (const std::exception&) {
        failed[i] = 1;
      }
    });
    for (std::size_t i = 0; i < split.size(); ++i) {
      if (failed[i]) {
        preds[i].vm = Eigen::VectorXd::Constant(net.n_buses(),
                                                std::numeric_limits<double>::quiet_NaN());
        preds[i].va = preds[i].vm;
        ++failures;
      }
    }
  } else {
    std::cerr << "unknown method '" << a.method << "'\n";
    return 2;
  }

  write_predictions(a.out_path, split, preds);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json extra;
  extra["case_fingerprint"] = net.fingerprint;
  extra["failures"] = failures;
  write_run_record(a.out_path + ".run.json", "solve", argv, extra, secs);
  if (failures > 0) {
    std::cout << failures << " samples failed; rows are NaN and excluded downstream\n";
  }
  return 0;
}

// Predictions are provided as name=path; repeated names group as seeds.
struct EvalArgs {
  std::string case_path, data_dir, out_path;
  std::vector<std::string> preds;
  std::string split = "test";
  std::string expectations;
  bool include_truth = false;
  bool no_power = false;
  std::string dataset_name = "dataset";
};

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
  const auto t0 = std::chrono::steady_clock::now();
  const Network net = load_network(a.case_path);
  const AdmittanceMatrix adm = build_ybus(net);
  Dataset ds = read_dataset(a.data_dir);
  ds.require_fingerprint(net.fingerprint);
  const std::vector<int> split = split_indices(ds, a.split);

  MetricsReport report;
  report.dataset_name = a.dataset_name;
  report.case_fingerprint = net.fingerprint;
  report.split = a.split;

  auto eval_one = [&](const std::string& name, const std::vector<VoltageState>& preds) {
    MethodMetrics* slot = nullptr;
    for (auto& m : report.methods) {
      if (m.method == name) slot = &m;
    }
    if (!slot) {
      report.methods.push_back(MethodMetrics{name, {}, {}});
      slot = &report.methods.back();
    }
    slot->regression.push_back(regression_metrics(preds, ds, split));
    if (!a.no_power) slot->power.push_back(power_metrics(preds, ds, split, net, adm));
  };

  if (a.include_truth) {
    std::vector<VoltageState> truth(split.size());
    for (std::size_t i = 0; i < split.size(); ++i) truth[i] = ds.samples[split[i]].voltage;
    eval_one("truth", truth);
  }

  for (const std::string& spec : a.preds) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) {
      std::cerr << "--preds entries must be name=path, got '" << spec << "'\n";
      return 2;
    }
    const std::string name = spec.substr(0, eq);
    const std::string path = spec.substr(eq + 1);
    auto [ids, states] = read_predictions(path);
    if (ids.size() != split.size()) {
      std::cerr << "predictions " << path << " have " << ids.size() << " rows but split '"
                << a.split << "' has " << split.size() << '\n';
      return 1;
    }
    // Align rows to the split by sample id.
    std::vector<VoltageState> aligned(split.size());
    std::map<int, int> pos;
    for (std::size_t i = 0; i < split.size(); ++i) pos[split[i]] = static_cast<int>(i);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      auto it = pos.find(ids[i]);
      if (it == pos.end()) {
        std::cerr << "prediction row for sample " << ids[i] << " is not in split '" << a.split
                  << "'\n";
        return 1;
      }
      aligned[it->second] = std::move(states[i]);
    }
    eval_one(name, aligned);
  }

  save_report(report, a.out_path);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json extra;
  extra["case_fingerprint"] = net.fingerprint;
  write_run_record(a.out_path + ".run.json", "eval", argv, extra, secs);

  if (!a.expectations.empty()) {
    std::ifstream f(a.expectations);
    if (!f) {
      std::cerr << "cannot read expectations file " << a.expectations << '\n';
      return 1;
    }
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const auto violations = check_expectations(report, text);
    if (!violations.empty()) {
      for (const auto& v : violations) std::cerr << "expectation violated: " << v << '\n';
      return 3;
    }
  }
  return 0;
}

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string format = "markdown";
  std::string out_path;
};

int cmd_report(const ReportArgs& a, const std::vector<std::string>& argv) {
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream os;
  for (const auto& in : a.inputs) {
    const MetricsReport r = load_report(in);
    os << emit_report(r, a.format == "csv" ? ReportFormat::Csv : ReportFormat::Markdown);
    os << '\n';
  }
  if (a.out_path.empty()) {
    std::cout << os.str();
  } else {
    std::ofstream f(a.out_path);
    f << os.str();
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_run_record(a.out_path + ".run.json", "report", argv, json::object(), secs);
  }
  return 0;
}

struct BenchArgs {
  std::string case_path, data_dir, checkpoint;
  std::string out_path;
  int runs = 100;
  int solver_runs = 5;
};

int cmd_bench(const BenchArgs& a, const std::vector<std::string>& argv) {
  const auto t0 = std::chrono::steady_clock::now();
  const Network net = load_network(a.case_path);
  const AdmittanceMatrix adm = build_ybus(net);
  Dataset ds = read_dataset(a.data_dir);
  ds.require_fingerprint(net.fingerprint);
  const LoadScenario probe = ds.samples[ds.splits.test.empty() ? 0 : ds.splits.test[0]].load;

  ModelAccount acct;
  const nn::Model model = nn::load_model(a.checkpoint);
  acct.parameter_count = model.parameter_count();
  acct.mac_count = model.mac_count();
  acct.inference_seconds =
      median_seconds([&]() { (void)nn::predict_nn(model, probe); }, a.runs);
  acct.solver_seconds =
      median_seconds([&]() { (void)solve_acopf(net, adm, probe); }, a.solver_runs);

  json j;
  j["parameter_count"] = acct.parameter_count;
  j["mac_count"] = acct.mac_count;
  j["inference_seconds_median"] = acct.inference_seconds;
  j["solver_seconds_median"] = acct.solver_seconds;
  j["speedup"] = acct.solver_seconds / acct.inference_seconds;
  const std::string text = j.dump(2);
  if (a.out_path.empty()) {
    std::cout << text << '\n';
  } else {
    std::ofstream f(a.out_path);
    f << text << '\n';
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_run_record(a.out_path + ".run.json", "bench", argv, json::object(), secs);
  }
  return 0;
}

void parallel_samples(int count, int threads, const std::function<void(int)>& body) {
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int t = 0; t < std::min(threads, count); ++t) {
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"AC-OPF voltage-prediction benchmark harness"};
  app.require_subcommand(1);

  GenDataArgs gen;
  CLI::App* sc_gen = app.add_subcommand("gen-data", "Generate an AC-OPF dataset");
  sc_gen->add_option("--case", gen.case_path, "MATPOWER-style case file")->required();
  sc_gen->add_option("--k", gen.k, "Number of converged samples to keep")
      ->default_val(200);
  sc_gen->add_option("--variation", gen.variation, "Load scaling half-range")
      ->default_val(0.5);
  sc_gen->add_option("--seed", gen.seed, "RNG seed")->default_val(0);
  sc_gen->add_option("--out", gen.out_dir, "Output dataset directory")->required();
  sc_gen->add_option("--threads", gen.threads, "Worker threads (env OPFBENCH_THREADS)")
      ->default_val(default_threads());
  sc_gen->add_flag("--independent-pq", gen.independent_pq,
                   "Scale P and Q with independent factors");

  FitArgs fit;
  CLI::App* sc_fit = app.add_subcommand("fit", "Fit a predictor on the train split");
  sc_fit->add_option("--method", fit.method,
                     "grid-avg | node-avg | ols | mlp | opformer")
      ->required();
  sc_fit->add_option("--case", fit.case_path, "MATPOWER-style case file")->required();
  sc_fit->add_option("--data", fit.data_dir, "Dataset directory")->required();
  sc_fit->add_option("--out", fit.out_path, "Output predictor/checkpoint path")->required();
  sc_fit->add_option("--seed", fit.seed, "Training seed")->default_val(0);
  sc_fit->add_option("--epochs", fit.epochs, "Training epochs")->default_val(60);
  sc_fit->add_option("--batch", fit.batch, "Minibatch size")->default_val(128);
  sc_fit->add_option("--lr", fit.lr, "Learning rate")->default_val(1e-3);
  sc_fit->add_option("--feats", fit.feats, "Token features for opformer: 2 or 8")
      ->default_val(2);
  sc_fit->add_flag("--no-standardize", fit.no_standardize,
                   "Train on raw targets instead of per-node z-scores");
  sc_fit->add_flag("--all-bus-features", fit.all_bus_features,
                   "OLS input over all buses instead of nonzero-load buses");

  SolveArgs solve;
  CLI::App* sc_solve = app.add_subcommand("solve", "Run an optimization method per sample");
  sc_solve->add_option("--method", solve.method, "dcopf | hotstart | acopf")->required();
  sc_solve->add_option("--case", solve.case_path, "MATPOWER-style case file")->required();
  sc_solve->add_option("--data", solve.data_dir, "Dataset directory")->required();
  sc_solve->add_option("--out", solve.out_path, "Output predictions CSV")->required();
  sc_solve->add_option("--split", solve.split, "train | val | test | all")
      ->default_val("test");
  sc_solve->add_option("--reference", solve.reference,
                       "hotstart reference: node-mean | mean-load-solve")
      ->default_val("node-mean");
  sc_solve->add_flag("--no-branch-limits", solve.no_branch_limits,
                     "Drop linearized branch limits from hotstart");
  sc_solve->add_option("--threads", solve.threads, "Worker threads (env OPFBENCH_THREADS)")
      ->default_val(default_threads());

  EvalArgs eval;
  CLI::App* sc_eval = app.add_subcommand("eval", "Compute metrics for prediction files");
  sc_eval->add_option("--case", eval.case_path, "MATPOWER-style case file")->required();
  sc_eval->add_option("--data", eval.data_dir, "Dataset directory")->required();
  sc_eval->add_option("--preds", eval.preds,
                      "name=path prediction CSVs; repeat a name to group seeds");
  sc_eval->add_option("--out", eval.out_path, "Output metrics JSON")->required();
  sc_eval->add_option("--split", eval.split, "train | val | test | all")->default_val("test");
  sc_eval->add_option("--expectations", eval.expectations,
                      "JSON thresholds; violations exit with code 3");
  sc_eval->add_flag("--include-truth", eval.include_truth,
                    "Evaluate stored ground-truth voltages as method 'truth'");
  sc_eval->add_flag("--no-power", eval.no_power, "Skip power metrics");
  sc_eval->add_option("--name", eval.dataset_name, "Dataset display name")
      ->default_val("dataset");

  ReportArgs rep;
  CLI::App* sc_rep = app.add_subcommand("report", "Render metric JSONs as tables");
  sc_rep->add_option("--in", rep.inputs, "Metrics JSON files")->required();
  sc_rep->add_option("--format", rep.format, "markdown | csv")->default_val("markdown");
  sc_rep->add_option("--out", rep.out_path, "Output file (stdout when omitted)");

  BenchArgs bench;
  CLI::App* sc_bench = app.add_subcommand("bench", "Parameter/MAC counts and timings");
  sc_bench->add_option("--case", bench.case_path, "MATPOWER-style case file")->required();
  sc_bench->add_option("--data", bench.data_dir, "Dataset directory")->required();
  sc_bench->add_option("--checkpoint", bench.checkpoint, "Model checkpoint")->required();
  sc_bench->add_option("--runs", bench.runs, "Inference timing repetitions")
      ->default_val(100);
  sc_bench->add_option("--solver-runs", bench.solver_runs, "Solver timing repetitions")
      ->default_val(5);
  sc_bench->add_option("--out", bench.out_path, "Output JSON (stdout when omitted)");

  std::vector<const char*> argv;
  argv.push_back("opfbench");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(sc_gen)) return cmd_gen_data(gen, args);
    if (app.got_subcommand(sc_fit)) return cmd_fit(fit, args);
    if (app.got_subcommand(sc_solve)) return cmd_solve(solve, args);
    if (app.got_subcommand(sc_eval)) return cmd_eval(eval, args);
    if (app.got_subcommand(sc_rep)) return cmd_report(rep, args);
    if (app.got_subcommand(sc_bench)) return cmd_bench(bench, args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace opfbench::cli
