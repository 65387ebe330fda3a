#include "opfbench/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace opfbench {

using nlohmann::json;

namespace {

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

struct MeanStd {
  double mean = 0, std = 0;
  int n = 0;
};

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd m;
  m.n = static_cast<int>(v.size());
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  for (double x : v) m.std += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(m.std / static_cast<double>(v.size()));
  return m;
}

std::string cell(const MeanStd& m) {
  if (m.n <= 1) return sci(m.mean);
  return sci(m.mean) + " ± " + sci(m.std);
}

template <typename Getter>
MeanStd collect_reg(const MethodMetrics& mm, Getter get) {
  std::vector<double> v;
  for (const auto& r : mm.regression) v.push_back(get(r));
  return mean_std(v);
}

template <typename Getter>
MeanStd collect_pow(const MethodMetrics& mm, Getter get) {
  std::vector<double> v;
  for (const auto& p : mm.power) v.push_back(get(p));
  return mean_std(v);
}

const std::vector<std::pair<std::string, double PowerMetrics::*>> kPowerFields = {
    {"rel_opt_diff_pct", &PowerMetrics::rel_opt_diff},
    {"abs_rel_opt_diff_pct", &PowerMetrics::abs_rel_opt_diff},
    {"pg_violation_rate_pct", &PowerMetrics::pg_violation_rate},
    {"qg_violation_rate_pct", &PowerMetrics::qg_violation_rate},
    {"tot_pd_err_pct", &PowerMetrics::tot_pd_err},
    {"tot_qd_err_pct", &PowerMetrics::tot_qd_err},
    {"nonzero_pd_err_pct", &PowerMetrics::nonzero_pd_err},
    {"nonzero_qd_err_pct", &PowerMetrics::nonzero_qd_err},
};

}  // namespace

std::string emit_report(const MetricsReport& report, ReportFormat format) {
  std::ostringstream os;
  const bool any_power = [&] {
    for (const auto& m : report.methods) {
      if (!m.power.empty()) return true;
    }
    return false;
  }();

  if (format == ReportFormat::Markdown) {
    os << "## " << report.dataset_name << " (" << report.split << " split)\n\n";
    os << "| Method | Va MSE | Va FVU | Vm MSE | Vm FVU |\n";
    os << "|---|---|---|---|---|\n";
    for (const auto& m : report.methods) {
      os << "| " << m.method << " | "
         << cell(collect_reg(m, [](const RegressionMetrics& r) { return r.mse_va; })) << " | "
         << cell(collect_reg(m, [](const RegressionMetrics& r) { return r.fvu_va; })) << " | "
         << cell(collect_reg(m, [](const RegressionMetrics& r) { return r.mse_vm; })) << " | "
         << cell(collect_reg(m, [](const RegressionMetrics& r) { return r.fvu_vm; })) << " |\n";
    }
    if (any_power) {
      os << "\n| Method | Rel. Opt. Diff (%) | Abs. Rel. Opt. Diff (%) | Pg Viol. (%) | "
            "Qg Viol. (%) | Tot Pd err (%) | Tot Qd err (%) | Pd!=0 err (%) | Qd!=0 err (%) "
            "|\n";
      os << "|---|---|---|---|---|---|---|---|---|\n";
      for (const auto& m : report.methods) {
        if (m.power.empty()) continue;
        os << "| " << m.method;
        for (const auto& [name, field] : kPowerFields) {
          os << " | " << cell(collect_pow(m, [field](const PowerMetrics& p) {
            return p.*field;
          }));
        }
        os << " |\n";
      }
    }
    return os.str();
  }

  os << "dataset,split,method,metric,mean,std,seeds\n";
  for (const auto& m : report.methods) {
    auto emit = [&](const std::string& name, const MeanStd& ms) {
      os << report.dataset_name << ',' << report.split << ',' << m.method << ',' << name << ','
         << sci(ms.mean) << ',' << sci(ms.std) << ',' << ms.n << '\n';
    };
    emit("mse_va", collect_reg(m, [](const RegressionMetrics& r) { return r.mse_va; }));
    emit("fvu_va", collect_reg(m, [](const RegressionMetrics& r) { return r.fvu_va; }));
    emit("mse_vm", collect_reg(m, [](const RegressionMetrics& r) { return r.mse_vm; }));
    emit("fvu_vm", collect_reg(m, [](const RegressionMetrics& r) { return r.fvu_vm; }));
    if (!m.power.empty()) {
      for (const auto& [name, field] : kPowerFields) {
        emit(name, collect_pow(m, [field](const PowerMetrics& p) { return p.*field; }));
      }
    }
  }
  return os.str();
}

std::string report_to_json(const MetricsReport& report) {
  json j;
  j["dataset_name"] = report.dataset_name;
  j["case_fingerprint"] = report.case_fingerprint;
  j["split"] = report.split;
  j["methods"] = json::array();
  for (const auto& m : report.methods) {
    json jm;
    jm["method"] = m.method;
    jm["regression"] = json::array();
    for (const auto& r : m.regression) {
      jm["regression"].push_back(
          {{"mse_va", r.mse_va}, {"fvu_va", r.fvu_va}, {"mse_vm", r.mse_vm}, {"fvu_vm", r.fvu_vm}});
    }
    jm["power"] = json::array();
    for (const auto& p : m.power) {
      json jp;
      for (const auto& [name, field] : kPowerFields) jp[name] = p.*field;
      jp["excluded"] = p.excluded;
      jm["power"].push_back(jp);
    }
    j["methods"].push_back(jm);
  }
  return j.dump(2);
}

MetricsReport report_from_json(const std::string& text) {
  const json j = json::parse(text);
  MetricsReport report;
  report.dataset_name = j.at("dataset_name").get<std::string>();
  report.case_fingerprint = j.at("case_fingerprint").get<std::string>();
  report.split = j.at("split").get<std::string>();
  for (const auto& jm : j.at("methods")) {
    MethodMetrics m;
    m.method = jm.at("method").get<std::string>();
    for (const auto& jr : jm.at("regression")) {
      RegressionMetrics r;
      r.mse_va = jr.at("mse_va").get<double>();
      r.fvu_va = jr.at("fvu_va").get<double>();
      r.mse_vm = jr.at("mse_vm").get<double>();
      r.fvu_vm = jr.at("fvu_vm").get<double>();
      m.regression.push_back(r);
    }
    for (const auto& jp : jm.at("power")) {
      PowerMetrics p;
      for (const auto& [name, field] : kPowerFields) p.*field = jp.at(name).get<double>();
      p.excluded = jp.value("excluded", 0);
      m.power.push_back(p);
    }
    report.methods.push_back(std::move(m));
  }
  return report;
}

void save_report(const MetricsReport& report, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw MetricsError("cannot write " + path.string());
  f << report_to_json(report) << '\n';
}

MetricsReport load_report(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw MetricsError("cannot read " + path.string());
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return report_from_json(text);
}

std::vector<std::string> check_expectations(const MetricsReport& report,
                                            const std::string& expectations_json) {
  const json spec = json::parse(expectations_json);
  std::vector<std::string> violations;

  auto metric_value = [&](const MethodMetrics& m, const std::string& name,
                          double& out) -> bool {
    std::vector<double> vals;
    if (name == "mse_va") {
      for (const auto& r : m.regression) vals.push_back(r.mse_va);
    } else if (name == "fvu_va") {
      for (const auto& r : m.regression) vals.push_back(r.fvu_va);
    } else if (name == "mse_vm") {
      for (const auto& r : m.regression) vals.push_back(r.mse_vm);
    } else if (name == "fvu_vm") {
      for (const auto& r : m.regression) vals.push_back(r.fvu_vm);
    } else {
      for (const auto& [fname, field] : kPowerFields) {
        if (fname == name) {
          for (const auto& p : m.power) vals.push_back(p.*field);
        }
      }
    }
    if (vals.empty()) return false;
    out = mean_std(vals).mean;
    return true;
  };

  for (const auto& rule : spec) {
    const std::string method = rule.at("method").get<std::string>();
    const std::string metric = rule.at("metric").get<std::string>();
    const MethodMetrics* found = nullptr;
    for (const auto& m : report.methods) {
      if (m.method == method) found = &m;
    }
    if (!found) {
      violations.push_back("method '" + method + "' missing from report");
      continue;
    }
    double value = 0;
    if (!metric_value(*found, metric, value)) {
      violations.push_back("metric '" + metric + "' missing for method '" + method + "'");
      continue;
    }
    if (rule.contains("max") && value > rule.at("max").get<double>()) {
      violations.push_back(method + "/" + metric + " = " + sci(value) + " exceeds max " +
                           sci(rule.at("max").get<double>()));
    }
    if (rule.contains("min") && value < rule.at("min").get<double>()) {
      violations.push_back(method + "/" + metric + " = " + sci(value) + " below min " +
                           sci(rule.at("min").get<double>()));
    }
  }
  return violations;
}

}  // namespace opfbench
