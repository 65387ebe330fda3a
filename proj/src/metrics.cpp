#include "opfbench/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "opfbench/acopf.hpp"

namespace opfbench {

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

RegressionMetrics regression_metrics(const std::vector<VoltageState>& preds, const Dataset& ds,
                                     const std::vector<int>& split) {
  if (preds.size() != split.size()) {
    throw MetricsError("predictions are not aligned with the split");
  }
  const std::size_t k = split.size();
  if (k == 0) throw MetricsError("empty split");
  const Eigen::Index n = ds.samples[split[0]].voltage.vm.size();
  const double count = static_cast<double>(k * n);

  std::vector<double> se_vm(k), se_va(k), sum_vm(k), sum_va(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto& truth = ds.samples[split[i]].voltage;
    se_vm[i] = (preds[i].vm - truth.vm).squaredNorm();
    se_va[i] = (preds[i].va - truth.va).squaredNorm();
    sum_vm[i] = truth.vm.sum();
    sum_va[i] = truth.va.sum();
  }
  const double mean_vm = pairwise_sum(sum_vm) / count;
  const double mean_va = pairwise_sum(sum_va) / count;

  std::vector<double> var_vm(k), var_va(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto& truth = ds.samples[split[i]].voltage;
    var_vm[i] = (truth.vm.array() - mean_vm).square().sum();
    var_va[i] = (truth.va.array() - mean_va).square().sum();
  }

  RegressionMetrics m;
  m.mse_vm = pairwise_sum(se_vm) / count;
  m.mse_va = pairwise_sum(se_va) / count;
  const double v_vm = pairwise_sum(var_vm) / count;
  const double v_va = pairwise_sum(var_va) / count;
  if (v_vm <= 0 || v_va <= 0) {
    throw MetricsError("target variance is zero; FVU undefined");
  }
  m.fvu_vm = m.mse_vm / v_vm;
  m.fvu_va = m.mse_va / v_va;
  return m;
}

PowerMetrics power_metrics(const std::vector<VoltageState>& preds, const Dataset& ds,
                           const std::vector<int>& split, const Network& net,
                           const AdmittanceMatrix& adm, const PowerMetricsOptions& opts) {
  if (preds.size() != split.size()) {
    throw MetricsError("predictions are not aligned with the split");
  }
  PowerMetrics out;
  std::vector<double> rel, abs_rel, tot_pd, tot_qd;
  std::vector<double> nz_pd, nz_qd;
  long pg_viol = 0, qg_viol = 0, gen_pairs = 0;

  for (std::size_t i = 0; i < split.size(); ++i) {
    const auto& sample = ds.samples[split[i]];
    const VoltageState& v = preds[i];
    if (!v.vm.allFinite() || !v.va.allFinite()) {
      ++out.excluded;
      continue;
    }

    const Dispatch disp = recover_generation(v, net, adm, sample.load);
    const double cost_pred = dispatch_cost(disp.pg, net);
    const double cost_true = sample.objective;
    rel.push_back((cost_pred - cost_true) / cost_true * 100.0);
    abs_rel.push_back(std::abs(rel.back()));

    for (int g = 0; g < net.n_gens(); ++g) {
      const auto& gen = net.gens[g];
      ++gen_pairs;
      if (disp.pg(g) > gen.pmax + opts.violation_tol ||
          disp.pg(g) < gen.pmin - opts.violation_tol) {
        ++pg_viol;
      }
      if (disp.qg(g) > gen.qmax + opts.violation_tol ||
          disp.qg(g) < gen.qmin - opts.violation_tol) {
        ++qg_viol;
      }
    }

    const Eigen::VectorXcd eff = effective_load(v, net, adm, sample.load);
    const double true_pd = sample.load.pd.sum();
    const double true_qd = sample.load.qd.sum();
    double eff_pd = 0, eff_qd = 0;
    for (int b = 0; b < net.n_buses(); ++b) {
      eff_pd += eff(b).real();
      eff_qd += eff(b).imag();
    }
    if (true_pd != 0) tot_pd.push_back(std::abs(eff_pd - true_pd) / std::abs(true_pd) * 100.0);
    if (true_qd != 0) tot_qd.push_back(std::abs(eff_qd - true_qd) / std::abs(true_qd) * 100.0);

    for (int b = 0; b < net.n_buses(); ++b) {
      if (net.has_gen(b)) continue;  // generation absorbs the mismatch there
      if (sample.load.pd(b) != 0) {
        nz_pd.push_back(std::abs(eff(b).real() - sample.load.pd(b)) /
                        std::abs(sample.load.pd(b)) * 100.0);
      }
      if (sample.load.qd(b) != 0) {
        nz_qd.push_back(std::abs(eff(b).imag() - sample.load.qd(b)) /
                        std::abs(sample.load.qd(b)) * 100.0);
      }
    }
  }

  auto mean = [](const std::vector<double>& v) {
    return v.empty() ? 0.0 : pairwise_sum(v) / static_cast<double>(v.size());
  };
  out.rel_opt_diff = mean(rel);
  out.abs_rel_opt_diff = mean(abs_rel);
  out.tot_pd_err = mean(tot_pd);
  out.tot_qd_err = mean(tot_qd);
  out.nonzero_pd_err = mean(nz_pd);
  out.nonzero_qd_err = mean(nz_qd);
  if (gen_pairs > 0) {
    out.pg_violation_rate = 100.0 * static_cast<double>(pg_viol) / static_cast<double>(gen_pairs);
    out.qg_violation_rate = 100.0 * static_cast<double>(qg_viol) / static_cast<double>(gen_pairs);
  }
  return out;
}

std::vector<DemandErrorPoint> demand_sorted_error(const std::vector<VoltageState>& preds,
                                                  const Dataset& ds,
                                                  const std::vector<int>& split,
                                                  const Network& net,
                                                  const AdmittanceMatrix& adm) {
  std::vector<DemandErrorPoint> points;
  points.reserve(split.size());
  for (std::size_t i = 0; i < split.size(); ++i) {
    const auto& sample = ds.samples[split[i]];
    if (!preds[i].vm.allFinite() || !preds[i].va.allFinite()) continue;
    const Dispatch disp = recover_generation(preds[i], net, adm, sample.load);
    DemandErrorPoint p;
    p.demand = sample.load.pd.sum();
    p.error = (disp.pg - sample.pg).cwiseAbs().sum();
    points.push_back(p);
  }
  std::sort(points.begin(), points.end(),
            [](const DemandErrorPoint& a, const DemandErrorPoint& b) {
              return a.demand < b.demand;
            });
  return points;
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
  std::vector<int> idx(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) idx[i] = static_cast<int>(i);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw MetricsError("spearman requires two equal-length series");
  }
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  return cov / std::sqrt(va * vb);
}

double median_seconds(const std::function<void()>& fn, int runs) {
  std::vector<double> times(runs);
  for (int i = 0; i < runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    times[i] = std::chrono::duration<double>(t1 - t0).count();
  }
  std::sort(times.begin(), times.end());
  return times[runs / 2];
}

}  // namespace opfbench
