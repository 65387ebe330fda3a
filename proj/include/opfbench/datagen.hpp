#pragma once

#include <Eigen/Dense>
#include <filesystem>

#include "opfbench/dataset.hpp"
#include "opfbench/network.hpp"

namespace opfbench {

/// Latin hypercube sample: k rows in [0,1)^d with exactly one row per
/// stratum [i/k, (i+1)/k) in every dimension. Deterministic in (k, d, seed)
/// across platforms.
Eigen::MatrixXd lhs_sample(int k, int d, std::uint64_t seed);

struct DatagenOptions {
  double variation = 0.5;
  int threads = 1;           // 0 = hardware concurrency
  int retry_factor = 5;      // total draw budget = retry_factor * k
  bool independent_pq = false;  // separate LHS factors for P and Q
};

/// Scale each nonzero load by an LHS factor in [1-variation, 1+variation]
/// (constant power factor per bus unless independent_pq), solve the AC-OPF
/// ground truth per scenario, drop non-converged draws, and split 60/15/25
/// with a seeded shuffle. Output is a pure function of (case, k, seed,
/// options) regardless of thread count.
Dataset generate_dataset(const Network& net, const AdmittanceMatrix& adm, int k,
                         std::uint64_t seed, const DatagenOptions& opts = {});

/// Directory layout: manifest.json + samples.csv (17 significant digits).
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

/// FNV-1a digest over the canonical on-disk form; used for determinism
/// checks and provenance records.
std::string dataset_digest(const Dataset& ds);

}  // namespace opfbench
