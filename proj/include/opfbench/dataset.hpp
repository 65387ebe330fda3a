#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "opfbench/powerflow.hpp"

namespace opfbench {

struct Sample {
  LoadScenario load;
  VoltageState voltage;       // ground truth
  Eigen::VectorXd pg, qg;     // ground-truth dispatch, pu
  double objective = 0;       // $/h
};

struct SplitIndices {
  std::vector<int> train, val, test;
};

struct DatasetManifest {
  int schema_version = 1;
  std::string case_fingerprint;
  std::uint64_t seed = 0;
  double variation = 0.5;
  int k = 0;
  int discarded = 0;
  std::string sampler_id = "lhs-constant-power-factor";
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Sample> samples;
  SplitIndices splits;

  int size() const { return static_cast<int>(samples.size()); }

  /// Throws if the dataset was generated from a different case file.
  void require_fingerprint(const std::string& fp) const;
};

class DatasetError : public std::runtime_error {
 public:
  enum class Kind {
    CorruptFile,
    FingerprintMismatch,
    SchemaVersionMismatch,
    RetryBudgetExhausted,
  };

  DatasetError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace opfbench
