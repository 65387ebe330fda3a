#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "opfbench/datagen.hpp"

namespace opfbench {

namespace {

using nlohmann::json;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void append_block(std::string& header, const char* stem, Eigen::Index count) {
  for (Eigen::Index i = 0; i < count; ++i) {
    header += ',';
    header += stem;
    header += '_';
    header += std::to_string(i);
  }
}

std::string samples_csv(const Dataset& ds) {
  std::string out = "sample_id";
  if (!ds.samples.empty()) {
    const auto& s0 = ds.samples.front();
    append_block(out, "pd", s0.load.pd.size());
    append_block(out, "qd", s0.load.qd.size());
    append_block(out, "vm", s0.voltage.vm.size());
    append_block(out, "va", s0.voltage.va.size());
    append_block(out, "pg", s0.pg.size());
    append_block(out, "qg", s0.qg.size());
  }
  out += ",objective\n";
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    out += std::to_string(i);
    auto emit = [&out](const Eigen::VectorXd& v) {
      for (Eigen::Index j = 0; j < v.size(); ++j) {
        out += ',';
        out += fmt17(v(j));
      }
    };
    emit(s.load.pd);
    emit(s.load.qd);
    emit(s.voltage.vm);
    emit(s.voltage.va);
    emit(s.pg);
    emit(s.qg);
    out += ',';
    out += fmt17(s.objective);
    out += '\n';
  }
  return out;
}

json manifest_json(const Dataset& ds) {
  json j;
  j["schema_version"] = ds.manifest.schema_version;
  j["case_fingerprint"] = ds.manifest.case_fingerprint;
  j["seed"] = ds.manifest.seed;
  j["variation"] = ds.manifest.variation;
  j["k"] = ds.manifest.k;
  j["discarded"] = ds.manifest.discarded;
  j["sampler_id"] = ds.manifest.sampler_id;
  j["splits"] = {{"train", ds.splits.train}, {"val", ds.splits.val}, {"test", ds.splits.test}};
  return j;
}

}  // namespace

void Dataset::require_fingerprint(const std::string& fp) const {
  if (manifest.case_fingerprint != fp) {
    throw DatasetError(DatasetError::Kind::FingerprintMismatch,
                       "dataset was generated from case " + manifest.case_fingerprint +
                           " but is paired with case " + fp);
  }
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "manifest.json");
    f << manifest_json(ds).dump(2) << '\n';
  }
  {
    std::ofstream f(dir / "samples.csv");
    f << samples_csv(ds);
  }
}

Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  std::ifstream mf(dir / "manifest.json");
  if (!mf) {
    throw DatasetError(DatasetError::Kind::CorruptFile,
                       "missing manifest.json in " + dir.string());
  }
  json j;
  try {
    mf >> j;
  } catch (const json::exception& e) {
    throw DatasetError(DatasetError::Kind::CorruptFile,
                       "unreadable manifest.json: " + std::string(e.what()));
  }
  try {
    ds.manifest.schema_version = j.at("schema_version").get<int>();
    if (ds.manifest.schema_version != 1) {
      throw DatasetError(DatasetError::Kind::SchemaVersionMismatch,
                         "unsupported dataset schema version " +
                             std::to_string(ds.manifest.schema_version));
    }
    ds.manifest.case_fingerprint = j.at("case_fingerprint").get<std::string>();
    ds.manifest.seed = j.at("seed").get<std::uint64_t>();
    ds.manifest.variation = j.at("variation").get<double>();
    ds.manifest.k = j.at("k").get<int>();
    ds.manifest.discarded = j.at("discarded").get<int>();
    ds.manifest.sampler_id = j.at("sampler_id").get<std::string>();
    ds.splits.train = j.at("splits").at("train").get<std::vector<int>>();
    ds.splits.val = j.at("splits").at("val").get<std::vector<int>>();
    ds.splits.test = j.at("splits").at("test").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw DatasetError(DatasetError::Kind::CorruptFile,
                       "manifest.json missing fields: " + std::string(e.what()));
  }

  std::ifstream cf(dir / "samples.csv");
  if (!cf) {
    throw DatasetError(DatasetError::Kind::CorruptFile,
                       "missing samples.csv in " + dir.string());
  }
  std::string header;
  if (!std::getline(cf, header)) {
    throw DatasetError(DatasetError::Kind::CorruptFile, "samples.csv is empty");
  }

  // Column counts are recovered from the header blocks.
  auto count_block = [&header](const std::string& stem) {
    int count = 0;
    std::string token = "," + stem + "_";
    std::size_t pos = 0;
    while ((pos = header.find(token, pos)) != std::string::npos) {
      ++count;
      pos += token.size();
    }
    return count;
  };
  const int n = count_block("pd");
  const int g = count_block("pg");
  if (n <= 0 || count_block("qd") != n || count_block("vm") != n || count_block("va") != n ||
      count_block("qg") != g) {
    throw DatasetError(DatasetError::Kind::CorruptFile, "samples.csv header is malformed");
  }
  const int expected_cols = 2 + 4 * n + 2 * g;

  std::string line;
  int row = 0;
  while (std::getline(cf, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    std::vector<double> vals;
    vals.reserve(expected_cols);
    while (std::getline(ls, tok, ',')) vals.push_back(std::strtod(tok.c_str(), nullptr));
    if (static_cast<int>(vals.size()) != expected_cols) {
      throw DatasetError(DatasetError::Kind::CorruptFile,
                         "samples.csv row " + std::to_string(row) + " has " +
                             std::to_string(vals.size()) + " columns, expected " +
                             std::to_string(expected_cols));
    }
    Sample s;
    int at = 1;
    auto take = [&](int count) {
      Eigen::VectorXd v(count);
      for (int i = 0; i < count; ++i) v(i) = vals[at++];
      return v;
    };
    s.load.pd = take(n);
    s.load.qd = take(n);
    s.voltage.vm = take(n);
    s.voltage.va = take(n);
    s.pg = take(g);
    s.qg = take(g);
    s.objective = vals[at];
    ds.samples.push_back(std::move(s));
    ++row;
  }
  if (static_cast<int>(ds.samples.size()) != ds.manifest.k) {
    throw DatasetError(DatasetError::Kind::CorruptFile,
                       "samples.csv has " + std::to_string(ds.samples.size()) +
                           " rows but the manifest says k = " + std::to_string(ds.manifest.k));
  }
  // Splits must exactly cover 0..k-1 without overlap.
  std::vector<char> seen(ds.samples.size(), 0);
  for (const auto* split : {&ds.splits.train, &ds.splits.val, &ds.splits.test}) {
    for (int idx : *split) {
      if (idx < 0 || idx >= static_cast<int>(ds.samples.size()) || seen[idx]) {
        throw DatasetError(DatasetError::Kind::CorruptFile, "split indices are not a partition");
      }
      seen[idx] = 1;
    }
  }
  for (char c : seen) {
    if (!c) {
      throw DatasetError(DatasetError::Kind::CorruptFile, "split indices are not a partition");
    }
  }
  return ds;
}

std::string dataset_digest(const Dataset& ds) {
  const std::string body = manifest_json(ds).dump() + samples_csv(ds);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : body) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

}  // namespace opfbench
