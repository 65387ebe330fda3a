#include "opfbench/datagen.hpp"

#include <atomic>
#include <thread>

#include "opfbench/acopf.hpp"
#include "opfbench/linear_opf.hpp"
#include "opfbench/rng.hpp"

namespace opfbench {

namespace {

std::uint64_t block_seed(std::uint64_t seed, int block) {
  return Rng::stream(seed, 0xb10c0000ULL + static_cast<std::uint64_t>(block)).next_u64();
}

void parallel_for(int count, int threads, const std::function<void(int)>& body) {
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&]() {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

Eigen::MatrixXd lhs_sample(int k, int d, std::uint64_t seed) {
  if (k < 1 || d < 1) throw std::invalid_argument("lhs_sample requires k >= 1, d >= 1");
  Eigen::MatrixXd m(k, d);
  for (int j = 0; j < d; ++j) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(j));
    const std::vector<int> perm = rng.permutation(k);
    for (int i = 0; i < k; ++i) {
      m(i, j) = (static_cast<double>(perm[i]) + rng.uniform01()) / static_cast<double>(k);
    }
  }
  return m;
}

Dataset generate_dataset(const Network& net, const AdmittanceMatrix& adm, int k,
                         std::uint64_t seed, const DatagenOptions& opts) {
  const std::vector<int> load_buses = net.load_buses();
  const int d = static_cast<int>(load_buses.size()) * (opts.independent_pq ? 2 : 1);
  const int n = net.n_buses();

  Dataset ds;
  ds.manifest.case_fingerprint = net.fingerprint;
  ds.manifest.seed = seed;
  ds.manifest.variation = opts.variation;
  ds.manifest.k = k;
  ds.manifest.sampler_id =
      opts.independent_pq ? "lhs-independent-pq" : "lhs-constant-power-factor";

  const int max_blocks = std::max(1, opts.retry_factor);
  std::vector<Sample> collected;
  collected.reserve(k);
  int discarded = 0;

  for (int block = 0; block < max_blocks && static_cast<int>(collected.size()) < k; ++block) {
    const Eigen::MatrixXd u = lhs_sample(k, d, block_seed(seed, block));
    std::vector<Sample> results(k);
    std::vector<char> converged(k, 0);

    parallel_for(k, opts.threads, [&](int i) {
      LoadScenario sc;
      sc.pd = Eigen::VectorXd::Zero(n);
      sc.qd = Eigen::VectorXd::Zero(n);
      for (std::size_t j = 0; j < load_buses.size(); ++j) {
        const int b = load_buses[j];
        const double fp = 1.0 - opts.variation + 2.0 * opts.variation * u(i, j);
        const double fq = opts.independent_pq
                              ? 1.0 - opts.variation +
                                    2.0 * opts.variation * u(i, j + load_buses.size())
                              : fp;
        sc.pd(b) = net.buses[b].pd * fp;
        sc.qd(b) = net.buses[b].qd * fq;
      }
      try {
        const OpfSolution opf = solve_acopf(net, adm, sc);
        if (opf.converged) {
          results[i] = Sample{sc, opf.v, opf.pg, opf.qg, opf.objective};
          converged[i] = 1;
        }
      } catch (const OpfInfeasible&) {
      } catch (const SingularJacobian&) {
      }
    });

    for (int i = 0; i < k && static_cast<int>(collected.size()) < k; ++i) {
      if (converged[i]) {
        collected.push_back(std::move(results[i]));
      } else {
        ++discarded;
      }
    }
  }

  if (static_cast<int>(collected.size()) < k) {
    throw DatasetError(
        DatasetError::Kind::RetryBudgetExhausted,
        "only " + std::to_string(collected.size()) + " of " + std::to_string(k) +
            " scenarios converged within the retry budget (" + std::to_string(discarded) +
            " discarded)");
  }

  ds.samples = std::move(collected);
  ds.manifest.discarded = discarded;

  Rng split_rng = Rng::stream(seed, 0x5011fULL);
  std::vector<int> order = split_rng.permutation(k);
  const int n_train = static_cast<int>(0.6 * k);
  const int n_val = static_cast<int>(0.15 * k);
  ds.splits.train.assign(order.begin(), order.begin() + n_train);
  ds.splits.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  ds.splits.test.assign(order.begin() + n_train + n_val, order.end());
  return ds;
}

}  // namespace opfbench
