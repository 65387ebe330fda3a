#pragma once

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include "opfbench/casefile.hpp"

namespace opfbench {

// Everything below is in per-unit on base_mva, angles in radians. Buses are
// re-indexed densely; bus_ids maps dense index -> original file id.
struct Bus {
  BusType type = BusType::PQ;
  double pd = 0, qd = 0;
  double gs = 0, bs = 0;
  double vmin = 0, vmax = 0;
  double vm0 = 1, va0 = 0;  // file values, used for initialization only
};

struct Branch {
  int from = 0, to = 0;
  std::complex<double> y_series;  // 1/(r+jx)
  double b_charging = 0;
  double tap = 1;
  double shift = 0;  // rad
  double rate = 0;   // pu MVA, 0 = unlimited
};

struct Generator {
  int bus = 0;
  double pmin = 0, pmax = 0;
  double qmin = 0, qmax = 0;
  double pg0 = 0, qg0 = 0;  // file setpoints
  double vg = 1;
  double c2 = 0, c1 = 0, c0 = 0;  // $/h on pu power
};

class NetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Network {
  double base_mva = 100;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> gens;
  int slack = 0;                 // dense bus index
  std::vector<int> bus_ids;      // dense index -> original id
  std::vector<int> gen_at_bus;   // dense bus index -> gen index or -1
  std::string fingerprint;

  int n_buses() const { return static_cast<int>(buses.size()); }
  int n_gens() const { return static_cast<int>(gens.size()); }
  bool has_gen(int bus) const { return gen_at_bus[bus] >= 0; }

  /// Buses with nonzero nominal load, in index order.
  std::vector<int> load_buses() const;
};

/// Per-unit conversion, status filtering and dense re-indexing.
/// Out-of-service branches and generators are dropped here, never at parse
/// time. Throws NetworkError on islanded buses, inverted limits, or more
/// than one generator on a bus (parallel units must be pre-aggregated).
Network build_network(const RawCase& raw);

struct AdmittanceMatrix {
  Eigen::MatrixXcd y;
  // Terminal blocks per branch: {yff, yft, ytf, ytt}, aligned with
  // Network::branches. Flow computations use these, not y.
  std::vector<std::array<std::complex<double>, 4>> blocks;
};

/// Standard pi-model assembly including taps, shifts, charging and bus
/// shunts.
AdmittanceMatrix build_ybus(const Network& net);

}  // namespace opfbench
