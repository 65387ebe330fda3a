#include "opfbench/network.hpp"

#include <cmath>
#include <map>
#include <numbers>

namespace opfbench {

std::vector<int> Network::load_buses() const {
  std::vector<int> out;
  for (int b = 0; b < n_buses(); ++b) {
    if (buses[b].pd != 0.0 || buses[b].qd != 0.0) out.push_back(b);
  }
  return out;
}

Network build_network(const RawCase& raw) {
  Network net;
  net.base_mva = raw.base_mva;
  net.fingerprint = case_fingerprint(raw);
  const double base = raw.base_mva;
  const double deg = std::numbers::pi / 180.0;

  std::map<int, int> index;
  net.buses.reserve(raw.buses.size());
  for (const auto& row : raw.buses) {
    index[row.id] = static_cast<int>(net.buses.size());
    Bus b;
    b.type = row.type;
    b.pd = row.pd / base;
    b.qd = row.qd / base;
    b.gs = row.gs / base;
    b.bs = row.bs / base;
    b.vmax = row.vmax;
    b.vmin = row.vmin;
    b.vm0 = row.vm;
    b.va0 = row.va * deg;
    if (b.vmin > b.vmax) {
      throw NetworkError("bus " + std::to_string(row.id) + ": Vmin > Vmax");
    }
    if (row.type == BusType::Slack) net.slack = index[row.id];
    net.bus_ids.push_back(row.id);
    net.buses.push_back(b);
  }

  for (const auto& row : raw.branches) {
    if (row.status == 0) continue;
    Branch b;
    b.from = index.at(row.from);
    b.to = index.at(row.to);
    if (row.r == 0.0 && row.x == 0.0) {
      throw NetworkError("branch " + std::to_string(row.from) + "-" + std::to_string(row.to) +
                         ": zero series impedance");
    }
    b.y_series = 1.0 / std::complex<double>(row.r, row.x);
    b.b_charging = row.b_charging;
    b.tap = row.tap == 0.0 ? 1.0 : row.tap;
    if (b.tap <= 0.0) {
      throw NetworkError("branch " + std::to_string(row.from) + "-" + std::to_string(row.to) +
                         ": nonpositive tap ratio");
    }
    b.shift = row.shift * deg;
    b.rate = row.rate_a / base;
    net.branches.push_back(b);
  }

  net.gen_at_bus.assign(net.buses.size(), -1);
  for (std::size_t i = 0; i < raw.gens.size(); ++i) {
    const auto& row = raw.gens[i];
    if (row.status == 0) continue;
    Generator g;
    g.bus = index.at(row.bus);
    g.pmin = row.pmin / base;
    g.pmax = row.pmax / base;
    g.qmin = row.qmin / base;
    g.qmax = row.qmax / base;
    g.pg0 = row.pg / base;
    g.qg0 = row.qg / base;
    g.vg = row.vg;
    if (g.pmin > g.pmax || g.qmin > g.qmax) {
      throw NetworkError("generator at bus " + std::to_string(row.bus) + ": inverted limits");
    }
    // Cost rescale keeps cost(Pg) identical when Pg moves from MW to pu.
    const auto& cost = raw.costs[i];
    g.c2 = cost.c2 * base * base;
    g.c1 = cost.c1 * base;
    g.c0 = cost.c0;
    if (net.gen_at_bus[g.bus] >= 0) {
      throw NetworkError("bus " + std::to_string(row.bus) +
                         " has multiple in-service generators; aggregate them first");
    }
    net.gen_at_bus[g.bus] = static_cast<int>(net.gens.size());
    net.gens.push_back(g);
  }

  // Reject stranded buses: no in-service branch and no generator.
  std::vector<int> degree(net.buses.size(), 0);
  for (const auto& b : net.branches) {
    ++degree[b.from];
    ++degree[b.to];
  }
  for (int i = 0; i < net.n_buses(); ++i) {
    if (degree[i] == 0 && !net.has_gen(i)) {
      throw NetworkError("bus " + std::to_string(net.bus_ids[i]) + " is islanded");
    }
  }

  return net;
}

AdmittanceMatrix build_ybus(const Network& net) {
  const int n = net.n_buses();
  AdmittanceMatrix adm;
  adm.y = Eigen::MatrixXcd::Zero(n, n);
  adm.blocks.reserve(net.branches.size());

  for (const auto& br : net.branches) {
    const std::complex<double> ys = br.y_series;
    const std::complex<double> ych(0.0, br.b_charging / 2.0);
    const std::complex<double> tap = std::polar(br.tap, br.shift);
    const std::complex<double> yff = (ys + ych) / (br.tap * br.tap);
    const std::complex<double> ytt = ys + ych;
    const std::complex<double> yft = -ys / std::conj(tap);
    const std::complex<double> ytf = -ys / tap;
    adm.blocks.push_back({yff, yft, ytf, ytt});
    adm.y(br.from, br.from) += yff;
    adm.y(br.to, br.to) += ytt;
    adm.y(br.from, br.to) += yft;
    adm.y(br.to, br.from) += ytf;
  }
  for (int i = 0; i < n; ++i) {
    adm.y(i, i) += std::complex<double>(net.buses[i].gs, net.buses[i].bs);
  }
  return adm;
}

}  // namespace opfbench
