#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace opfbench {

enum class BusType : int { PQ = 1, PV = 2, Slack = 3 };

// Raw case tables, exactly as written in the file: powers in MW/MVAr,
// angles in degrees, impedances in pu. No unit conversion happens here.
struct BusRow {
  int id = 0;
  BusType type = BusType::PQ;
  double pd = 0, qd = 0;      // MW, MVAr
  double gs = 0, bs = 0;      // MW, MVAr consumed/injected at 1.0 pu
  double vm = 1, va = 0;      // pu, degrees
  double vmax = 0, vmin = 0;  // pu
};

struct GenRow {
  int bus = 0;
  double pg = 0, qg = 0;        // MW, MVAr
  double qmax = 0, qmin = 0;    // MVAr
  double vg = 1;                // pu setpoint
  double pmax = 0, pmin = 0;    // MW
  int status = 1;
};

struct BranchRow {
  int from = 0, to = 0;
  double r = 0, x = 0;          // pu
  double b_charging = 0;        // pu total line charging
  double rate_a = 0;            // MVA, 0 = unlimited
  double tap = 0;               // 0 is read as 1.0 downstream
  double shift = 0;             // degrees
  int status = 1;
};

struct GenCostRow {
  int model = 2;                // polynomial only
  double startup = 0, shutdown = 0;
  double c2 = 0, c1 = 0, c0 = 0;  // $/h on MW quantities
};

struct RawCase {
  double base_mva = 100;
  std::vector<BusRow> buses;
  std::vector<BranchRow> branches;
  std::vector<GenRow> gens;
  std::vector<GenCostRow> costs;
};

class CaseError : public std::runtime_error {
 public:
  enum class Kind {
    MissingTable,
    MalformedRow,
    DuplicateBusId,
    NoSlackBus,
    UnsupportedCostModel,
  };

  CaseError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Parse MATPOWER-style case text (mpc.baseMVA / bus / branch / gen /
/// gencost blocks). '%' comments and arbitrary whitespace are tolerated;
/// rows are kept in file order and no renormalization is applied.
RawCase parse_case(std::string_view text);

/// Canonical text form; parse_case(serialize_case(c)) == c field for field.
std::string serialize_case(const RawCase& c);

/// Stable 64-bit FNV-1a digest of the canonical serialization, as hex.
std::string case_fingerprint(const RawCase& c);

}  // namespace opfbench
