#include "opfbench/casefile.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <set>
#include <sstream>

namespace opfbench {
namespace {

// One numeric table row plus the 1-based line it started on.
struct Row {
  std::vector<double> vals;
  int line;
};

struct Block {
  std::vector<Row> rows;
  bool present = false;
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

[[noreturn]] void malformed(int line, const std::string& why) {
  throw CaseError(CaseError::Kind::MalformedRow,
                  "malformed row at line " + std::to_string(line) + ": " + why);
}

class Scanner {
 public:
  explicit Scanner(std::string_view text) : text_(text) {}

  // Strips comments, finds "mpc.<name> = [ rows ];" and "mpc.baseMVA = x;".
  void scan() {
    std::string cleaned;
    cleaned.reserve(text_.size());
    for (std::size_t i = 0; i < text_.size(); ++i) {
      if (text_[i] == '%') {
        while (i < text_.size() && text_[i] != '\n') ++i;
      }
      if (i < text_.size()) cleaned.push_back(text_[i]);
    }
    cleaned_ = std::move(cleaned);
  }

  bool find_scalar(const std::string& name, double& out) const {
    auto pos = cleaned_.find("mpc." + name);
    if (pos == std::string::npos) return false;
    pos = cleaned_.find('=', pos);
    if (pos == std::string::npos) return false;
    const char* begin = cleaned_.data() + pos + 1;
    const char* end = cleaned_.data() + cleaned_.size();
    while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
    double v;
    auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc()) return false;
    out = v;
    return true;
  }

  Block find_table(const std::string& name) const {
    Block block;
    auto pos = cleaned_.find("mpc." + name + " ");
    if (pos == std::string::npos) pos = cleaned_.find("mpc." + name + "=");
    if (pos == std::string::npos) pos = cleaned_.find("mpc." + name + "\t");
    if (pos == std::string::npos) return block;
    auto open = cleaned_.find('[', pos);
    auto close = cleaned_.find(']', open);
    if (open == std::string::npos || close == std::string::npos) return block;
    block.present = true;

    int line = 1 + static_cast<int>(std::count(cleaned_.begin(), cleaned_.begin() + open, '\n'));
    Row current{{}, line};
    const char* p = cleaned_.data() + open + 1;
    const char* end = cleaned_.data() + close;
    while (p < end) {
      const char c = *p;
      if (c == '\n' || c == ';') {
        if (c == '\n') ++line;
        if (!current.vals.empty()) block.rows.push_back(current);
        current = Row{{}, line};
        ++p;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == ',') {
        ++p;
      } else {
        double v;
        auto res = std::from_chars(p, end, v);
        if (res.ec != std::errc()) malformed(line, std::string("unparsable token '") + c + "'");
        if (current.vals.empty()) current.line = line;
        current.vals.push_back(v);
        p = res.ptr;
      }
    }
    if (!current.vals.empty()) block.rows.push_back(current);
    return block;
  }

 private:
  std::string_view text_;
  std::string cleaned_;
};

int as_int(const Row& row, std::size_t col, const char* what) {
  const double v = row.vals[col];
  if (v != std::floor(v)) malformed(row.line, std::string(what) + " must be integral");
  return static_cast<int>(v);
}

void need_cols(const Row& row, std::size_t n, const char* table) {
  if (row.vals.size() < n) {
    malformed(row.line, std::string(table) + " row has " + std::to_string(row.vals.size()) +
                            " columns, expected at least " + std::to_string(n));
  }
}

}  // namespace

RawCase parse_case(std::string_view text) {
  Scanner scanner(text);
  scanner.scan();

  RawCase c;
  if (!scanner.find_scalar("baseMVA", c.base_mva)) {
    throw CaseError(CaseError::Kind::MissingTable, "missing mpc.baseMVA scalar");
  }

  const char* names[] = {"bus", "branch", "gen", "gencost"};
  Block blocks[4];
  for (int i = 0; i < 4; ++i) {
    blocks[i] = scanner.find_table(names[i]);
    if (!blocks[i].present || blocks[i].rows.empty()) {
      throw CaseError(CaseError::Kind::MissingTable,
                      std::string("missing or empty mpc.") + names[i] + " table");
    }
  }

  std::set<int> seen_ids;
  int n_slack = 0;
  for (const Row& row : blocks[0].rows) {
    need_cols(row, 13, "bus");
    BusRow b;
    b.id = as_int(row, 0, "bus id");
    const int type = as_int(row, 1, "bus type");
    if (type < 1 || type > 3) malformed(row.line, "bus type must be 1 (PQ), 2 (PV) or 3 (slack)");
    b.type = static_cast<BusType>(type);
    b.pd = row.vals[2];
    b.qd = row.vals[3];
    b.gs = row.vals[4];
    b.bs = row.vals[5];
    b.vm = row.vals[7];
    b.va = row.vals[8];
    b.vmax = row.vals[11];
    b.vmin = row.vals[12];
    if (!seen_ids.insert(b.id).second) {
      throw CaseError(CaseError::Kind::DuplicateBusId,
                      "duplicate bus id " + std::to_string(b.id) + " at line " +
                          std::to_string(row.line));
    }
    if (b.type == BusType::Slack) ++n_slack;
    c.buses.push_back(b);
  }
  if (n_slack != 1) {
    throw CaseError(CaseError::Kind::NoSlackBus,
                    "expected exactly one slack bus, found " + std::to_string(n_slack));
  }

  for (const Row& row : blocks[1].rows) {
    need_cols(row, 11, "branch");
    BranchRow b;
    b.from = as_int(row, 0, "branch from-bus");
    b.to = as_int(row, 1, "branch to-bus");
    b.r = row.vals[2];
    b.x = row.vals[3];
    b.b_charging = row.vals[4];
    b.rate_a = row.vals[5];
    b.tap = row.vals[8];
    b.shift = row.vals[9];
    b.status = as_int(row, 10, "branch status");
    if (!seen_ids.count(b.from) || !seen_ids.count(b.to)) {
      malformed(row.line, "branch endpoint references unknown bus");
    }
    c.branches.push_back(b);
  }

  for (const Row& row : blocks[2].rows) {
    need_cols(row, 10, "gen");
    GenRow g;
    g.bus = as_int(row, 0, "gen bus");
    g.pg = row.vals[1];
    g.qg = row.vals[2];
    g.qmax = row.vals[3];
    g.qmin = row.vals[4];
    g.vg = row.vals[5];
    g.status = as_int(row, 7, "gen status");
    g.pmax = row.vals[8];
    g.pmin = row.vals[9];
    if (!seen_ids.count(g.bus)) malformed(row.line, "generator references unknown bus");
    c.gens.push_back(g);
  }

  for (const Row& row : blocks[3].rows) {
    need_cols(row, 4, "gencost");
    GenCostRow g;
    g.model = as_int(row, 0, "cost model");
    if (g.model != 2) {
      throw CaseError(CaseError::Kind::UnsupportedCostModel,
                      "only polynomial cost model 2 is supported (line " +
                          std::to_string(row.line) + ")");
    }
    g.startup = row.vals[1];
    g.shutdown = row.vals[2];
    const int n = as_int(row, 3, "cost coefficient count");
    if (n < 1 || n > 3) {
      throw CaseError(CaseError::Kind::UnsupportedCostModel,
                      "polynomial cost degree must be <= 2 (line " + std::to_string(row.line) +
                          ")");
    }
    need_cols(row, 4 + n, "gencost");
    double coef[3] = {0, 0, 0};  // c2, c1, c0
    for (int i = 0; i < n; ++i) coef[3 - n + i] = row.vals[4 + i];
    g.c2 = coef[0];
    g.c1 = coef[1];
    g.c0 = coef[2];
    c.costs.push_back(g);
  }
  if (c.costs.size() != c.gens.size()) {
    throw CaseError(CaseError::Kind::MissingTable,
                    "gencost rows (" + std::to_string(c.costs.size()) +
                        ") do not match gen rows (" + std::to_string(c.gens.size()) + ")");
  }

  return c;
}

std::string serialize_case(const RawCase& c) {
  std::ostringstream os;
  os << "function mpc = case_export\nmpc.version = '2';\n";
  os << "mpc.baseMVA = " << fmt(c.base_mva) << ";\n";
  os << "mpc.bus = [\n";
  for (const auto& b : c.buses) {
    os << '\t' << b.id << '\t' << static_cast<int>(b.type) << '\t' << fmt(b.pd) << '\t'
       << fmt(b.qd) << '\t' << fmt(b.gs) << '\t' << fmt(b.bs) << "\t1\t" << fmt(b.vm) << '\t'
       << fmt(b.va) << "\t0\t1\t" << fmt(b.vmax) << '\t' << fmt(b.vmin) << ";\n";
  }
  os << "];\nmpc.gen = [\n";
  for (const auto& g : c.gens) {
    os << '\t' << g.bus << '\t' << fmt(g.pg) << '\t' << fmt(g.qg) << '\t' << fmt(g.qmax) << '\t'
       << fmt(g.qmin) << '\t' << fmt(g.vg) << "\t100\t" << g.status << '\t' << fmt(g.pmax)
       << '\t' << fmt(g.pmin) << ";\n";
  }
  os << "];\nmpc.branch = [\n";
  for (const auto& b : c.branches) {
    os << '\t' << b.from << '\t' << b.to << '\t' << fmt(b.r) << '\t' << fmt(b.x) << '\t'
       << fmt(b.b_charging) << '\t' << fmt(b.rate_a) << "\t0\t0\t" << fmt(b.tap) << '\t'
       << fmt(b.shift) << '\t' << b.status << "\t-360\t360;\n";
  }
  os << "];\nmpc.gencost = [\n";
  for (const auto& g : c.costs) {
    os << "\t2\t" << fmt(g.startup) << '\t' << fmt(g.shutdown) << "\t3\t" << fmt(g.c2) << '\t'
       << fmt(g.c1) << '\t' << fmt(g.c0) << ";\n";
  }
  os << "];\n";
  return os.str();
}

std::string case_fingerprint(const RawCase& c) {
  const std::string canon = serialize_case(c);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canon) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace opfbench
