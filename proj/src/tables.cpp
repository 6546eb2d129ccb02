#include <cmath>
#include <cstdio>
#include <sstream>

#include "teleop/stability.hpp"

namespace teleop {

namespace {

constexpr double kNoRef = std::numeric_limits<double>::quiet_NaN();
constexpr double kRrTol = 0.005;
constexpr double kTodTol = 0.02;
constexpr double kDelayTol = 0.02;

struct CellSpec {
  int N;
  double mad;
  std::vector<double> kp, kd;
  Protocol protocol;
};

TableCell run_cell(const CellSpec& spec, double reference, double tol,
                   bool as_h_m, bool as_h_s) {
  StabilityQuery q;
  q.N = spec.N;
  q.gains = GainSet::scaled_identity(spec.kp, spec.kd);
  q.mad = spec.mad;
  q.protocol = spec.protocol;
  const MaxMatiResult r = max_mati(q, default_mati_tolerance(spec.protocol));

  TableCell cell;
  cell.mad = spec.mad;
  cell.feasible = r.feasible;
  cell.undecided_warning = r.undecided_warning;
  double value = r.mati;
  if (r.feasible && (as_h_m || as_h_s)) {
    const DelayHorizons h = delay_horizons(spec.N, r.mati, spec.mad, spec.protocol);
    value = as_h_m ? h.h_M : h.h_S;
  }
  cell.computed = r.feasible ? value : 0.0;
  cell.has_reference = !std::isnan(reference);
  cell.reference = cell.has_reference ? reference : 0.0;
  if (cell.has_reference != cell.feasible) {
    cell.discrepancy = true; // one side feasible, the other marked "-"
  } else if (cell.has_reference) {
    cell.discrepancy = std::abs(cell.computed - cell.reference) > tol;
  }
  return cell;
}

std::string fmt_cell(const TableCell& c) {
  char buf[64];
  if (!c.feasible) {
    std::snprintf(buf, sizeof buf, "-%s", c.discrepancy ? "*" : "");
  } else {
    std::snprintf(buf, sizeof buf, "%.4f%s", c.computed, c.discrepancy ? "*" : "");
  }
  return buf;
}

void render_text(const StabilityTable& t, std::ostringstream& os) {
  os << t.name << ": " << t.caption << "\n";
  size_t width = 12;
  for (const auto& l : t.column_labels) width = std::max(width, l.size() + 2);
  size_t label_w = 0;
  for (const auto& l : t.row_labels) label_w = std::max(label_w, l.size() + 2);

  os << std::string(label_w, ' ');
  for (const auto& l : t.column_labels)
    os << std::string(width - l.size(), ' ') << l;
  os << "\n";
  for (size_t r = 0; r < t.row_labels.size(); ++r) {
    os << t.row_labels[r]
       << std::string(label_w - t.row_labels[r].size(), ' ');
    for (const auto& c : t.cells[r]) {
      const std::string s = fmt_cell(c);
      os << std::string(width - s.size(), ' ') << s;
    }
    os << "\n";
  }
  os << "\n";
}

void render_csv(const StabilityTable& t, std::ostringstream& os) {
  for (size_t r = 0; r < t.row_labels.size(); ++r) {
    for (size_t c = 0; c < t.cells[r].size(); ++c) {
      const TableCell& cell = t.cells[r][c];
      char buf[256];
      std::snprintf(buf, sizeof buf, "%s,%s,%s,%.17g,%d,%.17g,%.17g,%d,%d\n",
                    t.name.c_str(), t.row_labels[r].c_str(),
                    t.column_labels[c].c_str(), cell.mad, cell.feasible ? 1 : 0,
                    cell.computed, cell.has_reference ? cell.reference : kNoRef,
                    cell.discrepancy ? 1 : 0, cell.undecided_warning ? 1 : 0);
      os << buf;
    }
  }
}

} // namespace

TableSet reproduce_tables() {
  const std::vector<double> mads = {0.0, 0.2, 0.5};
  const std::vector<int> fleet = {2, 3};
  const std::vector<double> het_kp = {10.0, 20.0, 30.0};
  const std::vector<double> het_kd = {20.0, 20.0, 20.0};

  auto uniform_cells = [&](Protocol proto, double tol, bool as_h_m, bool as_h_s,
                           const std::vector<double>& refs) {
    std::vector<TableCell> row;
    size_t idx = 0;
    for (int N : fleet)
      for (double mad : mads) {
        CellSpec spec{N, mad, std::vector<double>(static_cast<size_t>(N), 20.0),
                      std::vector<double>(static_cast<size_t>(N), 20.0), proto};
        row.push_back(run_cell(spec, refs[idx++], tol, as_h_m, as_h_s));
      }
    return row;
  };
  auto hetero_cells = [&](Protocol proto, double tol, bool as_h_m, bool as_h_s,
                          const std::vector<double>& refs) {
    std::vector<TableCell> row;
    size_t idx = 0;
    for (double mad : mads) {
      CellSpec spec{3, mad, het_kp, het_kd, proto};
      row.push_back(run_cell(spec, refs[idx++], tol, as_h_m, as_h_s));
    }
    return row;
  };

  const std::vector<std::string> uniform_cols = {
      "N=2 MAD=0", "N=2 MAD=0.2", "N=2 MAD=0.5",
      "N=3 MAD=0", "N=3 MAD=0.2", "N=3 MAD=0.5"};
  const std::vector<std::string> hetero_cols = {"MAD=0", "MAD=0.2", "MAD=0.5"};

  TableSet set;

  StabilityTable t1;
  t1.name = "mati_uniform_gains";
  t1.caption = "max. allowable MATI, kp = kd = 20I (reference values in CSV; * = discrepancy)";
  t1.row_labels = {"RR", "TOD"};
  t1.column_labels = uniform_cols;
  t1.cells.push_back(uniform_cells(Protocol::RR, kRrTol, false, false,
                                   {0.6666, 0.5333, 0.3333, 0.5, 0.4, 0.25}));
  t1.cells.push_back(uniform_cells(Protocol::TOD, kTodTol, false, false,
                                   {0.4531, 0.2431, kNoRef, 0.2411, 0.0411, kNoRef}));
  set.tables.push_back(std::move(t1));

  StabilityTable t2;
  t2.name = "delays_uniform_gains";
  t2.caption = "max. time delays (RR: h_S, TOD: h_M), kp = kd = 20I";
  t2.row_labels = {"RR h_S", "TOD h_M"};
  t2.column_labels = uniform_cols;
  t2.cells.push_back(uniform_cells(Protocol::RR, kDelayTol, false, true,
                                   {1.3332, 1.2666, 1.6666, 1.5, 1.4, 1.25}));
  t2.cells.push_back(uniform_cells(Protocol::TOD, kDelayTol, true, false,
                                   {0.4531, 0.4531, kNoRef, 0.2411, 0.2411, kNoRef}));
  set.tables.push_back(std::move(t2));

  StabilityTable t3;
  t3.name = "mati_hetero_gains";
  t3.caption = "max. allowable MATI, N = 3, kp = {10, 20, 30}I, kd = 20I";
  t3.row_labels = {"RR", "TOD"};
  t3.column_labels = hetero_cols;
  t3.cells.push_back(hetero_cells(Protocol::RR, kRrTol, false, false,
                                  {0.3333, 0.2333, 0.1}));
  t3.cells.push_back(hetero_cells(Protocol::TOD, kTodTol, false, false,
                                  {0.2066, 0.0066, kNoRef}));
  set.tables.push_back(std::move(t3));

  StabilityTable t4;
  t4.name = "delays_hetero_gains";
  t4.caption = "max. time delays (RR: h_S, TOD: h_M), N = 3, kp = {10, 20, 30}I, kd = 20I";
  t4.row_labels = {"RR h_S", "TOD h_M"};
  t4.column_labels = hetero_cols;
  t4.cells.push_back(hetero_cells(Protocol::RR, kDelayTol, false, true,
                                  {1.0, 0.8999, 0.8}));
  t4.cells.push_back(hetero_cells(Protocol::TOD, kDelayTol, true, false,
                                  {0.2066, 0.2066, kNoRef}));
  set.tables.push_back(std::move(t4));

  std::ostringstream text, csv;
  csv << "table,row,column,mad,feasible,computed,reference,discrepancy,undecided\n";
  for (const auto& t : set.tables) {
    render_text(t, text);
    render_csv(t, csv);
  }
  text << "* = computed value deviates from the reference beyond tolerance "
          "(RR 0.005, TOD 0.02) or feasibility differs.\n";
  set.text = text.str();
  set.csv = csv.str();
  return set;
}

} // namespace teleop
