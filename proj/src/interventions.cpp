#include "r0sys/interventions.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "r0sys/analytic.hpp"
#include "r0sys/markov.hpp"

namespace r0sys::interventions {

namespace {

constexpr const char* kCsvHeader = "# r0sys sweep v1";
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

bool same_number(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

std::string clean_note(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

double parse_number(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  double x = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && s.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, x);
  if (ec != std::errc() || ptr != last) throw Error(ErrorKind::BadRange, "number '" + std::string(s) + "'");
  return x;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

SweepTable make_table(std::vector<std::string> columns, const std::string& model,
                      const std::string& transmission, const std::string& variable) {
  SweepTable t;
  t.columns = std::move(columns);
  t.set_meta("generator", std::string("r0sys ") + kVersion);
  t.set_meta("model", model);
  t.set_meta("transmission", transmission);
  t.set_meta("sweep_variable", variable);
  return t;
}

// Appends a skipped row: the sweep value, NaN elsewhere.
void skip(SweepTable& t, double x, const Error& e) {
  SweepRow r;
  r.cells.assign(t.columns.size(), kNaN);
  r.cells[0] = x;
  r.note = clean_note(std::string("skipped: ") + e.what());
  t.warnings.push_back(t.columns[0] + "=" + format_number(x) + " " + e.what());
  t.rows.push_back(std::move(r));
}

void finish_table(SweepTable& t) { t.set_meta("partial", t.partial() ? "true" : "false"); }

const std::vector<std::string> kSimColumns = {"sim_mean", "sim_std_error", "sim_ci_low", "sim_ci_high"};

void add_sim_columns(SweepTable& t, const std::optional<Oracle>& oracle) {
  if (!oracle) return;
  t.columns.insert(t.columns.end(), kSimColumns.begin(), kSimColumns.end());
  t.set_meta("oracle", "sim");
  t.set_meta("sim_seed", std::to_string(oracle->cfg.seed));
  t.set_meta("sim_tagged", std::to_string(oracle->cfg.measurement_window));
  t.set_meta("sim_replications", std::to_string(oracle->cfg.replications));
}

void append_sim(std::vector<double>& cells, const std::optional<Oracle>& oracle,
                const QueueSpec& model, const TransmissionSpec& transmission) {
  if (!oracle) return;
  const auto e = sim::estimate_r0(model, transmission, oracle->cfg);
  cells.insert(cells.end(), {e.mean, e.std_error, e.ci_low, e.ci_high});
}

std::string exp_label(double alpha) { return "exponential(alpha=" + format_number(alpha) + ")"; }

}  // namespace

bool operator==(const SweepRow& a, const SweepRow& b) {
  return a.kind == b.kind && a.note == b.note && a.cells.size() == b.cells.size() &&
         std::equal(a.cells.begin(), a.cells.end(), b.cells.begin(), same_number);
}

bool operator==(const SweepTable& a, const SweepTable& b) {
  return a.columns == b.columns && a.rows == b.rows && a.metadata == b.metadata;
}

std::optional<std::string> SweepTable::meta(const std::string& key) const {
  for (const auto& [k, v] : metadata)
    if (k == key) return v;
  return std::nullopt;
}

void SweepTable::set_meta(const std::string& key, const std::string& value) {
  for (auto& [k, v] : metadata) {
    if (k == key) {
      v = value;
      return;
    }
  }
  metadata.emplace_back(key, value);
}

std::size_t SweepTable::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw Error(ErrorKind::BadRange, "column " + name);
  return static_cast<std::size_t>(it - columns.begin());
}

bool SweepTable::partial() const {
  return std::any_of(rows.begin(), rows.end(),
                     [](const SweepRow& r) { return r.note.rfind("skipped", 0) == 0; });
}

void SweepTable::check() const {
  if (columns.empty()) throw Error(ErrorKind::BadRange, "no columns");
  std::optional<double> prev;
  int direction = 0;
  for (const auto& r : rows) {
    if (r.cells.size() != columns.size()) throw Error(ErrorKind::BadRange, "ragged row");
    if (r.kind != "row") continue;
    const double x = r.cells[0];
    if (prev) {
      const int d = x > *prev ? 1 : (x < *prev ? -1 : 0);
      if (d == 0 || (direction != 0 && d != direction))
        throw Error(ErrorKind::BadRange, "sweep variable not strictly monotone");
      direction = d;
    }
    prev = x;
  }
}

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  if (x == std::trunc(x) && std::abs(x) < 1e15) {
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, static_cast<long long>(x));
    return std::string(x == 0.0 && std::signbit(x) ? "-" : "") + std::string(buf, ptr);
  }
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

void write_csv(std::ostream& os, const SweepTable& table) {
  os << kCsvHeader << '\n';
  for (const auto& [k, v] : table.metadata) os << "# " << k << '=' << v << '\n';
  os << "kind";
  for (const auto& c : table.columns) os << ',' << c;
  os << ",note\n";
  for (const auto& r : table.rows) {
    os << r.kind;
    for (double x : r.cells) os << ',' << format_number(x);
    os << ',' << clean_note(r.note) << '\n';
  }
}

SweepTable read_csv(std::istream& is) {
  SweepTable t;
  std::string line;
  if (!std::getline(is, line) || line != kCsvHeader) throw Error(ErrorKind::BadRange, "csv header");
  bool have_columns = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw Error(ErrorKind::BadRange, "metadata line");
      t.metadata.emplace_back(line.substr(2, eq - 2), line.substr(eq + 1));
      continue;
    }
    auto fields = split(line, ',');
    if (!have_columns) {
      if (fields.size() < 2 || fields.front() != "kind" || fields.back() != "note")
        throw Error(ErrorKind::BadRange, "csv columns");
      t.columns.assign(fields.begin() + 1, fields.end() - 1);
      have_columns = true;
      continue;
    }
    if (fields.size() != t.columns.size() + 2) throw Error(ErrorKind::BadRange, "csv row width");
    SweepRow r;
    r.kind = fields.front();
    r.note = fields.back();
    for (std::size_t i = 1; i + 1 < fields.size(); ++i) r.cells.push_back(parse_number(fields[i]));
    t.rows.push_back(std::move(r));
  }
  if (!have_columns) throw Error(ErrorKind::BadRange, "csv columns");
  return t;
}

void write_json(std::ostream& os, const SweepTable& table) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["format"] = "r0sys sweep v1";
  ordered_json meta = ordered_json::object();
  for (const auto& [k, v] : table.metadata) meta[k] = v;
  j["metadata"] = meta;
  j["columns"] = table.columns;
  ordered_json rows = ordered_json::array();
  for (const auto& r : table.rows) {
    ordered_json row;
    row["kind"] = r.kind;
    ordered_json values = ordered_json::array();
    for (double x : r.cells) {
      if (std::isfinite(x)) values.push_back(x);
      else values.push_back(format_number(x));
    }
    row["values"] = values;
    row["note"] = r.note;
    rows.push_back(row);
  }
  j["rows"] = rows;
  j["warnings"] = table.warnings;
  os << j.dump(2) << '\n';
}

SweepTable occupancy_sweep(double lambda, double mu, int c, double alpha,
                           const std::vector<int>& k_grid, const std::optional<Oracle>& oracle) {
  if (k_grid.empty()) throw Error(ErrorKind::BadRange, "empty k grid");
  SweepTable t = make_table({"k", "K", "r0_sys", "loss_probability"}, "mmck", exp_label(alpha), "k");
  t.set_meta("lambda", format_number(lambda));
  t.set_meta("mu", format_number(mu));
  t.set_meta("c", std::to_string(c));
  add_sim_columns(t, oracle);
  for (int k : k_grid) {
    try {
      const auto r = analytic::mmck_r0(lambda, mu, c, k, alpha);
      std::vector<double> cells{double(k), double(k - c), r.r0_sys,
                                analytic::mmck_loss_probability(lambda, mu, c, k)};
      append_sim(cells, oracle, MMCK{lambda, mu, c, k}, Exponential{alpha});
      t.rows.push_back({"row", std::move(cells), ""});
    } catch (const Error& e) {
      skip(t, k, e);
    }
  }
  try {
    const auto r = analytic::mmc_r0(lambda, mu, c, alpha);
    std::vector<double> cells{kInf, kInf, r.r0_sys, 0.0};
    append_sim(cells, oracle, MMC{lambda, mu, c}, Exponential{alpha});
    t.rows.push_back({"reference", std::move(cells), "K=inf"});
  } catch (const Error& e) {
    t.warnings.push_back(std::string("K=inf reference ") + e.what());
  }
  finish_table(t);
  return t;
}

SweepTable windows_sweep(double lambda_h, double lambda_l, double mu, double alpha,
                         const std::vector<double>& f_grid, const std::optional<Oracle>& oracle) {
  if (f_grid.empty()) throw Error(ErrorKind::BadRange, "empty f grid");
  SweepTable t = make_table({"f", "r0_h", "r0_l", "r0_sys"}, "windows", exp_label(alpha), "f");
  t.set_meta("lambda_h", format_number(lambda_h));
  t.set_meta("lambda_l", format_number(lambda_l));
  t.set_meta("mu", format_number(mu));
  add_sim_columns(t, oracle);
  for (double f : f_grid) {
    try {
      const auto r = analytic::windows_r0(lambda_h, lambda_l, mu, alpha, f);
      std::vector<double> cells{f, *r.r0_h, *r.r0_l, r.r0_sys};
      append_sim(cells, oracle, Windows{lambda_h, lambda_l, mu, f}, Exponential{alpha});
      t.rows.push_back({"row", std::move(cells), ""});
    } catch (const Error& e) {
      skip(t, f, e);
    }
  }
  try {
    const auto p = markov::priority_r0(lambda_h, lambda_l, mu, alpha);
    std::vector<double> cells{kNaN, *p.r0_h, *p.r0_l, p.r0_sys};
    append_sim(cells, oracle, PriorityMM1{lambda_h, lambda_l, mu}, Exponential{alpha});
    t.rows.push_back({"reference", std::move(cells), "priority"});
  } catch (const Error& e) {
    t.warnings.push_back(std::string("priority reference ") + e.what());
  }
  try {
    const auto fcfs = analytic::mm1_r0(lambda_h + lambda_l, mu, alpha);
    const double q_h = lambda_h / (lambda_h + lambda_l);
    std::vector<double> cells{kNaN, q_h * fcfs.r0_sys, (1.0 - q_h) * fcfs.r0_sys, fcfs.r0_sys};
    append_sim(cells, oracle, MM1{lambda_h + lambda_l, mu}, Exponential{alpha});
    t.rows.push_back({"reference", std::move(cells), "fcfs"});
  } catch (const Error& e) {
    t.warnings.push_back(std::string("fcfs reference ") + e.what());
  }
  finish_table(t);
  return t;
}

double max_lambda_scale(double lambda, double mu, double alpha, double k_mu) {
  require_valid(QueueSpec{MM1{lambda, mu}});
  if (!(k_mu > 0.0) || !std::isfinite(k_mu)) throw Error(ErrorKind::BadRange, "k_mu");
  const double mu2 = k_mu * mu;
  require_valid(QueueSpec{MM1{lambda, mu2}});
  const double target = lambda * analytic::mm1_r0(lambda, mu, alpha).r0_sys;
  if (!(target > 0.0)) throw Error(ErrorKind::NoRoot, "baseline risk is zero");
  auto residual = [&](double k) {
    return k * lambda * analytic::mm1_r0(k * lambda, mu2, alpha).r0_sys - target;
  };
  // k*lambda*R0 increases from 0 to infinity on (0, mu2/lambda).
  double lo = 0.0, hi = mu2 / lambda;
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < 2000; ++it) {
    mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double g = residual(mid);
    if (std::abs(g) < kRiskResidual * 1e-3) break;
    (g < 0.0 ? lo : hi) = mid;
  }
  if (!(std::abs(residual(mid)) < kRiskResidual)) throw Error(ErrorKind::NoRoot, "risk residual");
  return mid;
}

SweepTable service_rate_sweep(double lambda, double mu, double alpha,
                              const std::vector<double>& scale_grid,
                              const std::optional<Oracle>& oracle) {
  if (scale_grid.empty()) throw Error(ErrorKind::BadRange, "empty scale grid");
  SweepTable t = make_table({"k_mu", "r0_sys", "lambda_r0", "k_lambda_max"}, "mm1", exp_label(alpha),
                            "k_mu");
  t.set_meta("lambda", format_number(lambda));
  t.set_meta("mu", format_number(mu));
  add_sim_columns(t, oracle);
  for (double s : scale_grid) {
    try {
      const auto r = analytic::mm1_r0(lambda, s * mu, alpha);
      double k_max = kNaN;
      try {
        k_max = max_lambda_scale(lambda, mu, alpha, s);
      } catch (const Error& e) {
        t.warnings.push_back("k_mu=" + format_number(s) + " k_lambda_max " + e.what());
      }
      std::vector<double> cells{s, r.r0_sys, lambda * r.r0_sys, k_max};
      append_sim(cells, oracle, MM1{lambda, s * mu}, Exponential{alpha});
      t.rows.push_back({"row", std::move(cells), ""});
    } catch (const Error& e) {
      skip(t, s, e);
    }
  }
  finish_table(t);
  return t;
}

std::vector<double> parse_grid(const std::string& text, double step) {
  std::vector<double> out;
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const double a = parse_number(text.substr(0, dots));
    const double b = parse_number(text.substr(dots + 2));
    if (!(step > 0.0) || !std::isfinite(step)) throw Error(ErrorKind::BadRange, "step");
    const double slack = 1e-9 * step;
    for (long i = 0;; ++i) {
      const double x = a + i * step;
      if (x > b + slack) break;
      out.push_back(std::min(x, std::max(a, b)));
      if (i > 10'000'000) throw Error(ErrorKind::BadRange, "grid too large");
    }
  } else {
    for (const auto& part : split(text, ',')) {
      if (!part.empty()) out.push_back(parse_number(part));
    }
  }
  if (out.empty()) throw Error(ErrorKind::BadRange, "empty grid");
  return out;
}

std::vector<int> parse_int_grid(const std::string& text, int step) {
  std::vector<int> out;
  for (double x : parse_grid(text, step)) {
    const double r = std::round(x);
    if (std::abs(r - x) > 1e-9) throw Error(ErrorKind::BadRange, "integer grid");
    out.push_back(static_cast<int>(r));
  }
  return out;
}

}  // namespace r0sys::interventions
