#pragma once

// Intervention studies as parameter sweeps, plus the tabular carrier they
// emit (CSV and JSON).

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "r0sys/core.hpp"
#include "r0sys/sim.hpp"

namespace r0sys::interventions {

struct SweepRow {
  std::string kind = "row";  // "row" or "reference"
  std::vector<double> cells;
  std::string note;  // skip reason or reference label

  friend bool operator==(const SweepRow&, const SweepRow&);
};

struct SweepTable {
  std::vector<std::string> columns;  // numeric columns, sweep variable first
  std::vector<SweepRow> rows;
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<std::string> warnings;

  std::optional<std::string> meta(const std::string& key) const;
  void set_meta(const std::string& key, const std::string& value);
  std::size_t column(const std::string& name) const;
  bool partial() const;

  /// Throws BadRange unless rectangular with a strictly monotone sweep
  /// variable across "row" rows.
  void check() const;

  friend bool operator==(const SweepTable&, const SweepTable&);
};

/// Shortest decimal string that parses back to the same double.
std::string format_number(double x);

void write_csv(std::ostream& os, const SweepTable& table);
SweepTable read_csv(std::istream& is);
void write_json(std::ostream& os, const SweepTable& table);

/// Re-estimates each row by simulation and appends sim_* columns.
struct Oracle {
  sim::SimConfig cfg;
};

SweepTable occupancy_sweep(double lambda, double mu, int c, double alpha,
                           const std::vector<int>& k_grid,
                           const std::optional<Oracle>& oracle = std::nullopt);

SweepTable windows_sweep(double lambda_h, double lambda_l, double mu, double alpha,
                         const std::vector<double>& f_grid,
                         const std::optional<Oracle>& oracle = std::nullopt);

SweepTable service_rate_sweep(double lambda, double mu, double alpha,
                              const std::vector<double>& scale_grid,
                              const std::optional<Oracle>& oracle = std::nullopt);

/// Largest arrival-rate factor k with k*lambda*R0(k*lambda, k_mu*mu) equal
/// to the baseline lambda*R0(lambda, mu); bisection to a 1e-9 residual.
double max_lambda_scale(double lambda, double mu, double alpha, double k_mu);

inline constexpr double kRiskResidual = 1e-9;

/// "a..b" with step, or a comma list. Empty results throw BadRange.
std::vector<double> parse_grid(const std::string& text, double step);
std::vector<int> parse_int_grid(const std::string& text, int step = 1);

}  // namespace r0sys::interventions
