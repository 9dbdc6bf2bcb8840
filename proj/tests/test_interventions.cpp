#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "r0sys/analytic.hpp"
#include "r0sys/interventions.hpp"
#include "r0sys/markov.hpp"

using namespace r0sys;
using namespace r0sys::interventions;
using doctest::Approx;

namespace {

std::vector<const SweepRow*> data_rows(const SweepTable& t) {
  std::vector<const SweepRow*> out;
  for (const auto& r : t.rows)
    if (r.kind == "row" && r.note.empty()) out.push_back(&r);
  return out;
}

const SweepRow& reference(const SweepTable& t, const std::string& label) {
  for (const auto& r : t.rows)
    if (r.kind == "reference" && r.note == label) return r;
  throw std::runtime_error("missing reference " + label);
}

}  // namespace

TEST_CASE("number formatting round-trips") {
  CHECK(format_number(12) == "12");
  CHECK(format_number(-0.0) == "-0");
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(1e5) == "100000");
  CHECK(format_number(std::numeric_limits<double>::quiet_NaN()) == "nan");
  CHECK(format_number(-std::numeric_limits<double>::infinity()) == "-inf");
  for (double x : {1.0 / 3, 2.0 / 3 * 1e-300, 1.7976931348623157e308, 6.02e23, -123.456})
    CHECK(std::stod(format_number(x)) == x);
}

TEST_CASE("grid parsing") {
  CHECK(parse_grid("0.3..0.7", 0.1).size() == 5);
  CHECK(parse_grid("0.3..0.7", 0.1).back() == Approx(0.7));
  CHECK(parse_grid("1, 2.5,4", 0).size() == 3);
  CHECK(parse_int_grid("2..12") == std::vector<int>{2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  CHECK(parse_int_grid("2..12", 5) == std::vector<int>{2, 7, 12});
  CHECK_THROWS_AS(parse_grid("5..1", 1), Error);
  CHECK_THROWS_AS(parse_grid("", 1), Error);
  CHECK_THROWS_AS(parse_grid("1..2", 0), Error);
  CHECK_THROWS_AS(parse_grid("a,b", 1), Error);
  CHECK_THROWS_AS(parse_int_grid("1.5"), Error);
}

TEST_CASE("CSV round trip preserves every cell") {
  const auto t = windows_sweep(1.5, 1.5, 4, 0.5, parse_grid("0.3..0.7", 0.05));
  std::stringstream ss;
  write_csv(ss, t);
  const std::string text = ss.str();
  CHECK(text.rfind("# r0sys sweep v1", 0) == 0);
  const auto back = read_csv(ss);
  CHECK(back == t);
  std::stringstream again;
  write_csv(again, back);
  CHECK(again.str() == text);

  const auto occ = occupancy_sweep(5, 25.0 / 9, 2, 1.0 / 30, parse_int_grid("2..30"));
  std::stringstream s2;
  write_csv(s2, occ);
  CHECK(read_csv(s2) == occ);

  std::istringstream bad("not a sweep\n");
  CHECK_THROWS_AS(read_csv(bad), Error);
}

TEST_CASE("JSON output carries metadata and rows") {
  const auto t = occupancy_sweep(5, 25.0 / 9, 2, 1.0 / 30, {2, 12});
  std::ostringstream os;
  write_json(os, t);
  const std::string s = os.str();
  CHECK(s.find("\"columns\"") != std::string::npos);
  CHECK(s.find("\"partial\"") != std::string::npos);
  CHECK(s.find("K=inf") != std::string::npos);
}

TEST_CASE("table checks") {
  SweepTable t;
  t.columns = {"x", "y"};
  t.rows = {{"row", {1, 2}, ""}, {"row", {2, 3}, ""}};
  CHECK_NOTHROW(t.check());
  t.rows.push_back({"row", {2, 4}, ""});
  CHECK_THROWS_AS(t.check(), Error);
  t.rows.back() = {"row", {3}, ""};
  CHECK_THROWS_AS(t.check(), Error);
  t.rows.back() = {"reference", {0, 0}, "ref"};
  CHECK_NOTHROW(t.check());
}

TEST_CASE("finite buffers: monotone in capacity, bounded by the unlimited queue") {
  const auto t = occupancy_sweep(5, 25.0 / 9, 2, 1.0 / 30, parse_int_grid("2..60"));
  t.check();
  CHECK_FALSE(t.partial());
  CHECK(t.meta("partial") == "false");
  const auto rows = data_rows(t);
  REQUIRE(rows.size() == 59);
  const std::size_t r0 = t.column("r0_sys"), loss = t.column("loss_probability");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i]->cells[r0] >= rows[i - 1]->cells[r0]);
    CHECK(rows[i]->cells[loss] <= rows[i - 1]->cells[loss]);
  }
  const double limit = reference(t, "K=inf").cells[r0];
  CHECK(limit == Approx(analytic::mmc_r0(5, 25.0 / 9, 2, 1.0 / 30).r0_sys));
  for (const auto* r : rows) CHECK(r->cells[r0] <= limit + 1e-12);
  // A single server with no waiting room never hosts two customers.
  const auto one = occupancy_sweep(0.5, 1, 1, 0.8, {1});
  CHECK(data_rows(one)[0]->cells[one.column("r0_sys")] == 0.0);
}

TEST_CASE("windows: symmetric, minimized at equal split, dominated by priority") {
  const auto grid = parse_grid("0.38..0.62", 0.01);
  const auto t = windows_sweep(1.5, 1.5, 4, 0.5, grid);
  const auto rows = data_rows(t);
  REQUIRE(rows.size() == grid.size());
  const std::size_t sys = t.column("r0_sys"), h = t.column("r0_h"), l = t.column("r0_l");
  double best = 1e300, best_f = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& a = rows[i]->cells;
    const auto& b = rows[rows.size() - 1 - i]->cells;
    CHECK(a[sys] == Approx(b[sys]).epsilon(1e-9));
    CHECK(a[h] == Approx(b[l]).epsilon(1e-9));
    if (a[sys] < best) best = a[sys], best_f = a[0];
  }
  CHECK(best_f == Approx(0.5));
  const auto& fcfs = reference(t, "fcfs").cells;
  CHECK(best == Approx(fcfs[sys]).epsilon(1e-12));
  const auto& prio = reference(t, "priority").cells;
  for (const auto* r : rows) CHECK((r->cells[h] > prio[h] || r->cells[l] > prio[l]));
}

TEST_CASE("windows: unstable splits are skipped and flagged") {
  const auto t = windows_sweep(1.5, 1.5, 4, 0.5, {0.2, 0.5, 0.8});
  CHECK(t.partial());
  CHECK(t.meta("partial") == "true");
  int skipped = 0;
  for (const auto& r : t.rows)
    if (r.note.rfind("skipped:", 0) == 0) {
      ++skipped;
      CHECK(std::isnan(r.cells[t.column("r0_sys")]));
    }
  CHECK(skipped == 2);
  CHECK(t.warnings.size() >= 2);
}

TEST_CASE("faster service") {
  const auto t = service_rate_sweep(3, 4, 0.5, parse_grid("1..3", 0.25));
  const auto rows = data_rows(t);
  const std::size_t r0 = t.column("r0_sys"), kmax = t.column("k_lambda_max");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i]->cells[r0] < rows[i - 1]->cells[r0]);
    CHECK(rows[i]->cells[kmax] > rows[i - 1]->cells[kmax]);
  }
  CHECK(rows[0]->cells[kmax] == Approx(1.0).epsilon(1e-9));
}

TEST_CASE("largest admissible arrival scale") {
  const double lambda = 3, mu = 4, alpha = 0.5;
  const double target = lambda * analytic::mm1_r0(lambda, mu, alpha).r0_sys;
  CHECK(max_lambda_scale(lambda, mu, alpha, 1.0) == Approx(1.0).epsilon(1e-9));
  const double k = max_lambda_scale(lambda, mu, alpha, 2.0);
  CHECK(std::abs(k * lambda * analytic::mm1_r0(k * lambda, 2 * mu, alpha).r0_sys - target) < kRiskResidual);
  CHECK(k > 1.0);
  CHECK(k < 2.0);

  // Independent grid scan for the crossing.
  double scan = 0.0;
  for (int i = 1; i < 200000; ++i) {
    const double x = 8.0 / 3 * i / 200000;
    if (x * lambda * analytic::mm1_r0(x * lambda, 2 * mu, alpha).r0_sys > target) break;
    scan = x;
  }
  CHECK(k == Approx(scan).epsilon(1e-4));
  CHECK_THROWS_AS(max_lambda_scale(lambda, mu, 0.0, 2.0), Error);
}
