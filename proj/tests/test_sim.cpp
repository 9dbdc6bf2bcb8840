#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <sstream>

#include "r0sys/analytic.hpp"
#include "r0sys/markov.hpp"
#include "r0sys/rng.hpp"
#include "r0sys/sim.hpp"

using namespace r0sys;
using namespace r0sys::sim;
using doctest::Approx;

namespace {

SimConfig small(std::uint64_t tagged = 20000, int reps = 1) {
  SimConfig cfg;
  cfg.measurement_window = tagged;
  cfg.replications = reps;
  return cfg;
}

bool within(const SimEstimate& e, double truth, double k = 4.0) {
  return std::abs(e.mean - truth) <= k * e.std_error + 1e-12;
}

}  // namespace

TEST_CASE("counter-based streams") {
  rng::Stream a(1, 0, rng::StreamKind::Service, 7);
  rng::Stream b(1, 0, rng::StreamKind::Service, 7);
  rng::Stream c(1, 0, rng::StreamKind::Service, 8);
  CHECK(a.at(3) == b.at(3));
  CHECK(a.at(3) != c.at(3));
  CHECK(a.uniform_at(0) > 0.0);
  CHECK(a.uniform_at(0) < 1.0);
  double sum = 0.0;
  for (int n = 0; n < 100000; ++n) sum += a.exponential_at(n, 2.0);
  CHECK(sum / 100000 == Approx(0.5).epsilon(0.02));
}

TEST_CASE("config validation") {
  SimConfig cfg;
  cfg.replications = 0;
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = SimConfig{};
  cfg.batches = 1;
  CHECK_THROWS_AS(validate(cfg), Error);
  cfg = SimConfig{};
  cfg.ci_level = 1.0;
  CHECK_THROWS_AS(validate(cfg), Error);
  CHECK_NOTHROW(validate(SimConfig{}));
}

TEST_CASE("results do not depend on the number of worker threads") {
  const auto cfg = small(20000, 4);
  setenv("R0SYS_THREADS", "1", 1);
  const auto one = estimate_r0(MM1{3, 4}, Exponential{0.5}, cfg);
  setenv("R0SYS_THREADS", "4", 1);
  const auto four = estimate_r0(MM1{3, 4}, Exponential{0.5}, cfg);
  unsetenv("R0SYS_THREADS");
  CHECK(one.mean == four.mean);
  CHECK(one.std_error == four.std_error);
  CHECK(one.n_samples == four.n_samples);

  const auto again = estimate_r0(MM1{3, 4}, Exponential{0.5}, cfg);
  CHECK(again.mean == one.mean);
  auto other = cfg;
  other.seed = 2;
  CHECK(estimate_r0(MM1{3, 4}, Exponential{0.5}, other).mean != one.mean);
}

TEST_CASE("zero transmission rate gives zero") {
  const auto cfg = small(5000);
  for (const QueueSpec& q : {QueueSpec{MM1{3, 4}}, QueueSpec{MMC{5, 25.0 / 9, 2}},
                             QueueSpec{PriorityMM1{1, 2, 4}}, QueueSpec{DmDm1{1, 2, 4}}}) {
    const auto e = estimate_r0(q, Exponential{0.0}, cfg);
    CHECK(e.mean == 0.0);
    CHECK(e.std_error == 0.0);
  }
  CHECK(estimate_multi_infector_rate(MM1{3, 4}, 0.5, 0.0, cfg).mean == 0.0);
}

TEST_CASE("FCFS trace bookkeeping") {
  const auto cfg = small(3000);
  const auto tr = simulate_trace(MM1{3, 4}, cfg, 0, 3000);
  CHECK(tr.tagged_count == 3000);
  CHECK(tr.first_tagged >= cfg.warmup_arrivals);
  CHECK(tr.single_fcfs);
  double prev_departure = 0.0;
  for (std::size_t i = 0; i < tr.customers.size(); ++i) {
    const auto& c = tr.customers[i];
    CHECK(c.id == i);
    if (i > 0) CHECK(c.arrival >= tr.customers[i - 1].arrival);
    if (c.departure == kNever) continue;
    CHECK(c.service_start == Approx(std::max(c.arrival, prev_departure)).epsilon(1e-15));
    CHECK(c.departure > c.service_start);
    prev_departure = c.departure;
  }
  // "seen" counts customers still present at each arrival.
  for (std::size_t i = tr.first_tagged; i < tr.first_tagged + 200; ++i) {
    int present = 0;
    for (std::size_t j = 0; j < i; ++j) present += tr.customers[j].departure > tr.customers[i].arrival;
    CHECK(tr.customers[i].seen == present);
  }
  for (std::size_t i = tr.first_tagged; i < tr.first_tagged + tr.tagged_count; ++i)
    CHECK(tr.customers[i].departure <= tr.horizon);
}

TEST_CASE("queue positions step down to service") {
  const auto tr = simulate_trace(MM1{3, 4}, small(2000), 0, 2000);
  for (std::size_t i = tr.first_tagged; i < tr.first_tagged + 300; ++i) {
    const auto steps = position_history(tr, i);
    const auto& c = tr.customers[i];
    REQUIRE(!steps.empty());
    CHECK(steps.front().first == c.arrival);
    CHECK(steps.front().second == c.seen + 1);
    CHECK(steps.back().second == 1);
    CHECK(steps.back().first == c.service_start);
    for (std::size_t k = 1; k < steps.size(); ++k) {
      CHECK(steps[k].second == steps[k - 1].second - 1);
      CHECK(steps[k].first >= steps[k - 1].first);
    }
  }
  const auto multi = simulate_trace(MMC{5, 25.0 / 9, 2}, small(2000), 0, 2000);
  CHECK_THROWS_AS(position_history(multi, multi.first_tagged), Error);
}

TEST_CASE("blocking in finite buffers") {
  const auto tr = simulate_trace(MMCK{5, 25.0 / 9, 2, 3}, small(5000), 0, 5000);
  for (const auto& c : tr.customers) {
    if (c.blocked) {
      CHECK(c.seen == 3);
      CHECK(c.service_start == kNever);
    } else {
      CHECK(c.seen < 3);
    }
  }
}

TEST_CASE("priority traces preempt low-class service") {
  const auto tr = simulate_trace(PriorityMM1{1, 2, 4}, small(5000), 0, 5000);
  int preempted = 0;
  for (const auto& c : tr.customers) {
    if (c.cls == 0) CHECK(c.preemptions == 0);
    preempted += c.preemptions > 0;
  }
  CHECK(preempted > 0);
  CHECK_THROWS_AS(simulate_trace(Windows{1.5, 1.5, 4, 0.5}, small(), 0, 10), Error);
}

TEST_CASE("arrivals see time averages") {
  // Thinned arrival-epoch occupancy against the geometric law, chi-square.
  const double rho = 0.75;
  const auto tr = simulate_trace(MM1{3, 4}, small(1'000'000), 0, 1'000'000);
  const int bins = 11;
  std::vector<double> observed(bins, 0.0);
  int n = 0;
  for (std::size_t i = tr.first_tagged; i < tr.first_tagged + tr.tagged_count; i += 500, ++n)
    observed[std::min(tr.customers[i].seen, bins - 1)] += 1;
  double chi2 = 0.0;
  for (int b = 0; b < bins; ++b) {
    const double p = b < bins - 1 ? (1 - rho) * std::pow(rho, b) : std::pow(rho, bins - 1);
    chi2 += std::pow(observed[b] - n * p, 2) / (n * p);
  }
  INFO("chi2=" << chi2 << " n=" << n);
  CHECK(chi2 < 29.59);  // 0.999 quantile, 10 degrees of freedom
}

TEST_CASE("estimators agree with each other and with closed forms") {
  const auto cfg = small(50000);
  auto bern = cfg;
  bern.estimator = Estimator::Bernoulli;
  const auto a = estimate_r0(MM1{3, 4}, Exponential{0.5}, cfg);
  const auto b = estimate_r0(MM1{3, 4}, Exponential{0.5}, bern);
  CHECK(std::abs(a.mean - b.mean) < 4 * std::hypot(a.std_error, b.std_error));
  CHECK(within(a, 2.0));
  CHECK(within(b, 2.0));
  CHECK(a.ci_low < a.mean);
  CHECK(a.ci_high > a.mean);
  CHECK(a.n_samples == 50000);

  CHECK(within(estimate_r0(MMCK{5, 25.0 / 9, 2, 12}, Exponential{1.0 / 30}, cfg),
               analytic::mmck_r0(5, 25.0 / 9, 2, 12, 1.0 / 30).r0_sys));
  CHECK(within(estimate_r0(MM1{3, 4}, DistanceThreshold{0.5, 2}, cfg),
               analytic::distance_r0_mm1(3, 4, 0.5, 2).r0_sys));
  const auto mix = mask_mixture(0.5, 0.1, 0.25, 0.3, 0.5);
  CHECK(within(estimate_r0(MM1{3, 4}, mix, cfg), analytic::evaluate(MM1{3, 4}, mix).r0_sys));
  const auto snake = snake_queue_rates(4, 3, 6, 18);
  CHECK(within(estimate_r0(MM1{3, 4}, snake, cfg), analytic::position_r0_mm1(3, 4, snake).r0_sys));
  CHECK_THROWS_AS(estimate_r0(MMC{5, 25.0 / 9, 2}, snake, cfg), Error);
}

TEST_CASE("windows simulation") {
  const auto cfg = small(40000);
  const auto e = estimate_r0(Windows{1.5, 1.5, 4, 0.5}, Exponential{0.5}, cfg);
  CHECK(within(e, analytic::windows_r0(1.5, 1.5, 4, 0.5, 0.5).r0_sys));
}

TEST_CASE("batch arrivals are deterministic") {
  const auto cfg = small(3000);
  const auto e = estimate_r0(DmDm1{1, 2, 4}, Exponential{1}, cfg);
  CHECK(e.mean == Approx(3 * (1 - std::exp(-0.5))).epsilon(1e-12));
  const auto occ = estimate_occupancy_metrics(DmDm1{1, 2, 4}, cfg);
  CHECK(occ.second_factorial.mean == Approx(analytic::dmdm1_second_factorial(1, 2, 4)).epsilon(1e-9));
  CHECK(occ.mean_n.mean == Approx(2.0).epsilon(1e-9));
}

TEST_CASE("occupancy metrics") {
  const auto cfg = small(100000);
  const auto m = estimate_occupancy_metrics(MM1{3, 4}, cfg);
  CHECK(within(m.mean_n, 3.0));
  CHECK(within(m.second_factorial, 2 * 0.75 * 0.75 / (0.25 * 0.25)));
  CHECK(m.loss_probability.mean == 0.0);
  const auto k = estimate_occupancy_metrics(MMCK{5, 25.0 / 9, 2, 12}, cfg);
  CHECK(within(k.loss_probability, analytic::mmck_loss_probability(5, 25.0 / 9, 2, 12)));
}

TEST_CASE("class-resolved priority estimates") {
  const auto cfg = small(100000);
  const auto e = estimate_r0_by_class(PriorityMM1{1.5, 1.5, 4}, 0.5, cfg);
  const auto c = markov::priority_components(1.5, 1.5, 4, 0.5);
  CHECK(within(e.hbh, c.r0_hbh));
  CHECK(within(e.hbl, c.r0_hbl));
  CHECK(within(e.lbh, c.r0_lbh));
  CHECK(within(e.lbl, c.r0_lbl));
  CHECK(within(e.lah, c.r0_lah));
  CHECK(within(e.r0_h, 0.375));
  CHECK(within(e.r0_sys, markov::priority_r0(1.5, 1.5, 4, 0.5).r0_sys));
  // Every infection is counted once from each side of the pair.
  CHECK(std::abs(e.before.mean - e.after.mean) < 4 * std::hypot(e.before.std_error, e.after.std_error));
  CHECK(e.before.mean + e.after.mean == Approx(e.r0_sys.mean).epsilon(1e-9));
}

TEST_CASE("multi-infector rate at small p") {
  const auto cfg = small(100000);
  const double p = 1e-3;
  const auto e = estimate_multi_infector_rate(MM1{3, 4}, 0.5, p, cfg);
  CHECK(within(e, infection_rate(2.0, 3.0, p)));
  CHECK_THROWS_AS(estimate_multi_infector_rate(MM1{3, 4}, 0.5, 1.5, cfg), Error);
}

TEST_CASE("trace output") {
  const auto tr = simulate_trace(MM1{3, 4}, small(100), 0, 100);
  std::ostringstream os;
  write_trace(os, tr);
  const std::string s = os.str();
  CHECK(s.rfind("# r0sys-trace v1 model=mm1", 0) == 0);
  std::size_t lines = 0;
  for (char ch : s) lines += ch == '\n';
  CHECK(lines == tr.customers.size() + 2);
}
