#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "r0sys/analytic.hpp"
#include "r0sys/markov.hpp"

using namespace r0sys;
using namespace r0sys::markov;
using doctest::Approx;

namespace {

// Time for n jobs to clear while high-class jobs keep arriving ahead of them.
double clearing_time(int n, double lambda_h, double mu, std::mt19937_64& gen) {
  std::exponential_distribution<double> step(lambda_h + mu);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double t = 0.0;
  while (n > 0) {
    t += step(gen);
    n += u(gen) < lambda_h / (lambda_h + mu) ? 1 : -1;
  }
  return t;
}

// Dense generator of the lattice with blocking, solved independently.
Eigen::VectorXd dense_lattice(double lh, double ll, double mu, int H, int L) {
  const int n = (H + 1) * (L + 1);
  auto idx = [L](int h, int l) { return h * (L + 1) + l; };
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n, n);
  for (int h = 0; h <= H; ++h)
    for (int l = 0; l <= L; ++l) {
      const int s = idx(h, l);
      if (h < H) Q(s, idx(h + 1, l)) += lh;
      if (l < L) Q(s, idx(h, l + 1)) += ll;
      if (h > 0)
        Q(s, idx(h - 1, l)) += mu;
      else if (l > 0)
        Q(s, idx(h, l - 1)) += mu;
      Q(s, s) = -Q.row(s).sum();
    }
  return oracle::stationary(Q);
}

}  // namespace

TEST_CASE("fixed lattice matches a dense solve") {
  const int H = 12, L = 15;
  const auto pi = priority_steady_state_fixed(0.5, 1.2, 2.0, H, L);
  const auto ref = dense_lattice(0.5, 1.2, 2.0, H, L);
  REQUIRE(pi.states.size() == std::size_t((H + 1) * (L + 1)));
  double worst = 0.0;
  for (std::size_t n = 0; n < pi.states.size(); ++n) {
    const auto [h, l] = pi.states[n];
    worst = std::max(worst, std::abs(pi.probs[n] + 0.0 - ref(h * (L + 1) + l) * (1 - pi.tail_mass)));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("steady state: marginals and mass") {
  const double lh = 1.0, ll = 2.0, mu = 4.0;
  const auto pi = priority_steady_state(lh, ll, mu);
  CHECK(pi.total() + pi.tail_mass == Approx(1.0).epsilon(1e-12));
  CHECK(pi.tail_occupancy < 1e-10);

  // High class alone is M/M/1 with rho_h; total occupancy is M/M/1 with rho.
  const double rho_h = lh / mu, rho = (lh + ll) / mu;
  double eh = 0.0, en = 0.0, p_h0 = 0.0;
  for (std::size_t n = 0; n < pi.states.size(); ++n) {
    eh += pi.states[n].h * pi.probs[n];
    en += (pi.states[n].h + pi.states[n].l) * pi.probs[n];
    if (pi.states[n].h == 0) p_h0 += pi.probs[n];
  }
  CHECK(eh == Approx(rho_h / (1 - rho_h)).epsilon(1e-8));
  CHECK(en == Approx(rho / (1 - rho)).epsilon(1e-8));
  CHECK(p_h0 == Approx(1 - rho_h).epsilon(1e-9));
}

TEST_CASE("no low-class arrivals leaves a geometric high marginal") {
  const auto pi = priority_steady_state(1.0, 0.0, 4.0);
  for (std::size_t n = 0; n < pi.states.size(); ++n) {
    if (pi.states[n].l > 0) CHECK(pi.probs[n] < 1e-15);
    if (pi.states[n].l == 0 && pi.states[n].h < 20)
      CHECK(pi.probs[n] == Approx(0.75 * std::pow(0.25, pi.states[n].h)).epsilon(1e-10));
  }
}

TEST_CASE("busy period transform") {
  CHECK(busy_period_lst(0.0, 1.0, 4.0) == Approx(1.0).epsilon(1e-15));
  CHECK(busy_period_lst(0.5, 0.0, 4.0) == Approx(4.0 / 4.5));
  CHECK(busy_period_lst(1e9, 1.0, 4.0) < 1e-8);
  CHECK(busy_period_lst(0.5, 1e-12, 4.0) == Approx(4.0 / 4.5).epsilon(1e-11));
  CHECK_THROWS_AS(busy_period_lst(0.5, 4.0, 4.0), Error);

  // Functional equation B(s) = mu / (mu + s + lambda - lambda B(s)).
  for (double a : {0.01, 0.3, 2.0})
    for (double lh : {0.1, 1.0, 3.5}) {
      const double b = busy_period_lst(a, lh, 4.0);
      CHECK(b == Approx(4.0 / (4.0 + a + lh - lh * b)).epsilon(1e-13));
    }

  std::mt19937_64 gen(11);
  double sum = 0.0;
  const int draws = 400000;
  for (int n = 0; n < draws; ++n) sum += std::exp(-0.7 * clearing_time(1, 1.5, 4.0, gen));
  CHECK(std::abs(sum / draws - busy_period_lst(0.7, 1.5, 4.0)) < 2e-3);
}

TEST_CASE("low-low overlap infection probability against Monte Carlo") {
  const double lh = 1.0, mu = 3.0, alpha = 0.4;
  std::mt19937_64 gen(12);
  std::exponential_distribution<double> theta(alpha);
  for (auto [h, i] : {std::pair{0, 1}, {2, 1}, {1, 3}}) {
    const int draws = 1'000'000;
    int hits = 0;
    for (int n = 0; n < draws; ++n) hits += theta(gen) < clearing_time(h + i, lh, mu, gen);
    const double p = double(hits) / draws;
    const double se = std::sqrt(p * (1 - p) / draws);
    CHECK(std::abs(ll_overlap_infection_prob(h, i, alpha, lh, mu) - p) < 4 * se);
  }
  // Increasing in h and in i.
  for (int h = 0; h < 5; ++h)
    for (int i = 1; i < 5; ++i) {
      const double v = ll_overlap_infection_prob(h, i, alpha, lh, mu);
      CHECK(ll_overlap_infection_prob(h + 1, i, alpha, lh, mu) > v);
      CHECK(ll_overlap_infection_prob(h, i + 1, alpha, lh, mu) > v);
    }
}

TEST_CASE("priority components: structure and conservation") {
  const double lh = 1.5, ll = 1.5, mu = 4.0, alpha = 0.5;
  const auto c = priority_components(lh, ll, mu, alpha);
  CHECK(c.r0_hbh == Approx(0.1).epsilon(1e-12));
  CHECK(c.r0_lbh == c.r0_hbh);
  CHECK(c.r0_hbl == Approx(0.45).epsilon(1e-9));
  CHECK(c.r0_lah == Approx(0.45).epsilon(1e-9));
  CHECK(c.r0_lbl == Approx(1.1320508).epsilon(1e-7));
  CHECK(c.truncation_error < 1e-10);
  // Pairs (low first, high later) counted from both ends.
  CHECK(lh * c.r0_hbl == Approx(ll * c.r0_lah).epsilon(1e-9));

  const auto r = priority_report(c, lh, ll);
  CHECK(r.r0_sys == Approx(1.7820508).epsilon(1e-7));
  CHECK(*r.r0_h == Approx(0.375).epsilon(1e-9));
  CHECK(*r.r0_l == Approx(1.4070508).epsilon(1e-7));
  CHECK(*r.r0_h + *r.r0_l == Approx(r.r0_sys).epsilon(1e-14));

  // Priority beats FCFS at the same total load.
  CHECK(r.r0_sys < analytic::mm1_r0(lh + ll, mu, alpha).r0_sys);
}

TEST_CASE("conservation of pairs across parameters") {
  for (auto [lh, ll, mu, alpha] : {std::tuple{0.5, 1.0, 2.0, 0.3}, {0.2, 0.5, 1.0, 2.0}, {1.5, 0.5, 3.0, 0.1}}) {
    const auto c = priority_components(lh, ll, mu, alpha);
    CHECK(lh * c.r0_hbl == Approx(ll * c.r0_lah).epsilon(1e-8));
    const auto r = priority_r0(lh, ll, mu, alpha);
    CHECK(r.r0_sys < analytic::mm1_r0(lh + ll, mu, alpha).r0_sys);
  }
}

TEST_CASE("reduction without low-class arrivals") {
  const auto r = priority_r0(3.0, 0.0, 4.0, 0.5);
  CHECK(r.r0_sys == Approx(analytic::mm1_r0(3.0, 4.0, 0.5).r0_sys).epsilon(1e-9));
  CHECK(*r.r0_l == Approx(0.0).epsilon(1e-12));
  CHECK(priority_r0(1, 2, 4, 0.0).r0_sys == 0.0);
}

TEST_CASE("lattice refinement is stable") {
  const auto pi = priority_steady_state(1, 2, 4);
  const auto a = priority_components(pi, 1, 2, 4, 0.5);
  int H = 0, L = 0;
  for (const auto& s : pi.states) H = std::max(H, s.h), L = std::max(L, s.l);
  const auto twice = priority_steady_state_fixed(1, 2, 4, 2 * H, 2 * L);
  const auto b = priority_components(twice, 1, 2, 4, 0.5);
  const double ra = priority_report(a, 1, 2).r0_sys, rb = priority_report(b, 1, 2).r0_sys;
  CHECK(std::abs(ra - rb) < 1e-9);
  CHECK(std::abs(ra - rb) <= a.truncation_error + 1e-12);
}

TEST_CASE("historical after-term counting") {
  const auto r = priority_r0(1.5, 1.5, 4, 0.5, kDefaultTol, AfterTerm::AsPublished);
  CHECK(*r.r0_h == Approx(0.56111).epsilon(1e-4));
  CHECK(*r.r0_l == Approx(1.22094).epsilon(1e-4));
  const auto c = priority_components(1.5, 1.5, 4, 0.5, kDefaultTol, AfterTerm::AsPublished);
  CHECK(c.r0_lah == Approx(0.822222).epsilon(1e-5));
}

TEST_CASE("unreachable tolerance reports no convergence") {
  CHECK_THROWS_AS(priority_r0(0.5, 0.4999, 1.0, 1.0), Error);
  try {
    priority_r0(0.5, 0.4999, 1.0, 1.0);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoConvergence);
  }
  CHECK_THROWS_AS(priority_r0(2, 2, 4, 0.5), Error);
}
