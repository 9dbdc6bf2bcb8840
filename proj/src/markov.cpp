#include "r0sys/markov.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <cmath>
#include <vector>

#include "r0sys/analytic.hpp"

namespace r0sys::markov {

namespace {

using SpMat = Eigen::SparseMatrix<double>;

// As validate(PriorityMM1) but admits an absent low class (lambda_l = 0).
void require_stable(double lambda_h, double lambda_l, double mu) {
  if (lambda_l == 0.0) {
    require_valid(QueueSpec{MM1{lambda_h, mu}});
    return;
  }
  require_valid(QueueSpec{PriorityMM1{lambda_h, lambda_l, mu}});
}

// (1 - rho) * sum_{n>N} n rho^n
double occupancy_tail(double rho, int N) {
  return std::pow(rho, N + 1) * ((N + 1) - N * rho) / (1.0 - rho);
}

double tail_bound(double rho_h, double rho, int H, int L) {
  return 2.0 * (occupancy_tail(rho_h, H) + occupancy_tail(rho, L));
}

Eigen::VectorXd solve_balance(const SpMat& A, const Eigen::VectorXd& b, int H, int L) {
  if (H <= kDirectSolveLimit && L <= kDirectSolveLimit) {
    Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) throw Error(ErrorKind::NoConvergence, "sparse factorization");
    Eigen::VectorXd x = lu.solve(b);
    if (lu.info() != Eigen::Success) throw Error(ErrorKind::NoConvergence, "sparse solve");
    return x;
  }
  Eigen::BiCGSTAB<SpMat, Eigen::IncompleteLUT<double>> it;
  it.setTolerance(1e-12);
  it.setMaxIterations(100000);
  it.compute(A);
  Eigen::VectorXd x = it.solve(b);
  if (it.info() != Eigen::Success) throw Error(ErrorKind::NoConvergence, "iterative solve");
  return x;
}

// Expected infections of high-class arrivals during one low-class service
// phase that starts with k - 1 high-class customers present.
double phase_exact(int k, double rho_h, double X) {
  return k * rho_h / (1.0 - rho_h) - (1.0 - std::pow(X, k)) / (1.0 - X) * rho_h * X / (1.0 - rho_h * X);
}

double phase_as_published(int k, double rho_h, double X) {
  // sum_{n>=1} V(k, n) (1 - X^{n+1}), V(k, n) = sum_{j=max(n+1-k,0)}^{n} rho_h^j
  double total = 0.0;
  for (int n = 1;; ++n) {
    const int lo = std::max(n + 1 - k, 0);
    const double v = std::pow(rho_h, lo) * (1.0 - std::pow(rho_h, n - lo + 1)) / (1.0 - rho_h);
    const double term = v * (1.0 - std::pow(X, n + 1));
    total += term;
    if (n > k && term < 1e-18) break;
  }
  return total;
}

}  // namespace

StateDistribution<PriorityState> priority_steady_state_fixed(double lambda_h, double lambda_l,
                                                             double mu, int H, int L) {
  require_stable(lambda_h, lambda_l, mu);
  if (H < 1 || L < 1) throw Error(ErrorKind::BadRange, "lattice");
  const int nh = H + 1, nl = L + 1;
  const int n = nh * nl;
  auto idx = [nl](int h, int l) { return h * nl + l; };

  // Rows of A are balance equations (Q^T); row 0 is replaced by pi(0,0) = 1.
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(n) * 5);
  for (int h = 0; h < nh; ++h) {
    for (int l = 0; l < nl; ++l) {
      const int s = idx(h, l);
      double out = 0.0;
      auto flow = [&](int to, double rate) {
        if (to != 0) trips.emplace_back(to, s, rate);
        out += rate;
      };
      if (h < H) flow(idx(h + 1, l), lambda_h);
      if (l < L) flow(idx(h, l + 1), lambda_l);
      if (h > 0) flow(idx(h - 1, l), mu);
      else if (l > 0) flow(idx(h, l - 1), mu);
      if (s != 0) trips.emplace_back(s, s, -out);
    }
  }
  trips.emplace_back(0, 0, 1.0);
  SpMat A(n, n);
  A.setFromTriplets(trips.begin(), trips.end());
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  b(0) = 1.0;
  Eigen::VectorXd x = solve_balance(A, b, H, L);

  const double rho_h = lambda_h / mu;
  const double rho = (lambda_h + lambda_l) / mu;
  const double tail = std::min(1.0, std::pow(rho_h, H + 1) + std::pow(rho, L + 1));
  const double scale = (1.0 - tail) / x.sum();

  StateDistribution<PriorityState> pi;
  pi.states.reserve(n);
  pi.probs.reserve(n);
  for (int h = 0; h < nh; ++h) {
    for (int l = 0; l < nl; ++l) {
      pi.states.push_back({h, l});
      pi.probs.push_back(std::max(0.0, x(idx(h, l)) * scale));
    }
  }
  pi.tail_mass = tail;
  pi.tail_occupancy = tail_bound(rho_h, rho, H, L) / 2.0;
  return pi;
}

double busy_period_lst(double alpha, double lambda_h, double mu) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw Error(ErrorKind::BadRange, "alpha");
  if (!(mu > 0.0)) throw Error(ErrorKind::NonPositiveRate, "mu");
  if (!(lambda_h >= 0.0 && lambda_h < mu)) throw Error(ErrorKind::BadRange, "0<=lambda_h<mu");
  if (lambda_h == 0.0) return mu / (mu + alpha);
  const double s = lambda_h + mu + alpha;
  // Rationalized root: avoids cancellation for small lambda_h.
  return 2.0 * mu / (s + std::sqrt(s * s - 4.0 * lambda_h * mu));
}

double ll_overlap_infection_prob(int h, int i, double alpha, double lambda_h, double mu) {
  if (h < 0) throw Error(ErrorKind::BadRange, "h");
  if (i < 1) throw Error(ErrorKind::BadRange, "i");
  const double b = busy_period_lst(alpha, lambda_h, mu);
  const double s_star = alpha + lambda_h - lambda_h * b;
  return -std::expm1((h + i) * std::log(mu / (mu + s_star)));
}

PriorityComponents priority_components(const StateDistribution<PriorityState>& pi,
                                       double lambda_h, double lambda_l, double mu, double alpha,
                                       AfterTerm after) {
  require_stable(lambda_h, lambda_l, mu);
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw Error(ErrorKind::BadRange, "alpha");
  PriorityComponents c;
  c.truncation_error = 2.0 * pi.tail_occupancy;
  if (alpha == 0.0) return c;

  const double rho_h = lambda_h / mu;
  const double eta = alpha / mu;
  const double X = 1.0 / (1.0 + eta);
  c.r0_hbh = (rho_h / (1.0 - rho_h)) * (eta / (eta + 1.0 - rho_h));
  c.r0_lbh = c.r0_hbh;

  int max_h = 0, max_l = 0;
  for (const auto& s : pi.states) {
    max_h = std::max(max_h, s.h);
    max_l = std::max(max_l, s.l);
  }

  // Per-h caches: 1 - X^{h+1}, and prefix sums over i of the low/low overlap.
  std::vector<double> hbl_factor(max_h + 1);
  for (int h = 0; h <= max_h; ++h) hbl_factor[h] = -std::expm1((h + 1) * std::log(X));
  const double b = busy_period_lst(alpha, lambda_h, mu);
  const double log_r = std::log(mu / (mu + alpha + lambda_h - lambda_h * b));

  std::vector<double> phase(max_h + 2);
  for (int k = 1; k <= max_h + 1; ++k) {
    phase[k] = after == AfterTerm::Exact ? phase_exact(k, rho_h, X)
                                         : phase_as_published(k, rho_h, X);
  }

  std::vector<double> ll_prefix(max_l + 1);
  int cached_h = -1;
  for (std::size_t n = 0; n < pi.states.size(); ++n) {
    const auto [h, l] = pi.states[n];
    const double p = pi.probs[n];
    if (h != cached_h) {
      ll_prefix[0] = 0.0;
      for (int i = 1; i <= max_l; ++i) ll_prefix[i] = ll_prefix[i - 1] - std::expm1((h + i) * log_r);
      cached_h = h;
    }
    c.r0_hbl += p * l * hbl_factor[h];
    c.r0_lbl += p * ll_prefix[l];
    c.r0_lah += p * (phase[h + 1] + l * phase[1]);
  }
  return c;
}

StateDistribution<PriorityState> priority_steady_state(double lambda_h, double lambda_l, double mu,
                                                       double tol) {
  require_stable(lambda_h, lambda_l, mu);
  const double rho_h = lambda_h / mu;
  const double rho = (lambda_h + lambda_l) / mu;
  int H = kStartAxis, L = kStartAxis;
  // Grow each axis until its own tail is negligible before solving.
  while (2.0 * occupancy_tail(rho_h, H) > tol / 4 && H < kMaxAxis) H *= 2;
  while (2.0 * occupancy_tail(rho, L) > tol / 4 && L < kMaxAxis) L *= 2;
  if (tail_bound(rho_h, rho, H, L) > tol) throw Error(ErrorKind::NoConvergence, "lattice cap");
  return priority_steady_state_fixed(lambda_h, lambda_l, mu, H, L);
}

PriorityComponents priority_components(double lambda_h, double lambda_l, double mu, double alpha,
                                       double tol, AfterTerm after) {
  require_stable(lambda_h, lambda_l, mu);
  const auto pi = priority_steady_state(lambda_h, lambda_l, mu, tol);
  return priority_components(pi, lambda_h, lambda_l, mu, alpha, after);
}

RiskReport priority_report(const PriorityComponents& c, double lambda_h, double lambda_l) {
  const double q_h = lambda_h / (lambda_h + lambda_l);
  const double q_l = 1.0 - q_h;
  RiskReport r;
  r.r0_sys = 2.0 * (q_h * (c.r0_hbh + c.r0_hbl) + q_l * (c.r0_lbh + c.r0_lbl));
  r.r0_h = 2.0 * q_h * c.r0_hbh + q_l * (c.r0_lbh + c.r0_lah);
  r.r0_l = r.r0_sys - *r.r0_h;
  r.truncation_error = c.truncation_error;
  return r;
}

RiskReport priority_r0(double lambda_h, double lambda_l, double mu, double alpha, double tol,
                       AfterTerm after) {
  return priority_report(priority_components(lambda_h, lambda_l, mu, alpha, tol, after), lambda_h,
                         lambda_l);
}

}  // namespace r0sys::markov
