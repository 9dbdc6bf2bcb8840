#include "r0sys/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace r0sys::analytic {

namespace {

void require_rate(double x, const char* name) {
  if (!(std::isfinite(x) && x > 0.0)) throw Error(ErrorKind::NonPositiveRate, name);
}

void require_alpha(double alpha) {
  if (!(std::isfinite(alpha) && alpha >= 0.0)) throw Error(ErrorKind::BadRange, "alpha");
}

// base^n for 0 < base <= 1 through the log, so large n underflows cleanly.
double power(double base, double n) {
  if (n == 0.0) return 1.0;
  if (base <= 0.0) return 0.0;
  return std::exp(n * std::log(base));
}

// sum_{s>S} s * rho^s
double geometric_first_moment_tail(double rho, long S) {
  return power(rho, static_cast<double>(S + 1)) * ((S + 1) - S * rho) / ((1.0 - rho) * (1.0 - rho));
}

double complement_sum(const StateDistribution<int>& pi, const OverlapTransform& transform,
                      double alpha, int max_state) {
  double total = 0.0;
  for (std::size_t n = 0; n < pi.states.size(); ++n) {
    const int s = pi.states[n];
    if (s > max_state || pi.probs[n] == 0.0) continue;
    double inner = 0.0;
    for (int i = 1; i <= s; ++i) inner += 1.0 - transform.value(s, i, alpha);
    total += pi.probs[n] * inner;
  }
  return 2.0 * total;
}

}  // namespace

double erlang_c(int c, double rho) {
  if (c < 1) throw Error(ErrorKind::BadRange, "c");
  if (!(rho > 0.0 && rho < 1.0)) throw Error(ErrorKind::BadRange, "0<rho<1");
  const double a = c * rho;
  double b = 1.0;
  for (int n = 1; n <= c; ++n) b = a * b / (n + a * b);
  return b / (1.0 - rho * (1.0 - b));
}

double overlap_transform_mm1(int i, double mu, double alpha) {
  if (i < 1) throw Error(ErrorKind::BadRange, "i");
  require_rate(mu, "mu");
  require_alpha(alpha);
  return power(1.0 / (1.0 + alpha / mu), i);
}

double overlap_transform_mmc(int s, int i, int c, double mu, double alpha) {
  if (c < 1) throw Error(ErrorKind::BadRange, "c");
  if (i < 1 || i > s) throw Error(ErrorKind::BadRange, "1<=i<=s");
  require_rate(mu, "mu");
  require_alpha(alpha);
  const double eta = alpha / mu;
  if (s < c) return 2.0 / (eta + 2.0);
  const double ratio = (c - 1) / (eta + c);
  const double denom = eta * eta + 3.0 * eta + 2.0;
  if (i <= c) return (eta * power(ratio, s - c + 1) + eta + 2.0) / denom;
  return power(c / (eta + c), i - c) * (eta * power(ratio, s - i + 1) + eta + 2.0) / denom;
}

OverlapTransform mm1_overlap(double mu) {
  return {OverlapTransform::Model::MM1,
          [mu](int, int i, double alpha) { return overlap_transform_mm1(i, mu, alpha); }};
}

OverlapTransform mmc_overlap(int c, double mu) {
  return {OverlapTransform::Model::MMC, [c, mu](int s, int i, double alpha) {
            return overlap_transform_mmc(s, i, c, mu, alpha);
          }};
}

StateDistribution<int> mm1_steady_state(double lambda, double mu, double tol) {
  require_valid(QueueSpec{MM1{lambda, mu}});
  const double rho = lambda / mu;
  StateDistribution<int> pi;
  double p = 1.0 - rho;
  for (long s = 0;; ++s) {
    if (s >= kMaxOuterTerms) throw Error(ErrorKind::NoConvergence, "mm1 truncation");
    pi.states.push_back(static_cast<int>(s));
    pi.probs.push_back(p);
    p *= rho;
    const double tail_occ = (1.0 - rho) * geometric_first_moment_tail(rho, s);
    if (2.0 * tail_occ < tol) {
      pi.tail_mass = power(rho, static_cast<double>(s + 1));
      pi.tail_occupancy = tail_occ;
      break;
    }
  }
  return pi;
}

StateDistribution<int> mmc_steady_state(double lambda, double mu, int c, double tol) {
  require_valid(QueueSpec{MMC{lambda, mu, c}});
  const double rho = lambda / (c * mu);
  const double a = c * rho;
  const double C = erlang_c(c, rho);
  // pi(s) = c!(1-rho) C / (s! a^{c-s}) for s <= c, then geometric in rho.
  const double log_pc = std::log1p(-rho) + std::log(C);
  StateDistribution<int> pi;
  for (int s = 0; s <= c; ++s) {
    const double lp = log_pc + std::lgamma(c + 1.0) - std::lgamma(s + 1.0) - (c - s) * std::log(a);
    pi.states.push_back(s);
    pi.probs.push_back(std::exp(lp));
  }
  const double pc = pi.probs.back();
  double p = pc;
  for (long s = c;; ++s) {
    // sum_{t>s} t * pc * rho^{t-c}
    const double tail_occ = pc * std::exp(-c * std::log(rho)) * geometric_first_moment_tail(rho, s);
    if (2.0 * tail_occ < tol) {
      pi.tail_mass = pc * power(rho, static_cast<double>(s + 1 - c)) / (1.0 - rho);
      pi.tail_occupancy = tail_occ;
      break;
    }
    if (s >= kMaxOuterTerms) throw Error(ErrorKind::NoConvergence, "mmc truncation");
    p *= rho;
    pi.states.push_back(static_cast<int>(s + 1));
    pi.probs.push_back(p);
  }
  return pi;
}

RiskReport generic_r0(const StateDistribution<int>& pi, const OverlapTransform& transform,
                      double alpha, double tol) {
  require_alpha(alpha);
  const double bound = 2.0 * pi.tail_occupancy;
  if (bound > tol) throw Error(ErrorKind::NoConvergence, "tail bound > tol");
  RiskReport r;
  r.r0_sys = complement_sum(pi, transform, alpha, std::numeric_limits<int>::max());
  r.truncation_error = bound;
  return r;
}

RiskReport mm1_r0(double lambda, double mu, double alpha) {
  require_valid(QueueSpec{MM1{lambda, mu}});
  require_alpha(alpha);
  const double rho = lambda / mu;
  const double eta = alpha / mu;
  RiskReport r;
  r.r0_sys = 2.0 * (rho / (1.0 - rho)) * (eta / (eta + 1.0 - rho));
  return r;
}

RiskReport mmc_r0(double lambda, double mu, int c, double alpha) {
  require_valid(QueueSpec{MMC{lambda, mu, c}});
  require_alpha(alpha);
  const double rho = lambda / (c * mu);
  const double eta = alpha / mu;
  const double C = erlang_c(c, rho);
  const double mean_n = rho / (1.0 - rho) * C + c * rho;
  const double overlap =
      (C * (2.0 * c * rho - c * eta) / (eta + c - c * rho) + 2.0 * c * rho) / (eta + 2.0);
  RiskReport r;
  r.r0_sys = std::max(0.0, 2.0 * (mean_n - overlap));
  return r;
}

StateDistribution<int> mmck_steady_state(double lambda, double mu, int c, int k) {
  require_valid(QueueSpec{MMCK{lambda, mu, c, k}});
  const double a = lambda / mu;
  const double rho = a / c;
  std::vector<double> logw(static_cast<std::size_t>(k) + 1);
  for (int s = 0; s <= k; ++s) {
    logw[s] = s <= c ? s * std::log(a) - std::lgamma(s + 1.0)
                     : c * std::log(a) - std::lgamma(c + 1.0) + (s - c) * std::log(rho);
  }
  const double top = *std::max_element(logw.begin(), logw.end());
  double norm = 0.0;
  for (double lw : logw) norm += std::exp(lw - top);
  StateDistribution<int> pi;
  for (int s = 0; s <= k; ++s) {
    pi.states.push_back(s);
    pi.probs.push_back(std::exp(logw[s] - top) / norm);
  }
  return pi;
}

double mmck_loss_probability(double lambda, double mu, int c, int k) {
  return mmck_steady_state(lambda, mu, c, k).probs.back();
}

RiskReport mmck_r0(double lambda, double mu, int c, int k, double alpha) {
  require_valid(QueueSpec{MMCK{lambda, mu, c, k}});
  require_alpha(alpha);
  if (lambda >= c * mu) throw Error(ErrorKind::Unstable, "rho<1");
  const auto pi = mmck_steady_state(lambda, mu, c, k);
  RiskReport r;
  r.r0_sys = complement_sum(pi, mmc_overlap(c, mu), alpha, k - 1);
  r.truncation_error = 0.0;
  return r;
}

RiskReport windows_r0(double lambda_h, double lambda_l, double mu, double alpha, double f) {
  require_valid(QueueSpec{Windows{lambda_h, lambda_l, mu, f}});
  require_alpha(alpha);
  const double eta = alpha / mu;
  const double total = lambda_h + lambda_l;
  auto class_r0 = [eta, mu, total](double lambda_t, double share) {
    const double rho = lambda_t / share / mu;
    return 2.0 * (lambda_t / total) * (rho / (1.0 - rho)) * (eta / (eta + 1.0 - rho));
  };
  RiskReport r;
  r.r0_h = class_r0(lambda_h, f);
  r.r0_l = class_r0(lambda_l, 1.0 - f);
  r.r0_sys = *r.r0_h + *r.r0_l;
  return r;
}

namespace {

double prob_threshold_within(double duration, const TransmissionSpec& transmission) {
  if (const auto* e = std::get_if<Exponential>(&transmission)) return -std::expm1(-e->alpha * duration);
  if (const auto* h = std::get_if<Hyperexponential>(&transmission)) {
    double p = 0.0;
    for (const auto& comp : h->components) p += comp.q * -std::expm1(-comp.alpha * duration);
    return p;
  }
  throw Error(ErrorKind::UnsupportedCombination, "dmdm1 needs exponential or mixture thresholds");
}

}  // namespace

RiskReport dmdm1_r0(int m, double mu, const TransmissionSpec& transmission) {
  if (m < 1) throw Error(ErrorKind::BadRange, "m");
  require_rate(mu, "mu");
  require_valid(transmission);
  RiskReport r;
  r.r0_sys = (m - 1) * prob_threshold_within(1.0 / mu, transmission);
  return r;
}

double dmdm1_second_factorial(double lambda, double mu, int m) {
  require_valid(QueueSpec{DmDm1{lambda, mu, m}});
  return lambda * m * (m - 1.0) / mu;
}

double dmdm1_identity_gap(double lambda, double mu, int m, double alpha, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::BadRange, "p");
  const double r0 = dmdm1_r0(m, mu, Exponential{alpha}).r0_sys;
  const double lhs = p * m * lambda * r0;
  const double rhs = p * mu * -std::expm1(-alpha / mu) * dmdm1_second_factorial(lambda, mu, m);
  return std::abs(lhs - rhs);
}

RiskReport hyper_r0(const std::function<RiskReport(double)>& base, const Hyperexponential& mixture) {
  require_valid(TransmissionSpec{mixture});
  RiskReport out;
  bool classes = true;
  double r0_h = 0.0, r0_l = 0.0, trunc = 0.0;
  bool any_trunc = false;
  for (const auto& comp : mixture.components) {
    const RiskReport r = base(comp.alpha);
    out.r0_sys += comp.q * r.r0_sys;
    if (r.r0_h && r.r0_l) {
      r0_h += comp.q * *r.r0_h;
      r0_l += comp.q * *r.r0_l;
    } else {
      classes = false;
    }
    if (r.truncation_error) {
      any_trunc = true;
      trunc += comp.q * *r.truncation_error;
    }
  }
  if (classes) {
    out.r0_h = r0_h;
    out.r0_l = r0_l;
  }
  if (any_trunc) out.truncation_error = trunc;
  return out;
}

RiskReport position_r0_mm1(double lambda, double mu, const PositionDependent& rates, double tol) {
  require_valid(QueueSpec{MM1{lambda, mu}});
  require_valid(TransmissionSpec{rates});
  const double rho = lambda / mu;

  // For a pair whose positions differ by gap g, the surviving probability
  // after the pair has advanced through positions (p+g, p), p = i..1, is a
  // prefix product over p; keep one running product per gap and direction.
  std::vector<double> earlier_ic{0.0};  // IC arrived first (after-arrival partners)
  std::vector<double> later_ic{0.0};    // IC arrived second (present-on-arrival partners)
  double total = 0.0;
  double pi_s = 1.0 - rho;
  long S = 0;
  for (long s = 1;; ++s) {
    if (s > kMaxOuterTerms) throw Error(ErrorKind::NoConvergence, "position series");
    pi_s *= rho;
    later_ic.push_back(1.0);
    earlier_ic.push_back(1.0);
    double inner = 0.0;
    for (long g = 1; g <= s; ++g) {
      const int p = static_cast<int>(s + 1 - g);
      const int q = static_cast<int>(p + g);
      later_ic[g] /= 1.0 + rates.at(q, p) / mu;
      earlier_ic[g] /= 1.0 + rates.at(p, q) / mu;
      inner += 2.0 - later_ic[g] - earlier_ic[g];
    }
    total += pi_s * inner;
    S = s;
    const double bound = 2.0 * (1.0 - rho) * geometric_first_moment_tail(rho, S);
    if (bound < tol) {
      RiskReport r;
      r.r0_sys = total;
      r.truncation_error = bound;
      return r;
    }
  }
}

RiskReport distance_r0_mm1(double lambda, double mu, double alpha, int d) {
  require_valid(QueueSpec{MM1{lambda, mu}});
  require_alpha(alpha);
  if (d < 1) throw Error(ErrorKind::BadRange, "d");
  RiskReport r;
  if (alpha == 0.0) return r;
  const double rho = lambda / mu;
  const double eta = alpha / mu;
  const double x = 1.0 / (1.0 + eta);
  const double rho_d1 = power(rho, d + 1.0);
  const double rx = rho * x;
  // Queues no longer than d: every present customer is within reach.
  const double sum_s = rho * (1.0 - (d + 1.0) * power(rho, d) + d * rho_d1) / ((1.0 - rho) * (1.0 - rho));
  const double sum_1 = (1.0 - rho_d1) / (1.0 - rho);
  const double sum_x = (1.0 - power(rx, d + 1.0)) / (1.0 - rx);
  const double short_queues = sum_s - (sum_1 - sum_x) / eta;
  // Longer queues: only the d customers nearest the back are reachable.
  const double long_queues =
      d * rho_d1 / (1.0 - rho) - (1.0 + eta) * (1.0 - power(x, d)) / eta * x * x * rho_d1 / (1.0 - rx);
  r.r0_sys = std::max(0.0, 2.0 * (1.0 - rho) * (short_queues + long_queues));
  return r;
}

}  // namespace r0sys::analytic
