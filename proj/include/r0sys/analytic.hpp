#pragma once

// Closed-form and series evaluation of R0_sys for the single-class models.
//
// Every formula counts infections among customers already present when the
// infectious customer (IC) arrives and doubles the result: customers that
// arrive later overlap the IC with the same distribution.

#include <functional>
#include <string>

#include "r0sys/core.hpp"

namespace r0sys::analytic {

inline constexpr double kDefaultTol = 1e-10;
inline constexpr long kMaxOuterTerms = 1'000'000;

/// Erlang-C probability of waiting, computed through the Erlang-B recurrence.
double erlang_c(int c, double rho);

/// Laplace transform of the overlap between the IC and the customer i-th in
/// arrival order, given the IC found s customers in the system.
struct OverlapTransform {
  enum class Model { MM1, MMC };
  Model model;
  std::function<double(int s, int i, double alpha)> value;
};

double overlap_transform_mm1(int i, double mu, double alpha);
double overlap_transform_mmc(int s, int i, int c, double mu, double alpha);

OverlapTransform mm1_overlap(double mu);
OverlapTransform mmc_overlap(int c, double mu);

/// Truncated M/M/1 and M/M/c occupancy distributions; truncation stops once
/// twice the omitted occupancy mass sum_{s>S} s*pi(s) drops below tol.
StateDistribution<int> mm1_steady_state(double lambda, double mu, double tol = kDefaultTol);
StateDistribution<int> mmc_steady_state(double lambda, double mu, int c,
                                        double tol = kDefaultTol);

/// 2 * sum_s pi(s) * sum_i (1 - W~_i^(s)(alpha)), with the omitted tail
/// bounded by 2 * tail_occupancy. Throws NoConvergence when that bound
/// exceeds tol.
RiskReport generic_r0(const StateDistribution<int>& pi, const OverlapTransform& transform,
                      double alpha, double tol = kDefaultTol);

RiskReport mm1_r0(double lambda, double mu, double alpha);
RiskReport mmc_r0(double lambda, double mu, int c, double alpha);

/// Exact occupancy distribution of M/M/c/k over s = 0..k.
StateDistribution<int> mmck_steady_state(double lambda, double mu, int c, int k);
double mmck_loss_probability(double lambda, double mu, int c, int k);

/// Averaged over every arriving IC; blocked arrivals contribute zero.
RiskReport mmck_r0(double lambda, double mu, int c, int k, double alpha);

/// Each class sees its own M/M/1 with the window-local load.
RiskReport windows_r0(double lambda_h, double lambda_l, double mu, double alpha, double f);

/// Batch companions overlap for exactly 1/mu: (m-1) * P(theta <= 1/mu).
RiskReport dmdm1_r0(int m, double mu, const TransmissionSpec& transmission);
double dmdm1_second_factorial(double lambda, double mu, int m);
/// |p*m*lambda*R0 - p*mu*P(theta<=1/mu)*E[N(N-1)]|; zero up to rounding.
double dmdm1_identity_gap(double lambda, double mu, int m, double alpha, double p);

/// Mixture of exponential thresholds: sum_j q_j * base(alpha_j).
RiskReport hyper_r0(const std::function<RiskReport(double alpha)>& base,
                    const Hyperexponential& mixture);

/// M/M/1 with position-dependent rates, evaluated as a truncated series.
RiskReport position_r0_mm1(double lambda, double mu, const PositionDependent& rates,
                           double tol = kDefaultTol);

/// M/M/1 where only customers within d positions can infect each other.
RiskReport distance_r0_mm1(double lambda, double mu, double alpha, int d);

/// Dispatches a (model, transmission) pair to the matching formula.
RiskReport evaluate(const QueueSpec& model, const TransmissionSpec& transmission,
                    double tol = kDefaultTol);

}  // namespace r0sys::analytic
