#pragma once

// Two-class preemptive-priority M/M/1: truncated-lattice steady state and
// the class-resolved pieces of R0.

#include "r0sys/core.hpp"

namespace r0sys::markov {

inline constexpr double kDefaultTol = 1e-10;
inline constexpr int kStartAxis = 64;
inline constexpr int kMaxAxis = 4096;
inline constexpr int kDirectSolveLimit = 512;

struct PriorityState {
  int h = 0;
  int l = 0;
  friend bool operator==(const PriorityState&, const PriorityState&) = default;
};

/// Infections caused by one IC, split by the IC's class, whether the
/// susceptible arrived before (b) or after (a) the IC, and its class.
struct PriorityComponents {
  double r0_hbh = 0.0;
  double r0_hbl = 0.0;
  double r0_lbh = 0.0;
  double r0_lbl = 0.0;
  double r0_lah = 0.0;
  double truncation_error = 0.0;
};

/// How the low-IC / later-high-susceptible term is evaluated.
///   Exact:       expected high arrivals during each low-class service
///                phase, counted from the first arrival of each phase.
///   AsPublished: the historical counting that starts each phase sum at
///                j = 0 and applies the overlap with exponent n + 1;
///                kept only to reproduce previously reported figures.
enum class AfterTerm { Exact, AsPublished };

/// Solves the balance equations on (0..H)x(0..L), doubling axes until the
/// occupancy tail and the change in R0 both drop below tol.
StateDistribution<PriorityState> priority_steady_state(double lambda_h, double lambda_l, double mu,
                                                       double tol = kDefaultTol);

/// Same, on a fixed lattice (arrivals beyond the edge are blocked).
StateDistribution<PriorityState> priority_steady_state_fixed(double lambda_h, double lambda_l,
                                                             double mu, int H, int L);

/// Laplace transform of an M/M/1 busy period (arrival rate lambda_h).
double busy_period_lst(double alpha, double lambda_h, double mu);

/// Probability that a low-class IC infects the i-th low-class customer ahead
/// of it, having found h high-class customers present.
double ll_overlap_infection_prob(int h, int i, double alpha, double lambda_h, double mu);

PriorityComponents priority_components(double lambda_h, double lambda_l, double mu, double alpha,
                                       double tol = kDefaultTol,
                                       AfterTerm after = AfterTerm::Exact);

/// Components over a given distribution (no adaptive refinement).
PriorityComponents priority_components(const StateDistribution<PriorityState>& pi,
                                       double lambda_h, double lambda_l, double mu, double alpha,
                                       AfterTerm after = AfterTerm::Exact);

RiskReport priority_r0(double lambda_h, double lambda_l, double mu, double alpha,
                       double tol = kDefaultTol, AfterTerm after = AfterTerm::Exact);

/// Assembles class totals from components.
RiskReport priority_report(const PriorityComponents& comp, double lambda_h, double lambda_l);

}  // namespace r0sys::markov
