#pragma once

// Discrete-event simulation of every queue model, sojourn-overlap tracking,
// and Monte Carlo estimators of R0_sys and related rates.

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "r0sys/core.hpp"

namespace r0sys::sim {

enum class Estimator {
  Conditional,  // adds P(infection | overlap) per pair
  Bernoulli,    // draws the threshold per pair and counts events
};

struct SimConfig {
  std::uint64_t warmup_arrivals = 1000;  // discard at least this many arrivals
  int warmup_cycles = 10;                // ...and at least this many empty-system arrivals
  std::uint64_t measurement_window = 100000;  // tagged customers, all replications
  int replications = 1;
  std::uint64_t seed = 1;
  Estimator estimator = Estimator::Conditional;
  double ci_level = 0.95;
  int batches = 30;  // batch means per replication
};

void validate(const SimConfig& cfg);

inline constexpr double kNever = std::numeric_limits<double>::infinity();

struct CustomerRecord {
  std::uint64_t id = 0;
  int cls = 0;  // 0 = high-risk (or the only class), 1 = low-risk
  double arrival = 0.0;
  double service_start = kNever;
  double departure = kNever;  // kNever while still present at the horizon
  int preemptions = 0;
  bool blocked = false;
  int seen = 0;  // customers in system just before this arrival
};

struct EventTrace {
  std::string model;
  std::vector<CustomerRecord> customers;  // in arrival order; id == index
  std::size_t first_tagged = 0;
  std::size_t tagged_count = 0;
  double horizon = 0.0;
  bool single_fcfs = false;  // one server, first come first served

  std::size_t in_system_at_horizon() const;
  bool is_tagged(std::size_t id) const { return id >= first_tagged && id < first_tagged + tagged_count; }
};

/// Runs one replication until every tagged customer has left. Windows is
/// not a single system; simulate its two classes as MM1 models instead.
EventTrace simulate_trace(const QueueSpec& model, const SimConfig& cfg, int replication,
                          std::uint64_t tagged);

/// (time, position) steps of customer `id` in a single-server FCFS trace,
/// from its arrival until it leaves. Position 1 is in service.
std::vector<std::pair<double, int>> position_history(const EventTrace& trace, std::size_t id);

/// Line-delimited dump with a versioned header.
void write_trace(std::ostream& os, const EventTrace& trace);

SimEstimate estimate_r0(const QueueSpec& model, const TransmissionSpec& transmission,
                        const SimConfig& cfg);

struct ClassEstimate {
  SimEstimate r0_sys, r0_h, r0_l;
  // Conditional on the IC's class: b = susceptible arrived before the IC,
  // a = after. Same meaning as markov::PriorityComponents.
  SimEstimate hbh, hbl, lbh, lbl, lah;
  SimEstimate hah, hal, lal;
  SimEstimate before, after;  // per IC, all classes
};

ClassEstimate estimate_r0_by_class(const PriorityMM1& model, double alpha, const SimConfig& cfg);

struct OccupancyMetrics {
  SimEstimate mean_n;
  SimEstimate second_factorial;  // E[N(N-1)]
  SimEstimate loss_probability;
};

OccupancyMetrics estimate_occupancy_metrics(const QueueSpec& model, const SimConfig& cfg);

/// Each arrival is infectious with probability p; returns new infections per
/// unit time. Customers infected during their sojourn do not transmit.
SimEstimate estimate_multi_infector_rate(const QueueSpec& model, double alpha, double p,
                                         const SimConfig& cfg);

}  // namespace r0sys::sim
