#pragma once

// Domain types shared by every r0sys module: queue and transmission
// descriptions, result carriers, and the error type.

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace r0sys {

inline constexpr const char* kVersion = "0.1.0";

enum class ErrorKind {
  Unstable,
  NonPositiveRate,
  BadRange,
  NoConvergence,
  UnsupportedCombination,
  NoRoot,
};

const char* to_string(ErrorKind kind);

/// Raised by every r0sys entry point. `condition()` names the violated
/// constraint (e.g. "rho<1", "f").
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string condition);

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& condition() const noexcept { return condition_; }

 private:
  ErrorKind kind_;
  std::string condition_;
};

// ---------------------------------------------------------------------------
// Queue models. Rates share a single caller-chosen time unit.

struct MM1 {
  double lambda;
  double mu;
};

struct MMC {
  double lambda;
  double mu;
  int c;
};

/// M/M/c/k: at most k customers in the system (k >= c).
struct MMCK {
  double lambda;
  double mu;
  int c;
  int k;
};

/// Two-class M/M/1 with preemptive priority for the high-risk class.
struct PriorityMM1 {
  double lambda_h;
  double lambda_l;
  double mu;
};

/// Designated time windows: the facility is open to the high-risk class a
/// fraction f of the time and to the low-risk class otherwise.
struct Windows {
  double lambda_h;
  double lambda_l;
  double mu;
  double f;
};

/// Deterministic batches of m customers every 1/lambda, each staying 1/mu.
struct DmDm1 {
  double lambda;
  double mu;
  int m;
};

using QueueSpec = std::variant<MM1, MMC, MMCK, PriorityMM1, Windows, DmDm1>;

std::string model_name(const QueueSpec& spec);

/// Returns std::nullopt when every invariant of `spec` holds, otherwise the
/// first violated condition.
std::optional<Error> validate(const QueueSpec& spec);

/// Throwing form of validate().
void require_valid(const QueueSpec& spec);

// ---------------------------------------------------------------------------
// Transmission (dose-response) models.

struct Exponential {
  double alpha;
};

struct MixtureComponent {
  double q;
  double alpha;
};

struct Hyperexponential {
  std::vector<MixtureComponent> components;
};

/// Rate at which an infectious customer at queue position m infects a
/// susceptible customer at position j (positions start at 1). Outside
/// `support` (when positive) the rate is `outside_rate`.
struct PositionDependent {
  std::function<double(int m, int j)> rate;
  int support = 0;
  double outside_rate = 0.0;
  std::string label = "custom";

  double at(int m, int j) const;
};

/// Transmission only between customers at most d queue positions apart.
struct DistanceThreshold {
  double alpha;
  int d;
};

using TransmissionSpec =
    std::variant<Exponential, Hyperexponential, PositionDependent, DistanceThreshold>;

std::optional<Error> validate(const TransmissionSpec& spec);
void require_valid(const TransmissionSpec& spec);

/// Four-way mask mixture: masked/unmasked infector x masked/unmasked
/// susceptible, each masked with probability q.
Hyperexponential mask_mixture(double q, double alpha_mm, double alpha_mu, double alpha_um,
                              double alpha_uu);

/// Gravity-model rates scale/||x_m - x_j||^2 on a boustrophedon ("snake")
/// layout of rows x cols positions spaced `spacing` apart. Pairs listed in
/// `airflow` (ordered infector -> susceptible) get `airflow_rate` instead.
/// Positions beyond rows*cols transmit nothing.
PositionDependent snake_queue_rates(int rows, int cols, double spacing, double scale,
                                    std::vector<std::pair<int, int>> airflow = {},
                                    double airflow_rate = 0.0);

// ---------------------------------------------------------------------------
// Results.

enum class Method { Analytic, Simulated };

struct RiskReport {
  double r0_sys = 0.0;
  std::optional<double> r0_h;
  std::optional<double> r0_l;
  Method method = Method::Analytic;
  std::optional<double> truncation_error;
};

/// Probability map over system states. `probs` sums to 1 - tail_mass;
/// `tail_occupancy` bounds sum over omitted states of n(s) * pi(s).
template <class State>
struct StateDistribution {
  std::vector<State> states;
  std::vector<double> probs;
  double tail_mass = 0.0;
  double tail_occupancy = 0.0;

  double total() const {
    double t = 0.0;
    for (double p : probs) t += p;
    return t;
  }
};

struct SimEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::uint64_t n_samples = 0;
  std::uint64_t seed = 0;
  int replication_count = 0;
};

/// Long-run rate of new infections when arrivals are infectious with small
/// probability p: lambda * p * r0_sys.
double infection_rate(double r0_sys, double lambda, double p);

}  // namespace r0sys
