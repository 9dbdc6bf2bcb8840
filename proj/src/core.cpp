#include "r0sys/core.hpp"

#include <cmath>
#include <sstream>

namespace r0sys {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Unstable: return "Unstable";
    case ErrorKind::NonPositiveRate: return "NonPositiveRate";
    case ErrorKind::BadRange: return "BadRange";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::UnsupportedCombination: return "UnsupportedCombination";
    case ErrorKind::NoRoot: return "NoRoot";
  }
  return "Unknown";
}

namespace {

std::string describe(ErrorKind kind, const std::string& condition) {
  std::ostringstream os;
  os << to_string(kind) << '{' << condition << '}';
  return os.str();
}

bool positive(double x) { return std::isfinite(x) && x > 0.0; }

// Checks run in a fixed order: rates, then ranges, then stability.
struct Validator {
  std::optional<Error> rate(double x, const char* name) const {
    if (!positive(x)) return Error(ErrorKind::NonPositiveRate, name);
    return std::nullopt;
  }

  std::optional<Error> operator()(const MM1& q) const {
    if (auto e = rate(q.lambda, "lambda")) return e;
    if (auto e = rate(q.mu, "mu")) return e;
    if (q.lambda >= q.mu) return Error(ErrorKind::Unstable, "rho<1");
    return std::nullopt;
  }

  std::optional<Error> operator()(const MMC& q) const {
    if (auto e = rate(q.lambda, "lambda")) return e;
    if (auto e = rate(q.mu, "mu")) return e;
    if (q.c < 1) return Error(ErrorKind::BadRange, "c");
    if (q.lambda >= q.c * q.mu) return Error(ErrorKind::Unstable, "rho<1");
    return std::nullopt;
  }

  std::optional<Error> operator()(const MMCK& q) const {
    if (auto e = rate(q.lambda, "lambda")) return e;
    if (auto e = rate(q.mu, "mu")) return e;
    if (q.c < 1) return Error(ErrorKind::BadRange, "c");
    if (q.k < q.c) return Error(ErrorKind::BadRange, "k");
    return std::nullopt;
  }

  std::optional<Error> operator()(const PriorityMM1& q) const {
    if (auto e = rate(q.lambda_h, "lambda_h")) return e;
    if (auto e = rate(q.lambda_l, "lambda_l")) return e;
    if (auto e = rate(q.mu, "mu")) return e;
    if (q.lambda_h >= q.mu) return Error(ErrorKind::Unstable, "rho_h<1");
    if (q.lambda_h + q.lambda_l >= q.mu) return Error(ErrorKind::Unstable, "rho<1");
    return std::nullopt;
  }

  std::optional<Error> operator()(const Windows& q) const {
    if (auto e = rate(q.lambda_h, "lambda_h")) return e;
    if (auto e = rate(q.lambda_l, "lambda_l")) return e;
    if (auto e = rate(q.mu, "mu")) return e;
    if (!(q.f > 0.0 && q.f < 1.0)) return Error(ErrorKind::BadRange, "f");
    if (q.lambda_h / q.f >= q.mu) return Error(ErrorKind::Unstable, "lambda_h/f < mu");
    if (q.lambda_l / (1.0 - q.f) >= q.mu)
      return Error(ErrorKind::Unstable, "lambda_l/(1-f) < mu");
    return std::nullopt;
  }

  std::optional<Error> operator()(const DmDm1& q) const {
    if (auto e = rate(q.lambda, "lambda")) return e;
    if (auto e = rate(q.mu, "mu")) return e;
    if (q.m < 1) return Error(ErrorKind::BadRange, "m");
    if (q.mu <= q.lambda) return Error(ErrorKind::Unstable, "mu>lambda");
    return std::nullopt;
  }
};

bool nonnegative(double x) { return std::isfinite(x) && x >= 0.0; }

struct TransmissionValidator {
  std::optional<Error> operator()(const Exponential& t) const {
    if (!nonnegative(t.alpha)) return Error(ErrorKind::BadRange, "alpha");
    return std::nullopt;
  }
  std::optional<Error> operator()(const Hyperexponential& t) const {
    if (t.components.empty()) return Error(ErrorKind::BadRange, "components");
    double total = 0.0;
    for (const auto& c : t.components) {
      if (!(c.q >= 0.0 && c.q <= 1.0)) return Error(ErrorKind::BadRange, "q");
      if (!nonnegative(c.alpha)) return Error(ErrorKind::BadRange, "alpha");
      total += c.q;
    }
    if (std::abs(total - 1.0) > 1e-12) return Error(ErrorKind::BadRange, "sum q = 1");
    return std::nullopt;
  }
  std::optional<Error> operator()(const PositionDependent& t) const {
    if (!t.rate) return Error(ErrorKind::BadRange, "rate");
    if (t.support < 0) return Error(ErrorKind::BadRange, "support");
    if (!nonnegative(t.outside_rate)) return Error(ErrorKind::BadRange, "outside_rate");
    return std::nullopt;
  }
  std::optional<Error> operator()(const DistanceThreshold& t) const {
    if (!nonnegative(t.alpha)) return Error(ErrorKind::BadRange, "alpha");
    if (t.d < 1) return Error(ErrorKind::BadRange, "d");
    return std::nullopt;
  }
};

}  // namespace

Error::Error(ErrorKind kind, std::string condition)
    : std::runtime_error(describe(kind, condition)), kind_(kind), condition_(std::move(condition)) {}

std::string model_name(const QueueSpec& spec) {
  struct Name {
    std::string operator()(const MM1&) const { return "mm1"; }
    std::string operator()(const MMC&) const { return "mmc"; }
    std::string operator()(const MMCK&) const { return "mmck"; }
    std::string operator()(const PriorityMM1&) const { return "priority"; }
    std::string operator()(const Windows&) const { return "windows"; }
    std::string operator()(const DmDm1&) const { return "dmdm1"; }
  };
  return std::visit(Name{}, spec);
}

std::optional<Error> validate(const QueueSpec& spec) { return std::visit(Validator{}, spec); }

void require_valid(const QueueSpec& spec) {
  if (auto e = validate(spec)) throw *e;
}

std::optional<Error> validate(const TransmissionSpec& spec) {
  return std::visit(TransmissionValidator{}, spec);
}

void require_valid(const TransmissionSpec& spec) {
  if (auto e = validate(spec)) throw *e;
}

double PositionDependent::at(int m, int j) const {
  if (support > 0 && (m > support || j > support)) return outside_rate;
  const double r = rate(m, j);
  if (!nonnegative(r)) throw Error(ErrorKind::BadRange, "rate(m,j) >= 0");
  return r;
}

Hyperexponential mask_mixture(double q, double alpha_mm, double alpha_mu, double alpha_um,
                              double alpha_uu) {
  if (!(q >= 0.0 && q <= 1.0)) throw Error(ErrorKind::BadRange, "q");
  return Hyperexponential{{{q * q, alpha_mm},
                           {q * (1.0 - q), alpha_mu},
                           {(1.0 - q) * q, alpha_um},
                           {(1.0 - q) * (1.0 - q), alpha_uu}}};
}

PositionDependent snake_queue_rates(int rows, int cols, double spacing, double scale,
                                    std::vector<std::pair<int, int>> airflow,
                                    double airflow_rate) {
  if (rows < 1 || cols < 1) throw Error(ErrorKind::BadRange, "layout");
  if (!positive(spacing)) throw Error(ErrorKind::BadRange, "spacing");
  if (!nonnegative(scale)) throw Error(ErrorKind::BadRange, "scale");

  const int n = rows * cols;
  // Position p (1-based) walks each row, alternating direction.
  auto coords = [cols, spacing](int p) {
    const int idx = p - 1;
    const int row = idx / cols;
    int col = idx % cols;
    if (row % 2 == 1) col = cols - 1 - col;
    return std::pair<double, double>{col * spacing, row * spacing};
  };

  PositionDependent rates;
  rates.support = n;
  rates.outside_rate = 0.0;
  rates.label = "snake";
  rates.rate = [coords, scale, airflow = std::move(airflow), airflow_rate](int m, int j) {
    for (const auto& [from, to] : airflow) {
      if (from == m && to == j) return airflow_rate;
    }
    if (m == j) return 0.0;
    const auto [xm, ym] = coords(m);
    const auto [xj, yj] = coords(j);
    const double d2 = (xm - xj) * (xm - xj) + (ym - yj) * (ym - yj);
    return scale / d2;
  };
  return rates;
}

double infection_rate(double r0_sys, double lambda, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::BadRange, "p");
  if (!positive(lambda)) throw Error(ErrorKind::NonPositiveRate, "lambda");
  if (!nonnegative(r0_sys)) throw Error(ErrorKind::BadRange, "r0_sys");
  return lambda * p * r0_sys;
}

}  // namespace r0sys
