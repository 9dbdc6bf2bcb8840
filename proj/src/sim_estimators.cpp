#include <algorithm>
#include <array>
#include <atomic>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "r0sys/rng.hpp"
#include "r0sys/sim.hpp"

namespace r0sys::sim {

namespace {

using rng::Stream;
using rng::StreamKind;

int worker_cap() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("R0SYS_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) n = n > 0 ? std::min(n, cap) : cap;
  }
  return std::max(n, 1);
}

// Runs f(0..n-1), possibly concurrently; results are kept in index order.
template <class R, class F>
std::vector<R> run_replications(int n, F&& f) {
  std::vector<R> out(static_cast<std::size_t>(n));
  const int workers = std::min(worker_cap(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) out[i] = f(i);
    return out;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          out[i] = f(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::uint64_t per_replication(const SimConfig& cfg) {
  return (cfg.measurement_window + cfg.replications - 1) / cfg.replications;
}

// Sample mean with a batch-means standard error and Student-t interval.
class Accumulator {
 public:
  void add_batch(double sum, double count) {
    if (count <= 0) return;
    sum_ += sum;
    count_ += count;
    means_.push_back(sum / count);
  }
  void merge(const Accumulator& o) {
    sum_ += o.sum_;
    count_ += o.count_;
    means_.insert(means_.end(), o.means_.begin(), o.means_.end());
  }
  double mean() const { return count_ > 0 ? sum_ / count_ : 0.0; }
  double std_error() const {
    const std::size_t nb = means_.size();
    if (nb < 2) return 0.0;
    const double m = std::accumulate(means_.begin(), means_.end(), 0.0) / nb;
    double ss = 0.0;
    for (double x : means_) ss += (x - m) * (x - m);
    return std::sqrt(ss / (nb - 1) / nb);
  }
  std::size_t batches() const { return means_.size(); }
  double count() const { return count_; }

 private:
  double sum_ = 0.0;
  double count_ = 0.0;
  std::vector<double> means_;
};

double t_quantile(double level, std::size_t batches) {
  const double dof = batches > 1 ? static_cast<double>(batches - 1) : 1.0;
  return boost::math::quantile(boost::math::students_t(dof), 0.5 + level / 2.0);
}

SimEstimate finish(double mean, double se, std::size_t batches, std::uint64_t n,
                   const SimConfig& cfg) {
  SimEstimate e;
  e.mean = mean;
  e.std_error = se;
  const double half = se > 0.0 ? t_quantile(cfg.ci_level, batches) * se : 0.0;
  e.ci_low = mean - half;
  e.ci_high = mean + half;
  e.n_samples = n;
  e.seed = cfg.seed;
  e.replication_count = cfg.replications;
  return e;
}

SimEstimate finish(const Accumulator& acc, const SimConfig& cfg, std::uint64_t n) {
  return finish(acc.mean(), acc.std_error(), acc.batches(), n, cfg);
}

// Tagged customers split into cfg.batches contiguous groups.
template <class F>
void for_each_batch(const EventTrace& tr, const SimConfig& cfg, F&& f) {
  const std::size_t n = tr.tagged_count;
  for (int b = 0; b < cfg.batches; ++b) {
    const std::size_t lo = tr.first_tagged + n * b / cfg.batches;
    const std::size_t hi = tr.first_tagged + n * (b + 1) / cfg.batches;
    f(lo, hi);
  }
}

// ---------------------------------------------------------------------------
// Pair sweep. At each admitted arrival X, every customer Y still present
// forms a pair; both orderings are evaluated. Pairs where neither side is
// tagged are skipped.

template <class Visit>
void sweep_pairs(const EventTrace& tr, Visit&& visit) {
  const auto& cs = tr.customers;
  const std::size_t end_tagged = tr.first_tagged + tr.tagged_count;
  double last_tagged_departure = 0.0;
  for (std::size_t i = tr.first_tagged; i < end_tagged; ++i) {
    if (!cs[i].blocked) last_tagged_departure = std::max(last_tagged_departure, cs[i].departure);
  }
  std::vector<std::size_t> active;
  for (std::size_t x = 0; x < cs.size(); ++x) {
    const CustomerRecord& rx = cs[x];
    if (x >= end_tagged && rx.arrival >= last_tagged_departure) break;
    std::erase_if(active, [&](std::size_t y) { return cs[y].departure <= rx.arrival; });
    if (rx.blocked) continue;
    const bool x_tagged = tr.is_tagged(x);
    for (std::size_t y : active) {
      if (x_tagged || tr.is_tagged(y)) visit(y, x);
    }
    active.push_back(x);
  }
}

// Per-IC tallies of infections, by susceptible class and arrival order.
struct Tally {
  double before[2] = {0.0, 0.0};
  double after[2] = {0.0, 0.0};
  double total() const { return before[0] + before[1] + after[0] + after[1]; }
};

// Threshold mixture: hazard of a pair is rate_j * exposure.
struct Mixture {
  std::vector<MixtureComponent> components;

  double conditional(double exposure) const {
    double p = 0.0;
    for (const auto& c : components) p += c.q * -std::expm1(-c.alpha * exposure);
    return p;
  }

  // Draws the threshold for the ordered pair (ic -> sc) from a counter stream.
  double bernoulli(double exposure, const Stream& ic_stream, std::size_t sc) const {
    if (exposure <= 0.0) return 0.0;
    const double u = ic_stream.uniform_at(2 * sc + 1);
    std::size_t j = 0;
    double acc = components[0].q;
    while (u > acc && j + 1 < components.size()) acc += components[++j].q;
    return components[j].alpha * exposure >= ic_stream.exponential_at(2 * sc, 1.0) ? 1.0 : 0.0;
  }
};

// Exposure of each ordered pair: plain overlap, or integrated position rates.
class ExposureModel {
 public:
  ExposureModel(const TransmissionSpec& t, const EventTrace& tr) : trace_(tr) {
    if (const auto* e = std::get_if<Exponential>(&t)) {
      mix_.components = {{1.0, e->alpha}};
    } else if (const auto* h = std::get_if<Hyperexponential>(&t)) {
      mix_.components = h->components;
    } else if (const auto* d = std::get_if<DistanceThreshold>(&t)) {
      mix_.components = {{1.0, d->alpha}};
      max_gap_ = d->d;
    } else {
      const auto& p = std::get<PositionDependent>(t);
      mix_.components = {{1.0, 1.0}};
      positional_ = true;
      int max_pos = 1;
      for (const auto& c : tr.customers) max_pos = std::max(max_pos, c.seen + 1);
      size_ = max_pos + 1;
      table_.assign(static_cast<std::size_t>(size_) * size_, 0.0);
      for (int m = 1; m < size_; ++m)
        for (int j = 1; j < size_; ++j) table_[m * size_ + j] = p.at(m, j);
    }
    if (positional_ || max_gap_ > 0) {
      departures_.reserve(tr.customers.size());
      for (const auto& c : tr.customers) departures_.push_back(c.departure);
    }
  }

  const Mixture& mixture() const { return mix_; }

  // Exposures (later x on earlier y, earlier y on later x).
  std::pair<double, double> operator()(std::size_t y, std::size_t x) const {
    const auto& cs = trace_.customers;
    const double w = std::min(cs[x].departure, cs[y].departure) - cs[x].arrival;
    if (max_gap_ > 0) {
      const bool reach = x - y <= static_cast<std::size_t>(max_gap_);
      return reach ? std::pair{w, w} : std::pair{0.0, 0.0};
    }
    if (!positional_) return {w, w};
    // Single FCFS server: y departs first; positions drop at each departure.
    const std::size_t g = x - y;
    std::size_t next = static_cast<std::size_t>(
        std::upper_bound(departures_.begin(), departures_.end(), cs[x].arrival) - departures_.begin());
    std::size_t p = y - next + 1;
    double t = cs[x].arrival;
    double hx = 0.0, hy = 0.0;
    for (; next <= y; ++next, --p) {
      const double dt = departures_[next] - t;
      hx += rate(p + g, p) * dt;
      hy += rate(p, p + g) * dt;
      t = departures_[next];
    }
    return {hx, hy};
  }

 private:
  double rate(std::size_t m, std::size_t j) const {
    if (m < static_cast<std::size_t>(size_) && j < static_cast<std::size_t>(size_))
      return table_[m * size_ + j];
    return 0.0;
  }

  const EventTrace& trace_;
  Mixture mix_;
  bool positional_ = false;
  int max_gap_ = 0;
  int size_ = 0;
  std::vector<double> table_;
  std::vector<double> departures_;
};

std::vector<Tally> infection_tallies(const EventTrace& tr, const TransmissionSpec& transmission,
                                     const SimConfig& cfg, int rep) {
  std::vector<Tally> tally(tr.customers.size());
  const ExposureModel exposure(transmission, tr);
  const Mixture& mix = exposure.mixture();
  const bool bernoulli = cfg.estimator == Estimator::Bernoulli;
  auto stream = [&](std::size_t ic) { return Stream(cfg.seed, rep, StreamKind::Threshold, ic); };
  sweep_pairs(tr, [&](std::size_t y, std::size_t x) {
    const auto [ex, ey] = exposure(y, x);
    const double x_on_y = bernoulli ? mix.bernoulli(ex, stream(x), y) : mix.conditional(ex);
    const double y_on_x = bernoulli ? mix.bernoulli(ey, stream(y), x) : mix.conditional(ey);
    tally[x].before[tr.customers[y].cls] += x_on_y;
    tally[y].after[tr.customers[x].cls] += y_on_x;
  });
  return tally;
}

void require_mm1_for_positions(const QueueSpec& model, const TransmissionSpec& transmission) {
  const bool positional = std::holds_alternative<PositionDependent>(transmission) ||
                          std::holds_alternative<DistanceThreshold>(transmission);
  if (positional && !std::holds_alternative<MM1>(model))
    throw Error(ErrorKind::UnsupportedCombination, "position-based transmission needs mm1");
}

Accumulator r0_batches(const QueueSpec& model, const TransmissionSpec& transmission,
                       const SimConfig& cfg) {
  const auto per_rep = run_replications<Accumulator>(cfg.replications, [&](int rep) {
    const EventTrace tr = simulate_trace(model, cfg, rep, per_replication(cfg));
    const auto tally = infection_tallies(tr, transmission, cfg, rep);
    Accumulator acc;
    for_each_batch(tr, cfg, [&](std::size_t lo, std::size_t hi) {
      double sum = 0.0;
      for (std::size_t i = lo; i < hi; ++i) sum += tally[i].total();
      acc.add_batch(sum, static_cast<double>(hi - lo));
    });
    return acc;
  });
  Accumulator all;
  for (const auto& a : per_rep) all.merge(a);
  return all;
}

}  // namespace

SimEstimate estimate_r0(const QueueSpec& model, const TransmissionSpec& transmission,
                        const SimConfig& cfg) {
  require_valid(model);
  require_valid(transmission);
  validate(cfg);
  require_mm1_for_positions(model, transmission);
  if (const auto* w = std::get_if<Windows>(&model)) {
    const double q_h = w->lambda_h / (w->lambda_h + w->lambda_l);
    const double q_l = 1.0 - q_h;
    const auto h = r0_batches(MM1{w->lambda_h / w->f, w->mu}, transmission, cfg);
    const auto l = r0_batches(MM1{w->lambda_l / (1.0 - w->f), w->mu}, transmission, cfg);
    const double se = std::hypot(q_h * h.std_error(), q_l * l.std_error());
    return finish(q_h * h.mean() + q_l * l.mean(), se, std::min(h.batches(), l.batches()),
                  static_cast<std::uint64_t>(h.count() + l.count()), cfg);
  }
  const auto acc = r0_batches(model, transmission, cfg);
  return finish(acc, cfg, static_cast<std::uint64_t>(acc.count()));
}

ClassEstimate estimate_r0_by_class(const PriorityMM1& model, double alpha, const SimConfig& cfg) {
  require_valid(QueueSpec{model});
  validate(cfg);
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw Error(ErrorKind::BadRange, "alpha");
  enum Slot { Sys, H, L, HBH, HBL, LBH, LBL, LAH, HAH, HAL, LAL, Before, After, kSlots };
  using Slots = std::array<Accumulator, kSlots>;
  const auto per_rep = run_replications<Slots>(cfg.replications, [&](int rep) {
    const EventTrace tr = simulate_trace(QueueSpec{model}, cfg, rep, per_replication(cfg));
    const auto tally = infection_tallies(tr, Exponential{alpha}, cfg, rep);
    Slots s;
    for_each_batch(tr, cfg, [&](std::size_t lo, std::size_t hi) {
      std::array<double, kSlots> sum{};
      double n_all = 0.0, n_cls[2] = {0.0, 0.0};
      for (std::size_t i = lo; i < hi; ++i) {
        const Tally& t = tally[i];
        const int c = tr.customers[i].cls;
        n_all += 1.0;
        n_cls[c] += 1.0;
        sum[Sys] += t.total();
        sum[H] += t.before[0] + t.after[0];
        sum[L] += t.before[1] + t.after[1];
        sum[Before] += t.before[0] + t.before[1];
        sum[After] += t.after[0] + t.after[1];
        if (c == 0) {
          sum[HBH] += t.before[0];
          sum[HBL] += t.before[1];
          sum[HAH] += t.after[0];
          sum[HAL] += t.after[1];
        } else {
          sum[LBH] += t.before[0];
          sum[LBL] += t.before[1];
          sum[LAH] += t.after[0];
          sum[LAL] += t.after[1];
        }
      }
      for (int k : {Sys, H, L, Before, After}) s[k].add_batch(sum[k], n_all);
      for (int k : {HBH, HBL, HAH, HAL}) s[k].add_batch(sum[k], n_cls[0]);
      for (int k : {LBH, LBL, LAH, LAL}) s[k].add_batch(sum[k], n_cls[1]);
    });
    return s;
  });
  Slots all;
  for (const auto& s : per_rep)
    for (int k = 0; k < kSlots; ++k) all[k].merge(s[k]);
  auto est = [&](int k) { return finish(all[k], cfg, static_cast<std::uint64_t>(all[k].count())); };
  ClassEstimate out;
  out.r0_sys = est(Sys);
  out.r0_h = est(H);
  out.r0_l = est(L);
  out.hbh = est(HBH);
  out.hbl = est(HBL);
  out.lbh = est(LBH);
  out.lbl = est(LBL);
  out.lah = est(LAH);
  out.hah = est(HAH);
  out.hal = est(HAL);
  out.lal = est(LAL);
  out.before = est(Before);
  out.after = est(After);
  return out;
}

OccupancyMetrics estimate_occupancy_metrics(const QueueSpec& model, const SimConfig& cfg) {
  require_valid(model);
  validate(cfg);
  if (std::holds_alternative<Windows>(model))
    throw Error(ErrorKind::UnsupportedCombination, "windows occupancy: use each class's mm1");
  struct Rep {
    Accumulator n, nn, loss;
  };
  const auto per_rep = run_replications<Rep>(cfg.replications, [&](int rep) {
    const EventTrace tr = simulate_trace(model, cfg, rep, per_replication(cfg));
    // Piecewise-constant N(t) with prefix integrals of N and N(N-1).
    std::vector<std::pair<double, int>> events;
    for (const auto& c : tr.customers) {
      if (c.blocked) continue;
      events.emplace_back(c.arrival, +1);
      if (c.departure != kNever) events.emplace_back(c.departure, -1);
    }
    std::sort(events.begin(), events.end());
    std::vector<double> times{0.0}, i1{0.0}, i2{0.0};
    std::vector<int> level{0};
    for (const auto& [t, dn] : events) {
      const double dt = t - times.back();
      const double n = level.back();
      i1.push_back(i1.back() + n * dt);
      i2.push_back(i2.back() + n * (n - 1) * dt);
      times.push_back(t);
      level.push_back(level.back() + dn);
    }
    auto integral = [&](const std::vector<double>& acc, bool second, double t) {
      const std::size_t k = std::upper_bound(times.begin(), times.end(), t) - times.begin() - 1;
      const double n = level[k];
      return acc[k] + (second ? n * (n - 1) : n) * (t - times[k]);
    };
    Rep r;
    const auto& cs = tr.customers;
    const std::size_t last = tr.first_tagged + tr.tagged_count - 1;
    for_each_batch(tr, cfg, [&](std::size_t lo, std::size_t hi) {
      const double t0 = cs[lo].arrival;
      const double t1 = hi <= last ? cs[hi].arrival : cs[last].arrival;
      if (t1 > t0) {
        r.n.add_batch(integral(i1, false, t1) - integral(i1, false, t0), t1 - t0);
        r.nn.add_batch(integral(i2, true, t1) - integral(i2, true, t0), t1 - t0);
      }
      double blocked = 0.0;
      for (std::size_t i = lo; i < hi; ++i) blocked += cs[i].blocked ? 1.0 : 0.0;
      r.loss.add_batch(blocked, static_cast<double>(hi - lo));
    });
    return r;
  });
  Rep all;
  for (const auto& r : per_rep) {
    all.n.merge(r.n);
    all.nn.merge(r.nn);
    all.loss.merge(r.loss);
  }
  const auto n = static_cast<std::uint64_t>(all.loss.count());
  return {finish(all.n, cfg, n), finish(all.nn, cfg, n), finish(all.loss, cfg, n)};
}

SimEstimate estimate_multi_infector_rate(const QueueSpec& model, double alpha, double p,
                                         const SimConfig& cfg) {
  require_valid(model);
  validate(cfg);
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::BadRange, "p");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw Error(ErrorKind::BadRange, "alpha");
  const double lambda = std::visit(
      [](const auto& q) -> double {
        using T = std::decay_t<decltype(q)>;
        if constexpr (std::is_same_v<T, PriorityMM1> || std::is_same_v<T, Windows>) {
          return q.lambda_h + q.lambda_l;
        } else if constexpr (std::is_same_v<T, DmDm1>) {
          return q.lambda * q.m;
        } else {
          return q.lambda;
        }
      },
      model);
  if (std::holds_alternative<Windows>(model))
    throw Error(ErrorKind::UnsupportedCombination, "multi-infector windows");

  const bool bernoulli = cfg.estimator == Estimator::Bernoulli;
  const auto per_rep = run_replications<Accumulator>(cfg.replications, [&](int rep) {
    const EventTrace tr = simulate_trace(model, cfg, rep, per_replication(cfg));
    const std::size_t n = tr.customers.size();
    // Conditional: log P(escape) summed over partners with their infectious
    // status integrated out. Bernoulli: statuses drawn, exposure summed.
    std::vector<double> acc(n, 0.0);
    const Stream status(cfg.seed, rep, StreamKind::Infectious, 0);
    auto infectious = [&](std::size_t id) { return status.uniform_at(id) < p; };
    sweep_pairs(tr, [&](std::size_t y, std::size_t x) {
      const auto& cs = tr.customers;
      const double w = std::min(cs[x].departure, cs[y].departure) - cs[x].arrival;
      if (bernoulli) {
        if (infectious(y)) acc[x] += w;
        if (infectious(x)) acc[y] += w;
      } else {
        const double escape = std::log1p(-p * -std::expm1(-alpha * w));
        acc[x] += escape;
        acc[y] += escape;
      }
    });
    Accumulator a;
    for_each_batch(tr, cfg, [&](std::size_t lo, std::size_t hi) {
      double sum = 0.0;
      for (std::size_t i = lo; i < hi; ++i) {
        if (tr.customers[i].blocked) continue;
        if (bernoulli) {
          if (infectious(i)) continue;
          const double e = Stream(cfg.seed, rep, StreamKind::Threshold, i).exponential_at(0, 1.0);
          sum += alpha * acc[i] >= e && acc[i] > 0.0 ? 1.0 : 0.0;
        } else {
          sum += (1.0 - p) * -std::expm1(acc[i]);
        }
      }
      a.add_batch(lambda * sum, static_cast<double>(hi - lo));
    });
    return a;
  });
  Accumulator all;
  for (const auto& a : per_rep) all.merge(a);
  return finish(all, cfg, static_cast<std::uint64_t>(all.count()));
}

}  // namespace r0sys::sim
