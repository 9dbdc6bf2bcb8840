#include <algorithm>
#include <deque>
#include <ostream>
#include <queue>

#include "r0sys/rng.hpp"
#include "r0sys/sim.hpp"

namespace r0sys::sim {

namespace {

using rng::Stream;
using rng::StreamKind;

// Decides when measurement starts and tracks tagged customers leaving.
class Tagging {
 public:
  Tagging(const SimConfig& cfg, std::uint64_t tagged) : cfg_(cfg), target_(tagged) {}

  // Called for every arrival in order; returns true if the arrival is tagged.
  bool on_arrival(EventTrace& tr, std::size_t id, int in_system) {
    if (!started_ && arrivals_ >= cfg_.warmup_arrivals && empties_ >= cfg_.warmup_cycles) {
      started_ = true;
      tr.first_tagged = id;
    }
    ++arrivals_;
    if (in_system == 0) ++empties_;
    if (started_ && tr.tagged_count < target_) {
      ++tr.tagged_count;
      return true;
    }
    return false;
  }

  void on_tagged_exit() { ++exited_; }
  bool done() const { return started_ && exited_ == target_; }

 private:
  const SimConfig& cfg_;
  std::uint64_t target_;
  std::uint64_t arrivals_ = 0;
  int empties_ = 0;
  bool started_ = false;
  std::uint64_t exited_ = 0;
};

struct Departure {
  double time;
  std::size_t id;
  bool operator>(const Departure& o) const { return time > o.time || (time == o.time && id > o.id); }
};

EventTrace run_fcfs(double lambda, double mu, int c, int k, const SimConfig& cfg, int rep,
                    std::uint64_t tagged) {
  EventTrace tr;
  tr.single_fcfs = c == 1;
  Tagging tag(cfg, tagged);
  Stream arrivals(cfg.seed, rep, StreamKind::Arrival, 0);
  auto service = [&](std::size_t id) {
    return Stream(cfg.seed, rep, StreamKind::Service, id).exponential_at(0, mu);
  };
  std::priority_queue<Departure, std::vector<Departure>, std::greater<>> busy;
  std::deque<std::size_t> waiting;
  int in_system = 0;
  double t_arrival = arrivals.exponential(lambda);

  for (;;) {
    if (!busy.empty() && busy.top().time <= t_arrival) {
      const auto [t, id] = busy.top();
      busy.pop();
      tr.customers[id].departure = t;
      --in_system;
      if (tr.is_tagged(id)) tag.on_tagged_exit();
      if (!waiting.empty()) {
        const std::size_t next = waiting.front();
        waiting.pop_front();
        tr.customers[next].service_start = t;
        busy.push({t + service(next), next});
      }
      if (tag.done()) {
        tr.horizon = t;
        break;
      }
      continue;
    }
    const double t = t_arrival;
    const std::size_t id = tr.customers.size();
    CustomerRecord& rec = tr.customers.emplace_back();
    rec.id = id;
    rec.arrival = t;
    rec.seen = in_system;
    const bool is_tagged = tag.on_arrival(tr, id, in_system);
    if (k > 0 && in_system >= k) {
      rec.blocked = true;
      if (is_tagged) tag.on_tagged_exit();
    } else {
      ++in_system;
      if (static_cast<int>(busy.size()) < c) {
        rec.service_start = t;
        busy.push({t + service(id), id});
      } else {
        waiting.push_back(id);
      }
    }
    t_arrival += arrivals.exponential(lambda);
    if (tag.done()) {
      tr.horizon = t;
      break;
    }
  }
  return tr;
}

EventTrace run_priority(const PriorityMM1& q, const SimConfig& cfg, int rep, std::uint64_t tagged) {
  EventTrace tr;
  Tagging tag(cfg, tagged);
  Stream arr_h(cfg.seed, rep, StreamKind::Arrival, 0);
  Stream arr_l(cfg.seed, rep, StreamKind::Arrival, 1);
  // Preempted service resumes with a fresh draw (memoryless).
  auto service = [&](const CustomerRecord& r) {
    return Stream(cfg.seed, rep, StreamKind::Service, r.id).exponential_at(r.preemptions, q.mu);
  };
  std::deque<std::size_t> high, low;
  std::size_t serving = 0;
  bool busy = false;
  double t_done = kNever;
  int in_system = 0;
  double t_h = arr_h.exponential(q.lambda_h);
  double t_l = arr_l.exponential(q.lambda_l);

  auto start = [&](std::size_t id, double t) {
    CustomerRecord& r = tr.customers[id];
    if (r.service_start == kNever) r.service_start = t;
    serving = id;
    busy = true;
    t_done = t + service(r);
  };

  for (;;) {
    if (busy && t_done <= std::min(t_h, t_l)) {
      const double t = t_done;
      tr.customers[serving].departure = t;
      --in_system;
      if (tr.is_tagged(serving)) tag.on_tagged_exit();
      busy = false;
      t_done = kNever;
      if (!high.empty()) {
        start(high.front(), t);
        high.pop_front();
      } else if (!low.empty()) {
        start(low.front(), t);
        low.pop_front();
      }
      if (tag.done()) {
        tr.horizon = t;
        break;
      }
      continue;
    }
    const bool is_high = t_h <= t_l;
    const double t = is_high ? t_h : t_l;
    const std::size_t id = tr.customers.size();
    CustomerRecord& rec = tr.customers.emplace_back();
    rec.id = id;
    rec.cls = is_high ? 0 : 1;
    rec.arrival = t;
    rec.seen = in_system;
    tag.on_arrival(tr, id, in_system);
    ++in_system;
    if (is_high) {
      t_h += arr_h.exponential(q.lambda_h);
      if (!busy) {
        start(id, t);
      } else if (tr.customers[serving].cls == 1) {
        ++tr.customers[serving].preemptions;
        low.push_front(serving);
        start(id, t);
      } else {
        high.push_back(id);
      }
    } else {
      t_l += arr_l.exponential(q.lambda_l);
      if (!busy) start(id, t);
      else low.push_back(id);
    }
  }
  return tr;
}

EventTrace run_batches(const DmDm1& q, const SimConfig& cfg, std::uint64_t tagged) {
  EventTrace tr;
  Tagging tag(cfg, tagged);
  const double stay = 1.0 / q.mu;
  for (std::uint64_t b = 0;; ++b) {
    const double t = b / q.lambda;
    for (int j = 0; j < q.m; ++j) {
      const std::size_t id = tr.customers.size();
      CustomerRecord& rec = tr.customers.emplace_back();
      rec.id = id;
      rec.arrival = t;
      rec.service_start = t;
      rec.departure = t + stay;
      rec.seen = j;
      if (tag.on_arrival(tr, id, j)) tag.on_tagged_exit();
    }
    if (tag.done()) {
      tr.horizon = t + stay;
      break;
    }
  }
  return tr;
}

}  // namespace

void validate(const SimConfig& cfg) {
  if (cfg.replications < 1) throw Error(ErrorKind::BadRange, "replications");
  if (cfg.warmup_cycles < 0) throw Error(ErrorKind::BadRange, "warmup");
  if (cfg.batches < 2) throw Error(ErrorKind::BadRange, "batches");
  if (!(cfg.ci_level > 0.0 && cfg.ci_level < 1.0)) throw Error(ErrorKind::BadRange, "ci_level");
  if (cfg.measurement_window < static_cast<std::uint64_t>(cfg.batches) * cfg.replications)
    throw Error(ErrorKind::BadRange, "measurement_window");
}

std::size_t EventTrace::in_system_at_horizon() const {
  std::size_t n = 0;
  for (const auto& c : customers) {
    if (!c.blocked && c.departure > horizon) ++n;
  }
  return n;
}

EventTrace simulate_trace(const QueueSpec& model, const SimConfig& cfg, int replication,
                          std::uint64_t tagged) {
  require_valid(model);
  validate(cfg);
  if (tagged == 0) throw Error(ErrorKind::BadRange, "tagged");
  EventTrace tr = std::visit(
      [&](const auto& q) -> EventTrace {
        using T = std::decay_t<decltype(q)>;
        if constexpr (std::is_same_v<T, MM1>) {
          return run_fcfs(q.lambda, q.mu, 1, 0, cfg, replication, tagged);
        } else if constexpr (std::is_same_v<T, MMC>) {
          return run_fcfs(q.lambda, q.mu, q.c, 0, cfg, replication, tagged);
        } else if constexpr (std::is_same_v<T, MMCK>) {
          return run_fcfs(q.lambda, q.mu, q.c, q.k, cfg, replication, tagged);
        } else if constexpr (std::is_same_v<T, PriorityMM1>) {
          return run_priority(q, cfg, replication, tagged);
        } else if constexpr (std::is_same_v<T, DmDm1>) {
          return run_batches(q, cfg, tagged);
        } else {
          throw Error(ErrorKind::UnsupportedCombination,
                      "windows traces: simulate each class as its own mm1");
        }
      },
      model);
  tr.model = model_name(model);
  return tr;
}

std::vector<std::pair<double, int>> position_history(const EventTrace& trace, std::size_t id) {
  if (!trace.single_fcfs) throw Error(ErrorKind::UnsupportedCombination, "positions need one FCFS server");
  const CustomerRecord& me = trace.customers.at(id);
  if (me.blocked) return {};
  std::vector<double> ahead;
  for (std::size_t j = id; j-- > 0 && static_cast<int>(ahead.size()) < me.seen;) {
    const auto& r = trace.customers[j];
    if (!r.blocked && r.departure > me.arrival) ahead.push_back(r.departure);
  }
  std::sort(ahead.begin(), ahead.end());
  std::vector<std::pair<double, int>> steps;
  int pos = static_cast<int>(ahead.size()) + 1;
  steps.emplace_back(me.arrival, pos);
  for (double t : ahead) steps.emplace_back(t, --pos);
  return steps;
}

void write_trace(std::ostream& os, const EventTrace& trace) {
  os << "# r0sys-trace v1 model=" << trace.model << " first_tagged=" << trace.first_tagged
     << " tagged=" << trace.tagged_count << " horizon=" << trace.horizon << '\n';
  os << "id\tclass\tarrival\tservice_start\tdeparture\tpreemptions\tblocked\tseen\n";
  const auto old = os.precision(17);
  for (const auto& c : trace.customers) {
    os << c.id << '\t' << c.cls << '\t' << c.arrival << '\t' << c.service_start << '\t' << c.departure
       << '\t' << c.preemptions << '\t' << (c.blocked ? 1 : 0) << '\t' << c.seen << '\n';
  }
  os.precision(old);
}

}  // namespace r0sys::sim
