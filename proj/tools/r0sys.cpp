// r0sys command-line front end.
//
//   r0sys analytic <model> [params]    closed-form / numerical R0_sys
//   r0sys simulate <model> [params]    Monte Carlo estimate with CI
//   r0sys sweep <study> [params]       intervention tables (CSV / JSON)
//
// Exit codes: 0 success, 2 invalid input, 3 no convergence.

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "r0sys/analytic.hpp"
#include "r0sys/interventions.hpp"
#include "r0sys/markov.hpp"
#include "r0sys/sim.hpp"

namespace {

using namespace r0sys;
using nlohmann::ordered_json;
using interventions::format_number;

constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();

struct Params {
  double lambda = kUnset, mu = kUnset, lambda_h = kUnset, lambda_l = kUnset, f = kUnset;
  double alpha = kUnset, p = kUnset;
  int c = 1, k = 0, m = 1, d = 1;
  std::string mix, mask, rates = "constant";
  int rows = 4, cols = 3;
  double spacing = 6.0, scale = 18.0, airflow_rate = 0.0;
  std::string airflow;
  std::string after_term = "exact";

  // simulation
  std::uint64_t seed = 1, tagged = 100000;
  int replications = 1, batches = 30;
  std::string estimator = "conditional";
  std::string trace_path;

  // sweeps
  std::string grid;
  double step = kUnset;
  std::string oracle;

  // output
  std::string format = "text", out;
};

struct Run {
  std::string command;
  CLI::App* sub = nullptr;
  bool seeded = false;
};

// ---------------------------------------------------------------------------
// Option registration.

void rate(CLI::App* s, const std::string& flag, double& v, const std::string& help) {
  s->add_option(flag, v, help)->required();
}

void output_options(CLI::App* s, Params& p) {
  s->add_option("--format", p.format, "text, csv or json")
      ->check(CLI::IsMember({"text", "csv", "json"}))
      ->capture_default_str();
  s->add_option("--out", p.out, "write to file instead of stdout");
}

void transmission_options(CLI::App* s, Params& p) {
  auto* a = s->add_option("--alpha", p.alpha, "exponential transmission rate");
  auto* mix = s->add_option("--mix", p.mix, "hyperexponential thresholds q1:a1,q2:a2,...");
  auto* mask = s->add_option("--mask", p.mask, "mask mixture q,a_MM,a_MU,a_UM,a_UU");
  a->excludes(mix)->excludes(mask);
  mix->excludes(mask);
}

void sim_options(CLI::App* s, Params& p) {
  s->add_option("--seed", p.seed, "random seed")->capture_default_str();
  s->add_option("--tagged", p.tagged, "tagged customers (all replications)")->capture_default_str();
  s->add_option("--replications", p.replications, "independent replications")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  s->add_option("--batches", p.batches, "batch means per replication")->capture_default_str();
  s->add_option("--estimator", p.estimator, "conditional or bernoulli")
      ->check(CLI::IsMember({"conditional", "bernoulli"}))
      ->capture_default_str();
}

void model_options(CLI::App* s, const std::string& model, Params& p, bool simulate) {
  if (model == "priority" || model == "windows") {
    rate(s, "--lambda-h", p.lambda_h, "high-risk arrival rate");
    rate(s, "--lambda-l", p.lambda_l, "low-risk arrival rate");
  } else {
    rate(s, "--lambda", p.lambda, model == "dmdm1" ? "batch arrival rate" : "arrival rate");
  }
  rate(s, "--mu", p.mu, model == "dmdm1" ? "reciprocal time in system" : "service rate");
  if (model == "mmc" || model == "mmck") s->add_option("--c", p.c, "servers")->required();
  if (model == "mmck") s->add_option("--k", p.k, "maximum occupancy")->required();
  if (model == "windows") s->add_option("--f", p.f, "fraction of time open to high-risk")->required();
  if (model == "dmdm1") s->add_option("--m", p.m, "batch size")->required();
  if (model == "priority" && !simulate) {
    s->add_option("--after-term", p.after_term, "exact or published")
        ->check(CLI::IsMember({"exact", "published"}))
        ->capture_default_str();
  }
  if (model == "distance") {
    s->add_option("--alpha", p.alpha, "transmission rate")->required();
    s->add_option("--d", p.d, "maximum infectious distance in positions")->required();
  } else if (model == "position") {
    s->add_option("--rates", p.rates, "constant or gravity-snake")
        ->check(CLI::IsMember({"constant", "gravity-snake"}))
        ->capture_default_str();
    s->add_option("--alpha", p.alpha, "rate for --rates constant");
    s->add_option("--rows", p.rows, "snake rows")->capture_default_str();
    s->add_option("--cols", p.cols, "snake columns")->capture_default_str();
    s->add_option("--spacing", p.spacing, "distance between positions")->capture_default_str();
    s->add_option("--scale", p.scale, "gravity numerator")->capture_default_str();
    s->add_option("--airflow", p.airflow, "ordered pairs m>j,... with --airflow-rate");
    s->add_option("--airflow-rate", p.airflow_rate, "rate for airflow pairs")->capture_default_str();
  } else if (model == "multi") {
    s->add_option("--alpha", p.alpha, "transmission rate")->required();
  } else {
    transmission_options(s, p);
  }
  s->add_option("--p", p.p, "probability an arrival is infectious");
  if (model == "multi") s->get_option("--p")->required();
}

// ---------------------------------------------------------------------------
// Construction of library inputs.

double parse_double(const std::string& s) {
  std::size_t used = 0;
  const double x = std::stod(s, &used);
  if (used != s.size()) throw Error(ErrorKind::BadRange, "number '" + s + "'");
  return x;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, sep);)
    if (!part.empty()) out.push_back(part);
  return out;
}

TransmissionSpec transmission(const Params& p) {
  if (!p.mix.empty()) {
    Hyperexponential h;
    for (const auto& part : split(p.mix, ',')) {
      const auto colon = part.find(':');
      if (colon == std::string::npos) throw Error(ErrorKind::BadRange, "mix entry '" + part + "'");
      h.components.push_back({parse_double(part.substr(0, colon)), parse_double(part.substr(colon + 1))});
    }
    return h;
  }
  if (!p.mask.empty()) {
    const auto v = split(p.mask, ',');
    if (v.size() != 5) throw Error(ErrorKind::BadRange, "mask needs q,a_MM,a_MU,a_UM,a_UU");
    return mask_mixture(parse_double(v[0]), parse_double(v[1]), parse_double(v[2]), parse_double(v[3]),
                        parse_double(v[4]));
  }
  if (std::isnan(p.alpha)) throw Error(ErrorKind::BadRange, "alpha (or --mix / --mask) required");
  return Exponential{p.alpha};
}

PositionDependent position_rates(const Params& p) {
  if (p.rates == "constant") {
    if (std::isnan(p.alpha)) throw Error(ErrorKind::BadRange, "alpha required for constant rates");
    PositionDependent r;
    r.rate = [a = p.alpha](int, int) { return a; };
    r.label = "constant";
    return r;
  }
  std::vector<std::pair<int, int>> pairs;
  for (const auto& part : split(p.airflow, ',')) {
    const auto gt = part.find('>');
    if (gt == std::string::npos) throw Error(ErrorKind::BadRange, "airflow pair '" + part + "'");
    pairs.emplace_back(std::stoi(part.substr(0, gt)), std::stoi(part.substr(gt + 1)));
  }
  return snake_queue_rates(p.rows, p.cols, p.spacing, p.scale, pairs, p.airflow_rate);
}

QueueSpec queue(const std::string& model, const Params& p) {
  if (model == "mmc") return MMC{p.lambda, p.mu, p.c};
  if (model == "mmck") return MMCK{p.lambda, p.mu, p.c, p.k};
  if (model == "priority") return PriorityMM1{p.lambda_h, p.lambda_l, p.mu};
  if (model == "windows") return Windows{p.lambda_h, p.lambda_l, p.mu, p.f};
  if (model == "dmdm1") return DmDm1{p.lambda, p.mu, p.m};
  return MM1{p.lambda, p.mu};
}

TransmissionSpec model_transmission(const std::string& model, const Params& p) {
  if (model == "distance") return DistanceThreshold{p.alpha, p.d};
  if (model == "position") return position_rates(p);
  if (model == "multi") return Exponential{p.alpha};
  return transmission(p);
}

double total_arrival_rate(const QueueSpec& q) {
  return std::visit(
      [](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, PriorityMM1> || std::is_same_v<T, Windows>) {
          return m.lambda_h + m.lambda_l;
        } else if constexpr (std::is_same_v<T, DmDm1>) {
          return m.lambda * m.m;
        } else {
          return m.lambda;
        }
      },
      q);
}

sim::SimConfig sim_config(const Params& p) {
  sim::SimConfig cfg;
  cfg.seed = p.seed;
  cfg.measurement_window = p.tagged;
  cfg.replications = p.replications;
  cfg.batches = p.batches;
  cfg.estimator = p.estimator == "bernoulli" ? sim::Estimator::Bernoulli : sim::Estimator::Conditional;
  return cfg;
}

// ---------------------------------------------------------------------------
// Output.

ordered_json manifest(const Run& run, const Params& p) {
  ordered_json m;
  m["command"] = run.command;
  m["version"] = kVersion;
  if (run.seeded) m["seed"] = p.seed;
  ordered_json params = ordered_json::object();
  for (const CLI::Option* opt : run.sub->get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "format" || name == "out" || name == "config")
      continue;
    std::string value;
    if (opt->count() > 0) {
      const auto& results = opt->results();
      for (std::size_t i = 0; i < results.size(); ++i) value += (i ? "," : "") + results[i];
    } else {
      value = opt->get_default_str();
    }
    if (!value.empty()) params[name] = value;
  }
  m["parameters"] = params;
  return m;
}

using Fields = std::vector<std::pair<std::string, double>>;

void emit(std::ostream& os, const Run& run, const Params& p, const Fields& fields) {
  if (p.format == "json") {
    ordered_json j;
    j["manifest"] = manifest(run, p);
    ordered_json result = ordered_json::object();
    for (const auto& [k, v] : fields) {
      if (std::isfinite(v)) result[k] = v;
      else result[k] = format_number(v);
    }
    j["result"] = result;
    os << j.dump(2) << '\n';
    return;
  }
  const ordered_json m = manifest(run, p);
  if (p.format == "csv") {
    os << "# r0sys result v1\n# command=" << run.command << "\n# version=" << kVersion << '\n';
    if (run.seeded) os << "# seed=" << p.seed << '\n';
    for (const auto& [k, v] : m["parameters"].items()) os << "# " << k << '=' << v.get<std::string>() << '\n';
    for (std::size_t i = 0; i < fields.size(); ++i) os << (i ? "," : "") << fields[i].first;
    os << '\n';
    for (std::size_t i = 0; i < fields.size(); ++i) os << (i ? "," : "") << format_number(fields[i].second);
    os << '\n';
    return;
  }
  os << "# r0sys " << kVersion << ' ' << run.command << '\n';
  os << "# parameters:";
  for (const auto& [k, v] : m["parameters"].items()) os << ' ' << k << '=' << v.get<std::string>();
  os << '\n';
  for (const auto& [k, v] : fields) os << k << '=' << format_number(v) << '\n';
}

template <class F>
void with_output(const Params& p, F&& write) {
  if (p.out.empty()) {
    write(std::cout);
    return;
  }
  std::ofstream file(p.out, std::ios::binary);
  if (!file) throw Error(ErrorKind::BadRange, "cannot open --out " + p.out);
  write(file);
}

void add_estimate(Fields& f, const std::string& prefix, const SimEstimate& e) {
  f.emplace_back(prefix + "mean", e.mean);
  f.emplace_back(prefix + "std_error", e.std_error);
  f.emplace_back(prefix + "ci_low", e.ci_low);
  f.emplace_back(prefix + "ci_high", e.ci_high);
}

// ---------------------------------------------------------------------------
// Commands.

void cmd_analytic(const Run& run, const std::string& model, const Params& p) {
  const QueueSpec q = queue(model, p);
  RiskReport r;
  if (model == "priority" && p.after_term == "published") {
    if (!std::holds_alternative<Exponential>(transmission(p)))
      throw Error(ErrorKind::UnsupportedCombination, "published after-term needs --alpha");
    r = markov::priority_r0(p.lambda_h, p.lambda_l, p.mu, p.alpha, markov::kDefaultTol,
                            markov::AfterTerm::AsPublished);
  } else {
    r = analytic::evaluate(q, model_transmission(model, p));
  }
  Fields f{{"r0_sys", r.r0_sys}};
  if (r.r0_h) f.emplace_back("r0_h", *r.r0_h);
  if (r.r0_l) f.emplace_back("r0_l", *r.r0_l);
  if (r.truncation_error) f.emplace_back("truncation_error", *r.truncation_error);
  if (model == "mmck") f.emplace_back("loss_probability", analytic::mmck_loss_probability(p.lambda, p.mu, p.c, p.k));
  if (!std::isnan(p.p)) f.emplace_back("infection_rate", infection_rate(r.r0_sys, total_arrival_rate(q), p.p));
  with_output(p, [&](std::ostream& os) { emit(os, run, p, f); });
}

void cmd_simulate(const Run& run, const std::string& model, const Params& p) {
  const sim::SimConfig cfg = sim_config(p);
  Fields f;
  if (model == "multi") {
    const QueueSpec q = MM1{p.lambda, p.mu};
    const auto e = sim::estimate_multi_infector_rate(q, p.alpha, p.p, cfg);
    add_estimate(f, "rate_", e);
    f.emplace_back("n_samples", static_cast<double>(e.n_samples));
    f.emplace_back("replications", e.replication_count);
    with_output(p, [&](std::ostream& os) { emit(os, run, p, f); });
    return;
  }
  const QueueSpec q = queue(model, p);
  const TransmissionSpec t = model_transmission(model, p);
  SimEstimate total;
  if (const auto* pr = std::get_if<PriorityMM1>(&q); pr && std::holds_alternative<Exponential>(t)) {
    const auto c = sim::estimate_r0_by_class(*pr, std::get<Exponential>(t).alpha, cfg);
    total = c.r0_sys;
    add_estimate(f, "r0_sys_", c.r0_sys);
    add_estimate(f, "r0_h_", c.r0_h);
    add_estimate(f, "r0_l_", c.r0_l);
    f.emplace_back("r0_hbh", c.hbh.mean);
    f.emplace_back("r0_hbl", c.hbl.mean);
    f.emplace_back("r0_lbh", c.lbh.mean);
    f.emplace_back("r0_lbl", c.lbl.mean);
    f.emplace_back("r0_lah", c.lah.mean);
  } else {
    total = sim::estimate_r0(q, t, cfg);
    add_estimate(f, "r0_sys_", total);
  }
  f.emplace_back("n_samples", static_cast<double>(total.n_samples));
  f.emplace_back("replications", total.replication_count);
  if (!std::isnan(p.p)) f.emplace_back("infection_rate", infection_rate(total.mean, total_arrival_rate(q), p.p));
  if (!p.trace_path.empty()) {
    if (std::holds_alternative<Windows>(q)) throw Error(ErrorKind::UnsupportedCombination, "trace for windows");
    std::ofstream tf(p.trace_path);
    if (!tf) throw Error(ErrorKind::BadRange, "cannot open --trace " + p.trace_path);
    sim::write_trace(tf, sim::simulate_trace(q, cfg, 0, (cfg.measurement_window + cfg.replications - 1) / cfg.replications));
  }
  with_output(p, [&](std::ostream& os) { emit(os, run, p, f); });
}

void cmd_sweep(const Run& run, const std::string& study, const Params& p) {
  std::optional<interventions::Oracle> oracle;
  if (p.oracle == "sim") oracle = interventions::Oracle{sim_config(p)};
  interventions::SweepTable t;
  if (study == "occupancy") {
    const int step = std::isnan(p.step) ? 1 : static_cast<int>(p.step);
    t = interventions::occupancy_sweep(p.lambda, p.mu, p.c, p.alpha, interventions::parse_int_grid(p.grid, step), oracle);
  } else if (study == "windows") {
    t = interventions::windows_sweep(p.lambda_h, p.lambda_l, p.mu, p.alpha,
                                     interventions::parse_grid(p.grid, std::isnan(p.step) ? 0.01 : p.step), oracle);
  } else {
    t = interventions::service_rate_sweep(p.lambda, p.mu, p.alpha,
                                          interventions::parse_grid(p.grid, std::isnan(p.step) ? 0.1 : p.step), oracle);
  }
  t.set_meta("command", run.command);
  for (const auto& w : t.warnings) std::cerr << "warning: " << w << '\n';
  with_output(p, [&](std::ostream& os) {
    if (p.format == "json") interventions::write_json(os, t);
    else interventions::write_csv(os, t);
  });
}

int exit_code(const Error& e) { return e.kind() == ErrorKind::NoConvergence ? 3 : 2; }

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transmission risk (R0_sys) in service facilities modelled as queues"};
  app.set_version_flag("--version", kVersion);
  app.set_config("--config", "", "read options from a TOML/INI file (flags override it)");
  app.require_subcommand(1);
  Params p;
  Run run;
  std::string chosen;

  const std::vector<std::string> analytic_models = {"mm1",     "mmc",   "mmck",     "priority",
                                                    "windows", "dmdm1", "distance", "position"};
  auto* analytic = app.add_subcommand("analytic", "evaluate R0_sys from the model formulas");
  analytic->require_subcommand(1);
  for (const auto& m : analytic_models) {
    auto* s = analytic->add_subcommand(m, "analytic " + m);
    model_options(s, m, p, false);
    output_options(s, p);
    s->callback([&, m, s] {
      run = {"analytic " + m, s, false};
      chosen = m;
    });
  }

  auto* simulate = app.add_subcommand("simulate", "estimate R0_sys by discrete-event simulation");
  simulate->require_subcommand(1);
  auto sim_models = analytic_models;
  sim_models.push_back("multi");
  for (const auto& m : sim_models) {
    auto* s = simulate->add_subcommand(m, "simulate " + m);
    model_options(s, m, p, true);
    sim_options(s, p);
    if (m != "multi") s->add_option("--trace", p.trace_path, "dump replication 0 trace to a file");
    output_options(s, p);
    s->callback([&, m, s] {
      run = {"simulate " + m, s, true};
      chosen = m;
    });
  }

  auto* sweep = app.add_subcommand("sweep", "intervention trade-off tables");
  sweep->require_subcommand(1);
  for (const std::string study : {"occupancy", "windows", "service-rate"}) {
    auto* s = sweep->add_subcommand(study, study + " sweep");
    if (study == "windows") {
      rate(s, "--lambda-h", p.lambda_h, "high-risk arrival rate");
      rate(s, "--lambda-l", p.lambda_l, "low-risk arrival rate");
    } else {
      rate(s, "--lambda", p.lambda, "arrival rate");
    }
    rate(s, "--mu", p.mu, "service rate");
    rate(s, "--alpha", p.alpha, "transmission rate");
    if (study == "occupancy") {
      s->add_option("--c", p.c, "servers")->required();
      s->add_option("--k", p.grid, "k grid, a..b or a,b,c")->required();
    } else if (study == "windows") {
      s->add_option("--f", p.grid, "f grid, a..b or a,b,c")->required();
    } else {
      s->add_option("--scale", p.grid, "k_mu grid, a..b or a,b,c")->required();
    }
    s->add_option("--step", p.step, "grid step for a..b");
    s->add_option("--oracle", p.oracle, "sim: add simulated columns")->check(CLI::IsMember({"sim"}));
    sim_options(s, p);
    s->add_option("--format", p.format, "csv or json")
        ->check(CLI::IsMember({"csv", "json", "text"}))
        ->capture_default_str();
    s->add_option("--out", p.out, "write to file instead of stdout");
    s->callback([&, study, s] {
      run = {"sweep " + study, s, p.oracle == "sim"};
      chosen = study;
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  std::cerr << "timestamp=" << utc_timestamp() << '\n';
  try {
    const std::string group = run.command.substr(0, run.command.find(' '));
    if (group == "analytic") cmd_analytic(run, chosen, p);
    else if (group == "simulate") cmd_simulate(run, chosen, p);
    else cmd_sweep(run, chosen, p);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: invalid number: " << e.what() << '\n';
    return 2;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: number out of range: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
