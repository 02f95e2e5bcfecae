#include "abcu/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "abcu/metrics.hpp"

namespace abcu::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

struct KeyValues {
  // section -> key -> value
  std::map<std::string, std::map<std::string, std::string>> data;

  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback) const {
    auto s = data.find(section);
    if (s == data.end()) return fallback;
    auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
  }
  bool has(const std::string& section, const std::string& key) const {
    auto s = data.find(section);
    return s != data.end() && s->second.count(key) > 0;
  }
};

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::string section;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument("bad section header at line " +
                                    std::to_string(lineno));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("expected key = value at line " +
                                  std::to_string(lineno));
    kv.data[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

double to_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (...) {
    throw std::invalid_argument("cannot parse " + what + ": '" + s + "'");
  }
}

std::int64_t to_int(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (...) {
    throw std::invalid_argument("cannot parse " + what + ": '" + s + "'");
  }
}

bool to_bool(const std::string& s, const std::string& what) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw std::invalid_argument("cannot parse " + what + ": '" + s + "'");
}

}  // namespace

std::string ProblemSpec::canonical() const {
  std::ostringstream os;
  os << "kind=" << kind << ";file=" << file << ";rows=" << rows
     << ";cols=" << cols << ";blocks=" << blocks << ";rank=" << rank
     << ";dim=" << dim << ";lambda=" << format_double(lambda)
     << ";mu=" << format_double(mu) << ";L=" << format_double(L)
     << ";seed=" << seed;
  return os.str();
}

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str(), fs::path(path).stem().string());
}

ExperimentConfig ExperimentConfig::parse_text(const std::string& text,
                                              const std::string& label) {
  const KeyValues kv = parse_key_values(text);
  ExperimentConfig c;
  c.label = label;

  c.problem.kind = kv.get("problem", "kind", c.problem.kind);
  c.problem.file = kv.get("problem", "file", "");
  c.problem.rows = to_int(kv.get("problem", "rows", "0"), "problem.rows");
  c.problem.cols = to_int(kv.get("problem", "cols", "0"), "problem.cols");
  c.problem.blocks =
      static_cast<int>(to_int(kv.get("problem", "blocks", "0"), "problem.blocks"));
  c.problem.rank =
      static_cast<int>(to_int(kv.get("problem", "rank", "0"), "problem.rank"));
  c.problem.dim = to_int(kv.get("problem", "dim", "0"), "problem.dim");
  c.problem.lambda =
      to_double(kv.get("problem", "lambda", "0"), "problem.lambda");
  c.problem.mu = to_double(kv.get("problem", "mu", "1"), "problem.mu");
  c.problem.L = to_double(kv.get("problem", "L", "10"), "problem.L");
  c.problem.seed = static_cast<std::uint64_t>(
      to_int(kv.get("problem", "seed", "0"), "problem.seed"));

  c.run.mode = kv.get("run", "mode", c.run.mode);
  c.run.delay = kv.get("run", "delay", c.run.delay);
  c.run.epochs = to_int(kv.get("run", "epochs", "1"), "run.epochs");
  c.run.trace_every =
      to_int(kv.get("run", "trace_every", "0"), "run.trace_every");
  c.run.seed = static_cast<std::uint64_t>(
      to_int(kv.get("run", "seed", "0"), "run.seed"));
  c.run.seeds = static_cast<int>(to_int(kv.get("run", "seeds", "1"), "run.seeds"));
  c.run.threads =
      static_cast<int>(to_int(kv.get("run", "threads", "1"), "run.threads"));
  c.run.read_mode = kv.get("run", "read_mode", c.run.read_mode);
  c.run.grad_mode = kv.get("run", "grad_mode", c.run.grad_mode);
  c.run.history = static_cast<std::uint64_t>(
      to_int(kv.get("run", "history", "0"), "run.history"));
  c.run.trace_grad_map =
      to_bool(kv.get("run", "trace_grad_map", "true"), "run.trace_grad_map");

  c.stepsize.regime = kv.get("stepsize", "regime", c.stepsize.regime);
  c.stepsize.safety =
      to_double(kv.get("stepsize", "safety", "0.99"), "stepsize.safety");
  c.stepsize.rho = kv.get("stepsize", "rho", "auto");
  c.stepsize.p = kv.get("stepsize", "p", "auto");
  c.stepsize.tau = to_double(kv.get("stepsize", "tau", "0"), "stepsize.tau");
  c.stepsize.eta = to_double(kv.get("stepsize", "eta", "0"), "stepsize.eta");

  c.out_dir = kv.get("output", "dir", c.out_dir);
  return c;
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream os;
  os << "[problem]\n"
     << "kind = " << problem.kind << "\n";
  if (!problem.file.empty()) os << "file = " << problem.file << "\n";
  os << "rows = " << problem.rows << "\n"
     << "cols = " << problem.cols << "\n"
     << "blocks = " << problem.blocks << "\n"
     << "rank = " << problem.rank << "\n"
     << "dim = " << problem.dim << "\n"
     << "lambda = " << format_double(problem.lambda) << "\n"
     << "mu = " << format_double(problem.mu) << "\n"
     << "L = " << format_double(problem.L) << "\n"
     << "seed = " << problem.seed << "\n"
     << "[run]\n"
     << "mode = " << run.mode << "\n"
     << "delay = " << run.delay << "\n"
     << "epochs = " << run.epochs << "\n"
     << "trace_every = " << run.trace_every << "\n"
     << "seed = " << run.seed << "\n"
     << "seeds = " << run.seeds << "\n"
     << "threads = " << run.threads << "\n"
     << "read_mode = " << run.read_mode << "\n"
     << "grad_mode = " << run.grad_mode << "\n"
     << "history = " << run.history << "\n"
     << "trace_grad_map = " << (run.trace_grad_map ? "true" : "false") << "\n"
     << "[stepsize]\n"
     << "regime = " << stepsize.regime << "\n"
     << "safety = " << format_double(stepsize.safety) << "\n"
     << "rho = " << stepsize.rho << "\n"
     << "p = " << stepsize.p << "\n"
     << "tau = " << format_double(stepsize.tau) << "\n"
     << "eta = " << format_double(stepsize.eta) << "\n"
     << "[output]\n"
     << "dir = " << out_dir << "\n";
  return os.str();
}

std::uint64_t config_hash(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::unique_ptr<Problem> build_problem(const ProblemSpec& spec) {
  if (!spec.file.empty()) return load_instance(spec.file);
  if (spec.kind == "lasso") {
    if (spec.rows < 1 || spec.cols < 1 || spec.blocks < 1)
      throw std::invalid_argument("lasso needs rows, cols and blocks");
    std::optional<double> lambda;
    if (spec.lambda > 0.0) lambda = spec.lambda;
    return std::make_unique<LassoProblem>(LassoProblem::generate(
        static_cast<int>(spec.rows), static_cast<int>(spec.cols), spec.blocks,
        lambda, spec.seed));
  }
  if (spec.kind == "nmf") {
    if (spec.rows < 1 || spec.cols < 1 || spec.rank < 1)
      throw std::invalid_argument("nmf needs rows, cols and rank");
    return std::make_unique<NmfProblem>(NmfProblem::generate(
        static_cast<int>(spec.rows), static_cast<int>(spec.cols), spec.rank,
        spec.seed));
  }
  if (spec.kind == "quadratic") {
    if (spec.dim < 1) throw std::invalid_argument("quadratic needs dim");
    return std::make_unique<QuadraticProblem>(QuadraticProblem::generate(
        static_cast<int>(spec.dim), spec.mu, spec.L, spec.seed));
  }
  throw std::invalid_argument("unknown problem kind: " + spec.kind);
}

DelaySpec parse_delay(const std::string& text) {
  const auto colon = text.find(':');
  const std::string head = colon == std::string::npos ? text : text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (head == "poisson") return DelaySpec::poisson(to_double(arg, "delay rate"));
  if (head == "deterministic")
    return DelaySpec::deterministic(
        static_cast<std::uint64_t>(to_int(arg, "delay value")));
  if (head == "empirical") return load_empirical(arg);
  throw std::invalid_argument("unknown delay spec: " + text);
}

DelaySpec stepsize_delay_model(const RunSpec& run) {
  if (run.mode == "simulated") return parse_delay(run.delay);
  if (run.mode == "async")
    return DelaySpec::poisson(static_cast<double>(run.threads - 1));
  return DelaySpec::deterministic(0);
}

StepsizeChoice resolve_stepsize(const StepsizeSpec& spec,
                                const ProblemConstants& constants,
                                const DelaySpec& delay_model) {
  const double p_eff =
      spec.p == "auto" ? delay_model.mean() : to_double(spec.p, "stepsize.p");
  if (spec.regime == "explicit") {
    if (!(spec.eta > 0.0))
      throw std::invalid_argument("explicit regime needs eta > 0");
    StepsizeChoice s;
    s.eta = spec.eta;
    s.bound = spec.eta;
    s.safety = 1.0;
    s.regime = Regime::ExpectedDelayExperiment;
    return s;
  }
  if (spec.regime == "expected")
    return eta_experiment(constants, p_eff, Regime::ExpectedDelayExperiment);
  if (spec.regime == "max") {
    if (!(spec.tau >= 0.0))
      throw std::invalid_argument("max regime needs tau >= 0");
    return eta_experiment(constants, spec.tau, Regime::MaxDelayExperiment);
  }
  if (spec.regime == "smooth_nonconvex")
    return eta_smooth_nonconvex(constants, delay_model.mean(), spec.safety);
  if (spec.regime == "nonsmooth_nonconvex") {
    const double rho_probe = 2.0;  // S does not depend on rho
    const DelayMoments mom = moments(delay_model, rho_probe);
    return eta_nonsmooth_nonconvex(constants, mom.S, spec.safety);
  }
  const double rho_eff =
      spec.rho == "auto" ? choose_rho(p_eff) : to_double(spec.rho, "stepsize.rho");
  const DelayMoments mom = moments(delay_model, rho_eff);
  if (spec.regime == "smooth_convex")
    return eta_smooth_convex(constants, mom, spec.safety);
  if (spec.regime == "nonsmooth_convex")
    return eta_nonsmooth_convex(constants, mom, spec.safety);
  throw std::invalid_argument("unknown stepsize regime: " + spec.regime);
}

RunConfig resolve_run(const ExperimentConfig& config, const Problem& problem) {
  RunConfig rc;
  if (config.run.mode == "serial") {
    rc.mode = RunMode::Serial;
  } else if (config.run.mode == "simulated") {
    rc.mode = RunMode::Simulated;
    rc.delay = parse_delay(config.run.delay);
  } else if (config.run.mode == "async") {
    rc.mode = RunMode::Async;
    rc.threads = config.run.threads;
  } else {
    throw std::invalid_argument("unknown run mode: " + config.run.mode);
  }
  rc.epochs = config.run.epochs;
  rc.seed = config.run.seed;
  rc.trace_every = config.run.trace_every;
  rc.trace_grad_map = config.run.trace_grad_map;
  rc.history = config.run.history;
  if (config.run.read_mode == "consistent_snapshot")
    rc.read_mode = ReadMode::ConsistentSnapshot;
  else if (config.run.read_mode == "relaxed")
    rc.read_mode = ReadMode::Relaxed;
  else
    throw std::invalid_argument("unknown read mode: " + config.run.read_mode);
  if (config.run.grad_mode == "recompute")
    rc.grad_mode = GradMode::Recompute;
  else if (config.run.grad_mode == "cached")
    rc.grad_mode = GradMode::CachedResidual;
  else if (config.run.grad_mode != "auto")
    throw std::invalid_argument("unknown grad mode: " + config.run.grad_mode);

  rc.stepsize = resolve_stepsize(config.stepsize, problem.constants(),
                                 stepsize_delay_model(config.run));
  return rc;
}

namespace {

json moments_json(const DelaySpec& delay_model, const StepsizeChoice& choice) {
  if (!choice.rho_used) return nullptr;
  const DelayMoments mom = moments(delay_model, *choice.rho_used);
  return json{{"rho", mom.rho},
              {"T", mom.T},
              {"S", mom.S},
              {"M_rho", mom.M_rho},
              {"N_rho", mom.N_rho},
              {"gamma1", mom.gamma1},
              {"gamma2", mom.gamma2},
              {"method",
               mom.method == MomentMethod::ClosedForm ? "closed_form"
                                                      : "truncated_sum"},
              {"truncation_error_bound", mom.truncation_error_bound}};
}

json stepsize_json(const StepsizeChoice& s) {
  json j{{"eta", s.eta},
         {"bound", s.bound},
         {"safety", s.safety},
         {"regime", regime_name(s.regime)}};
  if (s.rho_used) j["rho"] = *s.rho_used;
  if (s.rate) {
    json r;
    r["kind"] =
        s.rate->kind == RatePrediction::Kind::Linear ? "linear" : "sublinear";
    if (s.rate->linear_factor) r["linear_factor"] = *s.rate->linear_factor;
    if (s.rate->D) r["D"] = *s.rate->D;
    j["rate"] = r;
  }
  return j;
}

}  // namespace

int cmd_run(const ExperimentConfig& config) {
  const auto problem = build_problem(config.problem);
  const RunConfig rc = resolve_run(config, *problem);

  fs::create_directories(config.out_dir);
  const RunResult result = run(*problem, rc);

  write_trace_csv((fs::path(config.out_dir) / "trace.csv").string(),
                  result.trace);
  write_histogram_csv((fs::path(config.out_dir) / "delays.csv").string(),
                      result.delay_histogram);

  const std::string config_text = config.to_text();
  json summary;
  summary["label"] = config.label;
  summary["problem"] = config.problem.kind;
  summary["dimension"] = problem->dimension();
  summary["blocks"] = problem->partition().m();
  summary["iterations"] = result.iterations;
  summary["epochs"] = config.run.epochs;
  summary["seed"] = config.run.seed;
  summary["initial_objective"] =
      result.trace.empty() ? nullptr : json(result.trace.front().objective);
  summary["final_objective"] =
      result.trace.empty() ? nullptr : json(result.trace.back().objective);
  summary["wall_seconds"] = result.wall_seconds;
  summary["clamp_events"] = result.clamp_events;
  summary["diverged"] = result.diverged;
  summary["stepsize"] = stepsize_json(rc.stepsize);
  summary["moments"] =
      moments_json(stepsize_delay_model(config.run), rc.stepsize);
  summary["config"] = config_text;
  summary["config_hash"] = config_hash(config_text);
  if (rc.mode == RunMode::Async) {
    const DelayReport rep =
        delay_report(result.delay_histogram, config.run.threads);
    summary["delay_report"] = {{"p_hat", rep.p_hat},
                               {"kl_vs_expected", rep.kl_vs_expected},
                               {"kl_vs_fit", rep.kl_vs_fit},
                               {"note", rep.note}};
  }
  std::ofstream out(fs::path(config.out_dir) / "summary.json");
  out << summary.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write summary.json");

  const std::int64_t iters = result.iterations;
  if (iters > 0 && result.clamp_events * 100 > iters)
    std::cerr << "warning: " << result.clamp_events << "/" << iters
              << " snapshots were clamped; increase [run] history\n";

  if (result.diverged) {
    std::cerr << "numeric divergence: objective left the finite range "
                 "(stepsize too large?); partial trace kept\n";
    return 2;
  }
  std::cout << config.label << ": " << result.iterations << " iterations, "
            << "objective " << format_double(result.trace.back().objective)
            << ", eta " << format_double(rc.stepsize.eta) << "\n";
  return 0;
}

int cmd_stepsize(const ExperimentConfig& config, bool json_output) {
  const auto problem = build_problem(config.problem);
  const ProblemConstants constants = problem->constants();
  const DelaySpec model = stepsize_delay_model(config.run);
  const double p_eff = config.stepsize.p == "auto"
                           ? model.mean()
                           : to_double(config.stepsize.p, "stepsize.p");
  const double tau = config.stepsize.tau;

  struct Row {
    std::string name;
    StepsizeChoice choice;
    std::string error;
  };
  std::vector<Row> rows;
  auto add = [&](const std::string& name, auto&& fn) {
    Row r;
    r.name = name;
    try {
      r.choice = fn();
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    rows.push_back(std::move(r));
  };

  StepsizeSpec s = config.stepsize;
  add("smooth_nonconvex", [&] {
    StepsizeSpec t = s;
    t.regime = "smooth_nonconvex";
    return resolve_stepsize(t, constants, model);
  });
  add("smooth_convex", [&] {
    StepsizeSpec t = s;
    t.regime = "smooth_convex";
    return resolve_stepsize(t, constants, model);
  });
  add("nonsmooth_nonconvex", [&] {
    StepsizeSpec t = s;
    t.regime = "nonsmooth_nonconvex";
    return resolve_stepsize(t, constants, model);
  });
  add("nonsmooth_convex", [&] {
    StepsizeSpec t = s;
    t.regime = "nonsmooth_convex";
    return resolve_stepsize(t, constants, model);
  });
  add("expected_delay(p=" + format_double(p_eff) + ")", [&] {
    return eta_experiment(constants, p_eff, Regime::ExpectedDelayExperiment);
  });
  add("max_delay(tau=" + format_double(tau) + ")", [&] {
    return eta_experiment(constants, tau, Regime::MaxDelayExperiment);
  });

  if (json_output) {
    json out = json::array();
    for (const auto& r : rows) {
      json j;
      j["name"] = r.name;
      if (r.error.empty())
        j["stepsize"] = stepsize_json(r.choice);
      else
        j["error"] = r.error;
      out.push_back(j);
    }
    json doc;
    doc["constants"] = {{"m", constants.m},
                        {"L_c", constants.L_c},
                        {"L_r", constants.L_r},
                        {"L_f", constants.L_f},
                        {"kappa", constants.kappa()}};
    doc["delay_model"] = model.describe();
    doc["rows"] = out;
    std::cout << doc.dump(2) << "\n";
    return 0;
  }

  std::printf("problem %s: m=%d  L_c=%.6g  L_r=%.6g  L_f=%.6g  kappa=%.6g\n",
              config.problem.kind.c_str(), constants.m, constants.L_c,
              constants.L_r, constants.L_f, constants.kappa());
  std::printf("delay model: %s\n", model.describe().c_str());
  std::printf("%-28s %-14s %-14s %-8s %s\n", "regime", "eta", "bound",
              "safety", "rho");
  for (const auto& r : rows) {
    if (!r.error.empty()) {
      std::printf("%-28s unavailable: %s\n", r.name.c_str(), r.error.c_str());
      continue;
    }
    std::printf("%-28s %-14.6g %-14.6g %-8.3g %s\n", r.name.c_str(),
                r.choice.eta, r.choice.bound, r.choice.safety,
                r.choice.rho_used ? format_double(*r.choice.rho_used).c_str()
                                  : "-");
  }
  return 0;
}

int cmd_compare(const std::vector<ExperimentConfig>& configs,
                const std::string& out_dir) {
  if (configs.size() < 2)
    throw std::invalid_argument("compare needs at least two configs");
  const std::string problem_id = configs.front().problem.canonical();
  const int seeds = configs.front().run.seeds;
  const std::int64_t epochs = configs.front().run.epochs;
  const std::int64_t cadence = configs.front().run.trace_every;
  const std::uint64_t seed0 = configs.front().run.seed;
  for (const auto& c : configs) {
    if (c.problem.canonical() != problem_id)
      throw std::invalid_argument(
          "compare configs must share one problem instance");
    if (c.run.seeds != seeds || c.run.epochs != epochs ||
        c.run.trace_every != cadence || c.run.seed != seed0)
      throw std::invalid_argument(
          "compare configs must share seeds, epochs and trace cadence");
    if (c.run.mode == "async")
      throw std::invalid_argument(
          "compare averages aligned traces; use serial or simulated runs");
  }

  const auto problem = build_problem(configs.front().problem);
  std::vector<std::vector<double>> columns;
  std::vector<std::string> headers{"epoch"};
  std::vector<double> epochs_col;

  for (const auto& c : configs) {
    RunConfig rc = resolve_run(c, *problem);
    std::vector<double> mean;
    for (int s = 0; s < seeds; ++s) {
      rc.seed = c.run.seed + static_cast<std::uint64_t>(s);
      const RunResult r = run(*problem, rc);
      if (r.diverged)
        throw std::runtime_error("divergence in " + c.label + " at seed " +
                                 std::to_string(rc.seed));
      if (mean.empty()) mean.assign(r.trace.size(), 0.0);
      if (mean.size() != r.trace.size())
        throw std::runtime_error("trace length mismatch across seeds");
      for (std::size_t i = 0; i < r.trace.size(); ++i)
        mean[i] += r.trace[i].objective / static_cast<double>(seeds);
      if (epochs_col.empty()) {
        epochs_col.resize(r.trace.size());
        for (std::size_t i = 0; i < r.trace.size(); ++i)
          epochs_col[i] = r.trace[i].epoch;
      }
    }
    headers.push_back(c.label);
    columns.push_back(std::move(mean));
  }

  fs::create_directories(out_dir);
  std::vector<std::vector<double>> all_cols;
  all_cols.push_back(std::move(epochs_col));
  for (auto& c : columns) all_cols.push_back(std::move(c));
  const std::string path = (fs::path(out_dir) / "compare.csv").string();
  write_columns_csv(path, headers, all_cols);

  std::cout << "wrote " << path << "\n";
  for (std::size_t j = 1; j < headers.size(); ++j)
    std::cout << "  " << headers[j] << ": final mean objective "
              << format_double(all_cols[j].back()) << "\n";
  return 0;
}

}  // namespace abcu::cli
