#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "abcu/engine.hpp"
#include "abcu/problems.hpp"

namespace abcu::cli {

// Flat "key = value" sections; see ExperimentConfig::to_text() for the
// normalized form every parse round-trips through.
struct ProblemSpec {
  std::string kind = "lasso";  // lasso | nmf | quadratic
  std::string file;            // instance file; overrides the generator fields
  std::int64_t rows = 0;       // N (lasso) / M (nmf)
  std::int64_t cols = 0;       // n (lasso) / N (nmf)
  int blocks = 0;              // lasso block count
  int rank = 0;                // nmf rank (blocks = 2 * rank)
  std::int64_t dim = 0;        // quadratic dimension (singleton blocks)
  double lambda = 0.0;         // lasso; 0 = 1/N
  double mu = 1.0, L = 10.0;   // quadratic spectrum range
  std::uint64_t seed = 0;

  std::string canonical() const;
};

struct RunSpec {
  std::string mode = "serial";  // serial | simulated | async
  std::string delay = "deterministic:0";
  std::int64_t epochs = 1;
  std::int64_t trace_every = 0;  // 0 = once per epoch
  std::uint64_t seed = 0;
  int seeds = 1;  // seed count for compare averaging (seed, seed+1, ...)
  int threads = 1;
  std::string read_mode = "consistent_snapshot";  // or relaxed
  std::string grad_mode = "auto";                 // auto | recompute | cached
  std::uint64_t history = 0;                      // 0 = auto
  bool trace_grad_map = true;
};

struct StepsizeSpec {
  std::string regime = "expected";  // smooth_nonconvex | smooth_convex |
                                    // nonsmooth_nonconvex | nonsmooth_convex |
                                    // expected | max | explicit
  double safety = 0.99;
  std::string rho = "auto";  // auto = 1 + 1/p (2 below p = 1)
  std::string p = "auto";    // auto = mean of the run's delay model
  double tau = 0.0;          // max-delay parameter
  double eta = 0.0;          // explicit stepsize
};

struct ExperimentConfig {
  ProblemSpec problem;
  RunSpec run;
  StepsizeSpec stepsize;
  std::string out_dir = "out";
  std::string label = "run";

  static ExperimentConfig parse_file(const std::string& path);
  static ExperimentConfig parse_text(const std::string& text,
                                     const std::string& label = "run");
  std::string to_text() const;
};

std::uint64_t config_hash(const std::string& text);

std::unique_ptr<Problem> build_problem(const ProblemSpec& spec);
DelaySpec parse_delay(const std::string& text);

// The delay model the stepsize rules should assume for this run: the
// configured spec when simulating, Poisson(threads - 1) for real threads,
// no delay for serial execution.
DelaySpec stepsize_delay_model(const RunSpec& run);

StepsizeChoice resolve_stepsize(const StepsizeSpec& spec,
                                const ProblemConstants& constants,
                                const DelaySpec& delay_model);

RunConfig resolve_run(const ExperimentConfig& config, const Problem& problem);

// Exit codes: 0 success, 1 usage/config error, 2 numeric failure.
int cmd_run(const ExperimentConfig& config);
int cmd_stepsize(const ExperimentConfig& config, bool json);
int cmd_compare(const std::vector<ExperimentConfig>& configs,
                const std::string& out_dir);

}  // namespace abcu::cli
