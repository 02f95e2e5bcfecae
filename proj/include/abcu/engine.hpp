#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "abcu/delay_model.hpp"
#include "abcu/metrics.hpp"
#include "abcu/problems.hpp"
#include "abcu/stepsize.hpp"

namespace abcu {

enum class RunMode { Serial, Simulated, Async };

/// How workers read shared state. ConsistentSnapshot takes a sequence-locked
/// copy (every read equals some fully written iterate); Relaxed reads entries
/// without any cross-entry consistency.
enum class ReadMode { ConsistentSnapshot, Relaxed };

/// How partial gradients are formed: Recompute evaluates them from the read
/// snapshot; CachedResidual keeps a shared residual accumulation updated
/// atomically after each block write.
enum class GradMode { Recompute, CachedResidual };

/// Called after each completed update in the single-threaded modes with the
/// 0-based iteration index, the block written, and the new iterate.
using IterationObserver =
    std::function<void(std::int64_t, int, const Eigen::VectorXd&)>;

struct RunConfig {
  RunMode mode = RunMode::Serial;
  std::int64_t epochs = 1;  // one epoch = m iterations
  StepsizeChoice stepsize;
  std::uint64_t seed = 0;
  std::int64_t trace_every = 0;  // iterations between samples; 0 = once per epoch
  bool trace_grad_map = true;
  IterationObserver observer;  // serial and simulated runners only

  // simulated mode
  std::optional<DelaySpec> delay;
  std::uint64_t history = 0;  // ring size; 0 = horizon(1e-6) capped at 4096
  bool record_step_norms = false;  // per-iteration ||d_k||^2 of the delayed
                                   // virtual full update (costly; diagnostics)

  // async mode
  int threads = 1;
  ReadMode read_mode = ReadMode::ConsistentSnapshot;

  // Default: Recompute for serial/simulated, CachedResidual for async.
  std::optional<GradMode> grad_mode;

  std::optional<Eigen::VectorXd> x0;  // overrides problem.initial_point()
};

struct RunResult {
  Eigen::VectorXd x;
  std::vector<TraceSample> trace;
  std::vector<std::uint64_t> delay_histogram;
  std::int64_t iterations = 0;
  double wall_seconds = 0.0;
  std::int64_t clamp_events = 0;  // history-truncated snapshot requests
  bool diverged = false;          // objective left the finite range
  std::vector<double> step_norms_sq;
};

/// One block update per iteration with the freshest iterate (zero delay),
/// uniformly random blocks; exactly epochs * m iterations, deterministic for
/// a fixed seed.
RunResult run_serial(const Problem& problem, const RunConfig& config);

/// Single-threaded execution with synthetic delays: at step k the gradient
/// snapshot is the iterate from j_k steps ago (j_k drawn from config.delay,
/// independent of the block choice), reconstructed from a ring of the last
/// `history` block writes. Requests older than the ring fall back to the
/// oldest retained iterate and count as clamp events; requests before step 0
/// resolve to the initial point.
RunResult run_simulated(const Problem& problem, const RunConfig& config);

/// Real multithreaded execution: `threads` workers share the iterate and a
/// global counter; each update measures its delay as the counter difference
/// between snapshot read and write.
RunResult run_async(const Problem& problem, const RunConfig& config);

RunResult run(const Problem& problem, const RunConfig& config);

/// d = prox_{eta R}(x - eta grad f(x)) - x, applied blockwise, and its norm;
/// zero exactly at fixed points of the update.
std::pair<Eigen::VectorXd, double> gradient_map(const Problem& problem,
                                                const Eigen::VectorXd& x,
                                                double eta);

/// Trace equality ignoring wall-clock fields.
bool traces_identical(const std::vector<TraceSample>& a,
                      const std::vector<TraceSample>& b);

}  // namespace abcu
