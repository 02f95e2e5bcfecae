#include "abcu/engine.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "abcu/rng.hpp"

namespace abcu {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::int64_t trace_cadence(const RunConfig& config, int m) {
  return config.trace_every > 0 ? config.trace_every
                                : static_cast<std::int64_t>(m);
}

void validate_common(const Problem& problem, const RunConfig& config) {
  if (config.epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (!(config.stepsize.eta > 0.0))
    throw std::invalid_argument("stepsize must be positive");
  if (config.x0 && config.x0->size() != problem.dimension())
    throw std::invalid_argument("x0 has the wrong dimension");
}

// Stepsize actually applied to block i. Problems with adaptive curvature
// rescale the configured eta by L_c / L(block); the others use it as is.
double block_eta(const Problem& problem, double eta, double nominal_L_c,
                 int i, const BlockReader& reader) {
  if (!problem.adaptive_lipschitz()) return eta;
  return eta * nominal_L_c / problem.block_lipschitz(i, reader);
}

struct TraceRecorder {
  const Problem& problem;
  const RunConfig& config;
  Clock::time_point t0;
  std::vector<TraceSample> trace;
  bool diverged = false;

  TraceSample make_sample(double iterations_done, const Eigen::VectorXd& x,
                          std::int64_t clamps) {
    TraceSample s;
    s.epoch = iterations_done / static_cast<double>(problem.partition().m());
    s.objective = problem.objective(x);
    s.grad_map_norm = config.trace_grad_map
                          ? gradient_map(problem, x, config.stepsize.eta).second
                          : std::numeric_limits<double>::quiet_NaN();
    s.elapsed_seconds = seconds_since(t0);
    s.clamp_events = clamps;
    return s;
  }

  // Returns false when the objective left the finite range.
  bool record(double iterations_done, const Eigen::VectorXd& x,
              std::int64_t clamps) {
    trace.push_back(make_sample(iterations_done, x, clamps));
    if (!std::isfinite(trace.back().objective)) {
      diverged = true;
      return false;
    }
    return true;
  }
};

// Shared single-threaded core for the serial runner and the delay simulator.
// `use_delay` switches the ring-buffer bookkeeping on; with it off the
// snapshot is the live iterate and no delay stream is consumed.
RunResult run_single_threaded(const Problem& problem, const RunConfig& config,
                              bool use_delay) {
  validate_common(problem, config);
  const auto& part = problem.partition();
  const int m = part.m();
  const std::int64_t total = config.epochs * static_cast<std::int64_t>(m);
  const std::int64_t cadence = trace_cadence(config, m);
  const double nominal_L_c = problem.constants().L_c;

  Eigen::VectorXd x = config.x0 ? *config.x0 : problem.initial_point();
  auto rng_block = make_rng(config.seed, RngStream::Blocks);
  auto rng_delay = make_rng(config.seed, RngStream::Delays);

  const GradMode grad_mode = config.grad_mode.value_or(GradMode::Recompute);
  std::unique_ptr<ResidualCache> cache;
  // The simulator always recomputes from its reconstructed snapshot; the
  // cached path only applies to live-iterate gradients.
  if (grad_mode == GradMode::CachedResidual && !use_delay)
    cache = problem.make_residual_cache(x);

  BlockReader live_reader = [&](int b, Eigen::VectorXd& out) {
    out = x.segment(part.offset(b), part.size(b));
  };

  // Ring of block overwrites; snapshot t is recovered from the live iterate
  // by undoing writes t..k-1, newest first.
  struct Record {
    int block = -1;
    Eigen::VectorXd old_value;
  };
  std::uint64_t H = 1;
  DelaySpec delay = DelaySpec::deterministic(0);
  if (use_delay) {
    if (!config.delay)
      throw std::invalid_argument("simulated mode needs a delay spec");
    delay = *config.delay;
    H = config.history > 0 ? config.history : delay.horizon(1e-6, 4096);
    H = std::max<std::uint64_t>(H, 1);
  }
  std::vector<Record> ring(use_delay ? H : 0);
  Eigen::VectorXd scratch;

  RunResult result;
  result.delay_histogram.assign(1, 0);
  TraceRecorder recorder{problem, config, Clock::now()};
  bool alive = recorder.record(0.0, x, 0);

  std::int64_t k = 0;
  for (; k < total && alive; ++k) {
    const int i = static_cast<int>(uniform_index(rng_block, m));

    const Eigen::VectorXd* snapshot = &x;
    std::uint64_t effective_delay = 0;
    if (use_delay) {
      const std::uint64_t j = delay.sample(rng_delay);
      const std::uint64_t ku = static_cast<std::uint64_t>(k);
      std::uint64_t jj = std::min(j, ku);  // steps before 0 read the start point
      const std::uint64_t avail = std::min(ku, H);
      if (jj > avail) {
        jj = avail;
        ++result.clamp_events;
      }
      effective_delay = jj;
      if (jj == 0) {
        snapshot = &x;
      } else {
        scratch = x;
        for (std::uint64_t back = 1; back <= jj; ++back) {
          const Record& rec = ring[(ku - back) % H];
          scratch.segment(part.offset(rec.block), part.size(rec.block)) =
              rec.old_value;
        }
        snapshot = &scratch;
      }
    }
    if (effective_delay >= result.delay_histogram.size())
      result.delay_histogram.resize(effective_delay + 1, 0);
    ++result.delay_histogram[effective_delay];

    const Eigen::VectorXd& snap = *snapshot;
    BlockReader snap_reader = [&](int b, Eigen::VectorXd& out) {
      out = snap.segment(part.offset(b), part.size(b));
    };

    Eigen::VectorXd g = (cache && !use_delay)
                            ? cache->grad_block(i, live_reader)
                            : problem.partial_grad(i, snap);
    const double eta_k =
        block_eta(problem, config.stepsize.eta, nominal_L_c, i, snap_reader);

    if (config.record_step_norms) {
      // ||d_k||^2 of the virtual full update from the delayed gradient, with
      // each block stepped by its own effective stepsize.
      const Eigen::VectorXd fg = problem.full_grad(snap);
      double dsq = 0.0;
      for (int b = 0; b < m; ++b) {
        const double eta_b =
            block_eta(problem, config.stepsize.eta, nominal_L_c, b, snap_reader);
        const Eigen::VectorXd xb = x.segment(part.offset(b), part.size(b));
        const Eigen::VectorXd db =
            problem.prox_block(
                b, xb - eta_b * fg.segment(part.offset(b), part.size(b)),
                eta_b) -
            xb;
        dsq += db.squaredNorm();
      }
      result.step_norms_sq.push_back(dsq);
    }

    Eigen::VectorXd old_value = x.segment(part.offset(i), part.size(i));
    const Eigen::VectorXd new_value =
        problem.prox_block(i, old_value - eta_k * g, eta_k);
    if (use_delay) ring[static_cast<std::uint64_t>(k) % H] =
        Record{i, old_value};
    x.segment(part.offset(i), part.size(i)) = new_value;
    if (cache && !use_delay)
      cache->apply_update(i, old_value, new_value, live_reader);
    if (config.observer) config.observer(k, i, x);

    if ((k + 1) % cadence == 0 && (k + 1) < total)
      alive = recorder.record(static_cast<double>(k + 1), x,
                              result.clamp_events);
  }
  if (alive) recorder.record(static_cast<double>(k), x, result.clamp_events);

  result.x = std::move(x);
  result.trace = std::move(recorder.trace);
  result.iterations = k;
  result.wall_seconds = seconds_since(recorder.t0);
  result.diverged = recorder.diverged;
  return result;
}

}  // namespace

RunResult run_serial(const Problem& problem, const RunConfig& config) {
  return run_single_threaded(problem, config, /*use_delay=*/false);
}

RunResult run_simulated(const Problem& problem, const RunConfig& config) {
  return run_single_threaded(problem, config, /*use_delay=*/true);
}

namespace {

#if defined(__x86_64__) || defined(__i386__)
inline void cpu_relax() { __builtin_ia32_pause(); }
#else
inline void cpu_relax() { std::this_thread::yield(); }
#endif

// Shared iterate guarded by one sequence lock: writers bump the version to
// odd around a block write, consistent readers retry a copy whenever the
// version changed under them.
class SharedVector {
 public:
  explicit SharedVector(const Eigen::VectorXd& x)
      : data_(static_cast<std::size_t>(x.size())) {
    for (Eigen::Index i = 0; i < x.size(); ++i) data_[i] = x[i];
  }

  void snapshot(Eigen::VectorXd& out, ReadMode mode) const {
    out.resize(static_cast<Eigen::Index>(data_.size()));
    read_range(0, static_cast<std::int64_t>(data_.size()), out.data(), mode);
  }

  void read_block(std::int64_t offset, std::int64_t size, Eigen::VectorXd& out,
                  ReadMode mode) const {
    out.resize(size);
    read_range(offset, size, out.data(), mode);
  }

  // Entry-wise exchange so concurrent writers always see exact old values;
  // fills old_out with what was replaced.
  void write_block(std::int64_t offset, std::int64_t size,
                   const Eigen::VectorXd& values, Eigen::VectorXd& old_out) {
    old_out.resize(size);
    version_.fetch_add(1, std::memory_order_acq_rel);
    for (std::int64_t t = 0; t < size; ++t) {
      std::atomic_ref<double> ref(
          const_cast<double&>(data_[static_cast<std::size_t>(offset + t)]));
      old_out[t] = ref.exchange(values[t], std::memory_order_relaxed);
    }
    version_.fetch_add(1, std::memory_order_release);
  }

  Eigen::VectorXd to_vector() const {
    Eigen::VectorXd out;
    snapshot(out, ReadMode::ConsistentSnapshot);
    return out;
  }

 private:
  void read_range(std::int64_t offset, std::int64_t size, double* out,
                  ReadMode mode) const {
    if (mode == ReadMode::Relaxed) {
      for (std::int64_t t = 0; t < size; ++t)
        out[t] = std::atomic_ref<double>(
                     const_cast<double&>(data_[offset + t]))
                     .load(std::memory_order_relaxed);
      return;
    }
    int spins = 0;
    for (;;) {
      const std::uint64_t v1 = version_.load(std::memory_order_acquire);
      if ((v1 & 1) == 0) {
        for (std::int64_t t = 0; t < size; ++t)
          out[t] = std::atomic_ref<double>(
                       const_cast<double&>(data_[offset + t]))
                       .load(std::memory_order_relaxed);
        std::atomic_thread_fence(std::memory_order_acquire);
        if (version_.load(std::memory_order_relaxed) == v1) return;
      }
      if (++spins > 256) {
        std::this_thread::yield();
        spins = 0;
      } else {
        cpu_relax();
      }
    }
  }

  std::vector<double> data_;
  mutable std::atomic<std::uint64_t> version_{0};
};

}  // namespace

RunResult run_async(const Problem& problem, const RunConfig& config) {
  validate_common(problem, config);
  if (config.threads < 1)
    throw std::invalid_argument("async mode needs threads >= 1");
  const auto& part = problem.partition();
  const int m = part.m();
  const std::int64_t target = config.epochs * static_cast<std::int64_t>(m);
  const std::int64_t cadence = trace_cadence(config, m);
  const double nominal_L_c = problem.constants().L_c;

  Eigen::VectorXd x_init = config.x0 ? *config.x0 : problem.initial_point();
  SharedVector shared(x_init);
  std::atomic<std::int64_t> counter{0};
  std::atomic<bool> stop{false};

  const GradMode grad_mode =
      config.grad_mode.value_or(GradMode::CachedResidual);
  std::unique_ptr<ResidualCache> cache;
  if (grad_mode == GradMode::CachedResidual)
    cache = problem.make_residual_cache(x_init);

  std::mutex merge_mutex;
  std::vector<std::uint64_t> histogram;
  std::int64_t completed = 0;

  auto worker = [&](int w) {
    auto rng = make_rng(config.seed, RngStream::Worker, w);
    std::vector<std::uint64_t> local_hist;
    std::int64_t local_count = 0;
    Eigen::VectorXd snap, base, old_value, g;
    BlockReader reader = [&](int b, Eigen::VectorXd& out) {
      shared.read_block(part.offset(b), part.size(b), out, config.read_mode);
    };
    while (!stop.load(std::memory_order_relaxed)) {
      const std::int64_t k_before = counter.load(std::memory_order_seq_cst);
      if (k_before >= target) break;
      const int i = static_cast<int>(uniform_index(rng, m));
      double eta_k;
      if (cache) {
        g = cache->grad_block(i, reader);
        eta_k = block_eta(problem, config.stepsize.eta, nominal_L_c, i, reader);
      } else {
        shared.snapshot(snap, config.read_mode);
        g = problem.partial_grad(i, snap);
        BlockReader snap_reader = [&](int b, Eigen::VectorXd& out) {
          out = snap.segment(part.offset(b), part.size(b));
        };
        eta_k = block_eta(problem, config.stepsize.eta, nominal_L_c, i,
                          snap_reader);
      }
      // The prox argument uses the freshest block value, re-read just before
      // the write.
      shared.read_block(part.offset(i), part.size(i), base, config.read_mode);
      const Eigen::VectorXd new_value =
          problem.prox_block(i, base - eta_k * g, eta_k);
      shared.write_block(part.offset(i), part.size(i), new_value, old_value);
      if (cache) cache->apply_update(i, old_value, new_value, reader);
      const std::int64_t at_write =
          counter.fetch_add(1, std::memory_order_seq_cst);
      const std::uint64_t delay =
          static_cast<std::uint64_t>(at_write - k_before);
      if (delay >= local_hist.size()) local_hist.resize(delay + 1, 0);
      ++local_hist[delay];
      ++local_count;
    }
    std::lock_guard<std::mutex> lock(merge_mutex);
    if (local_hist.size() > histogram.size())
      histogram.resize(local_hist.size(), 0);
    for (std::size_t t = 0; t < local_hist.size(); ++t)
      histogram[t] += local_hist[t];
    completed += local_count;
  };

  RunResult result;
  TraceRecorder recorder{problem, config, Clock::now()};
  if (!recorder.record(0.0, x_init, 0)) stop.store(true);

  std::vector<std::thread> pool;
  pool.reserve(config.threads);
  try {
    for (int w = 0; w < config.threads; ++w) pool.emplace_back(worker, w);
  } catch (...) {
    stop.store(true);
    for (auto& t : pool) t.join();
    throw std::runtime_error("failed to spawn async workers");
  }

  Eigen::VectorXd monitor_snap;
  std::int64_t next_trace = cadence;
  while (!stop.load(std::memory_order_relaxed)) {
    const std::int64_t c = counter.load(std::memory_order_relaxed);
    if (c >= target) break;
    if (c >= next_trace) {
      const std::int64_t at = counter.load(std::memory_order_relaxed);
      shared.snapshot(monitor_snap, ReadMode::ConsistentSnapshot);
      if (!recorder.record(static_cast<double>(at), monitor_snap, 0))
        stop.store(true);  // diverged; wind the workers down
      next_trace = (at / cadence + 1) * cadence;
    } else {
      std::this_thread::sleep_for(std::chrono::microseconds(200));
    }
  }
  for (auto& t : pool) t.join();

  result.x = shared.to_vector();
  result.iterations = counter.load();
  if (!recorder.diverged)
    recorder.record(static_cast<double>(result.iterations), result.x, 0);
  result.trace = std::move(recorder.trace);
  result.delay_histogram = std::move(histogram);
  if (result.delay_histogram.empty()) result.delay_histogram.assign(1, 0);
  result.wall_seconds = seconds_since(recorder.t0);
  result.diverged = recorder.diverged;
  return result;
}

RunResult run(const Problem& problem, const RunConfig& config) {
  switch (config.mode) {
    case RunMode::Serial:
      return run_serial(problem, config);
    case RunMode::Simulated:
      return run_simulated(problem, config);
    case RunMode::Async:
      return run_async(problem, config);
  }
  throw std::invalid_argument("unknown run mode");
}

std::pair<Eigen::VectorXd, double> gradient_map(const Problem& problem,
                                                const Eigen::VectorXd& x,
                                                double eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
  const auto& part = problem.partition();
  const Eigen::VectorXd g = problem.full_grad(x);
  Eigen::VectorXd d(x.size());
  for (int i = 0; i < part.m(); ++i) {
    const auto off = part.offset(i);
    const auto sz = part.size(i);
    d.segment(off, sz) =
        problem.prox_block(i, x.segment(off, sz) - eta * g.segment(off, sz),
                           eta) -
        x.segment(off, sz);
  }
  return {d, d.norm()};
}

bool traces_identical(const std::vector<TraceSample>& a,
                      const std::vector<TraceSample>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool nan_match =
        std::isnan(a[i].grad_map_norm) && std::isnan(b[i].grad_map_norm);
    if (a[i].epoch != b[i].epoch || a[i].objective != b[i].objective ||
        (!nan_match && a[i].grad_map_norm != b[i].grad_map_norm) ||
        a[i].clamp_events != b[i].clamp_events)
      return false;
  }
  return true;
}

}  // namespace abcu
