#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "abcu/delay_model.hpp"
#include "abcu/problems.hpp"

namespace abcu {

/// One monitoring record along a run.
struct TraceSample {
  double epoch = 0.0;          // iterations / m
  double objective = 0.0;      // F(x)
  double grad_map_norm = 0.0;  // NaN when not recorded
  double elapsed_seconds = 0.0;
  std::int64_t clamp_events = 0;  // cumulative
};

/// Potential Phi(x) = ||x - x_ref||^2 + 2 eta (F(x) - F(x_ref)), with the
/// supplied reference point standing in for the solution-set projection.
double phi(const Problem& problem, const Eigen::VectorXd& x, double eta,
           const Eigen::VectorXd& x_ref);
double phi_from_parts(double dist_sq, double eta, double objective_gap);

struct LinearRateFit {
  double factor = 1.0;  // exp(slope) of the log-linear fit, per sample step
  bool valid = false;
  std::string note;
};

/// Least-squares line through (k, log v_k); factor = exp(slope / stride) is
/// the per-iteration ratio when samples are `stride` iterations apart.
/// Requires >= 10 samples; nonpositive values make the fit invalid (the
/// sequence reached the floating-point floor or is not a rate trace).
LinearRateFit fit_linear_rate(const std::vector<double>& values,
                              double stride = 1.0);

/// Count samples (k, value) with k >= burn_in_k whose value exceeds
/// envelope(k) * (1 + rel_slack) + abs_slack.
int check_sublinear(const std::vector<std::pair<double, double>>& samples,
                    const std::function<double(double)>& envelope,
                    double burn_in_k, double rel_slack = 0.05,
                    double abs_slack = 0.0);

struct RateReport {
  double empirical_linear_factor = 1.0;
  double theoretical_factor = 1.0;
  int sublinear_envelope_violations = 0;
  std::optional<std::vector<double>> phi_trace;
};

struct DelayReport {
  std::vector<double> normalized;  // histogram scaled to sum 1
  double p_hat = 0.0;
  double kl_vs_expected = 0.0;  // against Poisson(threads - 1)
  double kl_vs_fit = 0.0;       // against Poisson(p_hat)
  int threads = 1;
  std::string note;
};

/// Summarize a measured delay histogram against the Poisson model implied by
/// the thread count. Never fails on mismatch: cross-CPU scheduling skews are
/// expected and only noted.
DelayReport delay_report(const std::vector<std::uint64_t>& histogram,
                         int threads);

// CSV with a header row; floats carry 17 significant digits so every row
// parses back to the identical value.
void write_trace_csv(const std::string& path,
                     const std::vector<TraceSample>& trace);
std::vector<TraceSample> read_trace_csv(const std::string& path);
void write_histogram_csv(const std::string& path,
                         const std::vector<std::uint64_t>& histogram);
std::vector<std::uint64_t> read_histogram_csv(const std::string& path);
void write_columns_csv(const std::string& path,
                       const std::vector<std::string>& headers,
                       const std::vector<std::vector<double>>& columns);

std::string format_double(double v);  // %.17g

}  // namespace abcu
