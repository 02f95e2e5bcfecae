#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace abcu {

/// A distribution of read delays over t = 0, 1, 2, ...
///
/// Three variants: Poisson(rate), a finite empirical pmf, and a point mass.
/// All delay-derived scalars consumed by the stepsize bounds are computed
/// from it (see moments()).
class DelaySpec {
 public:
  enum class Kind { Poisson, Empirical, Deterministic };

  static DelaySpec poisson(double rate);
  // weights must be nonnegative and sum to 1 within 1e-12.
  static DelaySpec empirical(std::vector<double> weights);
  static DelaySpec deterministic(std::uint64_t t0);

  Kind kind() const { return kind_; }
  double rate() const { return rate_; }                         // Poisson
  std::uint64_t fixed_delay() const { return t0_; }             // Deterministic
  const std::vector<double>& weights() const { return weights_; }  // Empirical

  // P(j = t)
  double pmf(std::uint64_t t) const;
  // P(j >= k); tail(0) = 1, nonincreasing in k.
  double tail(std::uint64_t k) const;
  // Mean delay E[j].
  double mean() const;

  // Inversion sampling on the cdf; deterministic given the generator state.
  std::uint64_t sample(std::mt19937_64& rng) const;

  // Smallest h with tail(h) < eps, capped. Used to size simulator history.
  std::uint64_t horizon(double eps, std::uint64_t cap = 4096) const;

  std::string describe() const;

 private:
  DelaySpec() = default;
  Kind kind_ = Kind::Deterministic;
  double rate_ = 0.0;
  std::uint64_t t0_ = 0;
  std::vector<double> weights_;
  std::vector<double> tails_;  // empirical suffix sums
};

enum class MomentMethod { ClosedForm, TruncatedSum };

/// Delay statistics at a weight rho > 1:
///   T = E[j], S = E[j^2], M_rho = E[rho^j], N_rho = E[j rho^j],
///   gamma1 = sum_t q_t (rho^{t/2} - 1) / (rho^{1/2} - 1),
///   gamma2 = sqrt( sum_t q_t t (rho^t - 1) / (1 - 1/rho) ).
struct DelayMoments {
  double rho = 2.0;
  double T = 0.0;
  double S = 0.0;
  double M_rho = 1.0;
  double N_rho = 0.0;
  double gamma1 = 0.0;
  double gamma2 = 0.0;
  MomentMethod method = MomentMethod::ClosedForm;
  double truncation_error_bound = 0.0;
};

/// Closed forms for Poisson, exact finite sums otherwise.
/// Throws std::invalid_argument for rho <= 1 or tol <= 0 and
/// std::domain_error when a moment is not finite at this rho.
DelayMoments moments(const DelaySpec& spec, double rho, double tol = 1e-14);

/// Series-summation evaluation. For Poisson this is the independent check of
/// the closed forms: terms are accumulated until the conservative next-term
/// bound (term * rate * rho^2 / (t + 1)) drops below tol times every running
/// sum, and the geometric tail estimate is reported as
/// truncation_error_bound. Finite-support specs are summed exactly.
DelayMoments moments_truncated(const DelaySpec& spec, double rho,
                               double tol = 1e-14);

struct PoissonFit {
  double p_hat = 0.0;       // sample mean (the MLE)
  double divergence = 0.0;  // KL(empirical || Poisson(p_hat)), tail folded
};

/// Fit a Poisson rate to a delay histogram (index = delay, value = count).
/// Throws std::invalid_argument when the histogram is empty or all zero.
PoissonFit fit_poisson(const std::vector<std::uint64_t>& histogram);

/// KL(empirical || Poisson(p)) over the histogram support, with the Poisson
/// tail mass beyond the support folded into the last bin.
double kl_vs_poisson(const std::vector<std::uint64_t>& histogram, double p);

// Two-column plain text tables: "t q_t" for distributions, "t count" for
// histograms, one row per line.
void save_empirical(const std::string& path, const DelaySpec& spec);
DelaySpec load_empirical(const std::string& path);
void save_histogram(const std::string& path,
                    const std::vector<std::uint64_t>& histogram);
std::vector<std::uint64_t> load_histogram(const std::string& path);

}  // namespace abcu
