#include "abcu/delay_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "abcu/rng.hpp"

namespace abcu {

namespace {

double poisson_pmf(double rate, std::uint64_t t) {
  if (rate == 0.0) return t == 0 ? 1.0 : 0.0;
  if (t == 0) return std::exp(-rate);
  const double td = static_cast<double>(t);
  return std::exp(td * std::log(rate) - rate - std::lgamma(td + 1.0));
}

// Upper-tail sum P(j >= k) accumulated forward; avoids the cancellation of
// 1 - cdf when the tail is tiny.
double poisson_tail(double rate, std::uint64_t k) {
  if (k == 0) return 1.0;
  if (rate == 0.0) return 0.0;
  double term = poisson_pmf(rate, k);
  double sum = term;
  double t = static_cast<double>(k);
  while (term > 0.0) {
    term *= rate / (t + 1.0);
    t += 1.0;
    const double next = sum + term;
    if (next == sum) break;
    sum = next;
  }
  return std::min(sum, 1.0);
}

}  // namespace

DelaySpec DelaySpec::poisson(double rate) {
  if (!(rate >= 0.0) || !std::isfinite(rate))
    throw std::invalid_argument("Poisson rate must be a finite nonnegative value");
  DelaySpec s;
  s.kind_ = Kind::Poisson;
  s.rate_ = rate;
  return s;
}

DelaySpec DelaySpec::empirical(std::vector<double> weights) {
  if (weights.empty())
    throw std::invalid_argument("empirical delay pmf must be nonempty");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0))
      throw std::invalid_argument("empirical delay pmf entries must be nonnegative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw std::invalid_argument("empirical delay pmf must sum to 1 within 1e-12");
  DelaySpec s;
  s.kind_ = Kind::Empirical;
  s.weights_ = std::move(weights);
  // Suffix sums back to front so small tails stay accurate.
  s.tails_.assign(s.weights_.size() + 1, 0.0);
  for (std::size_t i = s.weights_.size(); i-- > 0;)
    s.tails_[i] = s.tails_[i + 1] + s.weights_[i];
  return s;
}

DelaySpec DelaySpec::deterministic(std::uint64_t t0) {
  DelaySpec s;
  s.kind_ = Kind::Deterministic;
  s.t0_ = t0;
  return s;
}

double DelaySpec::pmf(std::uint64_t t) const {
  switch (kind_) {
    case Kind::Poisson:
      return poisson_pmf(rate_, t);
    case Kind::Empirical:
      return t < weights_.size() ? weights_[t] : 0.0;
    case Kind::Deterministic:
      return t == t0_ ? 1.0 : 0.0;
  }
  return 0.0;
}

double DelaySpec::tail(std::uint64_t k) const {
  switch (kind_) {
    case Kind::Poisson:
      return poisson_tail(rate_, k);
    case Kind::Empirical:
      return k < tails_.size() ? tails_[k] : 0.0;
    case Kind::Deterministic:
      return k <= t0_ ? 1.0 : 0.0;
  }
  return 0.0;
}

double DelaySpec::mean() const {
  switch (kind_) {
    case Kind::Poisson:
      return rate_;
    case Kind::Empirical: {
      double m = 0.0;
      for (std::size_t t = 0; t < weights_.size(); ++t)
        m += static_cast<double>(t) * weights_[t];
      return m;
    }
    case Kind::Deterministic:
      return static_cast<double>(t0_);
  }
  return 0.0;
}

std::uint64_t DelaySpec::sample(std::mt19937_64& rng) const {
  switch (kind_) {
    case Kind::Deterministic:
      return t0_;
    case Kind::Empirical: {
      const double u = uniform01(rng);
      double cum = 0.0;
      for (std::size_t t = 0; t < weights_.size(); ++t) {
        cum += weights_[t];
        if (u < cum) return t;
      }
      return weights_.size() - 1;
    }
    case Kind::Poisson: {
      if (rate_ == 0.0) return 0;
      const double u = uniform01(rng);
      double q = std::exp(-rate_);
      double cum = q;
      std::uint64_t t = 0;
      while (u >= cum) {
        ++t;
        q *= rate_ / static_cast<double>(t);
        const double next = cum + q;
        if (next == cum) break;  // cdf saturated in double precision
        cum = next;
      }
      return t;
    }
  }
  return 0;
}

std::uint64_t DelaySpec::horizon(double eps, std::uint64_t cap) const {
  std::uint64_t k = 0;
  while (k < cap && tail(k) >= eps) ++k;
  return std::max<std::uint64_t>(k, 1);
}

std::string DelaySpec::describe() const {
  std::ostringstream os;
  switch (kind_) {
    case Kind::Poisson:
      os << "poisson:" << rate_;
      break;
    case Kind::Empirical:
      os << "empirical(support=" << weights_.size() << ")";
      break;
    case Kind::Deterministic:
      os << "deterministic:" << t0_;
      break;
  }
  return os.str();
}

namespace {

void validate_rho_tol(double rho, double tol) {
  if (!(rho > 1.0) || !std::isfinite(rho))
    throw std::invalid_argument("rho must be finite and > 1");
  if (!(tol > 0.0))
    throw std::invalid_argument("tol must be positive");
}

void check_finite(const DelayMoments& m) {
  if (!std::isfinite(m.T) || !std::isfinite(m.S) || !std::isfinite(m.M_rho) ||
      !std::isfinite(m.N_rho) || !std::isfinite(m.gamma1) ||
      !std::isfinite(m.gamma2))
    throw std::domain_error("delay moments diverge at this rho; choose a smaller rho");
}

// Exact sums over a finite support {(t, q_t)}.
DelayMoments exact_moments(const std::vector<std::pair<std::uint64_t, double>>& support,
                           double rho) {
  DelayMoments m;
  m.rho = rho;
  m.M_rho = 0.0;
  const double sr = std::sqrt(rho);
  double g2sq = 0.0;
  for (auto [t, q] : support) {
    const double td = static_cast<double>(t);
    const double rt = std::pow(rho, td);
    m.T += td * q;
    m.S += td * td * q;
    m.M_rho += q * rt;
    m.N_rho += td * q * rt;
    if (t > 0) {
      m.gamma1 += q * (std::pow(rho, td / 2.0) - 1.0) / (sr - 1.0);
      g2sq += q * td * (rt - 1.0) / (1.0 - 1.0 / rho);
    }
  }
  m.gamma2 = std::sqrt(g2sq);
  m.truncation_error_bound = 0.0;
  return m;
}

}  // namespace

DelayMoments moments(const DelaySpec& spec, double rho, double tol) {
  validate_rho_tol(rho, tol);
  DelayMoments m;
  switch (spec.kind()) {
    case DelaySpec::Kind::Poisson: {
      const double p = spec.rate();
      m.rho = rho;
      m.T = p;
      m.S = p * (p + 1.0);
      m.M_rho = std::exp(p * (rho - 1.0));
      m.N_rho = rho * p * m.M_rho;
      const double sr = std::sqrt(rho);
      m.gamma1 = (std::exp(p * (sr - 1.0)) - 1.0) / (sr - 1.0);
      // gamma2 is the square root of the weighted sum; for Poisson the sum
      // collapses to (N_rho - T) / (1 - 1/rho).
      m.gamma2 = std::sqrt((m.N_rho - p) / (1.0 - 1.0 / rho));
      m.method = MomentMethod::ClosedForm;
      m.truncation_error_bound = 0.0;
      break;
    }
    case DelaySpec::Kind::Deterministic: {
      const double t0 = static_cast<double>(spec.fixed_delay());
      m.rho = rho;
      m.T = t0;
      m.S = t0 * t0;
      m.M_rho = std::pow(rho, t0);
      m.N_rho = t0 * m.M_rho;
      if (t0 > 0) {
        m.gamma1 = (std::pow(rho, t0 / 2.0) - 1.0) / (std::sqrt(rho) - 1.0);
        m.gamma2 = std::sqrt(t0 * (m.M_rho - 1.0) / (1.0 - 1.0 / rho));
      }
      m.method = MomentMethod::ClosedForm;
      break;
    }
    case DelaySpec::Kind::Empirical: {
      std::vector<std::pair<std::uint64_t, double>> support;
      const auto& w = spec.weights();
      for (std::size_t t = 0; t < w.size(); ++t)
        if (w[t] > 0.0) support.emplace_back(t, w[t]);
      m = exact_moments(support, rho);
      m.method = MomentMethod::TruncatedSum;
      break;
    }
  }
  check_finite(m);
  return m;
}

DelayMoments moments_truncated(const DelaySpec& spec, double rho, double tol) {
  validate_rho_tol(rho, tol);
  if (spec.kind() != DelaySpec::Kind::Poisson) {
    std::vector<std::pair<std::uint64_t, double>> support;
    if (spec.kind() == DelaySpec::Kind::Deterministic) {
      support.emplace_back(spec.fixed_delay(), 1.0);
    } else {
      const auto& w = spec.weights();
      for (std::size_t t = 0; t < w.size(); ++t)
        if (w[t] > 0.0) support.emplace_back(t, w[t]);
    }
    DelayMoments m = exact_moments(support, rho);
    m.method = MomentMethod::TruncatedSum;
    check_finite(m);
    return m;
  }

  const double p = spec.rate();
  const double sr = std::sqrt(rho);
  DelayMoments m;
  m.rho = rho;
  m.method = MomentMethod::TruncatedSum;
  m.M_rho = 0.0;

  // Per-term recurrences: q_t, u_t = q_t rho^t, v_t = q_t rho^{t/2}.
  double q = std::exp(-p);
  double u = q;
  double v = q;
  double g2sq = 0.0;
  // The shared next-term growth bound p*rho^2/(t+1) only dominates every
  // series once t exceeds both p*rho^2 and 1/(rho-1); do not stop earlier.
  const double t_min =
      std::max({8.0, p * rho * rho, 1.0 / (rho - 1.0)});
  double max_rel_tail = 0.0;
  for (std::uint64_t t = 0;; ++t) {
    const double td = static_cast<double>(t);
    if (!std::isfinite(u) || !std::isfinite(m.M_rho))
      throw std::domain_error("delay moments diverge at this rho; choose a smaller rho");
    m.T += td * q;
    m.S += td * td * q;
    m.M_rho += u;
    m.N_rho += td * u;
    if (t > 0) {
      m.gamma1 += (v - q) / (sr - 1.0);
      g2sq += td * (u - q) / (1.0 - 1.0 / rho);
    }

    const double ratio = p * rho * rho / (td + 1.0);
    if (td >= t_min && ratio < 1.0) {
      // Geometric tail bound on every accumulated series, relative to it.
      const double geo = ratio / (1.0 - ratio);
      double rel = 0.0;
      auto consider = [&](double term, double sum) {
        if (sum > 0.0) rel = std::max(rel, term * geo / sum);
      };
      consider(td * q, m.T);
      consider(td * td * q, m.S);
      consider(u, m.M_rho);
      consider(td * u, m.N_rho);
      consider((v - q) / (sr - 1.0), m.gamma1);
      consider(td * (u - q) / (1.0 - 1.0 / rho), g2sq);
      if (rel < tol || (q == 0.0 && u == 0.0 && v == 0.0)) {
        max_rel_tail = rel;
        break;
      }
    }
    q *= p / (td + 1.0);
    u *= p * rho / (td + 1.0);
    v *= p * sr / (td + 1.0);
  }
  m.gamma2 = std::sqrt(g2sq);
  m.truncation_error_bound = max_rel_tail;
  check_finite(m);
  return m;
}

PoissonFit fit_poisson(const std::vector<std::uint64_t>& histogram) {
  double total = 0.0;
  double weighted = 0.0;
  for (std::size_t t = 0; t < histogram.size(); ++t) {
    total += static_cast<double>(histogram[t]);
    weighted += static_cast<double>(t) * static_cast<double>(histogram[t]);
  }
  if (total <= 0.0)
    throw std::invalid_argument("histogram must contain at least one count");
  PoissonFit fit;
  fit.p_hat = weighted / total;
  fit.divergence = kl_vs_poisson(histogram, fit.p_hat);
  return fit;
}

double kl_vs_poisson(const std::vector<std::uint64_t>& histogram, double p) {
  double total = 0.0;
  for (auto c : histogram) total += static_cast<double>(c);
  if (total <= 0.0)
    throw std::invalid_argument("histogram must contain at least one count");
  const DelaySpec model = DelaySpec::poisson(p);
  // Truncate trailing zero-count bins so the folded tail lands on the last
  // observed delay.
  std::size_t last = histogram.size();
  while (last > 1 && histogram[last - 1] == 0) --last;
  double kl = 0.0;
  for (std::size_t t = 0; t < last; ++t) {
    if (histogram[t] == 0) continue;
    const double ph = static_cast<double>(histogram[t]) / total;
    const double q =
        (t + 1 == last) ? model.tail(t) : model.pmf(t);
    if (q <= 0.0) return std::numeric_limits<double>::infinity();
    kl += ph * std::log(ph / q);
  }
  return std::max(kl, 0.0);
}

void save_empirical(const std::string& path, const DelaySpec& spec) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  char buf[64];
  if (spec.kind() == DelaySpec::Kind::Empirical) {
    const auto& w = spec.weights();
    for (std::size_t t = 0; t < w.size(); ++t) {
      std::snprintf(buf, sizeof buf, "%.17g", w[t]);
      out << t << ' ' << buf << '\n';
    }
  } else {
    // Materialize the pmf out to a 1e-15 horizon so the table is faithful.
    const std::uint64_t h = spec.horizon(1e-15, 1 << 20);
    for (std::uint64_t t = 0; t <= h; ++t) {
      std::snprintf(buf, sizeof buf, "%.17g", spec.pmf(t));
      out << t << ' ' << buf << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

DelaySpec load_empirical(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<double> w;
  std::uint64_t t;
  double q;
  while (in >> t >> q) {
    if (t >= w.size()) w.resize(t + 1, 0.0);
    w[t] = q;
  }
  if (w.empty()) throw std::runtime_error("empty delay table: " + path);
  // Renormalize tiny truncation drift from tables written at finite horizon.
  double sum = 0.0;
  for (double x : w) sum += x;
  if (std::abs(sum - 1.0) > 1e-12 && std::abs(sum - 1.0) < 1e-6)
    for (double& x : w) x /= sum;
  return DelaySpec::empirical(std::move(w));
}

void save_histogram(const std::string& path,
                    const std::vector<std::uint64_t>& histogram) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (std::size_t t = 0; t < histogram.size(); ++t)
    out << t << ' ' << histogram[t] << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<std::uint64_t> load_histogram(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::uint64_t> h;
  std::uint64_t t, c;
  while (in >> t >> c) {
    if (t >= h.size()) h.resize(t + 1, 0);
    h[t] = c;
  }
  return h;
}

}  // namespace abcu
