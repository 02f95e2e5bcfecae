#include "abcu/stepsize.hpp"

#include <cmath>
#include <stdexcept>

namespace abcu {

ProblemConstants::ProblemConstants(int m_, double L_c_, double L_r_,
                                   double L_f_, std::optional<double> mu_)
    : m(m_), L_c(L_c_), L_r(L_r_), L_f(L_f_), mu(mu_) {
  if (m < 1) throw std::invalid_argument("m must be >= 1");
  if (!(L_c > 0.0)) throw std::invalid_argument("L_c must be positive");
  // Small relative slack: the three constants are often estimated
  // numerically and can tie up to rounding.
  const double tol = 1e-9 * L_f;
  if (L_r < L_c - tol || L_f < L_r - tol)
    throw std::invalid_argument("expected L_c <= L_r <= L_f");
  if (mu && !(*mu >= 0.0))
    throw std::invalid_argument("mu must be nonnegative");
}

std::string regime_name(Regime r) {
  switch (r) {
    case Regime::SmoothNonconvex: return "smooth_nonconvex";
    case Regime::SmoothConvex: return "smooth_convex";
    case Regime::NonsmoothNonconvex: return "nonsmooth_nonconvex";
    case Regime::NonsmoothConvex: return "nonsmooth_convex";
    case Regime::ExpectedDelayExperiment: return "expected_delay";
    case Regime::MaxDelayExperiment: return "max_delay";
  }
  return "?";
}

namespace {

void check_safety(double safety, bool allow_one) {
  if (!(safety > 0.0) || safety > 1.0 || (!allow_one && safety == 1.0))
    throw std::invalid_argument(allow_one ? "safety must lie in (0, 1]"
                                          : "safety must lie in (0, 1)");
}

}  // namespace

StepsizeChoice eta_smooth_nonconvex(const ProblemConstants& c, double T,
                                    double safety) {
  check_safety(safety, false);
  if (!(T >= 0.0)) throw std::invalid_argument("T must be nonnegative");
  StepsizeChoice s;
  s.regime = Regime::SmoothNonconvex;
  s.bound = (1.0 / c.L_c) / (1.0 + 2.0 * c.kappa() * T / std::sqrt(c.m));
  s.safety = safety;
  s.eta = safety * s.bound;
  return s;
}

StepsizeChoice eta_smooth_convex(const ProblemConstants& c,
                                 const DelayMoments& mom, double safety) {
  check_safety(safety, false);
  const double sqm = std::sqrt(c.m);
  const double b1 =
      (mom.rho - 1.0) * sqm / (mom.rho * c.L_r * (1.0 + mom.M_rho));
  const double b2 =
      2.0 / (c.L_c * (mom.M_rho +
                      c.kappa() * (2.0 * mom.N_rho * mom.M_rho + mom.T) / sqm));
  StepsizeChoice s;
  s.regime = Regime::SmoothConvex;
  s.rho_used = mom.rho;
  s.bound = std::min(b1, b2);
  s.safety = safety;
  s.eta = safety * s.bound;

  RatePrediction rate;
  const double D =
      s.eta / (2.0 * c.m) *
      (2.0 - s.eta * c.L_r / sqm * (2.0 * mom.N_rho * mom.M_rho + mom.T) -
       s.eta * c.L_c * mom.M_rho);
  if (!(D > 0.0))
    throw std::domain_error("progress constant D is not positive; "
                            "inconsistent inputs or safety too close to 1");
  rate.D = D;
  if (c.mu && *c.mu > 0.0) {
    rate.kind = RatePrediction::Kind::Linear;
    rate.linear_factor = 1.0 - 2.0 * (*c.mu) * D;
  } else {
    rate.kind = RatePrediction::Kind::Sublinear;
  }
  s.rate = rate;
  return s;
}

StepsizeChoice eta_nonsmooth_nonconvex(const ProblemConstants& c, double S,
                                       double safety) {
  check_safety(safety, false);
  if (!(S >= 0.0)) throw std::invalid_argument("S must be nonnegative");
  StepsizeChoice s;
  s.regime = Regime::NonsmoothNonconvex;
  const double kap = c.kappa();
  s.bound = (1.0 / c.L_c) / (1.0 + kap * kap * S / (2.0 * c.m));
  s.safety = safety;
  s.eta = safety * s.bound;
  return s;
}

StepsizeChoice eta_nonsmooth_convex(const ProblemConstants& c,
                                    const DelayMoments& mom, double safety) {
  check_safety(safety, true);
  const double sqm = std::sqrt(c.m);
  const double head = (1.0 - 1.0 / mom.rho) * sqm;
  if (!(head > 4.0))
    throw std::domain_error(
        "m too small for this rho: (1 - 1/rho) sqrt(m) must exceed 4");
  const double b1 =
      (head - 4.0) / (2.0 * c.L_r * (1.0 + mom.gamma1 + mom.gamma2));
  const double b2 = 1.0 / (c.L_c + 2.0 * c.L_f * mom.gamma2 * mom.gamma2 / c.m +
                           2.0 * c.L_r * mom.gamma2 / sqm);
  StepsizeChoice s;
  s.regime = Regime::NonsmoothConvex;
  s.rho_used = mom.rho;
  s.bound = std::min(b1, b2);
  s.safety = safety;
  s.eta = safety * s.bound;
  if (c.mu && *c.mu > 0.0) {
    RatePrediction rate;
    rate.kind = RatePrediction::Kind::Linear;
    rate.linear_factor =
        1.0 - s.eta * (*c.mu) / (c.m * (1.0 + s.eta * (*c.mu)));
    s.rate = rate;
  } else {
    RatePrediction rate;
    rate.kind = RatePrediction::Kind::Sublinear;
    s.rate = rate;
  }
  return s;
}

StepsizeChoice eta_experiment(const ProblemConstants& c, double delay_value,
                              Regime which) {
  if (which != Regime::ExpectedDelayExperiment &&
      which != Regime::MaxDelayExperiment)
    throw std::invalid_argument("which must be an experiment regime");
  if (!(delay_value >= 0.0))
    throw std::invalid_argument("delay value must be nonnegative");
  StepsizeChoice s;
  s.regime = which;
  const double kap = c.kappa();
  const double v = delay_value;
  // Exact equality, not a strict bound.
  s.bound = (1.0 / c.L_c) / (1.0 + kap * kap * v * v / (2.0 * c.m));
  s.safety = 1.0;
  s.eta = s.bound;
  return s;
}

double choose_rho(double p) {
  if (!(p >= 0.0)) throw std::invalid_argument("p must be nonnegative");
  return p >= 1.0 ? 1.0 + 1.0 / p : 2.0;
}

double sublinear_bound(Regime regime, std::int64_t k,
                       const SublinearParams& params) {
  if (k < 0) throw std::invalid_argument("k must be nonnegative");
  switch (regime) {
    case Regime::SmoothConvex: {
      if (!params.D || !params.B || !params.initial_gap)
        throw std::invalid_argument(
            "smooth convex envelope needs D, B and initial_gap");
      const double gap = *params.initial_gap;
      if (!(gap > 0.0) || !(*params.B > 0.0) || !(*params.D > 0.0))
        throw std::invalid_argument("envelope inputs must be positive");
      return 1.0 / (1.0 / gap + static_cast<double>(k + 1) * (*params.D) /
                                    (*params.B * *params.B));
    }
    case Regime::NonsmoothConvex: {
      if (!params.eta || !params.m || !params.phi0)
        throw std::invalid_argument(
            "nonsmooth convex envelope needs eta, m and phi0");
      if (!(*params.eta > 0.0) || *params.m < 1)
        throw std::invalid_argument("envelope inputs must be positive");
      const double m = static_cast<double>(*params.m);
      return m * (*params.phi0) /
             (2.0 * (*params.eta) * (m + static_cast<double>(k)));
    }
    default:
      throw std::invalid_argument(
          "sublinear envelope defined for the convex regimes only");
  }
}

}  // namespace abcu
