#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "abcu/delay_model.hpp"

namespace abcu {

/// Lipschitz data of a block-structured objective.
/// L_c: partial gradient w.r.t. its own block, L_r: full gradient w.r.t. a
/// single-block perturbation, L_f: full gradient. L_c <= L_r <= L_f is
/// enforced on construction; kappa() = L_r / L_c is the condition number.
struct ProblemConstants {
  ProblemConstants(int m, double L_c, double L_r, double L_f,
                   std::optional<double> mu = std::nullopt);

  int m;
  double L_c;
  double L_r;
  double L_f;
  std::optional<double> mu;  // strong convexity modulus, when known

  double kappa() const { return L_r / L_c; }
};

enum class Regime {
  SmoothNonconvex,
  SmoothConvex,
  NonsmoothNonconvex,
  NonsmoothConvex,
  ExpectedDelayExperiment,
  MaxDelayExperiment,
};

std::string regime_name(Regime r);

struct RatePrediction {
  enum class Kind { Sublinear, Linear };
  Kind kind = Kind::Sublinear;
  std::optional<double> linear_factor;  // per-iteration contraction of the potential
  std::optional<double> D;              // per-step progress constant (smooth convex)
};

struct StepsizeChoice {
  double eta = 0.0;
  Regime regime = Regime::SmoothNonconvex;
  std::optional<double> rho_used;
  double bound = 0.0;   // theoretical upper limit on eta
  double safety = 1.0;  // eta = safety * bound
  std::optional<RatePrediction> rate;
};

/// eta < (1/L_c) / (1 + 2 kappa T / sqrt(m)).
StepsizeChoice eta_smooth_nonconvex(const ProblemConstants& c, double T,
                                    double safety = 0.99);

/// eta <= (rho-1) sqrt(m) / (rho L_r (1 + M_rho))  and
/// eta <  2 / (L_c (M_rho + kappa (2 N_rho M_rho + T) / sqrt(m))).
/// Also computes D = eta/(2m) (2 - eta L_r (2 N_rho M_rho + T)/sqrt(m)
///                               - eta L_c M_rho), which is positive for any
/// eta strictly inside the second bound; rejects nonpositive D.
/// With mu present, rate.linear_factor = 1 - 2 mu D.
StepsizeChoice eta_smooth_convex(const ProblemConstants& c,
                                 const DelayMoments& mom,
                                 double safety = 0.99);

/// eta < (1/L_c) / (1 + kappa^2 S / (2m)).
StepsizeChoice eta_nonsmooth_nonconvex(const ProblemConstants& c, double S,
                                       double safety = 0.99);

/// eta <= ((1 - 1/rho) sqrt(m) - 4) / (2 L_r (1 + gamma1 + gamma2))  and
/// eta <= 1 / (L_c + 2 L_f gamma2^2 / m + 2 L_r gamma2 / sqrt(m)).
/// Requires (1 - 1/rho) sqrt(m) > 4, otherwise no positive stepsize exists.
/// With mu present, rate.linear_factor = 1 - eta mu / (m (1 + eta mu)).
StepsizeChoice eta_nonsmooth_convex(const ProblemConstants& c,
                                    const DelayMoments& mom,
                                    double safety = 0.99);

/// The two experiment formulas, exact equalities (safety = 1):
/// eta = (1/L_c) / (1 + kappa^2 v^2 / (2m)) with v the expected delay p
/// (ExpectedDelayExperiment) or the maximum observed delay tau
/// (MaxDelayExperiment).
StepsizeChoice eta_experiment(const ProblemConstants& c, double delay_value,
                              Regime which);

/// rho = 1 + 1/p for p >= 1; 2 for p < 1 (every rho > 1 works at small
/// delay, 2 by convention).
double choose_rho(double p);

/// Inputs for the sublinear upper envelopes. Smooth convex needs D, B and
/// the initial gap f(x0) - f*; nonsmooth convex needs eta, m and Phi(x0).
struct SublinearParams {
  std::optional<double> D;
  std::optional<double> B;
  std::optional<double> initial_gap;
  std::optional<double> eta;
  std::optional<int> m;
  std::optional<double> phi0;
};

/// Envelope value at iteration k:
///   SmoothConvex:    1 / (initial_gap^{-1} + (k+1) D / B^2)
///   NonsmoothConvex: m Phi(x0) / (2 eta (m + k))
/// Throws std::invalid_argument for other regimes or missing inputs.
double sublinear_bound(Regime regime, std::int64_t k,
                       const SublinearParams& params);

}  // namespace abcu
