#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "lagdose/effect_model.hpp"
#include "lagdose/errors.hpp"
#include "lagdose/panel.hpp"
#include "lagdose/rng.hpp"

namespace lagdose {

// Autoregressive observational generative model with a single covariate:
//   X_1 ~ N(0, sigma^2),          A_1 ~ U(0, 1),
//   X_{t+1} ~ N(eta1 X_t + eta2 A_t, sigma^2),
//   A_{t+1} ~ N(tau1 X_{t+1} + tau2 A_t, sigma^2),
//   Y_{t+1} = theta1 X_t + theta2 A_{t-1} - A_t (A_t - beta0 - beta1 X_t) + eps_{t+1},
// with A_0 = 0 and eps a stationary Gaussian AR(1) whose marginal sd is
// sigma and whose lag-s correlation is sigma^(s/2).
struct DgpConfig {
  double sigma = 0.5;
  double theta1 = 0.8;
  double theta2 = 0.0;
  double eta1 = -0.2;
  double eta2 = 0.2;
  double tau1 = 1.0;
  double tau2 = -0.5;
  double beta0 = 0.0;
  double beta1 = 2.0;
  int T = 50;
  int n = 100;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(sigma > 0.0)) throw config_error("sigma must be positive");
    if (!(sigma < 1.0))
      throw config_error("sigma must be below 1 for the AR noise construction");
    if (T < 1) throw config_error("T must be at least 1");
    if (n < 1) throw config_error("n must be at least 1");
  }
};

inline TrajectoryPanel generate_panel(const DgpConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, /*stream=*/0));
  std::normal_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> uniform01(0.0, 1.0);
  const double ar = std::sqrt(cfg.sigma);
  const double innovation_sd = cfg.sigma * std::sqrt(1.0 - cfg.sigma);

  std::vector<SubjectTrajectory> subjects(cfg.n);
  for (auto& subj : subjects) {
    subj.X.resize(cfg.T + 1, 1);
    subj.A.resize(cfg.T);
    subj.Y.resize(cfg.T);
    subj.X(0, 0) = cfg.sigma * unit(rng);
    subj.A(0) = uniform01(rng);
    for (int t = 1; t <= cfg.T; ++t) {
      subj.X(t, 0) =
          cfg.eta1 * subj.X(t - 1, 0) + cfg.eta2 * subj.A(t - 1) + cfg.sigma * unit(rng);
      if (t < cfg.T)
        subj.A(t) = cfg.tau1 * subj.X(t, 0) + cfg.tau2 * subj.A(t - 1) +
                    cfg.sigma * unit(rng);
    }
    double eps = cfg.sigma * unit(rng);
    for (int t = 1; t <= cfg.T; ++t) {
      const double x = subj.X(t - 1, 0);
      const double a = subj.A(t - 1);
      const double a_prev = (t >= 2) ? subj.A(t - 2) : 0.0;
      subj.Y(t - 1) = cfg.theta1 * x + cfg.theta2 * a_prev -
                      a * (a - cfg.beta0 - cfg.beta1 * x) + eps;
      eps = ar * eps + innovation_sd * unit(rng);
    }
  }
  // The generator's own A_0 = 0 enters Y_2 above; the panel leaves the
  // summary-level convention off so that dose-lag summaries start at t = 2,
  // where the lagged dose actually varies across subjects.
  return TrajectoryPanel(std::move(subjects), {"X"}, /*a0_zero=*/false);

}

// Coefficients of the conditional mean E(Y_{t+k} | A_t = a, X_t = x) up to
// an additive constant:  x_coef*x + x2_coef*x^2 + a2_coef*a^2 + a_coef*a +
// ax_coef*a*x. The last three are the lag-k effect parameters.
struct TrueLagCoefficients {
  double x_coef = 0.0;
  double x2_coef = 0.0;
  double a2_coef = 0.0;
  double a_coef = 0.0;
  double ax_coef = 0.0;
};

// One lag-extension step: pushes E(Y_{t+k-1} | A, X) through the covariate
// and dose transitions to obtain the lag-k conditional-mean coefficients.
inline TrueLagCoefficients step_lag_coefficients(const TrueLagCoefficients& c,
                                                 const DgpConfig& g) {
  const double m = g.tau1 * g.eta2 + g.tau2;  // dose-to-next-dose multiplier
  TrueLagCoefficients out;
  out.x_coef = (c.x_coef + c.a_coef * g.tau1) * g.eta1;
  out.x2_coef = (c.x2_coef + c.a2_coef * g.tau1 * g.tau1 + c.ax_coef * g.tau1) *
                g.eta1 * g.eta1;
  out.a2_coef = c.x2_coef * g.eta2 * g.eta2 + c.a2_coef * m * m + c.ax_coef * m * g.eta2;
  out.a_coef = c.x_coef * g.eta2 + c.a_coef * m;
  out.ax_coef = 2.0 * g.eta1 * g.eta2 * c.x2_coef +
                2.0 * c.a2_coef * g.tau1 * g.eta1 * m +
                c.ax_coef * (g.tau1 * g.eta1 * g.eta2 + g.eta1 * m);
  return out;
}

// Conditional-mean coefficients for lag k. The lag-1 base case
// (theta1, 0, -1, beta0, beta1) is exact when theta2 = 0; with theta2 != 0
// the direct dose carryover enters the dose coefficient one step later, at
// k = 2, after which the recursion applies unchanged.
inline TrueLagCoefficients true_mean_coefficients(const DgpConfig& cfg, int k) {
  if (k < 1) throw config_error("lag must be >= 1");
  TrueLagCoefficients c{cfg.theta1, 0.0, -1.0, cfg.beta0, cfg.beta1};
  if (k == 1) return c;
  c = step_lag_coefficients(c, cfg);
  c.a_coef += cfg.theta2;
  for (int j = 3; j <= k; ++j) c = step_lag_coefficients(c, cfg);
  return c;
}

// True lag-k effect parameters (alpha_k, beta_{k,0}, beta_{k,1}) relative to
// the feature vector (1, X_t).
inline LagParams true_lag_params(const DgpConfig& cfg, int k) {
  const TrueLagCoefficients c = true_mean_coefficients(cfg, k);
  LagParams p;
  p.k = k;
  p.alpha = c.a2_coef;
  p.beta = Eigen::Vector2d(c.a_coef, c.ax_coef);
  return p;
}

// Closed-form lag-2 effect, kept as an independent cross-check of the
// recursion.
inline LagParams true_lag2_closed_form(const DgpConfig& g) {
  const double m = g.tau1 * g.eta2 + g.tau2;
  LagParams p;
  p.k = 2;
  p.alpha = -(m - g.beta1 * g.eta2) * m;
  p.beta = Eigen::Vector2d(
      g.theta1 * g.eta2 + g.theta2 + g.beta0 * m,
      m * (-2.0 * g.tau1 * g.eta1 + g.beta1 * g.eta1) +
          g.beta1 * g.tau1 * g.eta1 * g.eta2);
  return p;
}

}  // namespace lagdose
