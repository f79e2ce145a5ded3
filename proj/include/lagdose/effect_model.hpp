#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <utility>

#include "lagdose/errors.hpp"

namespace lagdose {

// Nonnegative lag weights w_1..w_K summing to one.
class LagWeights {
 public:
  explicit LagWeights(Eigen::VectorXd w) : w_(std::move(w)) {
    if (w_.size() < 1) throw config_error("need at least one lag weight");
    for (int k = 0; k < w_.size(); ++k)
      if (w_(k) < 0.0) throw config_error("lag weights must be nonnegative");
    if (std::abs(w_.sum() - 1.0) > 1e-12)
      throw config_error("lag weights must sum to 1");
  }

  static LagWeights uniform(int K) {
    Eigen::VectorXd w = Eigen::VectorXd::Constant(K, 1.0 / K);
    w(K - 1) = 1.0 - w.head(K - 1).sum();
    return LagWeights(std::move(w));
  }

  int max_lag() const { return static_cast<int>(w_.size()); }
  double weight(int k) const { return w_(k - 1); }  // k is 1-based
  const Eigen::VectorXd& vector() const { return w_; }

 private:
  Eigen::VectorXd w_;
};

// Quadratic effect parameters for one lag: alpha a^2 + (beta' f(s)) a.
struct LagParams {
  int k = 1;
  double alpha = 0.0;
  Eigen::VectorXd beta;
};

// Weight-combined parameters across lags 1..K.
struct WeightedParams {
  double alpha_tilde = 0.0;
  Eigen::VectorXd beta_tilde;
  LagWeights weights;
};

inline WeightedParams combine_weighted(std::span<const LagParams> per_lag,
                                       const LagWeights& w) {
  const int K = w.max_lag();
  if (static_cast<int>(per_lag.size()) != K)
    throw config_error("need one parameter set per lag 1..K");
  const auto q = per_lag.front().beta.size();
  WeightedParams out{0.0, Eigen::VectorXd::Zero(q), w};
  for (int k = 1; k <= K; ++k) {
    const auto& p = per_lag[k - 1];
    if (p.k != k) throw config_error("per-lag parameters must be ordered k = 1..K");
    if (p.beta.size() != q)
      throw config_error("per-lag parameter dimensions disagree");
    out.alpha_tilde += w.weight(k) * p.alpha;
    out.beta_tilde += w.weight(k) * p.beta;
  }
  return out;
}

// Advantage of dose a over the zero reference dose: alpha a^2 + (beta' f) a.
inline double advantage(double alpha, const Eigen::VectorXd& beta, double a,
                        const Eigen::VectorXd& f) {
  if (beta.size() != f.size())
    throw data_error("feature vector dimension does not match parameters");
  return alpha * a * a + beta.dot(f) * a;
}

inline double advantage(const LagParams& p, double a, const Eigen::VectorXd& f) {
  return advantage(p.alpha, p.beta, a, f);
}

inline double advantage(const WeightedParams& p, double a, const Eigen::VectorXd& f) {
  return advantage(p.alpha_tilde, p.beta_tilde, a, f);
}

}  // namespace lagdose
