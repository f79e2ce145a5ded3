#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "lagdose/errors.hpp"
#include "lagdose/panel.hpp"
#include "lagdose/summary.hpp"

namespace lagdose {

enum class SmoothingMode { per_time, pooled };

// Per-dimension bandwidth lambda_j = c * n^(-gamma) * sd(S_j), with the sd
// taken over the smoothing population of the chosen mode: across subjects
// at a fixed t (per_time) or across all (subject, t) pairs (pooled). The
// rate uses the subject count n in both modes.
struct BandwidthRule {
  double c = 0.305;
  double gamma = 1.0 / 3.0;
  SmoothingMode mode = SmoothingMode::per_time;

  void validate() const {
    if (!(c > 0.0)) throw config_error("bandwidth constant c must be positive");
    if (!(gamma > 0.0)) throw config_error("bandwidth exponent must be positive");
  }
};

// Multivariate Gaussian density with diagonal bandwidth matrix
// diag(lambda_1^2, .., lambda_d^2) evaluated at u.
inline double gaussian_kernel(const Eigen::VectorXd& u,
                              const Eigen::VectorXd& lambda) {
  const int d = static_cast<int>(u.size());
  if (lambda.size() != d) throw data_error("bandwidth dimension mismatch");
  double det_root = 1.0;
  double quad = 0.0;
  for (int j = 0; j < d; ++j) {
    if (!(lambda(j) > 0.0)) throw numeric_error("bandwidth entries must be positive");
    det_root *= lambda(j);
    const double z = u(j) / lambda(j);
    quad += z * z;
  }
  return std::pow(2.0 * M_PI, -0.5 * d) / det_root * std::exp(-0.5 * quad);
}

// Nadaraya-Watson estimate of E(target | S = query) from m sample points.
inline double nw_estimate(const Eigen::VectorXd& targets,
                          const Eigen::MatrixXd& points,
                          const Eigen::RowVectorXd& query,
                          const Eigen::VectorXd& lambda) {
  const auto m = targets.size();
  if (m < 1) throw data_error("kernel estimate needs at least one sample point");
  if (points.rows() != m || points.cols() != query.size())
    throw data_error("kernel sample dimensions disagree");
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double w =
        gaussian_kernel((query - points.row(i)).transpose(), lambda);
    num += w * targets(i);
    den += w;
  }
  if (den <= 0.0)
    throw numeric_error(
        "kernel weights vanished: no sample point is within reach of the query");
  return num / den;
}

// Kernel-smoothed conditional moments at every sample point:
// b = E(A_t^2 | S_t), c = E(A_t | S_t), d(k) = E(Y_{t+k} | S_t).
struct ConditionalMeans {
  int first_t = 1;
  int horizon = 0;
  std::vector<int> lags;           // ascending
  Eigen::MatrixXd B, C;            // n x (horizon - first_t + 1)
  std::vector<Eigen::MatrixXd> D;  // D[j]: n x (horizon + 1 - lags[j] - first_t + 1)

  int lag_index(int k) const {
    for (std::size_t j = 0; j < lags.size(); ++j)
      if (lags[j] == k) return static_cast<int>(j);
    throw data_error("conditional means were not computed for lag " +
                     std::to_string(k));
  }
  double b(int i, int t) const { return B(i, t - first_t); }
  double c(int i, int t) const { return C(i, t - first_t); }
  double d(int i, int k, int t) const { return D[lag_index(k)](i, t - first_t); }
  int last_t(int k) const { return horizon + 1 - k; }
};

namespace detail {

inline Eigen::VectorXd column_sds(const Eigen::MatrixXd& S) {
  const double m = static_cast<double>(S.rows());
  Eigen::RowVectorXd mu = S.colwise().mean();
  Eigen::VectorXd sd(S.cols());
  for (Eigen::Index j = 0; j < S.cols(); ++j)
    sd(j) = std::sqrt((S.col(j).array() - mu(j)).square().sum() / (m - 1.0));
  return sd;
}

inline void check_positive_sds(const Eigen::VectorXd& sd, const std::string& where) {
  for (Eigen::Index j = 0; j < sd.size(); ++j)
    if (!(sd(j) > 0.0))
      throw data_error("summary dimension " + std::to_string(j) +
                       " is constant " + where +
                       "; drop it from the summary spec");
}

// Unnormalized Gaussian weights between all row pairs of S after scaling
// each column by its bandwidth. The normalizing constant cancels in every
// ratio, so it is omitted.
inline Eigen::MatrixXd pairwise_weights(const Eigen::MatrixXd& S,
                                        const Eigen::VectorXd& lambda,
                                        bool leave_one_out) {
  const Eigen::Index m = S.rows();
  Eigen::MatrixXd Z = S;
  for (Eigen::Index j = 0; j < S.cols(); ++j) Z.col(j) /= lambda(j);
  Eigen::MatrixXd W(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    W(i, i) = leave_one_out ? 0.0 : 1.0;
    for (Eigen::Index l = 0; l < i; ++l) {
      const double w = std::exp(-0.5 * (Z.row(i) - Z.row(l)).squaredNorm());
      W(i, l) = w;
      W(l, i) = w;
    }
  }
  return W;
}

}  // namespace detail

// Kernel estimates of the conditional moments at the observed summary
// points, for every requested lag. In per_time mode the smoothing sample at
// time t is the n subjects observed at t; in pooled mode it is all
// (subject, t) pairs, which assumes the conditional laws are
// time-invariant. The observation's own point is included in its estimate
// unless leave_one_out is set. `fixed_lambda` bypasses the bandwidth rule
// with explicit per-dimension bandwidths.
inline ConditionalMeans estimate_conditional_means(
    const TrajectoryPanel& panel, const SummarySeries& summaries,
    std::vector<int> lags, const BandwidthRule& rule,
    std::optional<Eigen::VectorXd> fixed_lambda = std::nullopt,
    bool leave_one_out = false) {
  rule.validate();
  std::sort(lags.begin(), lags.end());
  if (lags.empty() || lags.front() < 1) throw config_error("lags must be >= 1");
  const int n = panel.n_subjects();
  const int T = summaries.last_t;
  const int first_t = summaries.first_t;
  const int d = summaries.dimension;
  const int nt = T - first_t + 1;
  if (first_t > T + 1 - lags.back())
    throw data_error("no time point has both summaries and a lag-" +
                     std::to_string(lags.back()) + " outcome");
  if (fixed_lambda) {
    if (fixed_lambda->size() != d)
      throw config_error("fixed bandwidth dimension mismatch");
    for (int j = 0; j < d; ++j)
      if (!((*fixed_lambda)(j) > 0.0))
        throw numeric_error("fixed bandwidth entries must be positive");
  }
  const double rate = std::pow(static_cast<double>(n), -rule.gamma);

  ConditionalMeans out;
  out.first_t = first_t;
  out.horizon = T;
  out.lags = lags;
  out.B.resize(n, nt);
  out.C.resize(n, nt);
  for (int k : lags) out.D.emplace_back(n, T + 1 - k - first_t + 1);

  if (rule.mode == SmoothingMode::per_time) {
    if (n < 2 && !fixed_lambda)
      throw data_error("per-time smoothing needs at least two subjects");
    Eigen::MatrixXd S(n, d);
    Eigen::VectorXd a1(n), a2(n), yk(n);
    for (int t = first_t; t <= T; ++t) {
      for (int i = 0; i < n; ++i) {
        S.row(i) = summaries.s(i, t);
        a1(i) = panel.subject(i).a(t);
        a2(i) = a1(i) * a1(i);
      }
      Eigen::VectorXd lambda;
      if (fixed_lambda) {
        lambda = *fixed_lambda;
      } else {
        const Eigen::VectorXd sd = detail::column_sds(S);
        detail::check_positive_sds(sd, "across subjects at t=" + std::to_string(t));
        lambda = rule.c * rate * sd;
      }
      const Eigen::MatrixXd W = detail::pairwise_weights(S, lambda, leave_one_out);
      const Eigen::VectorXd den = W.rowwise().sum();
      for (int i = 0; i < n; ++i)
        if (!(den(i) > 0.0))
          throw numeric_error("kernel weights vanished at t=" + std::to_string(t));
      out.B.col(t - first_t) = (W * a2).cwiseQuotient(den);
      out.C.col(t - first_t) = (W * a1).cwiseQuotient(den);
      for (std::size_t j = 0; j < lags.size(); ++j) {
        const int k = lags[j];
        if (t > T + 1 - k) continue;
        for (int i = 0; i < n; ++i) yk(i) = panel.subject(i).y(t + k);
        out.D[j].col(t - first_t) = (W * yk).cwiseQuotient(den);
      }
    }
    return out;
  }

  // Pooled mode: one sample of N = n * nt points. B and C smooth over the
  // whole sample; d(k) smooths over the pairs whose lag-k outcome exists.
  const Eigen::Index N = static_cast<Eigen::Index>(n) * nt;
  if (N < 2 && !fixed_lambda)
    throw data_error("pooled smoothing needs at least two observations");
  Eigen::MatrixXd S(N, d);
  Eigen::VectorXd a1(N), a2(N);
  Eigen::MatrixXd ymask(N, lags.size()), ytarget(N, lags.size());
  ymask.setZero();
  ytarget.setZero();
  for (int i = 0; i < n; ++i)
    for (int t = first_t; t <= T; ++t) {
      const Eigen::Index r = static_cast<Eigen::Index>(i) * nt + (t - first_t);
      S.row(r) = summaries.s(i, t);
      a1(r) = panel.subject(i).a(t);
      a2(r) = a1(r) * a1(r);
      for (std::size_t j = 0; j < lags.size(); ++j)
        if (t <= T + 1 - lags[j]) {
          ymask(r, j) = 1.0;
          ytarget(r, j) = panel.subject(i).y(t + lags[j]);
        }
    }
  Eigen::VectorXd lambda;
  if (fixed_lambda) {
    lambda = *fixed_lambda;
  } else {
    const Eigen::VectorXd sd = detail::column_sds(S);
    detail::check_positive_sds(sd, "across the pooled sample");
    lambda = rule.c * rate * sd;
  }
  Eigen::MatrixXd Z = S;
  for (int j = 0; j < d; ++j) Z.col(j) /= lambda(j);
  const Eigen::VectorXd sq = Z.rowwise().squaredNorm();

  // Evaluate queries in blocks to keep the weight matrix O(block * N).
  const Eigen::Index block = 256;
  for (Eigen::Index lo = 0; lo < N; lo += block) {
    const Eigen::Index hi = std::min(lo + block, N);
    Eigen::MatrixXd W =
        (-0.5 * (sq.segment(lo, hi - lo).replicate(1, N).rowwise() +
                 sq.transpose()) +
         Z.middleRows(lo, hi - lo) * Z.transpose())
            .array()
            .exp();
    if (leave_one_out)
      for (Eigen::Index r = lo; r < hi; ++r) W(r - lo, r) = 0.0;
    const Eigen::VectorXd den = W.rowwise().sum();
    const Eigen::VectorXd numB = W * a2;
    const Eigen::VectorXd numC = W * a1;
    for (Eigen::Index r = lo; r < hi; ++r) {
      if (!(den(r - lo) > 0.0))
        throw numeric_error("kernel weights vanished in the pooled sample");
      const int i = static_cast<int>(r / nt);
      const int col = static_cast<int>(r % nt);
      out.B(i, col) = numB(r - lo) / den(r - lo);
      out.C(i, col) = numC(r - lo) / den(r - lo);
    }
    for (std::size_t j = 0; j < lags.size(); ++j) {
      const Eigen::VectorXd numD = W * (ymask.col(j).cwiseProduct(ytarget.col(j)));
      const Eigen::VectorXd denD = W * ymask.col(j);
      for (Eigen::Index r = lo; r < hi; ++r) {
        const int i = static_cast<int>(r / nt);
        const int col = static_cast<int>(r % nt);
        const int t = first_t + col;
        if (t > T + 1 - lags[j]) continue;
        if (!(denD(r - lo) > 0.0))
          throw numeric_error("kernel weights vanished for the lag-" +
                              std::to_string(lags[j]) + " outcome sample");
        out.D[j](i, col) = numD(r - lo) / denD(r - lo);
      }
    }
  }
  return out;
}

}  // namespace lagdose
