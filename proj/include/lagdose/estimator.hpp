#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lagdose/effect_model.hpp"
#include "lagdose/errors.hpp"
#include "lagdose/kernel_smoother.hpp"
#include "lagdose/panel.hpp"
#include "lagdose/stats.hpp"
#include "lagdose/summary.hpp"

namespace lagdose {

// Kernel-centered regressors and residual targets. Row t of a subject's M is
//   ( A_t^2 - b_t(S_t),  {A_t - c_t(S_t)} f(S_t) )  in R^(q+1),
// and the matching target is R_t = Y_{t+k} - d_{t,k}(S_t) (or its
// weight-combined version for the direct weighted fit).
struct CenteredDesign {
  int k = 1;  // lag of the target column; K for a weighted target
  int first_t = 1;
  int last_t = 0;
  std::vector<std::string> row_names;  // "dose^2" followed by feature names
  std::vector<Eigen::MatrixXd> M;      // per subject: nt x (q+1)
  std::vector<Eigen::VectorXd> R;      // per subject: nt
  Eigen::VectorXd raw_scale;           // column norms of the uncentered rows

  int n_subjects() const { return static_cast<int>(M.size()); }
  int dim() const { return static_cast<int>(M.front().cols()); }
};

namespace detail {

inline std::vector<std::string> design_row_names(const FeatureMap& fmap,
                                                 const SummarySpec& spec) {
  std::vector<std::string> names{"dose^2"};
  for (int j = 0; j < fmap.dimension(); ++j) names.push_back(fmap.name(j, spec));
  return names;
}

inline std::pair<int, int> resolve_t_range(const SummarySeries& summaries, int k,
                                           std::optional<std::pair<int, int>> t_range) {
  const int lo_max = summaries.first_t;
  const int hi_max = summaries.last_t + 1 - k;
  int lo = lo_max, hi = hi_max;
  if (t_range) {
    lo = t_range->first;
    hi = t_range->second;
    if (lo < lo_max || hi > hi_max)
      throw data_error("t range [" + std::to_string(lo) + ", " + std::to_string(hi) +
                       "] exceeds the valid window [" + std::to_string(lo_max) +
                       ", " + std::to_string(hi_max) + "]");
  }
  if (lo > hi)
    throw data_error("empty estimation window for lag " + std::to_string(k));
  return {lo, hi};
}

inline CenteredDesign assemble_rows(
    const TrajectoryPanel& panel, const SummarySeries& summaries,
    const SummarySpec& spec, const FeatureMap& fmap, const ConditionalMeans& means,
    int k_label, std::pair<int, int> range,
    const std::function<double(int, int)>& target) {
  const int q = fmap.dimension();
  const auto [lo, hi] = range;
  CenteredDesign design;
  design.k = k_label;
  design.first_t = lo;
  design.last_t = hi;
  design.row_names = design_row_names(fmap, spec);
  design.M.reserve(panel.n_subjects());
  design.R.reserve(panel.n_subjects());
  design.raw_scale = Eigen::VectorXd::Zero(q + 1);
  for (int i = 0; i < panel.n_subjects(); ++i) {
    Eigen::MatrixXd M(hi - lo + 1, q + 1);
    Eigen::VectorXd R(hi - lo + 1);
    for (int t = lo; t <= hi; ++t) {
      const double a = panel.subject(i).a(t);
      const Eigen::VectorXd f = fmap(summaries.s(i, t));
      M(t - lo, 0) = a * a - means.b(i, t);
      M.row(t - lo).tail(q) = (a - means.c(i, t)) * f.transpose();
      R(t - lo) = target(i, t);
      design.raw_scale(0) += a * a * a * a;
      design.raw_scale.tail(q) += (a * a) * f.cwiseAbs2();
    }
    design.M.push_back(std::move(M));
    design.R.push_back(std::move(R));
  }
  design.raw_scale = design.raw_scale.cwiseSqrt();
  return design;
}

}  // namespace detail

inline CenteredDesign assemble_design(
    const TrajectoryPanel& panel, const SummarySeries& summaries,
    const SummarySpec& spec, const FeatureMap& fmap, const ConditionalMeans& means,
    int k, std::optional<std::pair<int, int>> t_range = std::nullopt) {
  means.lag_index(k);  // fail fast when the lag is missing
  const auto range = detail::resolve_t_range(summaries, k, t_range);
  return detail::assemble_rows(
      panel, summaries, spec, fmap, means, k, range,
      [&](int i, int t) { return panel.subject(i).y(t + k) - means.d(i, k, t); });
}

// Design for the direct weighted fit: target sum_k w_k {Y_{t+k} - d_k(S_t)}
// on the common window t = first_t .. T+1-K.
inline CenteredDesign assemble_weighted_design(
    const TrajectoryPanel& panel, const SummarySeries& summaries,
    const SummarySpec& spec, const FeatureMap& fmap, const ConditionalMeans& means,
    const LagWeights& w,
    std::optional<std::pair<int, int>> t_range = std::nullopt) {
  const int K = w.max_lag();
  for (int k = 1; k <= K; ++k) means.lag_index(k);
  const auto range = detail::resolve_t_range(summaries, K, t_range);
  return detail::assemble_rows(
      panel, summaries, spec, fmap, means, K, range, [&](int i, int t) {
        double r = 0.0;
        for (int k = 1; k <= K; ++k)
          r += w.weight(k) * (panel.subject(i).y(t + k) - means.d(i, k, t));
        return r;
      });
}

// Solution of the estimating equation with its sandwich covariance.
// `covariance` estimates the asymptotic covariance of sqrt(n)(phi_hat -
// phi*); standard errors divide it by the subject count.
struct LagFit {
  LagParams params;
  Eigen::MatrixXd covariance;
  Eigen::VectorXd se;
  int n_subjects = 0;
  int first_t = 1;
  int last_t = 0;

  Eigen::VectorXd phi() const {
    Eigen::VectorXd v(params.beta.size() + 1);
    v(0) = params.alpha;
    v.tail(params.beta.size()) = params.beta;
    return v;
  }
};

namespace detail {

constexpr double kMaxGramCondition = 1e12;

// Sum of per-subject Gram matrices with a spectral condition guard that
// names the feature aligned with the degenerate direction.
inline Eigen::MatrixXd checked_gram(const CenteredDesign& design) {
  const int p = design.dim();
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(p, p);
  for (const auto& M : design.M) G.selfadjointView<Eigen::Lower>().rankUpdate(M.transpose());
  G.triangularView<Eigen::StrictlyUpper>() = G.transpose();

  // A centered column that is pure rounding noise next to its uncentered
  // magnitude means the dose carries no information beyond its conditional
  // mean in that direction.
  if (design.raw_scale.size() == p)
    for (int j = 0; j < p; ++j)
      if (std::sqrt(G(j, j)) <= 1e-12 * design.raw_scale(j))
        throw numeric_error("centered design is degenerate along '" +
                            design.row_names[j] +
                            "': the doses do not vary around their conditional mean");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
  const auto& ev = es.eigenvalues();
  const double lo = ev(0), hi = ev(p - 1);
  if (!(hi > 0.0) || lo <= 0.0 || hi / lo > kMaxGramCondition) {
    int worst = 0;
    es.eigenvectors().col(0).cwiseAbs().maxCoeff(&worst);
    throw numeric_error(
        "centered design is singular or ill-conditioned along '" +
        design.row_names[worst] + "' (condition number above 1e12)");
  }
  return G;
}

}  // namespace detail

// Model-robust covariance of the estimating-equation solution: with
// L1_i = sum_t M_t M_t' and L2_i = sum_t M_t R_t per subject, the plug-in is
//   P1^{-1} Cov_hat(L1_i phi - L2_i) P1^{-1},   P1 = mean_i L1_i.
inline Eigen::MatrixXd sandwich_covariance(const CenteredDesign& design,
                                           const Eigen::VectorXd& phi) {
  const int n = design.n_subjects();
  const int p = design.dim();
  if (n < 2) throw numeric_error("sandwich covariance needs at least two subjects");
  if (phi.size() != p) throw data_error("parameter dimension mismatch");
  Eigen::MatrixXd P1 = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd psi(p, n);
  for (int i = 0; i < n; ++i) {
    const Eigen::MatrixXd L1 = design.M[i].transpose() * design.M[i];
    const Eigen::VectorXd L2 = design.M[i].transpose() * design.R[i];
    P1 += L1;
    psi.col(i) = L1 * phi - L2;
  }
  P1 /= static_cast<double>(n);
  const Eigen::VectorXd psi_bar = psi.rowwise().mean();
  psi.colwise() -= psi_bar;
  const Eigen::MatrixXd sigma = psi * psi.transpose() / static_cast<double>(n - 1);
  const auto solver = P1.ldlt();
  Eigen::MatrixXd cov = solver.solve(solver.solve(sigma).transpose());
  return 0.5 * (cov + cov.transpose());
}

// Closed-form solution of the centered estimating equation:
//   phi_hat = [sum M M']^{-1} [sum M R].
inline LagFit fit_lag(const CenteredDesign& design) {
  const int p = design.dim();
  const Eigen::MatrixXd G = detail::checked_gram(design);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(p);
  for (int i = 0; i < design.n_subjects(); ++i)
    m += design.M[i].transpose() * design.R[i];
  const auto solver = G.ldlt();
  Eigen::VectorXd phi = solver.solve(m);
  phi += solver.solve(m - G * phi);  // one refinement step

  LagFit fit;
  fit.params.k = design.k;
  fit.params.alpha = phi(0);
  fit.params.beta = phi.tail(p - 1);
  fit.n_subjects = design.n_subjects();
  fit.first_t = design.first_t;
  fit.last_t = design.last_t;
  if (fit.n_subjects >= 2) {
    fit.covariance = sandwich_covariance(design, phi);
    fit.se = (fit.covariance.diagonal() / static_cast<double>(fit.n_subjects))
                 .cwiseMax(0.0)
                 .cwiseSqrt();
  }
  return fit;
}

// Direct fit of the weighted parameters; equals the weight-combination of
// the per-lag fits when those are restricted to the same time window.
inline LagFit fit_weighted_direct(const TrajectoryPanel& panel,
                                  const SummarySeries& summaries,
                                  const SummarySpec& spec, const FeatureMap& fmap,
                                  const ConditionalMeans& means,
                                  const LagWeights& w) {
  return fit_lag(assemble_weighted_design(panel, summaries, spec, fmap, means, w));
}

struct ConfidenceInterval {
  double lo = 0.0, hi = 0.0;
};

inline std::vector<ConfidenceInterval> confidence_intervals(const LagFit& fit,
                                                            double level) {
  if (!(level > 0.0 && level < 1.0))
    throw config_error("confidence level must lie in (0, 1)");
  if (fit.se.size() == 0)
    throw numeric_error("fit carries no standard errors (single subject?)");
  const double z = normal_quantile(0.5 + level / 2.0);
  const Eigen::VectorXd phi = fit.phi();
  std::vector<ConfidenceInterval> out(phi.size());
  for (Eigen::Index j = 0; j < phi.size(); ++j)
    out[j] = {phi(j) - z * fit.se(j), phi(j) + z * fit.se(j)};
  return out;
}

}  // namespace lagdose
