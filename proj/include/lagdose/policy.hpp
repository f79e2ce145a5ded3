#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>

#include "lagdose/effect_model.hpp"
#include "lagdose/errors.hpp"
#include "lagdose/panel.hpp"
#include "lagdose/summary.hpp"

namespace lagdose {

struct DoseBounds {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  static DoseBounds unbounded() { return {}; }
  static DoseBounds interval(double lo, double hi) {
    if (!(lo <= hi)) throw config_error("dose bounds need lo <= hi");
    return {lo, hi};
  }
  bool finite() const { return std::isfinite(lo) && std::isfinite(hi); }
};

// A quadratic advantage surface: parameters plus the summary/feature
// construction they apply to.
struct AdvantageModel {
  WeightedParams params;
  SummarySpec spec;
  FeatureMap fmap;

  double at(double dose, const Eigen::Ref<const Eigen::RowVectorXd>& s) const {
    return advantage(params, dose, fmap(s));
  }
};

struct DoseRegime {
  AdvantageModel model;
  DoseBounds bounds;
};

// Maximizer of the quadratic advantage over the dose interval. Concave case:
// the vertex -beta'f / (2 alpha), clipped into the bounds. Otherwise the
// advantage is maximized at an endpoint, which requires finite bounds; ties
// resolve to the lower dose.
inline double suggest_dose(const DoseRegime& regime,
                           const Eigen::Ref<const Eigen::RowVectorXd>& s) {
  const double alpha = regime.model.params.alpha_tilde;
  const double bf = regime.model.params.beta_tilde.dot(regime.model.fmap(s));
  if (alpha < 0.0) {
    const double vertex = -bf / (2.0 * alpha);
    return std::clamp(vertex, regime.bounds.lo, regime.bounds.hi);
  }
  if (!regime.bounds.finite())
    throw numeric_error(
        "no finite maximizer: the quadratic coefficient is nonnegative and the "
        "dose interval is unbounded");
  const double lo = regime.bounds.lo, hi = regime.bounds.hi;
  const double at_lo = alpha * lo * lo + bf * lo;
  const double at_hi = alpha * hi * hi + bf * hi;
  return at_hi > at_lo ? hi : lo;
}

namespace detail {

template <typename PerObservation>
double mean_over_panel(const TrajectoryPanel& panel, const SummarySeries& s_policy,
                       const SummarySeries& s_value,
                       std::optional<std::pair<int, int>> t_range,
                       PerObservation&& value) {
  int lo = std::max(s_policy.first_t, s_value.first_t);
  int hi = std::min(s_policy.last_t, s_value.last_t);
  if (t_range) {
    if (t_range->first < lo || t_range->second > hi)
      throw data_error("requested evaluation window exceeds the valid range");
    lo = t_range->first;
    hi = t_range->second;
  }
  if (lo > hi) throw data_error("empty evaluation window");
  double total = 0.0;
  for (int i = 0; i < panel.n_subjects(); ++i) {
    double acc = 0.0;
    for (int t = lo; t <= hi; ++t) acc += value(i, t);
    total += acc / (hi - lo + 1);
  }
  return total / panel.n_subjects();
}

}  // namespace detail

// Average advantage of the regime's suggestions under a reference surface
// (typically the true parameters): mean over t, then over subjects, of
// truth(suggest(S_t), S_t).
inline double evaluate_regime(const DoseRegime& regime,
                              const TrajectoryPanel& eval_panel,
                              const AdvantageModel& truth,
                              std::optional<std::pair<int, int>> t_range = std::nullopt) {
  const SummarySeries s_policy = build_summaries(eval_panel, regime.model.spec);
  const SummarySeries s_value = build_summaries(eval_panel, truth.spec);
  return detail::mean_over_panel(
      eval_panel, s_policy, s_value, t_range, [&](int i, int t) {
        const double a = suggest_dose(regime, s_policy.s(i, t));
        return truth.at(a, s_value.s(i, t));
      });
}

// Self-assessed comparison when no ground truth exists: the fitted surface's
// mean advantage at the suggested doses and at the observed doses.
struct AdvantageReport {
  double suggested = 0.0;
  double observed = 0.0;
};

inline AdvantageReport estimated_advantage_report(
    const DoseRegime& regime, const TrajectoryPanel& eval_panel,
    std::optional<std::pair<int, int>> t_range = std::nullopt) {
  const SummarySeries s = build_summaries(eval_panel, regime.model.spec);
  AdvantageReport report;
  report.suggested = detail::mean_over_panel(
      eval_panel, s, s, t_range, [&](int i, int t) {
        return regime.model.at(suggest_dose(regime, s.s(i, t)), s.s(i, t));
      });
  report.observed = detail::mean_over_panel(
      eval_panel, s, s, t_range, [&](int i, int t) {
        return regime.model.at(eval_panel.subject(i).a(t), s.s(i, t));
      });
  return report;
}

// Per-unit shift of the optimal dose for a one-unit increase in feature j,
// defined when the surface is strictly concave.
inline Eigen::VectorXd optimal_dose_shifts(const WeightedParams& params) {
  if (!(params.alpha_tilde < 0.0))
    throw numeric_error("dose shifts are defined only for a concave advantage");
  return -params.beta_tilde / (2.0 * params.alpha_tilde);
}

}  // namespace lagdose
