#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lagdose/estimator.hpp"
#include "lagdose/kernel_smoother.hpp"
#include "lagdose/parallel.hpp"
#include "lagdose/policy.hpp"
#include "lagdose/simulate.hpp"
#include "lagdose/stats.hpp"
#include "lagdose/summary.hpp"

namespace lagdose {

struct EstimatorSettings {
  SummarySpec spec;
  FeatureMap fmap;
  BandwidthRule bandwidth;
  std::vector<int> lags;                // per-lag fits to run, ascending
  std::optional<LagWeights> weights;    // enables the direct weighted fit
  double ci_level = 0.95;

  void validate() const {
    if (lags.empty()) throw config_error("at least one lag is required");
    if (!std::is_sorted(lags.begin(), lags.end()) || lags.front() < 1)
      throw config_error("lags must be ascending and >= 1");
    if (weights) {
      const int K = weights->max_lag();
      if (static_cast<int>(lags.size()) != K || lags.back() != K)
        throw config_error(
            "the weighted fit needs per-lag fits for exactly k = 1..K");
    }
  }
};

struct PolicySettings {
  bool evaluate = false;
  int test_subjects = 5000;
};

struct ParamSummary {
  std::string scope;  // "k=1", .., "weighted"
  std::string param;  // "alpha", "beta.<feature>"
  double truth = 0.0;
  double mean = 0.0;
  double bias = 0.0;
  double sd = 0.0;
  double mean_se = 0.0;
  double coverage = 0.0;
};

struct PolicySummary {
  bool enabled = false;
  int test_subjects = 0;
  double mean = 0.0;
  double sd = 0.0;
  double truth_optimal_value = 0.0;
};

struct McReport {
  int replicates = 0;
  int failed_replicates = 0;
  double ci_level = 0.95;
  std::vector<ParamSummary> params;
  PolicySummary policy;
};

namespace detail {

// True parameter vector aligned with the fitted parameterization: the
// quadratic coefficient, then one entry per feature. Only the intercept and
// the generative covariate carry nonzero true loadings.
inline Eigen::VectorXd embed_truth(const LagParams& truth, const SummarySpec& spec,
                                   const FeatureMap& fmap) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(fmap.dimension() + 1);
  v(0) = truth.alpha;
  int j = 1;
  if (fmap.intercept()) v(j++) = truth.beta(0);
  for (int e : fmap.entries()) {
    const auto& term = spec.terms()[e];
    if (term.kind == TermKind::current_covariate && term.column == "X")
      v(j) = truth.beta(1);
    ++j;
  }
  return v;
}

inline std::vector<std::string> param_names(const SummarySpec& spec,
                                            const FeatureMap& fmap) {
  std::vector<std::string> names{"alpha"};
  for (int j = 0; j < fmap.dimension(); ++j)
    names.push_back("beta." + fmap.name(j, spec));
  return names;
}

struct ReplicateResult {
  bool ok = false;
  std::string error;
  std::vector<Eigen::VectorXd> estimates;  // per lag, then weighted last
  std::vector<Eigen::VectorXd> ses;
  double policy_value = 0.0;
};

}  // namespace detail

// Repeated-draw study of the full estimation pipeline against the analytic
// truth: per-replicate panels are generated from counter-derived seeds, so
// the report is reproducible and independent of the thread schedule.
// Replicates whose fit fails are counted, never silently dropped.
inline McReport run_monte_carlo(const DgpConfig& cfg, int replicates,
                                const EstimatorSettings& settings,
                                const PolicySettings& policy = {},
                                int threads = 0) {
  cfg.validate();
  settings.validate();
  if (replicates < 2) throw config_error("need at least two replicates");
  const int K = settings.weights ? settings.weights->max_lag() : 0;

  // Truth per lag, embedded into the fitted parameterization.
  std::vector<Eigen::VectorXd> truth;
  std::vector<LagParams> truth_native;
  for (int k : settings.lags) {
    truth_native.push_back(true_lag_params(cfg, k));
    truth.push_back(detail::embed_truth(truth_native.back(), settings.spec,
                                        settings.fmap));
  }
  std::optional<WeightedParams> truth_weighted;
  std::optional<AdvantageModel> truth_model;
  if (settings.weights) {
    truth_weighted = combine_weighted(truth_native, *settings.weights);
    truth.push_back(detail::embed_truth(
        LagParams{K, truth_weighted->alpha_tilde, truth_weighted->beta_tilde},
        settings.spec, settings.fmap));
    SummarySpec truth_spec({SummaryTerm::current("X")});
    truth_model = AdvantageModel{
        WeightedParams{truth_weighted->alpha_tilde,
                       Eigen::Vector2d(truth_weighted->beta_tilde(0),
                                       truth_weighted->beta_tilde(1)),
                       *settings.weights},
        truth_spec, FeatureMap(true, {0})};
  }

  // Shared held-out panel, long enough that all K lagged outcomes exist for
  // every evaluated decision time.
  std::optional<TrajectoryPanel> test_panel;
  double truth_optimal = 0.0;
  const bool do_policy = policy.evaluate && settings.weights;
  if (do_policy) {
    DgpConfig test_cfg = cfg;
    test_cfg.n = policy.test_subjects;
    test_cfg.T = cfg.T + K - 1;
    test_cfg.seed = derive_seed(cfg.seed, /*stream=*/2);
    test_panel = generate_panel(test_cfg);
    const DoseRegime optimal{*truth_model, DoseBounds::unbounded()};
    truth_optimal = evaluate_regime(optimal, *test_panel, *truth_model,
                                    std::make_pair(1, cfg.T));
  }

  std::vector<detail::ReplicateResult> results(replicates);
  parallel_for(replicates, threads, [&](std::size_t r) {
    detail::ReplicateResult& res = results[r];
    try {
      DgpConfig rep_cfg = cfg;
      rep_cfg.seed = derive_seed(cfg.seed, /*stream=*/1, r);
      const TrajectoryPanel panel = generate_panel(rep_cfg);
      const SummarySeries summaries = build_summaries(panel, settings.spec);
      const ConditionalMeans means = estimate_conditional_means(
          panel, summaries, settings.lags, settings.bandwidth);
      for (int k : settings.lags) {
        const LagFit fit = fit_lag(assemble_design(
            panel, summaries, settings.spec, settings.fmap, means, k));
        res.estimates.push_back(fit.phi());
        res.ses.push_back(fit.se);
      }
      if (settings.weights) {
        const LagFit wfit =
            fit_weighted_direct(panel, summaries, settings.spec, settings.fmap,
                                means, *settings.weights);
        res.estimates.push_back(wfit.phi());
        res.ses.push_back(wfit.se);
        if (do_policy) {
          const DoseRegime regime{
              AdvantageModel{
                  WeightedParams{wfit.params.alpha, wfit.params.beta,
                                 *settings.weights},
                  settings.spec, settings.fmap},
              DoseBounds::unbounded()};
          res.policy_value = evaluate_regime(regime, *test_panel, *truth_model,
                                             std::make_pair(1, cfg.T));
        }
      }
      res.ok = true;
    } catch (const std::exception& e) {
      res.ok = false;
      res.error = e.what();
    }
  });

  McReport report;
  report.replicates = replicates;
  report.ci_level = settings.ci_level;
  for (const auto& r : results)
    if (!r.ok) ++report.failed_replicates;
  const int ok_count = replicates - report.failed_replicates;
  if (ok_count < 2) {
    std::string detail;
    for (const auto& r : results)
      if (!r.ok) {
        detail = "; first error: " + r.error;
        break;
      }
    throw numeric_error("fewer than two replicates produced a fit" + detail);
  }

  const auto names = detail::param_names(settings.spec, settings.fmap);
  const double z = normal_quantile(0.5 + settings.ci_level / 2.0);
  const int n_fits = static_cast<int>(settings.lags.size()) + (settings.weights ? 1 : 0);
  for (int fidx = 0; fidx < n_fits; ++fidx) {
    const bool weighted = fidx == static_cast<int>(settings.lags.size());
    const std::string scope =
        weighted ? "weighted" : "k=" + std::to_string(settings.lags[fidx]);
    for (std::size_t j = 0; j < names.size(); ++j) {
      std::vector<double> est, se;
      int hits = 0;
      for (const auto& r : results) {
        if (!r.ok) continue;
        const double e = r.estimates[fidx](j);
        const double s = r.ses[fidx](j);
        est.push_back(e);
        se.push_back(s);
        if (std::abs(e - truth[fidx](j)) <= z * s) ++hits;
      }
      ParamSummary ps;
      ps.scope = scope;
      ps.param = names[j];
      ps.truth = truth[fidx](j);
      ps.mean = mean(est);
      ps.bias = ps.mean - ps.truth;
      ps.sd = sample_sd(est);
      ps.mean_se = mean(se);
      ps.coverage = static_cast<double>(hits) / est.size();
      report.params.push_back(std::move(ps));
    }
  }

  if (do_policy) {
    std::vector<double> values;
    for (const auto& r : results)
      if (r.ok) values.push_back(r.policy_value);
    report.policy.enabled = true;
    report.policy.test_subjects = policy.test_subjects;
    report.policy.mean = mean(values);
    report.policy.sd = sample_sd(values);
    report.policy.truth_optimal_value = truth_optimal;
  }
  return report;
}

}  // namespace lagdose
