#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lagdose/binning.hpp"
#include "lagdose/csv_io.hpp"
#include "lagdose/errors.hpp"
#include "lagdose/kernel_smoother.hpp"
#include "lagdose/monte_carlo.hpp"
#include "lagdose/policy.hpp"
#include "lagdose/simulate.hpp"
#include "lagdose/summary.hpp"

namespace lagdose {

enum class BoundsPolicy { observed_max, explicit_interval, unbounded };

// One JSON document configures every command; sections irrelevant to a
// command are simply unused. Unknown keys are rejected outright.
struct ExperimentConfig {
  SummarySpec summary{{SummaryTerm::current("X")}};
  bool a0_zero = false;
  FeatureMap features{true, {0}};
  std::vector<int> lags{1};
  std::optional<LagWeights> weights;
  BandwidthRule bandwidth;
  double ci_level = 0.95;
  BoundsPolicy bounds_policy = BoundsPolicy::unbounded;
  DoseBounds explicit_bounds;
  bool common_t_range = false;  // restrict per-lag fits to t <= T+1-K
  std::uint64_t seed = 1;
  int replicates = 200;
  int threads = 0;
  DgpConfig dgp;
  PolicySettings policy;
  PanelCsvSchema schema;
  std::optional<BinningConfig> binning;

  EstimatorSettings estimator_settings() const {
    return {summary, features, bandwidth, lags, weights, ci_level};
  }
};

namespace detail {

using json = nlohmann::json;

inline void require_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key))
      throw config_error("unknown key '" + key + "' in " + where);
}

inline SummaryTerm parse_term(const json& j) {
  require_keys(j, {"kind", "column", "lag", "from_lag", "to_lag"}, "summary term");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "current_covariate")
    return SummaryTerm::current(j.at("column").get<std::string>());
  if (kind == "lagged_covariate")
    return SummaryTerm::lagged(j.at("column").get<std::string>(),
                               j.at("lag").get<int>());
  if (kind == "lagged_dose") return SummaryTerm::dose_lag(j.at("lag").get<int>());
  if (kind == "rolling_mean_covariate")
    return SummaryTerm::rolling_mean(j.at("column").get<std::string>(),
                                     j.at("from_lag").get<int>(),
                                     j.at("to_lag").get<int>());
  throw config_error("unknown summary term kind '" + kind + "'");
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using detail::require_keys;
  require_keys(j,
               {"summary", "features", "lags", "weights", "bandwidth", "ci_level",
                "dose_bounds", "t_range", "seed", "replicates", "threads", "dgp",
                "mc", "panel", "binning"},
               "config");
  ExperimentConfig cfg;

  if (j.contains("summary")) {
    const auto& s = j.at("summary");
    require_keys(s, {"a0_zero", "terms"}, "summary");
    cfg.a0_zero = s.value("a0_zero", false);
    std::vector<SummaryTerm> terms;
    for (const auto& t : s.at("terms")) terms.push_back(detail::parse_term(t));
    cfg.summary = SummarySpec(std::move(terms));
  }
  if (j.contains("features")) {
    const auto& f = j.at("features");
    require_keys(f, {"intercept", "entries"}, "features");
    std::vector<int> entries;
    if (f.contains("entries"))
      for (const auto& e : f.at("entries")) entries.push_back(e.get<int>());
    cfg.features = FeatureMap(f.value("intercept", true), std::move(entries));
  } else {
    cfg.features = FeatureMap::intercept_plus_all(cfg.summary.dimension());
  }
  for (int e : cfg.features.entries())
    if (e >= cfg.summary.dimension())
      throw config_error("feature entry " + std::to_string(e) +
                         " is outside the summary vector");

  if (j.contains("lags")) {
    cfg.lags.clear();
    if (j.at("lags").is_number_integer()) {
      const int K = j.at("lags").get<int>();
      if (K < 1) throw config_error("lags must be >= 1");
      for (int k = 1; k <= K; ++k) cfg.lags.push_back(k);
    } else {
      for (const auto& k : j.at("lags")) cfg.lags.push_back(k.get<int>());
      std::sort(cfg.lags.begin(), cfg.lags.end());
      cfg.lags.erase(std::unique(cfg.lags.begin(), cfg.lags.end()), cfg.lags.end());
      if (cfg.lags.empty() || cfg.lags.front() < 1)
        throw config_error("lags must be positive integers");
    }
  }
  if (j.contains("weights")) {
    if (j.at("weights").is_string()) {
      if (j.at("weights").get<std::string>() != "uniform")
        throw config_error("weights must be an array or \"uniform\"");
      cfg.weights = LagWeights::uniform(static_cast<int>(cfg.lags.size()));
    } else {
      Eigen::VectorXd w(j.at("weights").size());
      int idx = 0;
      for (const auto& v : j.at("weights")) w(idx++) = v.get<double>();
      cfg.weights = LagWeights(std::move(w));
    }
  }
  if (j.contains("bandwidth")) {
    const auto& b = j.at("bandwidth");
    require_keys(b, {"c", "gamma", "mode"}, "bandwidth");
    cfg.bandwidth.c = b.value("c", 0.305);
    cfg.bandwidth.gamma = b.value("gamma", 1.0 / 3.0);
    const std::string mode = b.value("mode", "per_time");
    if (mode == "per_time")
      cfg.bandwidth.mode = SmoothingMode::per_time;
    else if (mode == "pooled")
      cfg.bandwidth.mode = SmoothingMode::pooled;
    else
      throw config_error("bandwidth mode must be per_time or pooled");
    cfg.bandwidth.validate();
  }
  if (j.contains("ci_level")) {
    cfg.ci_level = j.at("ci_level").get<double>();
    if (!(cfg.ci_level > 0.0 && cfg.ci_level < 1.0))
      throw config_error("ci_level must lie in (0, 1)");
  }
  if (j.contains("dose_bounds")) {
    const auto& d = j.at("dose_bounds");
    require_keys(d, {"policy", "lo", "hi"}, "dose_bounds");
    const std::string policy = d.at("policy").get<std::string>();
    if (policy == "observed_max") {
      cfg.bounds_policy = BoundsPolicy::observed_max;
    } else if (policy == "explicit") {
      cfg.bounds_policy = BoundsPolicy::explicit_interval;
      cfg.explicit_bounds =
          DoseBounds::interval(d.at("lo").get<double>(), d.at("hi").get<double>());
    } else if (policy == "unbounded") {
      cfg.bounds_policy = BoundsPolicy::unbounded;
    } else {
      throw config_error("dose bounds policy must be observed_max, explicit or unbounded");
    }
  }
  if (j.contains("t_range")) {
    const std::string tr = j.at("t_range").get<std::string>();
    if (tr == "common")
      cfg.common_t_range = true;
    else if (tr != "per_lag")
      throw config_error("t_range must be per_lag or common");
  }
  cfg.seed = j.value("seed", std::uint64_t{1});
  cfg.replicates = j.value("replicates", 200);
  cfg.threads = j.value("threads", 0);

  if (j.contains("dgp")) {
    const auto& d = j.at("dgp");
    require_keys(d,
                 {"sigma", "theta1", "theta2", "eta1", "eta2", "tau1", "tau2",
                  "beta0", "beta1", "T", "n"},
                 "dgp");
    cfg.dgp.sigma = d.value("sigma", cfg.dgp.sigma);
    cfg.dgp.theta1 = d.value("theta1", cfg.dgp.theta1);
    cfg.dgp.theta2 = d.value("theta2", cfg.dgp.theta2);
    cfg.dgp.eta1 = d.value("eta1", cfg.dgp.eta1);
    cfg.dgp.eta2 = d.value("eta2", cfg.dgp.eta2);
    cfg.dgp.tau1 = d.value("tau1", cfg.dgp.tau1);
    cfg.dgp.tau2 = d.value("tau2", cfg.dgp.tau2);
    cfg.dgp.beta0 = d.value("beta0", cfg.dgp.beta0);
    cfg.dgp.beta1 = d.value("beta1", cfg.dgp.beta1);
    cfg.dgp.T = d.value("T", cfg.dgp.T);
    cfg.dgp.n = d.value("n", cfg.dgp.n);
    cfg.dgp.validate();
  }
  if (j.contains("mc")) {
    const auto& m = j.at("mc");
    require_keys(m, {"evaluate_policy", "test_panel_subjects"}, "mc");
    cfg.policy.evaluate = m.value("evaluate_policy", true);
    cfg.policy.test_subjects = m.value("test_panel_subjects", 5000);
    if (cfg.policy.test_subjects < 2)
      throw config_error("test panel needs at least two subjects");
  }
  if (j.contains("panel")) {
    const auto& p = j.at("panel");
    require_keys(p,
                 {"covariates", "subject_column", "time_column", "dose_column",
                  "outcome_column", "a0_zero"},
                 "panel");
    cfg.schema.covariates.clear();
    for (const auto& c : p.at("covariates"))
      cfg.schema.covariates.push_back(c.get<std::string>());
    cfg.schema.subject_column = p.value("subject_column", cfg.schema.subject_column);
    cfg.schema.time_column = p.value("time_column", cfg.schema.time_column);
    cfg.schema.dose_column = p.value("dose_column", cfg.schema.dose_column);
    cfg.schema.outcome_column = p.value("outcome_column", cfg.schema.outcome_column);
    cfg.schema.a0_zero = p.value("a0_zero", cfg.a0_zero);
  } else {
    cfg.schema.covariates = {"X"};
    cfg.schema.a0_zero = cfg.a0_zero;
  }
  if (j.contains("binning")) {
    const auto& b = j.at("binning");
    detail::require_keys(b,
                         {"bin_width", "bins", "time_column", "subject_column",
                          "glucose_column", "dose_column", "covariates",
                          "lookahead"},
                         "binning");
    BinningConfig bc;
    bc.bin_width = b.value("bin_width", bc.bin_width);
    bc.bins = b.value("bins", bc.bins);
    bc.time_column = b.value("time_column", bc.time_column);
    bc.subject_column = b.value("subject_column", bc.subject_column);
    bc.glucose_column = b.value("glucose_column", bc.glucose_column);
    bc.dose_column = b.value("dose_column", std::string());
    if (b.contains("covariates"))
      for (const auto& c : b.at("covariates")) {
        detail::require_keys(c, {"column", "agg"}, "binning covariate");
        BinningConfig::Aggregate agg;
        agg.column = c.at("column").get<std::string>();
        const std::string a = c.value("agg", "mean");
        if (a == "sum")
          agg.sum = true;
        else if (a != "mean")
          throw config_error("covariate agg must be mean or sum");
        bc.covariates.push_back(std::move(agg));
      }
    if (b.contains("lookahead"))
      for (const auto& l : b.at("lookahead")) {
        detail::require_keys(l, {"name", "source"}, "binning lookahead");
        bc.lookahead.push_back(
            {l.at("name").get<std::string>(), l.at("source").get<std::string>()});
      }
    bc.validate();
    cfg.binning = std::move(bc);
  }

  // Cross checks shared by every command that estimates.
  if (cfg.weights && static_cast<int>(cfg.lags.size()) != cfg.weights->max_lag())
    throw config_error("weights must have one entry per lag");
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error("config '" + path + "' is not valid JSON: " + e.what());
  }
  try {
    return parse_config(j);
  } catch (const nlohmann::json::exception& e) {
    throw config_error("config '" + path + "': " + e.what());
  }
}

}  // namespace lagdose
