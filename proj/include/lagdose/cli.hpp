#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lagdose/binning.hpp"
#include "lagdose/config.hpp"
#include "lagdose/csv_io.hpp"
#include "lagdose/errors.hpp"
#include "lagdose/estimator.hpp"
#include "lagdose/monte_carlo.hpp"
#include "lagdose/policy.hpp"
#include "lagdose/simulate.hpp"

namespace lagdose::cli {

namespace detail {

// Tracks files written by a command so that a failure removes partial output.
class OutputGuard {
 public:
  ~OutputGuard() {
    if (!armed_) return;
    for (const auto& p : paths_) {
      std::error_code ec;
      std::filesystem::remove(p, ec);
    }
  }
  std::string track(std::string path) {
    paths_.push_back(path);
    return path;
  }
  void disarm() { armed_ = false; }

 private:
  std::vector<std::string> paths_;
  bool armed_ = true;
};

inline std::string pad(const std::string& s, std::size_t width) {
  return s + std::string(s.size() < width ? width - s.size() : 0, ' ');
}

inline std::string fixed(double v, int digits = 6) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

struct CommonArgs {
  std::string config_path;
  std::string panel_path;
  std::string params_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

inline ExperimentConfig load(const CommonArgs& args) {
  ExperimentConfig cfg = load_config(args.config_path);
  if (args.seed) {
    cfg.seed = *args.seed;
  }
  cfg.dgp.seed = cfg.seed;
  if (args.threads) cfg.threads = *args.threads;
  std::filesystem::create_directories(args.out_dir);
  return cfg;
}

inline DoseBounds resolve_bounds(const ExperimentConfig& cfg,
                                 const TrajectoryPanel& panel) {
  switch (cfg.bounds_policy) {
    case BoundsPolicy::unbounded: return DoseBounds::unbounded();
    case BoundsPolicy::explicit_interval: return cfg.explicit_bounds;
    case BoundsPolicy::observed_max:
      return DoseBounds::interval(0.0, panel.max_observed_dose());
  }
  return DoseBounds::unbounded();
}

struct FittedModel {
  std::vector<LagFit> per_lag;
  std::optional<LagFit> weighted;
};

inline FittedModel fit_all(const ExperimentConfig& cfg, const TrajectoryPanel& panel) {
  const SummarySeries summaries = build_summaries(panel, cfg.summary);
  const ConditionalMeans means =
      estimate_conditional_means(panel, summaries, cfg.lags, cfg.bandwidth);
  const int K = cfg.lags.back();
  FittedModel model;
  for (int k : cfg.lags) {
    std::optional<std::pair<int, int>> range;
    if (cfg.common_t_range)
      range = std::make_pair(summaries.first_t, summaries.last_t + 1 - K);
    model.per_lag.push_back(fit_lag(
        assemble_design(panel, summaries, cfg.summary, cfg.features, means, k, range)));
  }
  if (cfg.weights)
    model.weighted = fit_weighted_direct(panel, summaries, cfg.summary,
                                         cfg.features, means, *cfg.weights);
  return model;
}

inline FitTable to_table(const ExperimentConfig& cfg, const FittedModel& model) {
  FitTable table;
  table.level = cfg.ci_level;
  table.params.push_back("alpha");
  for (int j = 0; j < cfg.features.dimension(); ++j)
    table.params.push_back("beta." + cfg.features.name(j, cfg.summary));
  auto add = [&](const std::string& scope, const LagFit& fit) {
    table.scopes.push_back(scope);
    table.estimates.push_back(fit.phi());
    table.ses.push_back(fit.se);
    table.cis.push_back(confidence_intervals(fit, cfg.ci_level));
  };
  for (std::size_t i = 0; i < model.per_lag.size(); ++i)
    add("k=" + std::to_string(cfg.lags[i]), model.per_lag[i]);
  if (model.weighted) add("weighted", *model.weighted);
  return table;
}

inline void write_fit_text(const FitTable& table, const ExperimentConfig& cfg,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write '" + path + "'");
  std::size_t w0 = 10;
  for (const auto& p : table.params) w0 = std::max(w0, p.size() + 2);
  out << pad("parameter", w0);
  for (const auto& s : table.scopes) out << pad(s, 22);
  out << "\n";
  for (std::size_t j = 0; j < table.params.size(); ++j) {
    out << pad(table.params[j], w0);
    for (std::size_t s = 0; s < table.scopes.size(); ++s)
      out << pad(fixed(table.estimates[s](j), 4) + " (" + fixed(table.ses[s](j), 4) + ")",
                 22);
    out << "\n";
  }
  out << "\nestimate (standard error); "
      << format_number(cfg.ci_level * 100) << "% normal intervals in the csv\n";
  if (!table.scopes.empty() && table.scopes.back() == "weighted" &&
      table.estimates.back()(0) < 0.0) {
    const Eigen::VectorXd est = table.estimates.back();
    out << "\nper-unit optimal-dose shifts (-beta_j / 2 alpha):\n";
    for (std::size_t j = 1; j < table.params.size(); ++j)
      out << pad("  " + table.params[j], w0 + 2)
          << fixed(-est(j) / (2.0 * est(0)), 4) << "\n";
  }
}

inline void write_mc_text(const McReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write '" + path + "'");
  out << pad("scope", 10) << pad("param", 18) << pad("truth", 12) << pad("bias", 12)
      << pad("sd", 12) << pad("mean_se", 12) << "coverage\n";
  for (const auto& p : report.params)
    out << pad(p.scope, 10) << pad(p.param, 18) << pad(fixed(p.truth, 4), 12)
        << pad(fixed(p.bias, 4), 12) << pad(fixed(p.sd, 4), 12)
        << pad(fixed(p.mean_se, 4), 12) << fixed(p.coverage, 3) << "\n";
  out << "\nreplicates " << report.replicates << " (" << report.failed_replicates
      << " failed), " << format_number(report.ci_level * 100) << "% intervals\n";
  if (report.policy.enabled)
    out << "policy value: mean " << fixed(report.policy.mean, 5) << ", sd "
        << fixed(report.policy.sd, 5) << ", truth-optimal "
        << fixed(report.policy.truth_optimal_value, 5) << " ("
        << report.policy.test_subjects << " test subjects)\n";
}

inline WeightedParams weighted_from(const ExperimentConfig& cfg,
                                    const std::optional<std::string>& params_path,
                                    const TrajectoryPanel& panel) {
  const LagWeights weights =
      cfg.weights ? *cfg.weights : LagWeights::uniform(static_cast<int>(cfg.lags.size()));
  Eigen::VectorXd phi;
  if (params_path && !params_path->empty()) {
    const FitTable table = read_fit_csv(*params_path);
    auto est = fit_table_scope(table, "weighted");
    if (!est) est = fit_table_scope(table, "k=" + std::to_string(cfg.lags.back()));
    if (!est)
      throw data_error("'" + *params_path + "' has no weighted parameter rows");
    phi = *est;
  } else {
    ExperimentConfig fit_cfg = cfg;
    if (!fit_cfg.weights) fit_cfg.weights = weights;
    const FittedModel model = fit_all(fit_cfg, panel);
    phi = model.weighted->phi();
  }
  if (phi.size() != cfg.features.dimension() + 1)
    throw config_error("fitted parameters do not match the configured feature map");
  return WeightedParams{phi(0), phi.tail(phi.size() - 1), weights};
}

// ---- commands --------------------------------------------------------------

inline void cmd_simulate(const CommonArgs& args, std::ostream& out) {
  const ExperimentConfig cfg = load(args);
  OutputGuard guard;
  const TrajectoryPanel panel = generate_panel(cfg.dgp);
  const std::string path =
      guard.track((std::filesystem::path(args.out_dir) / "panel.csv").string());
  save_panel(panel, path);
  guard.disarm();
  out << "wrote " << path << " (" << panel.n_subjects() << " subjects, T="
      << panel.time_horizon() << ")\n";
}

inline void cmd_fit(const CommonArgs& args, std::ostream& out) {
  const ExperimentConfig cfg = load(args);
  if (args.panel_path.empty()) throw config_error("fit requires --panel");
  OutputGuard guard;
  const TrajectoryPanel panel = load_panel(args.panel_path, cfg.schema);
  const FittedModel model = fit_all(cfg, panel);
  const FitTable table = to_table(cfg, model);
  const auto dir = std::filesystem::path(args.out_dir);
  const std::string csv = guard.track((dir / "fit.csv").string());
  const std::string txt = guard.track((dir / "fit.txt").string());
  write_fit_csv(table, csv);
  write_fit_text(table, cfg, txt);
  guard.disarm();
  out << "wrote " << csv << " and " << txt << "\n";
}

inline void cmd_mc(const CommonArgs& args, std::ostream& out) {
  const ExperimentConfig cfg = load(args);
  OutputGuard guard;
  const McReport report = run_monte_carlo(cfg.dgp, cfg.replicates,
                                          cfg.estimator_settings(), cfg.policy,
                                          cfg.threads);
  const auto dir = std::filesystem::path(args.out_dir);
  const std::string csv = guard.track((dir / "mc_report.csv").string());
  const std::string txt = guard.track((dir / "mc_report.txt").string());
  write_mc_csv(report, csv);
  write_mc_text(report, txt);
  guard.disarm();
  out << "wrote " << csv << " and " << txt << " (" << report.replicates
      << " replicates, " << report.failed_replicates << " failed)\n";
}

inline void cmd_suggest(const CommonArgs& args, std::ostream& out) {
  const ExperimentConfig cfg = load(args);
  if (args.panel_path.empty()) throw config_error("suggest requires --panel");
  OutputGuard guard;
  const TrajectoryPanel panel = load_panel(args.panel_path, cfg.schema);
  const WeightedParams params =
      weighted_from(cfg, args.params_path.empty()
                             ? std::nullopt
                             : std::optional<std::string>(args.params_path),
                    panel);
  const DoseRegime regime{AdvantageModel{params, cfg.summary, cfg.features},
                          resolve_bounds(cfg, panel)};
  const SummarySeries summaries = build_summaries(panel, cfg.summary);

  const std::string path =
      guard.track((std::filesystem::path(args.out_dir) / "suggestions.csv").string());
  std::ofstream file(path);
  if (!file) throw data_error("cannot write '" + path + "'");
  file << "subject_id,t";
  for (const auto& c : panel.covariate_names()) file << ',' << c;
  file << ",dose,outcome,suggested_dose\n";
  for (int i = 0; i < panel.n_subjects(); ++i) {
    const auto& subj = panel.subject(i);
    for (int t = 1; t <= panel.time_horizon() + 1; ++t) {
      file << panel.subject_id(i) << ',' << t;
      for (int c = 0; c < panel.n_covariates(); ++c)
        file << ',' << format_number(subj.x(t, c));
      file << ',';
      if (t <= panel.time_horizon()) file << format_number(subj.a(t));
      file << ',';
      if (t >= 2) file << format_number(subj.y(t));
      file << ',';
      if (t >= summaries.first_t && t <= summaries.last_t)
        file << format_number(suggest_dose(regime, summaries.s(i, t)));
      file << '\n';
    }
  }
  file.close();
  guard.disarm();
  out << "wrote " << path << "\n";
}

inline void cmd_evaluate(const CommonArgs& args, std::ostream& out) {
  const ExperimentConfig cfg = load(args);
  if (args.panel_path.empty()) throw config_error("evaluate requires --panel");
  OutputGuard guard;
  const TrajectoryPanel panel = load_panel(args.panel_path, cfg.schema);
  const WeightedParams params =
      weighted_from(cfg, args.params_path.empty()
                             ? std::nullopt
                             : std::optional<std::string>(args.params_path),
                    panel);
  const DoseRegime regime{AdvantageModel{params, cfg.summary, cfg.features},
                          resolve_bounds(cfg, panel)};
  const AdvantageReport report = estimated_advantage_report(regime, panel);
  const auto dir = std::filesystem::path(args.out_dir);
  const std::string csv = guard.track((dir / "evaluation.csv").string());
  std::ofstream file(csv);
  if (!file) throw data_error("cannot write '" + csv + "'");
  file << "doses,mean_estimated_advantage\n";
  file << "suggested," << format_number(report.suggested) << '\n';
  file << "observed," << format_number(report.observed) << '\n';
  file.close();
  guard.disarm();
  out << "suggested doses: " << fixed(report.suggested, 5)
      << "  observed doses: " << fixed(report.observed, 5) << "\n"
      << "wrote " << csv << "\n";
}

inline void cmd_bin_glucose(const CommonArgs& args, std::ostream& out) {
  const ExperimentConfig cfg = load(args);
  if (args.panel_path.empty())
    throw config_error("bin-glucose requires --panel with the raw stream");
  if (!cfg.binning) throw config_error("config has no binning section");
  OutputGuard guard;
  const TrajectoryPanel panel = bin_glucose_stream(args.panel_path, *cfg.binning);
  const std::string path =
      guard.track((std::filesystem::path(args.out_dir) / "panel.csv").string());
  save_panel(panel, path);
  guard.disarm();
  out << "wrote " << path << " (" << panel.n_subjects() << " subjects, T="
      << panel.time_horizon() << ")\n";
}

}  // namespace detail

// Entry point shared by the binary and the tests. Exit codes: 0 ok,
// 2 configuration error, 3 data error, 4 numerical error.
inline int run_command(const std::vector<std::string>& args,
                       std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  CLI::App app{"causal lag-dose estimation and dose suggestion"};
  app.require_subcommand(1);

  detail::CommonArgs common;
  auto add_common = [&](CLI::App* sub, bool needs_panel, bool has_params) {
    sub->add_option("--config", common.config_path, "JSON experiment config")
        ->required();
    if (needs_panel) sub->add_option("--panel", common.panel_path, "input CSV");
    if (has_params)
      sub->add_option("--params", common.params_path,
                      "reuse estimates from a fit.csv instead of refitting");
    sub->add_option("--out", common.out_dir, "output directory");
    sub->add_option("--seed", common.seed, "override the config seed");
    sub->add_option("--threads", common.threads,
                    "worker threads (default: LAGDOSE_THREADS or all cores)");
  };
  auto* sim = app.add_subcommand("simulate", "generate a synthetic panel CSV");
  add_common(sim, false, false);
  auto* fit = app.add_subcommand("fit", "estimate per-lag and weighted parameters");
  add_common(fit, true, false);
  auto* mc = app.add_subcommand("mc", "replicate the estimation study against truth");
  add_common(mc, false, false);
  auto* suggest = app.add_subcommand("suggest", "append suggested doses to a panel");
  add_common(suggest, true, true);
  auto* evaluate =
      app.add_subcommand("evaluate", "compare suggested vs observed dose advantage");
  add_common(evaluate, true, true);
  auto* bin = app.add_subcommand("bin-glucose",
                                 "aggregate a raw glucose stream into a panel");
  add_common(bin, true, false);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) detail::cmd_simulate(common, out);
    if (fit->parsed()) detail::cmd_fit(common, out);
    if (mc->parsed()) detail::cmd_mc(common, out);
    if (suggest->parsed()) detail::cmd_suggest(common, out);
    if (evaluate->parsed()) detail::cmd_evaluate(common, out);
    if (bin->parsed()) detail::cmd_bin_glucose(common, out);
    return 0;
  } catch (const config_error& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const data_error& e) {
    err << "data error: " << e.what() << "\n";
    return 3;
  } catch (const numeric_error& e) {
    err << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 4;
  }
}

}  // namespace lagdose::cli
