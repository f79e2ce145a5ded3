#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "lagdose/csv_io.hpp"
#include "lagdose/errors.hpp"
#include "lagdose/glycemic.hpp"
#include "lagdose/panel.hpp"

namespace lagdose {

// Aggregation of a raw measurement stream into fixed intervals. The interval
// covering [ (b-1)*width, b*width ) is labeled b. Bin b supplies the
// covariate row X_b and the dose A_b; the glycemic outcome of bin b becomes
// Y_b, the outcome following the decision A_{b-1}. A file with B bins per
// subject therefore yields a panel with T = B - 1 decisions.
struct BinningConfig {
  double bin_width = 30.0;  // in the raw file's time units
  int bins = 48;            // bins per subject
  std::string time_column = "time";
  std::string subject_column = "subject_id";
  std::string glucose_column = "glucose";
  std::string dose_column;  // summed per bin

  struct Aggregate {
    std::string column;
    bool sum = false;  // mean otherwise
  };
  std::vector<Aggregate> covariates;

  // Derived column whose bin-b value is taken from the source column at bin
  // b+1 (zero at the final bin). Deliberate lookahead; every use must be
  // declared here.
  struct Lookahead {
    std::string name;
    std::string source;
  };
  std::vector<Lookahead> lookahead;

  void validate() const {
    if (!(bin_width > 0.0)) throw config_error("bin width must be positive");
    if (bins < 2) throw config_error("need at least two bins per subject");
    if (dose_column.empty()) throw config_error("binning needs a dose column");
    for (const auto& la : lookahead) {
      bool found = false;
      for (const auto& agg : covariates)
        if (agg.column == la.source) found = true;
      if (!found)
        throw config_error("lookahead source '" + la.source +
                           "' is not an aggregated covariate");
    }
  }
};

inline TrajectoryPanel bin_glucose_stream(const std::string& path,
                                          const BinningConfig& cfg) {
  cfg.validate();
  std::vector<std::string> header;
  const auto rows = detail::read_csv(path, header);
  const int subj_col = detail::find_column(header, cfg.subject_column, path);
  const int time_col = detail::find_column(header, cfg.time_column, path);
  const int gluc_col = detail::find_column(header, cfg.glucose_column, path);
  const int dose_col = detail::find_column(header, cfg.dose_column, path);
  std::vector<int> cov_cols;
  for (const auto& agg : cfg.covariates)
    cov_cols.push_back(detail::find_column(header, agg.column, path));

  const int B = cfg.bins;
  const int p_raw = static_cast<int>(cfg.covariates.size());
  struct SubjectBins {
    std::vector<int> count;
    std::vector<double> dose, igc;
    std::vector<std::vector<double>> cov;  // per covariate, per bin
  };
  std::vector<std::string> order;
  std::map<std::string, SubjectBins> acc;

  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::string where = "at data row " + std::to_string(r + 1);
    const std::string& id = rows[r][subj_col];
    auto it = acc.find(id);
    if (it == acc.end()) {
      order.push_back(id);
      SubjectBins sb;
      sb.count.assign(B, 0);
      sb.dose.assign(B, 0.0);
      sb.igc.assign(B, 0.0);
      sb.cov.assign(p_raw, std::vector<double>(B, 0.0));
      it = acc.emplace(id, std::move(sb)).first;
    }
    const double time = parse_number(rows[r][time_col], where);
    const int b = static_cast<int>(std::floor(time / cfg.bin_width));
    if (time < 0.0 || b >= B)
      throw data_error("time " + format_number(time) + " falls outside the " +
                       std::to_string(B) + "-bin grid " + where);
    SubjectBins& sb = it->second;
    ++sb.count[b];
    sb.dose[b] += parse_number(rows[r][dose_col], where);
    const double g = parse_number(rows[r][gluc_col], where);
    if (!(g > 0.0)) throw data_error("glucose must be positive " + where);
    sb.igc[b] += igc_penalty(g);
    for (int c = 0; c < p_raw; ++c)
      sb.cov[c][b] += parse_number(rows[r][cov_cols[c]], where);
  }

  std::vector<std::string> cov_names;
  for (const auto& agg : cfg.covariates) cov_names.push_back(agg.column);
  for (const auto& la : cfg.lookahead) cov_names.push_back(la.name);

  const int T = B - 1;
  std::vector<SubjectTrajectory> subjects;
  for (const auto& id : order) {
    SubjectBins& sb = acc[id];
    for (int b = 0; b < B; ++b)
      if (sb.count[b] == 0)
        throw data_error("subject '" + id + "' has no readings in bin " +
                         std::to_string(b + 1));
    // Per-bin aggregates: means unless the column is declared a sum.
    for (int c = 0; c < p_raw; ++c)
      if (!cfg.covariates[c].sum)
        for (int b = 0; b < B; ++b) sb.cov[c][b] /= sb.count[b];
    for (int b = 0; b < B; ++b) sb.igc[b] /= sb.count[b];

    SubjectTrajectory subj;
    subj.X.resize(T + 1, static_cast<int>(cov_names.size()));
    subj.A.resize(T);
    subj.Y.resize(T);
    for (int b = 0; b < B; ++b) {
      for (int c = 0; c < p_raw; ++c) subj.X(b, c) = sb.cov[c][b];
      for (std::size_t l = 0; l < cfg.lookahead.size(); ++l) {
        int src = 0;
        for (int c = 0; c < p_raw; ++c)
          if (cfg.covariates[c].column == cfg.lookahead[l].source) src = c;
        subj.X(b, p_raw + l) = (b + 1 < B) ? sb.cov[src][b + 1] : 0.0;
      }
      if (b < T) subj.A(b) = sb.dose[b];
      if (b >= 1) subj.Y(b - 1) = sb.igc[b];
    }
    subjects.push_back(std::move(subj));
  }
  return TrajectoryPanel(std::move(subjects), cov_names, /*a0_zero=*/false,
                         std::move(order));
}

}  // namespace lagdose
