#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "lagdose/errors.hpp"
#include "lagdose/panel.hpp"

namespace lagdose {

enum class TermKind {
  current_covariate,
  lagged_covariate,
  lagged_dose,
  rolling_mean_covariate,
};

// One entry of the summary vector S_t. Covariate terms reference columns
// by name and are resolved against the panel when the summaries are built.
struct SummaryTerm {
  TermKind kind;
  std::string column;
  int lag = 0;
  int from_lag = 0;
  int to_lag = 0;

  static SummaryTerm current(std::string col) {
    return {TermKind::current_covariate, std::move(col)};
  }
  static SummaryTerm lagged(std::string col, int lag) {
    return {TermKind::lagged_covariate, std::move(col), lag};
  }
  static SummaryTerm dose_lag(int lag) {
    return {TermKind::lagged_dose, {}, lag};
  }
  static SummaryTerm rolling_mean(std::string col, int from_lag, int to_lag) {
    return {TermKind::rolling_mean_covariate, std::move(col), 0, from_lag, to_lag};
  }

  std::string name() const {
    switch (kind) {
      case TermKind::current_covariate: return column;
      case TermKind::lagged_covariate:
        return column + "[t-" + std::to_string(lag) + "]";
      case TermKind::lagged_dose: return "dose[t-" + std::to_string(lag) + "]";
      case TermKind::rolling_mean_covariate:
        return "mean(" + column + "[t-" + std::to_string(from_lag) + "..t-" +
               std::to_string(to_lag) + "])";
    }
    return {};
  }
};

// Declarative construction of S_t from the history (X_1..X_t, A_1..A_{t-1}).
// No term may look ahead of time t.
class SummarySpec {
 public:
  explicit SummarySpec(std::vector<SummaryTerm> terms) : terms_(std::move(terms)) {
    if (terms_.empty()) throw config_error("summary spec needs at least one term");
    for (const auto& term : terms_) {
      switch (term.kind) {
        case TermKind::current_covariate:
          break;
        case TermKind::lagged_covariate:
          if (term.lag < 0) throw config_error("covariate lag must be >= 0");
          break;
        case TermKind::lagged_dose:
          if (term.lag < 1) throw config_error("dose lag must be >= 1");
          break;
        case TermKind::rolling_mean_covariate:
          if (term.from_lag < 0 || term.from_lag > term.to_lag)
            throw config_error("rolling mean needs 0 <= from_lag <= to_lag");
          break;
      }
    }
  }

  const std::vector<SummaryTerm>& terms() const { return terms_; }
  int dimension() const { return static_cast<int>(terms_.size()); }

  // Number of leading time points excluded because some term reaches
  // before t = 1. With the A_0 = 0 convention a dose lag may reach index 0.
  int pre_window(bool a0_zero) const {
    int w = 0;
    for (const auto& term : terms_) {
      switch (term.kind) {
        case TermKind::current_covariate: break;
        case TermKind::lagged_covariate: w = std::max(w, term.lag); break;
        case TermKind::lagged_dose:
          w = std::max(w, a0_zero ? term.lag - 1 : term.lag);
          break;
        case TermKind::rolling_mean_covariate:
          w = std::max(w, term.to_lag);
          break;
      }
    }
    return w;
  }

 private:
  std::vector<SummaryTerm> terms_;
};

// Per-subject summary vectors on the shared valid range t = first_t..last_t.
struct SummarySeries {
  int first_t = 1;
  int last_t = 0;
  int dimension = 0;
  std::vector<Eigen::MatrixXd> values;  // values[i].row(t - first_t) = S_t

  Eigen::RowVectorXd s(int i, int t) const { return values[i].row(t - first_t); }
  int n_times() const { return last_t - first_t + 1; }
};

inline SummarySeries build_summaries(const TrajectoryPanel& panel,
                                     const SummarySpec& spec) {
  const int T = panel.time_horizon();
  const int d = spec.dimension();
  const int first_t = spec.pre_window(panel.a0_zero()) + 1;
  if (first_t > T)
    throw data_error("summary spec leaves no valid time points (pre-window " +
                     std::to_string(first_t - 1) + " >= T=" + std::to_string(T) + ")");

  std::vector<int> columns(d, -1);
  for (int j = 0; j < d; ++j)
    if (spec.terms()[j].kind != TermKind::lagged_dose)
      columns[j] = panel.covariate_index(spec.terms()[j].column);

  SummarySeries out;
  out.first_t = first_t;
  out.last_t = T;
  out.dimension = d;
  out.values.reserve(panel.n_subjects());
  for (int i = 0; i < panel.n_subjects(); ++i) {
    const auto& subj = panel.subject(i);
    Eigen::MatrixXd S(T - first_t + 1, d);
    for (int t = first_t; t <= T; ++t) {
      for (int j = 0; j < d; ++j) {
        const auto& term = spec.terms()[j];
        double v = 0.0;
        switch (term.kind) {
          case TermKind::current_covariate:
            v = subj.x(t, columns[j]);
            break;
          case TermKind::lagged_covariate:
            v = subj.x(t - term.lag, columns[j]);
            break;
          case TermKind::lagged_dose: {
            const int s = t - term.lag;
            v = (s == 0) ? 0.0 : subj.a(s);
            break;
          }
          case TermKind::rolling_mean_covariate: {
            double acc = 0.0;
            for (int l = term.from_lag; l <= term.to_lag; ++l)
              acc += subj.x(t - l, columns[j]);
            v = acc / (term.to_lag - term.from_lag + 1);
            break;
          }
        }
        S(t - first_t, j) = v;
      }
    }
    out.values.push_back(std::move(S));
  }
  return out;
}

// Feature vector f(S_t) entering the quadratic effect model: an optional
// intercept followed by selected summary entries.
class FeatureMap {
 public:
  FeatureMap(bool intercept, std::vector<int> entries)
      : intercept_(intercept), entries_(std::move(entries)) {
    if (!intercept_ && entries_.empty())
      throw config_error("feature map must select at least one term");
    for (int e : entries_)
      if (e < 0) throw config_error("feature map entry index must be >= 0");
  }

  static FeatureMap intercept_plus_all(int summary_dim) {
    std::vector<int> e(summary_dim);
    for (int j = 0; j < summary_dim; ++j) e[j] = j;
    return FeatureMap(true, std::move(e));
  }

  bool intercept() const { return intercept_; }
  const std::vector<int>& entries() const { return entries_; }
  int dimension() const {
    return static_cast<int>(entries_.size()) + (intercept_ ? 1 : 0);
  }

  std::string name(int j, const SummarySpec& spec) const {
    if (intercept_) {
      if (j == 0) return "intercept";
      --j;
    }
    return spec.terms()[entries_[j]].name();
  }

  Eigen::VectorXd operator()(const Eigen::Ref<const Eigen::RowVectorXd>& s) const {
    Eigen::VectorXd f(dimension());
    int j = 0;
    if (intercept_) f(j++) = 1.0;
    for (int e : entries_) {
      if (e >= s.size())
        throw data_error("feature map entry " + std::to_string(e) +
                         " is outside the summary vector");
      f(j++) = s(e);
    }
    return f;
  }

 private:
  bool intercept_;
  std::vector<int> entries_;
};

inline Eigen::VectorXd apply_features(const Eigen::Ref<const Eigen::RowVectorXd>& s,
                                      const FeatureMap& fmap) {
  return fmap(s);
}

}  // namespace lagdose
