#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include "lagdose/errors.hpp"
#include "lagdose/estimator.hpp"
#include "lagdose/monte_carlo.hpp"
#include "lagdose/panel.hpp"

namespace lagdose {

// Shortest decimal representation that round-trips the double exactly.
inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_number(const std::string& cell, const std::string& where) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last)
    throw data_error("non-numeric cell '" + cell + "' " + where);
  return v;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  return cells;
}

inline std::vector<std::vector<std::string>> read_csv(const std::string& path,
                                                      std::vector<std::string>& header) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw data_error("'" + path + "' is empty");
  header = split_csv_line(line);
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    rows.push_back(split_csv_line(line));
    if (rows.back().size() != header.size())
      throw data_error("row " + std::to_string(rows.size() + 1) + " of '" + path +
                       "' has " + std::to_string(rows.back().size()) +
                       " cells, header has " + std::to_string(header.size()));
  }
  return rows;
}

inline int find_column(const std::vector<std::string>& header,
                       const std::string& name, const std::string& path) {
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == name) return static_cast<int>(j);
  throw data_error("missing column '" + name + "' in '" + path + "'");
}

}  // namespace detail

// Long-format panel file: one row per (subject, t), t contiguous 1..T+1,
// dose present for t <= T, outcome present for t >= 2.
struct PanelCsvSchema {
  std::vector<std::string> covariates;
  std::string subject_column = "subject_id";
  std::string time_column = "t";
  std::string dose_column = "dose";
  std::string outcome_column = "outcome";
  bool a0_zero = false;
};

inline TrajectoryPanel load_panel(const std::string& path,
                                  const PanelCsvSchema& schema) {
  std::vector<std::string> header;
  const auto rows = detail::read_csv(path, header);
  const int subj_col = detail::find_column(header, schema.subject_column, path);
  const int t_col = detail::find_column(header, schema.time_column, path);
  const int dose_col = detail::find_column(header, schema.dose_column, path);
  const int out_col = detail::find_column(header, schema.outcome_column, path);
  std::vector<int> cov_cols;
  for (const auto& c : schema.covariates)
    cov_cols.push_back(detail::find_column(header, c, path));

  struct Row {
    int t;
    std::vector<double> x;
    std::optional<double> dose, outcome;
  };
  std::vector<std::string> order;
  std::map<std::string, std::vector<Row>> by_subject;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    const std::string where = "at data row " + std::to_string(r + 1);
    Row row;
    row.t = static_cast<int>(parse_number(cells[t_col], where));
    if (row.t < 1) throw data_error("time index must be >= 1 " + where);
    for (int c : cov_cols) row.x.push_back(parse_number(cells[c], where));
    if (!cells[dose_col].empty()) row.dose = parse_number(cells[dose_col], where);
    if (!cells[out_col].empty()) row.outcome = parse_number(cells[out_col], where);
    const std::string& id = cells[subj_col];
    if (by_subject.find(id) == by_subject.end()) order.push_back(id);
    by_subject[id].push_back(std::move(row));
  }
  if (order.empty()) throw data_error("'" + path + "' contains no data rows");

  std::vector<SubjectTrajectory> subjects;
  int horizon = -1;
  for (const auto& id : order) {
    auto& rs = by_subject[id];
    std::sort(rs.begin(), rs.end(), [](const Row& a, const Row& b) { return a.t < b.t; });
    for (std::size_t j = 0; j < rs.size(); ++j) {
      const int expected = static_cast<int>(j) + 1;
      if (rs[j].t != expected)
        throw data_error("subject '" + id + "': expected t=" +
                         std::to_string(expected) + " but found t=" +
                         std::to_string(rs[j].t) +
                         (j > 0 && rs[j].t == rs[j - 1].t ? " (duplicate)" : " (gap)"));
    }
    const int T = static_cast<int>(rs.size()) - 1;
    if (T < 1)
      throw data_error("subject '" + id + "' needs at least two time points");
    if (horizon < 0) horizon = T;
    if (T != horizon)
      throw data_error("subject '" + id + "' has T=" + std::to_string(T) +
                       ", others have T=" + std::to_string(horizon));
    SubjectTrajectory subj;
    subj.X.resize(T + 1, static_cast<int>(cov_cols.size()));
    subj.A.resize(T);
    subj.Y.resize(T);
    for (int t = 1; t <= T + 1; ++t) {
      const Row& row = rs[t - 1];
      for (std::size_t c = 0; c < row.x.size(); ++c) subj.X(t - 1, c) = row.x[c];
      if (t <= T) {
        if (!row.dose)
          throw data_error("subject '" + id + "': dose missing at t=" +
                           std::to_string(t));
        subj.A(t - 1) = *row.dose;
      }
      if (t >= 2) {
        if (!row.outcome)
          throw data_error("subject '" + id + "': outcome missing at t=" +
                           std::to_string(t));
        subj.Y(t - 2) = *row.outcome;
      }
    }
    subjects.push_back(std::move(subj));
  }
  return TrajectoryPanel(std::move(subjects), schema.covariates, schema.a0_zero,
                         std::move(order));
}

inline void save_panel(const TrajectoryPanel& panel, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write '" + path + "'");
  out << "subject_id,t";
  for (const auto& c : panel.covariate_names()) out << ',' << c;
  out << ",dose,outcome\n";
  const int T = panel.time_horizon();
  for (int i = 0; i < panel.n_subjects(); ++i) {
    const auto& subj = panel.subject(i);
    for (int t = 1; t <= T + 1; ++t) {
      out << panel.subject_id(i) << ',' << t;
      for (int c = 0; c < panel.n_covariates(); ++c)
        out << ',' << format_number(subj.x(t, c));
      out << ',';
      if (t <= T) out << format_number(subj.a(t));
      out << ',';
      if (t >= 2) out << format_number(subj.y(t));
      out << '\n';
    }
  }
}

// ---- fit reports ----------------------------------------------------------

struct FitTable {
  std::vector<std::string> scopes;       // "k=1", .., "weighted"
  std::vector<std::string> params;       // row labels, shared across scopes
  std::vector<Eigen::VectorXd> estimates;
  std::vector<Eigen::VectorXd> ses;
  std::vector<std::vector<ConfidenceInterval>> cis;
  double level = 0.95;
};

inline void write_fit_csv(const FitTable& table, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write '" + path + "'");
  out << "scope,param,estimate,se,ci_lo,ci_hi\n";
  for (const auto& p : table.params)
    if (p.find(',') != std::string::npos)
      throw data_error("parameter name '" + p + "' would corrupt the csv");
  for (std::size_t s = 0; s < table.scopes.size(); ++s)
    for (std::size_t j = 0; j < table.params.size(); ++j)
      out << table.scopes[s] << ',' << table.params[j] << ','
          << format_number(table.estimates[s](j)) << ','
          << format_number(table.ses[s](j)) << ','
          << format_number(table.cis[s][j].lo) << ','
          << format_number(table.cis[s][j].hi) << '\n';
}

inline FitTable read_fit_csv(const std::string& path) {
  std::vector<std::string> header;
  const auto rows = detail::read_csv(path, header);
  const int s_col = detail::find_column(header, "scope", path);
  const int p_col = detail::find_column(header, "param", path);
  const int e_col = detail::find_column(header, "estimate", path);
  const int se_col = detail::find_column(header, "se", path);
  const int lo_col = detail::find_column(header, "ci_lo", path);
  const int hi_col = detail::find_column(header, "ci_hi", path);
  FitTable table;
  std::vector<std::string> scope_of_row;
  std::vector<double> est, se, lo, hi;
  std::vector<std::string> param_of_row;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::string where = "at data row " + std::to_string(r + 1);
    scope_of_row.push_back(rows[r][s_col]);
    param_of_row.push_back(rows[r][p_col]);
    est.push_back(parse_number(rows[r][e_col], where));
    se.push_back(parse_number(rows[r][se_col], where));
    lo.push_back(parse_number(rows[r][lo_col], where));
    hi.push_back(parse_number(rows[r][hi_col], where));
  }
  for (std::size_t r = 0; r < scope_of_row.size(); ++r) {
    if (table.scopes.empty() || table.scopes.back() != scope_of_row[r]) {
      table.scopes.push_back(scope_of_row[r]);
      table.estimates.emplace_back(0);
      table.ses.emplace_back(0);
      table.cis.emplace_back();
    }
    const std::size_t s = table.scopes.size() - 1;
    if (s == 0) table.params.push_back(param_of_row[r]);
    auto& ev = table.estimates[s];
    ev.conservativeResize(ev.size() + 1);
    ev(ev.size() - 1) = est[r];
    auto& sv = table.ses[s];
    sv.conservativeResize(sv.size() + 1);
    sv(sv.size() - 1) = se[r];
    table.cis[s].push_back({lo[r], hi[r]});
  }
  return table;
}

inline std::optional<Eigen::VectorXd> fit_table_scope(const FitTable& table,
                                                      const std::string& scope) {
  for (std::size_t s = 0; s < table.scopes.size(); ++s)
    if (table.scopes[s] == scope) return table.estimates[s];
  return std::nullopt;
}

// ---- Monte Carlo reports ---------------------------------------------------

inline void write_mc_csv(const McReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write '" + path + "'");
  out << "section,scope,param,truth,mean,bias,sd,mean_se,coverage\n";
  out << "meta,,replicates," << report.replicates << ",,,,,\n";
  out << "meta,,failed_replicates," << report.failed_replicates << ",,,,,\n";
  out << "meta,,ci_level," << format_number(report.ci_level) << ",,,,,\n";
  for (const auto& p : report.params)
    out << "param," << p.scope << ',' << p.param << ',' << format_number(p.truth)
        << ',' << format_number(p.mean) << ',' << format_number(p.bias) << ','
        << format_number(p.sd) << ',' << format_number(p.mean_se) << ','
        << format_number(p.coverage) << '\n';
  if (report.policy.enabled) {
    out << "policy,,test_subjects," << report.policy.test_subjects << ",,,,,\n";
    out << "policy,,value," << format_number(report.policy.truth_optimal_value)
        << ',' << format_number(report.policy.mean) << ",,"
        << format_number(report.policy.sd) << ",,\n";
  }
}

inline McReport read_mc_csv(const std::string& path) {
  std::vector<std::string> header;
  const auto rows = detail::read_csv(path, header);
  McReport report;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::string where = "at data row " + std::to_string(r + 1);
    const std::string& section = rows[r][0];
    if (section == "meta") {
      const double v = parse_number(rows[r][3], where);
      if (rows[r][2] == "replicates") report.replicates = static_cast<int>(v);
      if (rows[r][2] == "failed_replicates")
        report.failed_replicates = static_cast<int>(v);
      if (rows[r][2] == "ci_level") report.ci_level = v;
    } else if (section == "param") {
      ParamSummary p;
      p.scope = rows[r][1];
      p.param = rows[r][2];
      p.truth = parse_number(rows[r][3], where);
      p.mean = parse_number(rows[r][4], where);
      p.bias = parse_number(rows[r][5], where);
      p.sd = parse_number(rows[r][6], where);
      p.mean_se = parse_number(rows[r][7], where);
      p.coverage = parse_number(rows[r][8], where);
      report.params.push_back(std::move(p));
    } else if (section == "policy") {
      report.policy.enabled = true;
      if (rows[r][2] == "test_subjects")
        report.policy.test_subjects =
            static_cast<int>(parse_number(rows[r][3], where));
      if (rows[r][2] == "value") {
        report.policy.truth_optimal_value = parse_number(rows[r][3], where);
        report.policy.mean = parse_number(rows[r][4], where);
        report.policy.sd = parse_number(rows[r][6], where);
      }
    } else {
      throw data_error("unknown section '" + section + "' " + where);
    }
  }
  return report;
}

}  // namespace lagdose
