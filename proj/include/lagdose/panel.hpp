#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "lagdose/errors.hpp"

namespace lagdose {

// One subject's aligned record on a fixed time grid. Times are 1-based:
// covariates x(t) for t = 1..T+1, doses a(t) for t = 1..T, and outcomes
// y(t) for t = 2..T+1, where y(t) follows the decision a(t-1).
struct SubjectTrajectory {
  Eigen::MatrixXd X;  // (T+1) x p
  Eigen::VectorXd A;  // length T
  Eigen::VectorXd Y;  // length T; slot r holds the outcome at time r+2

  int horizon() const { return static_cast<int>(A.size()); }

  Eigen::RowVectorXd x(int t) const { return X.row(t - 1); }
  double x(int t, int col) const { return X(t - 1, col); }
  double a(int t) const { return A(t - 1); }
  double y(int t) const { return Y(t - 2); }
};

// Immutable panel of subject trajectories sharing one horizon T and one
// covariate layout. `a0_zero` opts into the convention that the dose
// history extends to A_0 = 0, which makes lag-1 dose summaries valid at
// t = 1.
class TrajectoryPanel {
 public:
  TrajectoryPanel(std::vector<SubjectTrajectory> subjects,
                  std::vector<std::string> covariate_names,
                  bool a0_zero = false,
                  std::vector<std::string> subject_ids = {})
      : subjects_(std::move(subjects)),
        covariate_names_(std::move(covariate_names)),
        subject_ids_(std::move(subject_ids)),
        a0_zero_(a0_zero) {
    validate();
  }

  int n_subjects() const { return static_cast<int>(subjects_.size()); }
  int time_horizon() const { return subjects_.front().horizon(); }
  int n_covariates() const { return static_cast<int>(covariate_names_.size()); }
  bool a0_zero() const { return a0_zero_; }

  const SubjectTrajectory& subject(int i) const { return subjects_[i]; }
  const std::vector<SubjectTrajectory>& subjects() const { return subjects_; }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }
  const std::string& subject_id(int i) const { return subject_ids_[i]; }

  int covariate_index(const std::string& name) const {
    for (int j = 0; j < n_covariates(); ++j)
      if (covariate_names_[j] == name) return j;
    throw data_error("unknown covariate column '" + name + "'");
  }

  double max_observed_dose() const {
    double m = subjects_.front().A.maxCoeff();
    for (const auto& s : subjects_) m = std::max(m, s.A.maxCoeff());
    return m;
  }

 private:
  void validate() {
    if (subjects_.empty()) throw data_error("panel has no subjects");
    const int T = subjects_.front().horizon();
    const int p = n_covariates();
    if (T < 1) throw data_error("time horizon must be at least 1");
    for (std::size_t i = 0; i < subjects_.size(); ++i) {
      const auto& s = subjects_[i];
      if (s.horizon() != T)
        throw data_error("subject " + std::to_string(i + 1) +
                         " has a different time horizon");
      if (s.X.rows() != T + 1 || s.X.cols() != p)
        throw data_error("subject " + std::to_string(i + 1) +
                         " covariate matrix must be (T+1) x p");
      if (s.Y.size() != T)
        throw data_error("subject " + std::to_string(i + 1) +
                         " must have outcomes for t = 2..T+1");
      if (!s.X.allFinite() || !s.A.allFinite() || !s.Y.allFinite())
        throw data_error("subject " + std::to_string(i + 1) +
                         " contains non-finite entries");
    }
    if (subject_ids_.empty()) {
      subject_ids_.reserve(subjects_.size());
      for (std::size_t i = 0; i < subjects_.size(); ++i)
        subject_ids_.push_back("s" + std::to_string(i + 1));
    } else if (subject_ids_.size() != subjects_.size()) {
      throw data_error("subject id list does not match subject count");
    }
  }

  std::vector<SubjectTrajectory> subjects_;
  std::vector<std::string> covariate_names_;
  std::vector<std::string> subject_ids_;
  bool a0_zero_;
};

}  // namespace lagdose
