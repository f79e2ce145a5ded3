#pragma once

#include <random>
#include <vector>

#include "lagdose/panel.hpp"

namespace lagdose::testing {

// Small hand-built panel: one covariate column "X" unless names are given.
inline TrajectoryPanel make_panel(const std::vector<Eigen::MatrixXd>& X,
                                  const std::vector<Eigen::VectorXd>& A,
                                  const std::vector<Eigen::VectorXd>& Y,
                                  std::vector<std::string> names = {"X"},
                                  bool a0_zero = false) {
  std::vector<SubjectTrajectory> subjects;
  for (std::size_t i = 0; i < X.size(); ++i)
    subjects.push_back({X[i], A[i], Y[i]});
  return TrajectoryPanel(std::move(subjects), std::move(names), a0_zero);
}

inline TrajectoryPanel random_panel(int n, int T, int p, unsigned seed,
                                    bool a0_zero = false) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<SubjectTrajectory> subjects;
  for (int i = 0; i < n; ++i) {
    SubjectTrajectory s;
    s.X.resize(T + 1, p);
    s.A.resize(T);
    s.Y.resize(T);
    for (int r = 0; r < T + 1; ++r)
      for (int c = 0; c < p; ++c) s.X(r, c) = normal(rng);
    for (int r = 0; r < T; ++r) s.A(r) = normal(rng);
    for (int r = 0; r < T; ++r) s.Y(r) = normal(rng);
    subjects.push_back(std::move(s));
  }
  std::vector<std::string> names;
  for (int c = 0; c < p; ++c) names.push_back("X" + std::to_string(c));
  return TrajectoryPanel(std::move(subjects), std::move(names), a0_zero);
}

}  // namespace lagdose::testing
