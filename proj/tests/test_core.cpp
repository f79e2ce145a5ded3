#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "helpers.hpp"
#include "lagdose/effect_model.hpp"
#include "lagdose/glycemic.hpp"
#include "lagdose/summary.hpp"

using namespace lagdose;
using lagdose::testing::make_panel;
using lagdose::testing::random_panel;
using Catch::Approx;

TEST_CASE("panel validation") {
  Eigen::MatrixXd X(3, 1);
  X << 1.0, 2.0, 3.0;
  Eigen::VectorXd A(2), Y(2);
  A << 0.5, 0.7;
  Y << 1.0, -1.0;
  REQUIRE_NOTHROW(make_panel({X}, {A}, {Y}));

  SECTION("non-finite entries rejected") {
    Eigen::VectorXd bad = Y;
    bad(0) = std::nan("");
    REQUIRE_THROWS_AS(make_panel({X}, {A}, {bad}), data_error);
  }
  SECTION("mismatched horizons rejected") {
    Eigen::MatrixXd X2(4, 1);
    X2 << 1, 2, 3, 4;
    Eigen::VectorXd A2(3), Y2(3);
    A2 << 1, 2, 3;
    Y2 << 1, 2, 3;
    REQUIRE_THROWS_AS(make_panel({X, X2}, {A, A2}, {Y, Y2}), data_error);
  }
}

TEST_CASE("summaries: identity selection emits X_t for t=1..T") {
  const auto panel = random_panel(3, 5, 1, 11);
  const SummarySpec spec({SummaryTerm::current("X0")});
  const auto s = build_summaries(panel, spec);
  REQUIRE(s.first_t == 1);
  REQUIRE(s.last_t == 5);
  for (int i = 0; i < 3; ++i)
    for (int t = 1; t <= 5; ++t)
      REQUIRE(s.s(i, t)(0) == panel.subject(i).x(t, 0));
}

TEST_CASE("summaries: lagged dose and the A_0 convention") {
  const SummarySpec spec({SummaryTerm::current("X0"), SummaryTerm::dose_lag(1)});

  SECTION("without the convention the window starts at t=2") {
    const auto panel = random_panel(2, 4, 1, 12, /*a0_zero=*/false);
    const auto s = build_summaries(panel, spec);
    REQUIRE(s.first_t == 2);
    for (int t = 2; t <= 4; ++t) {
      REQUIRE(s.s(0, t)(0) == panel.subject(0).x(t, 0));
      REQUIRE(s.s(0, t)(1) == panel.subject(0).a(t - 1));
    }
  }
  SECTION("with the convention t=1 is valid and reads A_0 = 0") {
    const auto panel = random_panel(2, 4, 1, 12, /*a0_zero=*/true);
    const auto s = build_summaries(panel, spec);
    REQUIRE(s.first_t == 1);
    REQUIRE(s.s(1, 1)(1) == 0.0);
  }
}

TEST_CASE("summaries: lagged covariates read the earlier row") {
  const auto panel = random_panel(2, 6, 2, 15);
  const SummarySpec spec(
      {SummaryTerm::lagged("X1", 2), SummaryTerm::lagged("X0", 0)});
  const auto s = build_summaries(panel, spec);
  REQUIRE(s.first_t == 3);
  for (int i = 0; i < 2; ++i)
    for (int t = 3; t <= 6; ++t) {
      REQUIRE(s.s(i, t)(0) == panel.subject(i).x(t - 2, 1));
      REQUIRE(s.s(i, t)(1) == panel.subject(i).x(t, 0));
    }
}

TEST_CASE("summaries: rolling mean of a constant column is that constant") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Constant(21, 1, 1.25);
  Eigen::VectorXd A = Eigen::VectorXd::Zero(20);
  Eigen::VectorXd Y = Eigen::VectorXd::Zero(20);
  const auto panel = make_panel({X}, {A}, {Y}, {"Basal"});
  const SummarySpec spec({SummaryTerm::rolling_mean("Basal", 8, 15)});
  const auto s = build_summaries(panel, spec);
  REQUIRE(s.first_t == 16);
  for (int t = s.first_t; t <= s.last_t; ++t)
    REQUIRE(s.s(0, t)(0) == Approx(1.25).margin(1e-15));
}

TEST_CASE("summaries: unknown column and empty window raise data errors") {
  const auto panel = random_panel(2, 3, 1, 13);
  REQUIRE_THROWS_AS(
      build_summaries(panel, SummarySpec({SummaryTerm::current("nope")})),
      data_error);
  REQUIRE_THROWS_AS(
      build_summaries(panel, SummarySpec({SummaryTerm::lagged("X0", 3)})),
      data_error);
}

TEST_CASE("summaries: no cross-subject leakage, no lookahead") {
  const auto panel = random_panel(4, 6, 2, 14);
  const SummarySpec spec({SummaryTerm::current("X1"), SummaryTerm::dose_lag(1),
                          SummaryTerm::rolling_mean("X0", 0, 2)});
  const auto base = build_summaries(panel, spec);

  SECTION("reordering subjects leaves each subject's summaries unchanged") {
    std::vector<SubjectTrajectory> reordered;
    for (int i = 3; i >= 0; --i) reordered.push_back(panel.subject(i));
    const TrajectoryPanel shuffled(std::move(reordered),
                                   panel.covariate_names(), false);
    const auto s2 = build_summaries(shuffled, spec);
    for (int i = 0; i < 4; ++i)
      for (int t = base.first_t; t <= base.last_t; ++t)
        REQUIRE((s2.s(3 - i, t) - base.s(i, t)).cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("mutating strictly future values cannot change S_t") {
    const int t_probe = 4;
    auto subjects = panel.subjects();
    for (auto& subj : subjects) {
      for (int t = t_probe + 1; t <= 7; ++t) subj.X.row(t - 1).setConstant(99.0);
      for (int t = t_probe; t <= 6; ++t) subj.A(t - 1) = -99.0;  // A_t and later
      subj.Y.setConstant(99.0);
    }
    const TrajectoryPanel mutated(std::move(subjects), panel.covariate_names(),
                                  false);
    const auto s2 = build_summaries(mutated, spec);
    for (int i = 0; i < 4; ++i)
      REQUIRE((s2.s(i, t_probe) - base.s(i, t_probe)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("feature map") {
  Eigen::RowVectorXd s(1);
  s << 0.5;
  REQUIRE(apply_features(s, FeatureMap(false, {0}))(0) == 0.5);
  const Eigen::VectorXd with_intercept = apply_features(s, FeatureMap(true, {0}));
  REQUIRE(with_intercept(0) == 1.0);
  REQUIRE(with_intercept(1) == 0.5);

  SECTION("selection with intercept over a wider summary") {
    Eigen::RowVectorXd s5(4);
    s5 << 30.0, 0.0, 1.1, 0.0;  // carb, planned carb, basal mean, lagged dose
    const Eigen::VectorXd f = apply_features(s5, FeatureMap(true, {0, 1, 2, 3}));
    REQUIRE(f.size() == 5);
    REQUIRE(f(0) == 1.0);
    REQUIRE(f(1) == 30.0);
    REQUIRE(f(2) == 0.0);
    REQUIRE(f(3) == 1.1);
    REQUIRE(f(4) == 0.0);
  }
  SECTION("entry beyond the summary dimension throws") {
    REQUIRE_THROWS_AS(apply_features(s, FeatureMap(true, {1})), data_error);
  }
}

TEST_CASE("glycemic index") {
  const std::vector<double> inside{100.0};
  REQUIRE(compute_igc(inside) == 0.0);
  const std::vector<double> low{50.0};
  REQUIRE(compute_igc(low) == Approx(-30.0).margin(1e-12));
  const std::vector<double> high{170.0};
  REQUIRE(compute_igc(high) == Approx(-std::pow(30.0, 1.35) / 30.0).margin(1e-12));
  REQUIRE_THROWS_AS(compute_igc(std::vector<double>{}), data_error);
  REQUIRE_THROWS_AS(compute_igc(std::vector<double>{-5.0}), data_error);

  SECTION("penalty is nonincreasing as readings move away from the band") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(0.0, 200.0);
    for (int rep = 0; rep < 200; ++rep) {
      const double step = u(rng);
      REQUIRE(igc_penalty(80.0 - step / 2) >= igc_penalty(80.0 - step));
      REQUIRE(igc_penalty(140.0 + step / 2) >= igc_penalty(140.0 + step));
    }
    REQUIRE(igc_penalty(100.0) == 0.0);
  }
}

TEST_CASE("weight combination") {
  const LagWeights w = LagWeights::uniform(3);
  std::vector<LagParams> per_lag{
      {1, -1.0, Eigen::Vector2d(0.0, 2.0)},
      {2, -0.21, Eigen::Vector2d(0.16, -0.08)},
      {3, -0.0125, Eigen::Vector2d(-0.08, -0.03)},
  };
  const WeightedParams combined = combine_weighted(per_lag, w);
  REQUIRE(combined.alpha_tilde == Approx(-0.4075).margin(1e-12));
  REQUIRE(combined.beta_tilde(0) == Approx(0.08 / 3.0).margin(1e-12));
  REQUIRE(combined.beta_tilde(1) == Approx(0.63).margin(1e-12));

  SECTION("single lag with unit weight is the identity") {
    std::vector<LagParams> one{{1, -2.5, Eigen::Vector2d(1.0, -0.5)}};
    const auto c = combine_weighted(one, LagWeights::uniform(1));
    REQUIRE(c.alpha_tilde == -2.5);
    REQUIRE(c.beta_tilde(0) == 1.0);
  }
  SECTION("all-zero parameters combine to zero") {
    std::vector<LagParams> zeros{{1, 0.0, Eigen::Vector2d::Zero()},
                                 {2, 0.0, Eigen::Vector2d::Zero()},
                                 {3, 0.0, Eigen::Vector2d::Zero()}};
    const auto c = combine_weighted(zeros, w);
    REQUIRE(c.alpha_tilde == 0.0);
    REQUIRE(c.beta_tilde.cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("linearity in the parameters") {
    std::mt19937 rng(21);
    std::normal_distribution<double> normal;
    for (int rep = 0; rep < 50; ++rep) {
      const double c = normal(rng);
      std::vector<LagParams> scaled = per_lag;
      for (auto& p : scaled) {
        p.alpha *= c;
        p.beta *= c;
      }
      const auto lhs = combine_weighted(scaled, w);
      REQUIRE(lhs.alpha_tilde == Approx(c * combined.alpha_tilde).margin(1e-12));
      REQUIRE((lhs.beta_tilde - c * combined.beta_tilde).cwiseAbs().maxCoeff() <
              1e-12);
    }
  }
  SECTION("dimension and count mismatches throw") {
    std::vector<LagParams> short_list{per_lag[0], per_lag[1]};
    REQUIRE_THROWS_AS(combine_weighted(short_list, w), config_error);
    auto bad = per_lag;
    bad[1].beta = Eigen::Vector3d::Zero();
    REQUIRE_THROWS_AS(combine_weighted(bad, w), config_error);
  }
}

TEST_CASE("advantage evaluation") {
  const Eigen::VectorXd f1 = Eigen::VectorXd::Constant(1, 1.0);
  REQUIRE(advantage(-3.0, Eigen::VectorXd::Constant(1, 2.0), 0.0, f1) == 0.0);
  REQUIRE(advantage(-1.0, Eigen::VectorXd::Constant(1, 2.0), 1.0, f1) == 1.0);

  SECTION("weighted parameters spot value") {
    Eigen::VectorXd beta(2);
    beta << 0.0267, 0.63;
    Eigen::VectorXd f(2);
    f << 1.0, 1.0;
    REQUIRE(advantage(-0.4075, beta, 0.8, f) == Approx(0.26456).margin(1e-10));
  }
  SECTION("zero reference dose is built in") {
    std::mt19937 rng(3);
    std::normal_distribution<double> normal;
    for (int rep = 0; rep < 100; ++rep) {
      Eigen::VectorXd beta(2), f(2);
      beta << normal(rng), normal(rng);
      f << normal(rng), normal(rng);
      const double alpha = normal(rng), a = normal(rng);
      REQUIRE(advantage(alpha, beta, a, f) - advantage(alpha, beta, 0.0, f) ==
              advantage(alpha, beta, a, f));
    }
  }
  SECTION("dimension mismatch throws") {
    REQUIRE_THROWS_AS(
        advantage(-1.0, Eigen::VectorXd::Zero(2), 1.0, Eigen::VectorXd::Zero(3)),
        data_error);
  }
}

TEST_CASE("lag weights validation") {
  REQUIRE_THROWS_AS(LagWeights(Eigen::VectorXd::Zero(0)), config_error);
  Eigen::VectorXd negative(2);
  negative << 1.5, -0.5;
  REQUIRE_THROWS_AS(LagWeights(negative), config_error);
  Eigen::VectorXd off(2);
  off << 0.5, 0.6;
  REQUIRE_THROWS_AS(LagWeights(off), config_error);
  REQUIRE(LagWeights::uniform(3).vector().sum() == Approx(1.0).margin(1e-15));
}
