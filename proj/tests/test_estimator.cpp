#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "helpers.hpp"
#include "lagdose/estimator.hpp"
#include "lagdose/simulate.hpp"
#include "lagdose/stats.hpp"

using namespace lagdose;
using lagdose::testing::make_panel;
using Catch::Approx;

namespace {

// Hand-filled conditional means, for tests that need exact or arbitrary
// centering rather than kernel output.
ConditionalMeans manual_means(int n, int T, std::vector<int> lags,
                              const std::function<double(int, int)>& b,
                              const std::function<double(int, int)>& c,
                              const std::function<double(int, int, int)>& d) {
  ConditionalMeans m;
  m.first_t = 1;
  m.horizon = T;
  m.lags = lags;
  m.B.resize(n, T);
  m.C.resize(n, T);
  for (int k : lags) m.D.emplace_back(n, T + 1 - k);
  for (int i = 0; i < n; ++i)
    for (int t = 1; t <= T; ++t) {
      m.B(i, t - 1) = b(i, t);
      m.C(i, t - 1) = c(i, t);
      for (std::size_t j = 0; j < lags.size(); ++j)
        if (t <= T + 1 - lags[j]) m.D[j](i, t - 1) = d(i, lags[j], t);
    }
  return m;
}

// Deterministic panel whose lag-1 outcome follows the quadratic effect model
// exactly: Y_{t+1} = alpha A^2 + (beta' f(S)) A + g(S), no noise.
struct ExactModel {
  double alpha = -1.3;
  Eigen::Vector2d beta{0.4, 2.1};
  TrajectoryPanel panel;
  ConditionalMeans means;
  SummarySpec spec{{SummaryTerm::current("X")}};
  FeatureMap fmap{true, {0}};

  static double g(double s) { return std::sin(s); }

  explicit ExactModel(int n, int T = 4, unsigned seed = 77)
      : panel(build(n, T, seed, alpha, beta)),
        means(manual_means(
            n, T, {1},
            [&](int i, int t) { return sq(panel.subject(i).x(t, 0)) + 1.0; },
            [&](int i, int t) { return 0.3 * panel.subject(i).x(t, 0); },
            [&](int i, int, int t) {
              const double x = panel.subject(i).x(t, 0);
              const double B = sq(x) + 1.0, C = 0.3 * x;
              return alpha * B + (beta(0) + beta(1) * x) * C + g(x);
            })) {}

  static double sq(double v) { return v * v; }

  static TrajectoryPanel build(int n, int T, unsigned seed, double alpha,
                               const Eigen::Vector2d& beta) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> normal;
    std::vector<Eigen::MatrixXd> X;
    std::vector<Eigen::VectorXd> A, Y;
    for (int i = 0; i < n; ++i) {
      Eigen::MatrixXd Xi(T + 1, 1);
      for (int t = 0; t <= T; ++t) Xi(t, 0) = normal(rng);
      Eigen::VectorXd Ai(T), Yi(T);
      for (int t = 1; t <= T; ++t) {
        const double x = Xi(t - 1, 0);
        Ai(t - 1) = normal(rng);
        Yi(t - 1) = alpha * sq(Ai(t - 1)) +
                    (beta(0) + beta(1) * x) * Ai(t - 1) + g(x);
      }
      X.push_back(Xi);
      A.push_back(Ai);
      Y.push_back(Yi);
    }
    return make_panel(X, A, Y);
  }
};

}  // namespace

TEST_CASE("normal quantile") {
  REQUIRE(normal_quantile(0.5) == Approx(0.0).margin(1e-12));
  REQUIRE(normal_quantile(0.975) == Approx(1.959963984540054).margin(1e-9));
  REQUIRE(normal_quantile(0.995) == Approx(2.5758293035489004).margin(1e-9));
  REQUIRE(normal_quantile(0.0005) == Approx(-3.2905267314918945).margin(1e-9));
  REQUIRE(normal_quantile(0.75) == Approx(0.6744897501960817).margin(1e-9));
  for (double p : {0.001, 0.12, 0.4, 0.77, 0.9999})
    REQUIRE(normal_quantile(p) == Approx(-normal_quantile(1.0 - p)).margin(1e-12));
  REQUIRE_THROWS_AS(normal_quantile(0.0), config_error);
  REQUIRE_THROWS_AS(normal_quantile(1.0), config_error);
}

TEST_CASE("design assembly") {
  const ExactModel em(8);
  const auto summaries = build_summaries(em.panel, em.spec);

  SECTION("rows follow the definition") {
    const auto design =
        assemble_design(em.panel, summaries, em.spec, em.fmap, em.means, 1);
    REQUIRE(design.dim() == 3);  // dose^2, intercept, X
    for (int i = 0; i < em.panel.n_subjects(); ++i)
      for (int t = 1; t <= 4; ++t) {
        const double a = em.panel.subject(i).a(t);
        const double x = em.panel.subject(i).x(t, 0);
        REQUIRE(design.M[i](t - 1, 0) ==
                Approx(a * a - em.means.b(i, t)).margin(1e-14));
        REQUIRE(design.M[i](t - 1, 1) ==
                Approx(a - em.means.c(i, t)).margin(1e-14));
        REQUIRE(design.M[i](t - 1, 2) ==
                Approx((a - em.means.c(i, t)) * x).margin(1e-14));
        REQUIRE(design.R[i](t - 1) ==
                Approx(em.panel.subject(i).y(t + 1) - em.means.d(i, 1, t))
                    .margin(1e-14));
      }
  }
  SECTION("intercept-only feature map gives the two-column design") {
    const auto design = assemble_design(em.panel, summaries, em.spec,
                                        FeatureMap(true, {}), em.means, 1);
    REQUIRE(design.dim() == 2);
    for (int t = 1; t <= 4; ++t) {
      const double a = em.panel.subject(0).a(t);
      REQUIRE(design.M[0](t - 1, 0) ==
              Approx(a * a - em.means.b(0, t)).margin(1e-14));
      REQUIRE(design.M[0](t - 1, 1) ==
              Approx(a - em.means.c(0, t)).margin(1e-14));
    }
  }
  SECTION("perfect dose centering zeroes every row") {
    const auto zero_means = manual_means(
        8, 4, {1},
        [&](int i, int t) {
          const double a = em.panel.subject(i).a(t);
          return a * a;
        },
        [&](int i, int t) { return em.panel.subject(i).a(t); },
        [](int, int, int) { return 0.0; });
    const auto design =
        assemble_design(em.panel, summaries, em.spec, em.fmap, zero_means, 1);
    for (const auto& M : design.M) REQUIRE(M.cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("window beyond T+1-k is rejected") {
    REQUIRE_THROWS_AS(assemble_design(em.panel, summaries, em.spec, em.fmap,
                                      em.means, 1, std::make_pair(1, 5)),
                      data_error);
  }
}

TEST_CASE("centering kills the regressor means on generated panels") {
  auto column_mean_norm = [](int n) {
    DgpConfig cfg;
    cfg.n = n;
    cfg.T = 20;
    cfg.seed = 4242;
    const auto panel = generate_panel(cfg);
    const SummarySpec spec({SummaryTerm::current("X")});
    const FeatureMap fmap(true, {0});
    const auto summaries = build_summaries(panel, spec);
    const auto means =
        estimate_conditional_means(panel, summaries, {1}, BandwidthRule{});
    const auto design = assemble_design(panel, summaries, spec, fmap, means, 1);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(design.dim());
    int rows = 0;
    for (const auto& M : design.M) {
      acc += M.colwise().sum().transpose();
      rows += static_cast<int>(M.rows());
    }
    return (acc / rows).cwiseAbs().maxCoeff();
  };
  const double at100 = column_mean_norm(100);
  const double at400 = column_mean_norm(400);
  REQUIRE(at400 < 0.02);
  REQUIRE(at400 < at100 + 0.01);
}

TEST_CASE("closed form solves the exact model to machine precision") {
  const ExactModel em(40);
  const auto summaries = build_summaries(em.panel, em.spec);
  const auto design =
      assemble_design(em.panel, summaries, em.spec, em.fmap, em.means, 1);
  const LagFit fit = fit_lag(design);
  REQUIRE(fit.params.alpha == Approx(em.alpha).margin(1e-8));
  REQUIRE(fit.params.beta(0) == Approx(em.beta(0)).margin(1e-8));
  REQUIRE(fit.params.beta(1) == Approx(em.beta(1)).margin(1e-8));

  SECTION("normal equations hold at the solution") {
    Eigen::VectorXd resid = Eigen::VectorXd::Zero(design.dim());
    for (int i = 0; i < design.n_subjects(); ++i)
      resid += design.M[i].transpose() * (design.R[i] - design.M[i] * fit.phi());
    REQUIRE(resid.cwiseAbs().maxCoeff() < 1e-9);
  }
  SECTION("zero residuals give a zero sandwich") {
    REQUIRE(fit.covariance.cwiseAbs().maxCoeff() < 1e-16);
    REQUIRE(fit.se.cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("degenerate dose variation is reported as singular") {
  // Identical doses across subjects at every t: with per-time smoothing the
  // dose conditional means are exact, so the centered design vanishes.
  const int T = 3, n = 6;
  std::mt19937 rng(5);
  std::normal_distribution<double> normal;
  std::vector<Eigen::MatrixXd> X;
  std::vector<Eigen::VectorXd> A, Y;
  Eigen::VectorXd shared(T);
  shared << 0.5, 1.5, -0.5;
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd Xi(T + 1, 1);
    for (int t = 0; t <= T; ++t) Xi(t, 0) = normal(rng);
    Eigen::VectorXd Yi(T);
    for (int t = 0; t < T; ++t) Yi(t) = normal(rng);
    X.push_back(Xi);
    A.push_back(shared);
    Y.push_back(Yi);
  }
  const auto panel = make_panel(X, A, Y);
  const SummarySpec spec({SummaryTerm::current("X")});
  const auto summaries = build_summaries(panel, spec);
  const auto means =
      estimate_conditional_means(panel, summaries, {1}, BandwidthRule{});
  const auto design =
      assemble_design(panel, summaries, spec, FeatureMap(true, {0}), means, 1);
  REQUIRE_THROWS_AS(fit_lag(design), numeric_error);
}

TEST_CASE("sandwich covariance mechanics") {
  const int n = 25;
  DgpConfig cfg;
  cfg.n = n;
  cfg.T = 12;
  cfg.seed = 31;
  const auto panel = generate_panel(cfg);
  const SummarySpec spec({SummaryTerm::current("X")});
  const FeatureMap fmap(true, {0});
  const auto summaries = build_summaries(panel, spec);
  const auto means =
      estimate_conditional_means(panel, summaries, {1}, BandwidthRule{});
  const auto design = assemble_design(panel, summaries, spec, fmap, means, 1);
  const LagFit fit = fit_lag(design);

  SECTION("duplicating every subject scales the squared SEs by (n-1)/(2n-1)") {
    CenteredDesign dup = design;
    for (int i = 0; i < n; ++i) {
      dup.M.push_back(design.M[i]);
      dup.R.push_back(design.R[i]);
    }
    const Eigen::MatrixXd cov2 = sandwich_covariance(dup, fit.phi());
    const double expected = static_cast<double>(n - 1) / (2 * n - 1);
    for (int j = 0; j < design.dim(); ++j) {
      const double se2 = fit.covariance(j, j) / n;
      const double se2_dup = cov2(j, j) / (2 * n);
      REQUIRE(se2_dup / se2 == Approx(expected).margin(1e-10));
    }
  }
  SECTION("subject order does not matter") {
    CenteredDesign shuffled = design;
    std::reverse(shuffled.M.begin(), shuffled.M.end());
    std::reverse(shuffled.R.begin(), shuffled.R.end());
    const Eigen::MatrixXd cov2 = sandwich_covariance(shuffled, fit.phi());
    REQUIRE((cov2 - fit.covariance).cwiseAbs().maxCoeff() < 1e-9);
  }
  SECTION("covariance is symmetric positive semidefinite") {
    REQUIRE((fit.covariance - fit.covariance.transpose()).cwiseAbs().maxCoeff() <
            1e-10);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fit.covariance);
    REQUIRE(es.eigenvalues().minCoeff() >
            -1e-10 * es.eigenvalues().cwiseAbs().maxCoeff());
  }
  SECTION("fewer than two subjects is an error") {
    CenteredDesign single = design;
    single.M.resize(1);
    single.R.resize(1);
    REQUIRE_THROWS_AS(sandwich_covariance(single, fit.phi()), numeric_error);
  }
}

TEST_CASE("outcome equivariance of the full pipeline") {
  DgpConfig cfg;
  cfg.n = 60;
  cfg.T = 10;
  cfg.seed = 8;
  const auto panel = generate_panel(cfg);
  const SummarySpec spec({SummaryTerm::current("X")});
  const FeatureMap fmap(true, {0});

  auto fit_for = [&](const TrajectoryPanel& p) {
    const auto summaries = build_summaries(p, spec);
    const auto means =
        estimate_conditional_means(p, summaries, {1}, BandwidthRule{});
    return fit_lag(assemble_design(p, summaries, spec, fmap, means, 1));
  };
  const LagFit base = fit_for(panel);

  SECTION("scaling Y scales estimates and SEs exactly") {
    const double c = -2.5;
    auto subjects = panel.subjects();
    for (auto& s : subjects) s.Y *= c;
    const TrajectoryPanel scaled(std::move(subjects), panel.covariate_names(),
                                 panel.a0_zero());
    const LagFit fit2 = fit_for(scaled);
    REQUIRE((fit2.phi() - c * base.phi()).cwiseAbs().maxCoeff() < 1e-10);
    REQUIRE((fit2.se - std::abs(c) * base.se).cwiseAbs().maxCoeff() < 1e-10);
  }
  SECTION("an additive summary-dependent shift washes out with n") {
    auto shift_size = [&](int n) {
      DgpConfig c2 = cfg;
      c2.n = n;
      c2.seed = 91;
      const auto p = generate_panel(c2);
      const LagFit f1 = fit_for(p);
      auto subjects = p.subjects();
      for (auto& s : subjects)
        for (int t = 1; t <= c2.T; ++t) s.Y(t - 1) += 2.0 * std::cos(s.x(t, 0));
      const TrajectoryPanel shifted(std::move(subjects), p.covariate_names(),
                                    p.a0_zero());
      const LagFit f2 = fit_for(shifted);
      return (f2.phi() - f1.phi()).cwiseAbs().maxCoeff();
    };
    const double small_n = shift_size(80);
    const double large_n = shift_size(640);
    REQUIRE(large_n < small_n);
  }
}

TEST_CASE("direct weighted fit equals the combined per-lag fits") {
  // Algebraic identity on a common window: any conditional-means values
  // produce the same Gram matrix, and the weighted target column is the
  // weighted sum of the per-lag target columns.
  const auto panel = lagdose::testing::random_panel(12, 9, 1, 55);
  const SummarySpec spec({SummaryTerm::current("X0")});
  const FeatureMap fmap(true, {0});
  const auto summaries = build_summaries(panel, spec);
  std::mt19937 rng(10);
  std::normal_distribution<double> normal;
  const auto means = manual_means(
      12, 9, {1, 2, 3}, [&](int, int) { return 1.0; },
      [&](int, int) { return 0.25; },
      [&](int i, int k, int t) { return std::sin(i + 0.3 * k + 0.7 * t); });
  Eigen::VectorXd wv(3);
  wv << 0.2, 0.3, 0.5;
  const LagWeights w(wv);

  const auto common = std::make_pair(summaries.first_t, 9 + 1 - 3);
  std::vector<LagParams> per_lag;
  for (int k = 1; k <= 3; ++k)
    per_lag.push_back(
        fit_lag(assemble_design(panel, summaries, spec, fmap, means, k, common))
            .params);
  const WeightedParams combined = combine_weighted(per_lag, w);
  const LagFit direct = fit_lag(
      assemble_weighted_design(panel, summaries, spec, fmap, means, w, common));
  REQUIRE(direct.params.alpha == Approx(combined.alpha_tilde).margin(1e-10));
  REQUIRE((direct.params.beta - combined.beta_tilde).cwiseAbs().maxCoeff() <
          1e-10);

  SECTION("K=1 with unit weight is the plain lag-1 fit") {
    const LagFit one = fit_lag(assemble_weighted_design(
        panel, summaries, spec, fmap, means, LagWeights::uniform(1)));
    const LagFit plain =
        fit_lag(assemble_design(panel, summaries, spec, fmap, means, 1));
    REQUIRE((one.phi() - plain.phi()).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("confidence intervals") {
  const ExactModel em(20);
  const auto summaries = build_summaries(em.panel, em.spec);
  LagFit fit = fit_lag(
      assemble_design(em.panel, summaries, em.spec, em.fmap, em.means, 1));

  SECTION("zero SEs collapse to the estimate") {
    const auto cis = confidence_intervals(fit, 0.95);
    for (std::size_t j = 0; j < cis.size(); ++j) {
      REQUIRE(cis[j].lo == Approx(fit.phi()(j)).margin(1e-7));
      REQUIRE(cis[j].hi == Approx(fit.phi()(j)).margin(1e-7));
    }
  }
  SECTION("tiny level collapses toward the estimate, symmetric always") {
    fit.se = Eigen::VectorXd::Constant(3, 0.5);
    const auto tight = confidence_intervals(fit, 1e-12);
    const auto wide = confidence_intervals(fit, 0.99);
    for (int j = 0; j < 3; ++j) {
      REQUIRE(tight[j].hi - tight[j].lo < 1e-10);
      REQUIRE(wide[j].hi - fit.phi()(j) ==
              Approx(fit.phi()(j) - wide[j].lo).margin(1e-12));
    }
  }
  SECTION("level outside (0,1) throws") {
    REQUIRE_THROWS_AS(confidence_intervals(fit, 0.0), config_error);
    REQUIRE_THROWS_AS(confidence_intervals(fit, 1.0), config_error);
  }
}
