#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "panelmmle/estimators.hpp"
#include "panelmmle/likelihood.hpp"
#include "panelmmle/monte_carlo.hpp"
#include "panelmmle/penalty.hpp"
#include "panelmmle/rng.hpp"
#include "panelmmle/roots.hpp"
#include "panelmmle/stats_util.hpp"

using namespace panelmmle;

namespace {

PanelDataset random_panel(int n, int t, int k, std::uint64_t seed,
                          double rho = 0.5, double beta = 0.3) {
  Rng rng(seed, 0);
  Eigen::VectorXd y0(n);
  Eigen::MatrixXd y(n, t);
  std::vector<Eigen::MatrixXd> x;
  if (k > 0) x.assign(n, Eigen::MatrixXd(t, k));
  for (int i = 0; i < n; ++i) {
    y0(i) = rng.normal();
    double prev = y0(i);
    for (int s = 0; s < t; ++s) {
      double cov_term = 0.0;
      if (k > 0) {
        for (int j = 0; j < k; ++j) {
          x[i](s, j) = rng.normal();
          cov_term += beta * x[i](s, j);
        }
      }
      prev = rho * prev + cov_term + rng.normal();
      y(i, s) = prev;
    }
  }
  return PanelDataset::create(y0, y, x);
}

ThetaCommon random_theta(int k, Rng& rng) {
  ThetaCommon theta;
  theta.r = 1.6 * rng.uniform() - 0.6;
  theta.s2 = 0.5 + rng.uniform();
  theta.b = Eigen::VectorXd(k);
  for (int j = 0; j < k; ++j) theta.b(j) = rng.normal() * 0.5;
  return theta;
}

}  // namespace

TEST_CASE("score matches the numerical gradient of the modified likelihood") {
  Rng rng(100, 0);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const PanelDataset panel = random_panel(25, 4, 2, seed);
    const WithinMoments m = WithinMoments::compute(panel);
    const ThetaCommon theta = random_theta(2, rng);
    const Eigen::VectorXd psi = score_vector(m, theta);
    const Eigen::VectorXd v = theta.to_vector();
    for (int j = 0; j < v.size(); ++j) {
      const double h = 1e-6 * (1.0 + std::abs(v(j)));
      Eigen::VectorXd vp = v, vm = v;
      vp(j) += h;
      vm(j) -= h;
      const double fd = (modified_loglik(m, ThetaCommon::from_vector(vp)) -
                         modified_loglik(m, ThetaCommon::from_vector(vm))) /
                        (2.0 * h);
      CHECK(psi(j) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("plug-in value at the LSDV point") {
  const PanelDataset panel = random_panel(30, 5, 0, 7);
  const WithinMoments m = WithinMoments::compute(panel);
  const LsdvSolution sol = solve_lsdv(m);
  ThetaCommon theta;
  theta.r = sol.rho;
  theta.s2 = sol.sigma2;
  theta.b = sol.beta;
  const double t1 = panel.n_periods() - 1;
  const PenaltyPolynomial penalty(panel.n_periods());
  const double l_n_part = modified_loglik(m, theta) - t1 * penalty.value(sol.rho);
  CHECK(l_n_part == doctest::Approx(-0.5 * t1 * (std::log(sol.sigma2) + 1.0)));
}

TEST_CASE("two-unit T=2 value matches the hand-expanded scalar formula") {
  // For T=2: u'Qu = (u_1 - u_2)^2 / 2 and xi(r) = r/2.
  Eigen::VectorXd y0(2);
  y0 << 0.4, -0.2;
  Eigen::MatrixXd y(2, 2);
  y << 1.0, 0.5, -0.3, 0.8;
  const PanelDataset panel = PanelDataset::create(y0, y);
  ThetaCommon theta;
  theta.r = 0.3;
  theta.s2 = 1.7;
  double ssr = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double u1 = y(i, 0) - theta.r * y0(i);
    const double u2 = y(i, 1) - theta.r * y(i, 0);
    ssr += 0.5 * (u1 - u2) * (u1 - u2);
  }
  const double by_hand =
      theta.r / 2.0 - 0.5 * std::log(theta.s2) - ssr / (2.0 * theta.s2 * 2.0);
  CHECK(modified_loglik(panel, theta) == doctest::Approx(by_hand).epsilon(1e-12));
}

TEST_CASE("score vanishes at an interior concentrated-MMLE solution") {
  const PanelDataset panel = random_panel(60, 4, 1, 21, 0.4);
  const EstimateResult est = estimate_mmle_c(panel);
  REQUIRE(est.interior_root);
  const Eigen::VectorXd psi = score_vector(panel, est.theta);
  CHECK(psi.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("profiling zeroes the covariate score at any r") {
  const PanelDataset panel = random_panel(25, 4, 2, 33);
  const WithinMoments m = WithinMoments::compute(panel);
  for (double r : {-0.8, 0.0, 0.45, 1.0, 1.3}) {
    ThetaCommon theta;
    theta.r = r;
    theta.b = m.beta_profiled(r);
    theta.s2 = profiled_sigma2(m, r, theta.b);
    const Eigen::VectorXd psi = score_vector(m, theta);
    CHECK(std::abs(psi(1)) < 1e-10);  // profiled variance zeroes Psi_{s^2}
    CHECK(psi.tail(2).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("profiled beta: empty when K=0, LSDV at the LSDV rho, linear in r") {
  const PanelDataset no_cov = random_panel(10, 3, 0, 2);
  CHECK(profiled_beta(no_cov, 0.7).size() == 0);

  const PanelDataset panel = random_panel(40, 4, 2, 3);
  const WithinMoments m = WithinMoments::compute(panel);
  const LsdvSolution sol = solve_lsdv(m);
  CHECK((m.beta_profiled(sol.rho) - sol.beta).cwiseAbs().maxCoeff() < 1e-12);

  // beta(r) = beta(0) - r * sxx^{-1} sxl.
  const Eigen::VectorXd beta0 = m.beta_profiled(0.0);
  const Eigen::VectorXd slope = m.sxx.ldlt().solve(m.sxl);
  for (double r : {-0.5, 0.3, 1.2}) {
    const Eigen::VectorXd predicted = beta0 - r * slope;
    CHECK((m.beta_profiled(r) - predicted).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("per-unit score contributions aggregate and obey the chain rule") {
  const PanelDataset panel = random_panel(12, 4, 1, 44);
  const WithinMoments m = WithinMoments::compute(panel);
  Rng rng(4, 0);
  const ThetaCommon theta = random_theta(1, rng);
  const ReparamTheta theta_n = ReparamTheta::from_common(theta);

  const Eigen::MatrixXd g = score_contributions(panel, theta_n);
  REQUIRE(g.rows() == panel.n_units());

  // Column means equal the reparametrized full score.
  const Eigen::VectorXd psi = score_vector(m, theta);
  Eigen::VectorXd psi_n(psi.size());
  psi_n(0) = psi(0) + theta_n.s2_n * psi(1);
  psi_n(1) = theta_n.r_n * psi(1);
  psi_n.tail(1) = psi.tail(1);
  CHECK((g.colwise().mean().transpose() - psi_n).cwiseAbs().maxCoeff() < 1e-10);

  // Chain rule for the s2_n column.
  const Eigen::MatrixXd original = [&]() {
    // Rebuild the original-parametrization per-unit s^2 scores.
    Eigen::MatrixXd out(panel.n_units(), 1);
    const double t1 = panel.n_periods() - 1;
    for (int i = 0; i < panel.n_units(); ++i) {
      const Eigen::VectorXd qy = within_transform(panel.y().row(i).transpose());
      const Eigen::VectorXd ql = within_transform(panel.lagged(i));
      Eigen::MatrixXd qx =
          panel.x(i).rowwise() - panel.x(i).colwise().mean();
      const Eigen::VectorXd qu = qy - theta.r * ql - qx * theta.b;
      out(i, 0) = -0.5 * t1 / theta.s2 + qu.squaredNorm() / (2.0 * theta.s2 * theta.s2);
    }
    return out;
  }();
  for (int i = 0; i < panel.n_units(); ++i) {
    CHECK(g(i, 1) == doctest::Approx(theta_n.r_n * original(i, 0)).epsilon(1e-8));
  }
}

TEST_CASE("per-unit contributions match per-unit numeric gradients on a toy panel") {
  const PanelDataset panel = random_panel(3, 3, 1, 55);
  Rng rng(5, 0);
  const ThetaCommon theta = random_theta(1, rng);
  const ReparamTheta theta_n = ReparamTheta::from_common(theta);
  const Eigen::MatrixXd g = score_contributions(panel, theta_n);

  // l_{n,i}(theta_n) rebuilt directly for finite differences.
  const double t1 = panel.n_periods() - 1;
  const PenaltyPolynomial penalty(panel.n_periods());
  auto unit_value = [&](int i, double rn, double s2n, double b) {
    const Eigen::VectorXd qy = within_transform(panel.y().row(i).transpose());
    const Eigen::VectorXd ql = within_transform(panel.lagged(i));
    const Eigen::MatrixXd qx = panel.x(i).rowwise() - panel.x(i).colwise().mean();
    const Eigen::VectorXd qu = qy - rn * ql - qx * Eigen::VectorXd::Constant(1, b);
    const double s2 = s2n * rn;
    return t1 * penalty.value(rn) - 0.5 * t1 * std::log(s2) -
           qu.squaredNorm() / (2.0 * s2);
  };
  for (int i = 0; i < 3; ++i) {
    const double h = 1e-6;
    const double d_r = (unit_value(i, theta_n.r_n + h, theta_n.s2_n, theta.b(0)) -
                        unit_value(i, theta_n.r_n - h, theta_n.s2_n, theta.b(0))) /
                       (2.0 * h);
    const double d_s = (unit_value(i, theta_n.r_n, theta_n.s2_n + h, theta.b(0)) -
                        unit_value(i, theta_n.r_n, theta_n.s2_n - h, theta.b(0))) /
                       (2.0 * h);
    const double d_b = (unit_value(i, theta_n.r_n, theta_n.s2_n, theta.b(0) + h) -
                        unit_value(i, theta_n.r_n, theta_n.s2_n, theta.b(0) - h)) /
                       (2.0 * h);
    CHECK(g(i, 0) == doctest::Approx(d_r).epsilon(1e-5));
    CHECK(g(i, 1) == doctest::Approx(d_s).epsilon(1e-5));
    CHECK(g(i, 2) == doctest::Approx(d_b).epsilon(1e-5));
  }
}

TEST_CASE("envelope identity: concentrated score equals the profiled rho-score") {
  const PanelDataset panel = random_panel(50, 5, 1, 66);
  const WithinMoments m = WithinMoments::compute(panel);
  const ConcentratedStats stats = concentrated_stats(m);
  Rng rng(6, 0);
  for (int rep = 0; rep < 20; ++rep) {
    const double r = 2.4 * rng.uniform() - 1.0;
    ThetaCommon theta;
    theta.r = r;
    theta.b = m.beta_profiled(r);
    theta.s2 = profiled_sigma2(m, r, theta.b);
    const double via_rational = concentrated_score(stats, stats.n_periods, r, 1);
    const double via_envelope = score_vector(m, theta)(0);
    CHECK(via_rational == doctest::Approx(via_envelope).epsilon(1e-10));
  }
}

TEST_CASE("second derivative formula matches the appendix expression") {
  const PanelDataset panel = random_panel(40, 4, 0, 11);
  const ConcentratedStats stats = concentrated_stats(panel);
  const PenaltyPolynomial penalty(4);
  for (double r : {-0.7, 0.1, 0.8, 1.0, 1.3}) {
    const double w = r - stats.rho_lsdv;
    const double d = stats.c_ratio + w * w;
    const double expected =
        3.0 * (penalty.derivative(r, 2) - (stats.c_ratio - w * w) / (d * d));
    CHECK(concentrated_score(stats, 4, r, 2) ==
          doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("concentrated score derivatives agree with Richardson differences") {
  const PanelDataset panel = random_panel(35, 6, 1, 13);
  const ConcentratedStats stats = concentrated_stats(panel);
  const double r = 0.7;
  for (int order = 2; order <= 5; ++order) {
    const double h = 1e-3;
    auto lower = [&](double x) {
      return concentrated_score(stats, stats.n_periods, x, order - 1);
    };
    const double d1 = (lower(r + h) - lower(r - h)) / (2.0 * h);
    const double d2 = (lower(r + h / 2) - lower(r - h / 2)) / h;
    const double richardson = (4.0 * d2 - d1) / 3.0;
    CHECK(concentrated_score(stats, stats.n_periods, r, order) ==
          doctest::Approx(richardson).epsilon(1e-5));
  }
  // First derivative against differences of the concentrated likelihood.
  const double h = 1e-5;
  const double fd =
      (concentrated_loglik(stats, r + h) - concentrated_loglik(stats, r - h)) /
      (2.0 * h);
  CHECK(concentrated_score(stats, stats.n_periods, r, 1) ==
        doctest::Approx(fd).epsilon(1e-6));
}

TEST_CASE("kappa coefficients reproduce the concentrated score zeros") {
  const PanelDataset panel = random_panel(45, 5, 1, 14);
  const ConcentratedStats stats = concentrated_stats(panel);
  const Eigen::VectorXd kappa = score_numerator_coefficients(stats);
  REQUIRE(kappa.size() == stats.n_periods + 1);
  // Leading coefficient 1/(T(T-1)) > 0.
  CHECK(kappa(stats.n_periods) ==
        doctest::Approx(1.0 / (stats.n_periods * (stats.n_periods - 1.0))));
  // kappa(r) = xi'(r) (c + w^2) - w pointwise.
  const PenaltyPolynomial penalty(stats.n_periods);
  for (double r : {-1.0, -0.2, 0.5, 1.0, 1.4}) {
    double poly = 0.0;
    for (int j = static_cast<int>(kappa.size()) - 1; j >= 0; --j) {
      poly = poly * r + kappa(j);
    }
    const double w = r - stats.rho_lsdv;
    const double direct =
        penalty.derivative(r, 1) * (stats.c_ratio + w * w) - w;
    CHECK(poly == doctest::Approx(direct).epsilon(1e-12));
  }
}

TEST_CASE("kappa has zero or two roots beyond the LSDV point") {
  DesignSpec spec;
  spec.design = Design::kS;
  spec.n_periods = 4;
  spec.n_units = 100;
  spec.sigma_mu2 = 1.0;
  spec.n_reps = 1000;
  spec.seed = 99;
  int with_roots = 0;
  for (double rho : {0.5, 0.95, 1.0}) {
    spec.rho = rho;
    for (int rep = 0; rep < 333; ++rep) {
      const ConcentratedStats stats = concentrated_stats(generate_panel(spec, rep));
      const Eigen::VectorXd kappa = score_numerator_coefficients(stats);
      std::vector<double> roots;
      for (double x : real_polynomial_roots(kappa)) {
        if (x >= std::max(-1.0, stats.rho_lsdv) - 1e-12) roots.push_back(x);
      }
      // Exclude near-tangency pairs from the count check.
      if (roots.size() == 2 && std::abs(roots[0] - roots[1]) < 1e-12) continue;
      CHECK((roots.size() == 0 || roots.size() == 2));
      if (roots.size() == 2) {
        ++with_roots;
        // Sign-change scan agrees.
        int sign_changes = 0;
        double prev = concentrated_score(stats, 4, std::max(-1.0, stats.rho_lsdv) + 1e-9, 1);
        for (double r = std::max(-1.0, stats.rho_lsdv) + 1e-9; r <= 3.0; r += 1e-3) {
          const double cur = concentrated_score(stats, 4, r, 1);
          if (prev * cur < 0.0) ++sign_changes;
          prev = cur;
        }
        CHECK(sign_changes == 2);
        // Concavity direction: maximum at the smaller root, minimum at the larger.
        CHECK(concentrated_score(stats, 4, roots[0], 2) <= 1e-10);
        CHECK(concentrated_score(stats, 4, roots[1], 2) >= -1e-10);
      }
    }
  }
  CHECK(with_roots > 0);
}

TEST_CASE("score at unity: both routes agree on random panels") {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const PanelDataset panel = random_panel(20, 4, (seed % 2 == 0) ? 1 : 0, seed,
                                            0.8, 0.0);
    CHECK_NOTHROW(concentrated_score_at_unity(panel));
  }
}

TEST_CASE("score at unity: hand computation for a single T=2 unit") {
  // One unit, T=2: y0, y1, y2.  beta absent.  d = (y1-y0, y2-y1).
  Eigen::VectorXd y0(1);
  y0 << 0.3;
  Eigen::MatrixXd y(1, 2);
  y << 1.1, 0.4;
  const PanelDataset panel = PanelDataset::create(y0, y);
  const double d1 = 1.1 - 0.3, d2 = 0.4 - 1.1;
  // sigma^2(1) = (d'Qd)/(T-1) = (d1-d2)^2/2; cum = (0, d1); within residual
  // dot cum = (d1-d2)/2 * (0 - d1) ... directly:
  const double sigma2_one = 0.5 * (d1 - d2) * (d1 - d2);
  const double cross = (d1 - 0.5 * (d1 + d2)) * 0.0 + (d2 - 0.5 * (d1 + d2)) * d1;
  const double expected = 0.5 + cross / sigma2_one;
  CHECK(concentrated_score_at_unity(panel) ==
        doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("score at unity has the V4 variance under the unit root") {
  DesignSpec spec;
  spec.design = Design::kNs;
  spec.n_periods = 4;
  spec.n_units = 400;
  spec.rho = 1.0;
  spec.n_reps = 400;
  spec.seed = 4242;
  std::vector<double> scaled(spec.n_reps);
  parallel_for(spec.n_reps, 0, [&](std::int64_t rep) {
    const PanelDataset panel = generate_panel(spec, rep);
    scaled[rep] = std::sqrt(static_cast<double>(spec.n_units)) *
                  concentrated_score_at_unity(panel);
  });
  const double var = sample_variance(scaled);
  const double target = (4.0 - 1.0) * (4.0 + 1.0) / 12.0;  // 1.25
  // Loose MC band for 400 replications of a chi-square-like statistic.
  CHECK(var == doctest::Approx(target).epsilon(0.25));
}

TEST_CASE("degenerate lag variation raises the regressor error") {
  // Constant series per unit: the within-transformed lag is identically zero.
  Eigen::VectorXd y0(3);
  y0 << 1.0, -2.0, 0.5;
  Eigen::MatrixXd y(3, 3);
  y << 1.0, 1.0, 1.0, -2.0, -2.0, -2.0, 0.5, 0.5, 0.5;
  const PanelDataset panel = PanelDataset::create(y0, y);
  CHECK_THROWS_AS(concentrated_stats(panel), std::runtime_error);
}

TEST_CASE("interior solutions keep a vanishing score even with tiny noise") {
  // Noise scaled down so c = sigma2/(s_y^2 (1-r2)) is small and the score's
  // denominator is nearly singular at the root.
  for (double noise : {1e-3, 1e-5}) {
    Rng rng(313, 0);
    const int n = 20, t = 5;
    const double rho = 0.7;
    Eigen::VectorXd y0(n);
    Eigen::MatrixXd y(n, t);
    for (int i = 0; i < n; ++i) {
      y0(i) = rng.normal();
      double prev = y0(i);
      for (int s = 0; s < t; ++s) {
        prev = rho * prev + noise * rng.normal();
        y(i, s) = prev;
      }
    }
    const PanelDataset panel = PanelDataset::create(y0, y);
    const EstimateResult est = estimate_mmle_c(panel);
    REQUIRE(est.interior_root);
    CHECK(est.theta.r == doctest::Approx(rho).epsilon(1e-2));
    // The concentrated first-order condition holds to solver precision, and
    // the variance/covariate scores vanish at the stabilized profile values.
    const ConcentratedStats stats = concentrated_stats(panel);
    CHECK(std::abs(concentrated_score(stats, t, est.theta.r, 1)) < 1e-8);
    const Eigen::VectorXd psi = score_vector(panel, est.theta);
    CHECK(std::abs(psi(1)) < 1e-8);
    if (noise >= 1e-3) {
      // The rho-score evaluation itself is well conditioned at this scale.
      CHECK(psi.cwiseAbs().maxCoeff() < 1e-7);
    }
  }
}

TEST_CASE("exact-fit panels: zero-noise AR(1) recovers rho exactly") {
  const int n = 8, t = 5;
  const double rho = 0.6;
  Rng rng(77, 0);
  Eigen::VectorXd y0(n);
  Eigen::MatrixXd y(n, t);
  for (int i = 0; i < n; ++i) {
    y0(i) = rng.normal();  // sigma_v^2 > 0 via dispersed starts
    double prev = y0(i);
    for (int s = 0; s < t; ++s) {
      prev = rho * prev;  // epsilon identically zero
      y(i, s) = prev;
    }
  }
  const PanelDataset panel = PanelDataset::create(y0, y);
  const ConcentratedStats stats = concentrated_stats(panel);
  CHECK(stats.rho_lsdv == doctest::Approx(rho).epsilon(1e-12));
  const EstimateResult est = estimate_mmle_c(panel);
  CHECK(est.theta.r == doctest::Approx(rho).epsilon(1e-12));
  CHECK(est.lan_exists);
}
