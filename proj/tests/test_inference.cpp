#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "panelmmle/estimators.hpp"
#include "panelmmle/inference.hpp"
#include "panelmmle/likelihood.hpp"
#include "panelmmle/monte_carlo.hpp"
#include "panelmmle/penalty.hpp"
#include "panelmmle/rng.hpp"
#include "panelmmle/stats_util.hpp"

using namespace panelmmle;

namespace {

Eigen::MatrixXd cofactor_adjugate(const Eigen::MatrixXd& m) {
  const int n = static_cast<int>(m.rows());
  Eigen::MatrixXd adj(n, n);
  Eigen::MatrixXd minor(n - 1, n - 1);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      int mr = 0;
      for (int r = 0; r < n; ++r) {
        if (r == i) continue;
        int mc = 0;
        for (int c = 0; c < n; ++c) {
          if (c == j) continue;
          minor(mr, mc) = m(r, c);
          ++mc;
        }
        ++mr;
      }
      adj(j, i) = (((i + j) % 2) ? -1.0 : 1.0) * minor.determinant();
    }
  }
  return adj;
}

PanelDataset unit_root_panel_with_covariate(int n, int t, std::uint64_t seed) {
  Rng rng(seed, 0);
  Eigen::VectorXd y0(n);
  Eigen::MatrixXd y(n, t);
  std::vector<Eigen::MatrixXd> x(n, Eigen::MatrixXd(t, 1));
  for (int i = 0; i < n; ++i) {
    y0(i) = rng.normal();
    double prev = y0(i);
    for (int s = 0; s < t; ++s) {
      x[i](s, 0) = rng.normal();
      prev = prev + rng.normal();  // rho = 1, beta = 0
      y(i, s) = prev;
    }
  }
  return PanelDataset::create(y0, y, x);
}

}  // namespace

TEST_CASE("shift-power matrix identities at the unit root") {
  for (int t : {2, 4, 9}) {
    const Eigen::MatrixXd phi = shift_power_matrix(t, 1.0);
    const Eigen::MatrixXd qphi = phi.rowwise() - phi.colwise().mean();
    const double t1 = t - 1.0;
    CHECK(qphi.squaredNorm() / t1 == doctest::Approx((t + 1.0) / 6.0));
    CHECK((qphi * qphi).trace() ==
          doctest::Approx(-(t1) * (t - 5.0) / 12.0).epsilon(1e-12));
  }
}

TEST_CASE("trace of Q Phi reproduces the penalty derivative at any rho") {
  const PenaltyPolynomial penalty(6);
  for (double rho : {-0.9, -0.3, 0.2, 0.7, 1.0}) {
    const Eigen::MatrixXd phi = shift_power_matrix(6, rho);
    const Eigen::MatrixXd qphi = phi.rowwise() - phi.colwise().mean();
    CHECK(qphi.trace() ==
          doctest::Approx(-(6.0 - 1.0) * penalty.derivative(rho, 1)).epsilon(1e-12));
  }
}

TEST_CASE("modified Hessian entries follow the stated layout") {
  const int t = 5;
  const double rho = 0.6, sigma2 = 1.3;
  LimitMomentPlugins plugins;
  plugins.sigma_v2 = 0.4;
  const Eigen::VectorXd qphi = within_transform(power_vector(t, rho));
  plugins.sigma_zqz = plugins.sigma_v2 * qphi.squaredNorm();
  plugins.sigma_xqz = Eigen::VectorXd();
  plugins.sigma_xqx = Eigen::MatrixXd();

  const Eigen::MatrixXd mh = modified_hessian(t, rho, sigma2, plugins);
  const Eigen::MatrixXd mim = modified_information(t, rho, sigma2, plugins);
  const PenaltyPolynomial penalty(t);
  const Eigen::MatrixXd phi = shift_power_matrix(t, rho);
  const Eigen::MatrixXd qphi_mat = phi.rowwise() - phi.colwise().mean();

  CHECK(mh(0, 0) == doctest::Approx(4.0 * penalty.derivative(rho, 2) -
                                    qphi_mat.squaredNorm() -
                                    plugins.sigma_zqz / sigma2));
  CHECK(mh(0, 1) == doctest::Approx(4.0 * penalty.derivative(rho, 1) / sigma2));
  CHECK(mh(1, 1) == doctest::Approx(-2.0 / (sigma2 * sigma2)));
  CHECK(mim(0, 1) == doctest::Approx(-mh(0, 1)));
  CHECK(mim(1, 1) == doctest::Approx(-mh(1, 1)));
  CHECK(mim(0, 0) == doctest::Approx((qphi_mat * qphi_mat).trace() +
                                     qphi_mat.squaredNorm() +
                                     plugins.sigma_zqz / sigma2));
}

TEST_CASE("MH never equals minus MIM") {
  LimitMomentPlugins plugins;
  plugins.sigma_v2 = 0.0;
  plugins.sigma_zqz = 0.0;
  for (int t : {2, 4, 9}) {
    for (double rho = -0.95; rho <= 1.0; rho += 0.05) {
      const Eigen::MatrixXd mh = modified_hessian(t, rho, 1.0, plugins);
      const Eigen::MatrixXd mim = modified_information(t, rho, 1.0, plugins);
      CHECK(std::abs(mh(0, 0) + mim(0, 0)) > 1e-6);
    }
  }
}

TEST_CASE("determinant of MH collapses at unity while MIM stays regular") {
  LimitMomentPlugins plugins;
  plugins.sigma_v2 = 0.0;
  plugins.sigma_zqz = 0.0;
  const int t = 4;
  double prev_abs_det = 1e300;
  for (double rho : {0.5, 0.9, 0.99, 0.999, 1.0}) {
    const Eigen::MatrixXd mh = modified_hessian(t, rho, 1.0, plugins);
    const Eigen::MatrixXd mim = modified_information(t, rho, 1.0, plugins);
    const double abs_det = std::abs(mh.determinant());
    CHECK(abs_det < prev_abs_det + 1e-12);
    prev_abs_det = abs_det;
    CHECK(std::abs(mim.determinant()) > 1e-3);
  }
  const Eigen::MatrixXd mh_at_one = modified_hessian(t, 1.0, 1.0, plugins);
  CHECK(std::abs(mh_at_one.determinant()) < 1e-12);
}

TEST_CASE("expected reparametrized Hessian: zero first row and column at unity") {
  ReparamTheta theta_star;
  theta_star.r_n = 1.0;
  theta_star.s2_n = 1.7;
  theta_star.sigbar_v2n = 0.0;
  const Eigen::MatrixXd h = expected_hessian_reparam(4, theta_star);
  for (int j = 0; j < h.cols(); ++j) {
    CHECK(std::abs(h(0, j)) < 1e-10);
    CHECK(std::abs(h(j, 0)) < 1e-10);
  }
  CHECK(h(1, 1) < 0.0);
}

TEST_CASE("expected reparametrized Hessian is negative definite inside the circle") {
  ReparamTheta theta_n;
  theta_n.r_n = 0.7;
  theta_n.s2_n = 1.0 / 0.7;
  theta_n.sigbar_v2n = 0.1;
  const Eigen::MatrixXd h = expected_hessian_reparam(4, theta_n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  CHECK(es.eigenvalues().maxCoeff() < 0.0);
}

TEST_CASE("expected Hessian matches the average of observed Hessians") {
  // Simulation oracle: mean of observed reparametrized Hessians over panels
  // drawn at the evaluation parameter.
  const int t = 4, n = 50, reps = 20000;
  const double rho = 0.8, sigma2 = 1.0;
  DesignSpec spec;
  spec.design = Design::kS;
  spec.n_periods = t;
  spec.n_units = n;
  spec.rho = rho;
  spec.sigma2 = sigma2;
  spec.sigma_mu2 = 1.0;
  spec.n_reps = reps;
  spec.seed = 11011;

  const double sigma_v2 = (1.0 - rho) / (1.0 + rho);  // design-S effect variance
  ReparamTheta theta_n;
  theta_n.r_n = rho;
  theta_n.s2_n = sigma2 / rho;
  theta_n.sigbar_v2n = sigma_v2 / sigma2 - (1.0 - rho);
  const Eigen::MatrixXd expected = expected_hessian_reparam(t, theta_n);

  const ThetaCommon theta = theta_n.to_common();
  Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(2, 2);
  jac(1, 0) = theta_n.s2_n;
  jac(1, 1) = theta_n.r_n;

  std::vector<Eigen::MatrixXd> sums(resolve_thread_count(0),
                                    Eigen::MatrixXd::Zero(2, 2));
  std::vector<Eigen::MatrixXd> sq_sums(resolve_thread_count(0),
                                       Eigen::MatrixXd::Zero(2, 2));
  std::vector<Eigen::MatrixXd> per_rep(reps);
  parallel_for(reps, 0, [&](std::int64_t rep) {
    const WithinMoments m = WithinMoments::compute(generate_panel(spec, rep));
    const Eigen::MatrixXd h_obs = observed_hessian(m, theta);
    const double psi_s2 = score_vector(m, theta)(1);
    Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(2, 2);
    cross(0, 1) = cross(1, 0) = psi_s2;  // d^2 s^2 / (dr_n ds2_n) = 1
    per_rep[rep] = jac.transpose() * h_obs * jac + cross;
  });
  Eigen::MatrixXd mean_h = Eigen::MatrixXd::Zero(2, 2);
  for (const auto& h : per_rep) mean_h += h;
  mean_h /= reps;
  Eigen::MatrixXd var_h = Eigen::MatrixXd::Zero(2, 2);
  for (const auto& h : per_rep) {
    var_h.array() += (h - mean_h).array().square();
  }
  var_h /= (reps - 1.0);

  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double se = std::sqrt(var_h(i, j) / reps);
      CHECK(std::abs(mean_h(i, j) - expected(i, j)) < 3.0 * se + 2e-3);
    }
  }
}

TEST_CASE("modified information matches the score variance across panels") {
  const int t = 4, n = 50, reps = 20000;
  const double rho = 0.8, sigma2 = 1.0;
  DesignSpec spec;
  spec.design = Design::kS;
  spec.n_periods = t;
  spec.n_units = n;
  spec.rho = rho;
  spec.sigma2 = sigma2;
  spec.sigma_mu2 = 1.0;
  spec.n_reps = reps;
  spec.seed = 36363;

  ThetaCommon theta;
  theta.r = rho;
  theta.s2 = sigma2;
  std::vector<Eigen::Vector2d> scores(reps);
  parallel_for(reps, 0, [&](std::int64_t rep) {
    const WithinMoments m = WithinMoments::compute(generate_panel(spec, rep));
    scores[rep] = score_vector(m, theta).head<2>();
  });
  Eigen::Vector2d mean_score = Eigen::Vector2d::Zero();
  for (const auto& s : scores) mean_score += s;
  mean_score /= reps;
  // The modified score is exactly unbiased at the truth.
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& s : scores) {
    cov += (s - mean_score) * (s - mean_score).transpose();
  }
  cov *= static_cast<double>(n) / (reps - 1.0);

  const double sigma_v2 = sigma2 * (1.0 - rho) / (1.0 + rho);
  LimitMomentPlugins plugins;
  plugins.sigma_v2 = sigma_v2;
  plugins.sigma_zqz =
      sigma_v2 * within_transform(cumulative_power_vector(t, rho)).squaredNorm();
  const Eigen::MatrixXd mim = modified_information(t, rho, sigma2, plugins);

  for (int i = 0; i < 2; ++i) {
    CHECK(std::abs(mean_score(i)) < 4.0 * std::sqrt(cov(i, i) / n / reps) + 1e-4);
    for (int j = 0; j < 2; ++j) {
      const double se = std::abs(cov(i, j)) * std::sqrt(2.0 / reps) + 2e-3;
      CHECK(std::abs(cov(i, j) - mim(i, j)) < 4.0 * se + 0.02 * std::abs(mim(i, j)));
    }
  }
}

TEST_CASE("QLM statistic is invariant to using the inverse or the adjugate") {
  DesignSpec spec;
  spec.design = Design::kS;
  spec.n_periods = 4;
  spec.n_units = 200;
  spec.rho = 0.5;
  spec.n_reps = 1;
  spec.seed = 314;
  const PanelDataset panel = generate_panel(spec, 0);
  const Hypothesis h0 = Hypothesis::rho_equals(0.5, 0);
  const QlmResult via_adj = qlm_standard(panel, h0);

  const RestrictedFit fit = restricted_fit(panel, h0);
  const Eigen::MatrixXd h =
      expected_hessian_reparam(panel.n_periods(), fit.theta_n, fit.plugins);
  const Eigen::MatrixXd g = score_contributions(panel, fit.theta_n);
  const Eigen::VectorXd s_mean = g.colwise().mean();
  const Eigen::MatrixXd outer = g.transpose() * g / panel.n_units();
  const Eigen::MatrixXd h_inv = h.inverse();
  const Eigen::MatrixXd au = h0.A * h_inv;
  const Eigen::VectorXd proj = au * s_mean;
  const Eigen::MatrixXd mid = au * outer * au.transpose();
  const double via_inverse = panel.n_units() * proj.dot(mid.ldlt().solve(proj));
  CHECK(via_adj.statistic == doctest::Approx(via_inverse).epsilon(1e-8));

  // The adjugate really is det(H) * H^{-1} here.
  const Eigen::MatrixXd adj = cofactor_adjugate(h);
  CHECK((adj - h.determinant() * h_inv).cwiseAbs().maxCoeff() <
        1e-8 * adj.cwiseAbs().maxCoeff());
}

TEST_CASE("adjugate of the expected Hessian at unity is rank one along rho") {
  ReparamTheta theta_star;
  theta_star.r_n = 1.0;
  theta_star.s2_n = 1.0;
  theta_star.sigbar_v2n = 0.0;
  const Eigen::MatrixXd h = expected_hessian_reparam(4, theta_star);
  const Eigen::MatrixXd adj = cofactor_adjugate(h);
  CHECK(std::abs(adj(0, 0)) > 1e-8);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      if (i == 0 && j == 0) continue;
      CHECK(std::abs(adj(i, j)) < 1e-10 * std::abs(adj(0, 0)));
    }
  }
  // adj(H) e1 proportional to e1.
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(2);
  e1(0) = 1.0;
  const Eigen::VectorXd mapped = adj * e1;
  CHECK(std::abs(mapped(1)) < 1e-10 * std::abs(mapped(0)));
}

TEST_CASE("the statistic is invariant to rescaling the per-unit scores") {
  DesignSpec spec;
  spec.design = Design::kS;
  spec.n_periods = 4;
  spec.n_units = 150;
  spec.rho = 0.6;
  spec.n_reps = 1;
  spec.seed = 114;
  const PanelDataset panel = generate_panel(spec, 0);
  const Hypothesis h0 = Hypothesis::rho_equals(0.6, 0);
  const RestrictedFit fit = restricted_fit(panel, h0);
  const Eigen::MatrixXd h =
      expected_hessian_reparam(panel.n_periods(), fit.theta_n, fit.plugins);
  const Eigen::MatrixXd g = score_contributions(panel, fit.theta_n);

  auto statistic = [&](double scale) {
    const Eigen::MatrixXd gs = scale * g;
    const Eigen::VectorXd s_mean = gs.colwise().mean();
    const Eigen::MatrixXd outer = gs.transpose() * gs / panel.n_units();
    const Eigen::MatrixXd au = h0.A * h.inverse();
    const Eigen::VectorXd proj = au * s_mean;
    const Eigen::MatrixXd mid = au * outer * au.transpose();
    return panel.n_units() * proj.dot(mid.ldlt().solve(proj));
  };
  CHECK(statistic(1.0) == doctest::Approx(statistic(7.5)).epsilon(1e-10));
}

TEST_CASE("at the unit-root null the statistic degenerates to the ratio form") {
  DesignSpec spec;
  spec.design = Design::kNs;
  spec.n_periods = 4;
  spec.n_units = 300;
  spec.rho = 1.0;
  spec.n_reps = 1;
  spec.seed = 2718;
  const PanelDataset panel = generate_panel(spec, 0);
  const Hypothesis h0 = Hypothesis::rho_equals(1.0, 0);
  const QlmResult res = qlm_standard(panel, h0);

  const RestrictedFit fit = restricted_fit(panel, h0);
  const Eigen::MatrixXd g = score_contributions(panel, fit.theta_n);
  const double s_r = g.col(0).mean();
  const double j_rr = g.col(0).squaredNorm() / panel.n_units();
  const double ratio = panel.n_units() * s_r * s_r / j_rr;
  CHECK(res.statistic == doctest::Approx(ratio).epsilon(1e-8));
}

TEST_CASE("QLM size is near nominal away from and at the unit root") {
  for (double rho : {0.5, 0.95}) {
    DesignSpec spec;
    spec.design = Design::kS;
    spec.n_periods = 9;
    spec.n_units = 100;
    spec.rho = rho;
    spec.sigma_mu2 = 1.0;
    spec.n_reps = 2000;
    spec.seed = 515;
    const McTestCell cell = run_qlm_study(spec, rho, 0);
    CHECK(cell.n_failures == 0);
    CHECK(std::abs(cell.rejection_rate - 0.05) < 0.02);
  }
}

TEST_CASE("reformulated QLM: wrong-variant guards and basic size") {
  const PanelDataset panel = unit_root_panel_with_covariate(200, 4, 5);
  CHECK_THROWS_AS(qlm_unity(panel, Hypothesis::rho_equals(1.0, 1)),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      qlm_standard(panel, Hypothesis::unit_root_and_zero_beta(1)),
      std::invalid_argument);

  const Hypothesis joint = Hypothesis::unit_root_and_zero_beta(1);
  int rejections = 0;
  const int reps = 1500;
  std::vector<char> reject(reps, 0);
  parallel_for(reps, 0, [&](std::int64_t rep) {
    const PanelDataset p = unit_root_panel_with_covariate(400, 4, 1000 + rep);
    const QlmResult res = qlm_unity(p, joint);
    CHECK(res.statistic >= 0.0);
    reject[rep] = res.pvalue < 0.05 ? 1 : 0;
  });
  for (char c : reject) rejections += c;
  const double rate = static_cast<double>(rejections) / reps;
  CHECK(std::abs(rate - 0.05) < 0.018);
}

TEST_CASE("reformulated statistic handles two covariates (J = 3)") {
  Rng rng(606, 0);
  const int n = 300, t = 4, k = 2;
  Eigen::VectorXd y0(n);
  Eigen::MatrixXd y(n, t);
  std::vector<Eigen::MatrixXd> x(n, Eigen::MatrixXd(t, k));
  for (int i = 0; i < n; ++i) {
    y0(i) = rng.normal();
    double prev = y0(i);
    for (int s = 0; s < t; ++s) {
      for (int j = 0; j < k; ++j) x[i](s, j) = rng.normal();
      prev = prev + rng.normal();  // rho = 1, beta = 0
      y(i, s) = prev;
    }
  }
  const PanelDataset panel = PanelDataset::create(y0, y, x);
  const QlmResult res = qlm_unity(panel, Hypothesis::unit_root_and_zero_beta(k));
  CHECK(res.dof == 3);
  CHECK(res.statistic >= 0.0);
  CHECK(res.pvalue >= 0.0);
  CHECK(res.pvalue <= 1.0);
  CHECK(std::isfinite(res.statistic));
}

TEST_CASE("unity Hessian blocks match simulated expectations") {
  const int t = 4, n = 60, reps = 12000;
  DesignSpec spec;
  spec.design = Design::kNs;
  spec.n_periods = t;
  spec.n_units = n;
  spec.rho = 1.0;
  spec.sigma_mu2 = 1.0;
  spec.n_reps = reps;
  spec.seed = 9229;

  ReparamTheta theta_star;
  theta_star.r_n = 1.0;
  theta_star.s2_n = 1.0;
  theta_star.sigbar_v2n = 0.0;
  LimitMomentPlugins plugins;
  plugins.sigma_v2 = 0.0;
  plugins.sigma_zqz = 0.0;
  const UnityHessianBlocks blocks = unity_hessian_blocks(t, theta_star, plugins);

  const PenaltyPolynomial penalty(t);
  const double t1 = t - 1.0;
  std::vector<double> d4(reps), d3s(reps), s1(reps);
  parallel_for(reps, 0, [&](std::int64_t rep) {
    const PanelDataset panel = generate_panel(spec, rep);
    double alpha0 = 0.0;
    for (int i = 0; i < n; ++i) {
      alpha0 += within_transform(panel.y().row(i).transpose()).squaredNorm();
    }
    alpha0 /= n;
    // Observed d^4 l_n / dr^4, d^3 l_n / dr^2 ds2_n and half d^2 at theta*.
    d4[rep] = t1 * penalty.derivative(1.0, 4) + 3.0 * t1 - 12.0 * alpha0;
    d3s[rep] = alpha0;
    s1[rep] = 0.5 * (t1 * penalty.derivative(1.0, 2) + 0.5 * t1 - alpha0);
  });
  const double se_d4 = sample_sd(d4) / std::sqrt(reps);
  CHECK(std::abs(mean(d4) / 12.0 - blocks.h11) < 3.0 * se_d4 / 12.0 + 1e-3);
  const double se_d3 = sample_sd(d3s) / std::sqrt(reps);
  CHECK(std::abs(0.5 * mean(d3s) - blocks.h12(0)) < 1.5 * se_d3 + 1e-3);
  // E S_{i,1} = 0 exactly at the evaluation point.
  const double se_s1 = sample_sd(s1) / std::sqrt(reps);
  CHECK(std::abs(mean(s1)) < 3.0 * se_s1 + 1e-3);
  // The d-block carries the plain (2/2! = 1) expected-Hessian weight.
  CHECK(blocks.h22(0, 0) == doctest::Approx(-0.5 * t1));
}

TEST_CASE("Wald unit-root critical values") {
  DesignSpec spec;
  spec.design = Design::kNs;
  spec.n_periods = 4;
  spec.n_units = 200;
  spec.rho = 1.0;
  spec.n_reps = 1;
  spec.seed = 11;
  const PanelDataset panel = generate_panel(spec, 0);
  const WaldUnitRootResult at_5 = wald_unit_root(panel, 0.05);
  CHECK(at_5.var_z1 == doctest::Approx(0.2));
  CHECK(std::sqrt(at_5.var_z1) == doctest::Approx(0.4472135955));
  const WaldUnitRootResult at_50 = wald_unit_root(panel, 0.5);
  CHECK(at_50.critical_value == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("Wald unit-root empirical size, light version") {
  // The statistic converges at the quartic-root rate inside, so the size
  // settles slowly: N = 2000 is the scale the size claim is made at.
  DesignSpec spec;
  spec.design = Design::kNs;
  spec.n_periods = 4;
  spec.n_units = 2000;
  spec.rho = 1.0;
  spec.n_reps = 1200;
  spec.seed = 8181;
  std::vector<char> reject(spec.n_reps, 0);
  parallel_for(spec.n_reps, 0, [&](std::int64_t rep) {
    reject[rep] =
        wald_unit_root(generate_panel(spec, rep), 0.05).reject ? 1 : 0;
  });
  double rate = 0.0;
  for (char c : reject) rate += c;
  rate /= spec.n_reps;
  CHECK(std::abs(rate - 0.05) < 0.02);
}

TEST_CASE("confidence set is a subset of the grid and covers the truth") {
  DesignSpec spec;
  spec.design = Design::kS;
  spec.n_periods = 4;
  spec.n_units = 400;
  spec.rho = 0.5;
  spec.n_reps = 1;
  spec.seed = 616;

  std::vector<double> grid;
  for (double a = -0.2; a <= 1.2 + 1e-9; a += 0.02) grid.push_back(a);

  int covered = 0;
  const int reps = 200;
  std::vector<char> cover(reps, 0);
  parallel_for(reps, 0, [&](std::int64_t rep) {
    const PanelDataset panel = generate_panel(spec, rep);
    const ConfidenceSet cs = qlm_confidence_set(panel, 0.05, grid);
    for (double a : cs.accepted) {
      bool on_grid = false;
      for (double g : grid) {
        if (std::abs(a - g) < 1e-12) on_grid = true;
      }
      CHECK(on_grid);
    }
    cover[rep] = cs.contains(0.5) ? 1 : 0;
  });
  for (char c : cover) covered += c;
  const double coverage = static_cast<double>(covered) / reps;
  CHECK(coverage > 0.88);
}

TEST_CASE("confidence sets stay near nominal coverage close to the unit root") {
  DesignSpec spec;
  spec.design = Design::kS;
  spec.n_periods = 9;
  spec.n_units = 100;
  spec.rho = 0.99;
  spec.sigma_mu2 = 1.0;
  spec.n_reps = 1;
  spec.seed = 911;
  std::vector<double> grid;
  for (double a = 0.70; a <= 1.20 + 1e-9; a += 0.01) grid.push_back(a);
  const int reps = 2000;
  std::vector<char> cover(reps, 0);
  parallel_for(reps, 0, [&](std::int64_t rep) {
    const PanelDataset panel = generate_panel(spec, rep);
    cover[rep] = qlm_confidence_set(panel, 0.05, grid).contains(0.99) ? 1 : 0;
  });
  double coverage = 0.0;
  for (char c : cover) coverage += c;
  coverage /= reps;
  CHECK(std::abs(coverage - 0.95) < 0.02);
}

TEST_CASE("sandwich covariance refuses the near-unity band and covers the truth") {
  DesignSpec spec;
  spec.design = Design::kNs;
  spec.n_periods = 4;
  spec.n_units = 200;
  spec.rho = 1.0;
  spec.n_reps = 1;
  spec.seed = 21;
  const PanelDataset near_unity = generate_panel(spec, 0);
  ThetaCommon theta;
  theta.r = 0.995;
  theta.s2 = 1.0;
  CHECK_THROWS_AS(asymptotic_covariance(near_unity, theta), std::runtime_error);

  DesignSpec mid;
  mid.design = Design::kS;
  mid.n_periods = 4;
  mid.n_units = 500;
  mid.rho = 0.5;
  mid.n_reps = 1500;
  mid.seed = 727;
  std::vector<char> cover(mid.n_reps, -1);
  parallel_for(mid.n_reps, 0, [&](std::int64_t rep) {
    const PanelDataset panel = generate_panel(mid, rep);
    const EstimateResult est = estimate_mmle_c(panel);
    if (std::abs(est.theta.r) >= 0.98) return;  // rare; excluded
    const AsymptoticMoments cov = asymptotic_covariance(panel, est.theta);
    const double half = 1.959963985 * std::sqrt(cov.covariance(0, 0));
    cover[rep] = (std::abs(est.theta.r - mid.rho) <= half) ? 1 : 0;
  });
  double n_used = 0.0, n_cov = 0.0;
  for (char c : cover) {
    if (c < 0) continue;
    n_used += 1.0;
    n_cov += c;
  }
  const double coverage = n_cov / n_used;
  CHECK(std::abs(coverage - 0.95) < 0.025);
}

TEST_CASE("chi-square tail and quantile sanity") {
  CHECK(chi_square_upper_tail(3.841458821, 1) == doctest::Approx(0.05).epsilon(1e-6));
  CHECK(chi_square_upper_tail(5.991464547, 2) == doctest::Approx(0.05).epsilon(1e-6));
  CHECK(chi_square_quantile(0.95, 1) == doctest::Approx(3.841458821).epsilon(1e-6));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963985).epsilon(1e-6));
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-9));
}
