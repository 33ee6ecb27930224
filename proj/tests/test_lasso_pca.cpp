#include <doctest.h>

#include <Eigen/SVD>

#include <cmath>

#include "ml2sls/dgp.hpp"
#include "ml2sls/lasso.hpp"
#include "ml2sls/ols.hpp"
#include "ml2sls/pca.hpp"

using namespace ml2sls;

namespace {
SimulatedDataset low_ds(std::uint64_t seed, int n) {
  Substream s(seed, 0, Purpose::Dataset);
  return gen_low_complexity(n, s);
}
}  // namespace

TEST_CASE("lasso at lambda 0 matches OLS") {
  Substream s(30, 0, Purpose::Dataset);
  const int n = 200, p = 5;
  Mat Z(n, p);
  Vec x(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) Z(i, j) = s.normal();
    x[i] = 1.5 + Z.row(i).sum() * 0.3 + s.normal();
  }
  LassoConfig cfg;
  const LassoFit lf = lasso_fit_at(x, Z, 0.0, cfg);
  const OlsFit ols = fit_ols(x, Z);
  CHECK(std::fabs(lf.intercept - ols.coef[0]) < 1e-6);
  for (int j = 0; j < p; ++j) CHECK(std::fabs(lf.coef[j] - ols.coef[j + 1]) < 1e-6);
}

TEST_CASE("lambda_max zeroes every coefficient") {
  const SimulatedDataset ds = low_ds(31, 300);
  const double lmax = lasso_lambda_max(ds.x1, ds.Z);
  LassoConfig cfg;
  const LassoFit at_max = lasso_fit_at(ds.x1, ds.Z, lmax * 1.000001, cfg);
  CHECK(at_max.n_active == 0);
  CHECK(at_max.intercept == doctest::Approx(ds.x1.mean()));
  const LassoFit below = lasso_fit_at(ds.x1, ds.Z, lmax * 0.98, cfg);
  CHECK(below.n_active > 0);
}

TEST_CASE("orthonormal design reduces to soft thresholding") {
  Substream s(32, 0, Purpose::Dataset);
  const int n = 128, p = 4;
  // Centered orthogonal columns scaled to squared norm n (unit 1/n variance).
  Mat G(n, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) G(i, j) = s.normal();
  }
  G.rowwise() -= G.colwise().mean();
  Eigen::HouseholderQR<Mat> qr(G);
  Mat Q = qr.householderQ() * Mat::Identity(n, p);
  Q.rowwise() -= Q.colwise().mean();  // re-center (stays orthogonal up to fp)
  // Gram-Schmidt to restore exact orthogonality after centering.
  for (int j = 0; j < p; ++j) {
    for (int k = 0; k < j; ++k) Q.col(j) -= Q.col(k).dot(Q.col(j)) * Q.col(k);
    Q.col(j) /= Q.col(j).norm();
  }
  const Mat Z = Q * std::sqrt(static_cast<double>(n));

  Vec x(n);
  for (int i = 0; i < n; ++i) x[i] = 0.7 * Z(i, 0) - 0.2 * Z(i, 1) + 0.05 * Z(i, 3) + 0.3 * s.normal();

  const double lambda = 0.3 * lasso_lambda_max(x, Z);
  LassoConfig cfg;
  const LassoFit lf = lasso_fit_at(x, Z, lambda, cfg);

  // Closed form on an orthonormal design: b_j = S(z_j'xc, lambda/2)/n.
  const Vec xc = x.array() - x.mean();
  for (int j = 0; j < p; ++j) {
    const double rho = Z.col(j).dot(xc);
    double expected = 0.0;
    if (rho > lambda / 2) expected = (rho - lambda / 2) / n;
    if (rho < -lambda / 2) expected = (rho + lambda / 2) / n;
    CHECK(std::fabs(lf.coef_std[j] - expected) < 1e-8);
  }
}

TEST_CASE("KKT conditions hold at the solution") {
  const SimulatedDataset ds = low_ds(33, 400);
  const double lambda = 0.2 * lasso_lambda_max(ds.x1, ds.Z);
  LassoConfig cfg;
  const LassoFit lf = lasso_fit_at(ds.x1, ds.Z, lambda, cfg);

  // Rebuild the standardized problem to evaluate gradients.
  const int n = ds.n, p = static_cast<int>(ds.Z.cols());
  Mat Zs(n, p);
  for (int j = 0; j < p; ++j) {
    const double mu = ds.Z.col(j).mean();
    const double sd = std::sqrt((ds.Z.col(j).array() - mu).square().sum() / n);
    Zs.col(j) = (ds.Z.col(j).array() - mu) / sd;
  }
  const Vec xc = ds.x1.array() - ds.x1.mean();
  const Vec r = xc - Zs * lf.coef_std;
  const double tol = 1e-4 * lambda + 1e-8;
  for (int j = 0; j < p; ++j) {
    const double grad = 2.0 * Zs.col(j).dot(r);
    if (lf.coef_std[j] != 0.0) {
      CHECK(std::fabs(std::fabs(grad) - lambda) < tol);
      CHECK(grad * lf.coef_std[j] > 0.0);
    } else {
      CHECK(std::fabs(grad) <= lambda + tol);
    }
  }
}

TEST_CASE("plug-in lambda reproduces the documented value") {
  const double lambda = plug_in_lambda(1000, 7);
  CHECK(lambda == doctest::Approx(36.0).epsilon(0.03));  // ~36.7
  const double gamma = 0.1 / std::log(1000.0);
  CHECK(gamma == doctest::Approx(0.014476).epsilon(1e-3));
  // Monotone in n through the sqrt(n) factor.
  CHECK(plug_in_lambda(2000, 7) > lambda);
  CHECK(plug_in_lambda(4000, 7) > plug_in_lambda(2000, 7));
}

TEST_CASE("lasso selection keeps strong instruments and drops pure noise as n grows") {
  // Junk columns enter with inner products O(sqrt(n)) while real instruments
  // scale O(n), so any fixed fraction of lambda_max separates them for large
  // n.
  auto run = [](int n) {
    Substream s(34, 0, Purpose::Dataset);
    SimulatedDataset ds = gen_low_complexity(n, s);
    Mat Z(n, 12);
    Z.leftCols(7) = ds.Z;
    for (int i = 0; i < n; ++i) {
      for (int j = 7; j < 12; ++j) Z(i, j) = s.normal();
    }
    LassoConfig cfg;
    const double lambda = 0.25 * lasso_lambda_max(ds.x1, Z);
    const LassoFit lf = lasso_fit_at(ds.x1, Z, lambda, cfg);
    int real = 0, junk = 0;
    for (int j = 0; j < 12; ++j) {
      if (lf.coef_std[j] != 0.0) (j < 7 ? real : junk)++;
    }
    return std::pair<int, int>(real, junk);
  };
  const auto [real_big, junk_big] = run(5000);
  CHECK(real_big == 7);
  CHECK(junk_big == 0);
}

TEST_CASE("cross-validated lasso selects the strong instruments") {
  int all_seven = 0;
  const int iters = 10;
  for (int i = 0; i < iters; ++i) {
    Substream sd(35, static_cast<std::uint64_t>(i), Purpose::Dataset);
    const SimulatedDataset ds = gen_low_complexity(1000, sd);
    Substream cv(35, static_cast<std::uint64_t>(i), Purpose::Cv);
    LassoConfig cfg;
    const LassoFit lf = lasso_fit(ds.x1, ds.Z, cfg, cv);
    if (lf.n_active == 7) ++all_seven;
    CHECK(lf.cv_mse.has_value());
  }
  CHECK(all_seven > iters / 2);
}

TEST_CASE("coordinate descent reports non-convergence with its last gap") {
  const SimulatedDataset ds = low_ds(42, 300);
  LassoConfig cfg;
  cfg.max_iter = 1;
  CHECK_THROWS_WITH_AS(lasso_fit_at(ds.x1, ds.Z, 0.01, cfg),
                       doctest::Contains("gap"), FitError);
}

TEST_CASE("post-lasso reports a null first stage") {
  const SimulatedDataset ds = low_ds(36, 300);
  LassoConfig cfg;
  Vec grid(1);
  grid[0] = 2.0 * lasso_lambda_max(ds.x1, ds.Z);
  cfg.lambda_grid = grid;
  Substream cv(36, 0, Purpose::Cv);
  CHECK_THROWS_WITH_AS(post_lasso_2sls(ds, cfg, cv), doctest::Contains("null first stage"),
                       FitError);
}

TEST_CASE("post-lasso and lasso second stages on a low-complexity draw") {
  const SimulatedDataset ds = low_ds(37, 1000);
  LassoConfig cfg;
  Substream cv1(37, 0, Purpose::Cv, 1);
  const EstimateRecord pl = post_lasso_2sls(ds, cfg, cv1);
  CHECK(std::fabs(pl.beta_hat - 1.0) < 0.1);
  CHECK(pl.estimator_tag == "post_lasso");

  Substream cv2(37, 0, Purpose::Cv, 2);
  const EstimateRecord la = lasso_2sls(ds, cfg, cv2);
  CHECK(la.plug_in_second_stage);
  // Shrinkage makes Cov(xhat, e) = lambda * ||b||_1 / (2n) > 0.
  CHECK(cov_n(la.first_stage->xhat, la.first_stage->residuals) > 0.0);
  CHECK(var_n(la.first_stage->xhat) <= var_n(ds.x1));
}

TEST_CASE("pca on an isotropic design explains ~1/p per component") {
  Substream s(38, 0, Purpose::Dataset);
  const Mat Z = sample_mv_normal(20000, Mat::Identity(5, 5), s);
  PcaKRule rule;
  rule.fixed_k = 5;
  const PcaResult pca = pca_reduce(Z, rule);
  const double total = pca.eigenvalues.sum();
  for (int j = 0; j < 5; ++j) {
    CHECK(pca.eigenvalues[j] / total == doctest::Approx(0.2).epsilon(0.1));
  }
}

TEST_CASE("pca scores are orthogonal and reconstruct centered Z") {
  const SimulatedDataset ds = low_ds(39, 600);
  PcaKRule all;
  all.fixed_k = 7;
  const PcaResult pca = pca_reduce(ds.Z, all);

  const Mat gram = pca.scores.transpose() * pca.scores;
  for (int i = 0; i < 7; ++i) {
    for (int j = 0; j < 7; ++j) {
      if (i != j) CHECK(std::fabs(gram(i, j)) < 1e-8 * gram.diagonal().maxCoeff());
    }
  }

  const Mat Zc = ds.Z.rowwise() - ds.Z.colwise().mean();
  const Mat recon = pca.scores * pca.components.transpose();
  CHECK((recon - Zc).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("pca eigen route matches an SVD oracle") {
  const SimulatedDataset ds = low_ds(40, 500);
  PcaKRule rule;
  rule.fixed_k = 4;
  const PcaResult pca = pca_reduce(ds.Z, rule);

  const Mat Zc = ds.Z.rowwise() - ds.Z.colwise().mean();
  Eigen::BDCSVD<Mat> svd(Zc / std::sqrt(static_cast<double>(ds.n)),
                         Eigen::ComputeThinU | Eigen::ComputeThinV);
  for (int j = 0; j < 4; ++j) {
    const double ev = svd.singularValues()[j] * svd.singularValues()[j];
    CHECK(std::fabs(ev - pca.eigenvalues[j]) < 1e-8 * std::max(1.0, pca.eigenvalues[0]));
    // Scores agree up to the sign convention.
    const Vec svd_score = Zc * svd.matrixV().col(j);
    const double align = svd_score.dot(pca.scores.col(j)) >= 0 ? 1.0 : -1.0;
    CHECK((align * svd_score - pca.scores.col(j)).lpNorm<Eigen::Infinity>() < 1e-8);
  }
}

TEST_CASE("pca k selection and rank guard") {
  const SimulatedDataset ds = low_ds(41, 500);
  PcaKRule rule;  // cumulative explained variance >= 0.90
  const PcaResult pca = pca_reduce(ds.Z, rule);
  const double total = pca.eigenvalues.sum();
  CHECK(pca.eigenvalues.head(pca.k).sum() / total >= 0.90);
  if (pca.k > 1) {
    CHECK(pca.eigenvalues.head(pca.k - 1).sum() / total < 0.90);
  }

  Mat rank_deficient(100, 3);
  Substream s(41, 1, Purpose::Dataset);
  for (int i = 0; i < 100; ++i) {
    rank_deficient(i, 0) = s.normal();
    rank_deficient(i, 1) = s.normal();
    rank_deficient(i, 2) = rank_deficient(i, 0) + rank_deficient(i, 1);
  }
  PcaKRule too_many;
  too_many.fixed_k = 3;
  CHECK_THROWS_AS(pca_reduce(rank_deficient, too_many), DesignError);

  const EstimateRecord rec = pca_2sls(ds, rule);
  CHECK(std::fabs(rec.beta_hat - 1.0) < 0.1);
  CHECK(rec.estimator_tag == "pca");
}
