#include "ml2sls/classical.hpp"

#include <Eigen/QR>

#include <cmath>

#include "ml2sls/ols.hpp"

namespace ml2sls {

FirstStageFit make_first_stage(std::string tag, Vec xhat, const Vec& x) {
  FirstStageFit fs;
  fs.method_tag = std::move(tag);
  fs.xhat = std::move(xhat);
  fs.residuals = x - fs.xhat;
  fs.mse_in = fs.residuals.squaredNorm() / static_cast<double>(x.size());
  return fs;
}

namespace {

EstimateRecord second_stage_plugin(const SimulatedDataset& ds, FirstStageFit fs,
                                   std::string tag) {
  const OlsFit second = fit_ols(ds.y, fs.xhat);
  EstimateRecord rec;
  rec.beta_hat = second.coef[1];
  rec.intercept_hat = second.coef[0];
  rec.estimator_tag = std::move(tag);
  rec.first_stage = std::move(fs);
  rec.plug_in_second_stage = true;
  return rec;
}

}  // namespace

EstimateRecord fit_2sls(const SimulatedDataset& ds, const Mat& Z_used) {
  const OlsFit first = fit_ols(ds.x1, Z_used);
  return second_stage_plugin(ds, make_first_stage("2sls", first.fitted, ds.x1), "2sls");
}

EstimateRecord fit_liml_fuller(const SimulatedDataset& ds, const Mat& Z_used,
                               double alpha) {
  const int n = ds.n;
  const int p = static_cast<int>(Z_used.cols());
  const OlsFit fx = fit_ols(ds.x1, Z_used);  // residualize x on (1, Z)
  const OlsFit fy = fit_ols(ds.y, Z_used);   // residualize y on (1, Z)

  const Vec yc = ds.y.array() - ds.y.mean();
  const Vec xc = ds.x1.array() - ds.x1.mean();
  // 2x2 moment matrices: A from intercept-demeaned data, B from (1,Z)
  // residuals. kappa* is the smaller root of det(A - kappa B) = 0.
  const double a11 = yc.squaredNorm(), a22 = xc.squaredNorm(), a12 = yc.dot(xc);
  const double b11 = fy.residuals.squaredNorm(), b22 = fx.residuals.squaredNorm();
  const double b12 = fy.residuals.dot(fx.residuals);
  const double qa = b11 * b22 - b12 * b12;
  const double qb = -(a11 * b22 + a22 * b11 - 2.0 * a12 * b12);
  const double qc = a11 * a22 - a12 * a12;
  const double disc = qb * qb - 4.0 * qa * qc;
  if (!(qa > 0.0) || disc < 0.0) {
    throw DesignError("fit_liml_fuller: eigenproblem is degenerate");
  }
  const double kappa = (-qb - std::sqrt(disc)) / (2.0 * qa);
  if (kappa < 1.0 - 1e-6) {
    throw DesignError("fit_liml_fuller: kappa* fell below 1");
  }
  const double k = kappa - alpha / static_cast<double>(n - p - 1);

  // k-class normal equations with X = [1, x1]; the intercept's (1,Z)
  // residual is zero, so only the x-moments pick up the k-correction.
  const double sx = ds.x1.sum(), sy = ds.y.sum();
  const double m_xx = fx.residuals.squaredNorm();
  const double m_xy = fx.residuals.dot(ds.y);
  Eigen::Matrix2d A;
  A << static_cast<double>(n), sx, sx, ds.x1.squaredNorm() - k * m_xx;
  Eigen::Vector2d rhs(sy, ds.x1.dot(ds.y) - k * m_xy);
  const Eigen::Vector2d coef = A.fullPivLu().solve(rhs);

  EstimateRecord rec;
  rec.beta_hat = coef[1];
  rec.intercept_hat = coef[0];
  rec.estimator_tag = "liml";
  FirstStageFit fs = make_first_stage("liml_linear_stage", fx.fitted, ds.x1);
  fs.hyper = {{"kappa", format_double(kappa)},
              {"k", format_double(k)},
              {"alpha", format_double(alpha)}};
  rec.first_stage = std::move(fs);
  rec.plug_in_second_stage = false;
  return rec;
}

EstimateRecord fit_jive(const SimulatedDataset& ds, const Mat& Z_used) {
  const int n = ds.n;
  const int k = static_cast<int>(Z_used.cols());
  const OlsFit first = fit_ols(ds.x1, Z_used);

  Mat design(n, k + 1);
  design.col(0).setOnes();
  design.rightCols(k) = Z_used;
  Eigen::HouseholderQR<Mat> qr(design);
  const Mat thin_q = qr.householderQ() * Mat::Identity(n, k + 1);
  const Vec leverage = thin_q.rowwise().squaredNorm();

  Vec xhat_loo(n);
  double max_h = 0.0;
  for (int i = 0; i < n; ++i) {
    const double h = leverage[i];
    max_h = std::max(max_h, h);
    if (h >= 1.0 - 1e-8) {
      throw DesignError("fit_jive: degenerate leverage (h_ii ~ 1)");
    }
    xhat_loo[i] = (first.fitted[i] - h * ds.x1[i]) / (1.0 - h);
  }

  // IV solve with the leave-one-out prediction as instrument for x1.
  const double c_iy = cov_n(xhat_loo, ds.y);
  const double c_ix = cov_n(xhat_loo, ds.x1);
  if (std::fabs(c_ix) < 1e-14) {
    throw DesignError("fit_jive: instrument uncorrelated with regressor");
  }
  EstimateRecord rec;
  rec.beta_hat = c_iy / c_ix;
  rec.intercept_hat = ds.y.mean() - rec.beta_hat * ds.x1.mean();
  rec.estimator_tag = "jive";
  FirstStageFit fs = make_first_stage("jive_linear_stage", first.fitted, ds.x1);
  fs.hyper = {{"max_leverage", format_double(max_h)}};
  rec.first_stage = std::move(fs);
  rec.plug_in_second_stage = false;
  return rec;
}

namespace {

/// One direction of the split: estimate the first stage on `train`, form
/// predictions and run the second stage on `test`.
std::pair<double, double> ssiv_half(const SimulatedDataset& ds, const Mat& Z_used,
                                    const std::vector<int>& train,
                                    const std::vector<int>& test) {
  const int k = static_cast<int>(Z_used.cols());
  Mat Z_a(train.size(), k);
  Vec x_a(train.size());
  for (std::size_t r = 0; r < train.size(); ++r) {
    Z_a.row(r) = Z_used.row(train[r]);
    x_a[r] = ds.x1[train[r]];
  }
  const OlsFit first = fit_ols(x_a, Z_a);
  Vec xhat_b(test.size()), y_b(test.size());
  for (std::size_t r = 0; r < test.size(); ++r) {
    xhat_b[r] = first.coef[0] + Z_used.row(test[r]).dot(first.coef.tail(k));
    y_b[r] = ds.y[test[r]];
  }
  const OlsFit second = fit_ols(y_b, xhat_b);
  return {second.coef[1], second.coef[0]};
}

}  // namespace

EstimateRecord fit_ssiv(const SimulatedDataset& ds, const Mat& Z_used,
                        Substream& split_stream, bool swap_and_average,
                        const std::vector<int>* split_override) {
  const int n = ds.n;
  const int k = static_cast<int>(Z_used.cols());
  if (n < 2 * (k + 2)) throw DesignError("fit_ssiv: sample too small to split");

  std::vector<int> half_a, half_b;
  if (split_override != nullptr) {
    std::vector<bool> in_a(static_cast<std::size_t>(n), false);
    for (int i : *split_override) in_a[static_cast<std::size_t>(i)] = true;
    for (int i = 0; i < n; ++i) (in_a[static_cast<std::size_t>(i)] ? half_a : half_b).push_back(i);
  } else {
    std::vector<int> perm = split_stream.permutation(n);
    half_a.assign(perm.begin(), perm.begin() + n / 2);
    half_b.assign(perm.begin() + n / 2, perm.end());
  }

  const auto [slope_ab, icept_ab] = ssiv_half(ds, Z_used, half_a, half_b);
  double slope = slope_ab, icept = icept_ab;
  if (swap_and_average) {
    const auto [slope_ba, icept_ba] = ssiv_half(ds, Z_used, half_b, half_a);
    slope = 0.5 * (slope_ab + slope_ba);
    icept = 0.5 * (icept_ab + icept_ba);
  }

  // Recorded first stage: each half's own in-sample OLS fit, pooled back in
  // original order. Within each half residuals are orthogonal to fitted
  // values and sum to zero, so the pooled Cov(xhat, e) is exactly zero.
  Vec xhat_in(n);
  double cross_sse = 0.0;
  for (int pass = 0; pass < 2; ++pass) {
    const std::vector<int>& own = pass == 0 ? half_a : half_b;
    const std::vector<int>& other = pass == 0 ? half_b : half_a;
    Mat Z_own(own.size(), k);
    Vec x_own(own.size());
    for (std::size_t r = 0; r < own.size(); ++r) {
      Z_own.row(r) = Z_used.row(own[r]);
      x_own[r] = ds.x1[own[r]];
    }
    const OlsFit f = fit_ols(x_own, Z_own);
    for (std::size_t r = 0; r < own.size(); ++r) xhat_in[own[r]] = f.fitted[r];
    for (int i : other) {
      const double pred = f.coef[0] + Z_used.row(i).dot(f.coef.tail(k));
      const double err = ds.x1[i] - pred;
      cross_sse += err * err;
    }
  }

  EstimateRecord rec;
  rec.beta_hat = slope;
  rec.intercept_hat = icept;
  rec.estimator_tag = "ssiv";
  FirstStageFit fs = make_first_stage("ssiv_linear_stage", xhat_in, ds.x1);
  fs.mse_out = cross_sse / static_cast<double>(n);
  fs.hyper = {{"swap_and_average", swap_and_average ? "1" : "0"}};
  rec.first_stage = std::move(fs);
  rec.plug_in_second_stage = false;
  return rec;
}

EstimateRecord fit_oracle(const SimulatedDataset& ds) {
  EstimateRecord rec =
      second_stage_plugin(ds, make_first_stage("oracle", ds.x_oracle, ds.x1), "oracle");
  return rec;
}

EstimateRecord fit_naive(const SimulatedDataset& ds) {
  EstimateRecord rec =
      second_stage_plugin(ds, make_first_stage("naive", ds.x1, ds.x1), "naive");
  return rec;
}

}  // namespace ml2sls
