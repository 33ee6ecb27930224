#include "ml2sls/lasso.hpp"

#include <algorithm>
#include <cmath>

#include "ml2sls/cv.hpp"
#include "ml2sls/ols.hpp"

namespace ml2sls {

namespace {

struct Standardized {
  Mat Zs;
  Vec mu;
  Vec sd;
  double x_mean = 0.0;
  Vec xc;
};

Standardized standardize(const Vec& x, const Mat& Z) {
  const int n = static_cast<int>(Z.rows());
  const int p = static_cast<int>(Z.cols());
  Standardized s;
  s.mu.resize(p);
  s.sd.resize(p);
  s.Zs.resize(n, p);
  for (int j = 0; j < p; ++j) {
    s.mu[j] = Z.col(j).mean();
    const double v = (Z.col(j).array() - s.mu[j]).square().sum() / n;
    if (!(v > 0.0)) {
      throw DesignError("lasso: instrument column " + std::to_string(j) +
                        " has zero variance");
    }
    s.sd[j] = std::sqrt(v);
    s.Zs.col(j) = (Z.col(j).array() - s.mu[j]) / s.sd[j];
  }
  s.x_mean = x.mean();
  s.xc = x.array() - s.x_mean;
  return s;
}

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

/// Cyclic coordinate descent on standardized data. b is updated in place.
int coordinate_descent(const Standardized& s, double lambda, Vec& b, Vec& r,
                       int max_iter, double tol) {
  const int n = static_cast<int>(s.Zs.rows());
  const int p = static_cast<int>(s.Zs.cols());
  const double thresh = lambda / 2.0;
  double gap = 0.0;
  for (int sweep = 1; sweep <= max_iter; ++sweep) {
    gap = 0.0;
    double bmax = 0.0;
    for (int j = 0; j < p; ++j) {
      const double old = b[j];
      // z_j'z_j = n on the standardized scale.
      const double rho = s.Zs.col(j).dot(r) + n * old;
      const double next = soft_threshold(rho, thresh) / n;
      if (next != old) {
        r += s.Zs.col(j) * (old - next);
        b[j] = next;
      }
      gap = std::max(gap, std::fabs(next - old));
      bmax = std::max(bmax, std::fabs(next));
    }
    if (gap <= tol * (1.0 + bmax)) return sweep;
  }
  throw FitError("lasso: coordinate descent did not converge after " +
                 std::to_string(max_iter) + " sweeps (last gap " +
                 format_double(gap) + ")");
}

LassoFit finish_fit(const Standardized& s, const Vec& b, double lambda, int sweeps) {
  const int p = static_cast<int>(b.size());
  LassoFit fit;
  fit.lambda = lambda;
  fit.sweeps = sweeps;
  fit.coef_std = b;
  fit.coef.resize(p);
  double shift = 0.0;
  for (int j = 0; j < p; ++j) {
    fit.coef[j] = b[j] / s.sd[j];
    shift += fit.coef[j] * s.mu[j];
    if (b[j] != 0.0) ++fit.n_active;
  }
  fit.intercept = s.x_mean - shift;
  return fit;
}

std::vector<LassoFit> fit_path(const Standardized& s, const Vec& grid,
                               const LassoConfig& config) {
  const int p = static_cast<int>(s.Zs.cols());
  Vec b = Vec::Zero(p);
  Vec r = s.xc;
  std::vector<LassoFit> path;
  path.reserve(static_cast<std::size_t>(grid.size()));
  for (int g = 0; g < grid.size(); ++g) {
    const int sweeps = coordinate_descent(s, grid[g], b, r, config.max_iter, config.tol);
    path.push_back(finish_fit(s, b, grid[g], sweeps));
  }
  return path;
}

}  // namespace

double lasso_lambda_max(const Vec& x, const Mat& Z) {
  const Standardized s = standardize(x, Z);
  double m = 0.0;
  for (int j = 0; j < Z.cols(); ++j) {
    m = std::max(m, std::fabs(s.Zs.col(j).dot(s.xc)));
  }
  return 2.0 * m;
}

Vec default_lambda_grid(double lambda_max) {
  const int k = 100;
  Vec grid(k);
  const double lo = std::log(1e-3 * lambda_max);
  const double hi = std::log(lambda_max);
  for (int i = 0; i < k; ++i) {
    grid[i] = std::exp(hi + (lo - hi) * i / static_cast<double>(k - 1));
  }
  return grid;
}

LassoFit lasso_fit_at(const Vec& x, const Mat& Z, double lambda,
                      const LassoConfig& config, const LassoFit* warm) {
  if (lambda < 0.0) throw DesignError("lasso: lambda must be nonnegative");
  if (!(config.tol > 0.0)) throw DesignError("lasso: tol must be positive");
  const Standardized s = standardize(x, Z);
  Vec b = (warm != nullptr && warm->coef_std.size() == Z.cols())
              ? warm->coef_std
              : Vec::Zero(Z.cols());
  Vec r = s.xc - s.Zs * b;
  const int sweeps = coordinate_descent(s, lambda, b, r, config.max_iter, config.tol);
  return finish_fit(s, b, lambda, sweeps);
}

double plug_in_lambda(int n, int nz) {
  if (n < 1 || nz < 1) throw DesignError("plug_in_lambda: n and nz must be positive");
  const double gamma = 0.1 / std::log(static_cast<double>(std::max(n, nz)));
  return 1.1 * 2.0 * std::sqrt(static_cast<double>(n)) *
         normal_cdf((1.0 - gamma) / (2.0 * nz));
}

LassoFit lasso_fit(const Vec& x, const Mat& Z, const LassoConfig& config,
                   Substream& cv_stream) {
  const int n = static_cast<int>(Z.rows());
  if (config.plug_in) {
    return lasso_fit_at(x, Z, plug_in_lambda(n, static_cast<int>(Z.cols())), config);
  }

  Vec grid = config.lambda_grid;
  if (grid.size() == 0) grid = default_lambda_grid(lasso_lambda_max(x, Z));
  for (int g = 1; g < grid.size(); ++g) {
    if (grid[g] > grid[g - 1]) throw DesignError("lasso: lambda grid must descend");
  }

  const std::vector<int> fold = kfold_split(n, config.cv_folds, cv_stream);
  Vec cv_sse = Vec::Zero(grid.size());
  for (int f = 0; f < config.cv_folds; ++f) {
    std::vector<int> train, test;
    for (int i = 0; i < n; ++i) (fold[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
    Mat Zt(train.size(), Z.cols());
    Vec xt(train.size());
    for (std::size_t r = 0; r < train.size(); ++r) {
      Zt.row(r) = Z.row(train[r]);
      xt[r] = x[train[r]];
    }
    const Standardized st = standardize(xt, Zt);
    const std::vector<LassoFit> path = fit_path(st, grid, config);
    for (int g = 0; g < grid.size(); ++g) {
      const LassoFit& fit = path[static_cast<std::size_t>(g)];
      for (int i : test) {
        const double pred = fit.intercept + Z.row(i).dot(fit.coef);
        const double err = x[i] - pred;
        cv_sse[g] += err * err;
      }
    }
  }

  // Minimum mean out-of-fold MSE; the descending scan makes ties resolve to
  // the larger lambda (fewer active coefficients).
  int best = 0;
  for (int g = 1; g < grid.size(); ++g) {
    if (cv_sse[g] < cv_sse[best]) best = g;
  }

  const Standardized s = standardize(x, Z);
  Vec subgrid = grid.head(best + 1);
  const std::vector<LassoFit> full_path = fit_path(s, subgrid, config);
  LassoFit chosen = full_path.back();
  chosen.cv_mse = cv_sse[best] / static_cast<double>(n);
  return chosen;
}

EstimateRecord post_lasso_2sls(const SimulatedDataset& ds, const LassoConfig& config,
                               Substream& cv_stream) {
  const LassoFit lf = lasso_fit(ds.x1, ds.Z, config, cv_stream);
  std::vector<int> active;
  for (int j = 0; j < lf.coef_std.size(); ++j) {
    if (lf.coef_std[j] != 0.0) active.push_back(j);
  }
  if (active.empty()) {
    throw FitError("post_lasso: null first stage (no instruments selected at lambda " +
                   format_double(lf.lambda) + ")");
  }
  Mat Z_sel(ds.n, active.size());
  for (std::size_t c = 0; c < active.size(); ++c) Z_sel.col(c) = ds.Z.col(active[c]);

  EstimateRecord rec = fit_2sls(ds, Z_sel);
  rec.estimator_tag = "post_lasso";
  rec.first_stage->method_tag = "post_lasso";
  rec.first_stage->hyper = {
      {"lambda", format_double(lf.lambda)},
      {"n_selected", std::to_string(active.size())},
      {"mode", config.plug_in ? "plug_in" : "cv"}};
  if (lf.cv_mse) rec.first_stage->hyper.emplace_back("lasso_cv_mse", format_double(*lf.cv_mse));
  return rec;
}

EstimateRecord lasso_2sls(const SimulatedDataset& ds, const LassoConfig& config,
                          Substream& cv_stream) {
  const LassoFit lf = lasso_fit(ds.x1, ds.Z, config, cv_stream);
  Vec xhat = (ds.Z * lf.coef).array() + lf.intercept;
  const OlsFit second = fit_ols(ds.y, xhat);

  EstimateRecord rec;
  rec.beta_hat = second.coef[1];
  rec.intercept_hat = second.coef[0];
  rec.estimator_tag = "lasso";
  FirstStageFit fs = make_first_stage("lasso", std::move(xhat), ds.x1);
  fs.mse_out = lf.cv_mse;
  fs.hyper = {{"lambda", format_double(lf.lambda)},
              {"n_active", std::to_string(lf.n_active)},
              {"mode", config.plug_in ? "plug_in" : "cv"}};
  rec.first_stage = std::move(fs);
  rec.plug_in_second_stage = true;
  return rec;
}

}  // namespace ml2sls
