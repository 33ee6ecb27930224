#pragma once

#include <vector>

#include "ml2sls/classical.hpp"
#include "ml2sls/common.hpp"
#include "ml2sls/dgp.hpp"
#include "ml2sls/rng.hpp"

namespace ml2sls {

/// L1-penalized first-stage regression. The objective is
///   sum_i (x_i - b0 - z_i'b)^2 + lambda * ||b||_1
/// with the instruments standardized to zero mean and unit (1/n) variance.
/// At a solution the active coefficients satisfy |2 z_j'r| = lambda and the
/// inactive ones |2 z_j'r| <= lambda.
struct LassoConfig {
  Vec lambda_grid;          // descending; empty => default 100-point log grid
  bool standardize = true;  // standardization of Z is part of the contract
  int max_iter = 100000;    // coordinate-descent sweeps per lambda
  double tol = 1e-8;        // max coefficient change per sweep, relative
  bool plug_in = false;     // use the deterministic plug-in lambda
  int cv_folds = 5;
};

struct LassoFit {
  double intercept = 0.0;
  Vec coef;      // original scale
  Vec coef_std;  // standardized scale (KKT checks)
  double lambda = 0.0;
  int n_active = 0;
  int sweeps = 0;
  std::optional<double> cv_mse;  // mean out-of-fold MSE at the chosen lambda
};

/// Smallest lambda that zeroes every coefficient: 2 * max_j |z_j'(x - xbar)|
/// on standardized instruments.
double lasso_lambda_max(const Vec& x, const Mat& Z);

/// Default grid: 100 log-spaced values from lambda_max down to 1e-3*lambda_max.
Vec default_lambda_grid(double lambda_max);

/// Single fit at a fixed lambda (warm start from `warm` when given).
LassoFit lasso_fit_at(const Vec& x, const Mat& Z, double lambda,
                      const LassoConfig& config, const LassoFit* warm = nullptr);

/// Full path with warm starts, then 5-fold CV to pick lambda (minimum mean
/// out-of-fold MSE; ties go to the larger lambda). Returns the full-data fit
/// at the chosen lambda. With config.plug_in the deterministic plug-in
/// lambda is used instead and no CV is run.
LassoFit lasso_fit(const Vec& x, const Mat& Z, const LassoConfig& config,
                   Substream& cv_stream);

/// Deterministic penalty level: (1.1*2) * sqrt(n) * Phi((1 - gamma)/(2*nz))
/// with gamma = 0.1/ln(max(n, nz)) and Phi the standard normal CDF. At
/// n = 1000, nz = 7 this evaluates to ~36.7.
double plug_in_lambda(int n, int nz);

/// Lasso selection followed by OLS-based 2SLS on the instruments with
/// nonzero coefficients. Throws FitError when nothing is selected.
EstimateRecord post_lasso_2sls(const SimulatedDataset& ds, const LassoConfig& config,
                               Substream& cv_stream);

/// Plug-in use of the shrunken lasso prediction itself as the first stage.
EstimateRecord lasso_2sls(const SimulatedDataset& ds, const LassoConfig& config,
                          Substream& cv_stream);

}  // namespace ml2sls
