#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ml2sls/common.hpp"
#include "ml2sls/dgp.hpp"
#include "ml2sls/rng.hpp"

namespace ml2sls {

/// A first-stage prediction of the endogenous regressor. xhat + residuals
/// reconstructs x exactly by construction.
struct FirstStageFit {
  Vec xhat;
  Vec residuals;
  double mse_in = 0.0;
  std::optional<double> mse_out;  // absent for methods with no CV step
  std::string method_tag;
  std::vector<std::pair<std::string, std::string>> hyper;
};

struct EstimateRecord {
  double beta_hat = 0.0;
  double intercept_hat = 0.0;
  std::string estimator_tag;
  std::optional<FirstStageFit> first_stage;
  /// True when the second stage is a plain OLS of y on xhat over the full
  /// sample, which is exactly the case where the wedge identity
  /// beta_hat = beta1 + (beta1*Cov(xhat,e)+Cov(xhat,u))/Var(xhat) holds.
  bool plug_in_second_stage = false;
  double wall_time = 0.0;
};

FirstStageFit make_first_stage(std::string tag, Vec xhat, const Vec& x);

/// OLS first stage on Z_used, OLS second stage on the predictions.
EstimateRecord fit_2sls(const SimulatedDataset& ds, const Mat& Z_used);

/// Fuller-modified LIML. kappa* solves the 2x2 generalized eigenproblem of
/// [y x] residualized against the intercept versus against (intercept, Z);
/// the k-class estimator is evaluated at k = kappa* - alpha/(n - p - 1).
/// alpha = 0 reproduces LIML.
EstimateRecord fit_liml_fuller(const SimulatedDataset& ds, const Mat& Z_used,
                               double alpha = 1.0);

/// Jackknife IV (leave-one-out first stage via hat-matrix leverages; the
/// leave-one-out prediction enters as an instrument, not as a plug-in
/// regressor). The recorded first stage is the full-sample linear stage.
EstimateRecord fit_jive(const SimulatedDataset& ds, const Mat& Z_used);

/// Split-sample IV: first stage on one half, predictions and second stage on
/// the other; with swap_and_average the halves trade roles and the two
/// slopes are averaged. split_override fixes the A-half indices (diagnostics
/// and tests only).
EstimateRecord fit_ssiv(const SimulatedDataset& ds, const Mat& Z_used,
                        Substream& split_stream, bool swap_and_average = true,
                        const std::vector<int>* split_override = nullptr);

/// Regression of y on the true exogenous component of x1 (simulator-only).
EstimateRecord fit_oracle(const SimulatedDataset& ds);

/// Plain OLS of y on the endogenous x1.
EstimateRecord fit_naive(const SimulatedDataset& ds);

}  // namespace ml2sls
