#pragma once

#include "ml2sls/classical.hpp"
#include "ml2sls/common.hpp"
#include "ml2sls/dgp.hpp"

namespace ml2sls {

struct PcaKRule {
  int fixed_k = 0;               // > 0: use exactly k components
  double cum_var_threshold = 0.90;  // else: smallest k reaching this share
};

struct PcaResult {
  Vec eigenvalues;   // descending
  Mat components;    // columns are the top-k eigenvectors
  Mat scores;        // centered Z projected on the components
  Vec col_means;
  int k = 0;
};

/// Eigendecomposition of the (1/n) sample covariance of column-centered Z.
/// Component signs are fixed so the largest-magnitude loading is positive.
PcaResult pca_reduce(const Mat& Z, const PcaKRule& rule);

/// Standard 2SLS with the top-k principal-component scores as instruments.
EstimateRecord pca_2sls(const SimulatedDataset& ds, const PcaKRule& rule);

}  // namespace ml2sls
