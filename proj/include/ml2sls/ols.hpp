#pragma once

#include "ml2sls/common.hpp"

namespace ml2sls {

/// Least-squares fit of y on [1, X]. coef[0] is the intercept.
struct OlsFit {
  Vec coef;
  Vec fitted;
  Vec residuals;
};

/// Column-pivoted Householder QR solve; throws DesignError on rank
/// deficiency (message names the rank and column count) or when n is too
/// small for the design.
OlsFit fit_ols(const Vec& y, const Mat& X);

}  // namespace ml2sls
