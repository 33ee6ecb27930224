#include "ml2sls/ols.hpp"

#include <Eigen/QR>

namespace ml2sls {

OlsFit fit_ols(const Vec& y, const Mat& X) {
  const int n = static_cast<int>(y.size());
  const int k = static_cast<int>(X.cols());
  if (X.rows() != n) throw DesignError("fit_ols: y and X row counts differ");
  if (n <= k + 1) throw DesignError("fit_ols: need n > columns + 1");

  Mat design(n, k + 1);
  design.col(0).setOnes();
  if (k > 0) design.rightCols(k) = X;

  Eigen::ColPivHouseholderQR<Mat> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < k + 1) {
    throw DesignError("fit_ols: singular design (rank " + std::to_string(qr.rank()) +
                      " of " + std::to_string(k + 1) + " columns)");
  }
  OlsFit fit;
  fit.coef = qr.solve(y);
  fit.fitted = design * fit.coef;
  fit.residuals = y - fit.fitted;
  return fit;
}

}  // namespace ml2sls
