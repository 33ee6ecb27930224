#include "ml2sls/pca.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace ml2sls {

PcaResult pca_reduce(const Mat& Z, const PcaKRule& rule) {
  const int n = static_cast<int>(Z.rows());
  const int p = static_cast<int>(Z.cols());
  PcaResult res;
  res.col_means = Z.colwise().mean();
  Mat Zc = Z.rowwise() - res.col_means.transpose();
  const Mat cov = Zc.transpose() * Zc / static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
  if (eig.info() != Eigen::Success) throw DesignError("pca: eigensolver failed");

  // Eigen returns ascending order; flip to descending.
  Vec evals(p);
  Mat evecs(p, p);
  for (int j = 0; j < p; ++j) {
    evals[j] = eig.eigenvalues()[p - 1 - j];
    evecs.col(j) = eig.eigenvectors().col(p - 1 - j);
  }
  // Deterministic sign convention: largest-magnitude loading positive.
  for (int j = 0; j < p; ++j) {
    int arg = 0;
    evecs.col(j).cwiseAbs().maxCoeff(&arg);
    if (evecs(arg, j) < 0.0) evecs.col(j) = -evecs.col(j);
  }

  const double total = evals.sum();
  const double rank_tol = 1e-12 * std::max(1.0, evals[0]) * p;
  int rank = 0;
  for (int j = 0; j < p; ++j) {
    if (evals[j] > rank_tol) ++rank;
  }

  int k;
  if (rule.fixed_k > 0) {
    k = rule.fixed_k;
    if (k > rank) {
      throw DesignError("pca: requested " + std::to_string(k) +
                        " components but rank is " + std::to_string(rank));
    }
  } else {
    k = 1;
    double cum = evals[0];
    while (k < rank && cum / total < rule.cum_var_threshold) {
      cum += evals[k];
      ++k;
    }
  }

  res.eigenvalues = evals;
  res.components = evecs.leftCols(k);
  res.scores = Zc * res.components;
  res.k = k;
  return res;
}

EstimateRecord pca_2sls(const SimulatedDataset& ds, const PcaKRule& rule) {
  const PcaResult pca = pca_reduce(ds.Z, rule);
  EstimateRecord rec = fit_2sls(ds, pca.scores);
  rec.estimator_tag = "pca";
  rec.first_stage->method_tag = "pca";
  rec.first_stage->hyper = {
      {"k", std::to_string(pca.k)},
      {"explained_var",
       format_double(pca.eigenvalues.head(pca.k).sum() / pca.eigenvalues.sum())}};
  return rec;
}

}  // namespace ml2sls
