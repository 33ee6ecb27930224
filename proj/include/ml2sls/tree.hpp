#pragma once

#include <vector>

#include "ml2sls/classical.hpp"
#include "ml2sls/common.hpp"
#include "ml2sls/dgp.hpp"
#include "ml2sls/rng.hpp"

namespace ml2sls {

struct TreeOptions {
  int max_depth = -1;  // < 0 means unlimited
  int min_leaf = 5;    // minimum (weighted) samples per leaf
  int mtry = -1;       // features tried per node; < 0 means all
};

/// CART regression tree with exact variance-reduction (SSE) splits.
///
/// Fitting works on per-feature presorted index arrays that are partitioned
/// in place as nodes split, so a single argsort of the training matrix is
/// shared by every tree in an ensemble. Sample weights carry bootstrap
/// multiplicities; weight-zero samples are out of bag.
class RegressionTree {
 public:
  void fit(const Mat& X, const Vec& y, const std::vector<double>& w,
           const std::vector<std::vector<int>>& sorted_idx, const TreeOptions& opt,
           Substream& rng);

  double predict_row(const Mat& X, int row) const;
  /// out += scale * prediction(X)
  void predict_add(const Mat& X, double scale, Vec& out) const;

 private:
  struct Node {
    int feat = -1;  // -1 marks a leaf
    double thr = 0.0;
    double value = 0.0;
    int left = -1;
    int right = -1;
  };
  std::vector<Node> nodes_;

  struct BuildCtx;
  int build(BuildCtx& ctx, int lo, int hi, int depth);
};

/// Per-feature argsort of the columns of X (shared across an ensemble).
std::vector<std::vector<int>> argsort_columns(const Mat& X);

struct ForestOptions {
  int n_trees = 500;
  int mtry = -1;
  int min_leaf = 5;
  int max_depth = -1;
  bool bootstrap = true;
};

class RandomForest {
 public:
  void fit(const Mat& X, const Vec& y, const ForestOptions& opt, Substream& stream);
  Vec predict(const Mat& X) const;
  double predict_row(const Mat& X, int row) const;

 private:
  std::vector<RegressionTree> trees_;
};

struct BoostOptions {
  int n_rounds = 100;
  double learning_rate = 0.1;
  int max_depth = 3;
  int min_leaf = 5;
};

/// Gradient boosting on squared loss: depth-limited trees fit to residuals
/// with shrinkage. Deterministic (no subsampling).
class BoostedTrees {
 public:
  void fit(const Mat& X, const Vec& y, const BoostOptions& opt);
  Vec predict(const Mat& X) const;

 private:
  double base_ = 0.0;
  double lr_ = 0.1;
  std::vector<RegressionTree> trees_;
};

/// 5-fold CV hyperparameter grids. Defaults:
/// forest mtry in {ceil(p/3), ceil(sqrt(p))}, min_leaf in {5, 25};
/// boosting depth in {2, 3}, learning rate in {0.05, 0.1}, rounds in {100, 500}.
struct ForestGrid {
  int n_trees = 500;
  int cv_n_trees = 100;  // ensemble size used inside fold evaluation
  std::vector<int> mtry_options;  // empty => derived from p
  std::vector<int> min_leaf_options = {5, 25};
  int folds = 5;
};

struct BoostGrid {
  std::vector<int> depth_options = {2, 3};
  std::vector<double> lr_options = {0.05, 0.1};
  std::vector<int> rounds_options = {100, 500};
  int min_leaf = 5;
  int folds = 5;
};

/// CV-tuned random-forest first stage; predictions are in-sample from the
/// full fit, mirroring naive off-the-shelf usage.
FirstStageFit forest_first_stage(const SimulatedDataset& ds, const ForestGrid& grid,
                                 Substream& cv_stream, Substream& fit_stream);

FirstStageFit boost_first_stage(const SimulatedDataset& ds, const BoostGrid& grid,
                                Substream& cv_stream);

/// Plug-in second stages on the tree first stages.
EstimateRecord forest_2sls(const SimulatedDataset& ds, const ForestGrid& grid,
                           Substream& cv_stream, Substream& fit_stream);
EstimateRecord boost_2sls(const SimulatedDataset& ds, const BoostGrid& grid,
                          Substream& cv_stream);

}  // namespace ml2sls
