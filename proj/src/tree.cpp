#include "ml2sls/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ml2sls/cv.hpp"
#include "ml2sls/ols.hpp"

namespace ml2sls {

std::vector<std::vector<int>> argsort_columns(const Mat& X) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  std::vector<std::vector<int>> order(static_cast<std::size_t>(p));
  for (int f = 0; f < p; ++f) {
    auto& idx = order[static_cast<std::size_t>(f)];
    idx.resize(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    const double* col = X.col(f).data();
    std::stable_sort(idx.begin(), idx.end(),
                     [col](int a, int b) { return col[a] < col[b]; });
  }
  return order;
}

struct RegressionTree::BuildCtx {
  const Mat* X = nullptr;
  const double* w = nullptr;
  const double* wy = nullptr;  // w[i] * y[i]
  int p = 0;
  int m = 0;  // in-bag sample count
  TreeOptions opt;
  Substream* rng = nullptr;
  // Ping-pong index buffers: p blocks of m indices, each block sorted by its
  // feature. A split partitions every block from one buffer into the other.
  std::vector<int> idx[2];
  std::vector<int> feats;  // feature ids, partially shuffled for mtry
  std::vector<unsigned char> in_left;  // per-sample split membership
};

void RegressionTree::fit(const Mat& X, const Vec& y, const std::vector<double>& w,
                         const std::vector<std::vector<int>>& sorted_idx,
                         const TreeOptions& opt, Substream& rng) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());

  BuildCtx ctx;
  ctx.X = &X;
  ctx.p = p;
  ctx.opt = opt;
  if (ctx.opt.mtry <= 0 || ctx.opt.mtry > p) ctx.opt.mtry = p;
  ctx.rng = &rng;

  static thread_local std::vector<double> wbuf, wybuf;
  wbuf.assign(w.begin(), w.end());
  wybuf.resize(static_cast<std::size_t>(n));
  int m = 0;
  for (int i = 0; i < n; ++i) {
    wybuf[static_cast<std::size_t>(i)] = w[static_cast<std::size_t>(i)] * y[i];
    if (w[static_cast<std::size_t>(i)] > 0.0) ++m;
  }
  ctx.w = wbuf.data();
  ctx.wy = wybuf.data();
  ctx.m = m;

  const std::size_t block_total = static_cast<std::size_t>(p) * static_cast<std::size_t>(m);
  ctx.idx[0].resize(block_total);
  ctx.idx[1].resize(block_total);
  for (int f = 0; f < p; ++f) {
    int* dst = ctx.idx[0].data() + static_cast<std::size_t>(f) * static_cast<std::size_t>(m);
    int k = 0;
    for (int s : sorted_idx[static_cast<std::size_t>(f)]) {
      if (w[static_cast<std::size_t>(s)] > 0.0) dst[k++] = s;
    }
  }
  ctx.feats.resize(static_cast<std::size_t>(p));
  std::iota(ctx.feats.begin(), ctx.feats.end(), 0);
  ctx.in_left.assign(static_cast<std::size_t>(n), 0);

  nodes_.clear();
  nodes_.reserve(static_cast<std::size_t>(2 * m / std::max(1, opt.min_leaf) + 16));
  build(ctx, 0, m, 0);
}

int RegressionTree::build(BuildCtx& ctx, int lo, int hi, int depth) {
  const Mat& X = *ctx.X;
  const int side = depth & 1;
  const std::size_t m = static_cast<std::size_t>(ctx.m);
  const int* base = ctx.idx[side].data();

  double sw = 0.0, swy = 0.0, swyy = 0.0;
  for (int i = lo; i < hi; ++i) {
    const int s = base[static_cast<std::size_t>(i)];
    sw += ctx.w[s];
    swy += ctx.wy[s];
    swyy += ctx.wy[s] * (ctx.wy[s] / ctx.w[s]);  // w*y*y
  }
  const double node_value = swy / sw;
  const double node_sse = swyy - swy * swy / sw;

  const int node_id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{-1, 0.0, node_value, -1, -1});

  const bool depth_stop = ctx.opt.max_depth >= 0 && depth >= ctx.opt.max_depth;
  const double min_leaf = ctx.opt.min_leaf;
  if (depth_stop || hi - lo < 2 || sw < 2.0 * min_leaf ||
      node_sse <= 1e-12 * std::max(1.0, sw)) {
    return node_id;
  }

  // mtry draw: partial Fisher-Yates over the shared feature list.
  const int mtry = ctx.opt.mtry;
  for (int t = 0; t < mtry; ++t) {
    const int j = t + static_cast<int>(ctx.rng->below(
                          static_cast<std::uint64_t>(ctx.p - t)));
    std::swap(ctx.feats[static_cast<std::size_t>(t)], ctx.feats[static_cast<std::size_t>(j)]);
  }

  double best_gain = swy * swy / sw;
  int best_feat = -1;
  double best_thr = 0.0;
  int best_nl = 0;
  double best_wl = 0.0, best_wyl = 0.0;
  for (int t = 0; t < mtry; ++t) {
    const int f = ctx.feats[static_cast<std::size_t>(t)];
    const int* blk = base + static_cast<std::size_t>(f) * m;
    const double* col = X.col(f).data();
    double wl = 0.0, wyl = 0.0;
    double v_prev = col[blk[static_cast<std::size_t>(lo)]];
    for (int i = lo; i < hi - 1; ++i) {
      const int s = blk[static_cast<std::size_t>(i)];
      wl += ctx.w[s];
      wyl += ctx.wy[s];
      const double v_next = col[blk[static_cast<std::size_t>(i + 1)]];
      if (v_next > v_prev && wl >= min_leaf && sw - wl >= min_leaf) {
        const double wr = sw - wl;
        const double wyr = swy - wyl;
        const double gain = wyl * wyl / wl + wyr * wyr / wr;
        if (gain > best_gain) {
          best_gain = gain;
          best_feat = f;
          best_thr = 0.5 * (v_prev + v_next);
          best_nl = i - lo + 1;
          best_wl = wl;
          best_wyl = wyl;
        }
      }
      v_prev = v_next;
    }
  }
  if (best_feat < 0) return node_id;

  nodes_[static_cast<std::size_t>(node_id)].feat = best_feat;
  nodes_[static_cast<std::size_t>(node_id)].thr = best_thr;

  // When both children are guaranteed leaves (depth or weighted-size stop),
  // emit them directly and skip the partition work entirely.
  const double wr = sw - best_wl;
  const double wyr = swy - best_wyl;
  const bool left_can_split = best_wl >= 2.0 * min_leaf && best_nl >= 2;
  const bool right_can_split = wr >= 2.0 * min_leaf && (hi - lo - best_nl) >= 2;
  const bool children_depth_stop =
      ctx.opt.max_depth >= 0 && depth + 1 >= ctx.opt.max_depth;
  if (children_depth_stop || (!left_can_split && !right_can_split)) {
    const int left = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{-1, 0.0, best_wyl / best_wl, -1, -1});
    const int right = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{-1, 0.0, wyr / wr, -1, -1});
    nodes_[static_cast<std::size_t>(node_id)].left = left;
    nodes_[static_cast<std::size_t>(node_id)].right = right;
    return node_id;
  }

  // Single-pass stable partition of every feature block into the other
  // buffer. Left membership comes from the winning block's prefix (a byte
  // mask, so the partition never gathers from X).
  const int* win_blk = base + static_cast<std::size_t>(best_feat) * m;
  for (int i = lo; i < lo + best_nl; ++i) {
    ctx.in_left[static_cast<std::size_t>(win_blk[static_cast<std::size_t>(i)])] = 1;
  }
  for (int f = 0; f < ctx.p; ++f) {
    const int* src = ctx.idx[side].data() + static_cast<std::size_t>(f) * m;
    int* dst = ctx.idx[side ^ 1].data() + static_cast<std::size_t>(f) * m;
    int il = lo;
    int ir = lo + best_nl;
    for (int i = lo; i < hi; ++i) {
      const int s = src[static_cast<std::size_t>(i)];
      if (ctx.in_left[static_cast<std::size_t>(s)]) {
        dst[il++] = s;
      } else {
        dst[ir++] = s;
      }
    }
  }
  for (int i = lo; i < lo + best_nl; ++i) {
    ctx.in_left[static_cast<std::size_t>(win_blk[static_cast<std::size_t>(i)])] = 0;
  }

  const int left = build(ctx, lo, lo + best_nl, depth + 1);
  const int right = build(ctx, lo + best_nl, hi, depth + 1);
  nodes_[static_cast<std::size_t>(node_id)].left = left;
  nodes_[static_cast<std::size_t>(node_id)].right = right;
  return node_id;
}

double RegressionTree::predict_row(const Mat& X, int row) const {
  int k = 0;
  while (nodes_[static_cast<std::size_t>(k)].feat >= 0) {
    const Node& nd = nodes_[static_cast<std::size_t>(k)];
    k = (X(row, nd.feat) <= nd.thr) ? nd.left : nd.right;
  }
  return nodes_[static_cast<std::size_t>(k)].value;
}

void RegressionTree::predict_add(const Mat& X, double scale, Vec& out) const {
  const int n = static_cast<int>(X.rows());
  for (int i = 0; i < n; ++i) out[i] += scale * predict_row(X, i);
}

void RandomForest::fit(const Mat& X, const Vec& y, const ForestOptions& opt,
                       Substream& stream) {
  const int n = static_cast<int>(X.rows());
  if (opt.n_trees < 1) throw DesignError("forest: need at least one tree");
  if (opt.mtry > X.cols()) throw DesignError("forest: mtry exceeds feature count");
  const auto sorted_idx = argsort_columns(X);
  TreeOptions topt{opt.max_depth, opt.min_leaf, opt.mtry};

  trees_.assign(static_cast<std::size_t>(opt.n_trees), RegressionTree{});
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int t = 0; t < opt.n_trees; ++t) {
    Substream tree_stream = stream.child(static_cast<std::uint64_t>(t));
    if (opt.bootstrap) {
      std::fill(w.begin(), w.end(), 0.0);
      for (int i = 0; i < n; ++i) {
        w[static_cast<std::size_t>(tree_stream.below(static_cast<std::uint64_t>(n)))] += 1.0;
      }
    } else {
      std::fill(w.begin(), w.end(), 1.0);
    }
    trees_[static_cast<std::size_t>(t)].fit(X, y, w, sorted_idx, topt, tree_stream);
  }
}

Vec RandomForest::predict(const Mat& X) const {
  Vec out = Vec::Zero(X.rows());
  const double scale = 1.0 / static_cast<double>(trees_.size());
  for (const auto& tree : trees_) tree.predict_add(X, scale, out);
  return out;
}

double RandomForest::predict_row(const Mat& X, int row) const {
  double acc = 0.0;
  for (const auto& tree : trees_) acc += tree.predict_row(X, row);
  return acc / static_cast<double>(trees_.size());
}

void BoostedTrees::fit(const Mat& X, const Vec& y, const BoostOptions& opt) {
  const int n = static_cast<int>(X.rows());
  if (opt.n_rounds < 1) throw DesignError("boost: need at least one round");
  if (!(opt.learning_rate > 0.0 && opt.learning_rate <= 1.0)) {
    throw DesignError("boost: learning rate must lie in (0, 1]");
  }
  const auto sorted_idx = argsort_columns(X);
  const std::vector<double> w(static_cast<std::size_t>(n), 1.0);
  TreeOptions topt{opt.max_depth, opt.min_leaf, -1};
  Substream dummy(0, 0, Purpose::BoostFit);  // mtry = all features: unused

  lr_ = opt.learning_rate;
  base_ = y.mean();
  Vec resid = y.array() - base_;
  Vec pred = Vec::Zero(n);
  trees_.assign(static_cast<std::size_t>(opt.n_rounds), RegressionTree{});
  for (int r = 0; r < opt.n_rounds; ++r) {
    auto& tree = trees_[static_cast<std::size_t>(r)];
    tree.fit(X, resid, w, sorted_idx, topt, dummy);
    pred.setZero();
    tree.predict_add(X, 1.0, pred);
    resid -= lr_ * pred;
  }
}

Vec BoostedTrees::predict(const Mat& X) const {
  Vec out = Vec::Constant(X.rows(), base_);
  for (const auto& tree : trees_) tree.predict_add(X, lr_, out);
  return out;
}

namespace {

struct FoldData {
  Mat X_train;
  Vec y_train;
  std::vector<int> test_rows;
};

std::vector<FoldData> make_folds(const Mat& X, const Vec& y, int folds,
                                 Substream& cv_stream) {
  const int n = static_cast<int>(X.rows());
  const std::vector<int> fold = kfold_split(n, folds, cv_stream);
  std::vector<FoldData> out(static_cast<std::size_t>(folds));
  for (int f = 0; f < folds; ++f) {
    std::vector<int> train;
    auto& fd = out[static_cast<std::size_t>(f)];
    for (int i = 0; i < n; ++i) {
      (fold[static_cast<std::size_t>(i)] == f ? fd.test_rows : train).push_back(i);
    }
    fd.X_train.resize(train.size(), X.cols());
    fd.y_train.resize(train.size());
    for (std::size_t r = 0; r < train.size(); ++r) {
      fd.X_train.row(r) = X.row(train[r]);
      fd.y_train[r] = y[train[r]];
    }
  }
  return out;
}

}  // namespace

FirstStageFit forest_first_stage(const SimulatedDataset& ds, const ForestGrid& grid,
                                 Substream& cv_stream, Substream& fit_stream) {
  const int n = ds.n;
  const int p = static_cast<int>(ds.Z.cols());

  std::vector<int> mtry_opts = grid.mtry_options;
  if (mtry_opts.empty()) {
    mtry_opts = {static_cast<int>(std::ceil(p / 3.0)),
                 static_cast<int>(std::ceil(std::sqrt(static_cast<double>(p))))};
  }
  std::sort(mtry_opts.begin(), mtry_opts.end());
  mtry_opts.erase(std::unique(mtry_opts.begin(), mtry_opts.end()), mtry_opts.end());

  // Config order runs simple-to-flexible (large min_leaf first) so that CV
  // ties resolve to the lower-complexity choice.
  std::vector<int> leaf_opts = grid.min_leaf_options;
  std::sort(leaf_opts.rbegin(), leaf_opts.rend());
  struct Config {
    int mtry;
    int min_leaf;
  };
  std::vector<Config> configs;
  for (int leaf : leaf_opts) {
    for (int mtry : mtry_opts) configs.push_back({mtry, leaf});
  }

  const auto folds = make_folds(ds.Z, ds.x1, grid.folds, cv_stream);
  double best_mse = 0.0;
  int best = -1;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    double sse = 0.0;
    for (std::size_t f = 0; f < folds.size(); ++f) {
      ForestOptions opt;
      opt.n_trees = grid.cv_n_trees;
      opt.mtry = configs[c].mtry;
      opt.min_leaf = configs[c].min_leaf;
      Substream s = fit_stream.child(1 + c * folds.size() + f);
      RandomForest forest;
      forest.fit(folds[f].X_train, folds[f].y_train, opt, s);
      for (int i : folds[f].test_rows) {
        const double err = ds.x1[i] - forest.predict_row(ds.Z, i);
        sse += err * err;
      }
    }
    const double mse = sse / static_cast<double>(n);
    if (best < 0 || mse < best_mse) {
      best = static_cast<int>(c);
      best_mse = mse;
    }
  }

  ForestOptions opt;
  opt.n_trees = grid.n_trees;
  opt.mtry = configs[static_cast<std::size_t>(best)].mtry;
  opt.min_leaf = configs[static_cast<std::size_t>(best)].min_leaf;
  Substream s = fit_stream.child(0);
  RandomForest forest;
  forest.fit(ds.Z, ds.x1, opt, s);

  FirstStageFit fs = make_first_stage("forest", forest.predict(ds.Z), ds.x1);
  fs.mse_out = best_mse;
  fs.hyper = {{"mtry", std::to_string(opt.mtry)},
              {"min_leaf", std::to_string(opt.min_leaf)},
              {"n_trees", std::to_string(opt.n_trees)}};
  return fs;
}

FirstStageFit boost_first_stage(const SimulatedDataset& ds, const BoostGrid& grid,
                                Substream& cv_stream) {
  const int n = ds.n;
  const auto folds = make_folds(ds.Z, ds.x1, grid.folds, cv_stream);

  // Checkpointed evaluation: one staged fit per (depth, lr, fold) covers
  // every entry of the rounds grid.
  std::vector<int> rounds = grid.rounds_options;
  std::sort(rounds.begin(), rounds.end());
  const int max_rounds = rounds.back();

  struct Cell {
    int depth;
    double lr;
    int rounds;
    double sse = 0.0;
  };
  std::vector<Cell> cells;
  for (int r : rounds) {
    for (int depth : grid.depth_options) {
      for (double lr : grid.lr_options) cells.push_back({depth, lr, r, 0.0});
    }
  }

  for (int depth : grid.depth_options) {
    for (double lr : grid.lr_options) {
      for (const auto& fd : folds) {
        const auto sorted_idx = argsort_columns(fd.X_train);
        const std::vector<double> w(static_cast<std::size_t>(fd.X_train.rows()), 1.0);
        TreeOptions topt{depth, grid.min_leaf, -1};
        Substream dummy(0, 0, Purpose::BoostFit);

        const double base = fd.y_train.mean();
        Vec resid = fd.y_train.array() - base;
        Vec train_pred(fd.X_train.rows());
        std::vector<double> test_pred(fd.test_rows.size(), base);
        for (int r = 1; r <= max_rounds; ++r) {
          RegressionTree tree;
          tree.fit(fd.X_train, resid, w, sorted_idx, topt, dummy);
          train_pred.setZero();
          tree.predict_add(fd.X_train, 1.0, train_pred);
          resid -= lr * train_pred;
          for (std::size_t t = 0; t < fd.test_rows.size(); ++t) {
            test_pred[t] += lr * tree.predict_row(ds.Z, fd.test_rows[t]);
          }
          if (std::binary_search(rounds.begin(), rounds.end(), r)) {
            for (auto& cell : cells) {
              if (cell.depth == depth && cell.lr == lr && cell.rounds == r) {
                for (std::size_t t = 0; t < fd.test_rows.size(); ++t) {
                  const double err = ds.x1[fd.test_rows[t]] - test_pred[t];
                  cell.sse += err * err;
                }
              }
            }
          }
        }
      }
    }
  }

  int best = 0;
  for (std::size_t c = 1; c < cells.size(); ++c) {
    if (cells[c].sse < cells[static_cast<std::size_t>(best)].sse) best = static_cast<int>(c);
  }
  const Cell& win = cells[static_cast<std::size_t>(best)];

  BoostOptions opt;
  opt.n_rounds = win.rounds;
  opt.learning_rate = win.lr;
  opt.max_depth = win.depth;
  opt.min_leaf = grid.min_leaf;
  BoostedTrees boost;
  boost.fit(ds.Z, ds.x1, opt);

  FirstStageFit fs = make_first_stage("boost", boost.predict(ds.Z), ds.x1);
  fs.mse_out = win.sse / static_cast<double>(n);
  fs.hyper = {{"depth", std::to_string(win.depth)},
              {"learning_rate", format_double(win.lr)},
              {"rounds", std::to_string(win.rounds)},
              {"min_leaf", std::to_string(grid.min_leaf)}};
  return fs;
}

namespace {
EstimateRecord plugin_from_first_stage(const SimulatedDataset& ds, FirstStageFit fs,
                                       const std::string& tag) {
  const OlsFit second = fit_ols(ds.y, fs.xhat);
  EstimateRecord rec;
  rec.beta_hat = second.coef[1];
  rec.intercept_hat = second.coef[0];
  rec.estimator_tag = tag;
  rec.first_stage = std::move(fs);
  rec.plug_in_second_stage = true;
  return rec;
}
}  // namespace

EstimateRecord forest_2sls(const SimulatedDataset& ds, const ForestGrid& grid,
                           Substream& cv_stream, Substream& fit_stream) {
  return plugin_from_first_stage(ds, forest_first_stage(ds, grid, cv_stream, fit_stream),
                                 "forest");
}

EstimateRecord boost_2sls(const SimulatedDataset& ds, const BoostGrid& grid,
                          Substream& cv_stream) {
  return plugin_from_first_stage(ds, boost_first_stage(ds, grid, cv_stream), "boost");
}

}  // namespace ml2sls
