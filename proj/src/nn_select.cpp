#include "ml2sls/nn_select.hpp"

#include <algorithm>
#include <cmath>

#include "ml2sls/cv.hpp"
#include "ml2sls/ols.hpp"
#include "ml2sls/parallel.hpp"

namespace ml2sls {

std::string family_name(NnFamily family) {
  switch (family) {
    case NnFamily::ShallowWide: return "shallow";
    case NnFamily::NarrowDeep: return "narrow";
    case NnFamily::Unrestricted: return "unrestricted";
  }
  return "unrestricted";
}

NnFamily family_from_name(const std::string& name) {
  if (name == "shallow") return NnFamily::ShallowWide;
  if (name == "narrow") return NnFamily::NarrowDeep;
  if (name == "unrestricted") return NnFamily::Unrestricted;
  throw ConfigError("unknown neural search family: " + name);
}

std::vector<MlpArch> nn_search_space(NnFamily family) {
  const std::vector<double> dropouts = {0.1, 0.2};
  std::vector<MlpArch> out;
  out.push_back(MlpArch{0, 0, 0.0});
  auto add = [&](const std::vector<int>& depths, const std::vector<int>& widths) {
    for (int d : depths) {
      for (int w : widths) {
        for (double q : dropouts) out.push_back(MlpArch{d, w, q});
      }
    }
  };
  if (family == NnFamily::ShallowWide || family == NnFamily::Unrestricted) {
    add({1}, {16, 32, 64, 256, 512});
  }
  if (family == NnFamily::NarrowDeep || family == NnFamily::Unrestricted) {
    add({2, 3, 4, 5}, {16, 32, 64});
  }
  return out;
}

PrePhaseTable make_pre_phase_table(NnFamily family, const std::vector<MlpArch>& configs,
                                   const Vec& mean_mse) {
  if (configs.size() < 2) {
    throw DesignError("nn pre-phase: need at least two configurations");
  }
  PrePhaseTable table;
  table.family = family;
  table.configs = configs;
  table.mean_mse = mean_mse;

  const int k = static_cast<int>(configs.size());
  const double mu = mean_mse.mean();
  double ss = 0.0;
  for (int i = 0; i < k; ++i) ss += (mean_mse[i] - mu) * (mean_mse[i] - mu);
  const double sd = std::sqrt(ss / (k - 1));

  table.z_mse.resize(k);
  table.p_chosen.resize(k);
  for (int i = 0; i < k; ++i) {
    table.z_mse[i] = sd > 0.0 ? (mean_mse[i] - mu) / sd : 0.0;
    table.p_chosen[i] = 1.0 - normal_cdf(table.z_mse[i]);
  }
  table.p_chosen /= table.p_chosen.sum();
  return table;
}

namespace {

struct FoldView {
  Mat X_train;
  Vec y_train;
  Mat X_test;
  Vec y_test;
};

FoldView slice_fold(const Mat& X, const Vec& y, const std::vector<int>& fold, int f) {
  std::vector<int> train, test;
  for (int i = 0; i < static_cast<int>(fold.size()); ++i) {
    (fold[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
  }
  FoldView v;
  v.X_train.resize(train.size(), X.cols());
  v.y_train.resize(train.size());
  for (std::size_t r = 0; r < train.size(); ++r) {
    v.X_train.row(r) = X.row(train[r]);
    v.y_train[r] = y[train[r]];
  }
  v.X_test.resize(test.size(), X.cols());
  v.y_test.resize(test.size());
  for (std::size_t r = 0; r < test.size(); ++r) {
    v.X_test.row(r) = X.row(test[r]);
    v.y_test[r] = y[test[r]];
  }
  return v;
}

}  // namespace

PrePhaseTable nn_pre_phase(const std::vector<SimulatedDataset>& datasets,
                           NnFamily family, std::uint64_t master_seed, int workers) {
  const std::vector<MlpArch> configs = nn_search_space(family);
  const int n_cfg = static_cast<int>(configs.size());
  const int n_ds = static_cast<int>(datasets.size());
  const int folds = 5;

  // One task per (dataset, fold); each task scores every configuration on
  // that held-out fold. Slot-indexed writes keep the result identical for
  // any worker count.
  const int total = n_ds * folds;
  std::vector<Vec> fold_mse(static_cast<std::size_t>(total));

  parallel_for(total, workers, [&](int task) {
    const int d = task / folds;
    const int f = task % folds;
    const SimulatedDataset& ds = datasets[static_cast<std::size_t>(d)];
    Substream fold_stream(master_seed, static_cast<std::uint64_t>(d), Purpose::Cv,
                          fnv1a("nn_prephase"));
    const std::vector<int> fold = kfold_split(ds.n, folds, fold_stream);
    const FoldView v = slice_fold(ds.Z, ds.x1, fold, f);

    Vec mses(n_cfg);
    for (int c = 0; c < n_cfg; ++c) {
      const std::uint64_t salt =
          fnv1a(configs[static_cast<std::size_t>(c)].label()) + static_cast<std::uint64_t>(f);
      Substream init(master_seed, static_cast<std::uint64_t>(d), Purpose::NnInit, salt);
      Substream shuf(master_seed, static_cast<std::uint64_t>(d), Purpose::NnShuffle, salt);
      const Mlp net = Mlp::train(v.y_train, v.X_train, configs[static_cast<std::size_t>(c)],
                                 init, shuf);
      const Vec pred = net.predict(v.X_test);
      mses[c] = (pred - v.y_test).squaredNorm() / static_cast<double>(v.y_test.size());
    }
    fold_mse[static_cast<std::size_t>(task)] = std::move(mses);
  });

  Vec mean_mse = Vec::Zero(n_cfg);
  for (const Vec& m : fold_mse) mean_mse += m;
  mean_mse /= static_cast<double>(total);
  return make_pre_phase_table(family, configs, mean_mse);
}

namespace {

int draw_categorical(const Vec& p, double u) {
  double cum = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    cum += p[i];
    if (u < cum) return i;
  }
  return static_cast<int>(p.size()) - 1;
}

}  // namespace

FirstStageFit nn_select_and_fit(const SimulatedDataset& ds, const PrePhaseTable& table,
                                Substream& pick_stream, Substream& cv_stream,
                                Substream& init_stream, Substream& shuffle_stream) {
  const int n_cfg = static_cast<int>(table.configs.size());
  if (n_cfg < 2) throw DesignError("nn_select_and_fit: need at least two configurations");

  // Two candidates without replacement, weighted by p_chosen.
  const int c1 = draw_categorical(table.p_chosen, pick_stream.uniform());
  Vec rest = table.p_chosen;
  rest[c1] = 0.0;
  rest /= rest.sum();
  const int c2 = draw_categorical(rest, pick_stream.uniform());

  const int folds = 5;
  const std::vector<int> fold = kfold_split(ds.n, folds, cv_stream);
  double cv_mse[2] = {0.0, 0.0};
  const int cand[2] = {c1, c2};
  for (int f = 0; f < folds; ++f) {
    const FoldView v = slice_fold(ds.Z, ds.x1, fold, f);
    for (int which = 0; which < 2; ++which) {
      const MlpArch& arch = table.configs[static_cast<std::size_t>(cand[which])];
      Substream init = init_stream.child(fnv1a(arch.label()) + static_cast<std::uint64_t>(f));
      Substream shuf =
          shuffle_stream.child(fnv1a(arch.label()) + static_cast<std::uint64_t>(f));
      const Mlp net = Mlp::train(v.y_train, v.X_train, arch, init, shuf);
      const Vec pred = net.predict(v.X_test);
      cv_mse[which] += (pred - v.y_test).squaredNorm();
    }
  }
  cv_mse[0] /= static_cast<double>(ds.n);
  cv_mse[1] /= static_cast<double>(ds.n);

  int winner;
  if (cv_mse[0] != cv_mse[1]) {
    winner = cv_mse[0] < cv_mse[1] ? 0 : 1;
  } else {
    const int p0 = table.configs[static_cast<std::size_t>(c1)].param_count(
        static_cast<int>(ds.Z.cols()));
    const int p1 = table.configs[static_cast<std::size_t>(c2)].param_count(
        static_cast<int>(ds.Z.cols()));
    winner = p0 <= p1 ? 0 : 1;
  }
  const MlpArch& arch = table.configs[static_cast<std::size_t>(cand[winner])];

  Substream init = init_stream.child(fnv1a(arch.label()));
  Substream shuf = shuffle_stream.child(fnv1a(arch.label()));
  const Mlp net = Mlp::train(ds.x1, ds.Z, arch, init, shuf);

  FirstStageFit fs = make_first_stage("nn", net.predict(ds.Z), ds.x1);
  fs.mse_out = cv_mse[winner];
  fs.hyper = {{"depth", std::to_string(arch.depth)},
              {"width", std::to_string(arch.width)},
              {"dropout", format_double(arch.dropout)},
              {"candidate_a", table.configs[static_cast<std::size_t>(c1)].label()},
              {"candidate_b", table.configs[static_cast<std::size_t>(c2)].label()}};
  return fs;
}

EstimateRecord nn_2sls(const SimulatedDataset& ds, const PrePhaseTable& table,
                       Substream& pick_stream, Substream& cv_stream,
                       Substream& init_stream, Substream& shuffle_stream) {
  FirstStageFit fs =
      nn_select_and_fit(ds, table, pick_stream, cv_stream, init_stream, shuffle_stream);
  const OlsFit second = fit_ols(ds.y, fs.xhat);
  EstimateRecord rec;
  rec.beta_hat = second.coef[1];
  rec.intercept_hat = second.coef[0];
  rec.estimator_tag = "nn";
  rec.first_stage = std::move(fs);
  rec.plug_in_second_stage = true;
  return rec;
}

}  // namespace ml2sls
