#include "ml2sls/montecarlo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include "ml2sls/lasso.hpp"
#include "ml2sls/parallel.hpp"
#include "ml2sls/pca.hpp"
#include "ml2sls/tree.hpp"

namespace ml2sls {

std::string dgp_name(DgpKind kind) {
  switch (kind) {
    case DgpKind::Low: return "low";
    case DgpKind::High1Shuffled: return "high1";
    case DgpKind::High2FromZ1: return "high2";
    case DgpKind::High3FromZ50: return "high3";
  }
  return "low";
}

DgpKind dgp_from_name(const std::string& name) {
  if (name == "low") return DgpKind::Low;
  if (name == "high1") return DgpKind::High1Shuffled;
  if (name == "high2") return DgpKind::High2FromZ1;
  if (name == "high3") return DgpKind::High3FromZ50;
  throw ConfigError("unknown dgp: " + name +
                    " (expected low, high1, high2, or high3)");
}

const std::vector<std::string>& all_estimator_tags() {
  static const std::vector<std::string> tags = {
      "oracle", "naive", "2sls", "ssiv", "liml", "jive",
      "post_lasso", "pca", "lasso", "forest", "boost", "nn"};
  return tags;
}

std::vector<std::string> default_estimators() {
  std::vector<std::string> tags = all_estimator_tags();
  tags.erase(std::remove(tags.begin(), tags.end(), "nn"), tags.end());
  return tags;
}

CampaignDesign build_design(const CampaignConfig& config) {
  CampaignDesign design;
  if (config.dgp == DgpKind::Low) {
    design.sigma = toeplitz_sigma(CovarianceSpec{7, 0.6});
  } else {
    design.sigma = toeplitz_sigma(CovarianceSpec{100, 0.6});
    Ordering ordering = Ordering::Shuffled;
    if (config.dgp == DgpKind::High2FromZ1) ordering = Ordering::DescendingFromFirst;
    if (config.dgp == DgpKind::High3FromZ50) ordering = Ordering::DescendingFromMiddle;
    // The shuffled ordering is drawn once and held fixed for the campaign.
    Substream shuffle_stream(config.master_seed, 0, Purpose::PatternShuffle);
    design.pattern = make_pattern(100, ordering, 0.7,
                                  ordering == Ordering::Shuffled ? &shuffle_stream : nullptr);
    design.params.mu2 = config.mu2;
    design.params.rho_eps = config.rho_eps;
    design.params.literal_sigma_v = config.literal_sigma_v;
    calibrate_pattern(design.params, design.pattern, design.sigma, config.n);
  }
  Eigen::LLT<Mat> llt(design.sigma);
  if (llt.info() != Eigen::Success) {
    throw DesignError("build_design: instrument covariance is not positive definite");
  }
  design.chol_lower = llt.matrixL();
  return design;
}

SimulatedDataset draw_dataset(const CampaignConfig& config, const CampaignDesign& design,
                              int iteration) {
  Substream stream(config.master_seed, static_cast<std::uint64_t>(iteration),
                   Purpose::Dataset);
  SimulatedDataset ds =
      config.dgp == DgpKind::Low
          ? gen_low_complexity(config.n, stream)
          : gen_high_complexity(config.n, design.params, design.pattern,
                                design.chol_lower, stream);
  if (config.violation) {
    ds = apply_interaction_violation(ds, config.violation->k, config.violation->scale);
  }
  return ds;
}

namespace {

std::string hyper_string(const FirstStageFit& fs) {
  std::string out;
  for (const auto& [key, value] : fs.hyper) {
    if (!out.empty()) out += ";";
    out += key + "=" + value;
  }
  return out;
}

std::string sanitize_reason(std::string msg) {
  for (char& c : msg) {
    if (c == ',' || c == '\n') c = ';';
  }
  return msg;
}

EstimateRecord dispatch_estimator(const std::string& tag, const CampaignConfig& config,
                                  const SimulatedDataset& ds, const NnContext* nn,
                                  int iteration) {
  const std::uint64_t seed = config.master_seed;
  const auto it = static_cast<std::uint64_t>(iteration);
  if (tag == "oracle") return fit_oracle(ds);
  if (tag == "naive") return fit_naive(ds);
  if (tag == "2sls") return fit_2sls(ds, ds.Z);
  if (tag == "liml") return fit_liml_fuller(ds, ds.Z, config.fuller_alpha);
  if (tag == "jive") return fit_jive(ds, ds.Z);
  if (tag == "ssiv") {
    Substream split(seed, it, Purpose::Split, fnv1a(tag));
    return fit_ssiv(ds, ds.Z, split, config.ssiv_swap_and_average);
  }
  if (tag == "post_lasso") {
    LassoConfig lc;
    lc.plug_in = config.post_lasso_plug_in;
    Substream cv(seed, it, Purpose::Cv, fnv1a(tag));
    return post_lasso_2sls(ds, lc, cv);
  }
  if (tag == "lasso") {
    LassoConfig lc;
    Substream cv(seed, it, Purpose::Cv, fnv1a(tag));
    return lasso_2sls(ds, lc, cv);
  }
  if (tag == "pca") {
    PcaKRule rule;
    rule.cum_var_threshold = config.pca_cum_var;
    return pca_2sls(ds, rule);
  }
  if (tag == "forest") {
    ForestGrid grid;
    Substream cv(seed, it, Purpose::Cv, fnv1a(tag));
    Substream fit(seed, it, Purpose::ForestFit);
    return forest_2sls(ds, grid, cv, fit);
  }
  if (tag == "boost") {
    BoostGrid grid;
    Substream cv(seed, it, Purpose::Cv, fnv1a(tag));
    return boost_2sls(ds, grid, cv);
  }
  if (tag == "nn") {
    if (nn == nullptr) throw DesignError("nn estimator requested without a pre-phase table");
    Substream pick(seed, it, Purpose::NnPick);
    Substream cv(seed, it, Purpose::Cv, fnv1a(tag));
    Substream init(seed, it, Purpose::NnInit);
    Substream shuffle(seed, it, Purpose::NnShuffle);
    return nn_2sls(ds, nn->table, pick, cv, init, shuffle);
  }
  throw ConfigError("unknown estimator: " + tag);
}

}  // namespace

std::vector<IterationRecord> run_iteration(const CampaignConfig& config,
                                           const CampaignDesign& design,
                                           const NnContext* nn, int iteration) {
  const SimulatedDataset ds = draw_dataset(config, design, iteration);
  const std::uint64_t checksum = ds.checksum();
  const double var_x = var_n(ds.x1);

  std::vector<IterationRecord> out;
  out.reserve(config.estimators.size());
  for (const std::string& tag : config.estimators) {
    if (tag == "nn" && !config.nn_full && iteration >= config.nn_iterations) continue;

    IterationRecord rec;
    rec.iteration = iteration;
    rec.estimator = tag;
    rec.dataset_checksum = checksum;
    rec.var_x = var_x;
    rec.seed_trail = "seed=" + std::to_string(config.master_seed) +
                     ";iter=" + std::to_string(iteration) + ";ds=" + std::to_string(checksum);

    const auto t0 = std::chrono::steady_clock::now();
    try {
      EstimateRecord est = dispatch_estimator(tag, config, ds, nn, iteration);
      rec.beta_hat = est.beta_hat;
      rec.plug_in_second_stage = est.plug_in_second_stage;
      if (!std::isfinite(est.beta_hat)) {
        throw FitError("non-finite estimate");
      }
      if (est.first_stage) {
        rec.decomp = decompose(est.first_stage->xhat, ds.x1, ds.u, ds.beta1);
        rec.has_decomp = true;
        rec.mse_in = est.first_stage->mse_in;
        rec.has_mse_in = true;
        if (est.first_stage->mse_out) {
          rec.mse_out = *est.first_stage->mse_out;
          rec.has_mse_out = true;
        }
        rec.hyper = hyper_string(*est.first_stage);
      }
    } catch (const std::exception& e) {
      rec.status = "failed: " + sanitize_reason(e.what());
    }
    if (config.timing) {
      rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    out.push_back(std::move(rec));
  }
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  if (lo + 1 >= values.size()) return values.back();
  const double frac = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

SummaryStats aggregate(std::vector<IterationRecord> records, const CampaignConfig& config) {
  std::stable_sort(records.begin(), records.end(),
                   [](const IterationRecord& a, const IterationRecord& b) {
                     if (a.iteration != b.iteration) return a.iteration < b.iteration;
                     return a.estimator < b.estimator;
                   });

  SummaryStats stats;
  stats.hist_lo = config.hist_lo;
  stats.hist_hi = config.hist_hi;
  stats.hist_bins = config.hist_bins;
  const double bin_w = (config.hist_hi - config.hist_lo) / config.hist_bins;

  for (const std::string& tag : all_estimator_tags()) {
    std::vector<double> betas;
    EstimatorSummary s;
    s.tag = tag;
    s.hist_counts.assign(static_cast<std::size_t>(config.hist_bins), 0);
    double sum_a = 0.0, sum_b = 0.0, sum_v = 0.0, sum_w = 0.0;
    int decomp_count = 0;
    bool seen = false;
    for (const IterationRecord& rec : records) {
      if (rec.estimator != tag) continue;
      seen = true;
      if (!rec.ok()) {
        ++s.failures;
        continue;
      }
      betas.push_back(rec.beta_hat);
      int bin = static_cast<int>(std::floor((rec.beta_hat - config.hist_lo) / bin_w));
      bin = std::clamp(bin, 0, config.hist_bins - 1);
      ++s.hist_counts[static_cast<std::size_t>(bin)];
      if (rec.has_decomp) {
        sum_a += rec.decomp.component_a;
        sum_b += rec.decomp.component_b;
        sum_v += rec.decomp.var_xhat;
        sum_w += rec.decomp.wedge;
        ++decomp_count;
      }
    }
    if (!seen) continue;
    s.count = static_cast<int>(betas.size());
    if (!betas.empty()) {
      double sum = 0.0;
      for (double b : betas) sum += b;
      s.mean = sum / static_cast<double>(betas.size());
      double ss = 0.0;
      for (double b : betas) ss += (b - s.mean) * (b - s.mean);
      s.sd = betas.size() > 1 ? std::sqrt(ss / static_cast<double>(betas.size() - 1)) : 0.0;
      s.p2_5 = percentile(betas, 2.5);
      s.p50 = percentile(betas, 50.0);
      s.p97_5 = percentile(betas, 97.5);
    }
    if (decomp_count > 0) {
      s.mean_component_a = sum_a / decomp_count;
      s.mean_component_b = sum_b / decomp_count;
      s.mean_var_xhat = sum_v / decomp_count;
      s.mean_wedge = sum_w / decomp_count;
    }
    stats.estimators.push_back(std::move(s));
  }
  return stats;
}

PrePhaseTable nn_pre_phase(const CampaignConfig& config) {
  const CampaignDesign design = build_design(config);
  const int n_pre = 25;
  std::vector<SimulatedDataset> datasets;
  datasets.reserve(n_pre);
  for (int i = 0; i < n_pre; ++i) datasets.push_back(draw_dataset(config, design, i));
  const int workers =
      config.workers > 0 ? config.workers : static_cast<int>(std::thread::hardware_concurrency());
  return nn_pre_phase(datasets, config.nn_family, config.master_seed, std::max(1, workers));
}

CampaignResult run_campaign(const CampaignConfig& config, const PrePhaseTable* cached_nn) {
  if (config.iterations < 1) throw ConfigError("iterations must be at least 1");
  if (config.estimators.empty()) throw ConfigError("estimator list is empty");
  for (const std::string& tag : config.estimators) {
    const auto& all = all_estimator_tags();
    if (std::find(all.begin(), all.end(), tag) == all.end()) {
      throw ConfigError("unknown estimator: " + tag);
    }
  }

  const CampaignDesign design = build_design(config);

  CampaignResult result;
  const bool wants_nn = std::find(config.estimators.begin(), config.estimators.end(),
                                  "nn") != config.estimators.end();
  NnContext nn_ctx;
  const NnContext* nn = nullptr;
  if (wants_nn) {
    nn_ctx.table = cached_nn != nullptr ? *cached_nn : nn_pre_phase(config);
    result.nn_table = nn_ctx.table;
    nn = &nn_ctx;
  }

  const int workers =
      config.workers > 0 ? config.workers : static_cast<int>(std::thread::hardware_concurrency());
  std::vector<std::vector<IterationRecord>> slots(
      static_cast<std::size_t>(config.iterations));
  parallel_for(config.iterations, std::max(1, workers), [&](int i) {
    slots[static_cast<std::size_t>(i)] = run_iteration(config, design, nn, i);
  });

  for (auto& slot : slots) {
    for (auto& rec : slot) result.records.push_back(std::move(rec));
  }
  result.stats = aggregate(result.records, config);
  return result;
}

NnDepthSplit nn_depth_split(const std::vector<IterationRecord>& records,
                            double beta_true) {
  NnDepthSplit split;
  double sum_shallow = 0.0, sum_deep = 0.0;
  for (const IterationRecord& rec : records) {
    if (rec.estimator != "nn" || !rec.ok()) continue;
    const auto pos = rec.hyper.find("depth=");
    if (pos == std::string::npos) continue;
    const int depth = std::stoi(rec.hyper.substr(pos + 6));
    const double err = std::fabs(rec.beta_hat - beta_true);
    if (depth == 0) {
      sum_shallow += err;
      ++split.n_shallow;
    } else if (depth >= 2) {
      sum_deep += err;
      ++split.n_deep;
    }
  }
  if (split.n_shallow > 0) split.mean_abs_err_shallow = sum_shallow / split.n_shallow;
  if (split.n_deep > 0) split.mean_abs_err_deep = sum_deep / split.n_deep;
  return split;
}

}  // namespace ml2sls
