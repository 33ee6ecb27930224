#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ml2sls/common.hpp"
#include "ml2sls/decomposition.hpp"
#include "ml2sls/dgp.hpp"
#include "ml2sls/nn_select.hpp"

namespace ml2sls {

enum class DgpKind { Low, High1Shuffled, High2FromZ1, High3FromZ50 };

std::string dgp_name(DgpKind kind);
DgpKind dgp_from_name(const std::string& name);

struct ViolationSpec {
  int k = 1;
  double scale = 1.0;
};

/// Canonical estimator tags in reporting order.
const std::vector<std::string>& all_estimator_tags();
/// The default campaign set: everything except the neural first stage.
std::vector<std::string> default_estimators();

struct CampaignConfig {
  DgpKind dgp = DgpKind::Low;
  int n = 1000;
  int iterations = 1000;
  std::vector<std::string> estimators = default_estimators();
  std::uint64_t master_seed = 0;
  std::optional<ViolationSpec> violation;
  NnFamily nn_family = NnFamily::Unrestricted;
  int nn_iterations = 200;  // separate cap; nn_full lifts it
  bool nn_full = false;
  int workers = 0;  // 0 = hardware concurrency
  double mu2 = 180.0;
  double rho_eps = 0.6;
  bool literal_sigma_v = false;
  bool post_lasso_plug_in = false;
  double fuller_alpha = 1.0;
  bool ssiv_swap_and_average = true;
  double pca_cum_var = 0.90;
  int hist_bins = 150;
  double hist_lo = 0.5;
  double hist_hi = 2.0;
  bool timing = false;  // emit measured wall times (breaks byte-reproducibility)
};

/// Fixed per-campaign design state: instrument covariance (and its Cholesky
/// factor) plus the calibrated coefficient pattern for the high-complexity
/// cases. The shuffled ordering is drawn once per campaign.
struct CampaignDesign {
  Mat sigma;
  Mat chol_lower;
  CoefficientPattern pattern;
  HighComplexityParams params;
};

CampaignDesign build_design(const CampaignConfig& config);

SimulatedDataset draw_dataset(const CampaignConfig& config, const CampaignDesign& design,
                              int iteration);

struct IterationRecord {
  int iteration = 0;
  std::string estimator;
  double beta_hat = 0.0;
  BiasDecomposition decomp;
  bool has_decomp = false;
  bool plug_in_second_stage = false;
  double mse_in = 0.0;
  bool has_mse_in = false;
  double mse_out = 0.0;
  bool has_mse_out = false;
  std::string hyper;
  double wall_time = 0.0;
  std::string status = "ok";  // "ok" or "failed: <reason>"
  std::uint64_t dataset_checksum = 0;
  std::string seed_trail;
  double var_x = 0.0;  // Var(x1) of the draw (not serialized; used by checks)

  bool ok() const { return status == "ok"; }
};

struct EstimatorSummary {
  std::string tag;
  int count = 0;     // successful iterations
  int failures = 0;
  double mean = 0.0;
  double sd = 0.0;
  double p2_5 = 0.0;
  double p50 = 0.0;
  double p97_5 = 0.0;
  std::vector<long> hist_counts;
  double mean_component_a = 0.0;
  double mean_component_b = 0.0;
  double mean_var_xhat = 0.0;
  double mean_wedge = 0.0;
};

struct SummaryStats {
  double hist_lo = 0.5;
  double hist_hi = 2.0;
  int hist_bins = 150;
  std::vector<EstimatorSummary> estimators;
};

/// Percentile with linear interpolation between order statistics.
double percentile(std::vector<double> values, double q);

/// Order-independent aggregation: records are keyed by (iteration,
/// estimator) and reduced in that fixed order, so any partition of the
/// records merges back to the identical result.
SummaryStats aggregate(std::vector<IterationRecord> records, const CampaignConfig& config);

struct NnContext {
  PrePhaseTable table;
};

/// Runs every selected estimator on iteration i's dataset. Estimator
/// failures become failed rows; the iteration always completes.
std::vector<IterationRecord> run_iteration(const CampaignConfig& config,
                                           const CampaignDesign& design,
                                           const NnContext* nn, int iteration);

struct CampaignResult {
  std::vector<IterationRecord> records;
  SummaryStats stats;
  std::optional<PrePhaseTable> nn_table;
};

/// Builds the neural pre-phase table from the campaign's first 25 datasets
/// (125 folds). Only meaningful when the nn estimator is selected.
PrePhaseTable nn_pre_phase(const CampaignConfig& config);

CampaignResult run_campaign(const CampaignConfig& config,
                            const PrePhaseTable* cached_nn = nullptr);

/// Partition of neural-first-stage records by the cross-validated depth
/// choice: depth 0 (the direct linear map) versus depth >= 2. Depth-1
/// winners belong to neither group.
struct NnDepthSplit {
  int n_shallow = 0;
  int n_deep = 0;
  double mean_abs_err_shallow = 0.0;
  double mean_abs_err_deep = 0.0;
};

NnDepthSplit nn_depth_split(const std::vector<IterationRecord>& records,
                            double beta_true = 1.0);

}  // namespace ml2sls
