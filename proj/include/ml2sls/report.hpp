#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ml2sls/config.hpp"
#include "ml2sls/montecarlo.hpp"

namespace ml2sls {

/// Per-estimator mean and percentile band at each interaction order.
struct SweepPoint {
  std::string estimator;
  int k = 0;
  double mean = 0.0;
  double p2_5 = 0.0;
  double p97_5 = 0.0;
};

/// records.csv columns, in order: iteration, estimator, beta_hat,
/// cov_xhat_e, cov_xhat_u, var_xhat, wedge, mse_in, mse_out, hyper,
/// wall_time, status. Missing numerics are empty fields. '.' decimal, no
/// locale.
void write_records(const std::vector<IterationRecord>& records,
                   const std::filesystem::path& path);

std::vector<IterationRecord> read_records(const std::filesystem::path& path);

void write_summary(const SummaryStats& stats, const KvMap& echo,
                   const std::filesystem::path& md_path,
                   const std::filesystem::path& table2_path);

void write_decomposition(const std::vector<IterationRecord>& records,
                         const std::filesystem::path& path);

/// Histogram polylines per estimator with a dashed vertical truth line at 1;
/// histogram counts are also exported as (bin_left, count) rows.
void write_density_svg(const SummaryStats& stats, const std::filesystem::path& path);
void write_histogram_csv(const SummaryStats& stats, const std::filesystem::path& path);

void write_sweep_csv(const std::vector<SweepPoint>& points,
                     const std::filesystem::path& path);
/// Mean line plus 2.5-97.5 percentile band per estimator against k.
void write_sweep_svg(const std::vector<SweepPoint>& points,
                     const std::filesystem::path& path);

struct OutputBundle {
  std::filesystem::path dir;
  std::filesystem::path records_csv;
  std::filesystem::path summary_md;
  std::filesystem::path table2_csv;
  std::filesystem::path decomposition_csv;
  std::filesystem::path figures_dir;
  std::filesystem::path manifest_json;
};

/// Writes the full bundle (records, summary, decomposition, figures) plus a
/// manifest carrying the config echo, seed, version, and per-file checksums.
OutputBundle write_bundle(const CampaignConfig& config, const CampaignResult& result,
                          const std::filesystem::path& dir);

std::uint64_t file_checksum(const std::filesystem::path& path);

extern const char* const kVersion;

}  // namespace ml2sls
