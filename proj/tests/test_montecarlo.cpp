#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ml2sls/montecarlo.hpp"

using namespace ml2sls;

namespace {
CampaignConfig small_config() {
  CampaignConfig cfg;
  cfg.dgp = DgpKind::Low;
  cfg.n = 400;
  cfg.iterations = 6;
  cfg.master_seed = 90;
  cfg.estimators = {"oracle", "naive", "2sls", "ssiv", "liml", "jive", "pca"};
  cfg.workers = 2;
  return cfg;
}
}  // namespace

TEST_CASE("run_iteration is deterministic and shares one dataset draw") {
  const CampaignConfig cfg = small_config();
  const CampaignDesign design = build_design(cfg);
  const auto a = run_iteration(cfg, design, nullptr, 3);
  const auto b = run_iteration(cfg, design, nullptr, 3);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].beta_hat == b[i].beta_hat);
    CHECK(a[i].dataset_checksum == b[i].dataset_checksum);
    CHECK(a[i].status == b[i].status);
  }
  for (std::size_t i = 1; i < a.size(); ++i) {
    CHECK(a[i].dataset_checksum == a[0].dataset_checksum);
  }
}

TEST_CASE("a single-estimator iteration yields one finite record") {
  CampaignConfig cfg = small_config();
  cfg.estimators = {"oracle"};
  const CampaignDesign design = build_design(cfg);
  const auto recs = run_iteration(cfg, design, nullptr, 0);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].ok());
  CHECK(std::isfinite(recs[0].beta_hat));
}

TEST_CASE("worker count does not change results") {
  CampaignConfig cfg1 = small_config();
  cfg1.workers = 1;
  CampaignConfig cfg2 = small_config();
  cfg2.workers = 2;
  const CampaignResult r1 = run_campaign(cfg1);
  const CampaignResult r2 = run_campaign(cfg2);
  REQUIRE(r1.records.size() == r2.records.size());
  for (std::size_t i = 0; i < r1.records.size(); ++i) {
    CHECK(r1.records[i].beta_hat == r2.records[i].beta_hat);
    CHECK(r1.records[i].estimator == r2.records[i].estimator);
  }
  REQUIRE(r1.stats.estimators.size() == r2.stats.estimators.size());
  for (std::size_t i = 0; i < r1.stats.estimators.size(); ++i) {
    CHECK(r1.stats.estimators[i].mean == r2.stats.estimators[i].mean);
    CHECK(r1.stats.estimators[i].sd == r2.stats.estimators[i].sd);
    CHECK(r1.stats.estimators[i].hist_counts == r2.stats.estimators[i].hist_counts);
  }
}

TEST_CASE("enabling an estimator never perturbs the others") {
  CampaignConfig base = small_config();
  base.estimators = {"2sls"};
  CampaignConfig more = small_config();
  more.estimators = {"2sls", "ssiv", "pca"};
  const CampaignResult r1 = run_campaign(base);
  const CampaignResult r2 = run_campaign(more);
  for (const auto& rec : r1.records) {
    const auto match = std::find_if(r2.records.begin(), r2.records.end(),
                                    [&](const IterationRecord& other) {
                                      return other.iteration == rec.iteration &&
                                             other.estimator == rec.estimator;
                                    });
    REQUIRE(match != r2.records.end());
    CHECK(match->beta_hat == rec.beta_hat);
    CHECK(match->dataset_checksum == rec.dataset_checksum);
  }
}

TEST_CASE("aggregation is order-independent and merge-consistent") {
  const CampaignConfig cfg = small_config();
  const CampaignResult result = run_campaign(cfg);

  std::vector<IterationRecord> shuffled = result.records;
  std::reverse(shuffled.begin(), shuffled.end());
  const SummaryStats again = aggregate(shuffled, cfg);
  REQUIRE(again.estimators.size() == result.stats.estimators.size());
  for (std::size_t i = 0; i < again.estimators.size(); ++i) {
    CHECK(again.estimators[i].mean == result.stats.estimators[i].mean);
    CHECK(again.estimators[i].p2_5 == result.stats.estimators[i].p2_5);
  }

  // Partition by iteration parity and merge by concatenation.
  std::vector<IterationRecord> part_a, part_b;
  for (const auto& rec : result.records) {
    (rec.iteration % 2 == 0 ? part_a : part_b).push_back(rec);
  }
  std::vector<IterationRecord> merged = part_a;
  merged.insert(merged.end(), part_b.begin(), part_b.end());
  const SummaryStats merged_stats = aggregate(merged, cfg);
  for (std::size_t i = 0; i < merged_stats.estimators.size(); ++i) {
    CHECK(merged_stats.estimators[i].mean == result.stats.estimators[i].mean);
    CHECK(merged_stats.estimators[i].hist_counts ==
          result.stats.estimators[i].hist_counts);
  }
}

TEST_CASE("histogram counts sum to the number of successes") {
  const CampaignConfig cfg = small_config();
  const CampaignResult result = run_campaign(cfg);
  for (const auto& s : result.stats.estimators) {
    long total = 0;
    for (long c : s.hist_counts) total += c;
    CHECK(total == s.count);
    CHECK(s.count + s.failures == cfg.iterations);
    if (s.count > 1 && s.sd > 0.0) {
      CHECK(s.mean >= s.p2_5);
      CHECK(s.mean <= s.p97_5);
    }
  }
}

TEST_CASE("percentile interpolation") {
  std::vector<double> vals = {4.0, 1.0, 3.0, 2.0};
  CHECK(percentile(vals, 50.0) == doctest::Approx(2.5));
  CHECK(percentile(vals, 0.0) == 1.0);
  CHECK(percentile(vals, 100.0) == 4.0);
  CHECK(percentile(vals, 25.0) == doctest::Approx(1.75));
}

TEST_CASE("estimator failures become failed rows, not aborts") {
  CampaignConfig cfg = small_config();
  cfg.estimators = {"oracle", "nn"};  // nn without a pre-phase table fails
  const CampaignDesign design = build_design(cfg);
  const auto recs = run_iteration(cfg, design, nullptr, 0);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].ok());
  CHECK(!recs[1].ok());
  CHECK(recs[1].status.find("failed") == 0);
}

TEST_CASE("campaign with a cached nn table honors the iteration cap") {
  CampaignConfig cfg;
  cfg.dgp = DgpKind::Low;
  cfg.n = 150;
  cfg.iterations = 4;
  cfg.nn_iterations = 2;
  cfg.master_seed = 91;
  cfg.estimators = {"oracle", "nn"};
  cfg.workers = 2;

  std::vector<MlpArch> configs = {{0, 0, 0.0}, {1, 16, 0.1}};
  Vec mses(2);
  mses << 1.0, 1.1;
  const PrePhaseTable table =
      make_pre_phase_table(NnFamily::Unrestricted, configs, mses);

  const CampaignResult result = run_campaign(cfg, &table);
  int nn_rows = 0;
  for (const auto& rec : result.records) {
    if (rec.estimator == "nn") {
      CHECK(rec.iteration < 2);
      CHECK(rec.ok());
      ++nn_rows;
    }
  }
  CHECK(nn_rows == 2);
}

TEST_CASE("violation config flows through the campaign") {
  CampaignConfig cfg = small_config();
  cfg.estimators = {"2sls"};
  cfg.iterations = 3;
  cfg.violation = ViolationSpec{1, 1.0};
  const CampaignResult with = run_campaign(cfg);
  cfg.violation.reset();
  const CampaignResult without = run_campaign(cfg);
  for (std::size_t i = 0; i < with.records.size(); ++i) {
    CHECK(with.records[i].beta_hat != without.records[i].beta_hat);
  }
}

TEST_CASE("config rejects bad estimators and empty lists") {
  CampaignConfig cfg = small_config();
  cfg.estimators = {"2sls", "svm"};
  CHECK_THROWS_AS(run_campaign(cfg), ConfigError);
  cfg.estimators = {};
  CHECK_THROWS_AS(run_campaign(cfg), ConfigError);
}
