// Acceptance suite: one pass/fail line per criterion. Campaign sizes follow
// the benchmark definitions; ML2SLS_ACCEPT_SCALE > 1 divides the iteration
// counts for development runs (the banner flags such runs as non-binding).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ml2sls/classical.hpp"
#include "ml2sls/dgp.hpp"
#include "ml2sls/lasso.hpp"
#include "ml2sls/montecarlo.hpp"
#include "ml2sls/ols.hpp"
#include "ml2sls/report.hpp"

using namespace ml2sls;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double run_seconds(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const EstimatorSummary* find_summary(const SummaryStats& stats, const std::string& tag) {
  for (const auto& s : stats.estimators) {
    if (s.tag == tag) return &s;
  }
  return nullptr;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

int scale_iterations(int iters) {
  if (const char* env = std::getenv("ML2SLS_ACCEPT_SCALE")) {
    const int scale = std::atoi(env);
    if (scale > 1) return std::max(10, iters / scale);
  }
  return iters;
}

// ---- criterion 3: covariance grand sum and concentration constant --------

void criterion_3() {
  const auto t0 = std::chrono::steady_clock::now();
  const Mat sigma = toeplitz_sigma({7, 0.6});
  const double grand = sigma.sum();
  const double mu2 = concentration(Vec::Ones(7), sigma, 1.0, 1000);
  const double elapsed = run_seconds(t0);
  const bool pass = std::fabs(grand - 20.71) <= 0.005 && std::fabs(mu2 - 20710.0) <= 5.0 &&
                    elapsed < 1.0;
  report(3, pass,
         "grand sum " + fmt(grand) + ", concentration " + fmt(mu2) + ", " +
             fmt(elapsed) + "s");
}

// ---- criterion 9: closed-form cross-checks --------------------------------

void criterion_9() {
  bool pass = true;
  std::string detail;

  // JIVE leave-one-out shortcut vs brute force at n = 200.
  {
    Substream s(901, 0, Purpose::Dataset);
    const int n = 200;
    const Mat Z = sample_mv_normal(n, toeplitz_sigma({3, 0.6}), s);
    SimulatedDataset ds;
    ds.n = n;
    ds.Z = Z;
    ds.x_oracle = Z.rowwise().sum();
    Vec eps(n), eta(n);
    for (int i = 0; i < n; ++i) eps[i] = s.normal();
    for (int i = 0; i < n; ++i) eta[i] = s.uniform(-1, 1);
    ds.e_first = eps;
    ds.x1 = ds.x_oracle + eps;
    ds.u = (1.0 + eps.array() + eta.array()).matrix();
    ds.y = 1.0 + ds.x1.array() + ds.u.array();

    Vec loo(n);
    for (int i = 0; i < n; ++i) {
      Mat Zi(n - 1, 3);
      Vec xi(n - 1);
      int r = 0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        Zi.row(r) = Z.row(j);
        xi[r] = ds.x1[j];
        ++r;
      }
      const OlsFit f = fit_ols(xi, Zi);
      loo[i] = f.coef[0] + Z.row(i).dot(f.coef.tail(3));
    }
    const double brute = cov_n(loo, ds.y) / cov_n(loo, ds.x1);
    const double shortcut = fit_jive(ds, ds.Z).beta_hat;
    const double err = std::fabs(brute - shortcut) / (1.0 + std::fabs(brute));
    pass = pass && err <= 1e-8;
    detail += "jive loo err " + fmt(err * 1e10) + "e-10";
  }

  // Lasso vs soft-threshold closed form on an orthonormal design.
  {
    Substream s(902, 0, Purpose::Dataset);
    const int n = 256, p = 5;
    Mat G(n, p);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < p; ++j) G(i, j) = s.normal();
    }
    G.rowwise() -= G.colwise().mean();
    for (int j = 0; j < p; ++j) {
      for (int k = 0; k < j; ++k) G.col(j) -= G.col(k).dot(G.col(j)) * G.col(k);
      G.col(j) /= G.col(j).norm();
    }
    const Mat Z = G * std::sqrt(static_cast<double>(n));
    Vec x(n);
    for (int i = 0; i < n; ++i) {
      x[i] = 0.8 * Z(i, 0) - 0.3 * Z(i, 2) + 0.4 * s.normal();
    }
    const double lambda = 0.35 * lasso_lambda_max(x, Z);
    LassoConfig cfg;
    const LassoFit lf = lasso_fit_at(x, Z, lambda, cfg);
    const Vec xc = x.array() - x.mean();
    double max_err = 0.0;
    for (int j = 0; j < p; ++j) {
      const double rho = Z.col(j).dot(xc);
      double expect = 0.0;
      if (rho > lambda / 2) expect = (rho - lambda / 2) / n;
      if (rho < -lambda / 2) expect = (rho + lambda / 2) / n;
      max_err = std::max(max_err, std::fabs(lf.coef_std[j] - expect));
    }
    pass = pass && max_err <= 1e-8;
    detail += ", lasso soft-threshold err " + fmt(max_err * 1e10) + "e-10";
  }

  // LIML(alpha = 0) vs 2SLS in the just-identified case.
  {
    Substream s(903, 0, Purpose::Dataset);
    const SimulatedDataset ds = gen_low_complexity(700, s);
    const Mat z1 = ds.Z.col(0);
    const double liml = fit_liml_fuller(ds, z1, 0.0).beta_hat;
    const double tsls = fit_2sls(ds, z1).beta_hat;
    const double err = std::fabs(liml - tsls) / (1.0 + std::fabs(tsls));
    pass = pass && err <= 1e-8;
    detail += ", liml-vs-2sls err " + fmt(err * 1e10) + "e-10";
  }

  report(9, pass, detail);
}

// ---- criterion 10: byte-identical outputs ---------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void criterion_10(const fs::path& out_root) {
  CampaignConfig cfg;
  cfg.dgp = DgpKind::Low;
  cfg.n = 400;
  cfg.iterations = 40;
  cfg.master_seed = 777;
  cfg.workers = 1;

  const CampaignResult r1 = run_campaign(cfg);
  CampaignConfig cfg2 = cfg;
  cfg2.workers = 2;
  const CampaignResult r2 = run_campaign(cfg2);

  const OutputBundle b1 = write_bundle(cfg, r1, out_root / "det_a");
  const OutputBundle b2 = write_bundle(cfg2, r2, out_root / "det_b");

  const bool records_equal = slurp(b1.records_csv) == slurp(b2.records_csv);
  const bool summary_equal = slurp(b1.summary_md) == slurp(b2.summary_md);
  const bool svg_equal = slurp(b1.figures_dir / "density.svg") ==
                         slurp(b2.figures_dir / "density.svg");
  report(10, records_equal && summary_equal && svg_equal,
         std::string("byte-identical outputs across reruns and worker counts (records ") +
             (records_equal ? "ok" : "DIFF") + ", summary " +
             (summary_equal ? "ok" : "DIFF") + ", svg " + (svg_equal ? "ok" : "DIFF") +
             ")");
}

// ---- criteria 1, 2, 4: default low-complexity campaign --------------------

void criteria_low(const fs::path& out_root) {
  CampaignConfig cfg;
  cfg.dgp = DgpKind::Low;
  cfg.n = 1000;
  cfg.iterations = scale_iterations(1000);
  cfg.master_seed = 20240801;
  cfg.workers = 0;

  const auto t0 = std::chrono::steady_clock::now();
  const CampaignResult result = run_campaign(cfg);
  const double elapsed = run_seconds(t0);
  write_bundle(cfg, result, out_root / "low_campaign");

  // Criterion 1: wedge identity on every plug-in record.
  {
    int checked = 0;
    double worst = 0.0;
    for (const auto& rec : result.records) {
      if (!rec.ok() || !rec.plug_in_second_stage || !rec.has_decomp) continue;
      ++checked;
      worst = std::max(worst, std::fabs(rec.beta_hat - rec.decomp.beta_hat_implied) /
                                  (1.0 + std::fabs(rec.beta_hat)));
    }
    report(1, checked > 0 && worst <= 1e-8,
           "wedge identity on " + std::to_string(checked) + " plug-in records, worst rel err " +
               fmt(worst * 1e10) + "e-10");
  }

  // Criterion 2: orthogonality for linear stages, positivity for ML stages.
  {
    double worst_linear = 0.0;
    std::map<std::string, std::pair<int, int>> positive;  // tag -> (positive, total)
    for (const auto& rec : result.records) {
      if (!rec.ok() || !rec.has_decomp) continue;
      const std::string& tag = rec.estimator;
      if (tag == "2sls" || tag == "post_lasso" || tag == "pca" || tag == "ssiv" ||
          tag == "jive") {
        worst_linear = std::max(worst_linear, std::fabs(rec.decomp.cov_xhat_e) / rec.var_x);
      } else if (tag == "forest" || tag == "boost" || tag == "lasso") {
        auto& [pos, tot] = positive[tag];
        if (rec.decomp.cov_xhat_e > 0.0) ++pos;
        ++tot;
      }
    }
    bool ml_ok = positive.size() == 3;
    std::string ml_detail;
    for (const auto& [tag, counts] : positive) {
      const double frac = static_cast<double>(counts.first) / counts.second;
      ml_ok = ml_ok && frac >= 0.90;
      ml_detail += " " + tag + " " + fmt(100.0 * frac) + "%";
    }
    report(2, worst_linear <= 1e-10 && ml_ok,
           "linear-stage cov(xhat,e)/var(x) max " + fmt(worst_linear * 1e12) +
               "e-12; positive-cov share:" + ml_detail);

    // Monitored invariants (informational): the forest should generate the
    // largest prediction-residual covariance of any method, and nonlinear
    // stages should never inflate Var(xhat) above Var(x).
    std::map<std::string, double> mean_cov;
    std::map<std::string, int> counts;
    int var_violations = 0;
    for (const auto& rec : result.records) {
      if (!rec.ok() || !rec.has_decomp) continue;
      mean_cov[rec.estimator] += rec.decomp.cov_xhat_e;
      counts[rec.estimator] += 1;
      if ((rec.estimator == "forest" || rec.estimator == "boost" ||
           rec.estimator == "lasso") &&
          rec.decomp.var_xhat > rec.var_x) {
        ++var_violations;
      }
    }
    std::string cov_line = "INFO mean cov(xhat,e) by estimator:";
    double forest_cov = 0.0, best_other = -1e300;
    for (auto& [tag, total] : mean_cov) {
      total /= counts[tag];
      cov_line += " " + tag + " " + fmt(total);
      if (tag == "forest") {
        forest_cov = total;
      } else {
        best_other = std::max(best_other, total);
      }
    }
    std::printf("%s\n", cov_line.c_str());
    std::printf("INFO forest dominates cov(xhat,e): %s; Var(xhat)>Var(x) violations: %d\n",
                forest_cov > best_other ? "yes" : "NO", var_violations);
  }

  // Criterion 4: campaign means.
  {
    const auto* oracle = find_summary(result.stats, "oracle");
    const auto* naive = find_summary(result.stats, "naive");
    const auto* tsls = find_summary(result.stats, "2sls");
    const auto* post_lasso = find_summary(result.stats, "post_lasso");
    const auto* pca = find_summary(result.stats, "pca");
    const auto* forest = find_summary(result.stats, "forest");
    bool pass = oracle && naive && tsls && post_lasso && pca && forest;
    std::string detail;
    if (pass) {
      pass = pass && oracle->mean >= 0.99 && oracle->mean <= 1.01;
      pass = pass && naive->mean >= 1.036 && naive->mean <= 1.056;
      pass = pass && tsls->mean >= 0.98 && tsls->mean <= 1.02;
      pass = pass && post_lasso->mean >= 0.98 && post_lasso->mean <= 1.02;
      pass = pass && pca->mean >= 0.98 && pca->mean <= 1.02;
      pass = pass && std::fabs(forest->mean - 1.0) > 0.046;
      detail = "oracle " + fmt(oracle->mean) + ", naive " + fmt(naive->mean) + ", 2sls " +
               fmt(tsls->mean) + ", post_lasso " + fmt(post_lasso->mean) + ", pca " +
               fmt(pca->mean) + ", forest " + fmt(forest->mean) + " (" + fmt(elapsed) +
               "s)";
    } else {
      detail = "missing estimator summaries";
    }
    report(4, pass, detail);
  }
}

// ---- criterion 7: interaction-order sweep ----------------------------------

void criterion_7(const fs::path& out_root) {
  const std::vector<std::string> linear = {"2sls", "liml", "ssiv", "jive"};
  std::map<std::string, std::map<int, std::pair<double, double>>> table;  // tag -> k -> (mean, sd)
  std::vector<SweepPoint> points;

  for (int k = 1; k <= 5; ++k) {
    CampaignConfig cfg;
    cfg.dgp = DgpKind::Low;
    cfg.n = 1000;
    cfg.iterations = scale_iterations(1000);
    cfg.master_seed = 20240807;
    cfg.estimators = linear;
    cfg.violation = ViolationSpec{k, 1.0};
    const CampaignResult result = run_campaign(cfg);
    for (const auto& s : result.stats.estimators) {
      table[s.tag][k] = {s.mean, s.sd};
      points.push_back({s.tag, k, s.mean, s.p2_5, s.p97_5});
    }
  }
  fs::create_directories(out_root / "sweep");
  write_sweep_csv(points, out_root / "sweep" / "sweep.csv");
  write_sweep_svg(points, out_root / "sweep" / "sweep.svg");

  bool pass = true;
  std::string detail;
  for (const auto& tag : linear) {
    const auto& per_k = table[tag];
    const double mean_k1 = per_k.at(1).first;
    const double sd_k2 = per_k.at(2).second;
    const bool biased_at_1 = std::fabs(mean_k1 - 1.0) > 5.0 * sd_k2;
    bool recovered = true;
    for (int k = 2; k <= 5; ++k) {
      const double mean_k = per_k.at(k).first;
      recovered = recovered && mean_k >= 0.98 && mean_k <= 1.02;
    }
    pass = pass && biased_at_1 && recovered;
    detail += tag + " k1=" + fmt(mean_k1) + (biased_at_1 ? "" : "<5sd=" + fmt(5.0 * sd_k2));
    for (int k = 2; k <= 5; ++k) detail += " k" + std::to_string(k) + "=" + fmt(per_k.at(k).first);
    detail += "; ";
  }
  report(7, pass, detail);
}

// ---- criteria 5, 6: high-complexity campaigns ------------------------------

void criteria_high(const fs::path& out_root) {
  struct SubcaseOutcome {
    bool pass_5 = false;
    double frac_lasso_lower = 0.0;
  };
  std::map<std::string, SubcaseOutcome> outcomes;
  bool pass5 = true;
  std::string detail5;
  bool pass6 = true;
  std::string detail6;

  for (const DgpKind kind :
       {DgpKind::High1Shuffled, DgpKind::High2FromZ1, DgpKind::High3FromZ50}) {
    CampaignConfig cfg;
    cfg.dgp = kind;
    cfg.n = 1000;
    cfg.iterations = scale_iterations(1000);
    cfg.master_seed = 20240811;
    cfg.estimators = {"oracle", "naive", "2sls", "liml", "jive", "lasso", "forest"};

    const auto t0 = std::chrono::steady_clock::now();
    const CampaignResult result = run_campaign(cfg);
    const double elapsed = run_seconds(t0);
    write_bundle(cfg, result, out_root / ("campaign_" + dgp_name(kind)));

    const auto* oracle = find_summary(result.stats, "oracle");
    const auto* naive = find_summary(result.stats, "naive");
    const auto* tsls = find_summary(result.stats, "2sls");
    const auto* liml = find_summary(result.stats, "liml");
    const auto* jive = find_summary(result.stats, "jive");
    const auto* forest = find_summary(result.stats, "forest");

    const double b_oracle = std::fabs(oracle->mean - 1.0);
    const double b_liml = std::fabs(liml->mean - 1.0);
    const double b_jive = std::fabs(jive->mean - 1.0);
    const double b_2sls = std::fabs(tsls->mean - 1.0);
    const double b_naive = std::fabs(naive->mean - 1.0);
    const double b_forest = std::fabs(forest->mean - 1.0);

    bool ok = b_liml <= 0.01 && b_jive <= 0.01;
    ok = ok && tsls->mean > 1.0;
    ok = ok && b_forest > b_naive;
    // Ordering of bias magnitudes.
    ok = ok && b_oracle < b_2sls && b_liml < b_2sls && b_jive < b_2sls;
    ok = ok && b_2sls < b_naive && b_naive < b_forest;
    pass5 = pass5 && ok;
    detail5 += dgp_name(kind) + "[liml " + fmt(liml->mean) + ", jive " + fmt(jive->mean) +
               ", 2sls " + fmt(tsls->mean) + ", naive " + fmt(naive->mean) + ", forest " +
               fmt(forest->mean) + ", " + fmt(elapsed) + "s] ";

    if (kind == DgpKind::High2FromZ1 || kind == DgpKind::High3FromZ50) {
      std::map<int, double> var_2sls;
      int lower = 0, total = 0;
      for (const auto& rec : result.records) {
        if (rec.ok() && rec.estimator == "2sls" && rec.has_decomp) {
          var_2sls[rec.iteration] = rec.decomp.var_xhat;
        }
      }
      for (const auto& rec : result.records) {
        if (rec.ok() && rec.estimator == "lasso" && rec.has_decomp &&
            var_2sls.count(rec.iteration)) {
          ++total;
          if (rec.decomp.var_xhat < var_2sls[rec.iteration]) ++lower;
        }
      }
      const double frac = total > 0 ? static_cast<double>(lower) / total : 0.0;
      pass6 = pass6 && frac > 0.5;
      detail6 += dgp_name(kind) + " " + fmt(100.0 * frac) + "%; ";
    }
  }

  report(5, pass5, detail5);
  report(6, pass6, detail6 + "(share of iterations with Var(xhat_lasso) < Var(xhat_2sls))");

  // Comparison run under the literal first-stage variance rule (recorded,
  // not gated): concentration collapses to n and the instruments dominate x.
  {
    CampaignConfig cfg;
    cfg.dgp = DgpKind::High2FromZ1;
    cfg.n = 1000;
    cfg.iterations = scale_iterations(200);
    cfg.master_seed = 20240811;
    cfg.literal_sigma_v = true;
    cfg.estimators = {"oracle", "naive", "2sls", "liml", "jive"};
    const CampaignResult result = run_campaign(cfg);
    write_bundle(cfg, result, out_root / "campaign_high2_literal_sigma_v");
    std::string line = "literal sigma_v^2 comparison (high2):";
    for (const auto& s : result.stats.estimators) {
      line += " " + s.tag + " " + fmt(s.mean);
    }
    std::printf("INFO %s\n", line.c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  fs::path out_root = fs::temp_directory_path() / "ml2sls_acceptance";
  if (argc > 1) out_root = argv[1];
  fs::create_directories(out_root);

  if (std::getenv("ML2SLS_ACCEPT_SCALE") != nullptr) {
    std::printf("NOTE: ML2SLS_ACCEPT_SCALE is set; iteration counts are reduced and "
                "this run is not an acceptance result.\n");
  }
  std::printf("acceptance outputs: %s\n", out_root.string().c_str());

  criterion_3();
  criterion_9();
  criterion_10(out_root);
  criteria_low(out_root);
  criterion_7(out_root);
  criteria_high(out_root);
  std::printf("NOTE criterion 8 (neural bimodality probe) is excluded from the default "
              "suite; run `acceptance_nn` or `ml2sls sweep --nn`.\n");

  if (g_failures > 0) {
    std::printf("%d criterion check(s) failed\n", g_failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
