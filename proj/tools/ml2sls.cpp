// Command-line front end: run Monte Carlo campaigns, interaction-order
// sweeps, decomposition tables, and the neural pre-phase cache.
//
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ml2sls/config.hpp"
#include "ml2sls/montecarlo.hpp"
#include "ml2sls/report.hpp"

using namespace ml2sls;
namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::string config_file;
  std::string out_dir;
  KvMap flags;
};

/// Registers one CLI option per configuration key; only values the user
/// actually passed end up in the flag map (so they override the file).
void add_config_options(CLI::App* cmd, CommonFlags& common) {
  cmd->add_option("--config", common.config_file, "key=value configuration file");
  cmd->add_option("--out", common.out_dir,
                  "output directory (default $ML2SLS_OUTDIR or ./ml2sls-out)");
  static const std::vector<std::pair<std::string, std::string>> keys = {
      {"dgp", "data-generating process: low, high1, high2, high3"},
      {"seed", "master seed"},
      {"n", "observations per iteration"},
      {"iterations", "Monte Carlo iterations"},
      {"estimators", "comma-separated estimator tags"},
      {"violation_k", "interaction order added to the structural error"},
      {"violation_scale", "interaction term scale"},
      {"nn_family", "neural search family: shallow, narrow, unrestricted"},
      {"nn_iterations", "iteration cap for the neural estimator"},
      {"nn_full", "lift the neural iteration cap (boolean)"},
      {"workers", "worker threads (0 = hardware)"},
      {"mu2", "target concentration parameter"},
      {"rho_eps", "correlation of the structural and first-stage errors"},
      {"literal_sigma_v", "use the literal first-stage variance rule (boolean)"},
      {"post_lasso_plug_in", "post-lasso uses the plug-in lambda (boolean)"},
      {"fuller_alpha", "Fuller constant"},
      {"ssiv_swap_and_average", "average the swapped split halves (boolean)"},
      {"pca_cum_var", "explained-variance threshold for PCA"},
      {"hist_bins", "histogram bins"},
      {"hist_lo", "histogram lower edge"},
      {"hist_hi", "histogram upper edge"},
      {"timing", "record measured wall times (breaks byte reproducibility)"},
  };
  for (const auto& [key, help] : keys) {
    std::string flag = "--" + key;
    for (char& c : flag) {
      if (c == '_') c = '-';
    }
    cmd->add_option_function<std::string>(
        flag, [&common, key = key](const std::string& v) { common.flags[key] = v; }, help);
  }
}

fs::path resolve_out_dir(const CommonFlags& common, const std::string& fallback) {
  if (!common.out_dir.empty()) return common.out_dir;
  if (const char* env = std::getenv("ML2SLS_OUTDIR")) return fs::path(env) / fallback;
  return fs::path("ml2sls-out") / fallback;
}

CampaignConfig make_config(const CommonFlags& common) {
  KvMap file_kv;
  if (!common.config_file.empty()) file_kv = read_kv_file(common.config_file);
  std::vector<std::string> log;
  const CampaignConfig cfg = build_campaign_config(file_kv, common.flags, &log);
  for (const auto& line : log) std::fprintf(stderr, "note: %s\n", line.c_str());
  return cfg;
}

void dump_dataset_csv(const CampaignConfig& cfg, const fs::path& path) {
  const CampaignDesign design = build_design(cfg);
  const SimulatedDataset ds = draw_dataset(cfg, design, 0);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "y,x1";
  for (int j = 1; j <= ds.Z.cols(); ++j) out << ",z" << j;
  out << ",u,x_oracle\n";
  for (int i = 0; i < ds.n; ++i) {
    out << format_double(ds.y[i]) << ',' << format_double(ds.x1[i]);
    for (int j = 0; j < ds.Z.cols(); ++j) out << ',' << format_double(ds.Z(i, j));
    out << ',' << format_double(ds.u[i]) << ',' << format_double(ds.x_oracle[i]) << '\n';
  }
}

void write_prephase_csv(const PrePhaseTable& table, const CampaignConfig& cfg,
                        const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# family=" << family_name(table.family) << " dgp=" << dgp_name(cfg.dgp)
      << " seed=" << cfg.master_seed << " n=" << cfg.n << "\n";
  out << "label,depth,width,dropout,mean_mse,z_mse,p_chosen\n";
  for (std::size_t i = 0; i < table.configs.size(); ++i) {
    const MlpArch& a = table.configs[i];
    out << a.label() << ',' << a.depth << ',' << a.width << ',' << format_double(a.dropout)
        << ',' << format_double(table.mean_mse[static_cast<int>(i)]) << ','
        << format_double(table.z_mse[static_cast<int>(i)]) << ','
        << format_double(table.p_chosen[static_cast<int>(i)]) << '\n';
  }
}

std::optional<PrePhaseTable> load_prephase_csv(const fs::path& path,
                                               const CampaignConfig& cfg) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::string header;
  std::getline(in, header);
  const std::string expect = "# family=" + family_name(cfg.nn_family) +
                             " dgp=" + dgp_name(cfg.dgp) +
                             " seed=" + std::to_string(cfg.master_seed) +
                             " n=" + std::to_string(cfg.n);
  if (header != expect) {
    throw ConfigError("pre-phase cache " + path.string() +
                      " does not match this campaign (" + header + " vs " + expect + ")");
  }
  std::string line;
  std::getline(in, line);  // column header
  std::vector<MlpArch> configs;
  std::vector<double> mses;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    MlpArch arch;
    arch.depth = std::stoi(cells[1]);
    arch.width = std::stoi(cells[2]);
    arch.dropout = std::stod(cells[3]);
    configs.push_back(arch);
    mses.push_back(std::stod(cells[4]));
  }
  Vec mean_mse(static_cast<int>(mses.size()));
  for (std::size_t i = 0; i < mses.size(); ++i) mean_mse[static_cast<int>(i)] = mses[i];
  return make_pre_phase_table(cfg.nn_family, configs, mean_mse);
}

int cmd_run(const CommonFlags& common, const std::string& dump_path,
            const std::string& prephase_path) {
  CampaignConfig cfg = make_config(common);
  const fs::path out = resolve_out_dir(common, "run");
  fs::create_directories(out);

  if (!dump_path.empty()) dump_dataset_csv(cfg, dump_path);

  std::optional<PrePhaseTable> cached;
  const bool wants_nn = std::find(cfg.estimators.begin(), cfg.estimators.end(), "nn") !=
                        cfg.estimators.end();
  if (wants_nn && !prephase_path.empty()) cached = load_prephase_csv(prephase_path, cfg);

  const CampaignResult result = run_campaign(cfg, cached ? &*cached : nullptr);
  const OutputBundle bundle = write_bundle(cfg, result, out);
  std::printf("wrote %s\n", bundle.dir.string().c_str());
  for (const auto& s : result.stats.estimators) {
    std::printf("  %-11s mean %.4f sd %.4f [%.4f, %.4f] failures %d\n", s.tag.c_str(),
                s.mean, s.sd, s.p2_5, s.p97_5, s.failures);
  }
  return 0;
}

int cmd_sweep(const CommonFlags& common, int k_max, bool nn_probe) {
  CampaignConfig base = make_config(common);
  const fs::path out = resolve_out_dir(common, nn_probe ? "sweep-nn" : "sweep");
  fs::create_directories(out);

  if (nn_probe) {
    // Reduced-scale neural probe on the second high-complexity case: split
    // iterations by the depth the cross-validation chose.
    CampaignConfig cfg = base;
    if (common.flags.count("dgp") == 0) cfg.dgp = DgpKind::High2FromZ1;
    if (common.flags.count("iterations") == 0) cfg.iterations = 200;
    cfg.nn_iterations = std::max(cfg.nn_iterations, cfg.iterations);
    cfg.estimators = {"nn"};
    std::printf("building neural pre-phase table (25 datasets x 5 folds)...\n");
    std::fflush(stdout);
    const CampaignResult result = run_campaign(cfg);
    write_bundle(cfg, result, out);
    const NnDepthSplit split = nn_depth_split(result.records);
    std::printf("depth-0 winners: %d (mean |beta - 1| = %.4f)\n", split.n_shallow,
                split.mean_abs_err_shallow);
    std::printf("depth>=2 winners: %d (mean |beta - 1| = %.4f)\n", split.n_deep,
                split.mean_abs_err_deep);
    const bool pass = split.n_shallow > 0 && split.n_deep > 0 &&
                      split.mean_abs_err_shallow < split.mean_abs_err_deep;
    std::printf("%s: depth-0 winners sit closer to the true coefficient\n",
                pass ? "PASS" : "FAIL");
    return pass ? 0 : 3;
  }

  if (common.flags.count("estimators") == 0) {
    base.estimators = {"2sls", "liml", "ssiv", "jive", "post_lasso", "pca", "lasso"};
  }
  // The sweep follows the plug-in penalty convention unless told otherwise.
  if (common.flags.count("post_lasso_plug_in") == 0) base.post_lasso_plug_in = true;
  const double scale = base.violation ? base.violation->scale : 1.0;

  std::vector<SweepPoint> points;
  for (int k = 1; k <= k_max; ++k) {
    CampaignConfig cfg = base;
    cfg.violation = ViolationSpec{k, scale};
    const CampaignResult result = run_campaign(cfg);
    write_bundle(cfg, result, out / ("k" + std::to_string(k)));
    for (const auto& s : result.stats.estimators) {
      points.push_back({s.tag, k, s.mean, s.p2_5, s.p97_5});
      std::printf("k=%d %-11s mean %.4f [%.4f, %.4f]\n", k, s.tag.c_str(), s.mean, s.p2_5,
                  s.p97_5);
    }
  }
  write_sweep_csv(points, out / "sweep.csv");
  write_sweep_svg(points, out / "sweep.svg");
  std::printf("wrote %s\n", (out / "sweep.svg").string().c_str());
  return 0;
}

int cmd_decompose(const CommonFlags& common) {
  const CampaignConfig cfg = make_config(common);
  const fs::path out = resolve_out_dir(common, "decompose");
  fs::create_directories(out);
  const CampaignResult result = run_campaign(cfg);
  write_decomposition(result.records, out / "decomposition.csv");
  write_summary(result.stats, config_echo(cfg), out / "summary.md", out / "table2.csv");
  std::printf("wrote %s\n", (out / "decomposition.csv").string().c_str());
  return 0;
}

int cmd_nn_prephase(const CommonFlags& common) {
  const CampaignConfig cfg = make_config(common);
  const fs::path out = resolve_out_dir(common, "nn-prephase");
  fs::create_directories(out);
  const PrePhaseTable table = nn_pre_phase(cfg);
  const fs::path path = out / "prephase.csv";
  write_prephase_csv(table, cfg, path);
  std::printf("wrote %s (%zu configurations)\n", path.string().c_str(),
              table.configs.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo bench for machine-learning first stages in 2SLS"};
  app.require_subcommand(1);

  CommonFlags run_flags, sweep_flags, decomp_flags, prephase_flags;
  std::string dump_path, prephase_path;
  int k_max = 5;
  bool nn_probe = false;

  CLI::App* run = app.add_subcommand("run", "run one campaign and write the bundle");
  add_config_options(run, run_flags);
  run->add_option("--dump-dataset", dump_path, "write iteration 0's dataset as CSV");
  run->add_option("--nn-prephase-file", prephase_path,
                  "load a cached neural pre-phase table");

  CLI::App* sweep = app.add_subcommand(
      "sweep", "interaction-order sweep k=1..5 (or the neural probe with --nn)");
  add_config_options(sweep, sweep_flags);
  sweep->add_option("--k-max", k_max, "largest interaction order");
  sweep->add_flag("--nn", nn_probe, "run the neural depth-choice probe instead");

  CLI::App* decomp =
      app.add_subcommand("decompose", "run a campaign and write the decomposition table");
  add_config_options(decomp, decomp_flags);

  CLI::App* prephase =
      app.add_subcommand("nn-prephase", "build and cache the neural pre-phase table");
  add_config_options(prephase, prephase_flags);

  try {
    app.parse(argc, argv);
    if (run->parsed()) return cmd_run(run_flags, dump_path, prephase_path);
    if (sweep->parsed()) return cmd_sweep(sweep_flags, k_max, nn_probe);
    if (decomp->parsed()) return cmd_decompose(decomp_flags);
    if (prephase->parsed()) return cmd_nn_prephase(prephase_flags);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
