#include "ml2sls/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ml2sls {

const char* const kVersion = "0.1.0";

namespace {

namespace fs = std::filesystem;

/// Writes through a temp file and renames into place, so a failed write
/// never leaves a partial artifact behind.
class AtomicFile {
 public:
  explicit AtomicFile(const fs::path& target)
      : target_(target), tmp_(target.string() + ".tmp"), out_(tmp_, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot write to " + target.string());
  }
  ~AtomicFile() {
    if (!committed_) {
      out_.close();
      std::error_code ec;
      fs::remove(tmp_, ec);
    }
  }
  std::ofstream& stream() { return out_; }
  void commit() {
    out_.flush();
    if (!out_) {
      throw std::runtime_error("write failed for " + target_.string());
    }
    out_.close();
    fs::rename(tmp_, target_);
    committed_ = true;
  }

 private:
  fs::path target_;
  fs::path tmp_;
  std::ofstream out_;
  bool committed_ = false;
};

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

const std::vector<std::string>& palette() {
  static const std::vector<std::string> colors = {
      "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
      "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#ad494a"};
  return colors;
}

}  // namespace

void write_records(const std::vector<IterationRecord>& records, const fs::path& path) {
  AtomicFile file(path);
  auto& out = file.stream();
  out << "iteration,estimator,beta_hat,cov_xhat_e,cov_xhat_u,var_xhat,wedge,"
         "mse_in,mse_out,hyper,wall_time,status\n";
  for (const IterationRecord& r : records) {
    out << r.iteration << ',' << r.estimator << ',';
    if (r.ok()) out << format_double(r.beta_hat);
    out << ',';
    if (r.ok() && r.has_decomp) {
      out << format_double(r.decomp.cov_xhat_e) << ','
          << format_double(r.decomp.cov_xhat_u) << ','
          << format_double(r.decomp.var_xhat) << ',' << format_double(r.decomp.wedge);
    } else {
      out << ",,,";
    }
    out << ',';
    if (r.ok() && r.has_mse_in) out << format_double(r.mse_in);
    out << ',';
    if (r.ok() && r.has_mse_out) out << format_double(r.mse_out);
    out << ',' << r.hyper << ',' << format_double(r.wall_time) << ',' << r.status
        << '\n';
  }
  file.commit();
}

std::vector<IterationRecord> read_records(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty records file");
  std::vector<IterationRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    cells.resize(12);
    IterationRecord r;
    r.iteration = std::stoi(cells[0]);
    r.estimator = cells[1];
    r.status = cells[11];
    if (r.status == "ok") {
      r.beta_hat = std::stod(cells[2]);
      if (!cells[3].empty()) {
        r.has_decomp = true;
        r.decomp.cov_xhat_e = std::stod(cells[3]);
        r.decomp.cov_xhat_u = std::stod(cells[4]);
        r.decomp.var_xhat = std::stod(cells[5]);
        r.decomp.wedge = std::stod(cells[6]);
        r.decomp.component_a = r.decomp.cov_xhat_e;  // beta1 = 1 in both DGPs
        r.decomp.component_b = r.decomp.cov_xhat_u;
      }
      if (!cells[7].empty()) {
        r.has_mse_in = true;
        r.mse_in = std::stod(cells[7]);
      }
      if (!cells[8].empty()) {
        r.has_mse_out = true;
        r.mse_out = std::stod(cells[8]);
      }
    }
    r.hyper = cells[9];
    if (!cells[10].empty()) r.wall_time = std::stod(cells[10]);
    records.push_back(std::move(r));
  }
  return records;
}

void write_summary(const SummaryStats& stats, const KvMap& echo,
                   const fs::path& md_path, const fs::path& table2_path) {
  {
    AtomicFile file(md_path);
    auto& out = file.stream();
    out << "# Campaign summary\n\n";
    out << "Config:";
    for (const auto& [key, value] : echo) out << " " << key << "=" << value;
    out << "\n\n## Estimates\n\n";
    out << "| estimator | iterations | failures | mean | sd | p2.5 | p50 | p97.5 |\n";
    out << "|---|---|---|---|---|---|---|---|\n";
    for (const auto& s : stats.estimators) {
      out << "| " << s.tag << " | " << s.count << " | " << s.failures << " | "
          << format_double(s.mean) << " | " << format_double(s.sd) << " | "
          << format_double(s.p2_5) << " | " << format_double(s.p50) << " | "
          << format_double(s.p97_5) << " |\n";
    }
    out << "\n## Mean bias components\n\n";
    out << "| estimator | a | b | var_xhat | wedge |\n";
    out << "|---|---|---|---|---|\n";
    for (const auto& s : stats.estimators) {
      out << "| " << s.tag << " | " << format_double(s.mean_component_a) << " | "
          << format_double(s.mean_component_b) << " | "
          << format_double(s.mean_var_xhat) << " | " << format_double(s.mean_wedge)
          << " |\n";
    }
    file.commit();
  }
  {
    AtomicFile file(table2_path);
    auto& out = file.stream();
    out << "estimator,mean_component_a,mean_component_b,mean_var_xhat,mean_wedge\n";
    for (const auto& s : stats.estimators) {
      out << s.tag << ',' << format_double(s.mean_component_a) << ','
          << format_double(s.mean_component_b) << ',' << format_double(s.mean_var_xhat)
          << ',' << format_double(s.mean_wedge) << '\n';
    }
    file.commit();
  }
}

void write_decomposition(const std::vector<IterationRecord>& records,
                         const fs::path& path) {
  AtomicFile file(path);
  auto& out = file.stream();
  out << "iteration,estimator,component_a,component_b,var_xhat,wedge,sign_a\n";
  for (const IterationRecord& r : records) {
    if (!r.ok() || !r.has_decomp) continue;
    out << r.iteration << ',' << r.estimator << ',' << format_double(r.decomp.component_a)
        << ',' << format_double(r.decomp.component_b) << ','
        << format_double(r.decomp.var_xhat) << ',' << format_double(r.decomp.wedge) << ','
        << to_string(r.decomp.sign_a) << '\n';
  }
  file.commit();
}

namespace {
constexpr double kSvgW = 900.0, kSvgH = 520.0;
constexpr double kMarL = 60.0, kMarR = 150.0, kMarT = 30.0, kMarB = 40.0;

double map_x(double v, double lo, double hi) {
  return kMarL + (v - lo) / (hi - lo) * (kSvgW - kMarL - kMarR);
}
double map_y(double v, double lo, double hi) {
  return kSvgH - kMarB - (v - lo) / (hi - lo) * (kSvgH - kMarT - kMarB);
}

void svg_header(std::ofstream& out) {
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSvgW
      << "\" height=\"" << kSvgH << "\" viewBox=\"0 0 " << kSvgW << " " << kSvgH
      << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}
}  // namespace

void write_density_svg(const SummaryStats& stats, const fs::path& path) {
  AtomicFile file(path);
  auto& out = file.stream();
  svg_header(out);

  long max_count = 1;
  for (const auto& s : stats.estimators) {
    for (long c : s.hist_counts) max_count = std::max(max_count, c);
  }
  const double bin_w = (stats.hist_hi - stats.hist_lo) / stats.hist_bins;

  // axes
  out << "<line x1=\"" << fixed2(kMarL) << "\" y1=\"" << fixed2(kSvgH - kMarB)
      << "\" x2=\"" << fixed2(kSvgW - kMarR) << "\" y2=\"" << fixed2(kSvgH - kMarB)
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << fixed2(kMarL) << "\" y1=\"" << fixed2(kMarT) << "\" x2=\""
      << fixed2(kMarL) << "\" y2=\"" << fixed2(kSvgH - kMarB)
      << "\" stroke=\"black\"/>\n";
  for (double tick = std::ceil(stats.hist_lo * 4) / 4; tick <= stats.hist_hi + 1e-9;
       tick += 0.25) {
    const double x = map_x(tick, stats.hist_lo, stats.hist_hi);
    out << "<line x1=\"" << fixed2(x) << "\" y1=\"" << fixed2(kSvgH - kMarB)
        << "\" x2=\"" << fixed2(x) << "\" y2=\"" << fixed2(kSvgH - kMarB + 5)
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << fixed2(x) << "\" y=\"" << fixed2(kSvgH - kMarB + 18)
        << "\" font-size=\"11\" text-anchor=\"middle\">" << fixed2(tick) << "</text>\n";
  }

  // dashed truth line at beta = 1
  const double x1 = map_x(1.0, stats.hist_lo, stats.hist_hi);
  out << "<line x1=\"" << fixed2(x1) << "\" y1=\"" << fixed2(kMarT) << "\" x2=\""
      << fixed2(x1) << "\" y2=\"" << fixed2(kSvgH - kMarB)
      << "\" stroke=\"black\" stroke-dasharray=\"5,4\"/>\n";

  int color_idx = 0;
  for (const auto& s : stats.estimators) {
    const std::string& color = palette()[static_cast<std::size_t>(color_idx) % palette().size()];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (int b = 0; b < stats.hist_bins; ++b) {
      const double cx = stats.hist_lo + (b + 0.5) * bin_w;
      const double cy = static_cast<double>(s.hist_counts[static_cast<std::size_t>(b)]);
      out << fixed2(map_x(cx, stats.hist_lo, stats.hist_hi)) << ','
          << fixed2(map_y(cy, 0.0, static_cast<double>(max_count)));
      if (b + 1 < stats.hist_bins) out << ' ';
    }
    out << "\"/>\n";
    const double ly = kMarT + 16.0 * color_idx;
    out << "<rect x=\"" << fixed2(kSvgW - kMarR + 10) << "\" y=\"" << fixed2(ly - 8)
        << "\" width=\"10\" height=\"10\" fill=\"" << color << "\"/>\n";
    out << "<text x=\"" << fixed2(kSvgW - kMarR + 25) << "\" y=\"" << fixed2(ly + 1)
        << "\" font-size=\"12\">" << s.tag << "</text>\n";
    ++color_idx;
  }
  out << "</svg>\n";
  file.commit();
}

void write_histogram_csv(const SummaryStats& stats, const fs::path& path) {
  AtomicFile file(path);
  auto& out = file.stream();
  out << "estimator,bin_left,count\n";
  const double bin_w = (stats.hist_hi - stats.hist_lo) / stats.hist_bins;
  for (const auto& s : stats.estimators) {
    for (int b = 0; b < stats.hist_bins; ++b) {
      out << s.tag << ',' << format_double(stats.hist_lo + b * bin_w) << ','
          << s.hist_counts[static_cast<std::size_t>(b)] << '\n';
    }
  }
  file.commit();
}

void write_sweep_csv(const std::vector<SweepPoint>& points, const fs::path& path) {
  AtomicFile file(path);
  auto& out = file.stream();
  out << "estimator,k,mean,p2.5,p97.5\n";
  for (const auto& pt : points) {
    out << pt.estimator << ',' << pt.k << ',' << format_double(pt.mean) << ','
        << format_double(pt.p2_5) << ',' << format_double(pt.p97_5) << '\n';
  }
  file.commit();
}

void write_sweep_svg(const std::vector<SweepPoint>& points, const fs::path& path) {
  if (points.empty()) throw std::runtime_error("write_sweep_svg: no points");
  AtomicFile file(path);
  auto& out = file.stream();
  svg_header(out);

  int k_lo = points.front().k, k_hi = points.front().k;
  double v_lo = points.front().p2_5, v_hi = points.front().p97_5;
  std::vector<std::string> tags;
  for (const auto& pt : points) {
    k_lo = std::min(k_lo, pt.k);
    k_hi = std::max(k_hi, pt.k);
    v_lo = std::min(v_lo, pt.p2_5);
    v_hi = std::max(v_hi, pt.p97_5);
    if (std::find(tags.begin(), tags.end(), pt.estimator) == tags.end()) {
      tags.push_back(pt.estimator);
    }
  }
  v_lo = std::min(v_lo, 1.0) - 0.02;
  v_hi = std::max(v_hi, 1.0) + 0.02;
  const double kspan = std::max(1, k_hi - k_lo);

  auto px = [&](double k) { return map_x((k - k_lo) / kspan, 0.0, 1.0); };
  auto py = [&](double v) { return map_y(v, v_lo, v_hi); };

  // truth line
  out << "<line x1=\"" << fixed2(kMarL) << "\" y1=\"" << fixed2(py(1.0)) << "\" x2=\""
      << fixed2(kSvgW - kMarR) << "\" y2=\"" << fixed2(py(1.0))
      << "\" stroke=\"black\" stroke-dasharray=\"5,4\"/>\n";

  int color_idx = 0;
  for (const auto& tag : tags) {
    const std::string& color = palette()[static_cast<std::size_t>(color_idx) % palette().size()];
    std::vector<const SweepPoint*> line;
    for (const auto& pt : points) {
      if (pt.estimator == tag) line.push_back(&pt);
    }
    std::sort(line.begin(), line.end(),
              [](const SweepPoint* a, const SweepPoint* b) { return a->k < b->k; });

    out << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
    for (const auto* pt : line) out << fixed2(px(pt->k)) << ',' << fixed2(py(pt->p97_5)) << ' ';
    for (auto it = line.rbegin(); it != line.rend(); ++it) {
      out << fixed2(px((*it)->k)) << ',' << fixed2(py((*it)->p2_5));
      if (std::next(it) != line.rend()) out << ' ';
    }
    out << "\"/>\n";

    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < line.size(); ++i) {
      out << fixed2(px(line[i]->k)) << ',' << fixed2(py(line[i]->mean));
      if (i + 1 < line.size()) out << ' ';
    }
    out << "\"/>\n";
    for (const auto* pt : line) {
      out << "<circle cx=\"" << fixed2(px(pt->k)) << "\" cy=\"" << fixed2(py(pt->mean))
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    const double ly = kMarT + 16.0 * color_idx;
    out << "<rect x=\"" << fixed2(kSvgW - kMarR + 10) << "\" y=\"" << fixed2(ly - 8)
        << "\" width=\"10\" height=\"10\" fill=\"" << color << "\"/>\n";
    out << "<text x=\"" << fixed2(kSvgW - kMarR + 25) << "\" y=\"" << fixed2(ly + 1)
        << "\" font-size=\"12\">" << tag << "</text>\n";
    ++color_idx;
  }

  // x-axis ticks at integer k
  for (int k = k_lo; k <= k_hi; ++k) {
    out << "<text x=\"" << fixed2(px(k)) << "\" y=\"" << fixed2(kSvgH - kMarB + 18)
        << "\" font-size=\"11\" text-anchor=\"middle\">" << k << "</text>\n";
  }
  out << "</svg>\n";
  file.commit();
}

std::uint64_t file_checksum(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
  }
  return h;
}

OutputBundle write_bundle(const CampaignConfig& config, const CampaignResult& result,
                          const fs::path& dir) {
  OutputBundle bundle;
  bundle.dir = dir;
  bundle.figures_dir = dir / "figures";
  fs::create_directories(bundle.figures_dir);

  bundle.records_csv = dir / "records.csv";
  bundle.summary_md = dir / "summary.md";
  bundle.table2_csv = dir / "table2.csv";
  bundle.decomposition_csv = dir / "decomposition.csv";
  bundle.manifest_json = dir / "manifest.json";

  write_records(result.records, bundle.records_csv);
  write_summary(result.stats, config_echo(config), bundle.summary_md, bundle.table2_csv);
  write_decomposition(result.records, bundle.decomposition_csv);
  write_density_svg(result.stats, bundle.figures_dir / "density.svg");
  write_histogram_csv(result.stats, bundle.figures_dir / "hist.csv");

  nlohmann::json manifest;
  manifest["version"] = kVersion;
  manifest["seed"] = config.master_seed;
  nlohmann::json cfg;
  for (const auto& [key, value] : config_echo(config)) cfg[key] = value;
  manifest["config"] = cfg;
  nlohmann::json files;
  for (const auto& p :
       {bundle.records_csv, bundle.summary_md, bundle.table2_csv, bundle.decomposition_csv,
        bundle.figures_dir / "density.svg", bundle.figures_dir / "hist.csv"}) {
    char hex[24];
    std::snprintf(hex, sizeof(hex), "fnv1a:%016llx",
                  static_cast<unsigned long long>(file_checksum(p)));
    files[fs::relative(p, dir).generic_string()] = hex;
  }
  manifest["files"] = files;
  {
    AtomicFile file(bundle.manifest_json);
    file.stream() << manifest.dump(2) << "\n";
    file.commit();
  }
  return bundle;
}

}  // namespace ml2sls
