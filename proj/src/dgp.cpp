#include "ml2sls/dgp.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <cstring>

namespace ml2sls {

Mat toeplitz_sigma(const CovarianceSpec& spec) {
  if (spec.p < 1) throw DesignError("toeplitz_sigma: need at least one instrument");
  if (!(spec.rho >= 0.0 && spec.rho < 1.0)) {
    throw DesignError("toeplitz_sigma: rho must lie in [0,1)");
  }
  Mat sigma(spec.p, spec.p);
  for (int j = 0; j < spec.p; ++j) {
    for (int k = 0; k < spec.p; ++k) {
      sigma(j, k) = std::pow(spec.rho, std::abs(j - k));
    }
  }
  return sigma;
}

Mat sample_mv_normal(int n, const Mat& sigma, Substream& stream) {
  Eigen::LLT<Mat> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw DesignError("sample_mv_normal: covariance is not positive definite");
  }
  return sample_mv_normal_chol(n, llt.matrixL(), stream);
}

Mat sample_mv_normal_chol(int n, const Mat& chol_lower, Substream& stream) {
  const int p = static_cast<int>(chol_lower.rows());
  Mat g(n, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) g(i, j) = stream.normal();
  }
  return g * chol_lower.transpose();
}

CoefficientPattern make_pattern(int p, Ordering ordering, double base,
                                Substream* shuffle_stream) {
  if (p < 1) throw DesignError("make_pattern: need at least one coefficient");
  CoefficientPattern pat;
  pat.ordering = ordering;
  pat.base = base;
  pat.pi_tilde.resize(p);
  switch (ordering) {
    case Ordering::DescendingFromFirst:
      for (int j = 0; j < p; ++j) pat.pi_tilde[j] = std::pow(base, j);
      break;
    case Ordering::DescendingFromMiddle: {
      // Largest coefficient sits at the middle instrument; strength decays
      // rightward and wraps around to the left block.
      const int m = (p - 1) / 2;
      for (int j = 0; j < p; ++j) {
        const int expo = (j >= m) ? (j - m) : (p - m) + j;
        pat.pi_tilde[j] = std::pow(base, expo);
      }
      break;
    }
    case Ordering::Shuffled: {
      if (shuffle_stream == nullptr) {
        throw DesignError("make_pattern: shuffled ordering needs a stream");
      }
      std::vector<double> vals(static_cast<std::size_t>(p));
      for (int j = 0; j < p; ++j) vals[static_cast<std::size_t>(j)] = std::pow(base, j);
      shuffle_stream->shuffle(vals);
      for (int j = 0; j < p; ++j) pat.pi_tilde[j] = vals[static_cast<std::size_t>(j)];
      break;
    }
  }
  return pat;
}

void calibrate_pattern(HighComplexityParams& params, CoefficientPattern& pattern,
                       const Mat& sigma, int n) {
  if (pattern.pi_tilde.size() == 0) {
    throw DesignError("calibrate_pattern: pattern has no coefficients");
  }
  if (!(params.mu2 > 0.0)) {
    throw DesignError("calibrate_pattern: concentration target must be positive");
  }
  const double s_tilde = pattern.pi_tilde.dot(sigma * pattern.pi_tilde);
  if (!(s_tilde > 0.0)) {
    throw DesignError("calibrate_pattern: pi_tilde'Sigma pi_tilde vanishes");
  }
  const double quad_target = params.mu2 / (n + params.mu2);
  pattern.C = std::sqrt(quad_target / s_tilde);
  pattern.pi = pattern.C * pattern.pi_tilde;
  params.sigma_v2 = params.literal_sigma_v ? quad_target : n / (n + params.mu2);
}

namespace {
std::uint64_t hash_vec(std::uint64_t h, const Vec& v) {
  return fnv1a(v.data(), sizeof(double) * static_cast<std::size_t>(v.size()), h);
}
}  // namespace

std::uint64_t SimulatedDataset::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  h = hash_vec(h, y);
  h = hash_vec(h, x1);
  h = fnv1a(Z.data(), sizeof(double) * static_cast<std::size_t>(Z.size()), h);
  return h;
}

SimulatedDataset gen_low_complexity(int n, Substream& stream) {
  if (n < 50) throw DesignError("gen_low_complexity: n must be at least 50");
  const Mat sigma = toeplitz_sigma(CovarianceSpec{7, 0.6});
  SimulatedDataset ds;
  ds.n = n;
  ds.Z = sample_mv_normal(n, sigma, stream);
  Vec eps_s(n), eta(n);
  for (int i = 0; i < n; ++i) eps_s[i] = stream.normal();
  for (int i = 0; i < n; ++i) eta[i] = stream.uniform(-1.0, 1.0);
  ds.x_oracle = ds.Z.rowwise().sum();
  ds.e_first = eps_s;
  ds.x1 = ds.x_oracle + eps_s;
  // u = beta2 * x2 + eta with x2 = 1 + eps_s and beta2 = 1.
  ds.u = (1.0 + eps_s.array() + eta.array()).matrix();
  ds.beta0 = 1.0;
  ds.beta1 = 1.0;
  ds.y = ds.beta0 + ds.beta1 * ds.x1.array() + ds.u.array();
  ds.meta = "low:n=" + std::to_string(n);
  return ds;
}

SimulatedDataset gen_high_complexity(int n, const HighComplexityParams& params,
                                     const CoefficientPattern& pattern,
                                     const Mat& chol_lower, Substream& stream) {
  if (n < 100) throw DesignError("gen_high_complexity: n must be at least 100");
  if (!pattern.calibrated() || !(params.sigma_v2 > 0.0)) {
    throw DesignError("gen_high_complexity: pattern not calibrated");
  }
  if (std::fabs(params.rho_eps) > 1.0) {
    throw DesignError("gen_high_complexity: |rho_eps| must be <= 1");
  }
  SimulatedDataset ds;
  ds.n = n;
  ds.Z = sample_mv_normal_chol(n, chol_lower, stream);
  const double sv = std::sqrt(params.sigma_v2);
  const double rho = params.rho_eps;
  const double rho_c = std::sqrt(1.0 - rho * rho);
  Vec eps_y(n), eps_v(n);
  for (int i = 0; i < n; ++i) {
    const double a = stream.normal();
    const double b = stream.normal();
    eps_y[i] = params.sigma_y * a;
    eps_v[i] = sv * (rho * a + rho_c * b);
  }
  ds.x_oracle = ds.Z * pattern.pi;
  ds.e_first = eps_v;
  ds.x1 = ds.x_oracle + eps_v;
  ds.u = eps_y;
  ds.beta0 = 1.0;
  ds.beta1 = 1.0;
  ds.y = ds.beta0 + ds.beta1 * ds.x1.array() + ds.u.array();
  ds.meta = "high:n=" + std::to_string(n) + ";mu2=" + format_double(params.mu2) +
            ";rho_eps=" + format_double(params.rho_eps);
  return ds;
}

SimulatedDataset apply_interaction_violation(const SimulatedDataset& ds, int k,
                                             double scale) {
  const int p = static_cast<int>(ds.Z.cols());
  if (k < 1 || k > p) {
    throw DesignError("apply_interaction_violation: interaction order exceeds instrument count");
  }
  SimulatedDataset out = ds;
  Vec term = ds.Z.col(0);
  for (int j = 1; j < k; ++j) term = term.cwiseProduct(ds.Z.col(j));
  out.u = ds.u + scale * term;
  out.y = out.beta0 + out.beta1 * out.x1.array() + out.u.array();
  out.meta = ds.meta + ";violation=k" + std::to_string(k) + "x" + format_double(scale);
  return out;
}

double concentration(const Vec& pi, const Mat& sigma, double sigma_v2, int n) {
  if (pi.size() != sigma.rows() || sigma.rows() != sigma.cols()) {
    throw DesignError("concentration: dimension mismatch between pi and Sigma");
  }
  if (!(sigma_v2 > 0.0)) {
    throw DesignError("concentration: sigma_v2 must be positive");
  }
  return n * pi.dot(sigma * pi) / sigma_v2;
}

}  // namespace ml2sls
