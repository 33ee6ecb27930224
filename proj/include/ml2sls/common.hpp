#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace ml2sls {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Bad user-facing configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid numeric design: non-PD covariance, singular regression, bad dims.
class DesignError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A fit that failed at runtime (non-convergence, null selection, divergence).
/// Campaign runners turn these into failed iteration rows instead of aborting.
class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Sample moments with the 1/n denominator. The bias-decomposition identity
// beta_hat = beta1 + (beta1*Cov(xhat,e) + Cov(xhat,u)) / Var(xhat) is exact
// only if every moment in the pipeline shares one denominator, so everything
// below uses 1/n. Summary-level standard deviations across iterations use the
// usual 1/(m-1) and are computed elsewhere.
inline double mean(const Vec& v) { return v.mean(); }

inline double cov_n(const Vec& a, const Vec& b) {
  const double n = static_cast<double>(a.size());
  return (a.array() - a.mean()).matrix().dot((b.array() - b.mean()).matrix()) / n;
}

inline double var_n(const Vec& a) {
  const double n = static_cast<double>(a.size());
  return (a.array() - a.mean()).square().sum() / n;
}

inline double sd_n(const Vec& a) { return std::sqrt(var_n(a)); }

inline double corr_n(const Vec& a, const Vec& b) {
  return cov_n(a, b) / (sd_n(a) * sd_n(b));
}

inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

/// Shortest round-trip decimal form of a double (std::to_chars).
inline std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace ml2sls
