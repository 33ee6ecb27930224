#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace ml2sls {

/// Purpose tags for substream derivation. Each randomness consumer owns a
/// tag so enabling or disabling one estimator never shifts the draws seen by
/// another (or by the dataset generator).
enum class Purpose : std::uint64_t {
  Dataset = 1,
  Split = 2,
  Cv = 3,
  ForestFit = 4,
  BoostFit = 5,
  NnInit = 6,
  NnShuffle = 7,
  NnPick = 8,
  PatternShuffle = 9,
  Probe = 10,
};

std::uint64_t mix64(std::uint64_t x);

/// Deterministic counter-derived RNG substream.
///
/// The engine seed is a hash of (master_seed, iteration, purpose, salt), so a
/// substream is fully determined by those coordinates regardless of which
/// worker thread asks for it or in what order. All transforms (uniform,
/// normal, shuffle) are implemented here rather than with std distributions,
/// which keeps byte-level reproducibility independent of the standard
/// library in use.
class Substream {
 public:
  Substream(std::uint64_t master_seed, std::uint64_t iteration, Purpose purpose,
            std::uint64_t salt = 0);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in [a, b).
  double uniform(double a, double b);
  /// Standard normal via the inverse CDF of a strictly interior uniform.
  double normal();
  /// Unbiased integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

  /// Fisher–Yates shuffle (self-contained; std::shuffle is not pinned down
  /// by the standard).
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
    }
  }

  std::vector<int> permutation(int n);

  /// Child stream derived from this stream's identity plus a salt; use for
  /// per-tree / per-fold randomness that must not depend on draw order.
  Substream child(std::uint64_t salt) const;

 private:
  explicit Substream(std::uint64_t derived_seed);
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

/// Standard normal quantile (Wichura-style rational approximation,
/// |rel err| ~ 1e-15). Throws DesignError outside (0, 1).
double inverse_normal_cdf(double p);

/// Standard normal CDF via erfc.
double normal_cdf(double x);

}  // namespace ml2sls
