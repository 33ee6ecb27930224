#pragma once

#include <cstdint>
#include <string>

#include "ml2sls/common.hpp"
#include "ml2sls/rng.hpp"

namespace ml2sls {

/// AR(1)-style instrument covariance: Sigma[j,k] = rho^|j-k|, unit diagonal.
struct CovarianceSpec {
  int p = 7;
  double rho = 0.6;
};

Mat toeplitz_sigma(const CovarianceSpec& spec);

/// Rows are i.i.d. N(0, Sigma) draws; deterministic given the stream.
Mat sample_mv_normal(int n, const Mat& sigma, Substream& stream);

/// Same, with a precomputed lower Cholesky factor (hot path for campaigns).
Mat sample_mv_normal_chol(int n, const Mat& chol_lower, Substream& stream);

enum class Ordering { Shuffled, DescendingFromFirst, DescendingFromMiddle };

/// First-stage coefficient pattern pi = C * pi_tilde, where pi_tilde is a
/// permutation of (base^0, ..., base^(p-1)).
struct CoefficientPattern {
  Ordering ordering = Ordering::DescendingFromFirst;
  double base = 0.7;
  Vec pi_tilde;
  double C = -1.0;  // unset until calibrated
  Vec pi;

  bool calibrated() const { return C >= 0.0 && pi.size() == pi_tilde.size(); }
};

/// Builds pi_tilde for the requested ordering. `shuffle_stream` is consumed
/// only for Ordering::Shuffled; the permutation is drawn once so it can be
/// held fixed across a campaign.
CoefficientPattern make_pattern(int p, Ordering ordering, double base,
                                Substream* shuffle_stream);

struct HighComplexityParams {
  int p = 100;
  double mu2 = 180.0;            // target concentration parameter
  double sigma_y = 1.0;
  double sigma_v2 = -1.0;        // set by calibrate_pattern
  double rho_eps = 0.6;          // corr(eps_y, eps_v)
  bool literal_sigma_v = false;  // sigma_v^2 := pi'Sigma pi (comparison mode)
};

/// One simulated draw. Latent fields (u, e_first, x_oracle) are visible only
/// because this is a simulator; estimators must not touch them.
struct SimulatedDataset {
  int n = 0;
  Vec y;
  Vec x1;
  Mat Z;
  Vec u;         // structural disturbance: y = beta0 + beta1*x1 + u exactly
  Vec e_first;   // first-stage disturbance
  Vec x_oracle;  // exogenous component of x1, a function of Z only
  double beta0 = 1.0;
  double beta1 = 1.0;
  std::string meta;

  std::uint64_t checksum() const;
};

/// Seven strong instruments, linear first stage:
///   x1 = sum_j z_j + eps_s,  x2 = 1 + eps_s,  y = 1 + x1 + x2 + eta,
/// with eps_s ~ N(0,1), eta ~ U(-1,1). Recorded u = x2 + eta.
SimulatedDataset gen_low_complexity(int n, Substream& stream);

/// Chooses C and sigma_v^2 so that simultaneously
///   n * pi'Sigma pi / sigma_v^2 = mu2   and   Var(x1) = pi'Sigma pi + sigma_v^2 = 1,
/// i.e. pi'Sigma pi = mu2/(n+mu2), sigma_v^2 = n/(n+mu2). With
/// literal_sigma_v the variance rule sigma_v^2 := pi'Sigma pi is applied
/// instead (same C), which forces the realized concentration to n.
void calibrate_pattern(HighComplexityParams& params, CoefficientPattern& pattern,
                       const Mat& sigma, int n);

SimulatedDataset gen_high_complexity(int n, const HighComplexityParams& params,
                                     const CoefficientPattern& pattern,
                                     const Mat& chol_lower, Substream& stream);

/// Adds scale * (z_1 * ... * z_k) to the structural error; y and u are
/// re-derived so y = beta0 + beta1*x1 + u still holds exactly. k = 1 breaks
/// the linear exclusion restriction; k > 1 breaks only its nonlinear
/// extension.
SimulatedDataset apply_interaction_violation(const SimulatedDataset& ds, int k,
                                             double scale);

/// Concentration parameter n * pi'Sigma pi / sigma_v^2.
double concentration(const Vec& pi, const Mat& sigma, double sigma_v2, int n);

}  // namespace ml2sls
