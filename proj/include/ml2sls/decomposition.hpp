#pragma once

#include <functional>
#include <string>

#include "ml2sls/classical.hpp"
#include "ml2sls/common.hpp"
#include "ml2sls/rng.hpp"

namespace ml2sls {

/// Sign classification of component a = beta1 * Cov(xhat, e), determined by
/// sign(beta1) and sign(Corr(xhat,x)*sd(x) - sd(xhat)). Degenerate inputs
/// (zero beta1 or vanishing spreads) collapse to Zero.
enum class ComponentASign {
  PosBetaPosGap,  // (+)
  PosBetaNegGap,  // (-)
  NegBetaPosGap,  // (-)
  NegBetaNegGap,  // (+)
  Zero,
};

int sign_of(ComponentASign s);
std::string to_string(ComponentASign s);

/// Exact sample decomposition of the plug-in second-stage slope:
///   beta_hat = beta1 + (beta1*Cov(xhat,e) + Cov(xhat,u)) / Var(xhat),
/// with e = x - xhat and all moments on the 1/n convention. The identity is
/// algebraic, so beta_hat_implied matches an OLS second stage to roundoff.
struct BiasDecomposition {
  double cov_xhat_e = 0.0;
  double cov_xhat_u = 0.0;
  double var_xhat = 0.0;
  double component_a = 0.0;  // beta1 * cov_xhat_e
  double component_b = 0.0;  // cov_xhat_u
  double amplifier = 0.0;    // 1 / var_xhat
  double wedge = 0.0;
  double beta_hat_implied = 0.0;
  ComponentASign sign_a = ComponentASign::Zero;
  bool degenerate_e = false;  // e identically zero (e.g. xhat == x)
};

BiasDecomposition decompose(const Vec& xhat, const Vec& x, const Vec& u, double beta1);

ComponentASign sign_component_a(const Vec& xhat, const Vec& x, double beta1);

struct CorrResult {
  double value = 0.0;
  bool degenerate = false;
};

/// Corr(xhat, e) with a built-in check against the closed form
/// (Corr(xhat,x)*sd(x) - sd(xhat)) / sd(e); the two routes must agree to
/// 1e-10 or the call throws.
CorrResult corr_xhat_e(const Vec& xhat, const Vec& x);

/// In-sample / out-of-sample MSE pair of a first-stage fit (out is NaN when
/// the method ran no cross-validation).
std::pair<double, double> mse_in_out(const FirstStageFit& fit);

struct BiasVarianceProbe {
  double bias2 = 0.0;
  double variance = 0.0;
  double irreducible = 0.0;
  double total_mse = 0.0;      // against fresh disturbance draws
  double total_mse_se = 0.0;   // Monte Carlo SE of total_mse
};

/// Refits `method` over fresh first-stage disturbances with Z fixed:
/// x^(r) = signal + noise_sd * eps^(r). The refit mean approximates the
/// conditional expectation of xhat, giving the bias^2 / variance /
/// irreducible split; their sum matches total_mse up to Monte Carlo error.
/// The irreducible term uses the known noise variance (simulator privilege).
BiasVarianceProbe bias_variance_probe(
    const Mat& Z, const Vec& signal, double noise_sd,
    const std::function<Vec(const Vec& x, const Mat& Z, Substream& stream)>& method,
    int refits, Substream& stream);

}  // namespace ml2sls
