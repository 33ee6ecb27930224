#include "ml2sls/decomposition.hpp"

#include <cmath>
#include <limits>

namespace ml2sls {

int sign_of(ComponentASign s) {
  switch (s) {
    case ComponentASign::PosBetaPosGap:
    case ComponentASign::NegBetaNegGap:
      return 1;
    case ComponentASign::PosBetaNegGap:
    case ComponentASign::NegBetaPosGap:
      return -1;
    case ComponentASign::Zero:
      return 0;
  }
  return 0;
}

std::string to_string(ComponentASign s) {
  switch (s) {
    case ComponentASign::PosBetaPosGap: return "pos_beta_pos_gap";
    case ComponentASign::PosBetaNegGap: return "pos_beta_neg_gap";
    case ComponentASign::NegBetaPosGap: return "neg_beta_pos_gap";
    case ComponentASign::NegBetaNegGap: return "neg_beta_neg_gap";
    case ComponentASign::Zero: return "zero";
  }
  return "zero";
}

ComponentASign sign_component_a(const Vec& xhat, const Vec& x, double beta1) {
  const double sd_x = sd_n(x);
  const double sd_xhat = sd_n(xhat);
  const Vec e = x - xhat;
  const double sd_e = sd_n(e);
  if (beta1 == 0.0 || sd_x == 0.0 || sd_xhat == 0.0 || sd_e == 0.0) {
    return ComponentASign::Zero;
  }
  const double gap = (cov_n(xhat, x) / (sd_xhat * sd_x)) * sd_x - sd_xhat;
  if (gap == 0.0) return ComponentASign::Zero;
  if (beta1 > 0.0) {
    return gap > 0.0 ? ComponentASign::PosBetaPosGap : ComponentASign::PosBetaNegGap;
  }
  return gap > 0.0 ? ComponentASign::NegBetaPosGap : ComponentASign::NegBetaNegGap;
}

BiasDecomposition decompose(const Vec& xhat, const Vec& x, const Vec& u, double beta1) {
  if (xhat.size() != x.size() || x.size() != u.size()) {
    throw DesignError("decompose: input lengths differ");
  }
  BiasDecomposition d;
  d.var_xhat = var_n(xhat);
  if (!(d.var_xhat > 0.0)) {
    throw DesignError("decompose: predictions are degenerate (zero variance)");
  }
  const Vec e = x - xhat;
  d.degenerate_e = var_n(e) == 0.0;
  d.cov_xhat_e = cov_n(xhat, e);
  d.cov_xhat_u = cov_n(xhat, u);
  d.component_a = d.degenerate_e ? 0.0 : beta1 * d.cov_xhat_e;
  d.component_b = d.cov_xhat_u;
  d.amplifier = 1.0 / d.var_xhat;
  d.wedge = (d.component_a + d.component_b) * d.amplifier;
  d.beta_hat_implied = beta1 + d.wedge;
  d.sign_a = sign_component_a(xhat, x, beta1);
  return d;
}

CorrResult corr_xhat_e(const Vec& xhat, const Vec& x) {
  const Vec e = x - xhat;
  const double sd_e = sd_n(e);
  const double sd_xhat = sd_n(xhat);
  const double sd_x = sd_n(x);
  CorrResult res;
  if (sd_e == 0.0 || sd_xhat == 0.0 || sd_x == 0.0) {
    res.degenerate = true;
    return res;
  }
  res.value = cov_n(xhat, e) / (sd_xhat * sd_e);
  const double closed_form = (corr_n(xhat, x) * sd_x - sd_xhat) / sd_e;
  if (std::fabs(res.value - closed_form) > 1e-10 * std::max(1.0, std::fabs(res.value))) {
    throw DesignError("corr_xhat_e: direct and closed-form routes disagree");
  }
  return res;
}

std::pair<double, double> mse_in_out(const FirstStageFit& fit) {
  return {fit.mse_in,
          fit.mse_out ? *fit.mse_out : std::numeric_limits<double>::quiet_NaN()};
}

BiasVarianceProbe bias_variance_probe(
    const Mat& Z, const Vec& signal, double noise_sd,
    const std::function<Vec(const Vec& x, const Mat& Z, Substream& stream)>& method,
    int refits, Substream& stream) {
  if (refits < 10) throw DesignError("bias_variance_probe: need at least 10 refits");
  const int n = static_cast<int>(signal.size());

  Vec mean_pred = Vec::Zero(n);
  Vec m2_pred = Vec::Zero(n);  // sum of squared deviations (Welford)
  Vec totals(refits);
  for (int r = 0; r < refits; ++r) {
    Substream draw = stream.child(static_cast<std::uint64_t>(2 * r));
    Vec eps(n), eps_test(n);
    for (int i = 0; i < n; ++i) eps[i] = noise_sd * draw.normal();
    for (int i = 0; i < n; ++i) eps_test[i] = noise_sd * draw.normal();
    const Vec x = signal + eps;
    Substream fit_stream = stream.child(static_cast<std::uint64_t>(2 * r + 1));
    const Vec xhat = method(x, Z, fit_stream);

    const Vec x_test = signal + eps_test;
    totals[r] = (xhat - x_test).squaredNorm() / n;

    const Vec delta = xhat - mean_pred;
    mean_pred += delta / static_cast<double>(r + 1);
    m2_pred += delta.cwiseProduct(xhat - mean_pred);
  }

  BiasVarianceProbe probe;
  probe.bias2 = (mean_pred - signal).squaredNorm() / n;
  probe.variance = m2_pred.sum() / (static_cast<double>(refits) * n);
  probe.irreducible = noise_sd * noise_sd;
  probe.total_mse = totals.mean();
  double ss = 0.0;
  for (int r = 0; r < refits; ++r) {
    ss += (totals[r] - probe.total_mse) * (totals[r] - probe.total_mse);
  }
  probe.total_mse_se = std::sqrt(ss / (refits - 1)) / std::sqrt(static_cast<double>(refits));
  return probe;
}

}  // namespace ml2sls
