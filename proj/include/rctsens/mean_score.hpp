#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "rctsens/cluster.hpp"
#include "rctsens/dataset.hpp"
#include "rctsens/glm.hpp"

namespace rctsens {

struct MeanScoreFit {
  VectorXd beta_S;
  VectorXd beta_P;
  MatrixXd B;        // (pS+pP) x (pS+pP), block upper triangular
  MatrixXd C;        // score outer-product sum (per cluster if clustered)
  MatrixXd V;        // B^-1 C B^-T
  MatrixXd V_S;      // top-left pS block of V
  VectorXd ytilde;
  double sigma2_P = std::numeric_limits<double>::quiet_NaN();  // identity only
  double n_eff = 0.0;
  double I_mis = 0.0;
  double I_mis_star = 0.0;
  ClusterSummary clusters;  // populated when the data carry cluster ids
  double m_eff = std::numeric_limits<double>::quiet_NaN();
};

// Complete-case GLM of y on (XS, XA): the pattern-mixture regression.
inline GlmFit fit_pattern_model(const TrialDataset& data,
                                const GlmFamily& family) {
  const int nobs = data.n_obs();
  if (nobs < data.p_P())
    throw InsufficientDataError("pattern model: n_obs < p_P");
  const MatrixXd XPall = data.XP();
  MatrixXd X(nobs, data.p_P());
  VectorXd y(nobs);
  int k = 0;
  for (int i = 0; i < data.n(); ++i) {
    if (data.r[i] == 1) {
      X.row(k) = XPall.row(i);
      y[k] = data.y[i];
      ++k;
    }
  }
  return fit_glm(y, X, family);
}

// ytilde_i = y_i for observed rows, h(beta_P' x_Pi + Delta_i) for missing.
inline VectorXd compute_ytilde(const TrialDataset& data, const VectorXd& beta_P,
                               const DeltaSpec& delta,
                               const GlmFamily& family) {
  if (beta_P.size() != data.p_P())
    throw DataError("compute_ytilde: beta_P dimension mismatch");
  const MatrixXd XP = data.XP();
  VectorXd yt(data.n());
  for (int i = 0; i < data.n(); ++i) {
    if (data.r[i] == 1) {
      yt[i] = data.y[i];
    } else {
      const double d = delta.value(data, i);
      if (std::isinf(d) && family.is_identity())
        throw InvalidDeltaError("-infinity delta requires the logit family");
      yt[i] = family.mean(XP.row(i).dot(beta_P) + d);
    }
  }
  return yt;
}

// Solve sum {ytilde_i - h(beta_S' x_Si)} x_Si = 0.
inline VectorXd solve_substantive(const TrialDataset& data,
                                  const VectorXd& ytilde,
                                  const GlmFamily& family) {
  if (!ytilde.allFinite())
    throw DataError("solve_substantive: ytilde has non-finite entries");
  return fit_glm(ytilde, data.XS, family).beta;
}

namespace detail {

// Per-row stacked scores U_i = (U_Si', U_Pi')' as rows of an n x (pS+pP)
// matrix, at the fitted (beta_S, beta_P).
inline MatrixXd score_rows(const TrialDataset& data, const VectorXd& beta_S,
                           const VectorXd& beta_P, const VectorXd& ytilde,
                           const GlmFamily& family) {
  const int pS = data.p_S(), pP = data.p_P();
  const MatrixXd XP = data.XP();
  MatrixXd U = MatrixXd::Zero(data.n(), pS + pP);
  for (int i = 0; i < data.n(); ++i) {
    const double eS = ytilde[i] - family.mean(data.XS.row(i).dot(beta_S));
    U.row(i).head(pS) = eS * data.XS.row(i);
    if (data.r[i] == 1) {
      const double eP = data.y[i] - family.mean(XP.row(i).dot(beta_P));
      U.row(i).tail(pP) = eP * XP.row(i);
    }
  }
  return U;
}

}  // namespace detail

struct SandwichParts {
  MatrixXd B;
  MatrixXd C;
  MatrixXd V;
  MatrixXd U_rows;  // n x (pS+pP) per-row scores
};

// Blockwise B, outer-product C, and V = B^-1 C B^-T for the stacked
// two-stage system. When the dataset is clustered, C sums scores within
// clusters first.
inline SandwichParts assemble_sandwich(const TrialDataset& data,
                                       const VectorXd& beta_S,
                                       const VectorXd& beta_P,
                                       const DeltaSpec& delta,
                                       const GlmFamily& family) {
  const int pS = data.p_S(), pP = data.p_P(), q = pS + pP;
  const MatrixXd XP = data.XP();

  MatrixXd B = MatrixXd::Zero(q, q);
  for (int i = 0; i < data.n(); ++i) {
    const double etaS = data.XS.row(i).dot(beta_S);
    B.topLeftCorner(pS, pS).noalias() +=
        family.mean_deriv(etaS) * data.XS.row(i).transpose() * data.XS.row(i);
    if (data.r[i] == 1) {
      const double etaP = XP.row(i).dot(beta_P);
      B.bottomRightCorner(pP, pP).noalias() +=
          family.mean_deriv(etaP) * XP.row(i).transpose() * XP.row(i);
    } else {
      const double d = delta.value(data, i);
      const double hp = family.mean_deriv(XP.row(i).dot(beta_P) + d);
      B.topRightCorner(pS, pP).noalias() -=
          hp * data.XS.row(i).transpose() * XP.row(i);
    }
    // B_PS is identically zero
  }

  const VectorXd ytilde = compute_ytilde(data, beta_P, delta, family);
  const MatrixXd U = detail::score_rows(data, beta_S, beta_P, ytilde, family);
  MatrixXd C;
  if (data.clustered()) {
    C = clustered_C(U, data.cluster);
  } else {
    C = U.transpose() * U;
  }

  Eigen::FullPivLU<MatrixXd> lu(B);
  if (!lu.isInvertible())
    throw VarianceSingularError("sandwich: B matrix is singular");
  const MatrixXd Binv = lu.inverse();
  MatrixXd V = Binv * C * Binv.transpose();
  V = 0.5 * (V + V.transpose().eval());
  return {std::move(B), C, std::move(V), U};
}

struct InfluenceResult {
  double n_eff;
  double I_mis;
  double I_mis_star;
};

// Effective sample size from the influence of the missing rows relative to
// the influence they would have had if observed (expected under the
// pattern-mixture model).
inline InfluenceResult influence_neff(const TrialDataset& data,
                                      const MeanScoreFit& fit,
                                      const DeltaSpec& delta,
                                      const GlmFamily& family) {
  const int pS = data.p_S(), pP = data.p_P();
  const int n = data.n(), nobs = data.n_obs(), nmis = data.n_mis();
  if (nmis == 0) return {static_cast<double>(n), 0.0, 0.0};

  Eigen::FullPivLU<MatrixXd> luB(fit.B);
  const MatrixXd Binv = luB.inverse();
  Eigen::FullPivLU<MatrixXd> luVS(fit.V_S);
  if (!luVS.isInvertible())
    throw VarianceSingularError("influence: V_S not invertible");
  const MatrixXd VSinv = luVS.inverse();
  const MatrixXd BSSinv =
      fit.B.topLeftCorner(pS, pS).fullPivLu().inverse();
  // metric for the full-data influence, x' BSS^-T VS^-1 BSS^-1 x
  const MatrixXd M = BSSinv.transpose() * VSinv * BSSinv;

  const MatrixXd XP = data.XP();
  double Imis = 0.0, Istar = 0.0;
  for (int i = 0; i < data.n(); ++i) {
    if (data.r[i] != 0) continue;
    // observed-data influence of row i on beta_S
    VectorXd Ui = VectorXd::Zero(pS + pP);
    const double eS = fit.ytilde[i] - family.mean(data.XS.row(i).dot(fit.beta_S));
    Ui.head(pS) = eS * data.XS.row(i).transpose();
    const VectorXd dbS = (Binv * Ui).head(pS);
    Imis += dbS.dot(VSinv * dbS);
    // expected full-data influence under the pattern-mixture model
    const double d = delta.value(data, i);
    double condvar;
    if (family.is_logit()) {
      const double mu = family.mean(XP.row(i).dot(fit.beta_P) + d);
      condvar = family.variance(mu);
    } else {
      condvar = fit.sigma2_P;
    }
    const double esq = eS * eS + condvar;
    Istar += esq * data.XS.row(i).dot(M * data.XS.row(i).transpose());
  }

  double neff;
  if (Istar <= 0.0) {
    if (Imis > std::max(1e-12, 1e-10 * static_cast<double>(nmis)))
      throw DegenerateInfluenceError("influence: I_mis* = 0 with I_mis > 0");
    neff = static_cast<double>(nobs);
  } else {
    neff = nobs + (Imis / Istar) * nmis;
  }
  neff = std::clamp(neff, static_cast<double>(nobs), static_cast<double>(n));
  return {neff, Imis, Istar};
}

// Two-stage mean-score fit with the joint sandwich variance and effective
// sample sizes. The clustered variant only changes C (within-cluster score
// sums) and adds m_eff.
inline MeanScoreFit fit_mean_score(const TrialDataset& data,
                                   const DeltaSpec& delta,
                                   const GlmFamily& family) {
  data.validate();
  MeanScoreFit fit;
  const GlmFit pat = fit_pattern_model(data, family);
  fit.beta_P = pat.beta;
  fit.sigma2_P = pat.residual_variance;
  fit.ytilde = compute_ytilde(data, fit.beta_P, delta, family);
  fit.beta_S = solve_substantive(data, fit.ytilde, family);

  SandwichParts sw = assemble_sandwich(data, fit.beta_S, fit.beta_P, delta, family);
  fit.B = std::move(sw.B);
  fit.C = std::move(sw.C);
  fit.V = std::move(sw.V);
  fit.V_S = fit.V.topLeftCorner(data.p_S(), data.p_S());

  const InfluenceResult inf = influence_neff(data, fit, delta, family);
  fit.n_eff = inf.n_eff;
  fit.I_mis = inf.I_mis;
  fit.I_mis_star = inf.I_mis_star;

  if (data.clustered()) {
    fit.clusters = summarize_clusters(data);
    const auto cn = cluster_neff(inf.I_mis, inf.I_mis_star, fit.clusters,
                                 data.n_obs(), data.n_mis());
    fit.n_eff = cn.first;
    fit.m_eff = cn.second;
  }
  return fit;
}

}  // namespace rctsens
