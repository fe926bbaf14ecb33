#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "rctsens/cluster.hpp"
#include "rctsens/dataset.hpp"
#include "rctsens/glm.hpp"

namespace rctsens {

struct TwoRegFit {
  VectorXd beta_P;
  VectorXd beta_diff;
  VectorXd beta_S;   // beta_P + beta_diff
  MatrixXd V_P;      // corrected sandwich of beta_P
  MatrixXd V_diff;   // corrected sandwich of beta_diff
  MatrixXd V_small;  // V_P + V_diff
  MatrixXd V_large;  // with corrections backed out
  double n_eff = 0.0;
  ClusterSummary clusters;
  double m_eff = std::numeric_limits<double>::quiet_NaN();
};

// n_eff from |V_small| = (n_eff/(n_eff-p))^p |V_large|, via log-determinants.
inline double neff_determinant(const MatrixXd& V_small, const MatrixXd& V_large,
                               int p, double n) {
  const auto logdet = [](const MatrixXd& A) {
    Eigen::PartialPivLU<MatrixXd> lu(A);
    double ld = 0.0, sign = 1.0;
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      const double d = lu.matrixLU()(i, i);
      sign *= (d < 0 ? -1.0 : 1.0);
      ld += std::log(std::abs(d));
    }
    sign *= lu.permutationP().determinant();
    if (sign <= 0.0)
      throw IllConditionedVarianceError(
          "neff_determinant: non-positive determinant");
    return ld;
  };
  const double rho =
      std::exp((logdet(V_small) - logdet(V_large)) / static_cast<double>(p));
  if (rho <= 1.0 + 1e-12) return n;  // no missing information
  return static_cast<double>(p) * rho / (rho - 1.0);
}

namespace detail {

// OLS with a robust (sandwich) variance over the rows where use[i] != 0;
// clustered when cluster ids are supplied.
struct OlsSandwich {
  VectorXd beta;
  MatrixXd V;  // uncorrected sandwich
};

inline OlsSandwich ols_sandwich(const VectorXd& y, const MatrixXd& X,
                                const Eigen::VectorXi& use,
                                const std::vector<int>& cluster) {
  const int p = static_cast<int>(X.cols());
  MatrixXd XtX = MatrixXd::Zero(p, p);
  VectorXd Xty = VectorXd::Zero(p);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    if (!use[i]) continue;
    XtX.noalias() += X.row(i).transpose() * X.row(i);
    Xty.noalias() += y[i] * X.row(i).transpose();
  }
  Eigen::FullPivLU<MatrixXd> lu(XtX);
  if (!lu.isInvertible()) {
    VectorXd w = use.cast<double>();
    check_full_rank(X, w);  // throws with the offending column
    throw SingularDesignError(0);
  }
  OlsSandwich out;
  out.beta = lu.solve(Xty);
  MatrixXd U(X.rows(), p);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double e = use[i] ? y[i] - X.row(i).dot(out.beta) : 0.0;
    U.row(i) = e * X.row(i);
  }
  MatrixXd C = cluster.empty() ? MatrixXd(U.transpose() * U)
                               : clustered_C(U, cluster);
  const MatrixXd XtXinv = lu.inverse();
  out.V = XtXinv * C * XtXinv;
  out.V = 0.5 * (out.V + out.V.transpose().eval());
  return out;
}

}  // namespace detail

// Identity-link fast path with no auxiliaries: complete-case OLS of y on XS
// gives beta_P; all-rows OLS of (1-r)Delta on XS gives beta_S - beta_P. The
// two estimates are uncorrelated, so variances add.
inline TwoRegFit fit_two_linreg(const TrialDataset& data, const DeltaSpec& delta,
                                const GlmFamily& family) {
  if (!family.is_identity())
    throw UnsupportedFamilyError("two-linreg: identity link only");
  if (data.p_A() > 0)
    throw UnsupportedDesignError("two-linreg: auxiliaries not supported");
  data.validate();

  const int n = data.n(), nobs = data.n_obs(), p = data.p_S();
  VectorXd y = VectorXd::Zero(n);
  VectorXd d = VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    if (data.r[i] == 1) {
      y[i] = data.y[i];
    } else {
      const double di = delta.value(data, i);
      if (!std::isfinite(di))
        throw InvalidDeltaError("two-linreg: delta must be finite");
      d[i] = di;
    }
  }

  const auto cc = detail::ols_sandwich(y, data.XS, data.r, data.cluster);
  const Eigen::VectorXi all = Eigen::VectorXi::Ones(n);
  const auto diff = detail::ols_sandwich(d, data.XS, all, data.cluster);

  TwoRegFit fit;
  fit.beta_P = cc.beta;
  fit.beta_diff = diff.beta;
  fit.beta_S = cc.beta + diff.beta;

  if (data.clustered()) {
    fit.clusters = summarize_clusters(data);
    const double m = fit.clusters.m, mobs = fit.clusters.m_obs;
    if (fit.clusters.m_obs <= 1)
      throw InsufficientClustersError("two-linreg: m_obs <= 1");
    const double fP = ((nobs - 1.0) / (nobs - p)) * (mobs / (mobs - 1.0));
    const double fD = ((n - 1.0) / (n - p)) * (m / (m - 1.0));
    fit.V_P = fP * cc.V;
    fit.V_diff = fD * diff.V;
    fit.V_small = fit.V_P + fit.V_diff;
    fit.V_large = cc.V + diff.V;
    const auto eff = cluster_neff_tworeg(
        fit.V_small, fit.V_diff, fit.V_P,
        {n, nobs, fit.clusters.m, fit.clusters.m_obs}, p);
    fit.n_eff = eff.first;
    fit.m_eff = eff.second;
  } else {
    const double fP = static_cast<double>(nobs) / (nobs - p);
    const double fD = static_cast<double>(n) / (n - p);
    fit.V_P = fP * cc.V;
    fit.V_diff = fD * diff.V;
    fit.V_small = fit.V_P + fit.V_diff;
    fit.V_large = cc.V + diff.V;
    fit.n_eff = neff_determinant(fit.V_small, fit.V_large, p,
                                 static_cast<double>(n));
    fit.n_eff = std::clamp(fit.n_eff, static_cast<double>(nobs),
                           static_cast<double>(n));
  }
  return fit;
}

}  // namespace rctsens
