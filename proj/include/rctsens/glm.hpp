#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>

#include "rctsens/errors.hpp"
#include "rctsens/family.hpp"

namespace rctsens {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct GlmFit {
  VectorXd beta;
  VectorXd linear_predictors;  // X beta + offset
  VectorXd fitted_means;
  double residual_variance = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  int iterations = 0;
};

namespace detail {

// Rank check on the weighted design; reports the first collinear column.
inline void check_full_rank(const MatrixXd& X, const VectorXd& w) {
  const auto n = X.rows();
  const auto p = X.cols();
  MatrixXd Xw(n, p);
  for (Eigen::Index i = 0; i < n; ++i) Xw.row(i) = std::sqrt(w[i]) * X.row(i);
  Eigen::ColPivHouseholderQR<MatrixXd> qr(Xw);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    // the pivot ordering puts dependent columns last
    const auto& perm = qr.colsPermutation().indices();
    int offending = static_cast<int>(perm[p - 1]);
    for (Eigen::Index k = qr.rank(); k < p; ++k)
      offending = std::min(offending, static_cast<int>(perm[k]));
    throw SingularDesignError(offending);
  }
}

}  // namespace detail

// Unbiased weighted residual variance for an identity-link fit:
// sum w (y - X beta)^2 / (sum w - p).
inline double residual_variance(const VectorXd& y, const MatrixXd& X,
                                const VectorXd& beta, const VectorXd& w) {
  const double wsum = w.sum();
  const double p = static_cast<double>(X.cols());
  if (wsum <= p)
    throw InsufficientDataError("residual variance needs sum of weights > p");
  const VectorXd resid = y - X * beta;
  return (w.array() * resid.array().square()).sum() / (wsum - p);
}

// Solve sum_i w_i {y_i - h(beta'x_i + o_i)} x_i = 0 by iteratively
// reweighted Newton steps. Deterministic: beta starts at zero (logit) or the
// weighted least squares solution (identity, which is already exact).
inline GlmFit fit_glm(const VectorXd& y, const MatrixXd& X,
                      const GlmFamily& family,
                      const std::optional<VectorXd>& weights = std::nullopt,
                      const std::optional<VectorXd>& offset = std::nullopt) {
  const auto n = X.rows();
  const auto p = X.cols();
  if (y.size() != n) throw DataError("fit_glm: rows(X) != len(y)");
  const VectorXd w = weights.value_or(VectorXd::Ones(n));
  if ((w.array() < 0).any()) throw DataError("fit_glm: negative weights");
  const VectorXd o = offset.value_or(VectorXd::Zero(n));

  detail::check_full_rank(X, w);

  GlmFit fit;
  constexpr double kBetaTol = 1e-10;
  constexpr double kScoreTol = 1e-8;
  constexpr int kMaxIter = 100;
  constexpr double kSeparationBound = 30.0;

  if (family.is_identity()) {
    // weighted normal equations, one exact step
    MatrixXd XtWX = MatrixXd::Zero(p, p);
    VectorXd XtWy = VectorXd::Zero(p);
    for (Eigen::Index i = 0; i < n; ++i) {
      XtWX.noalias() += w[i] * X.row(i).transpose() * X.row(i);
      XtWy.noalias() += w[i] * (y[i] - o[i]) * X.row(i).transpose();
    }
    fit.beta = XtWX.ldlt().solve(XtWy);
    fit.linear_predictors = X * fit.beta + o;
    fit.fitted_means = fit.linear_predictors;
    fit.converged = true;
    fit.iterations = 1;
    if (w.sum() > static_cast<double>(p))
      fit.residual_variance = residual_variance(y - o, X, fit.beta, w);
    return fit;
  }

  VectorXd beta = VectorXd::Zero(p);
  VectorXd eta(n), mu(n);
  for (int iter = 1; iter <= kMaxIter; ++iter) {
    for (Eigen::Index i = 0; i < n; ++i) {
      eta[i] = X.row(i).dot(beta) + o[i];
      mu[i] = family.mean(eta[i]);
    }
    VectorXd score = VectorXd::Zero(p);
    MatrixXd info = MatrixXd::Zero(p, p);
    for (Eigen::Index i = 0; i < n; ++i) {
      score.noalias() += w[i] * (y[i] - mu[i]) * X.row(i).transpose();
      const double d = family.mean_deriv(eta[i]);
      info.noalias() += w[i] * d * X.row(i).transpose() * X.row(i);
    }
    const VectorXd step = info.ldlt().solve(score);
    beta += step;
    if (beta.cwiseAbs().maxCoeff() > kSeparationBound)
      throw SeparationError("perfect separation: |beta| exceeded 30");
    const double rel = step.norm() / std::max(1.0, beta.norm());
    fit.iterations = iter;
    if (rel < kBetaTol && score.norm() < kScoreTol) {
      fit.converged = true;
      break;
    }
  }
  if (!fit.converged)
    throw ConvergenceError("fit_glm: no convergence after 100 iterations; "
                           "last |beta| = " + std::to_string(beta.norm()));
  fit.beta = beta;
  fit.linear_predictors = X * beta + o;
  fit.fitted_means = fit.linear_predictors.unaryExpr(
      [&](double e) { return family.mean(e); });
  return fit;
}

}  // namespace rctsens
