#pragma once

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <random>

#include "rctsens/inference.hpp"
#include "rctsens/mean_score.hpp"
#include "rctsens/sim/dgm.hpp"

namespace rctsens::sim {

namespace detail {

// Standard corrected sandwich analysis of a plain (optionally weighted) GLM;
// the comparator building block shared by Full, CC, MI and SM.
inline IntervalEstimate sandwich_analysis(const Eigen::VectorXd& y,
                                          const Eigen::MatrixXd& X,
                                          const GlmFamily& family, int coef,
                                          double level = 0.95,
                                          const Eigen::VectorXd* weights = nullptr) {
  const int n = static_cast<int>(y.size());
  const int p = static_cast<int>(X.cols());
  const Eigen::VectorXd w =
      weights ? *weights : Eigen::VectorXd::Ones(n);
  const GlmFit fit = fit_glm(y, X, family, w);
  Eigen::MatrixXd Bm = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd Cm = Eigen::MatrixXd::Zero(p, p);
  for (int i = 0; i < n; ++i) {
    const double eta = fit.linear_predictors[i];
    Bm.noalias() +=
        w[i] * family.mean_deriv(eta) * X.row(i).transpose() * X.row(i);
    const double e = w[i] * (y[i] - fit.fitted_means[i]);
    Cm.noalias() += e * e * X.row(i).transpose() * X.row(i);
  }
  const Eigen::MatrixXd Binv = Bm.fullPivLu().inverse();
  const Eigen::MatrixXd V = Binv * Cm * Binv.transpose();
  const int ps = p_star(family, p);
  return confidence_interval(fit.beta[coef], V(coef, coef), family,
                             static_cast<double>(n), ps, level);
}

}  // namespace detail

// Analysis before data deletion.
inline IntervalEstimate run_full(const SimData& sim, const GlmFamily& family) {
  return detail::sandwich_analysis(sim.y_full, sim.trial.XS, family,
                                   sim.trial.arm_col);
}

// Complete cases only.
inline IntervalEstimate run_cc(const TrialDataset& data,
                               const GlmFamily& family) {
  const int nobs = data.n_obs();
  Eigen::VectorXd y(nobs);
  Eigen::MatrixXd X(nobs, data.p_S());
  int k = 0;
  for (int i = 0; i < data.n(); ++i) {
    if (data.r[i] == 1) {
      y[k] = data.y[i];
      X.row(k) = data.XS.row(i);
      ++k;
    }
  }
  return detail::sandwich_analysis(y, X, family, data.arm_col);
}

// Mean score with the effective-sample-size correction.
inline IntervalEstimate run_ms(const TrialDataset& data, const DeltaSpec& delta,
                               const GlmFamily& family) {
  const MeanScoreFit fit = fit_mean_score(data, delta, family);
  const int ps = p_star(family, data.p_S());
  return confidence_interval(fit.beta_S[data.arm_col],
                             fit.V_S(data.arm_col, data.arm_col), family,
                             fit.n_eff, ps);
}

// Multiple imputation under the pattern-mixture model with offset Delta.
// Parameter draws use the normal approximation around the complete-case fit;
// results combine by Rubin's rules.
inline IntervalEstimate run_mi(const TrialDataset& data, const DeltaSpec& delta,
                               const GlmFamily& family, int m,
                               std::mt19937_64& rng, double level = 0.95) {
  if (m < 2) throw MiError("run_mi: need at least 2 imputations");
  data.validate();
  const int n = data.n();
  const Eigen::MatrixXd XP = data.XP();
  const int pP = data.p_P();

  // complete-case pattern fit and its parameter covariance
  const GlmFit pat = fit_pattern_model(data, family);
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(pP, pP);
  int nobs = 0;
  for (int i = 0; i < n; ++i) {
    if (data.r[i] != 1) continue;
    ++nobs;
    const double eta = XP.row(i).dot(pat.beta);
    info.noalias() +=
        family.mean_deriv(eta) * XP.row(i).transpose() * XP.row(i);
  }
  Eigen::MatrixXd cov = info.fullPivLu().inverse();
  if (family.is_identity()) cov *= pat.residual_variance;
  const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(
                                0.5 * (cov + cov.transpose()))
                                .matrixL();

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> estimates, variances;
  estimates.reserve(m);
  int failed = 0;
  for (int imp = 0; imp < m; ++imp) {
    try {
      double sigma2 = pat.residual_variance;
      Eigen::MatrixXd Ld = L;
      if (family.is_identity()) {
        // sigma^2 ~ sigma_hat^2 (n_cc - p) / chisq(n_cc - p)
        std::chi_squared_distribution<double> chisq(nobs - pP);
        sigma2 = pat.residual_variance * (nobs - pP) / chisq(rng);
        Ld = L * std::sqrt(sigma2 / pat.residual_variance);
      }
      Eigen::VectorXd zdraw(pP);
      for (int j = 0; j < pP; ++j) zdraw[j] = gauss(rng);
      const Eigen::VectorXd bdraw = pat.beta + Ld * zdraw;
      Eigen::VectorXd ycomp(n);
      for (int i = 0; i < n; ++i) {
        if (data.r[i] == 1) {
          ycomp[i] = data.y[i];
        } else {
          const double mu =
              family.mean(XP.row(i).dot(bdraw) + delta.value(data, i));
          if (family.is_logit())
            ycomp[i] = unif(rng) < mu ? 1.0 : 0.0;
          else
            ycomp[i] = mu + std::sqrt(sigma2) * gauss(rng);
        }
      }
      const IntervalEstimate est = detail::sandwich_analysis(
          ycomp, data.XS, family, data.arm_col, level);
      estimates.push_back(est.estimate);
      variances.push_back(est.se * est.se);
    } catch (const Error&) {
      ++failed;
    }
  }
  if (estimates.empty()) throw MiError("run_mi: all imputations failed");
  const int mOk = static_cast<int>(estimates.size());
  double qbar = 0.0, wbar = 0.0;
  for (int k = 0; k < mOk; ++k) {
    qbar += estimates[k];
    wbar += variances[k];
  }
  qbar /= mOk;
  wbar /= mOk;
  double bvar = 0.0;
  for (int k = 0; k < mOk; ++k)
    bvar += (estimates[k] - qbar) * (estimates[k] - qbar);
  bvar = mOk > 1 ? bvar / (mOk - 1) : 0.0;
  const double total = wbar + (1.0 + 1.0 / mOk) * bvar;

  IntervalEstimate out;
  out.estimate = qbar;
  out.se = std::sqrt(total);
  out.level = level;
  double q;
  if (bvar <= 0.0) {
    out.df = std::numeric_limits<double>::infinity();
    boost::math::normal_distribution<double> zdist;
    q = boost::math::quantile(zdist, 0.5 + level / 2.0);
  } else {
    const double rm = (1.0 + 1.0 / mOk) * bvar / wbar;
    out.df = (mOk - 1) * (1.0 + 1.0 / rm) * (1.0 + 1.0 / rm);
    boost::math::students_t_distribution<double> t(out.df);
    q = boost::math::quantile(t, 0.5 + level / 2.0);
  }
  out.ci_low = qbar - q * out.se;
  out.ci_high = qbar + q * out.se;
  return out;
}

namespace detail {

// Solve sum_i x_Pi { r_i / h(alpha' x_Pi + offset_i) - 1 } = 0 by damped
// Newton. Rows with r_i = 0 contribute the constant -x_Pi, so missing
// outcomes never enter.
inline Eigen::VectorXd solve_response_model(const TrialDataset& data,
                                            const Eigen::MatrixXd& X,
                                            const Eigen::VectorXd& offset) {
  const int n = data.n();
  const int p = static_cast<int>(X.cols());
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(p);
  const auto eval = [&](const Eigen::VectorXd& a, Eigen::VectorXd& G) {
    G.setZero();
    for (int i = 0; i < n; ++i) {
      if (data.r[i] == 1) {
        const double h = detail::expit(X.row(i).dot(a) + offset[i]);
        G.noalias() += (1.0 / h - 1.0) * X.row(i).transpose();
      } else {
        G.noalias() -= X.row(i).transpose();
      }
    }
  };
  Eigen::VectorXd G(p), Gnew(p);
  eval(alpha, G);
  for (int iter = 0; iter < 200; ++iter) {
    if (G.norm() < 1e-9) return alpha;
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(p, p);
    for (int i = 0; i < n; ++i) {
      if (data.r[i] != 1) continue;
      const double h = detail::expit(X.row(i).dot(alpha) + offset[i]);
      J.noalias() -= ((1.0 - h) / h) * X.row(i).transpose() * X.row(i);
    }
    Eigen::VectorXd step = -J.fullPivLu().solve(G);
    double lambda = 1.0;
    for (int half = 0; half < 40; ++half) {
      const Eigen::VectorXd cand = alpha + lambda * step;
      eval(cand, Gnew);
      if (Gnew.norm() < G.norm()) {
        alpha = cand;
        G = Gnew;
        break;
      }
      lambda *= 0.5;
      if (half == 39)
        throw SmConvergenceError("response model: line search failed");
    }
  }
  if (G.norm() >= 1e-8)
    throw SmConvergenceError("response model: no convergence");
  return alpha;
}

}  // namespace detail

// Selection model + inverse probability weighting: response model with
// sensitivity offset Delta* y, stabilised weights, weighted complete-case
// substantive fit, sandwich variance ignoring the weight estimation.
inline IntervalEstimate run_sm_ipw(const TrialDataset& data, double delta_star,
                                   const GlmFamily& family,
                                   double level = 0.95) {
  if (!std::isfinite(delta_star))
    throw InvalidDeltaError("run_sm_ipw: delta* must be finite");
  data.validate();
  const int n = data.n();
  const Eigen::MatrixXd XP = data.XP();

  // denominator model: r on x_P with offset Delta* y (observed rows only)
  Eigen::VectorXd off_den = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i)
    if (data.r[i] == 1) off_den[i] = delta_star * data.y[i];
  const Eigen::VectorXd alpha =
      detail::solve_response_model(data, XP, off_den);

  // numerator model: same equation, x_S only, no Delta* y term
  const Eigen::VectorXd zero_off = Eigen::VectorXd::Zero(n);
  const Eigen::VectorXd gamma =
      detail::solve_response_model(data, data.XS, zero_off);

  // stabilised weights on complete cases
  const int nobs = data.n_obs();
  Eigen::VectorXd y(nobs), w(nobs);
  Eigen::MatrixXd X(nobs, data.p_S());
  int k = 0;
  for (int i = 0; i < n; ++i) {
    if (data.r[i] != 1) continue;
    const double pden = detail::expit(XP.row(i).dot(alpha) + off_den[i]);
    const double pnum = detail::expit(data.XS.row(i).dot(gamma));
    const double wi = pnum / pden;
    if (wi > 1e6) throw ExtremeWeightError("run_sm_ipw: weight exceeds 1e6");
    y[k] = data.y[i];
    X.row(k) = data.XS.row(i);
    w[k] = wi;
    ++k;
  }
  return detail::sandwich_analysis(y, X, family, data.arm_col, level, &w);
}

}  // namespace rctsens::sim
