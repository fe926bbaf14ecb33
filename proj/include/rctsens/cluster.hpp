#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include "rctsens/dataset.hpp"
#include "rctsens/errors.hpp"

namespace rctsens {

struct ClusterSummary {
  int m = 0;      // total clusters
  int m_obs = 0;  // clusters with at least one observed outcome
  int m_mis = 0;  // m - m_obs
  double m_eff = std::numeric_limits<double>::quiet_NaN();
};

inline ClusterSummary summarize_clusters(const TrialDataset& data) {
  std::map<int, bool> any_obs;
  for (int i = 0; i < data.n(); ++i) {
    auto [it, inserted] = any_obs.try_emplace(data.cluster[i], false);
    if (data.r[i] == 1) it->second = true;
  }
  ClusterSummary s;
  s.m = static_cast<int>(any_obs.size());
  for (const auto& [id, obs] : any_obs)
    if (obs) ++s.m_obs;
  s.m_mis = s.m - s.m_obs;
  return s;
}

// C = sum_c (sum_{i in c} U_i)(sum_{i in c} U_i)' from per-row score rows.
inline Eigen::MatrixXd clustered_C(const Eigen::MatrixXd& U_rows,
                                   const std::vector<int>& cluster) {
  if (static_cast<Eigen::Index>(cluster.size()) != U_rows.rows())
    throw DataError("clustered_C: cluster ids do not match score rows");
  std::map<int, Eigen::VectorXd> sums;
  for (Eigen::Index i = 0; i < U_rows.rows(); ++i) {
    auto [it, inserted] = sums.try_emplace(
        cluster[i], Eigen::VectorXd::Zero(U_rows.cols()));
    it->second += U_rows.row(i).transpose();
  }
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(U_rows.cols(), U_rows.cols());
  for (const auto& [id, s] : sums) C.noalias() += s * s.transpose();
  return C;
}

// m_eff = m_obs + (I_mis / I_mis*) m_mis, alongside the usual n_eff.
inline std::pair<double, double> cluster_neff(double I_mis, double I_mis_star,
                                              const ClusterSummary& summary,
                                              int n_obs, int n_mis) {
  double ratio;
  if (I_mis_star <= 0.0) {
    if (I_mis > 1e-12)
      throw DegenerateInfluenceError("cluster_neff: I_mis* = 0 with I_mis > 0");
    ratio = n_mis == 0 ? 1.0 : 0.0;
  } else {
    ratio = I_mis / I_mis_star;
  }
  double n_eff = n_obs + ratio * n_mis;
  double m_eff = summary.m_obs + ratio * summary.m_mis;
  n_eff = std::clamp(n_eff, static_cast<double>(n_obs),
                     static_cast<double>(n_obs + n_mis));
  m_eff = std::clamp(m_eff, static_cast<double>(summary.m_obs),
                     static_cast<double>(summary.m));
  return {n_eff, m_eff};
}

struct ClusterCounts {
  int n;
  int n_obs;
  int m;
  int m_obs;
};

// Two-regressions effective sizes for clustered data. V_small, V_diff and
// V_P are the small-sample-corrected clustered sandwich variances
// (V_small = V_P + V_diff). The cluster-count equation
//   |V_small| = (m_eff/(m_eff-1))^p |V_large_n|
// is solved first, then m_eff is substituted into
//   |V_small| = ((n_eff-1)/(n_eff-p) * m_eff/(m_eff-1))^p |V_large|.
inline std::pair<double, double> cluster_neff_tworeg(
    const Eigen::MatrixXd& V_small, const Eigen::MatrixXd& V_diff,
    const Eigen::MatrixXd& V_P, const ClusterCounts& counts, int p) {
  const double n = counts.n, nobs = counts.n_obs;
  const double m = counts.m, mobs = counts.m_obs;
  if (counts.m_obs <= 1)
    throw InsufficientClustersError("cluster_neff_tworeg: m_obs <= 1");

  // back out the small-sample factors component-wise
  const Eigen::MatrixXd V_large =
      ((nobs - p) / (nobs - 1.0)) * ((mobs - 1.0) / mobs) * V_P +
      ((n - p) / (n - 1.0)) * ((m - 1.0) / m) * V_diff;
  const Eigen::MatrixXd V_large_n =
      ((mobs - 1.0) / mobs) * V_P + ((m - 1.0) / m) * V_diff;

  const auto logdet = [](const Eigen::MatrixXd& A) {
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    double ld = 0.0;
    double sign = 1.0;
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      const double d = lu.matrixLU()(i, i);
      sign *= (d < 0 ? -1.0 : 1.0);
      ld += std::log(std::abs(d));
    }
    sign *= lu.permutationP().determinant();
    if (sign <= 0.0)
      throw IllConditionedVarianceError("non-positive determinant");
    return ld;
  };

  const double ld_small = logdet(V_small);
  // cluster-count equation: rho_m = m_eff/(m_eff-1)
  const double rho_m =
      std::exp((ld_small - logdet(V_large_n)) / static_cast<double>(p));
  double m_eff;
  if (rho_m <= 1.0 + 1e-12)
    m_eff = m;
  else
    m_eff = rho_m / (rho_m - 1.0);
  m_eff = std::clamp(m_eff, mobs, m);

  // joint equation: (n_eff-1)/(n_eff-p) = rho / (m_eff/(m_eff-1))
  const double rho =
      std::exp((ld_small - logdet(V_large)) / static_cast<double>(p));
  const double kappa = m_eff / (m_eff - 1.0);
  const double g = rho / kappa;
  double n_eff;
  if (g <= 1.0 + 1e-12 || p <= 1)
    n_eff = n;
  else
    n_eff = (g * p - 1.0) / (g - 1.0);
  n_eff = std::clamp(n_eff, nobs, n);
  return {n_eff, m_eff};
}

}  // namespace rctsens
