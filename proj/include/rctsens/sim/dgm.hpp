#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <random>
#include <tuple>

#include "rctsens/dataset.hpp"
#include "rctsens/glm.hpp"

namespace rctsens::sim {

// Data-generating mechanisms 1-4 with scenario grid a-d. The scenario
// parameter n is the total sample size per replicate.
struct DgmSpec {
  int dgm = 1;            // 1-3 pattern-mixture, 4 selection
  char scenario = 'a';
  int n = 500;
  double pi_obs = 0.75;   // target response probability
  double alpha_x = 1.0, alpha_z = 1.0, alpha_y = 1.0;
  double beta_P1 = 0.0, beta_Px = 1.0, beta_Pz = 1.0, beta_Pr = -1.0;
  double beta_S1 = 0.0, beta_Sx = 1.0, beta_Sz = 1.0;  // DGM 4 only
  std::uint64_t seed = 20240901;

  bool has_x() const { return dgm >= 2; }
  // x enters the substantive model in DGMs 3 and 4; in DGM 2 it is auxiliary
  bool x_substantive() const { return dgm >= 3; }

  static DgmSpec make(int dgm, char scenario, std::uint64_t seed = 20240901) {
    if (dgm < 1 || dgm > 4) throw DataError("dgm must be 1..4");
    DgmSpec s;
    s.dgm = dgm;
    s.scenario = scenario;
    s.seed = seed;
    switch (scenario) {
      case 'a': break;
      case 'b': s.n = 2000; break;
      case 'c': s.pi_obs = 0.5; break;
      case 'd': s.beta_Pr = -2.0; break;
      default: throw DataError("scenario must be a..d");
    }
    return s;
  }
};

struct SimData {
  TrialDataset trial;   // y blanked where r == 0
  Eigen::VectorXd y_full;  // pre-deletion outcomes
};

namespace detail {

inline std::mt19937_64 replicate_rng(std::uint64_t master, std::uint64_t stream,
                                     std::uint64_t replicate) {
  std::seed_seq seq{static_cast<std::uint32_t>(master),
                    static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(replicate),
                    static_cast<std::uint32_t>(replicate >> 32)};
  return std::mt19937_64(seq);
}

inline double expit(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

// Raw draws shared by generation, calibration and the large-sample oracles.
struct RawDraw {
  Eigen::VectorXi z;
  Eigen::VectorXd x;
  Eigen::VectorXi r;
  Eigen::VectorXd y;
};

inline RawDraw draw(const DgmSpec& spec, double alpha1, int n,
                    std::mt19937_64& rng) {
  RawDraw d;
  d.z.resize(n);
  d.x = Eigen::VectorXd::Zero(n);
  d.r.resize(n);
  d.y.resize(n);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    d.z[i] = coin(rng) ? 1 : 0;
    if (spec.has_x()) d.x[i] = gauss(rng);
    if (spec.dgm <= 3) {
      const double etaR = alpha1 + spec.alpha_x * d.x[i] * (spec.has_x() ? 1 : 0) +
                          spec.alpha_z * d.z[i];
      d.r[i] = unif(rng) < expit(etaR) ? 1 : 0;
      const double etaY = spec.beta_P1 +
                          (spec.has_x() ? spec.beta_Px * d.x[i] : 0.0) +
                          spec.beta_Pz * d.z[i] + spec.beta_Pr * (1 - d.r[i]);
      d.y[i] = unif(rng) < expit(etaY) ? 1.0 : 0.0;
    } else {
      const double etaY = spec.beta_S1 + spec.beta_Sx * d.x[i] +
                          spec.beta_Sz * d.z[i];
      d.y[i] = unif(rng) < expit(etaY) ? 1.0 : 0.0;
      const double etaR = alpha1 + spec.alpha_x * d.x[i] +
                          spec.alpha_z * d.z[i] + spec.alpha_y * d.y[i];
      d.r[i] = unif(rng) < expit(etaR) ? 1 : 0;
    }
  }
  return d;
}

inline TrialDataset to_trial(const DgmSpec& spec, const RawDraw& d) {
  const int n = static_cast<int>(d.y.size());
  TrialDataset t;
  t.arm = d.z;
  t.r = d.r;
  t.y.resize(n);
  for (int i = 0; i < n; ++i)
    t.y[i] = d.r[i] == 1 ? d.y[i]
                         : std::numeric_limits<double>::quiet_NaN();
  const bool x_in_S = spec.has_x() && spec.x_substantive();
  t.XS.resize(n, x_in_S ? 3 : 2);
  t.XS.col(0).setOnes();
  t.XS.col(1) = d.z.cast<double>();
  if (x_in_S) t.XS.col(2) = d.x;
  t.arm_col = 1;
  if (spec.dgm == 2) {
    t.XA = d.x;
  } else {
    t.XA.resize(n, 0);
  }
  return t;
}

constexpr std::uint64_t kCalibrationStream = 0x9e3779b9;
constexpr std::uint64_t kOracleStream = 0x7f4a7c15;
constexpr int kOracleRows = 1'000'000;

}  // namespace detail

// Bisect alpha_1 so that the mean response probability on a fixed
// million-row calibration draw hits the target pi_obs.
inline double calibrate_intercept(const DgmSpec& spec) {
  if (spec.pi_obs <= 0.0 || spec.pi_obs >= 1.0)
    throw CalibrationError("pi_obs must be in (0,1)");
  auto rng = detail::replicate_rng(spec.seed, detail::kCalibrationStream, 0);
  const int N = detail::kOracleRows;
  // covariate part of the response linear predictor, alpha_1 excluded
  Eigen::VectorXd base(N);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int i = 0; i < N; ++i) {
    const int z = coin(rng) ? 1 : 0;
    const double x = spec.has_x() ? gauss(rng) : 0.0;
    double b = spec.alpha_z * z + (spec.has_x() ? spec.alpha_x * x : 0.0);
    if (spec.dgm == 4) {
      const double etaY = spec.beta_S1 + spec.beta_Sx * x + spec.beta_Sz * z;
      const double y = unif(rng) < detail::expit(etaY) ? 1.0 : 0.0;
      b += spec.alpha_y * y;
    }
    base[i] = b;
  }
  const auto mean_response = [&](double a1) {
    double s = 0.0;
    for (int i = 0; i < N; ++i) s += detail::expit(a1 + base[i]);
    return s / N;
  };
  double lo = -20.0, hi = 20.0;
  if (mean_response(lo) > spec.pi_obs || mean_response(hi) < spec.pi_obs)
    throw CalibrationError("target response rate unreachable in [-20,20]");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_response(mid) < spec.pi_obs ? lo : hi) = mid;
    if (hi - lo < 1e-12) break;
  }
  const double a1 = 0.5 * (lo + hi);
  if (std::abs(mean_response(a1) - spec.pi_obs) > 0.002)
    throw CalibrationError("calibration did not reach target");
  return a1;
}

// One replicate; deterministic under (seed, replicate).
inline SimData generate(const DgmSpec& spec, double alpha1,
                        std::uint64_t replicate = 0) {
  auto rng = detail::replicate_rng(spec.seed, 1, replicate);
  const auto d = detail::draw(spec, alpha1, spec.n, rng);
  SimData out;
  out.trial = detail::to_trial(spec, d);
  out.y_full = d.y;
  return out;
}

namespace detail {

struct OracleKey {
  int dgm;
  char scenario;
  std::uint64_t seed;
  auto tie() const { return std::tie(dgm, scenario, seed); }
  bool operator<(const OracleKey& o) const { return tie() < o.tie(); }
};

// One million-row pre-deletion draw per spec, shared by the truth and
// cross-model oracles.
inline const RawDraw& oracle_draw(const DgmSpec& spec, double alpha1) {
  static std::map<OracleKey, RawDraw> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  const OracleKey key{spec.dgm, spec.scenario, spec.seed};
  auto it = cache.find(key);
  if (it == cache.end()) {
    auto rng = replicate_rng(spec.seed, kOracleStream, 0);
    it = cache.emplace(key, draw(spec, alpha1, kOracleRows, rng)).first;
  }
  return it->second;
}

}  // namespace detail

// beta_Sz from the substantive model fitted to the million-row pre-deletion
// draw; cached per spec.
inline double estimand_truth(const DgmSpec& spec, double alpha1) {
  static std::map<detail::OracleKey, double> cache;
  static std::mutex mu;
  {
    std::lock_guard<std::mutex> lock(mu);
    const auto it = cache.find({spec.dgm, spec.scenario, spec.seed});
    if (it != cache.end()) return it->second;
  }
  const auto& d = detail::oracle_draw(spec, alpha1);
  const int N = static_cast<int>(d.y.size());
  const bool x_in_S = spec.has_x() && spec.x_substantive();
  Eigen::MatrixXd X(N, x_in_S ? 3 : 2);
  X.col(0).setOnes();
  X.col(1) = d.z.cast<double>();
  if (x_in_S) X.col(2) = d.x;
  const GlmFit fit = fit_glm(d.y, X, GlmFamily::logit());
  const double truth = fit.beta[1];
  std::lock_guard<std::mutex> lock(mu);
  cache[{spec.dgm, spec.scenario, spec.seed}] = truth;
  return truth;
}

// Cross-model sensitivity parameters from the million-row draw: for DGM 4,
// the pattern-mixture coefficient of (1-r) (Delta used by MS/MI); for DGMs
// 1-3, the selection-model coefficient of y (Delta* used by SM).
inline double calibrate_cross_model(const DgmSpec& spec, double alpha1) {
  const auto& d = detail::oracle_draw(spec, alpha1);
  const int N = static_cast<int>(d.y.size());
  if (spec.dgm == 4) {
    // logit y on (1, x, z, 1-r)
    Eigen::MatrixXd X(N, 4);
    X.col(0).setOnes();
    X.col(1) = d.x;
    X.col(2) = d.z.cast<double>();
    X.col(3) = (1 - d.r.array()).cast<double>();
    return fit_glm(d.y, X, GlmFamily::logit()).beta[3];
  }
  // logit r on (x_P, y)
  const bool hx = spec.has_x();
  Eigen::MatrixXd X(N, hx ? 4 : 3);
  X.col(0).setOnes();
  int j = 1;
  if (hx) X.col(j++) = d.x;
  X.col(j++) = d.z.cast<double>();
  X.col(j) = d.y;
  const Eigen::VectorXd rv = d.r.cast<double>();
  return fit_glm(rv, X, GlmFamily::logit()).beta[j];
}

}  // namespace rctsens::sim
