#pragma once

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <optional>

#include "rctsens/errors.hpp"
#include "rctsens/family.hpp"

namespace rctsens {

struct IntervalEstimate {
  double estimate = 0.0;
  double se = 0.0;  // corrected
  double ci_low = 0.0;
  double ci_high = 0.0;
  double df = std::numeric_limits<double>::infinity();
  double level = 0.95;
  double correction_factor = 1.0;
};

// p* is p_S for the identity link and 1 otherwise.
inline int p_star(const GlmFamily& family, int p_S) {
  return family.is_identity() ? p_S : 1;
}

// Small-sample factor f = n_eff/(n_eff - p*); clustered variant
// f = (n_eff-1)/(n_eff-p*) * m_eff/(m_eff-1).
inline double small_sample_factor(double n_eff, int p_star, bool clustered = false,
                                  std::optional<double> m_eff = std::nullopt) {
  if (p_star == 0) return 1.0;
  if (n_eff <= p_star)
    throw DegenerateCorrectionError("small-sample factor: n_eff <= p*");
  if (!clustered) return n_eff / (n_eff - p_star);
  if (!m_eff || *m_eff <= 1.0)
    throw DegenerateCorrectionError("small-sample factor: m_eff <= 1");
  return ((n_eff - 1.0) / (n_eff - p_star)) * (*m_eff / (*m_eff - 1.0));
}

// Corrected SE and CI: t with n_eff - p* df for the identity link (clustered:
// floor(m_eff) - 1, floored no lower than 2 clusters), normal otherwise.
// Fractional df feed the continuous-df t quantile directly.
inline IntervalEstimate confidence_interval(
    double estimate, double variance, const GlmFamily& family, double n_eff,
    int p_star, double level = 0.95, bool clustered = false,
    std::optional<double> m_eff = std::nullopt) {
  if (variance <= 0.0)
    throw VarianceSingularError("confidence_interval: variance <= 0");
  if (level <= 0.0 || level >= 1.0)
    throw DataError("confidence_interval: level must be in (0,1)");
  IntervalEstimate out;
  out.estimate = estimate;
  out.level = level;
  out.correction_factor =
      small_sample_factor(n_eff, p_star, clustered, m_eff);
  out.se = std::sqrt(out.correction_factor * variance);
  double q;
  if (family.is_identity()) {
    double df;
    if (clustered) {
      if (!m_eff) throw DegreesOfFreedomError("clustered CI needs m_eff");
      df = std::max(2.0, std::floor(*m_eff)) - 1.0;
    } else {
      df = n_eff - p_star;
    }
    if (df <= 0.0)
      throw DegreesOfFreedomError("confidence_interval: df <= 0");
    out.df = df;
    boost::math::students_t_distribution<double> t(df);
    q = boost::math::quantile(t, 0.5 + level / 2.0);
  } else {
    out.df = std::numeric_limits<double>::infinity();
    boost::math::normal_distribution<double> z;
    q = boost::math::quantile(z, 0.5 + level / 2.0);
  }
  out.ci_low = estimate - q * out.se;
  out.ci_high = estimate + q * out.se;
  return out;
}

}  // namespace rctsens
