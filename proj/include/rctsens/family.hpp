#pragma once

#include <cmath>
#include <limits>

namespace rctsens {

enum class FamilyKind { IdentityGaussian, LogitBernoulli };

// Canonical-link GLM family: inverse link h, its derivative, and the
// variance function. A linear predictor of -infinity is a sentinel meaning
// "certain failure" and maps to mean 0 and derivative 0 by explicit branch,
// so it never produces NaN downstream.
struct GlmFamily {
  FamilyKind kind;

  static GlmFamily identity() { return {FamilyKind::IdentityGaussian}; }
  static GlmFamily logit() { return {FamilyKind::LogitBernoulli}; }

  bool is_identity() const { return kind == FamilyKind::IdentityGaussian; }
  bool is_logit() const { return kind == FamilyKind::LogitBernoulli; }

  // inverse link h(eta)
  double mean(double eta) const {
    if (is_identity()) return eta;
    if (std::isinf(eta)) return eta < 0 ? 0.0 : 1.0;
    return 1.0 / (1.0 + std::exp(-eta));
  }

  // h'(eta)
  double mean_deriv(double eta) const {
    if (is_identity()) return 1.0;
    if (std::isinf(eta)) return 0.0;
    const double mu = mean(eta);
    return mu * (1.0 - mu);
  }

  // variance function evaluated at a mean; the identity family returns 1
  // (the unit variance, scaled by the residual variance elsewhere)
  double variance(double mu) const {
    if (is_identity()) return 1.0;
    return mu * (1.0 - mu);
  }

  const char* name() const { return is_identity() ? "identity" : "logit"; }
};

inline constexpr double kMinusInf = -std::numeric_limits<double>::infinity();

}  // namespace rctsens
