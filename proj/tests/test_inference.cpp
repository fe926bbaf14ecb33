#include <catch2/catch_amalgamated.hpp>

#include "rctsens/inference.hpp"

using namespace rctsens;

TEST_CASE("p_star is p_S for identity and 1 for logit") {
  CHECK(p_star(GlmFamily::identity(), 5) == 5);
  CHECK(p_star(GlmFamily::logit(), 5) == 1);
}

TEST_CASE("small-sample factor") {
  SECTION("worked example: n_eff 100, p* 5") {
    CHECK(small_sample_factor(100.0, 5) == Catch::Approx(100.0 / 95.0));
  }
  SECTION("p* of zero means no correction") {
    CHECK(small_sample_factor(100.0, 0) == 1.0);
  }
  SECTION("clustered example: n_eff 100, p* 5, m_eff 10") {
    CHECK(small_sample_factor(100.0, 5, true, 10.0) ==
          Catch::Approx((99.0 / 95.0) * (10.0 / 9.0)));
  }
  SECTION("n_eff at or below p* is degenerate") {
    CHECK_THROWS_AS(small_sample_factor(5.0, 5), DegenerateCorrectionError);
  }
  SECTION("clustered factor needs m_eff above 1") {
    CHECK_THROWS_AS(small_sample_factor(100.0, 5, true, 1.0),
                    DegenerateCorrectionError);
    CHECK_THROWS_AS(small_sample_factor(100.0, 5, true, std::nullopt),
                    DegenerateCorrectionError);
  }
}

TEST_CASE("normal confidence interval reproduces 1.959964 standard errors") {
  const IntervalEstimate ci =
      confidence_interval(1.0, 0.04, GlmFamily::logit(), 400.0, 1);
  CHECK(ci.se == Catch::Approx(std::sqrt(0.04 * 400.0 / 399.0)));
  const double q = (ci.ci_high - ci.estimate) / ci.se;
  CHECK(q == Catch::Approx(1.9599639845).margin(1e-8));
  CHECK(ci.ci_low == Catch::Approx(2.0 - ci.ci_high).margin(1e-12));
}

TEST_CASE("t interval with 25 df is wider than the normal interval") {
  const IntervalEstimate t =
      confidence_interval(0.0, 0.04, GlmFamily::identity(), 28.0, 3);
  CHECK(t.df == Catch::Approx(25.0));
  const double qt = t.ci_high / t.se;
  CHECK(qt == Catch::Approx(2.0595385528).margin(1e-8));
  CHECK(qt > 1.9599639845);
}

TEST_CASE("interval width decreases with n_eff at fixed variance") {
  double prev = std::numeric_limits<double>::infinity();
  for (const double ne : {10.0, 30.0, 100.0, 1000.0}) {
    const IntervalEstimate ci =
        confidence_interval(0.0, 1.0, GlmFamily::identity(), ne, 3);
    const double width = ci.ci_high - ci.ci_low;
    CHECK(width < prev);
    prev = width;
  }
}

TEST_CASE("t interval approaches the normal interval for large n_eff") {
  const IntervalEstimate t =
      confidence_interval(0.0, 1.0, GlmFamily::identity(), 1e6, 2);
  const IntervalEstimate z =
      confidence_interval(0.0, 1.0, GlmFamily::logit(), 1e6, 1);
  CHECK(std::abs(t.ci_high - z.ci_high) < 1e-4);
}

TEST_CASE("clustered identity interval uses floor(m_eff) - 1 df") {
  const IntervalEstimate ci = confidence_interval(
      0.0, 1.0, GlmFamily::identity(), 80.0, 3, 0.95, true, 12.7);
  CHECK(ci.df == 11.0);
  // never fewer than one df, even with m_eff below 2
  const IntervalEstimate lo = confidence_interval(
      0.0, 1.0, GlmFamily::identity(), 80.0, 3, 0.95, true, 1.4);
  CHECK(lo.df == 1.0);
}

TEST_CASE("invalid inputs are rejected") {
  CHECK_THROWS_AS(confidence_interval(0.0, 0.0, GlmFamily::identity(), 50, 2),
                  VarianceSingularError);
  CHECK_THROWS_AS(
      confidence_interval(0.0, 1.0, GlmFamily::identity(), 50, 2, 1.5),
      DataError);
}

TEST_CASE("level is honoured") {
  const IntervalEstimate ci90 =
      confidence_interval(0.0, 1.0, GlmFamily::logit(), 100.0, 1, 0.90);
  CHECK(ci90.ci_high / ci90.se == Catch::Approx(1.6448536270).margin(1e-8));
}
