#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <sstream>

#include "rctsens/sim/study.hpp"
#include "test_support.hpp"

using namespace rctsens;
using namespace rctsens::sim;

namespace {

double expit(double e) { return 1.0 / (1.0 + std::exp(-e)); }

// analytic mean response for DGM 1: z ~ Bernoulli(1/2), no x, no y term
double dgm1_response(double a1, double alpha_z) {
  return 0.5 * expit(a1) + 0.5 * expit(a1 + alpha_z);
}

// analytic mean response for DGM 2/3: adds a standard normal x, integrated
// by Simpson's rule
double dgm23_response(double a1, double alpha_x, double alpha_z) {
  const int K = 4000;
  const double lo = -10.0, hi = 10.0, h = (hi - lo) / K;
  double s = 0.0;
  for (int k = 0; k <= K; ++k) {
    const double x = lo + k * h;
    const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    const double f =
        phi * (0.5 * expit(a1 + alpha_x * x) +
               0.5 * expit(a1 + alpha_x * x + alpha_z));
    s += (k == 0 || k == K) ? f : (k % 2 == 1 ? 4.0 * f : 2.0 * f);
  }
  return s * h / 3.0;
}

double bisect(double target, double lo, double hi,
              const std::function<double(double)>& f) {
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("calibration matches the analytic intercept") {
  SECTION("dgm 1, scenario a (target 0.75)") {
    const DgmSpec spec = DgmSpec::make(1, 'a');
    const double a1 = calibrate_intercept(spec);
    const double want = bisect(0.75, -20.0, 20.0, [&](double a) {
      return dgm1_response(a, spec.alpha_z);
    });
    CHECK(a1 == Catch::Approx(want).margin(0.02));
    CHECK(dgm1_response(a1, spec.alpha_z) == Catch::Approx(0.75).margin(0.005));
  }
  SECTION("dgm 1, scenario c (target 0.5)") {
    const DgmSpec spec = DgmSpec::make(1, 'c');
    const double a1 = calibrate_intercept(spec);
    CHECK(dgm1_response(a1, spec.alpha_z) == Catch::Approx(0.5).margin(0.005));
  }
  SECTION("dgm 2, scenario a with the covariate integrated out") {
    const DgmSpec spec = DgmSpec::make(2, 'a');
    const double a1 = calibrate_intercept(spec);
    CHECK(dgm23_response(a1, spec.alpha_x, spec.alpha_z) ==
          Catch::Approx(0.75).margin(0.005));
  }
  SECTION("unreachable target is rejected") {
    DgmSpec spec = DgmSpec::make(1, 'a');
    spec.pi_obs = 1.0;
    CHECK_THROWS_AS(calibrate_intercept(spec), CalibrationError);
  }
}

TEST_CASE("generated replicates hit the response-rate target") {
  for (const char scen : {'a', 'c'}) {
    const DgmSpec spec = DgmSpec::make(1, scen);
    const double a1 = calibrate_intercept(spec);
    double obs = 0.0;
    int total = 0;
    for (int rep = 0; rep < 50; ++rep) {
      const SimData sim = generate(spec, a1, rep);
      obs += sim.trial.r.sum();
      total += sim.trial.n();
    }
    CHECK(obs / total == Catch::Approx(spec.pi_obs).margin(0.01));
  }
}

TEST_CASE("generation is deterministic in (seed, replicate)") {
  const DgmSpec spec = DgmSpec::make(2, 'a');
  const double a1 = calibrate_intercept(spec);
  const SimData a = generate(spec, a1, 7);
  const SimData b = generate(spec, a1, 7);
  const SimData c = generate(spec, a1, 8);
  CHECK(a.y_full == b.y_full);
  CHECK(a.trial.XS == b.trial.XS);
  CHECK((a.trial.r.array() == b.trial.r.array()).all());
  CHECK(a.y_full != c.y_full);
}

TEST_CASE("dgm 1 cell frequencies match the generating model") {
  const DgmSpec spec = DgmSpec::make(1, 'a');
  const double a1 = calibrate_intercept(spec);
  // pooled counts over 200 replicates (100000 rows)
  long n_zr[2][2] = {{0, 0}, {0, 0}};
  long y1_zr[2][2] = {{0, 0}, {0, 0}};
  long nz[2] = {0, 0};
  long total = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const SimData sim = generate(spec, a1, rep);
    for (int i = 0; i < sim.trial.n(); ++i) {
      const int z = sim.trial.arm[i], r = sim.trial.r[i];
      ++n_zr[z][r];
      ++nz[z];
      ++total;
      if (sim.y_full[i] == 1.0) ++y1_zr[z][r];
    }
  }
  CHECK(static_cast<double>(nz[1]) / total == Catch::Approx(0.5).margin(0.005));
  for (int z = 0; z < 2; ++z) {
    const double pr = expit(a1 + spec.alpha_z * z);
    const double prhat = static_cast<double>(n_zr[z][1]) / nz[z];
    CHECK(prhat ==
          Catch::Approx(pr).margin(3.0 * std::sqrt(pr * (1 - pr) / nz[z])));
    for (int r = 0; r < 2; ++r) {
      const double py =
          expit(spec.beta_P1 + spec.beta_Pz * z + spec.beta_Pr * (1 - r));
      const double pyhat =
          static_cast<double>(y1_zr[z][r]) / n_zr[z][r];
      CHECK(pyhat == Catch::Approx(py).margin(
                         3.0 * std::sqrt(py * (1 - py) / n_zr[z][r])));
    }
  }
}

TEST_CASE("the estimand oracle is stable and plausible") {
  const DgmSpec spec = DgmSpec::make(1, 'a');
  const double a1 = calibrate_intercept(spec);
  const double t1 = estimand_truth(spec, a1);
  const double t2 = estimand_truth(spec, a1);
  CHECK(t1 == t2);
  // marginal over r of a pattern-mixture with beta_Pz = 1: near 1
  CHECK(t1 > 0.8);
  CHECK(t1 < 1.2);
}

TEST_CASE("cross-model calibration has the mirrored sign") {
  SECTION("dgms 1-3: selection coefficient of y is positive") {
    // beta_Pr = -1 means missing outcomes are lower, so high y predicts
    // response
    const DgmSpec spec = DgmSpec::make(1, 'a');
    const double a1 = calibrate_intercept(spec);
    const double dstar = calibrate_cross_model(spec, a1);
    CHECK(dstar > 0.2);
    CHECK(dstar < 2.0);
  }
  SECTION("dgm 4: pattern coefficient of (1-r) is negative") {
    // alpha_y = 1 means y = 1 rows respond more, so non-response flags low y
    const DgmSpec spec = DgmSpec::make(4, 'a');
    const double a1 = calibrate_intercept(spec);
    const double delta = calibrate_cross_model(spec, a1);
    CHECK(delta < -0.2);
    CHECK(delta > -2.0);
  }
}

TEST_CASE("multiple imputation with nothing missing reduces to one fit") {
  std::mt19937_64 gen(61);
  testsupport::BinaryGenOptions opt;
  opt.n = 200;
  opt.alpha1 = 50.0;  // all observed
  const TrialDataset d = testsupport::gen_binary(opt, gen);
  REQUIRE(d.n_mis() == 0);
  std::mt19937_64 rng(1);
  const IntervalEstimate mi =
      run_mi(d, DeltaSpec::constant(-1.0), GlmFamily::logit(), 5, rng);
  const GlmFit direct = fit_glm(d.y, d.XS, GlmFamily::logit());
  CHECK(mi.estimate == Catch::Approx(direct.beta[1]).margin(1e-10));
  CHECK(std::isinf(mi.df));  // between-imputation variance is zero
}

TEST_CASE("multiple imputation is stable in the number of imputations") {
  std::mt19937_64 gen(62);
  testsupport::BinaryGenOptions opt;
  opt.n = 500;
  const TrialDataset d = testsupport::gen_binary(opt, gen);
  const DeltaSpec delta = DeltaSpec::constant(-1.0);
  std::mt19937_64 r1(100), r2(200);
  const IntervalEstimate a = run_mi(d, delta, GlmFamily::logit(), 30, r1);
  const IntervalEstimate b = run_mi(d, delta, GlmFamily::logit(), 200, r2);
  CHECK(a.estimate == Catch::Approx(b.estimate).margin(0.1));
  CHECK(a.se == Catch::Approx(b.se).epsilon(0.2));
  std::mt19937_64 r3(1);
  CHECK_THROWS_AS(run_mi(d, delta, GlmFamily::logit(), 1, r3), MiError);
}

TEST_CASE("multiple imputation tracks the mean score point estimate") {
  std::mt19937_64 gen(63);
  testsupport::BinaryGenOptions opt;
  opt.n = 2000;
  const TrialDataset d = testsupport::gen_binary(opt, gen);
  const DeltaSpec delta = DeltaSpec::constant(-1.0);
  const IntervalEstimate ms = run_ms(d, delta, GlmFamily::logit());
  std::mt19937_64 rng(300);
  const IntervalEstimate mi = run_mi(d, delta, GlmFamily::logit(), 100, rng);
  CHECK(mi.estimate == Catch::Approx(ms.estimate).margin(4.0 * ms.se /
                                                         std::sqrt(100.0)));
}

TEST_CASE("selection model with delta* 0 and no auxiliaries equals "
          "complete cases") {
  std::mt19937_64 gen(64);
  testsupport::BinaryGenOptions opt;
  opt.n = 400;
  const TrialDataset d = testsupport::gen_binary(opt, gen);
  REQUIRE(d.p_A() == 0);
  const IntervalEstimate sm = run_sm_ipw(d, 0.0, GlmFamily::logit());
  const IntervalEstimate cc = run_cc(d, GlmFamily::logit());
  CHECK(sm.estimate == Catch::Approx(cc.estimate).margin(1e-8));
  CHECK(sm.se == Catch::Approx(cc.se).margin(1e-8));
}

TEST_CASE("selection model response equation is solved to tolerance") {
  std::mt19937_64 gen(65);
  testsupport::BinaryGenOptions opt;
  opt.n = 400;
  opt.betax = 0.7;
  opt.x_as_aux = true;
  const TrialDataset d = testsupport::gen_binary(opt, gen);
  const double dstar = 0.8;
  Eigen::VectorXd off = Eigen::VectorXd::Zero(d.n());
  for (int i = 0; i < d.n(); ++i)
    if (d.r[i] == 1) off[i] = dstar * d.y[i];
  const Eigen::MatrixXd XP = d.XP();
  const Eigen::VectorXd alpha = sim::detail::solve_response_model(d, XP, off);
  Eigen::VectorXd G = Eigen::VectorXd::Zero(XP.cols());
  for (int i = 0; i < d.n(); ++i) {
    if (d.r[i] == 1)
      G += (1.0 / expit(XP.row(i).dot(alpha) + off[i]) - 1.0) *
           XP.row(i).transpose();
    else
      G -= XP.row(i).transpose();
  }
  CHECK(G.norm() < 1e-8);
}

TEST_CASE("a small study runs end to end and is thread-count invariant") {
  const DgmSpec spec = DgmSpec::make(1, 'a', 777);
  StudyConfig cfg;
  cfg.reps = 12;
  cfg.methods = {Method::Full, Method::CC, Method::MS, Method::MI, Method::SM};
  cfg.mi_imputations = 5;
  cfg.threads = 1;
  const SimulationReport one = run_study(spec, cfg);
  cfg.threads = 4;
  const SimulationReport four = run_study(spec, cfg);
  REQUIRE(one.methods.size() == 5);
  REQUIRE(four.methods.size() == 5);
  for (size_t k = 0; k < one.methods.size(); ++k) {
    CHECK(one.methods[k].bias == four.methods[k].bias);
    CHECK(one.methods[k].emp_se == four.methods[k].emp_se);
    CHECK(one.methods[k].coverage == four.methods[k].coverage);
    CHECK(std::isfinite(one.methods[k].model_se));
  }
  CHECK(one.truth == four.truth);
  CHECK(one.failures == 0);

  std::ostringstream out;
  emit_report(one, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line ==
        "dgm,scenario,method,reps,failures,truth,bias,bias_mc,emp_se,"
        "emp_se_mc,model_se,coverage,coverage_mc");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 5);
}
