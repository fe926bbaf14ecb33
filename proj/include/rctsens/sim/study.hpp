#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "rctsens/sim/dgm.hpp"
#include "rctsens/sim/methods.hpp"

namespace rctsens::sim {

enum class Method { Full, CC, MS, MI, SM };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::Full: return "full";
    case Method::CC: return "cc";
    case Method::MS: return "ms";
    case Method::MI: return "mi";
    case Method::SM: return "sm";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (Method m : {Method::Full, Method::CC, Method::MS, Method::MI, Method::SM})
    if (s == method_name(m)) return m;
  throw DataError("unknown method: " + s);
}

struct MethodSummary {
  Method method;
  double bias = 0.0;
  double bias_mc = 0.0;      // empSE / sqrt(reps)
  double emp_se = 0.0;
  double emp_se_mc = 0.0;    // empSE / sqrt(2(reps-1))
  double model_se = 0.0;     // mean of reported SEs
  double coverage = 0.0;     // percent
  double coverage_mc = 0.0;  // percentage points
  int reps_used = 0;
};

struct SimulationReport {
  DgmSpec spec;
  double truth = 0.0;
  double delta = 0.0;       // sensitivity parameter given to MS/MI
  double delta_star = 0.0;  // sensitivity parameter given to SM
  int reps = 0;
  int failures = 0;
  std::vector<MethodSummary> methods;
};

struct StudyConfig {
  int reps = 1000;
  std::vector<Method> methods = {Method::Full, Method::CC, Method::MS,
                                 Method::MI, Method::SM};
  int mi_imputations = 30;
  int threads = 0;  // 0: hardware concurrency
};

// Monte Carlo study over one DGM/scenario. Replicates run in parallel but
// per-replicate RNG streams are keyed by (master seed, replicate index), so
// the report is invariant to the thread count.
inline SimulationReport run_study(const DgmSpec& spec,
                                  const StudyConfig& config) {
  if (config.reps < 2) throw StudyError("run_study: need reps >= 2");
  const double alpha1 = calibrate_intercept(spec);
  const double truth = estimand_truth(spec, alpha1);

  const bool want_ms_like =
      std::any_of(config.methods.begin(), config.methods.end(),
                  [](Method m) { return m == Method::MS || m == Method::MI; });
  const bool want_sm =
      std::any_of(config.methods.begin(), config.methods.end(),
                  [](Method m) { return m == Method::SM; });
  // Delta for MS/MI: the generating pattern-model coefficient on (1-r) for
  // DGMs 1-3, the large-sample pattern fit for DGM 4. Delta* for SM is the
  // mirror image.
  double delta = 0.0, delta_star = 0.0;
  if (want_ms_like)
    delta = spec.dgm <= 3 ? spec.beta_Pr : calibrate_cross_model(spec, alpha1);
  if (want_sm)
    delta_star =
        spec.dgm == 4 ? spec.alpha_y : calibrate_cross_model(spec, alpha1);

  const GlmFamily family = GlmFamily::logit();
  const DeltaSpec dspec = DeltaSpec::constant(delta);
  const int nm = static_cast<int>(config.methods.size());

  struct RepResult {
    bool failed = false;
    std::vector<double> est, se;
    std::vector<int> covered;
  };
  std::vector<RepResult> results(config.reps);

  const auto run_one = [&](int rep) {
    RepResult res;
    res.est.resize(nm);
    res.se.resize(nm);
    res.covered.resize(nm);
    try {
      const SimData sim = generate(spec, alpha1, static_cast<std::uint64_t>(rep));
      auto mi_rng = detail::replicate_rng(spec.seed, 2, static_cast<std::uint64_t>(rep));
      for (int k = 0; k < nm; ++k) {
        IntervalEstimate e;
        switch (config.methods[k]) {
          case Method::Full: e = run_full(sim, family); break;
          case Method::CC: e = run_cc(sim.trial, family); break;
          case Method::MS: e = run_ms(sim.trial, dspec, family); break;
          case Method::MI:
            e = run_mi(sim.trial, dspec, family, config.mi_imputations, mi_rng);
            break;
          case Method::SM: e = run_sm_ipw(sim.trial, delta_star, family); break;
        }
        res.est[k] = e.estimate;
        res.se[k] = e.se;
        res.covered[k] = (e.ci_low <= truth && truth <= e.ci_high) ? 1 : 0;
      }
    } catch (const Error&) {
      res.failed = true;
    }
    results[rep] = std::move(res);
  };

  int nthreads = config.threads > 0
                     ? config.threads
                     : static_cast<int>(std::thread::hardware_concurrency());
  nthreads = std::max(1, std::min(nthreads, config.reps));
  if (nthreads == 1) {
    for (int rep = 0; rep < config.reps; ++rep) run_one(rep);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t)
      pool.emplace_back([&] {
        for (int rep = next.fetch_add(1); rep < config.reps;
             rep = next.fetch_add(1))
          run_one(rep);
      });
    for (auto& th : pool) th.join();
  }

  SimulationReport report;
  report.spec = spec;
  report.truth = truth;
  report.delta = delta;
  report.delta_star = delta_star;
  report.reps = config.reps;
  for (const auto& r : results)
    if (r.failed) ++report.failures;
  const int used = config.reps - report.failures;
  if (report.failures > 0 &&
      report.failures > 0.01 * static_cast<double>(config.reps))
    throw StudyError("run_study: more than 1% of replicates failed (" +
                     std::to_string(report.failures) + "/" +
                     std::to_string(config.reps) + ")");
  if (used < 2) throw StudyError("run_study: fewer than 2 usable replicates");

  for (int k = 0; k < nm; ++k) {
    MethodSummary s;
    s.method = config.methods[k];
    s.reps_used = used;
    double mean_est = 0.0, mean_se = 0.0, cover = 0.0;
    for (const auto& r : results) {
      if (r.failed) continue;
      mean_est += r.est[k];
      mean_se += r.se[k];
      cover += r.covered[k];
    }
    mean_est /= used;
    mean_se /= used;
    cover /= used;
    double ss = 0.0;
    for (const auto& r : results) {
      if (r.failed) continue;
      ss += (r.est[k] - mean_est) * (r.est[k] - mean_est);
    }
    s.emp_se = std::sqrt(ss / (used - 1));
    s.bias = mean_est - truth;
    s.bias_mc = s.emp_se / std::sqrt(static_cast<double>(used));
    s.emp_se_mc = s.emp_se / std::sqrt(2.0 * (used - 1));
    s.model_se = mean_se;
    s.coverage = 100.0 * cover;
    s.coverage_mc = 100.0 * std::sqrt(cover * (1.0 - cover) / used);
    report.methods.push_back(s);
  }
  return report;
}

// Delimited report: one row per method with bias, empirical SE, model SE,
// coverage and Monte Carlo errors.
inline void emit_report(const SimulationReport& report, std::ostream& out) {
  out << "dgm,scenario,method,reps,failures,truth,bias,bias_mc,emp_se,"
         "emp_se_mc,model_se,coverage,coverage_mc\n";
  char buf[512];
  for (const auto& s : report.methods) {
    std::snprintf(buf, sizeof(buf),
                  "%d,%c,%s,%d,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,"
                  "%.10g\n",
                  report.spec.dgm, report.spec.scenario, method_name(s.method),
                  s.reps_used, report.failures, report.truth, s.bias, s.bias_mc,
                  s.emp_se, s.emp_se_mc, s.model_se, s.coverage, s.coverage_mc);
    out << buf;
  }
}

inline void emit_report(const SimulationReport& report,
                        const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  emit_report(report, out);
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace rctsens::sim
