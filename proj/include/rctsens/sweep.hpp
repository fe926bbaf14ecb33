#pragma once

#include <cstdio>
#include <fstream>
#include <ostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rctsens/csv.hpp"
#include "rctsens/dataset.hpp"
#include "rctsens/inference.hpp"
#include "rctsens/mean_score.hpp"
#include "rctsens/two_linreg.hpp"

namespace rctsens {

enum class SweepPattern { Arm1Only, BothArms, Arm0Only };

inline const char* pattern_name(SweepPattern p) {
  switch (p) {
    case SweepPattern::Arm1Only: return "arm1";
    case SweepPattern::BothArms: return "both";
    case SweepPattern::Arm0Only: return "arm0";
  }
  return "?";
}

struct SweepRow {
  SweepPattern pattern;
  double delta;
  double estimate = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double n_eff = 0.0;
  std::string error;  // nonempty when the fit failed at this grid point
};

enum class Engine { Auto, Full, TwoReg };

// Per-reason delta handling: a reason category either tracks the swept delta
// or is pinned to a fixed value (0 for "assume MAR for this reason").
struct ReasonRule {
  bool sweep = true;
  double fixed = 0.0;
};

struct RunConfig {
  ColumnSpec columns;
  GlmFamily family = GlmFamily::identity();
  double grid_min = 0.0;
  double grid_max = 0.0;
  int grid_steps = 1;
  std::vector<SweepPattern> patterns = {SweepPattern::Arm1Only,
                                        SweepPattern::BothArms,
                                        SweepPattern::Arm0Only};
  double level = 0.95;
  Engine engine = Engine::Auto;
  std::map<std::string, ReasonRule> reason_rules;  // empty: no reason mapping

  std::vector<double> grid() const {
    if (grid_steps < 1) throw DataError("delta grid needs steps >= 1");
    if (grid_min > grid_max) throw DataError("delta grid: min > max");
    std::vector<double> g;
    if (grid_steps == 1) {
      g.push_back(grid_min);
    } else {
      for (int k = 0; k < grid_steps; ++k)
        g.push_back(grid_min +
                    (grid_max - grid_min) * k / (grid_steps - 1.0));
    }
    return g;
  }
};

namespace detail {

inline DeltaSpec make_delta(const RunConfig& config, SweepPattern pattern,
                            double delta) {
  const double d1 = pattern == SweepPattern::Arm0Only ? 0.0 : delta;
  const double d0 = pattern == SweepPattern::Arm1Only ? 0.0 : delta;
  if (config.reason_rules.empty()) return DeltaSpec::per_arm(d0, d1);
  std::map<std::string, std::pair<double, double>> m;
  for (const auto& [cat, rule] : config.reason_rules) {
    if (rule.sweep)
      m[cat] = {d0, d1};
    else
      m[cat] = {rule.fixed, rule.fixed};
  }
  return DeltaSpec::per_reason(std::move(m));
}

inline bool tworeg_eligible(const RunConfig& config, const TrialDataset& data,
                            const DeltaSpec& delta) {
  return config.family.is_identity() && data.p_A() == 0 &&
         !delta.any_sentinel(data);
}

}  // namespace detail

// One sensitivity sweep: for every pattern and grid point, fit, attach the
// corrected CI and n_eff. Fit failures are recorded per row and the sweep
// continues.
inline std::vector<SweepRow> run_sweep(const TrialDataset& data,
                                       const RunConfig& config) {
  data.validate();
  std::vector<SweepRow> rows;
  const auto grid = config.grid();
  for (const SweepPattern pattern : config.patterns) {
    for (const double delta : grid) {
      SweepRow row;
      row.pattern = pattern;
      row.delta = delta;
      try {
        const DeltaSpec spec = detail::make_delta(config, pattern, delta);
        const bool fast = config.engine == Engine::TwoReg ||
                          (config.engine == Engine::Auto &&
                           detail::tworeg_eligible(config, data, spec));
        const int ps = p_star(config.family, data.p_S());
        double estimate, variance, n_eff;
        std::optional<double> m_eff;
        if (fast) {
          const TwoRegFit fit = fit_two_linreg(data, spec, config.family);
          estimate = fit.beta_S[data.arm_col];
          // V_small already carries the small-sample correction
          variance = fit.V_small(data.arm_col, data.arm_col);
          n_eff = fit.n_eff;
          if (data.clustered()) m_eff = fit.m_eff;
          const double f =
              small_sample_factor(n_eff, ps, data.clustered(), m_eff);
          const IntervalEstimate ci = confidence_interval(
              estimate, variance / f, config.family, n_eff, ps, config.level,
              data.clustered(), m_eff);
          row.estimate = estimate;
          row.se = ci.se;
          row.ci_low = ci.ci_low;
          row.ci_high = ci.ci_high;
          row.n_eff = n_eff;
        } else {
          const MeanScoreFit fit = fit_mean_score(data, spec, config.family);
          estimate = fit.beta_S[data.arm_col];
          variance = fit.V_S(data.arm_col, data.arm_col);
          n_eff = fit.n_eff;
          if (data.clustered()) m_eff = fit.m_eff;
          const IntervalEstimate ci = confidence_interval(
              estimate, variance, config.family, n_eff, ps, config.level,
              data.clustered(), m_eff);
          row.estimate = estimate;
          row.se = ci.se;
          row.ci_low = ci.ci_low;
          row.ci_high = ci.ci_high;
          row.n_eff = n_eff;
        }
      } catch (const Error& e) {
        row.error = e.what();
      }
      rows.push_back(row);
    }
  }
  return rows;
}

// Delimited output, 10 significant digits, deterministic ordering.
inline void emit_results(const std::vector<SweepRow>& rows, std::ostream& out) {
  if (rows.empty()) throw DataError("emit_results: no rows");
  out << "pattern,delta,estimate,se,ci_low,ci_high,n_eff\n";
  char buf[512];
  for (const auto& row : rows) {
    if (!row.error.empty()) {
      std::snprintf(buf, sizeof(buf), "%s,%.10g,error,error,error,error,error\n",
                    pattern_name(row.pattern), row.delta);
    } else {
      std::snprintf(buf, sizeof(buf),
                    "%s,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                    pattern_name(row.pattern), row.delta, row.estimate, row.se,
                    row.ci_low, row.ci_high, row.n_eff);
    }
    out << buf;
  }
}

inline void emit_results(const std::vector<SweepRow>& rows,
                         const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  emit_results(rows, out);
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace rctsens
