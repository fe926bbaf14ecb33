// Command-line front end: `sweep` runs a delta sensitivity analysis on a
// trial dataset; `simulate` runs the Monte Carlo benchmark.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "rctsens/rctsens.hpp"

namespace {

rctsens::GlmFamily parse_family(const std::string& s) {
  if (s == "identity") return rctsens::GlmFamily::identity();
  if (s == "logit") return rctsens::GlmFamily::logit();
  throw CLI::ValidationError("--family must be identity or logit");
}

// MIN:MAX:STEPS
void parse_grid(const std::string& s, rctsens::RunConfig& config) {
  double mn, mx;
  int steps;
  if (std::sscanf(s.c_str(), "%lf:%lf:%d", &mn, &mx, &steps) != 3)
    throw CLI::ValidationError("--delta-grid expects MIN:MAX:STEPS");
  config.grid_min = std::min(mn, mx);
  config.grid_max = std::max(mn, mx);
  config.grid_steps = steps;
}

std::vector<rctsens::SweepPattern> parse_patterns(const std::string& s) {
  using rctsens::SweepPattern;
  if (s == "all")
    return {SweepPattern::Arm1Only, SweepPattern::BothArms,
            SweepPattern::Arm0Only};
  if (s == "arm1") return {SweepPattern::Arm1Only};
  if (s == "both") return {SweepPattern::BothArms};
  if (s == "arm0") return {SweepPattern::Arm0Only};
  throw CLI::ValidationError("--pattern must be both|arm1|arm0|all");
}

// category=sweep | category=NUMBER | category=-inf
void parse_reason_rules(const std::vector<std::string>& entries,
                        rctsens::RunConfig& config) {
  for (const auto& e : entries) {
    const auto eq = e.find('=');
    if (eq == std::string::npos)
      throw CLI::ValidationError("--reason-delta expects CATEGORY=VALUE");
    const std::string cat = e.substr(0, eq);
    const std::string val = e.substr(eq + 1);
    rctsens::ReasonRule rule;
    if (val == "sweep") {
      rule.sweep = true;
    } else if (val == "-inf") {
      rule.sweep = false;
      rule.fixed = rctsens::kMinusInf;
    } else {
      rule.sweep = false;
      rule.fixed = std::stod(val);
    }
    config.reason_rules[cat] = rule;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sensitivity analysis for randomised trials with incomplete "
               "outcomes (mean score method)"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a config file");

  // ---- sweep ----
  auto* sweep = app.add_subcommand(
      "sweep", "Delta sensitivity sweep over a trial dataset");
  std::string data_path, outcome, arm, family_str = "identity";
  std::vector<std::string> covars, auxes, reason_rules;
  std::string reason_col, cluster_col, grid_str = "0:0:1";
  std::string pattern_str = "all", engine_str = "auto", out_path = "-";
  std::string missing_token = "NA";
  double level = 0.95;
  sweep->add_option("data", data_path, "Input CSV file")->required();
  sweep->add_option("--outcome", outcome, "Outcome column")->required();
  sweep->add_option("--arm", arm, "Arm column (0/1)")->required();
  sweep->add_option("--covar", covars, "Baseline covariate columns");
  sweep->add_option("--aux", auxes, "Auxiliary covariate columns");
  sweep->add_option("--reason", reason_col, "Reason-for-missingness column");
  sweep->add_option("--reason-delta", reason_rules,
                    "Per-reason rule CATEGORY=sweep|NUMBER|-inf");
  sweep->add_option("--cluster", cluster_col, "Cluster id column");
  sweep->add_option("--family", family_str, "identity|logit");
  sweep->add_option("--delta-grid", grid_str, "MIN:MAX:STEPS");
  sweep->add_option("--pattern", pattern_str, "both|arm1|arm0|all");
  sweep->add_option("--level", level, "Confidence level");
  sweep->add_option("--engine", engine_str, "auto|full|tworeg");
  sweep->add_option("--missing-token", missing_token,
                    "Token marking missing cells (empty cells always count)");
  sweep->add_option("--out", out_path, "Output path ('-' for stdout)");

  // ---- simulate ----
  auto* simulate = app.add_subcommand(
      "simulate", "Monte Carlo benchmark of the estimators");
  int dgm = 1, reps = 1000, mi_m = 30, threads = 0;
  std::string scenario = "a", methods_str = "full,cc,ms,mi,sm";
  std::uint64_t seed = 20240901;
  std::string sim_out = "-";
  simulate->add_option("--dgm", dgm, "Data generating mechanism 1..4")
      ->check(CLI::Range(1, 4));
  simulate->add_option("--scenario", scenario, "Scenario a..d");
  simulate->add_option("--reps", reps, "Number of replicates");
  simulate->add_option("--methods", methods_str,
                       "Comma-separated subset of full,cc,ms,mi,sm");
  simulate->add_option("--seed", seed, "Master seed");
  simulate->add_option("--mi-imputations", mi_m, "Imputations per MI fit");
  simulate->add_option("--threads", threads, "Worker threads (0 = all)");
  simulate->add_option("--out", sim_out, "Output path ('-' for stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sweep->parsed()) {
      rctsens::RunConfig config;
      config.columns.outcome = outcome;
      config.columns.arm = arm;
      config.columns.covariates = covars;
      config.columns.auxiliaries = auxes;
      config.columns.reason = reason_col;
      config.columns.cluster = cluster_col;
      config.columns.missing_token = missing_token;
      config.family = parse_family(family_str);
      parse_grid(grid_str, config);
      config.patterns = parse_patterns(pattern_str);
      config.level = level;
      if (engine_str == "auto")
        config.engine = rctsens::Engine::Auto;
      else if (engine_str == "full")
        config.engine = rctsens::Engine::Full;
      else if (engine_str == "tworeg")
        config.engine = rctsens::Engine::TwoReg;
      else
        throw CLI::ValidationError("--engine must be auto|full|tworeg");
      parse_reason_rules(reason_rules, config);

      const rctsens::TrialDataset data =
          rctsens::load_dataset(data_path, config.columns);
      const auto rows = rctsens::run_sweep(data, config);
      if (out_path == "-")
        rctsens::emit_results(rows, std::cout);
      else
        rctsens::emit_results(rows, out_path);
      for (const auto& row : rows)
        if (!row.error.empty())
          std::cerr << "warning: " << rctsens::pattern_name(row.pattern)
                    << " delta=" << row.delta << ": " << row.error << "\n";
    } else if (simulate->parsed()) {
      if (scenario.size() != 1)
        throw CLI::ValidationError("--scenario must be one of a..d");
      const auto spec = rctsens::sim::DgmSpec::make(dgm, scenario[0], seed);
      rctsens::sim::StudyConfig config;
      config.reps = reps;
      config.mi_imputations = mi_m;
      config.threads = threads;
      config.methods.clear();
      std::stringstream ss(methods_str);
      std::string tok;
      while (std::getline(ss, tok, ','))
        config.methods.push_back(rctsens::sim::parse_method(tok));
      if (config.methods.empty())
        throw CLI::ValidationError("--methods must name at least one method");
      const auto report = rctsens::sim::run_study(spec, config);
      if (sim_out == "-")
        rctsens::sim::emit_report(report, std::cout);
      else
        rctsens::sim::emit_report(report, sim_out);
    }
  } catch (const rctsens::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
