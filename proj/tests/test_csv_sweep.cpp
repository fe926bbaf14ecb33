#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "rctsens/csv.hpp"
#include "rctsens/sweep.hpp"
#include "test_support.hpp"

using namespace rctsens;
using namespace testsupport;

namespace {

std::filesystem::path write_temp(const std::string& name,
                                 const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path, std::ios::binary);
  out << content;
  return path;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ColumnSpec basic_spec() {
  ColumnSpec s;
  s.outcome = "y";
  s.arm = "z";
  return s;
}

}  // namespace

TEST_CASE("read_csv parses rows and strips CRLF") {
  const auto p = write_temp("rctsens_t1.csv", "a,b\r\n1,2\r\n3,\n");
  const CsvTable t = read_csv(p.string());
  CHECK(t.header == std::vector<std::string>{"a", "b"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[1][1] == "");
  CHECK(t.column("b") == 1);
  CHECK_THROWS_AS(t.column("c"), SchemaError);
}

TEST_CASE("read_csv rejects malformed tables") {
  SECTION("duplicate column") {
    const auto p = write_temp("rctsens_t2.csv", "a,a\n1,2\n");
    CHECK_THROWS_AS(read_csv(p.string()), SchemaError);
  }
  SECTION("ragged row") {
    const auto p = write_temp("rctsens_t3.csv", "a,b\n1\n");
    CHECK_THROWS_AS(read_csv(p.string()), SchemaError);
  }
  SECTION("missing file") {
    CHECK_THROWS_AS(read_csv("/nonexistent/x.csv"), IoError);
  }
}

TEST_CASE("load_dataset counts missing outcomes and keeps reasons") {
  const auto p = write_temp("rctsens_t4.csv",
                            "y,z,reason\n"
                            "1.5,0,\n"
                            "NA,0,refused\n"
                            "2.0,1,\n"
                            ",1,lost\n"
                            "0.5,1,\n");
  ColumnSpec spec = basic_spec();
  spec.reason = "reason";
  const TrialDataset d = load_dataset(p.string(), spec);
  CHECK(d.n() == 5);
  CHECK(d.n_obs() == 3);
  CHECK(d.n_mis() == 2);
  CHECK(d.reason[1] == "refused");
  CHECK(d.reason[3] == "lost");
  CHECK(d.arm[2] == 1);
}

TEST_CASE("load_dataset rejects arms coded 1 and 2") {
  const auto p = write_temp("rctsens_t5.csv", "y,z\n1.0,1\n2.0,2\n");
  CHECK_THROWS_AS(load_dataset(p.string(), basic_spec()), SchemaError);
}

TEST_CASE("baseline mean imputation fills covariate gaps") {
  const auto p = write_temp("rctsens_t6.csv",
                            "y,z,x\n"
                            "1.0,0,2.0\n"
                            "2.0,0,NA\n"
                            "3.0,1,4.0\n"
                            "4.0,1,6.0\n");
  ColumnSpec spec = basic_spec();
  spec.covariates = {"x"};
  const TrialDataset d = load_dataset(p.string(), spec);
  CHECK(d.XS(1, 2) == Catch::Approx((2.0 + 4.0 + 6.0) / 3.0));

  spec.impute_baseline = false;
  CHECK_THROWS_AS(load_dataset(p.string(), spec), DataError);
}

TEST_CASE("matrix-level imputation matches a hand computation") {
  Eigen::MatrixXd X(3, 1);
  X << 1.0, 0.0, 3.0;
  std::vector<std::vector<bool>> mis = {{false}, {true}, {false}};
  impute_baseline_mean(X, mis, {"x"});
  CHECK(X(1, 0) == Catch::Approx(2.0));

  std::vector<std::vector<bool>> allmis = {{true}, {true}, {true}};
  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(3, 1);
  CHECK_THROWS_AS(impute_baseline_mean(Z, allmis, {"x"}), DataError);
}

TEST_CASE("demo dataset matches its manifest") {
  const std::string dir = RCTSENS_DATA_DIR;
  ColumnSpec spec;
  spec.outcome = "mcs_1yr";
  spec.arm = "arm";
  spec.covariates = {"mcs_base"};
  spec.reason = "reason";
  const TrialDataset d = load_dataset(dir + "/demo_trial.csv", spec);
  CHECK(d.n() == 409);
  int n1 = 0, mis1 = 0, mis0 = 0;
  for (int i = 0; i < d.n(); ++i) {
    if (d.arm[i] == 1) {
      ++n1;
      mis1 += 1 - d.r[i];
    } else {
      mis0 += 1 - d.r[i];
    }
  }
  CHECK(n1 == 204);
  CHECK(mis1 == 29);
  CHECK(mis0 == 13);
  for (int i = 0; i < d.n(); ++i)
    if (d.r[i] == 0) CHECK((d.reason[i] == "refused" || d.reason[i] == "lost"));
  CHECK(d.XS.allFinite());  // baselines imputed
}

TEST_CASE("sweep with a single zero grid point is pattern-invariant") {
  std::mt19937_64 rng(51);
  GaussGenOptions opt;
  opt.n = 150;
  const TrialDataset d = gen_gaussian(opt, rng);
  RunConfig cfg;
  cfg.family = GlmFamily::identity();
  cfg.grid_min = cfg.grid_max = 0.0;
  cfg.grid_steps = 1;
  const auto rows = run_sweep(d, cfg);
  REQUIRE(rows.size() == 3);
  for (const auto& row : rows) {
    CHECK(row.error.empty());
    CHECK(row.estimate == Catch::Approx(rows[0].estimate).margin(1e-12));
    CHECK(row.se == Catch::Approx(rows[0].se).margin(1e-12));
    CHECK(row.n_eff == Catch::Approx(rows[0].n_eff).margin(1e-9));
  }
}

TEST_CASE("sweep at delta 0 reproduces the complete-case OLS estimate") {
  std::mt19937_64 rng(52);
  GaussGenOptions opt;
  opt.n = 180;
  opt.betax = 0.5;
  const TrialDataset d = gen_gaussian(opt, rng);
  RunConfig cfg;
  cfg.grid_min = cfg.grid_max = 0.0;
  cfg.grid_steps = 1;
  cfg.patterns = {SweepPattern::BothArms};
  const auto rows = run_sweep(d, cfg);
  REQUIRE(rows.size() == 1);

  const int nobs = d.n_obs(), p = d.p_S();
  Eigen::MatrixXd X(nobs, p);
  Eigen::VectorXd y(nobs);
  int k = 0;
  for (int i = 0; i < d.n(); ++i)
    if (d.r[i] == 1) {
      X.row(k) = d.XS.row(i);
      y[k] = d.y[i];
      ++k;
    }
  const Eigen::VectorXd bcc =
      (X.transpose() * X).ldlt().solve(X.transpose() * y);
  CHECK(rows[0].estimate == Catch::Approx(bcc[1]).margin(1e-8));
  CHECK(rows[0].n_eff == Catch::Approx(nobs).margin(1e-6));
}

TEST_CASE("identity sweep estimates are affine in delta per pattern") {
  std::mt19937_64 rng(53);
  GaussGenOptions opt;
  opt.n = 200;
  const TrialDataset d = gen_gaussian(opt, rng);
  RunConfig cfg;
  cfg.grid_min = -6.0;
  cfg.grid_max = 0.0;
  cfg.grid_steps = 4;
  cfg.patterns = {SweepPattern::Arm1Only};
  const auto rows = run_sweep(d, cfg);
  REQUIRE(rows.size() == 4);
  const double s0 =
      (rows[1].estimate - rows[0].estimate) / (rows[1].delta - rows[0].delta);
  for (size_t k = 2; k < rows.size(); ++k) {
    const double s = (rows[k].estimate - rows[k - 1].estimate) /
                     (rows[k].delta - rows[k - 1].delta);
    CHECK(s == Catch::Approx(s0).margin(1e-10));
  }
}

TEST_CASE("logit sweep n_eff grows with the magnitude of delta") {
  std::mt19937_64 rng(54);
  BinaryGenOptions opt;
  opt.n = 400;
  const TrialDataset d = gen_binary(opt, rng);
  RunConfig cfg;
  cfg.family = GlmFamily::logit();
  cfg.grid_min = -3.0;
  cfg.grid_max = 0.0;
  cfg.grid_steps = 4;
  cfg.patterns = {SweepPattern::BothArms};
  const auto rows = run_sweep(d, cfg);
  REQUIRE(rows.size() == 4);
  // grid runs from -3 up to 0, so n_eff should fall toward n_obs
  for (size_t k = 1; k < rows.size(); ++k) CHECK(rows[k].n_eff <= rows[k - 1].n_eff + 1e-9);
  CHECK(rows.back().n_eff == Catch::Approx(d.n_obs()).margin(1e-6));
  CHECK(rows.front().n_eff > d.n_obs());
}

TEST_CASE("per-reason rules pin chosen categories during the sweep") {
  const auto p = write_temp("rctsens_t7.csv",
                            "y,z,reason\n"
                            "10,0,\nNA,0,refused\n12,0,\nNA,0,lost\n11,0,\n"
                            "14,1,\nNA,1,refused\n15,1,\nNA,1,lost\n13,1,\n");
  ColumnSpec spec = basic_spec();
  spec.reason = "reason";
  const TrialDataset d = load_dataset(p.string(), spec);
  RunConfig cfg;
  cfg.columns = spec;
  cfg.grid_min = cfg.grid_max = -4.0;
  cfg.grid_steps = 1;
  cfg.patterns = {SweepPattern::BothArms};
  cfg.reason_rules["refused"] = {true, 0.0};
  cfg.reason_rules["lost"] = {false, 0.0};  // pinned to MAR
  const auto rows = run_sweep(d, cfg);
  REQUIRE(rows.size() == 1);

  // oracle: same delta assignment through the direct interface
  const DeltaSpec direct = DeltaSpec::per_reason(
      {{"refused", {-4.0, -4.0}}, {"lost", {0.0, 0.0}}});
  const MeanScoreFit fit = fit_mean_score(d, direct, GlmFamily::identity());
  CHECK(rows[0].estimate == Catch::Approx(fit.beta_S[1]).margin(1e-10));
}

TEST_CASE("emit_results is deterministic and parseable") {
  std::mt19937_64 rng(55);
  GaussGenOptions opt;
  opt.n = 120;
  const TrialDataset d = gen_gaussian(opt, rng);
  RunConfig cfg;
  cfg.grid_min = -4.0;
  cfg.grid_max = 0.0;
  cfg.grid_steps = 5;
  const auto rows = run_sweep(d, cfg);

  std::ostringstream a, b;
  emit_results(rows, a);
  emit_results(rows, b);
  CHECK(a.str() == b.str());

  std::istringstream in(a.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "pattern,delta,estimate,se,ci_low,ci_high,n_eff");
  int count = 0;
  while (std::getline(in, line)) {
    ++count;
    std::istringstream ls(line);
    std::string field;
    int fields = 0;
    while (std::getline(ls, field, ',')) ++fields;
    CHECK(fields == 7);
  }
  CHECK(count == 15);  // 3 patterns x 5 grid points

  // file overload writes the same bytes
  const auto path = std::filesystem::temp_directory_path() / "rctsens_t8.csv";
  emit_results(rows, path.string());
  CHECK(slurp(path) == a.str());
}

TEST_CASE("engine choice does not change the reported table materially") {
  std::mt19937_64 rng(56);
  GaussGenOptions opt;
  opt.n = 250;
  const TrialDataset d = gen_gaussian(opt, rng);
  RunConfig fast, full;
  fast.grid_min = full.grid_min = -3.0;
  fast.grid_max = full.grid_max = 0.0;
  fast.grid_steps = full.grid_steps = 3;
  fast.engine = Engine::TwoReg;
  full.engine = Engine::Full;
  const auto a = run_sweep(d, fast);
  const auto b = run_sweep(d, full);
  REQUIRE(a.size() == b.size());
  for (size_t k = 0; k < a.size(); ++k)
    CHECK(a[k].estimate == Catch::Approx(b[k].estimate).margin(1e-8));
}

TEST_CASE("demo sweep matches the golden file byte for byte") {
  const std::string data_dir = RCTSENS_DATA_DIR;
  const std::string golden_dir = RCTSENS_GOLDEN_DIR;
  ColumnSpec spec;
  spec.outcome = "mcs_1yr";
  spec.arm = "arm";
  spec.covariates = {"mcs_base"};
  const TrialDataset d = load_dataset(data_dir + "/demo_trial.csv", spec);
  RunConfig cfg;
  cfg.columns = spec;
  cfg.grid_min = -8.0;
  cfg.grid_max = 0.0;
  cfg.grid_steps = 9;
  const auto rows = run_sweep(d, cfg);
  std::ostringstream out;
  emit_results(rows, out);
  CHECK(out.str() == slurp(golden_dir + "/demo_sweep.csv"));
}
