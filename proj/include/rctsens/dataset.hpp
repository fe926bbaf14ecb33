#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "rctsens/errors.hpp"
#include "rctsens/family.hpp"

namespace rctsens {

// Outcomes with missingness indicators and the covariate blocks of a
// two-arm randomised trial. y is NaN exactly where r == 0. XS holds an
// intercept (column 0) and the arm indicator; XA may have zero columns.
struct TrialDataset {
  Eigen::VectorXd y;
  Eigen::VectorXi r;    // 1 observed, 0 missing
  Eigen::VectorXi arm;  // 0/1, duplicated as column arm_col of XS
  Eigen::MatrixXd XS;
  Eigen::MatrixXd XA;               // zero-width when absent
  std::vector<std::string> reason;  // per-row reason category, "" if unused
  std::vector<int> cluster;         // empty when unclustered
  int arm_col = 1;

  int n() const { return static_cast<int>(y.size()); }
  int n_obs() const { return r.sum(); }
  int n_mis() const { return n() - n_obs(); }
  int p_S() const { return static_cast<int>(XS.cols()); }
  int p_A() const { return static_cast<int>(XA.cols()); }
  int p_P() const { return p_S() + p_A(); }
  bool clustered() const { return !cluster.empty(); }

  Eigen::MatrixXd XP() const {
    Eigen::MatrixXd out(n(), p_P());
    out.leftCols(p_S()) = XS;
    if (p_A() > 0) out.rightCols(p_A()) = XA;
    return out;
  }

  void validate() const {
    const int N = n();
    if (r.size() != N || arm.size() != N || XS.rows() != N)
      throw DataError("dataset: inconsistent row counts");
    if (XA.size() > 0 && XA.rows() != N)
      throw DataError("dataset: auxiliary rows mismatch");
    if (!reason.empty() && static_cast<int>(reason.size()) != N)
      throw DataError("dataset: reason rows mismatch");
    if (!cluster.empty() && static_cast<int>(cluster.size()) != N)
      throw DataError("dataset: cluster rows mismatch");
    for (int i = 0; i < N; ++i) {
      if (r[i] != 0 && r[i] != 1) throw DataError("dataset: r not 0/1");
      if (arm[i] != 0 && arm[i] != 1)
        throw SchemaError("dataset: arm not binary 0/1");
      if (r[i] == 1 && !std::isfinite(y[i]))
        throw DataError("dataset: observed outcome not finite at row " +
                        std::to_string(i));
      if (!XS.row(i).allFinite())
        throw DataError("dataset: non-finite substantive covariate at row " +
                        std::to_string(i));
      if (XS(i, 0) != 1.0) throw DataError("dataset: XS column 0 must be 1");
      if (XS(i, arm_col) != static_cast<double>(arm[i]))
        throw DataError("dataset: arm column of XS disagrees with arm");
    }
    if (XA.size() > 0 && !XA.allFinite())
      throw DataError("dataset: non-finite auxiliary covariate");
    if (n_obs() < p_P())
      throw InsufficientDataError("dataset: fewer complete cases than p_P");
  }
};

// User-specified departure from MAR, Delta(x_i), evaluated only for missing
// rows. Finite values or the -infinity sentinel (binary outcomes only).
class DeltaSpec {
 public:
  // scale applied to "swept" per-reason entries; see per_reason below
  static DeltaSpec constant(double d) {
    DeltaSpec s;
    s.d0_ = s.d1_ = d;
    return s;
  }
  static DeltaSpec per_arm(double d0, double d1) {
    DeltaSpec s;
    s.d0_ = d0;
    s.d1_ = d1;
    return s;
  }
  // Per-reason departures. Each category maps to a (arm0, arm1) pair;
  // unmapped categories get 0 (MAR).
  static DeltaSpec per_reason(std::map<std::string, std::pair<double, double>> m) {
    DeltaSpec s;
    s.by_reason_ = std::move(m);
    s.use_reason_ = true;
    return s;
  }
  static DeltaSpec minus_infinity() { return constant(kMinusInf); }

  double value(const TrialDataset& data, int i) const {
    double v;
    if (use_reason_) {
      if (data.reason.empty())
        throw InvalidDeltaError("per-reason delta needs a reason column");
      const auto it = by_reason_.find(data.reason[i]);
      if (it == by_reason_.end()) return 0.0;
      v = data.arm[i] == 1 ? it->second.second : it->second.first;
    } else {
      v = data.arm[i] == 1 ? d1_ : d0_;
    }
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity())
      throw InvalidDeltaError("delta must be finite or -infinity");
    return v;
  }

  bool any_sentinel(const TrialDataset& data) const {
    for (int i = 0; i < data.n(); ++i)
      if (data.r[i] == 0 && std::isinf(value(data, i))) return true;
    return false;
  }

  bool all_zero(const TrialDataset& data) const {
    for (int i = 0; i < data.n(); ++i)
      if (data.r[i] == 0 && value(data, i) != 0.0) return false;
    return true;
  }

 private:
  double d0_ = 0.0, d1_ = 0.0;
  bool use_reason_ = false;
  std::map<std::string, std::pair<double, double>> by_reason_;
};

}  // namespace rctsens
