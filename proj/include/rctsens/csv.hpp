#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rctsens/dataset.hpp"
#include "rctsens/errors.hpp"

namespace rctsens {

// Minimal comma-separated table: header row, UTF-8, no quoting.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return static_cast<int>(j);
    throw SchemaError("column not found: " + name);
  }
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  CsvTable table;
  std::string line;
  bool first = true;
  const auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(s);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!s.empty() && s.back() == ',') out.push_back("");
    return out;
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split(line);
    if (first) {
      table.header = std::move(fields);
      std::set<std::string> seen;
      for (const auto& h : table.header)
        if (!seen.insert(h).second)
          throw SchemaError("duplicate column name: " + h);
      first = false;
    } else {
      if (fields.size() != table.header.size())
        throw SchemaError("row " + std::to_string(table.rows.size() + 1) +
                          ": expected " + std::to_string(table.header.size()) +
                          " fields, got " + std::to_string(fields.size()));
      table.rows.push_back(std::move(fields));
    }
  }
  if (first) throw SchemaError(path + ": empty file");
  return table;
}

struct ColumnSpec {
  std::string outcome;
  std::string arm;
  std::vector<std::string> covariates;   // baseline columns appended to XS
  std::vector<std::string> auxiliaries;  // columns forming XA
  std::string reason;                    // optional
  std::string cluster;                   // optional
  std::string missing_token = "NA";      // empty cells always count as missing
  bool impute_baseline = true;           // mean-impute missing covariate cells
};

namespace detail {

inline bool is_missing(const std::string& cell, const std::string& token) {
  return cell.empty() || cell == token;
}

inline double parse_number(const std::string& cell, const std::string& what,
                           size_t row) {
  try {
    size_t pos = 0;
    const double v = std::stod(cell, &pos);
    if (pos != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw DataError("row " + std::to_string(row + 1) + ", column " + what +
                    ": cannot parse '" + cell + "'");
  }
}

}  // namespace detail

// Replace missing entries of the named baseline columns by the observed
// column mean. Outcomes and response indicators are untouched.
inline void impute_baseline_mean(Eigen::MatrixXd& X,
                                 const std::vector<std::vector<bool>>& missing,
                                 const std::vector<std::string>& names) {
  for (int j = 0; j < X.cols(); ++j) {
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < X.rows(); ++i) {
      if (!missing[i][j]) {
        sum += X(i, j);
        ++count;
      }
    }
    if (count == 0)
      throw DataError("column " + names[j] + " is entirely missing");
    const double mean = sum / count;
    for (int i = 0; i < X.rows(); ++i)
      if (missing[i][j]) X(i, j) = mean;
  }
}

// Dataset-level variant: mean-imputes NaN cells in the baseline columns of
// XS (beyond intercept and arm) and in XA. Outcome and r are untouched.
inline TrialDataset impute_baseline_mean(TrialDataset data) {
  const auto impute_col = [](Eigen::MatrixXd& X, int j, const std::string& what) {
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < X.rows(); ++i) {
      if (std::isfinite(X(i, j))) {
        sum += X(i, j);
        ++count;
      }
    }
    if (count == 0) throw DataError("column " + what + " is entirely missing");
    const double mean = sum / count;
    for (int i = 0; i < X.rows(); ++i)
      if (!std::isfinite(X(i, j))) X(i, j) = mean;
  };
  for (int j = 2; j < data.XS.cols(); ++j)
    impute_col(data.XS, j, "XS[" + std::to_string(j) + "]");
  for (int j = 0; j < data.XA.cols(); ++j)
    impute_col(data.XA, j, "XA[" + std::to_string(j) + "]");
  return data;
}

inline TrialDataset load_dataset(const std::string& path,
                                 const ColumnSpec& spec) {
  const CsvTable table = read_csv(path);
  const int n = static_cast<int>(table.rows.size());
  if (n == 0) throw DataError(path + ": no data rows");

  const int jy = table.column(spec.outcome);
  const int jz = table.column(spec.arm);
  std::vector<int> jcov, jaux;
  for (const auto& c : spec.covariates) jcov.push_back(table.column(c));
  for (const auto& c : spec.auxiliaries) jaux.push_back(table.column(c));
  const int jreason = spec.reason.empty() ? -1 : table.column(spec.reason);
  const int jcluster = spec.cluster.empty() ? -1 : table.column(spec.cluster);

  TrialDataset data;
  data.y.resize(n);
  data.r.resize(n);
  data.arm.resize(n);
  data.XS.resize(n, 2 + static_cast<int>(jcov.size()));
  data.XA.resize(n, static_cast<int>(jaux.size()));
  if (jreason >= 0) data.reason.resize(n);

  // gather covariate cells first so baseline imputation can see full columns
  const int pc = static_cast<int>(jcov.size() + jaux.size());
  Eigen::MatrixXd cov(n, pc);
  std::vector<std::vector<bool>> covmis(n, std::vector<bool>(pc, false));
  std::vector<std::string> covnames = spec.covariates;
  covnames.insert(covnames.end(), spec.auxiliaries.begin(),
                  spec.auxiliaries.end());

  for (int i = 0; i < n; ++i) {
    const auto& row = table.rows[i];
    if (detail::is_missing(row[jy], spec.missing_token)) {
      data.r[i] = 0;
      data.y[i] = std::numeric_limits<double>::quiet_NaN();
    } else {
      data.r[i] = 1;
      data.y[i] = detail::parse_number(row[jy], spec.outcome, i);
    }
    const double z = detail::parse_number(row[jz], spec.arm, i);
    if (z != 0.0 && z != 1.0)
      throw SchemaError("row " + std::to_string(i + 1) +
                        ": arm value must be 0 or 1, got '" + row[jz] + "'");
    data.arm[i] = static_cast<int>(z);
    for (int k = 0; k < pc; ++k) {
      const int j = k < static_cast<int>(jcov.size())
                        ? jcov[k]
                        : jaux[k - jcov.size()];
      if (detail::is_missing(row[j], spec.missing_token)) {
        if (!spec.impute_baseline)
          throw DataError("row " + std::to_string(i + 1) + ", column " +
                          covnames[k] + ": missing covariate");
        covmis[i][k] = true;
        cov(i, k) = 0.0;
      } else {
        cov(i, k) = detail::parse_number(row[j], covnames[k], i);
      }
    }
    if (jreason >= 0) data.reason[i] = row[jreason];
    if (jcluster >= 0)
      data.cluster.push_back(static_cast<int>(
          detail::parse_number(row[jcluster], spec.cluster, i)));
  }

  if (pc > 0 && spec.impute_baseline)
    impute_baseline_mean(cov, covmis, covnames);

  data.XS.col(0).setOnes();
  data.XS.col(1) = data.arm.cast<double>();
  data.arm_col = 1;
  for (size_t k = 0; k < jcov.size(); ++k)
    data.XS.col(2 + static_cast<int>(k)) = cov.col(static_cast<int>(k));
  for (size_t k = 0; k < jaux.size(); ++k)
    data.XA.col(static_cast<int>(k)) =
        cov.col(static_cast<int>(jcov.size() + k));

  data.validate();
  return data;
}

}  // namespace rctsens
