#pragma once

#include <stdexcept>
#include <string>

namespace rctsens {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// design matrix is rank deficient on the (weighted) fitting support
struct SingularDesignError : Error {
  explicit SingularDesignError(int column)
      : Error("singular design: column " + std::to_string(column) +
              " is collinear with earlier columns"),
        column(column) {}
  int column;
};

struct ConvergenceError : Error {
  using Error::Error;
};

// diverging |beta| in a logistic fit
struct SeparationError : Error {
  using Error::Error;
};

struct InvalidDeltaError : Error {
  using Error::Error;
};

struct InsufficientDataError : Error {
  using Error::Error;
};

struct VarianceSingularError : Error {
  using Error::Error;
};

struct DegenerateInfluenceError : Error {
  using Error::Error;
};

struct UnsupportedFamilyError : Error {
  using Error::Error;
};

struct UnsupportedDesignError : Error {
  using Error::Error;
};

struct IllConditionedVarianceError : Error {
  using Error::Error;
};

struct InsufficientClustersError : Error {
  using Error::Error;
};

struct DegenerateCorrectionError : Error {
  using Error::Error;
};

struct DegreesOfFreedomError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

struct SchemaError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct CalibrationError : Error {
  using Error::Error;
};

struct MiError : Error {
  using Error::Error;
};

struct SmConvergenceError : Error {
  using Error::Error;
};

struct ExtremeWeightError : Error {
  using Error::Error;
};

struct StudyError : Error {
  using Error::Error;
};

}  // namespace rctsens
