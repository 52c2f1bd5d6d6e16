#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace graybox {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Parameter vector theta; its length must match the owning parameterization.
using ParameterVector = Eigen::VectorXd;

/// Singular values at or below this fraction of the largest count as zero.
inline constexpr double kRankTolerance = 1e-10;

/// Raised for malformed inputs (shape mismatches, out-of-range arguments).
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a computation cannot produce a finite or well-defined answer.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class RankDeficiencyError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Raised when a wall-clock budget runs out.
class TimeLimitError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class UndefinedMetricError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// State order n, input count m, output count p.
struct Dims {
    Index n = 0;
    Index m = 0;
    Index p = 0;

    void validate() const {
        if (n <= 0 || m <= 0 || p <= 0)
            throw DimensionError("Dims: n, m, p must all be positive");
    }

    friend bool operator==(const Dims &, const Dims &) = default;
};

inline void require_shape(const Matrix &M, Index rows, Index cols, const std::string &what) {
    if (M.rows() != rows || M.cols() != cols)
        throw DimensionError(what + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                             ", got " + std::to_string(M.rows()) + "x" + std::to_string(M.cols()));
}

} // namespace graybox
