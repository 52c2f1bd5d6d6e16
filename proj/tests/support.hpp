#pragma once

#include "graybox/model.hpp"

#include <Eigen/Eigenvalues>

#include <random>

namespace testing_support {

using graybox::Index;
using graybox::Matrix;
using graybox::Vector;

inline Matrix gaussian(Index rows, Index cols, std::mt19937_64 &rng) {
    std::normal_distribution<double> normal;
    Matrix M(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i)
            M(i, j) = normal(rng);
    return M;
}

inline double uniform(double lo, double hi, std::mt19937_64 &rng) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Random system with A scaled to spectral radius below one.
inline graybox::StateSpace random_system(graybox::Dims d, std::mt19937_64 &rng) {
    graybox::StateSpace ss{gaussian(d.n, d.n, rng), gaussian(d.n, d.m, rng), gaussian(d.p, d.n, rng)};
    ss.A /= 1.5 * std::max(1.0, ss.A.operatorNorm());
    return ss;
}

/// Markov blocks by explicit powers, an independent check of iterated multiplication.
inline std::vector<Matrix> naive_markov(const graybox::StateSpace &ss, Index count) {
    std::vector<Matrix> out;
    for (Index i = 0; i < count; ++i) {
        Matrix P = Matrix::Identity(ss.A.rows(), ss.A.cols());
        for (Index k = 0; k < i; ++k)
            P = P * ss.A;
        out.push_back(ss.C * P * ss.B);
    }
    return out;
}

inline double max_abs_diff(const Matrix &a, const Matrix &b) { return (a - b).cwiseAbs().maxCoeff(); }

} // namespace testing_support
