#pragma once

#include "graybox/model.hpp"

#include <cstdint>
#include <vector>

namespace graybox {

struct SimilarityIterate {
    Matrix Q;
    ParameterVector theta;
    double cost = 0.0;
};

/// ||Q A* - A(theta) Q||^2 + ||Q B* - B(theta)||^2 + ||C* - C(theta) Q||^2
double similarity_cost(const Matrix &Q, const ParameterVector &theta, const StateSpace &blackBox,
                       const AffineParameterization &param);

/// M(theta) vec(Q) - N(theta) stacks the three residuals above (up to sign).
struct VectorizedSimilarity {
    Matrix M; // (n^2 + nm + pn) x n^2
    Vector N;
};

VectorizedSimilarity build_vectorized_similarity(const ParameterVector &theta, const StateSpace &blackBox,
                                                 const AffineParameterization &param);

struct AltminResult {
    SimilarityIterate iterate;
    std::vector<double> costTrace; ///< cost after the initial point and after every Q/theta pair
    int iterations = 0;
    /// Some least-squares step was rank deficient and used the minimum-norm solution.
    bool rankDeficient = false;
};

/// Alternating exact least squares over Q and theta.
AltminResult altmin_similarity(const StateSpace &blackBox, const AffineParameterization &param,
                               const SimilarityIterate &init, int maxIters = 500);

/// Input/output samples; column k of u and y is the sample at time kT.
struct IoData {
    Matrix u; // m x N
    Matrix y; // p x N
    double T = 1.0;

    Index length() const { return u.cols(); }
    void validate() const;
};

/// y(k) = C x(k), x(k+1) = A x(k) + B u(k), x(0) = x0. Output is p x N.
Matrix simulate_discrete(const StateSpace &ssd, const Matrix &u, const Vector &x0);

/// Noiseless sampled data from a continuous model: random +-1 input of the given
/// length, T = min(1, 0.5 pi / max |Im eig(A)|).
IoData make_identification_data(const StateSpace &ss, Index length, std::uint64_t seed);

struct PemSettings {
    int maxIters = 100;
    double relTol = 1e-10;
    double initialDamping = 1e-3; ///< relative to the mean diagonal of J^T J
    int maxRejections = 40;
};

struct PemResult {
    ParameterVector theta;
    std::vector<double> costTrace; ///< initial cost, then one entry per accepted step
    int iterations = 0;
    bool converged = false;
};

/// (1/N) sum_k ||y(kT) - yhat(kT | theta)||^2, zero initial state.
double prediction_error_cost(const IoData &data, const AffineParameterization &param, const ParameterVector &theta);

/// Damped Gauss-Newton on the prediction error with central-difference Jacobians.
PemResult pem_surrogate(const IoData &data, const AffineParameterization &param, const ParameterVector &initTheta,
                        const PemSettings &settings = {});

} // namespace graybox
