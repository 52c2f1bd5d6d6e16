#pragma once

#include "graybox/types.hpp"

#include <cstdint>
#include <vector>

namespace graybox {

/// A(theta) = offsetA + sum_i coeffA[i] * theta_i, likewise for B and C.
struct AffineParameterization {
    Dims dims;
    Matrix offsetA, offsetB, offsetC;
    std::vector<Matrix> coeffA, coeffB, coeffC;

    /// Offsets set to zero, no parameters.
    static AffineParameterization zeros(Dims dims);

    Index q() const { return static_cast<Index>(coeffA.size()); }

    /// Appends one parameter with the given coefficient matrices.
    void add_parameter(Matrix a, Matrix b, Matrix c);

    void validate() const;
};

enum class TimeDomain { continuous, discrete };

struct StateSpace {
    Matrix A, B, C;
    TimeDomain domain = TimeDomain::continuous;
    double samplingPeriod = 0.0; ///< seconds; meaningful only for discrete realizations

    Dims dims() const { return {A.rows(), B.cols(), C.rows()}; }
    void validate() const;
};

/// Impulse-response matrices M_0, M_1, ... each p x m. dims.n is 0 when unknown.
struct MarkovSequence {
    Dims dims;
    std::vector<Matrix> blocks;

    Index size() const { return static_cast<Index>(blocks.size()); }
    void validate() const;
};

/// Block Hankel matrix whose (i,j) block is M_{i+j}.
struct HankelMatrix {
    Index v = 0;
    Index h = 0;
    Index p = 0;
    Index m = 0;
    Matrix data; // (v*p) x (h*m)

    auto block(Index i, Index j) const { return data.block(i * p, j * m, p, m); }
};

StateSpace assemble(const AffineParameterization &param, const ParameterVector &theta);

/// M_i = C A^i B for i = 0..count-1, by iterated multiplication.
MarkovSequence markov_sequence(const StateSpace &ss, Index count);

HankelMatrix build_hankel(const MarkovSequence &markov, Index v, Index h);

/// Sum_i ||cand_i - ref_i||_F / Sum_i ||ref_i||_F.
double impulse_response_fit(const MarkovSequence &candidate, const MarkovSequence &reference);

/// Zero-order-hold discretization via the exponential of [[A, B], [0, 0]] * T.
StateSpace discretize_zoh(const StateSpace &ss, double T);

/// Balanced Ho-Kalman realization of order n from a block Hankel matrix.
StateSpace ho_kalman_realize(const HankelMatrix &hankel, Index n);

/// O_v = [C; CA; ...; CA^{v-1}]
Matrix observability_stack(const StateSpace &ss, Index v);
/// C_h = [B, AB, ..., A^{h-1}B]
Matrix controllability_stack(const StateSpace &ss, Index h);

/// Number of singular values above kRankTolerance * sigma_1.
Index numeric_rank(const Matrix &M);

struct GrayBoxInstance {
    AffineParameterization param;
    ParameterVector thetaTrue;
};

/// Random minimal stable system with q entries of (A, B, C) freed as parameters.
GrayBoxInstance random_structured_instance(Dims dims, Index q, std::uint64_t seed);

/// Tridiagonal compartmental chain of order n, q = 2n - 2, B = C^T = e_n.
GrayBoxInstance compartmental_instance(Index n, std::uint64_t seed);

/// Compartmental structure with a given parameter vector (used by tests and the CLI).
AffineParameterization compartmental_structure(Index n);

} // namespace graybox
