#pragma once

#include "graybox/types.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <Eigen/SparseCore>

#include <optional>
#include <string>
#include <vector>

namespace graybox {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Named contiguous ranges of the stacked variable z.
struct VariableLayout {
    struct Block {
        std::string name;
        Index offset = 0;
        Index rows = 0;
        Index cols = 0;
        Index size() const { return rows * cols; }
    };

    std::vector<Block> blocks;

    /// Appends a block after the last one and returns its offset.
    Index add(std::string name, Index rows, Index cols);
    Index size() const;
    const Block &find(const std::string &name) const;
};

/// M(z) = reshape(linear * z + offset, rows, cols), column-major.
struct AffineMatrixMap {
    Index rows = 0;
    Index cols = 0;
    SparseMatrix linear; // (rows*cols) x dim(z)
    Vector offset;       // rows*cols

    static AffineMatrixMap empty(Index dim);

    Vector apply(const Vector &z) const { return linear * z + offset; }
    Matrix image(const Vector &z) const { return apply(z).reshaped(rows, cols); }
};

/// z^T P z + linear^T z + constant.
struct QuadraticForm {
    SparseMatrix P;
    Vector linear;
    double constant = 0.0;

    double value(const Vector &z) const { return z.dot(P * z) + linear.dot(z) + constant; }
};

/// Convex problem
///   min  quadratic(z) + wW ||W(z)||_* + wT ||T(z)||_*
///        - wW <subgradW, W(z)> - wT <subgradT, T(z)>
///        + rho ||W(z) - proxW||_F^2 + rho ||T(z) - proxT||_F^2
///   s.t. E z = e
struct SubproblemSpec {
    VariableLayout layout;
    QuadraticForm quadratic;
    AffineMatrixMap affineW, affineT;
    SparseMatrix equality; // E
    Vector equalityRhs;    // e
    double weightW = 0.0, weightT = 0.0;
    Matrix subgradW, subgradT;
    double proximalWeight = 0.0;
    Matrix proximalW, proximalT;

    Index size() const { return layout.size(); }
    void validate() const;
    double objective(const Vector &z) const;
    /// ||E z - e||_inf (0 when there are no constraints).
    double equality_residual(const Vector &z) const;
};

struct SplitSettings {
    double mu = 1.0;
    int maxIters = 2000;
    double primalTol = 1e-7;
    double dualTol = 1e-7;
    bool adaptivePenalty = true;
    double penaltyRatio = 10.0;
    double penaltyScale = 2.0;
    /// Residual balancing is applied during the first penaltyIters iterations only.
    int penaltyIters = 200;
    /// Anderson acceleration memory on the splitting fixed-point map; 0 disables it.
    int andersonMemory = 10;
    /// Record the residual merit at every iteration (tests only; costs memory).
    bool recordMerit = false;

    void validate() const;
};

struct SplitDiagnostics {
    int iterations = 0;
    int sweeps = 0; ///< fixed-point evaluations, including rejected accelerated trials
    double primalResidual = 0.0;
    double dualResidual = 0.0;
    std::vector<double> muHistory;
    bool converged = false;
    Index redundantConstraintRows = 0;
    bool leastSquaresConstraints = false;
    double equalityResidual = 0.0;
    double objective = 0.0;
    /// mu ||dZ||^2 + mu ||dU||^2 per iteration, paired with the penalty in force.
    std::vector<double> meritTrace;
    std::vector<double> meritMu;
};

/// Splitting copies, scaled duals and penalty at the last sweep.
struct SplitState {
    Vector zw, zt;
    Vector uw, ut;
    double mu = 0.0;
};

struct SplitResult {
    Vector z;
    SplitDiagnostics diagnostics;
    SplitState state;
};

/// Proximal operator of tau * ||.||_*: soft-thresholds the singular values.
Matrix svt(const Matrix &M, double tau);

/// Factored KKT operator for
///   min z^T G z + g^T z  s.t.  E z = e,
/// with G = P + (rho + mu/2) (Aw^T Aw + At^T At). The gradient g varies per call.
class ReducedSystem {
public:
    ReducedSystem(const SubproblemSpec &spec, double mu);

    /// Refactors for a new penalty; constraint analysis is kept.
    void refactor(double mu);
    Vector solve(const Vector &g) const;

    double mu() const { return mu_; }
    Index redundant_rows() const { return redundantRows_; }
    bool least_squares_constraints() const { return leastSquares_; }
    bool diagonal() const { return diagonal_; }

private:
    const SubproblemSpec *spec_;
    double mu_ = 0.0;
    Matrix E_;
    Vector e_;
    Index redundantRows_ = 0;
    bool leastSquares_ = false;

    bool diagonal_ = false;
    Vector invDiag_;
    Eigen::LLT<Matrix> gFactor_;
    bool useKkt_ = false;
    Eigen::CompleteOrthogonalDecomposition<Matrix> kkt_;
    Matrix EGinv_; // E G^{-1}
    Eigen::CompleteOrthogonalDecomposition<Matrix> schur_;
    Matrix schurPinv_;
    SparseMatrix EGinvSparse_;

    Vector apply_ginv(const Vector &x) const;
};

ReducedSystem assemble_reduced_system(const SubproblemSpec &spec, double mu);

/// Splitting solver: z-update by the factored KKT system, nuclear blocks by SVT,
/// scaled dual ascent, residual-balancing penalty.
SplitResult split_solve(const SubproblemSpec &spec, const SplitSettings &settings = {});

/// Starts from a previous state of a subproblem with the same affine maps; its
/// penalty replaces settings.mu.
SplitResult split_solve(const SubproblemSpec &spec, const SplitSettings &settings, const SplitState *warm);

} // namespace graybox
