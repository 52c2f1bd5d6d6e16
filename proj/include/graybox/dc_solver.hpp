#pragma once

#include "graybox/model.hpp"
#include "graybox/split_solver.hpp"

#include <vector>

namespace graybox {

struct DcSettings {
    double lambda1 = 1e-4; ///< weight of the rank-n gap of certW
    double lambda2 = 1e-5; ///< weight of the rank-1 gap of certT
    double rho = 1e-10;    ///< proximal weight
    double epsilon = 1e-4; ///< relative theta-change stopping tolerance
    int maxOuterIters = 100;
    Index v = 0; ///< block rows; 0 means n + 1
    Index h = 0; ///< block columns; 0 means n + 1
    SplitSettings inner;
    /// Abort with NumericalError when an inner solve does not converge.
    bool abortOnInnerFailure = false;
    /// Wall-clock budget in seconds for the whole solve; 0 disables it.
    double timeLimitSeconds = 0.0;
    /// Start each inner solve from the previous one's splitting state.
    bool warmStart = true;

    void validate() const;
};

/// Problem dimensions shared by every iterate of one solve.
struct DcShape {
    Dims dims;
    Index q = 0;
    Index v = 0;
    Index h = 0;

    Index obs_bar_rows() const { return (v - 1) * dims.p; }
    Index ctrl_bar_cols() const { return (h - 1) * dims.m; }
    Index cert_w_rows() const { return v * dims.p + dims.n; }
    Index cert_w_cols() const { return h * dims.m + dims.n; }
    Index cert_t_rows() const { return 1 + obs_bar_rows() * dims.n + dims.n * ctrl_bar_cols(); }
    Index cert_t_cols() const { return q + 1; }
};

/// One outer-iteration state. certW = [[X, O_v], [C_h, I_n]]; certT stacks
/// [1, theta^T; vec(Obar), vec(liftedObs_i); vec(Cbar), vec(liftedCtrl_i)].
struct DcIterate {
    ParameterVector theta;
    Matrix obsStack;        // vp x n
    Matrix ctrlStack;       // n x hm
    Matrix surrogateHankel; // vp x hm
    std::vector<Matrix> liftedObs;  // (v-1)p x n each
    std::vector<Matrix> liftedCtrl; // n x (h-1)m each
    Matrix certW;
    Matrix certT;
};

struct LinearizationPoint {
    Matrix leftW, rightW; // n columns each
    Matrix leftT, rightT; // 1 column each
};

enum class DcStatus { converged, iterationCapReached };

struct DcSolution {
    ParameterVector theta;
    DcIterate finalIterate;
    DcStatus status = DcStatus::iterationCapReached;
    std::vector<double> objectiveTrace;
    std::vector<double> thetaRelChangeTrace;
    std::vector<double> iterationMillis;
    std::vector<SplitDiagnostics> innerDiagnostics;
};

struct SingularFactors {
    Matrix left;
    Matrix right;
};

/// Sum of the kappa largest singular values.
double ky_fan(const Matrix &M, Index kappa);

/// Top-kappa singular vectors, descending, each left vector's largest-magnitude
/// entry made positive. M = 0 yields zero factors.
SingularFactors top_singular_factors(const Matrix &M, Index kappa);

Matrix build_certificate_W(const Matrix &X, const Matrix &obsStack, const Matrix &ctrlStack, Index n);

Matrix build_lifted_T(const ParameterVector &theta, const Matrix &obsBar, const Matrix &ctrlBar,
                      const std::vector<Matrix> &liftedObs, const std::vector<Matrix> &liftedCtrl);

struct RankOneLift {
    ParameterVector theta;
    Matrix obsBar;
    Matrix ctrlBar;
};

/// Inverts build_lifted_T for a numerically rank-1 matrix.
RankOneLift extract_theta_from_rank1(const Matrix &T, Index obsBarRows, Index obsBarCols, Index ctrlBarRows,
                                     Index ctrlBarCols);

/// ||Y - X||_F^2 + lambda1 (||W||_* - f_n(W))_+ + lambda2 (||T||_* - f_1(T))_+
double dc_objective(const DcIterate &iterate, const HankelMatrix &Y, const DcSettings &settings);

DcShape dc_shape(const AffineParameterization &param, const HankelMatrix &Y);

/// Variable layout: theta, O_v, C_h, X, liftedObs_1..q, liftedCtrl_1..q.
VariableLayout dc_layout(const DcShape &shape);

DcIterate unpack_iterate(const Vector &z, const DcShape &shape);
Vector pack_iterate(const DcIterate &iterate, const DcShape &shape);

/// Iterate with every block consistent with (param, theta): exact stacks and lifts.
DcIterate consistent_iterate(const AffineParameterization &param, const ParameterVector &theta, Index v, Index h);

/// All-zero starting point, certW = 0 and certT = 0.
DcIterate initial_iterate(const DcShape &shape);

LinearizationPoint linearize(const DcIterate &iterate, Index n);

SubproblemSpec linearized_subproblem(const DcIterate &iterate, const LinearizationPoint &linPoint,
                                     const HankelMatrix &Y, const AffineParameterization &param,
                                     const DcSettings &settings);

/// Sequential convex programming on the regularized difference-of-convex problem.
DcSolution solve_dcp(const HankelMatrix &Y, const AffineParameterization &param, const DcSettings &settings = {});

/// Same iteration started from a caller-supplied iterate instead of zero.
DcSolution solve_dcp_from(const HankelMatrix &Y, const AffineParameterization &param, const DcIterate &start,
                          const DcSettings &settings = {});

/// Relative theta change with an absolute fallback when ||previous|| < 1e-12.
double theta_relative_change(const ParameterVector &next, const ParameterVector &previous);

} // namespace graybox
