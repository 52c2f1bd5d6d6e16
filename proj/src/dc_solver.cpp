#include "graybox/dc_solver.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <chrono>
#include <cmath>

namespace graybox {

void DcSettings::validate() const {
    if (!(lambda1 > 0 && lambda2 > 0 && rho > 0 && epsilon > 0 && maxOuterIters > 0))
        throw DimensionError("DcSettings: lambda1, lambda2, rho, epsilon and maxOuterIters must be positive");
    if (v < 0 || h < 0 || timeLimitSeconds < 0)
        throw DimensionError("DcSettings: v, h and the time limit must be nonnegative");
    inner.validate();
}

double ky_fan(const Matrix &M, Index kappa) {
    if (kappa < 1 || kappa > std::min(M.rows(), M.cols()))
        throw DimensionError("ky_fan: kappa out of range");
    return Eigen::JacobiSVD<Matrix>(M).singularValues().head(kappa).sum();
}

SingularFactors top_singular_factors(const Matrix &M, Index kappa) {
    if (kappa < 1 || kappa > std::min(M.rows(), M.cols()))
        throw DimensionError("top_singular_factors: kappa out of range");
    if (M.isZero(0.0))
        return {Matrix::Zero(M.rows(), kappa), Matrix::Zero(M.cols(), kappa)};
    Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    SingularFactors f{svd.matrixU().leftCols(kappa), svd.matrixV().leftCols(kappa)};
    for (Index k = 0; k < kappa; ++k) {
        Index at = 0;
        f.left.col(k).cwiseAbs().maxCoeff(&at);
        if (f.left(at, k) < 0) {
            f.left.col(k) *= -1.0;
            f.right.col(k) *= -1.0;
        }
    }
    return f;
}

Matrix build_certificate_W(const Matrix &X, const Matrix &obsStack, const Matrix &ctrlStack, Index n) {
    if (n <= 0)
        throw DimensionError("build_certificate_W: n must be positive");
    require_shape(obsStack, X.rows(), n, "build_certificate_W: obsStack");
    require_shape(ctrlStack, n, X.cols(), "build_certificate_W: ctrlStack");
    Matrix W(X.rows() + n, X.cols() + n);
    W.topLeftCorner(X.rows(), X.cols()) = X;
    W.topRightCorner(X.rows(), n) = obsStack;
    W.bottomLeftCorner(n, X.cols()) = ctrlStack;
    W.bottomRightCorner(n, n).setIdentity();
    return W;
}

Matrix build_lifted_T(const ParameterVector &theta, const Matrix &obsBar, const Matrix &ctrlBar,
                      const std::vector<Matrix> &liftedObs, const std::vector<Matrix> &liftedCtrl) {
    const Index q = theta.size();
    if (static_cast<Index>(liftedObs.size()) != q || static_cast<Index>(liftedCtrl.size()) != q)
        throw DimensionError("build_lifted_T: need one lifted pair per parameter");
    const Index so = obsBar.size(), sc = ctrlBar.size();
    Matrix T(1 + so + sc, q + 1);
    T(0, 0) = 1.0;
    T.col(0).segment(1, so) = obsBar.reshaped();
    T.col(0).segment(1 + so, sc) = ctrlBar.reshaped();
    for (Index i = 0; i < q; ++i) {
        const auto k = static_cast<std::size_t>(i);
        require_shape(liftedObs[k], obsBar.rows(), obsBar.cols(), "build_lifted_T: liftedObs");
        require_shape(liftedCtrl[k], ctrlBar.rows(), ctrlBar.cols(), "build_lifted_T: liftedCtrl");
        T(0, i + 1) = theta(i);
        T.col(i + 1).segment(1, so) = liftedObs[k].reshaped();
        T.col(i + 1).segment(1 + so, sc) = liftedCtrl[k].reshaped();
    }
    return T;
}

RankOneLift extract_theta_from_rank1(const Matrix &T, Index obsBarRows, Index obsBarCols, Index ctrlBarRows,
                                     Index ctrlBarCols) {
    const Index so = obsBarRows * obsBarCols, sc = ctrlBarRows * ctrlBarCols;
    if (T.rows() != 1 + so + sc || T.cols() < 1)
        throw DimensionError("extract_theta_from_rank1: shape does not match the lifted layout");
    Eigen::JacobiSVD<Matrix> svd(T, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector &s = svd.singularValues();
    if (s(0) == 0.0)
        throw RankDeficiencyError("extract_theta_from_rank1: matrix is zero");
    if (s.size() > 1 && s(1) > kRankTolerance * s(0))
        throw RankDeficiencyError("extract_theta_from_rank1: matrix is not numerically rank one");
    // T ~ a b^T with a(0) = 1; then theta = b(1:)/b(0) and the first column is a * b(0).
    const Vector u = svd.matrixU().col(0), v = svd.matrixV().col(0);
    const double corner = s(0) * u(0) * v(0);
    if (std::abs(corner) < 1e-12)
        throw RankDeficiencyError("extract_theta_from_rank1: top-left entry is numerically zero");
    const Vector b = s(0) * u(0) * v;
    const Vector a = u / u(0);
    RankOneLift lift;
    lift.theta = b.tail(T.cols() - 1) / b(0);
    const Vector firstCol = a * b(0);
    lift.obsBar = firstCol.segment(1, so).reshaped(obsBarRows, obsBarCols);
    lift.ctrlBar = firstCol.segment(1 + so, sc).reshaped(ctrlBarRows, ctrlBarCols);
    return lift;
}

namespace {

double gap(const Matrix &M, Index kappa) {
    if (M.size() == 0)
        return 0.0;
    const Vector s = Eigen::JacobiSVD<Matrix>(M).singularValues();
    kappa = std::min(kappa, s.size());
    return std::max(0.0, s.sum() - s.head(kappa).sum());
}

} // namespace

double dc_objective(const DcIterate &iterate, const HankelMatrix &Y, const DcSettings &settings) {
    require_shape(iterate.surrogateHankel, Y.data.rows(), Y.data.cols(), "dc_objective: surrogate Hankel");
    const Index n = iterate.ctrlStack.rows();
    return (Y.data - iterate.surrogateHankel).squaredNorm() + settings.lambda1 * gap(iterate.certW, n) +
           settings.lambda2 * gap(iterate.certT, 1);
}

DcShape dc_shape(const AffineParameterization &param, const HankelMatrix &Y) {
    param.validate();
    if (Y.p != param.dims.p || Y.m != param.dims.m)
        throw DimensionError("dc_shape: Hankel block size does not match the parameterization");
    require_shape(Y.data, Y.v * Y.p, Y.h * Y.m, "dc_shape: Hankel data");
    if (Y.v < 2 || Y.h < 2 || Y.v < param.dims.n || Y.h < param.dims.n)
        throw DimensionError("dc_shape: need v, h >= max(n, 2)");
    return {param.dims, param.q(), Y.v, Y.h};
}

VariableLayout dc_layout(const DcShape &s) {
    const Index n = s.dims.n, p = s.dims.p, m = s.dims.m;
    VariableLayout layout;
    layout.add("theta", s.q, 1);
    layout.add("obs", s.v * p, n);
    layout.add("ctrl", n, s.h * m);
    layout.add("hankel", s.v * p, s.h * m);
    for (Index i = 0; i < s.q; ++i)
        layout.add("liftedObs" + std::to_string(i), s.obs_bar_rows(), n);
    for (Index i = 0; i < s.q; ++i)
        layout.add("liftedCtrl" + std::to_string(i), n, s.ctrl_bar_cols());
    return layout;
}

namespace {

// Offsets follow dc_layout without name lookups.
struct Offsets {
    Index theta, obs, ctrl, hankel, liftedObs, liftedCtrl, obsLiftSize, ctrlLiftSize, total;

    explicit Offsets(const DcShape &s) {
        const Index n = s.dims.n, p = s.dims.p, m = s.dims.m;
        theta = 0;
        obs = s.q;
        ctrl = obs + s.v * p * n;
        hankel = ctrl + n * s.h * m;
        liftedObs = hankel + s.v * p * s.h * m;
        obsLiftSize = s.obs_bar_rows() * n;
        ctrlLiftSize = n * s.ctrl_bar_cols();
        liftedCtrl = liftedObs + s.q * obsLiftSize;
        total = liftedCtrl + s.q * ctrlLiftSize;
    }
};

} // namespace

DcIterate unpack_iterate(const Vector &z, const DcShape &s) {
    const Offsets o(s);
    if (z.size() != o.total)
        throw DimensionError("unpack_iterate: vector length does not match the layout");
    const Index n = s.dims.n, p = s.dims.p, m = s.dims.m;
    DcIterate it;
    it.theta = z.segment(o.theta, s.q);
    it.obsStack = z.segment(o.obs, s.v * p * n).reshaped(s.v * p, n);
    it.ctrlStack = z.segment(o.ctrl, n * s.h * m).reshaped(n, s.h * m);
    it.surrogateHankel = z.segment(o.hankel, s.v * p * s.h * m).reshaped(s.v * p, s.h * m);
    for (Index i = 0; i < s.q; ++i) {
        it.liftedObs.emplace_back(
            z.segment(o.liftedObs + i * o.obsLiftSize, o.obsLiftSize).reshaped(s.obs_bar_rows(), n));
        it.liftedCtrl.emplace_back(
            z.segment(o.liftedCtrl + i * o.ctrlLiftSize, o.ctrlLiftSize).reshaped(n, s.ctrl_bar_cols()));
    }
    it.certW = build_certificate_W(it.surrogateHankel, it.obsStack, it.ctrlStack, n);
    it.certT = build_lifted_T(it.theta, it.obsStack.topRows(s.obs_bar_rows()),
                              it.ctrlStack.leftCols(s.ctrl_bar_cols()), it.liftedObs, it.liftedCtrl);
    return it;
}

Vector pack_iterate(const DcIterate &it, const DcShape &s) {
    const Offsets o(s);
    Vector z(o.total);
    z.segment(o.theta, s.q) = it.theta;
    z.segment(o.obs, it.obsStack.size()) = it.obsStack.reshaped();
    z.segment(o.ctrl, it.ctrlStack.size()) = it.ctrlStack.reshaped();
    z.segment(o.hankel, it.surrogateHankel.size()) = it.surrogateHankel.reshaped();
    for (Index i = 0; i < s.q; ++i) {
        const auto k = static_cast<std::size_t>(i);
        z.segment(o.liftedObs + i * o.obsLiftSize, o.obsLiftSize) = it.liftedObs[k].reshaped();
        z.segment(o.liftedCtrl + i * o.ctrlLiftSize, o.ctrlLiftSize) = it.liftedCtrl[k].reshaped();
    }
    return z;
}

DcIterate consistent_iterate(const AffineParameterization &param, const ParameterVector &theta, Index v, Index h) {
    const StateSpace ss = assemble(param, theta);
    const Index n = param.dims.n;
    DcIterate it;
    it.theta = theta;
    it.obsStack = observability_stack(ss, v);
    it.ctrlStack = controllability_stack(ss, h);
    it.surrogateHankel = it.obsStack * it.ctrlStack;
    const Matrix obsBar = it.obsStack.topRows((v - 1) * param.dims.p);
    const Matrix ctrlBar = it.ctrlStack.leftCols((h - 1) * param.dims.m);
    for (Index i = 0; i < theta.size(); ++i) {
        it.liftedObs.emplace_back(obsBar * theta(i));
        it.liftedCtrl.emplace_back(ctrlBar * theta(i));
    }
    it.certW = build_certificate_W(it.surrogateHankel, it.obsStack, it.ctrlStack, n);
    it.certT = build_lifted_T(theta, obsBar, ctrlBar, it.liftedObs, it.liftedCtrl);
    return it;
}

DcIterate initial_iterate(const DcShape &s) {
    DcIterate it = unpack_iterate(Vector::Zero(Offsets(s).total), s);
    it.certW.setZero();
    it.certT.setZero();
    return it;
}

LinearizationPoint linearize(const DcIterate &iterate, Index n) {
    auto w = top_singular_factors(iterate.certW, n);
    auto t = top_singular_factors(iterate.certT, 1);
    return {std::move(w.left), std::move(w.right), std::move(t.left), std::move(t.right)};
}

SubproblemSpec linearized_subproblem(const DcIterate &iterate, const LinearizationPoint &lin,
                                     const HankelMatrix &Y, const AffineParameterization &param,
                                     const DcSettings &settings) {
    const DcShape s = dc_shape(param, Y);
    const Offsets o(s);
    const Index n = s.dims.n, p = s.dims.p, m = s.dims.m, q = s.q;
    const Index vp = s.v * p, hm = s.h * m;
    const Index obr = s.obs_bar_rows(), cbc = s.ctrl_bar_cols();
    require_shape(iterate.certW, s.cert_w_rows(), s.cert_w_cols(), "linearized_subproblem: certW");
    require_shape(iterate.certT, s.cert_t_rows(), s.cert_t_cols(), "linearized_subproblem: certT");
    require_shape(lin.leftW, s.cert_w_rows(), n, "linearized_subproblem: leftW");
    require_shape(lin.rightW, s.cert_w_cols(), n, "linearized_subproblem: rightW");
    require_shape(lin.leftT, s.cert_t_rows(), 1, "linearized_subproblem: leftT");
    require_shape(lin.rightT, s.cert_t_cols(), 1, "linearized_subproblem: rightT");

    SubproblemSpec spec;
    spec.layout = dc_layout(s);
    const Index dim = o.total;
    using Triplet = Eigen::Triplet<double>;

    // ||Y - X||_F^2
    {
        std::vector<Triplet> t;
        for (Index k = 0; k < vp * hm; ++k)
            t.emplace_back(o.hankel + k, o.hankel + k, 1.0);
        spec.quadratic.P.resize(dim, dim);
        spec.quadratic.P.setFromTriplets(t.begin(), t.end());
        spec.quadratic.linear = Vector::Zero(dim);
        spec.quadratic.linear.segment(o.hankel, vp * hm) = -2.0 * Y.data.reshaped();
        spec.quadratic.constant = Y.data.squaredNorm();
    }

    // W = [[X, O], [C_h, I]]
    {
        auto &map = spec.affineW;
        map.rows = s.cert_w_rows();
        map.cols = s.cert_w_cols();
        const Index ld = map.rows;
        std::vector<Triplet> t;
        for (Index j = 0; j < hm; ++j)
            for (Index i = 0; i < vp; ++i)
                t.emplace_back(i + j * ld, o.hankel + i + j * vp, 1.0);
        for (Index k = 0; k < n; ++k)
            for (Index i = 0; i < vp; ++i)
                t.emplace_back(i + (hm + k) * ld, o.obs + i + k * vp, 1.0);
        for (Index j = 0; j < hm; ++j)
            for (Index k = 0; k < n; ++k)
                t.emplace_back(vp + k + j * ld, o.ctrl + k + j * n, 1.0);
        map.linear.resize(map.rows * map.cols, dim);
        map.linear.setFromTriplets(t.begin(), t.end());
        map.offset = Vector::Zero(map.rows * map.cols);
        for (Index k = 0; k < n; ++k)
            map.offset(vp + k + (hm + k) * ld) = 1.0;
    }

    // T = [1, theta^T; vec(Obar), vec(G_i); vec(Cbar), vec(U_i)]
    {
        auto &map = spec.affineT;
        map.rows = s.cert_t_rows();
        map.cols = s.cert_t_cols();
        const Index ld = map.rows;
        std::vector<Triplet> t;
        for (Index k = 0; k < n; ++k)
            for (Index i = 0; i < obr; ++i)
                t.emplace_back(1 + i + k * obr, o.obs + i + k * vp, 1.0);
        for (Index j = 0; j < cbc; ++j)
            for (Index k = 0; k < n; ++k)
                t.emplace_back(1 + o.obsLiftSize + k + j * n, o.ctrl + k + j * n, 1.0);
        for (Index i = 0; i < q; ++i) {
            const Index col = (i + 1) * ld;
            t.emplace_back(col, o.theta + i, 1.0);
            for (Index k = 0; k < o.obsLiftSize; ++k)
                t.emplace_back(col + 1 + k, o.liftedObs + i * o.obsLiftSize + k, 1.0);
            for (Index k = 0; k < o.ctrlLiftSize; ++k)
                t.emplace_back(col + 1 + o.obsLiftSize + k, o.liftedCtrl + i * o.ctrlLiftSize + k, 1.0);
        }
        map.linear.resize(map.rows * map.cols, dim);
        map.linear.setFromTriplets(t.begin(), t.end());
        map.offset = Vector::Zero(map.rows * map.cols);
        map.offset(0) = 1.0;
    }

    // Equality constraints: output/input embedding, then the two shift relations.
    {
        const Index rows = p * n + n * m + obr * n + n * cbc;
        std::vector<Triplet> t;
        Vector rhs = Vector::Zero(rows);
        Index row = 0;
        for (Index k = 0; k < n; ++k)
            for (Index r = 0; r < p; ++r, ++row) {
                t.emplace_back(row, o.obs + r + k * vp, 1.0);
                for (Index i = 0; i < q; ++i)
                    if (const double c = param.coeffC[static_cast<std::size_t>(i)](r, k); c != 0.0)
                        t.emplace_back(row, o.theta + i, -c);
                rhs(row) = param.offsetC(r, k);
            }
        for (Index j = 0; j < m; ++j)
            for (Index k = 0; k < n; ++k, ++row) {
                t.emplace_back(row, o.ctrl + k + j * n, 1.0);
                for (Index i = 0; i < q; ++i)
                    if (const double c = param.coeffB[static_cast<std::size_t>(i)](k, j); c != 0.0)
                        t.emplace_back(row, o.theta + i, -c);
                rhs(row) = param.offsetB(k, j);
            }
        // Obar A0 + sum_i G_i A_i - O(p:vp, :) = 0
        for (Index c = 0; c < n; ++c)
            for (Index r = 0; r < obr; ++r, ++row) {
                for (Index k = 0; k < n; ++k) {
                    if (const double a = param.offsetA(k, c); a != 0.0)
                        t.emplace_back(row, o.obs + r + k * vp, a);
                    for (Index i = 0; i < q; ++i)
                        if (const double a = param.coeffA[static_cast<std::size_t>(i)](k, c); a != 0.0)
                            t.emplace_back(row, o.liftedObs + i * o.obsLiftSize + r + k * obr, a);
                }
                t.emplace_back(row, o.obs + p + r + c * vp, -1.0);
            }
        // A0 Cbar + sum_i A_i U_i - C_h(:, m:hm) = 0
        for (Index j = 0; j < cbc; ++j)
            for (Index k = 0; k < n; ++k, ++row) {
                for (Index l = 0; l < n; ++l) {
                    if (const double a = param.offsetA(k, l); a != 0.0)
                        t.emplace_back(row, o.ctrl + l + j * n, a);
                    for (Index i = 0; i < q; ++i)
                        if (const double a = param.coeffA[static_cast<std::size_t>(i)](k, l); a != 0.0)
                            t.emplace_back(row, o.liftedCtrl + i * o.ctrlLiftSize + l + j * n, a);
                }
                t.emplace_back(row, o.ctrl + k + (m + j) * n, -1.0);
            }
        spec.equality.resize(rows, dim);
        spec.equality.setFromTriplets(t.begin(), t.end());
        spec.equalityRhs = std::move(rhs);
    }

    spec.weightW = settings.lambda1;
    spec.weightT = settings.lambda2;
    spec.subgradW = lin.leftW * lin.rightW.transpose();
    spec.subgradT = lin.leftT * lin.rightT.transpose();
    spec.proximalWeight = settings.rho;
    spec.proximalW = iterate.certW;
    spec.proximalT = iterate.certT;
    return spec;
}

double theta_relative_change(const ParameterVector &next, const ParameterVector &previous) {
    const double delta = (next - previous).norm();
    const double base = previous.norm();
    return base < 1e-12 ? delta : delta / base;
}

DcSolution solve_dcp(const HankelMatrix &Y, const AffineParameterization &param, const DcSettings &settings) {
    return solve_dcp_from(Y, param, initial_iterate(dc_shape(param, Y)), settings);
}

DcSolution solve_dcp_from(const HankelMatrix &Y, const AffineParameterization &param, const DcIterate &start,
                          const DcSettings &settings) {
    settings.validate();
    const DcShape shape = dc_shape(param, Y);
    if ((settings.v != 0 && settings.v != Y.v) || (settings.h != 0 && settings.h != Y.h))
        throw DimensionError("solve_dcp: settings v/h disagree with the supplied Hankel matrix");

    using Clock = std::chrono::steady_clock;
    const auto startTime = Clock::now();

    DcSolution sol;
    pack_iterate(start, shape); // shape check
    DcIterate iterate = start;
    SplitState warm;
    for (int j = 0; j < settings.maxOuterIters; ++j) {
        const auto t0 = Clock::now();
        const LinearizationPoint lin = linearize(iterate, shape.dims.n);
        const SubproblemSpec spec = linearized_subproblem(iterate, lin, Y, param, settings);
        SplitResult inner = split_solve(spec, settings.inner, settings.warmStart && j > 0 ? &warm : nullptr);
        warm = inner.state;
        if (!inner.diagnostics.converged && settings.abortOnInnerFailure)
            throw NumericalError("solve_dcp: inner solver did not converge at outer iteration " +
                                 std::to_string(j + 1));
        if (!inner.z.allFinite())
            throw NumericalError("solve_dcp: inner solver produced non-finite values at outer iteration " +
                                 std::to_string(j + 1));
        inner.diagnostics.meritTrace.clear();
        inner.diagnostics.meritMu.clear();
        sol.innerDiagnostics.push_back(std::move(inner.diagnostics));

        DcIterate next = unpack_iterate(inner.z, shape);
        const double change = theta_relative_change(next.theta, iterate.theta);
        sol.objectiveTrace.push_back(dc_objective(next, Y, settings));
        sol.thetaRelChangeTrace.push_back(change);
        iterate = std::move(next);
        const auto t1 = Clock::now();
        sol.iterationMillis.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());

        // The zero starting point is not a solution of any subproblem, so the
        // stopping test starts from the second iterate.
        if (j >= 1 && change <= settings.epsilon) {
            sol.status = DcStatus::converged;
            break;
        }
        if (settings.timeLimitSeconds > 0 &&
            std::chrono::duration<double>(t1 - startTime).count() > settings.timeLimitSeconds)
            throw TimeLimitError("solve_dcp: time limit exceeded after outer iteration " + std::to_string(j + 1));
    }
    sol.theta = iterate.theta;
    sol.finalIterate = std::move(iterate);
    return sol;
}

} // namespace graybox
