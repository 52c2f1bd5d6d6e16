#include "graybox/baselines.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

namespace graybox {

namespace {

void check_black_box(const StateSpace &blackBox, const AffineParameterization &param, const char *where) {
    const Dims d = param.dims;
    if (blackBox.A.rows() != d.n || blackBox.A.cols() != d.n || blackBox.B.rows() != d.n ||
        blackBox.B.cols() != d.m || blackBox.C.rows() != d.p || blackBox.C.cols() != d.n)
        throw DimensionError(std::string(where) + ": black-box realization does not match the parameterization");
}

Vector min_norm_solve(const Matrix &M, const Vector &rhs, bool &rankDeficient) {
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(M);
    cod.setThreshold(1e-12);
    if (cod.rank() < M.cols())
        rankDeficient = true;
    return cod.solve(rhs);
}

} // namespace

double similarity_cost(const Matrix &Q, const ParameterVector &theta, const StateSpace &blackBox,
                       const AffineParameterization &param) {
    check_black_box(blackBox, param, "similarity_cost");
    require_shape(Q, param.dims.n, param.dims.n, "similarity_cost: Q");
    const StateSpace s = assemble(param, theta);
    return (Q * blackBox.A - s.A * Q).squaredNorm() + (Q * blackBox.B - s.B).squaredNorm() +
           (blackBox.C - s.C * Q).squaredNorm();
}

VectorizedSimilarity build_vectorized_similarity(const ParameterVector &theta, const StateSpace &blackBox,
                                                 const AffineParameterization &param) {
    check_black_box(blackBox, param, "build_vectorized_similarity");
    const Index n = param.dims.n, m = param.dims.m, p = param.dims.p;
    const StateSpace s = assemble(param, theta);
    const Matrix In = Matrix::Identity(n, n);

    VectorizedSimilarity out;
    out.M = Matrix::Zero(n * n + n * m + p * n, n * n);
    out.N = Vector::Zero(out.M.rows());
    out.M.topRows(n * n) = Eigen::kroneckerProduct(blackBox.A.transpose(), In) - Eigen::kroneckerProduct(In, s.A);
    out.M.middleRows(n * n, n * m) = Eigen::kroneckerProduct(blackBox.B.transpose(), In);
    out.M.bottomRows(p * n) = Eigen::kroneckerProduct(In, s.C);
    out.N.segment(n * n, n * m) = s.B.reshaped();
    out.N.tail(p * n) = blackBox.C.reshaped();
    return out;
}

AltminResult altmin_similarity(const StateSpace &blackBox, const AffineParameterization &param,
                               const SimilarityIterate &init, int maxIters) {
    check_black_box(blackBox, param, "altmin_similarity");
    const Index n = param.dims.n, m = param.dims.m, p = param.dims.p, q = param.q();
    require_shape(init.Q, n, n, "altmin_similarity: Q");
    if (init.theta.size() != q)
        throw DimensionError("altmin_similarity: theta length does not match the parameterization");
    if (maxIters < 0)
        throw std::invalid_argument("altmin_similarity: maxIters must be nonnegative");

    AltminResult r;
    Matrix Q = init.Q;
    ParameterVector theta = init.theta;
    double cost = similarity_cost(Q, theta, blackBox, param);
    r.costTrace.push_back(cost);

    const Index rows = n * n + n * m + p * n;
    for (int k = 0; k < maxIters && cost > 0.0; ++k) {
        // Q-step.
        const VectorizedSimilarity vs = build_vectorized_similarity(theta, blackBox, param);
        Q = min_norm_solve(vs.M, vs.N, r.rankDeficient).reshaped(n, n);

        // theta-step: every residual is affine in theta for fixed Q.
        if (q > 0) {
            Matrix J(rows, q);
            Vector rhs(rows);
            rhs << (Q * blackBox.A - param.offsetA * Q).reshaped(), (Q * blackBox.B - param.offsetB).reshaped(),
                (blackBox.C - param.offsetC * Q).reshaped();
            for (Index i = 0; i < q; ++i) {
                const auto iu = static_cast<std::size_t>(i);
                J.col(i) << (param.coeffA[iu] * Q).reshaped(), param.coeffB[iu].reshaped(),
                    (param.coeffC[iu] * Q).reshaped();
            }
            theta = min_norm_solve(J, rhs, r.rankDeficient);
        }

        const double next = similarity_cost(Q, theta, blackBox, param);
        r.costTrace.push_back(next);
        r.iterations = k + 1;
        const double change = std::abs(cost - next) / std::max(cost, std::numeric_limits<double>::min());
        cost = next;
        if (change <= 1e-10)
            break;
    }
    r.iterate = {Q, theta, cost};
    return r;
}

void IoData::validate() const {
    if (u.cols() != y.cols())
        throw DimensionError("IoData: input and output lengths differ");
    if (!u.allFinite() || !y.allFinite())
        throw NumericalError("IoData: non-finite samples");
    if (!(T > 0))
        throw std::invalid_argument("IoData: sampling period must be positive");
}

Matrix simulate_discrete(const StateSpace &ssd, const Matrix &u, const Vector &x0) {
    ssd.validate();
    const Dims d = ssd.dims();
    if (u.rows() != d.m)
        throw DimensionError("simulate_discrete: input has " + std::to_string(u.rows()) + " rows, expected " +
                             std::to_string(d.m));
    if (x0.size() != d.n)
        throw DimensionError("simulate_discrete: initial state has the wrong length");
    Matrix y(d.p, u.cols());
    Vector x = x0;
    for (Index k = 0; k < u.cols(); ++k) {
        y.col(k) = ssd.C * x;
        x = ssd.A * x + ssd.B * u.col(k);
        if (!x.allFinite())
            throw NumericalError("simulate_discrete: state diverged at step " + std::to_string(k + 1));
    }
    return y;
}

IoData make_identification_data(const StateSpace &ss, Index length, std::uint64_t seed) {
    ss.validate();
    if (length <= 0)
        throw std::invalid_argument("make_identification_data: length must be positive");
    const Eigen::EigenSolver<Matrix> es(ss.A, false);
    const double maxImag = es.eigenvalues().imag().cwiseAbs().maxCoeff();
    IoData data;
    data.T = maxImag > 0 ? std::min(1.0, 0.5 * std::numbers::pi / maxImag) : 1.0;

    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.5);
    data.u.resize(ss.B.cols(), length);
    for (Index k = 0; k < length; ++k)
        for (Index i = 0; i < data.u.rows(); ++i)
            data.u(i, k) = coin(rng) ? 1.0 : -1.0;
    data.y = simulate_discrete(discretize_zoh(ss, data.T), data.u, Vector::Zero(ss.A.rows()));
    return data;
}

namespace {

// Stacked output errors y - yhat, column-major.
Vector prediction_residual(const IoData &data, const AffineParameterization &param, const ParameterVector &theta) {
    const StateSpace ssd = discretize_zoh(assemble(param, theta), data.T);
    const Matrix yhat = simulate_discrete(ssd, data.u, Vector::Zero(param.dims.n));
    return (data.y - yhat).reshaped();
}

} // namespace

double prediction_error_cost(const IoData &data, const AffineParameterization &param, const ParameterVector &theta) {
    data.validate();
    return prediction_residual(data, param, theta).squaredNorm() / static_cast<double>(data.length());
}

PemResult pem_surrogate(const IoData &data, const AffineParameterization &param, const ParameterVector &initTheta,
                        const PemSettings &settings) {
    data.validate();
    param.validate();
    if (data.u.rows() != param.dims.m || data.y.rows() != param.dims.p)
        throw DimensionError("pem_surrogate: data channels do not match the parameterization");
    if (initTheta.size() != param.q())
        throw DimensionError("pem_surrogate: initial theta has the wrong length");

    const double invN = 1.0 / static_cast<double>(data.length());
    PemResult r;
    r.theta = initTheta;
    Vector res = prediction_residual(data, param, r.theta);
    double cost = res.squaredNorm() * invN;
    r.costTrace.push_back(cost);
    if (param.q() == 0 || cost == 0.0) {
        r.converged = true;
        return r;
    }

    const Index q = param.q();
    double damping = -1.0;
    for (int k = 0; k < settings.maxIters; ++k) {
        r.iterations = k + 1;
        Matrix J(res.size(), q);
        for (Index i = 0; i < q; ++i) {
            const double step = 1e-6 * std::max(1.0, std::abs(r.theta(i)));
            ParameterVector plus = r.theta, minus = r.theta;
            plus(i) += step;
            minus(i) -= step;
            // The residual is y - yhat, so its Jacobian is minus the output sensitivity.
            J.col(i) = (prediction_residual(data, param, plus) - prediction_residual(data, param, minus)) / (2 * step);
        }
        const Matrix JtJ = J.transpose() * J;
        const Vector Jtr = J.transpose() * res;
        if (damping < 0)
            damping = settings.initialDamping * std::max(JtJ.diagonal().mean(), 1e-12);

        bool accepted = false;
        for (int attempt = 0; attempt < settings.maxRejections; ++attempt) {
            const Matrix lhs = JtJ + damping * Matrix::Identity(q, q);
            const Vector delta = lhs.ldlt().solve(-Jtr);
            const ParameterVector trial = r.theta + delta;
            double trialCost = std::numeric_limits<double>::infinity();
            Vector trialRes;
            if (trial.allFinite()) {
                try {
                    trialRes = prediction_residual(data, param, trial);
                    trialCost = trialRes.squaredNorm() * invN;
                } catch (const NumericalError &) {
                    // diverging simulation counts as a rejected step
                }
            }
            if (trialCost < cost) {
                damping *= 0.5;
                const double change = (cost - trialCost) / cost;
                r.theta = trial;
                res = std::move(trialRes);
                cost = trialCost;
                r.costTrace.push_back(cost);
                accepted = true;
                if (change <= settings.relTol || cost == 0.0)
                    r.converged = true;
                break;
            }
            damping *= 2.0;
        }
        if (!accepted || r.converged) {
            // No descent direction left at any damping: a stationary point to working precision.
            r.converged = r.converged || (!accepted && std::isfinite(cost));
            break;
        }
    }
    return r;
}

} // namespace graybox
