#include "graybox/model.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace graybox {

AffineParameterization AffineParameterization::zeros(Dims dims) {
    dims.validate();
    AffineParameterization p;
    p.dims = dims;
    p.offsetA = Matrix::Zero(dims.n, dims.n);
    p.offsetB = Matrix::Zero(dims.n, dims.m);
    p.offsetC = Matrix::Zero(dims.p, dims.n);
    return p;
}

void AffineParameterization::add_parameter(Matrix a, Matrix b, Matrix c) {
    require_shape(a, dims.n, dims.n, "coeffA");
    require_shape(b, dims.n, dims.m, "coeffB");
    require_shape(c, dims.p, dims.n, "coeffC");
    coeffA.push_back(std::move(a));
    coeffB.push_back(std::move(b));
    coeffC.push_back(std::move(c));
}

void AffineParameterization::validate() const {
    dims.validate();
    require_shape(offsetA, dims.n, dims.n, "offsetA");
    require_shape(offsetB, dims.n, dims.m, "offsetB");
    require_shape(offsetC, dims.p, dims.n, "offsetC");
    if (coeffB.size() != coeffA.size() || coeffC.size() != coeffA.size())
        throw DimensionError("AffineParameterization: coefficient lists differ in length");
    for (std::size_t i = 0; i < coeffA.size(); ++i) {
        require_shape(coeffA[i], dims.n, dims.n, "coeffA[" + std::to_string(i) + "]");
        require_shape(coeffB[i], dims.n, dims.m, "coeffB[" + std::to_string(i) + "]");
        require_shape(coeffC[i], dims.p, dims.n, "coeffC[" + std::to_string(i) + "]");
    }
}

void StateSpace::validate() const {
    const Index n = A.rows();
    if (n <= 0 || B.cols() <= 0 || C.rows() <= 0)
        throw DimensionError("StateSpace: empty system matrices");
    require_shape(A, n, n, "A");
    require_shape(B, n, B.cols(), "B");
    require_shape(C, C.rows(), n, "C");
    if (domain == TimeDomain::discrete && !(std::isfinite(samplingPeriod) && samplingPeriod > 0))
        throw DimensionError("StateSpace: discrete realization needs a finite positive sampling period");
}

void MarkovSequence::validate() const {
    if (dims.m <= 0 || dims.p <= 0)
        throw DimensionError("MarkovSequence: m and p must be positive");
    for (const auto &b : blocks)
        require_shape(b, dims.p, dims.m, "Markov block");
}

StateSpace assemble(const AffineParameterization &param, const ParameterVector &theta) {
    param.validate();
    if (theta.size() != param.q())
        throw DimensionError("assemble: theta has length " + std::to_string(theta.size()) +
                             " but the parameterization has q = " + std::to_string(param.q()));
    StateSpace ss{param.offsetA, param.offsetB, param.offsetC};
    for (Index i = 0; i < param.q(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        ss.A += theta(i) * param.coeffA[k];
        ss.B += theta(i) * param.coeffB[k];
        ss.C += theta(i) * param.coeffC[k];
    }
    return ss;
}

MarkovSequence markov_sequence(const StateSpace &ss, Index count) {
    ss.validate();
    if (count <= 0)
        throw DimensionError("markov_sequence: count must be positive");
    MarkovSequence seq{ss.dims(), {}};
    seq.blocks.reserve(static_cast<std::size_t>(count));
    Matrix AiB = ss.B;
    for (Index i = 0; i < count; ++i) {
        seq.blocks.emplace_back(ss.C * AiB);
        if (i + 1 < count)
            AiB = ss.A * AiB;
    }
    return seq;
}

HankelMatrix build_hankel(const MarkovSequence &markov, Index v, Index h) {
    markov.validate();
    if (v <= 0 || h <= 0)
        throw DimensionError("build_hankel: v and h must be positive");
    if (markov.size() < v + h - 1)
        throw DimensionError("build_hankel: need " + std::to_string(v + h - 1) + " Markov blocks, have " +
                             std::to_string(markov.size()));
    const Index p = markov.dims.p, m = markov.dims.m;
    HankelMatrix H{v, h, p, m, Matrix(v * p, h * m)};
    for (Index i = 0; i < v; ++i)
        for (Index j = 0; j < h; ++j)
            H.data.block(i * p, j * m, p, m) = markov.blocks[static_cast<std::size_t>(i + j)];
    return H;
}

double impulse_response_fit(const MarkovSequence &candidate, const MarkovSequence &reference) {
    if (candidate.size() != reference.size() || candidate.dims.m != reference.dims.m ||
        candidate.dims.p != reference.dims.p)
        throw DimensionError("impulse_response_fit: sequences differ in length or dimensions");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < reference.blocks.size(); ++i) {
        num += (candidate.blocks[i] - reference.blocks[i]).norm();
        den += reference.blocks[i].norm();
    }
    if (den == 0.0)
        throw UndefinedMetricError("impulse_response_fit: reference impulse response is identically zero");
    return num / den;
}

StateSpace discretize_zoh(const StateSpace &ss, double T) {
    ss.validate();
    if (ss.domain != TimeDomain::continuous)
        throw DimensionError("discretize_zoh: realization is already discrete");
    if (!(std::isfinite(T) && T > 0))
        throw DimensionError("discretize_zoh: sampling period must be finite and positive");
    const Index n = ss.A.rows(), m = ss.B.cols();
    Matrix aug = Matrix::Zero(n + m, n + m);
    aug.topLeftCorner(n, n) = ss.A * T;
    aug.topRightCorner(n, m) = ss.B * T;
    const Matrix E = aug.exp();
    if (!E.allFinite())
        throw NumericalError("discretize_zoh: matrix exponential overflowed");
    StateSpace out{E.topLeftCorner(n, n), E.topRightCorner(n, m), ss.C, TimeDomain::discrete, T};
    return out;
}

Index numeric_rank(const Matrix &M) {
    if (M.size() == 0)
        return 0;
    Eigen::JacobiSVD<Matrix> svd(M);
    const auto &s = svd.singularValues();
    if (s(0) == 0.0)
        return 0;
    return (s.array() > kRankTolerance * s(0)).count();
}

StateSpace ho_kalman_realize(const HankelMatrix &hankel, Index n) {
    const Index p = hankel.p, m = hankel.m, v = hankel.v;
    if (n <= 0)
        throw DimensionError("ho_kalman_realize: order must be positive");
    require_shape(hankel.data, v * p, hankel.h * m, "Hankel data");
    if ((v - 1) * p < n || hankel.h * m < n)
        throw DimensionError("ho_kalman_realize: Hankel too small for the requested order");

    Eigen::JacobiSVD<Matrix> svd(hankel.data, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector s = svd.singularValues();
    if (s(0) == 0.0 || s(n - 1) <= kRankTolerance * s(0))
        throw RankDeficiencyError("ho_kalman_realize: Hankel numeric rank is below the requested order " +
                                  std::to_string(n));
    const Vector root = s.head(n).cwiseSqrt();
    const Matrix O = svd.matrixU().leftCols(n) * root.asDiagonal();
    const Matrix Ch = root.asDiagonal() * svd.matrixV().leftCols(n).transpose();

    StateSpace out;
    out.C = O.topRows(p);
    out.B = Ch.leftCols(m);
    // shift relation: O(0:(v-1)p) A = O(p:vp)
    out.A = O.topRows((v - 1) * p).completeOrthogonalDecomposition().solve(O.bottomRows((v - 1) * p));
    return out;
}

Matrix observability_stack(const StateSpace &ss, Index v) {
    ss.validate();
    const Index p = ss.C.rows(), n = ss.A.rows();
    Matrix O(v * p, n);
    Matrix CAi = ss.C;
    for (Index i = 0; i < v; ++i) {
        O.middleRows(i * p, p) = CAi;
        CAi = CAi * ss.A;
    }
    return O;
}

Matrix controllability_stack(const StateSpace &ss, Index h) {
    ss.validate();
    const Index m = ss.B.cols(), n = ss.A.rows();
    Matrix Ch(n, h * m);
    Matrix AiB = ss.B;
    for (Index j = 0; j < h; ++j) {
        Ch.middleCols(j * m, m) = AiB;
        AiB = ss.A * AiB;
    }
    return Ch;
}

namespace {

Matrix random_orthogonal(Index n, std::mt19937_64 &rng) {
    std::normal_distribution<double> normal;
    Matrix G(n, n);
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < n; ++i)
            G(i, j) = normal(rng);
    Eigen::HouseholderQR<Matrix> qr(G);
    Matrix Q = qr.householderQ();
    const Matrix R = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Index j = 0; j < n; ++j)
        if (R(j, j) < 0)
            Q.col(j) *= -1.0;
    return Q;
}

Matrix random_gaussian(Index rows, Index cols, std::mt19937_64 &rng) {
    std::normal_distribution<double> normal;
    Matrix M(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i)
            M(i, j) = normal(rng);
    return M;
}

// Stable A with eigenvalue real parts in (-2, -0.1) and imaginary parts below pi/2,
// i.e. within the Nyquist band for a unit default sampling period.
Matrix random_stable_state_matrix(Index n, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> re(-2.0, -0.1);
    std::uniform_real_distribution<double> im(0.05, std::numbers::pi / 2.0);
    std::uniform_int_distribution<Index> pairs(0, n / 2);
    const Index complexPairs = pairs(rng);
    Matrix D = Matrix::Zero(n, n);
    Index k = 0;
    for (Index c = 0; c < complexPairs; ++c, k += 2) {
        const double a = re(rng), b = im(rng);
        D(k, k) = a;
        D(k + 1, k + 1) = a;
        D(k, k + 1) = b;
        D(k + 1, k) = -b;
    }
    for (; k < n; ++k)
        D(k, k) = re(rng);
    const Matrix Q = random_orthogonal(n, rng);
    return Q * D * Q.transpose();
}

} // namespace

GrayBoxInstance random_structured_instance(Dims dims, Index q, std::uint64_t seed) {
    dims.validate();
    if (q < 1 || q > (dims.p + dims.m) * dims.n)
        throw DimensionError("random_structured_instance: q must lie in [1, (p+m)n]");
    std::mt19937_64 rng(seed);

    StateSpace ss;
    for (;;) {
        ss.A = random_stable_state_matrix(dims.n, rng);
        ss.B = random_gaussian(dims.n, dims.m, rng);
        ss.C = random_gaussian(dims.p, dims.n, rng);
        const auto H = build_hankel(markov_sequence(ss, 2 * dims.n + 1), dims.n + 1, dims.n + 1);
        if (numeric_rank(H.data) == dims.n)
            break;
    }

    const Index nA = dims.n * dims.n, nB = dims.n * dims.m, nC = dims.p * dims.n;
    std::vector<Index> entries(static_cast<std::size_t>(nA + nB + nC));
    std::iota(entries.begin(), entries.end(), Index{0});
    std::shuffle(entries.begin(), entries.end(), rng);
    entries.resize(static_cast<std::size_t>(q));

    GrayBoxInstance inst;
    inst.param = AffineParameterization::zeros(dims);
    inst.param.offsetA = ss.A;
    inst.param.offsetB = ss.B;
    inst.param.offsetC = ss.C;
    inst.thetaTrue.resize(q);
    for (Index i = 0; i < q; ++i) {
        Index e = entries[static_cast<std::size_t>(i)];
        Matrix a = Matrix::Zero(dims.n, dims.n), b = Matrix::Zero(dims.n, dims.m),
               c = Matrix::Zero(dims.p, dims.n);
        Matrix *target = nullptr;
        Matrix *offset = nullptr;
        if (e < nA) {
            target = &a;
            offset = &inst.param.offsetA;
        } else if ((e -= nA) < nB) {
            target = &b;
            offset = &inst.param.offsetB;
        } else {
            e -= nB;
            target = &c;
            offset = &inst.param.offsetC;
        }
        const Index row = e % target->rows(), col = e / target->rows();
        (*target)(row, col) = 1.0;
        inst.thetaTrue(i) = (*offset)(row, col);
        (*offset)(row, col) = 0.0;
        inst.param.add_parameter(std::move(a), std::move(b), std::move(c));
    }
    return inst;
}

AffineParameterization compartmental_structure(Index n) {
    if (n < 2)
        throw DimensionError("compartmental_structure: order must be at least 2");
    AffineParameterization param = AffineParameterization::zeros({n, 1, 1});
    param.offsetB(n - 1, 0) = 1.0;
    param.offsetC(0, n - 1) = 1.0;
    const Matrix zb = Matrix::Zero(n, 1), zc = Matrix::Zero(1, n);
    for (Index k = 0; k + 1 < n; ++k) {
        // forward exchange k -> k+1
        Matrix fwd = Matrix::Zero(n, n);
        fwd(k, k) = -1.0;
        fwd(k + 1, k) = 1.0;
        param.add_parameter(std::move(fwd), zb, zc);
        // backward exchange k+1 -> k
        Matrix bwd = Matrix::Zero(n, n);
        bwd(k + 1, k + 1) = -1.0;
        bwd(k, k + 1) = 1.0;
        param.add_parameter(std::move(bwd), zb, zc);
    }
    return param;
}

GrayBoxInstance compartmental_instance(Index n, std::uint64_t seed) {
    GrayBoxInstance inst{compartmental_structure(n), {}};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> rate(0.1, 2.0);
    inst.thetaTrue.resize(inst.param.q());
    for (Index i = 0; i < inst.param.q(); ++i)
        inst.thetaTrue(i) = rate(rng);
    return inst;
}

} // namespace graybox
