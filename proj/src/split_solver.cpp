#include "graybox/split_solver.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

namespace graybox {

Index VariableLayout::add(std::string name, Index rows, Index cols) {
    const Index offset = size();
    blocks.push_back({std::move(name), offset, rows, cols});
    return offset;
}

Index VariableLayout::size() const {
    return blocks.empty() ? 0 : blocks.back().offset + blocks.back().size();
}

const VariableLayout::Block &VariableLayout::find(const std::string &name) const {
    for (const auto &b : blocks)
        if (b.name == name)
            return b;
    throw DimensionError("VariableLayout: no block named '" + name + "'");
}

AffineMatrixMap AffineMatrixMap::empty(Index dim) {
    AffineMatrixMap map;
    map.linear.resize(0, dim);
    map.offset.resize(0);
    return map;
}

namespace {

double nuclear_norm(const Matrix &M) {
    if (M.size() == 0)
        return 0.0;
    return Eigen::JacobiSVD<Matrix>(M).singularValues().sum();
}

double frobenius_inner(const Matrix &A, const Vector &vecB) {
    if (A.size() == 0)
        return 0.0;
    return A.reshaped().dot(vecB);
}

void check_map(const AffineMatrixMap &map, Index dim, const char *what) {
    const Index size = map.rows * map.cols;
    if (map.linear.rows() != size || map.linear.cols() != dim || map.offset.size() != size)
        throw DimensionError(std::string("SubproblemSpec: ") + what + " map is inconsistent with the layout");
}

void check_optional(const Matrix &M, const AffineMatrixMap &map, const char *what) {
    if (M.size() != 0)
        require_shape(M, map.rows, map.cols, what);
}

Matrix or_zero(const Matrix &M, const AffineMatrixMap &map) {
    return M.size() == 0 ? Matrix::Zero(map.rows, map.cols) : M;
}

} // namespace

void SubproblemSpec::validate() const {
    const Index dim = size();
    if (quadratic.P.rows() != dim || quadratic.P.cols() != dim || quadratic.linear.size() != dim)
        throw DimensionError("SubproblemSpec: quadratic form does not match the layout");
    check_map(affineW, dim, "W");
    check_map(affineT, dim, "T");
    if (equality.cols() != dim || equality.rows() != equalityRhs.size())
        throw DimensionError("SubproblemSpec: equality system does not match the layout");
    check_optional(subgradW, affineW, "subgradW");
    check_optional(subgradT, affineT, "subgradT");
    check_optional(proximalW, affineW, "proximalW");
    check_optional(proximalT, affineT, "proximalT");
    if (weightW < 0 || weightT < 0 || proximalWeight < 0)
        throw DimensionError("SubproblemSpec: weights must be nonnegative");
}

double SubproblemSpec::objective(const Vector &z) const {
    const Matrix W = affineW.image(z), T = affineT.image(z);
    double value = quadratic.value(z) + weightW * nuclear_norm(W) + weightT * nuclear_norm(T);
    if (subgradW.size() != 0)
        value -= weightW * frobenius_inner(subgradW, W.reshaped());
    if (subgradT.size() != 0)
        value -= weightT * frobenius_inner(subgradT, T.reshaped());
    if (proximalWeight > 0) {
        value += proximalWeight * (W - or_zero(proximalW, affineW)).squaredNorm();
        value += proximalWeight * (T - or_zero(proximalT, affineT)).squaredNorm();
    }
    return value;
}

double SubproblemSpec::equality_residual(const Vector &z) const {
    if (equality.rows() == 0)
        return 0.0;
    return (equality * z - equalityRhs).lpNorm<Eigen::Infinity>();
}

void SplitSettings::validate() const {
    if (!(mu > 0 && maxIters > 0 && primalTol > 0 && dualTol > 0 && penaltyRatio > 1 && penaltyScale > 1))
        throw DimensionError("SplitSettings: all settings must be positive (ratio and scale above 1)");
}

Matrix svt(const Matrix &M, double tau) {
    if (tau < 0)
        throw DimensionError("svt: threshold must be nonnegative");
    if (M.size() == 0 || tau == 0.0)
        return M;
    // Shrinking is a function of the Gram matrix: M g(M^T M) with g(s^2) = max(1 - tau/s, 0).
    // Eigenvalue errors of order eps*s1^2 only matter near s = 0, which is thresholded
    // away when tau is not tiny relative to s1.
    const bool tall = M.rows() >= M.cols();
    const Matrix gram = tall ? Matrix(M.transpose() * M) : Matrix(M * M.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    const Vector lambda = eig.eigenvalues().cwiseMax(0.0);
    const double s1 = std::sqrt(lambda.maxCoeff());
    if (s1 <= tau)
        return Matrix::Zero(M.rows(), M.cols());
    if (tau >= 1e-4 * s1) {
        const Index k = lambda.size();
        Index first = 0;
        while (first < k && std::sqrt(lambda(first)) <= tau)
            ++first;
        const Index r = k - first;
        const Matrix V = eig.eigenvectors().rightCols(r);
        const Vector g = (1.0 - tau / lambda.tail(r).cwiseSqrt().array()).matrix();
        if (tall)
            return (M * V) * g.asDiagonal() * V.transpose();
        return V * g.asDiagonal() * (V.transpose() * M);
    }
    Eigen::JacobiSVD<Matrix, Eigen::HouseholderQRPreconditioner> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector s = (svd.singularValues().array() - tau).cwiseMax(0.0);
    Index r = 0;
    while (r < s.size() && s(r) > 0)
        ++r;
    return svd.matrixU().leftCols(r) * s.head(r).asDiagonal() * svd.matrixV().leftCols(r).transpose();
}

ReducedSystem::ReducedSystem(const SubproblemSpec &spec, double mu) : spec_(&spec) {
    spec.validate();
    E_ = Matrix(spec.equality);
    e_ = spec.equalityRhs;
    if (E_.rows() > 0) {
        Eigen::ColPivHouseholderQR<Matrix> qr(E_);
        qr.setThreshold(1e-12);
        redundantRows_ = E_.rows() - qr.rank();
        leastSquares_ = redundantRows_ > 0;
    }
    refactor(mu);
}

void ReducedSystem::refactor(double mu) {
    mu_ = mu;
    const auto &s = *spec_;
    const double w = s.proximalWeight + 0.5 * mu;
    SparseMatrix G = s.quadratic.P;
    if (s.affineW.linear.rows() > 0)
        G += w * SparseMatrix(s.affineW.linear.transpose() * s.affineW.linear);
    if (s.affineT.linear.rows() > 0)
        G += w * SparseMatrix(s.affineT.linear.transpose() * s.affineT.linear);
    G.makeCompressed();
    const Index dim = G.rows();

    diagonal_ = true;
    for (Index k = 0; k < G.outerSize() && diagonal_; ++k)
        for (SparseMatrix::InnerIterator it(G, k); it; ++it)
            if (it.row() != it.col() && it.value() != 0.0) {
                diagonal_ = false;
                break;
            }
    Vector diag = G.diagonal();
    if (diagonal_ && (diag.array() <= 0).any())
        diagonal_ = false;

    useKkt_ = false;
    if (diagonal_) {
        invDiag_ = diag.cwiseInverse();
    } else {
        gFactor_.compute(Matrix(G));
        if (gFactor_.info() != Eigen::Success) {
            useKkt_ = true;
            const Index r = E_.rows();
            Matrix K = Matrix::Zero(dim + r, dim + r);
            K.topLeftCorner(dim, dim) = 2.0 * Matrix(G);
            K.topRightCorner(dim, r) = E_.transpose();
            K.bottomLeftCorner(r, dim) = E_;
            kkt_.compute(K);
            return;
        }
    }
    if (E_.rows() > 0) {
        if (diagonal_)
            EGinv_ = E_ * invDiag_.asDiagonal();
        else
            EGinv_ = gFactor_.solve(E_.transpose()).transpose();
        const Matrix S = EGinv_ * E_.transpose();
        schur_.setThreshold(1e-12);
        schur_.compute(S);
        schurPinv_ = schur_.pseudoInverse();
        EGinvSparse_ = EGinv_.sparseView();
    }
}

Vector ReducedSystem::apply_ginv(const Vector &x) const {
    if (diagonal_)
        return invDiag_.cwiseProduct(x);
    return gFactor_.solve(x);
}

Vector ReducedSystem::solve(const Vector &g) const {
    const Index dim = g.size();
    if (useKkt_) {
        Vector rhs(dim + E_.rows());
        rhs.head(dim) = -g;
        rhs.tail(E_.rows()) = e_;
        return kkt_.solve(rhs).head(dim);
    }
    if (E_.rows() == 0)
        return -0.5 * apply_ginv(g);
    // 2 G z + g + E^T nu = 0,  E z = e
    const Vector nu = schurPinv_ * (-2.0 * e_ - EGinvSparse_ * g);
    return -0.5 * apply_ginv(g + spec_->equality.transpose() * nu);
}

ReducedSystem assemble_reduced_system(const SubproblemSpec &spec, double mu) {
    return ReducedSystem(spec, mu);
}

namespace {

constexpr double kDualScaleFloor = 1e-10;

// One splitting sweep from state u = [Zw; Zt; Uw; Ut] at penalty mu.
struct Sweep {
    Vector z;
    Vector next;
    double primal = 0.0;
    double dual = 0.0;
    double primalScale = 1.0;
    double dualScale = 1.0;
    double merit = 0.0;

    double primal_rel() const { return primal / primalScale; }
    double dual_rel() const { return dual / dualScale; }
};

class Splitter {
public:
    Splitter(const SubproblemSpec &spec, const SplitSettings &settings)
        : spec_(spec), system_(spec, settings.mu), mu_(settings.mu), nw_(spec.affineW.offset.size()),
          nt_(spec.affineT.offset.size()) {
        const auto &Aw = spec.affineW.linear;
        const auto &At = spec.affineT.linear;
        // Smooth linear part: data term, linearized concave terms, proximal term.
        g0_ = spec.quadratic.linear;
        if (nw_ > 0) {
            if (spec.subgradW.size() != 0)
                g0_ -= spec.weightW * (Aw.transpose() * spec.subgradW.reshaped());
            if (spec.proximalWeight > 0)
                g0_ += 2.0 * spec.proximalWeight *
                       (Aw.transpose() * (spec.affineW.offset - or_zero(spec.proximalW, spec.affineW).reshaped()));
        }
        if (nt_ > 0) {
            if (spec.subgradT.size() != 0)
                g0_ -= spec.weightT * (At.transpose() * spec.subgradT.reshaped());
            if (spec.proximalWeight > 0)
                g0_ += 2.0 * spec.proximalWeight *
                       (At.transpose() * (spec.affineT.offset - or_zero(spec.proximalT, spec.affineT).reshaped()));
        }
    }

    Index state_size() const { return 2 * (nw_ + nt_); }
    double mu() const { return mu_; }
    const ReducedSystem &system() const { return system_; }

    Vector initial_state() const {
        Vector u = Vector::Zero(state_size());
        if (nw_ > 0)
            u.segment(0, nw_) = or_zero(spec_.proximalW, spec_.affineW).reshaped();
        if (nt_ > 0)
            u.segment(nw_, nt_) = or_zero(spec_.proximalT, spec_.affineT).reshaped();
        return u;
    }

    /// Rescales the scaled duals in u for a new penalty and refactors.
    void set_mu(double mu, Vector &u) {
        u.tail(nw_ + nt_) *= mu_ / mu;
        mu_ = mu;
        system_.refactor(mu);
    }

    Sweep sweep(const Vector &u) const {
        const auto &Aw = spec_.affineW.linear;
        const auto &At = spec_.affineT.linear;
        const auto Zw = u.segment(0, nw_), Zt = u.segment(nw_, nt_);
        const auto Uw = u.segment(nw_ + nt_, nw_), Ut = u.segment(2 * nw_ + nt_, nt_);

        Vector g = g0_;
        if (nw_ > 0)
            g += mu_ * (Aw.transpose() * (spec_.affineW.offset - Zw + Uw));
        if (nt_ > 0)
            g += mu_ * (At.transpose() * (spec_.affineT.offset - Zt + Ut));
        Sweep s;
        s.z = system_.solve(g);
        s.next.resize(u.size());
        double primal2 = 0.0, image2 = 0.0;
        Vector dualVec = Vector::Zero(s.z.size());
        Vector multiplier = Vector::Zero(s.z.size());
        if (nw_ > 0) {
            const Vector img = Aw * s.z + spec_.affineW.offset;
            const Matrix arg = (img + Uw).reshaped(spec_.affineW.rows, spec_.affineW.cols);
            const Vector Znew = svt(arg, spec_.weightW / mu_).reshaped();
            s.next.segment(0, nw_) = Znew;
            s.next.segment(nw_ + nt_, nw_) = Uw + img - Znew;
            primal2 += (img - Znew).squaredNorm();
            image2 += img.squaredNorm();
            dualVec += Aw.transpose() * (Znew - Zw);
            multiplier += Aw.transpose() * s.next.segment(nw_ + nt_, nw_);
        }
        if (nt_ > 0) {
            const Vector img = At * s.z + spec_.affineT.offset;
            const Matrix arg = (img + Ut).reshaped(spec_.affineT.rows, spec_.affineT.cols);
            const Vector Znew = svt(arg, spec_.weightT / mu_).reshaped();
            s.next.segment(nw_, nt_) = Znew;
            s.next.segment(2 * nw_ + nt_, nt_) = Ut + img - Znew;
            primal2 += (img - Znew).squaredNorm();
            image2 += img.squaredNorm();
            dualVec += At.transpose() * (Znew - Zt);
            multiplier += At.transpose() * s.next.segment(2 * nw_ + nt_, nt_);
        }
        s.primal = std::sqrt(primal2);
        s.dual = mu_ * dualVec.norm();
        s.primalScale = std::max(1.0, std::sqrt(image2));
        // Stationarity terms are on the scale of the nuclear weights, not of the images.
        const Vector smooth = 2.0 * (spec_.quadratic.P * s.z) + g0_;
        s.dualScale = std::max({mu_ * multiplier.norm(), smooth.norm(), kDualScaleFloor});
        s.merit = mu_ * (s.next - u).squaredNorm();
        return s;
    }

private:
    const SubproblemSpec &spec_;
    ReducedSystem system_;
    double mu_;
    Index nw_, nt_;
    Vector g0_;
};

// Type-II Anderson mixing over the last `memory` fixed-point steps. Differences
// live in ring buffers; the least-squares weights come from their Gram matrix.
class AndersonMixer {
public:
    explicit AndersonMixer(int memory) : memory_(memory) {}

    void reset() {
        count_ = 0;
        hasLast_ = false;
    }

    /// Records the pair (F(u), g(u) = F(u) - u) and returns the mixed point.
    Vector mix(const Vector &f, const Vector &g) {
        if (dF_.rows() != f.size()) {
            dF_.resize(f.size(), memory_);
            dG_.resize(f.size(), memory_);
            gram_.resize(memory_, memory_);
            count_ = 0;
            head_ = 0;
            hasLast_ = false;
        }
        if (hasLast_) {
            const Index c = head_;
            dF_.col(c) = f - lastF_;
            dG_.col(c) = g - lastG_;
            head_ = (head_ + 1) % memory_;
            count_ = std::min<Index>(count_ + 1, memory_);
            for (Index j = 0; j < count_; ++j) {
                const Index col = (c - j + memory_) % memory_;
                gram_(c, col) = gram_(col, c) = dG_.col(c).dot(dG_.col(col));
            }
        }
        lastF_ = f;
        lastG_ = g;
        hasLast_ = true;
        if (count_ == 0)
            return f;

        // Columns in use are the count_ most recent, not necessarily a prefix once wrapped.
        const Index k = count_;
        Eigen::VectorXi cols(k);
        for (Index j = 0; j < k; ++j)
            cols(j) = static_cast<int>((head_ - 1 - j + 2 * memory_) % memory_);
        Matrix gram(k, k);
        Vector rhs(k);
        for (Index i = 0; i < k; ++i) {
            rhs(i) = dG_.col(cols(i)).dot(g);
            for (Index j = 0; j < k; ++j)
                gram(i, j) = gram_(cols(i), cols(j));
        }
        gram.diagonal().array() += 1e-12 * std::max(gram.trace(), std::numeric_limits<double>::min());
        const Vector gamma = gram.ldlt().solve(rhs);
        if (!gamma.allFinite())
            return f;
        Vector out = f;
        for (Index j = 0; j < k; ++j)
            out.noalias() -= gamma(j) * dF_.col(cols(j));
        return out;
    }

private:
    Index memory_;
    Matrix dF_, dG_, gram_;
    Index head_ = 0, count_ = 0;
    Vector lastF_, lastG_;
    bool hasLast_ = false;
};

} // namespace

SplitResult split_solve(const SubproblemSpec &spec, const SplitSettings &settings) {
    return split_solve(spec, settings, nullptr);
}

SplitResult split_solve(const SubproblemSpec &spec, const SplitSettings &settings, const SplitState *warm) {
    settings.validate();
    SplitSettings local = settings;
    if (warm != nullptr) {
        if (warm->zw.size() != spec.affineW.offset.size() || warm->zt.size() != spec.affineT.offset.size() ||
            warm->uw.size() != warm->zw.size() || warm->ut.size() != warm->zt.size() || !(warm->mu > 0))
            throw DimensionError("split_solve: warm state does not match the subproblem");
        local.mu = warm->mu;
    }
    Splitter splitter(spec, local);

    SplitResult result;
    auto &diag = result.diagnostics;
    diag.muHistory.push_back(splitter.mu());
    diag.redundantConstraintRows = splitter.system().redundant_rows();
    diag.leastSquaresConstraints = splitter.system().least_squares_constraints();

    Vector best;
    double bestScore = std::numeric_limits<double>::infinity();
    double bestPrimal = 0, bestDual = 0;

    AndersonMixer mixer(settings.andersonMemory);
    Vector u = splitter.initial_state();
    if (warm != nullptr)
        u << warm->zw, warm->zt, warm->uw, warm->ut;
    Sweep s = splitter.sweep(u);
    int sweeps = 1;

    for (int k = 1;; ++k) {
        if (settings.recordMerit) {
            diag.meritTrace.push_back(s.merit);
            diag.meritMu.push_back(splitter.mu());
        }
        const double score = std::max(s.primal_rel() / settings.primalTol, s.dual_rel() / settings.dualTol);
        if (score < bestScore) {
            bestScore = score;
            best = s.z;
            bestPrimal = s.primal;
            bestDual = s.dual;
        }
        diag.iterations = k;
        if (score <= 1.0) {
            diag.converged = true;
            break;
        }
        if (sweeps >= settings.maxIters)
            break;

        if (settings.adaptivePenalty && k <= settings.penaltyIters) {
            double factor = 1.0;
            if (s.primal_rel() > settings.penaltyRatio * s.dual_rel())
                factor = settings.penaltyScale;
            else if (s.dual_rel() > settings.penaltyRatio * s.primal_rel())
                factor = 1.0 / settings.penaltyScale;
            if (factor != 1.0) {
                u = s.next;
                splitter.set_mu(splitter.mu() * factor, u);
                diag.muHistory.push_back(splitter.mu());
                mixer.reset();
                s = splitter.sweep(u);
                ++sweeps;
                continue;
            }
        }

        const Vector residual = s.next - u;
        if (settings.andersonMemory > 0) {
            Vector candidate = mixer.mix(s.next, residual);
            if (!candidate.isApprox(s.next, 0.0)) {
                Sweep trial = splitter.sweep(candidate);
                ++sweeps;
                if ((trial.next - candidate).norm() < residual.norm()) {
                    u = std::move(candidate);
                    s = std::move(trial);
                    continue;
                }
                mixer.reset();
            }
        }
        u = s.next;
        s = splitter.sweep(u);
        ++sweeps;
    }

    result.z = diag.converged ? s.z : best;
    {
        const Index nw = spec.affineW.offset.size(), nt = spec.affineT.offset.size();
        result.state.zw = s.next.segment(0, nw);
        result.state.zt = s.next.segment(nw, nt);
        result.state.uw = s.next.segment(nw + nt, nw);
        result.state.ut = s.next.segment(2 * nw + nt, nt);
        result.state.mu = splitter.mu();
    }
    diag.primalResidual = diag.converged ? s.primal : bestPrimal;
    diag.dualResidual = diag.converged ? s.dual : bestDual;
    diag.sweeps = sweeps;
    diag.equalityResidual = spec.equality_residual(result.z);
    diag.objective = spec.objective(result.z);
    return result;
}

} // namespace graybox
