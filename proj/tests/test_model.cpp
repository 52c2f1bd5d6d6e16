#include "graybox/model.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <cmath>
#include <numbers>

using namespace graybox;
using namespace testing_support;

TEST_CASE("assemble: zero theta gives the offsets") {
    std::mt19937_64 rng(1);
    auto param = AffineParameterization::zeros({3, 2, 2});
    param.offsetA = gaussian(3, 3, rng);
    param.offsetB = gaussian(3, 2, rng);
    param.offsetC = gaussian(2, 3, rng);
    for (int i = 0; i < 4; ++i)
        param.add_parameter(gaussian(3, 3, rng), gaussian(3, 2, rng), gaussian(2, 3, rng));
    const StateSpace ss = assemble(param, Vector::Zero(4));
    CHECK(ss.A == param.offsetA);
    CHECK(ss.B == param.offsetB);
    CHECK(ss.C == param.offsetC);
    CHECK(ss.domain == TimeDomain::continuous);
}

TEST_CASE("assemble: compartmental order 2") {
    const StateSpace ss = assemble(compartmental_structure(2), Vector{{1.0, 2.0}});
    CHECK(ss.A == Matrix{{-1, 2}, {1, -2}});
    CHECK(ss.B == Matrix{{0}, {1}});
    CHECK(ss.C == Matrix{{0, 1}});
}

TEST_CASE("assemble: single elementary coefficient") {
    auto param = AffineParameterization::zeros({2, 1, 1});
    Matrix e11 = Matrix::Zero(2, 2);
    e11(0, 0) = 1;
    param.add_parameter(e11, Matrix::Zero(2, 1), Matrix::Zero(1, 2));
    CHECK(assemble(param, Vector{{5.0}}).A == Matrix{{5, 0}, {0, 0}});
}

TEST_CASE("assemble: theta length mismatch") {
    CHECK_THROWS_AS(assemble(compartmental_structure(3), Vector::Zero(3)), DimensionError);
}

TEST_CASE("markov_sequence: A = 0") {
    std::mt19937_64 rng(2);
    StateSpace ss{Matrix::Zero(3, 3), gaussian(3, 2, rng), gaussian(2, 3, rng)};
    const auto mk = markov_sequence(ss, 4);
    REQUIRE(mk.size() == 4);
    CHECK(max_abs_diff(mk.blocks[0], ss.C * ss.B) == 0.0);
    for (int i = 1; i < 4; ++i)
        CHECK(mk.blocks[static_cast<std::size_t>(i)].isZero(0.0));
}

TEST_CASE("markov_sequence: scalar geometric sequence") {
    StateSpace ss{Matrix{{0.5}}, Matrix{{1.0}}, Matrix{{2.0}}};
    const auto mk = markov_sequence(ss, 4);
    const double expected[] = {2, 1, 0.5, 0.25};
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(mk.blocks[i](0, 0) == doctest::Approx(expected[i]).epsilon(1e-15));
}

TEST_CASE("markov_sequence: naive power oracle") {
    std::mt19937_64 rng(3);
    const StateSpace ss = random_system({3, 2, 2}, rng);
    const auto mk = markov_sequence(ss, 8);
    const auto oracle = naive_markov(ss, 8);
    for (std::size_t i = 0; i < 8; ++i)
        CHECK(max_abs_diff(mk.blocks[i], oracle[i]) <= 1e-12);
}

TEST_CASE("build_hankel: layout") {
    MarkovSequence mk{{0, 1, 1}, {Matrix{{1.0}}, Matrix{{2.0}}, Matrix{{3.0}}}};
    const auto H = build_hankel(mk, 2, 2);
    CHECK(H.data == Matrix{{1, 2}, {2, 3}});
}

TEST_CASE("build_hankel: zero sequence and too few blocks") {
    MarkovSequence mk{{0, 2, 3}, std::vector<Matrix>(5, Matrix::Zero(3, 2))};
    const auto H = build_hankel(mk, 3, 3);
    CHECK(H.data.rows() == 9);
    CHECK(H.data.cols() == 6);
    CHECK(H.data.isZero(0.0));
    CHECK_THROWS_AS(build_hankel(mk, 3, 4), DimensionError);
}

TEST_CASE("build_hankel: exact order-2 system has numeric rank 2") {
    std::mt19937_64 rng(4);
    const StateSpace ss = random_system({2, 1, 1}, rng);
    const auto H = build_hankel(markov_sequence(ss, 5), 3, 3);
    const Vector s = Eigen::JacobiSVD<Matrix>(H.data).singularValues();
    CHECK(s(1) > 1e-10 * s(0));
    CHECK(s(2) <= 1e-10 * s(0));
    CHECK(numeric_rank(H.data) == 2);
}

TEST_CASE("impulse_response_fit examples") {
    std::mt19937_64 rng(5);
    const auto ref = markov_sequence(random_system({3, 1, 2}, rng), 6);
    CHECK(impulse_response_fit(ref, ref) == 0.0);
    auto zero = ref;
    for (auto &b : zero.blocks)
        b.setZero();
    CHECK(impulse_response_fit(zero, ref) == doctest::Approx(1.0).epsilon(1e-14));
    auto twice = ref;
    for (auto &b : twice.blocks)
        b *= 2.0;
    CHECK(impulse_response_fit(twice, ref) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK_THROWS_AS(impulse_response_fit(ref, zero), UndefinedMetricError);
}

TEST_CASE("discretize_zoh: A = 0") {
    std::mt19937_64 rng(6);
    StateSpace ss{Matrix::Zero(3, 3), gaussian(3, 2, rng), gaussian(1, 3, rng)};
    const StateSpace d = discretize_zoh(ss, 0.3);
    CHECK(max_abs_diff(d.A, Matrix::Identity(3, 3)) <= 1e-15);
    CHECK(max_abs_diff(d.B, 0.3 * ss.B) <= 1e-15);
    CHECK(d.C == ss.C);
    CHECK(d.domain == TimeDomain::discrete);
    CHECK(d.samplingPeriod == 0.3);
}

TEST_CASE("discretize_zoh: scalar with T = ln 2") {
    StateSpace ss{Matrix{{1.0}}, Matrix{{1.0}}, Matrix{{1.0}}};
    const StateSpace d = discretize_zoh(ss, std::log(2.0));
    CHECK(d.A(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(d.B(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("discretize_zoh: Taylor oracle on a stable 4x4 system") {
    const auto inst = random_structured_instance({4, 2, 1}, 3, 77);
    const StateSpace ss = assemble(inst.param, inst.thetaTrue);
    const double T = 0.1;
    Matrix aug = Matrix::Zero(6, 6);
    aug.topLeftCorner(4, 4) = ss.A * T;
    aug.topRightCorner(4, 2) = ss.B * T;
    const Matrix E = taylor_exp(aug, 50);
    const StateSpace d = discretize_zoh(ss, T);
    CHECK(max_abs_diff(d.A, E.topLeftCorner(4, 4)) <= 1e-10);
    CHECK(max_abs_diff(d.B, E.topRightCorner(4, 2)) <= 1e-10);

    // Markov parameters of the discrete system agree as well.
    StateSpace oracle{E.topLeftCorner(4, 4), E.topRightCorner(4, 2), ss.C, TimeDomain::discrete, T};
    const auto a = markov_sequence(d, 6), b = markov_sequence(oracle, 6);
    for (std::size_t i = 0; i < 6; ++i)
        CHECK(max_abs_diff(a.blocks[i], b.blocks[i]) <= 1e-9);
}

TEST_CASE("discretize_zoh: errors") {
    StateSpace ss{Matrix{{1.0}}, Matrix{{1.0}}, Matrix{{1.0}}};
    CHECK_THROWS_AS(discretize_zoh(ss, 0.0), DimensionError);
    CHECK_THROWS_AS(discretize_zoh(ss, 1e6), NumericalError);
}

TEST_CASE("ho_kalman_realize: order-2 system reproduces the Markov blocks") {
    std::mt19937_64 rng(8);
    const StateSpace ss = random_system({2, 1, 1}, rng);
    const auto mk = markov_sequence(ss, 5);
    const StateSpace r = ho_kalman_realize(build_hankel(mk, 3, 3), 2);
    CHECK(impulse_response_fit(markov_sequence(r, 5), mk) <= 1e-8);
}

TEST_CASE("ho_kalman_realize: zero Hankel is rank deficient") {
    HankelMatrix H{3, 3, 1, 1, Matrix::Zero(3, 3)};
    CHECK_THROWS_AS(ho_kalman_realize(H, 1), RankDeficiencyError);
}

TEST_CASE("ho_kalman_realize: scalar system") {
    StateSpace ss{Matrix{{0.5}}, Matrix{{1.0}}, Matrix{{2.0}}};
    const StateSpace r = ho_kalman_realize(build_hankel(markov_sequence(ss, 5), 3, 3), 1);
    for (int i = 0; i <= 4; ++i)
        CHECK(r.C(0, 0) * std::pow(r.A(0, 0), i) * r.B(0, 0) == doctest::Approx(2.0 * std::pow(0.5, i)).epsilon(1e-10));
}

TEST_CASE("random_structured_instance: determinism, stability, minimality") {
    const Dims d{4, 2, 1};
    const auto a = random_structured_instance(d, 5, 11);
    const auto b = random_structured_instance(d, 5, 11);
    CHECK(a.thetaTrue == b.thetaTrue);
    CHECK(a.param.offsetA == b.param.offsetA);
    CHECK(a.param.offsetB == b.param.offsetB);
    CHECK(a.param.offsetC == b.param.offsetC);
    for (std::size_t i = 0; i < a.param.coeffA.size(); ++i) {
        CHECK(a.param.coeffA[i] == b.param.coeffA[i]);
        CHECK(a.param.coeffB[i] == b.param.coeffB[i]);
        CHECK(a.param.coeffC[i] == b.param.coeffC[i]);
    }

    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const Index q = 1 + static_cast<Index>(seed % 12);
        const auto inst = random_structured_instance(d, q, seed);
        CHECK(inst.param.q() == q);
        const StateSpace ss = assemble(inst.param, inst.thetaTrue);
        const Eigen::EigenSolver<Matrix> es(ss.A, false);
        CHECK(es.eigenvalues().real().maxCoeff() < 0.0);
        CHECK(numeric_rank(build_hankel(markov_sequence(ss, 2 * d.n + 1), d.n + 1, d.n + 1).data) == d.n);

        // Each parameter is an elementary coefficient with a zero offset at its entry.
        for (Index i = 0; i < q; ++i) {
            const auto iu = static_cast<std::size_t>(i);
            const double total = inst.param.coeffA[iu].sum() + inst.param.coeffB[iu].sum() + inst.param.coeffC[iu].sum();
            CHECK(total == 1.0);
            const Matrix zeroA = inst.param.offsetA.cwiseProduct(inst.param.coeffA[iu]);
            CHECK(zeroA.isZero(0.0));
        }
    }
}

TEST_CASE("random_structured_instance: bounds") {
    CHECK_THROWS_AS(random_structured_instance({3, 1, 2}, 10, 0), DimensionError);
    CHECK_NOTHROW(random_structured_instance({3, 1, 2}, 9, 0));
    CHECK_THROWS_AS(random_structured_instance({3, 1, 2}, 0, 0), DimensionError);
}

TEST_CASE("compartmental_instance") {
    const auto two = compartmental_instance(2, 5);
    CHECK(two.param.q() == 2);
    const Vector th = two.thetaTrue;
    const StateSpace s2 = assemble(two.param, th);
    CHECK(s2.A == Matrix{{-th(0), th(1)}, {th(0), -th(1)}});

    for (Index n = 2; n <= 6; ++n) {
        const auto inst = compartmental_instance(n, 100 + static_cast<std::uint64_t>(n));
        CHECK(inst.param.q() == 2 * n - 2);
        CHECK(inst.thetaTrue.minCoeff() > 0.1);
        CHECK(inst.thetaTrue.maxCoeff() < 2.0);
        const StateSpace ss = assemble(inst.param, inst.thetaTrue);
        CHECK(ss.A.colwise().sum().cwiseAbs().maxCoeff() <= 1e-15);
        CHECK(ss.B == Vector::Unit(n, n - 1));
        CHECK(ss.C == Vector::Unit(n, n - 1).transpose());
        // tridiagonal
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j)
                if (std::abs(i - j) > 1)
                    CHECK(ss.A(i, j) == 0.0);
    }
    CHECK(compartmental_instance(4, 9).thetaTrue == compartmental_instance(4, 9).thetaTrue);
    CHECK_THROWS_AS(compartmental_instance(1, 0), DimensionError);
}

TEST_CASE("property: block-Hankel symmetry") {
    std::mt19937_64 rng(12);
    for (int t = 0; t < 20; ++t) {
        const StateSpace ss = random_system({3, 2, 2}, rng);
        const auto H = build_hankel(markov_sequence(ss, 8), 4, 5);
        for (Index i = 0; i + 1 < H.v; ++i)
            for (Index j = 1; j < H.h; ++j)
                CHECK(H.block(i, j) == H.block(i + 1, j - 1));
    }
}

TEST_CASE("property: Hankel equals observability times controllability") {
    std::mt19937_64 rng(13);
    for (int t = 0; t < 20; ++t) {
        const Dims d{1 + t % 4, 1 + t % 2, 1 + t % 3};
        const StateSpace ss = random_system(d, rng);
        const Index v = 1 + t % 5, h = 1 + (t + 2) % 5;
        const auto H = build_hankel(markov_sequence(ss, v + h - 1), v, h);
        CHECK(max_abs_diff(H.data, observability_stack(ss, v) * controllability_stack(ss, h)) <= 1e-12);
    }
}

TEST_CASE("property: Markov parameters are similarity invariant") {
    std::mt19937_64 rng(14);
    for (int t = 0; t < 20; ++t) {
        const StateSpace ss = random_system({4, 2, 3}, rng);
        const Matrix Q = gaussian(4, 4, rng) + 4.0 * Matrix::Identity(4, 4);
        const Matrix Qi = Q.inverse();
        StateSpace moved{Q * ss.A * Qi, Q * ss.B, ss.C * Qi};
        const auto a = markov_sequence(ss, 8), b = markov_sequence(moved, 8);
        for (std::size_t i = 0; i < 8; ++i)
            CHECK(max_abs_diff(a.blocks[i], b.blocks[i]) <= 1e-9);
    }
}

TEST_CASE("property: IRF is unchanged by a common similarity transform") {
    std::mt19937_64 rng(15);
    for (int t = 0; t < 10; ++t) {
        const StateSpace ref = random_system({3, 1, 1}, rng);
        StateSpace cand = ref;
        cand.A += 0.05 * gaussian(3, 3, rng);
        const Matrix Q = gaussian(3, 3, rng) + 3.0 * Matrix::Identity(3, 3);
        const Matrix Qi = Q.inverse();
        auto move = [&](const StateSpace &s) { return StateSpace{Q * s.A * Qi, Q * s.B, s.C * Qi}; };
        const double before = impulse_response_fit(markov_sequence(cand, 7), markov_sequence(ref, 7));
        const double after = impulse_response_fit(markov_sequence(move(cand), 7), markov_sequence(move(ref), 7));
        CHECK(std::abs(before - after) <= 1e-9);
    }
}
