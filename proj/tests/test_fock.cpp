#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "colddamp/fock.hpp"
#include "colddamp/kernels.hpp"
#include "colddamp/rng.hpp"

using namespace colddamp;
using fock::Complex;
using fock::Matrix;
using fock::Operator;

namespace {

// Random Hermitian, positive, trace-one matrix for property tests.
fock::DensityMatrix random_density(int dim, Xoshiro256& gen) {
    Matrix g(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j)
            g(i, j) = Complex(2.0 * gen.uniform() - 1.0,
                              2.0 * gen.uniform() - 1.0);
    Matrix rho = g * g.adjoint();
    rho /= rho.trace().real();
    fock::DensityMatrix d;
    d.op = Operator{dim, std::move(rho)};
    return d;
}

}  // namespace

TEST_CASE("annihilation matrix elements") {
    auto a2 = fock::annihilation(2);
    CHECK(a2.m(0, 0) == Complex(0, 0));
    CHECK(a2.m(0, 1) == Complex(1, 0));
    CHECK(a2.m(1, 0) == Complex(0, 0));
    CHECK(a2.m(1, 1) == Complex(0, 0));

    auto a4 = fock::annihilation(4);
    CHECK(a4.m(2, 3).real() == doctest::Approx(std::sqrt(3.0)));

    CHECK_THROWS_AS(fock::annihilation(1), invalid_dimension_error);
}

TEST_CASE("number operator sees |5> as eigenstate with eigenvalue 5") {
    const int dim = 40;
    auto n_op = fock::number_operator(dim);
    auto a = fock::annihilation(dim);
    Matrix ada = a.m.adjoint() * a.m;
    CHECK((ada - n_op.m).cwiseAbs().maxCoeff() == doctest::Approx(0.0));

    auto psi5 = fock::fock_state(5, dim);
    CHECK(psi5.expectation(n_op) == doctest::Approx(5.0));
}

TEST_CASE("quadratures: z at dim 2, canonical commutator, thermal symmetry") {
    auto [z2, p2] = fock::quadratures(2);
    CHECK(z2.m(0, 1) == Complex(1, 0));
    CHECK(z2.m(1, 0) == Complex(1, 0));
    CHECK(z2.m(0, 0) == Complex(0, 0));
    CHECK(z2.hermiticity_defect() <= 1e-12);
    CHECK(p2.hermiticity_defect() <= 1e-12);

    SUBCASE("[z, p] = 2i below the truncation row") {
        for (int dim : {2, 5, 17, 64}) {
            auto [z, p] = fock::quadratures(dim);
            Matrix comm = z.m * p.m - p.m * z.m;
            for (int k = 0; k < dim - 1; ++k) {
                CHECK(comm(k, k).imag() == doctest::Approx(2.0).epsilon(1e-12));
                CHECK(comm(k, k).real() == doctest::Approx(0.0));
            }
        }
    }

    SUBCASE("thermal state has <z> = 0") {
        // dim 36 rather than 30: the thermal-tail bound needs (2/3)^dim < 1e-6
        auto rho = fock::thermal_state(2.0, 36);
        auto [z, p] = fock::quadratures(36);
        CHECK(rho.expectation(z) == doctest::Approx(0.0));
        CHECK(rho.expectation(p) == doctest::Approx(0.0));
    }
}

TEST_CASE("dissipator on vacuum and single-quantum states") {
    const int dim = 8;
    auto a = fock::annihilation(dim);

    auto vac = fock::fock_state(0, dim);
    auto out0 = fock::dissipator_apply(a, vac.op);
    CHECK(out0.m.cwiseAbs().maxCoeff() == doctest::Approx(0.0));

    auto one = fock::fock_state(1, dim);
    auto out1 = fock::dissipator_apply(a, one.op);
    CHECK(out1.m(0, 0).real() == doctest::Approx(1.0));
    CHECK(out1.m(1, 1).real() == doctest::Approx(-1.0));
    CHECK(out1.m.trace().real() == doctest::Approx(0.0));

    auto th = fock::thermal_state(3.0, 60);
    auto outh = fock::dissipator_apply(fock::annihilation(60), th.op);
    CHECK(std::abs(outh.m.trace()) <= 1e-10);
}

TEST_CASE("dissipator preserves trace and Hermiticity: random states") {
    Xoshiro256 gen(42);
    for (int trial = 0; trial < 25; ++trial) {
        const int dim = 2 + int(gen.uniform() * 14);
        auto rho = random_density(dim, gen);
        auto a = fock::annihilation(dim);
        auto out = fock::dissipator_apply(a, rho.op);
        CHECK(std::abs(out.m.trace()) <= 1e-10);
        CHECK(out.hermiticity_defect() <= 1e-12);

        auto ad = fock::creation(dim);
        auto out2 = fock::dissipator_apply(ad, rho.op);
        CHECK(std::abs(out2.m.trace()) <= 1e-10);
        CHECK(out2.hermiticity_defect() <= 1e-12);
    }
}

TEST_CASE("ladder identity a\\dag a - a a\\dag = -1 away from truncation") {
    const int dim = 12;
    auto a = fock::annihilation(dim);
    Matrix lhs = a.m.adjoint() * a.m - a.m * a.m.adjoint();
    for (int k = 0; k < dim - 1; ++k)
        CHECK(lhs(k, k).real() == doctest::Approx(-1.0));
    CHECK(lhs(dim - 1, dim - 1).real() == doctest::Approx(double(dim - 1)));
}

TEST_CASE("thermal state properties") {
    SUBCASE("N = 0 is the vacuum") {
        auto rho = fock::thermal_state(0.0, 8);
        CHECK(rho.op.m(0, 0).real() == doctest::Approx(1.0));
        CHECK(rho.op.m.trace().real() == doctest::Approx(1.0));
    }

    SUBCASE("N = 17 at dim 256 reproduces the mean occupation") {
        auto rho = fock::thermal_state(17.0, 256);
        auto n_op = fock::number_operator(256);
        const double n = rho.expectation(n_op);
        CHECK(n > 16.99);
        CHECK(n < 17.01);
    }

    SUBCASE("Boltzmann ratio p1/p0 = N/(N+1)") {
        auto rho = fock::thermal_state(2.0, 40);
        const double ratio =
            rho.op.m(1, 1).real() / rho.op.m(0, 0).real();
        CHECK(ratio == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    }

    SUBCASE("insufficient truncation is rejected") {
        CHECK_THROWS_AS(fock::thermal_state(5.0, 72), truncation_error);
        CHECK_NOTHROW(fock::thermal_state(5.0, fock::default_dim(5.0)));
    }
}

TEST_CASE("default_dim honors both the 12(N+1) rule and the tail bound") {
    CHECK(fock::default_dim(2.0) == 36);  // tail (2/3)^36 = 4.5e-7 < 1e-6
    CHECK(fock::default_dim(0.0) == 12);
    // For N >= ~3.5 the tail bound dominates the 12(N+1) rule.
    CHECK(fock::default_dim(5.0) > 72);
    CHECK(fock::thermal_tail(5.0, fock::default_dim(5.0)) < 1e-6);
    CHECK(fock::thermal_tail(17.0, fock::default_dim(17.0)) < 1e-6);
}

TEST_CASE("banded kernels agree with generic dense operations") {
    Xoshiro256 gen(9);
    for (int trial = 0; trial < 10; ++trial) {
        const int dim = 3 + int(gen.uniform() * 20);
        auto rho = random_density(dim, gen);
        const Matrix& mu = rho.op.m;
        kernels::SqrtTable st(dim);
        auto a = fock::annihilation(dim);
        Matrix ad = a.m.adjoint();

        SUBCASE("thermal dissipators") {
            Matrix out = Matrix::Zero(dim, dim);
            kernels::add_thermal_dissipators(out, mu, 1.7, 0.9, st);
            Matrix ref = 1.7 * fock::dissipator_apply(a, rho.op).m +
                         0.9 * fock::dissipator_apply(fock::creation(dim), rho.op).m;
            CHECK((out - ref).cwiseAbs().maxCoeff() <= 1e-12);
        }

        SUBCASE("rotated quadrature products") {
            const Complex w = std::polar(1.0, 2.0 * M_PI * gen.uniform());
            Matrix xw = w * ad + std::conj(w) * a.m;
            Matrix out(dim, dim);

            kernels::quad_mul_left(out, mu, w, st);
            CHECK((out - xw * mu).cwiseAbs().maxCoeff() <= 1e-12);

            kernels::quad_mul_right(out, mu, w, st);
            CHECK((out - mu * xw).cwiseAbs().maxCoeff() <= 1e-12);

            kernels::quad_anticommutator(out, mu, w, st);
            CHECK((out - (xw * mu + mu * xw)).cwiseAbs().maxCoeff() <= 1e-12);

            kernels::quad_commutator(out, mu, w, st);
            CHECK((out - (xw * mu - mu * xw)).cwiseAbs().maxCoeff() <= 1e-12);

            CHECK(kernels::quad_expectation(mu, w, st) ==
                  doctest::Approx((xw * mu).trace().real()).epsilon(1e-12));
            auto n_op = fock::number_operator(dim);
            CHECK(kernels::number_expectation(mu) ==
                  doctest::Approx((n_op.m * mu).trace().real()).epsilon(1e-12));
        }
    }
}

TEST_CASE("density-matrix invariant checks") {
    auto rho = fock::thermal_state(2.0, 36);
    CHECK_NOTHROW(rho.check());

    rho.op.m(0, 0) += 0.1;
    CHECK_THROWS_AS(rho.check(), positivity_error);
}
