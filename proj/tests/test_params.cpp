#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "colddamp/params.hpp"
#include "colddamp/rng.hpp"

using namespace colddamp;
using params::PhysicalParams;
using params::ValidatedParams;

TEST_CASE("validate accepts the lab parameter set") {
    PhysicalParams p;
    p.nu_hz = 1.0e6;
    p.gamma_cool_hz = 400.0;
    p.n_doppler = 17.0;
    p.eta = 0.07;
    auto v = params::validate(p);
    CHECK(v.trap_omega == doctest::Approx(2.0 * M_PI * 1.0e6));
    CHECK(v.cool_rate == doctest::Approx(2.0 * M_PI * 400.0));
    CHECK(v.ratio_nu_gamma == doctest::Approx(2500.0));
    // eta * sqrt(N+1) = 0.297 sits below the 0.5 warning threshold
    CHECK_FALSE(v.lamb_dicke_warning);
    CHECK(0.07 * std::sqrt(18.0) == doctest::Approx(0.29698).epsilon(1e-3));
}

TEST_CASE("validate accepts the ground-state limit") {
    PhysicalParams p;
    p.n_doppler = 0.0;
    p.eta = 0.07;
    CHECK_NOTHROW(params::validate(p));
}

TEST_CASE("validate rejects a hard Lamb-Dicke violation") {
    PhysicalParams p;
    p.n_doppler = 17.0;
    p.eta = 0.5;  // eta*sqrt(18) = 2.12 > 1
    CHECK_THROWS_AS(params::validate(p), param_error);
}

TEST_CASE("validate rejects nonpositive rates") {
    PhysicalParams p;
    p.nu_hz = 0.0;
    CHECK_THROWS_AS(params::validate(p), param_error);
    p.nu_hz = 1e6;
    p.gamma_cool_hz = -1.0;
    CHECK_THROWS_AS(params::validate(p), param_error);
}

TEST_CASE("unit round-trip Hz -> rad/s -> Hz is exact to 1e-12 relative") {
    Xoshiro256 gen(7);
    for (int i = 0; i < 1000; ++i) {
        const double f = std::exp(20.0 * gen.uniform() - 6.0);
        const double back = params::rad_to_hz(params::hz_to_rad(f));
        CHECK(std::abs(back - f) <= 1e-12 * f);
    }
}

TEST_CASE("scale_for_desk preserves the dimensionless groups exactly") {
    PhysicalParams p;
    p.nu_hz = 1.0e6;
    p.gamma_cool_hz = 400.0;
    p.n_doppler = 17.0;
    p.gamma_mirror_hz = 3600.0;
    p.eta = 0.07;
    auto lab = params::validate(p);
    auto desk = params::scale_for_desk(lab, 100.0);

    CHECK(desk.n_doppler == lab.n_doppler);
    CHECK(desk.eta == lab.eta);
    CHECK(desk.ratio_meas_cool == lab.ratio_meas_cool);
    CHECK(desk.cool_rate == lab.cool_rate);
    CHECK(desk.ratio_nu_gamma == doctest::Approx(100.0));

    SUBCASE("identity ratio returns equal parameters") {
        auto same = params::scale_for_desk(lab, lab.ratio_nu_gamma);
        CHECK(same.trap_omega == doctest::Approx(lab.trap_omega));
    }

    SUBCASE("desk set needs 25x fewer steps per cooling time") {
        auto tb_lab = params::make_timebase(lab, 1.0 / lab.cool_rate);
        auto tb_desk = params::make_timebase(desk, 1.0 / desk.cool_rate);
        const double steps_lab = tb_lab.t_total / tb_lab.dt_sme;
        const double steps_desk = tb_desk.t_total / tb_desk.dt_sme;
        CHECK(steps_lab / steps_desk == doctest::Approx(25.0).epsilon(1e-9));
    }

    SUBCASE("ratio below 20 is rejected") {
        CHECK_THROWS_AS(params::scale_for_desk(lab, 10.0), param_error);
    }
}

TEST_CASE("epsilon knob scales gamma linearly and nothing else") {
    PhysicalParams p;
    p.gamma_mirror_hz = 500.0;
    p.epsilon = 0.01;
    auto v = params::validate(p);
    auto v15 = params::scale_epsilon(v, 0.15);
    CHECK(v15.meas_rate == doctest::Approx(15.0 * v.meas_rate));
    CHECK(v15.cool_rate == v.cool_rate);
    CHECK(v15.eta == v.eta);
    CHECK_THROWS_AS(params::scale_epsilon(v, 0.0), param_error);
}

TEST_CASE("timebase invariants") {
    PhysicalParams p;
    auto v = params::validate(p);
    auto tb = params::make_timebase(v, 20.0 / v.cool_rate, 4);
    CHECK_NOTHROW(params::check_timebase(tb, v, true));
    CHECK(tb.sample_stride() == 4);

    auto bad = tb;
    bad.dt_sample = tb.dt_sme * 2.5;
    CHECK_THROWS_AS(params::check_timebase(bad, v, true), param_error);

    auto short_run = tb;
    short_run.t_total = 1.0 / v.cool_rate;
    CHECK_THROWS_AS(params::check_timebase(short_run, v, true), param_error);
}
