#pragma once

// Physical parameters of the trapped-ion cold-damping model.
//
// Convention: every config-file and CLI frequency is plain Hz; every
// internal rate is angular (rad/s). The cooling rate is specified as the
// FWHM of the motional sideband in ordinary frequency, so the ODE damping
// rate is 2*pi times the configured value.

#include <cmath>
#include <cstdint>
#include <string>

#include "colddamp/errors.hpp"

namespace colddamp::params {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

inline double hz_to_rad(double f_hz) { return kTwoPi * f_hz; }
inline double rad_to_hz(double w_rad) { return w_rad / kTwoPi; }

// Raw inputs in config units (Hz where dimensional).
struct PhysicalParams {
    double nu_hz = 1.0e6;          // trap frequency
    double gamma_cool_hz = 400.0;  // laser-cooling rate (sideband FWHM)
    double n_doppler = 17.0;       // Doppler-limit mean occupation
    double gamma_mirror_hz = 0.0;  // scattering rate into the mirror mode
    double eta = 0.07;             // Lamb-Dicke parameter
    double epsilon = 0.01;         // mirror-mode solid-angle fraction
};

// Rates converted to angular units plus the derived dimensionless groups.
struct ValidatedParams {
    double trap_omega = 0.0;   // nu, rad/s
    double cool_rate = 0.0;    // Gamma, rad/s
    double n_doppler = 0.0;    // N
    double meas_rate = 0.0;    // gamma, rad/s
    double eta = 0.0;
    double epsilon = 0.0;

    double ratio_nu_gamma = 0.0;     // nu / Gamma
    double ratio_meas_cool = 0.0;    // gamma / Gamma
    bool lamb_dicke_warning = false;
    bool timescale_warning = false;

    double nu_hz() const { return rad_to_hz(trap_omega); }
    double gamma_cool_hz() const { return rad_to_hz(cool_rate); }
    double gamma_mirror_hz() const { return rad_to_hz(meas_rate); }
};

inline ValidatedParams validate(const PhysicalParams& p) {
    if (!(p.nu_hz > 0.0)) throw param_error("nonpositive-rate: nu_hz must be > 0");
    if (!(p.gamma_cool_hz > 0.0))
        throw param_error("nonpositive-rate: gamma_cool_hz must be > 0");
    if (!(p.gamma_mirror_hz >= 0.0))
        throw param_error("nonpositive-rate: gamma_mirror_hz must be >= 0");
    if (!(p.n_doppler >= 0.0)) throw param_error("n_doppler must be >= 0");
    if (!(p.eta > 0.0 && p.eta < 1.0))
        throw param_error("eta must lie in (0, 1)");
    if (!(p.epsilon > 0.0 && p.epsilon <= 1.0))
        throw param_error("epsilon must lie in (0, 1]");

    const double ld = p.eta * std::sqrt(p.n_doppler + 1.0);
    if (ld >= 1.0)
        throw param_error("lamb-dicke-violation: eta*sqrt(N+1) = " +
                          std::to_string(ld) + " >= 1");

    ValidatedParams v;
    v.trap_omega = hz_to_rad(p.nu_hz);
    v.cool_rate = hz_to_rad(p.gamma_cool_hz);
    v.n_doppler = p.n_doppler;
    v.meas_rate = hz_to_rad(p.gamma_mirror_hz);
    v.eta = p.eta;
    v.epsilon = p.epsilon;
    v.ratio_nu_gamma = v.trap_omega / v.cool_rate;
    v.ratio_meas_cool = v.meas_rate / v.cool_rate;
    v.lamb_dicke_warning = ld >= 0.5;
    v.timescale_warning = v.ratio_nu_gamma < 20.0;
    return v;
}

// Rescales the nu/Gamma separation while keeping every dimensionless group
// (N, eta, gamma/Gamma) fixed, so steady-state predictions are unchanged but
// a trajectory needs proportionally fewer integration steps.
inline ValidatedParams scale_for_desk(const ValidatedParams& in,
                                      double ratio_nu_gamma) {
    if (!(ratio_nu_gamma >= 20.0))
        throw param_error("scale_for_desk: ratio must be >= 20");
    ValidatedParams v = in;
    v.trap_omega = in.cool_rate * ratio_nu_gamma;
    v.ratio_nu_gamma = ratio_nu_gamma;
    v.timescale_warning = false;
    return v;
}

// gamma scales linearly with the mirror-mode solid-angle fraction; epsilon
// exists only as this knob.
inline ValidatedParams scale_epsilon(const ValidatedParams& in,
                                     double new_epsilon) {
    if (!(new_epsilon > 0.0 && new_epsilon <= 1.0))
        throw param_error("scale_epsilon: epsilon must lie in (0, 1]");
    ValidatedParams v = in;
    v.meas_rate = in.meas_rate * (new_epsilon / in.epsilon);
    v.epsilon = new_epsilon;
    v.ratio_meas_cool = v.meas_rate / v.cool_rate;
    return v;
}

// Integration/sampling timebase for one trajectory.
struct LoopTimebase {
    double dt_sme = 0.0;     // SME step, s
    double dt_sample = 0.0;  // photocurrent sampling interval, s
    double t_total = 0.0;    // trajectory duration, s

    int sample_stride() const {
        return static_cast<int>(std::llround(dt_sample / dt_sme));
    }
    std::int64_t total_steps() const {
        return static_cast<std::int64_t>(std::llround(t_total / dt_sme));
    }
};

inline LoopTimebase make_timebase(const ValidatedParams& p, double t_total,
                                  int sample_stride = 1,
                                  double steps_per_trap_cycle = 0.0) {
    // dt_sme <= 1/(50 nu) with nu in rad/s.
    LoopTimebase tb;
    const double cap = 1.0 / (50.0 * p.trap_omega);
    tb.dt_sme = steps_per_trap_cycle > 0.0
                    ? 1.0 / (steps_per_trap_cycle * p.trap_omega)
                    : cap;
    if (tb.dt_sme > cap) tb.dt_sme = cap;
    if (sample_stride < 1) sample_stride = 1;
    tb.dt_sample = tb.dt_sme * sample_stride;
    tb.t_total = t_total;
    return tb;
}

inline void check_timebase(const LoopTimebase& tb, const ValidatedParams& p,
                           bool steady_state_run) {
    if (!(tb.dt_sme > 0.0 && tb.dt_sample > 0.0 && tb.t_total > 0.0))
        throw param_error("timebase entries must be positive");
    if (tb.dt_sme > 1.0 / (50.0 * p.trap_omega) * (1.0 + 1e-12))
        throw param_error("dt_sme exceeds 1/(50 nu)");
    const double ratio = tb.dt_sample / tb.dt_sme;
    if (std::abs(ratio - std::llround(ratio)) > 1e-9)
        throw param_error("dt_sample must be an integer multiple of dt_sme");
    if (steady_state_run && tb.t_total < 10.0 / p.cool_rate)
        throw param_error("t_total < 10/Gamma for a steady-state run");
}

}  // namespace colddamp::params
