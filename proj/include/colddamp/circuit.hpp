#pragma once

// Emulation of the feedback electronics: a biquad bandpass centered on the
// trap frequency, a phase shifter realized as a quadrature (analytic-signal)
// rotation at that frequency, amplifier gain, and an integer-sample loop
// delay. Also provides the idealized demodulated feedback current used by
// the theory branch of the simulator.

#include <cmath>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "colddamp/errors.hpp"
#include "colddamp/params.hpp"

namespace colddamp::circuit {

using params::ValidatedParams;

enum class FeedbackMode { filter, ideal_demod };

struct FeedbackConfig {
    double gain_electronic = 0.0;   // amplifier setting G
    double phase = -M_PI / 2.0;     // radians; -pi/2 damps, pi only shifts
    double bandwidth_hz = 0.0;      // bandpass width B (0 = pick nu/33)
    int delay_samples = 1;
    FeedbackMode mode = FeedbackMode::filter;
    double calibration = 1.0;       // multiplier mapping G to theory gain

    double theory_gain() const { return calibration * gain_electronic; }
};

inline double default_bandwidth_hz(const ValidatedParams& p) {
    // Paper ratio: B = 30 kHz at nu = 1 MHz.
    return params::rad_to_hz(p.trap_omega) * 0.03;
}

// Warn outside the nu >> 2 pi B >> Gamma window the loop analysis assumes.
inline bool bandwidth_in_window(const ValidatedParams& p, double b_hz) {
    const double b_rad = params::hz_to_rad(b_hz);
    return b_rad > 5.0 * p.cool_rate && 5.0 * b_rad < p.trap_omega;
}

// ---------------------------------------------------------------------------
// Second-order bandpass (RBJ biquad, unity peak gain). Coefficients are for
//   y[k] = b0 x[k] + b2 x[k-2] - a1 y[k-1] - a2 y[k-2]
// ---------------------------------------------------------------------------

struct FilterCoefficients {
    double b0 = 0.0, b2 = 0.0, a1 = 0.0, a2 = 0.0;
    double center_hz = 0.0, bandwidth_hz = 0.0, sample_rate_hz = 0.0;

    // Transfer function on the unit circle at frequency f.
    std::complex<double> response(double f_hz) const {
        const std::complex<double> z =
            std::polar(1.0, -2.0 * M_PI * f_hz / sample_rate_hz);
        return (b0 + b2 * z * z) / (1.0 + a1 * z + a2 * z * z);
    }
};

inline FilterCoefficients design_bandpass(double center_hz,
                                          double bandwidth_hz,
                                          double sample_rate_hz) {
    if (!(sample_rate_hz > 4.0 * center_hz))
        throw config_error("design_bandpass: sample rate must exceed 4x center");
    if (!(bandwidth_hz > 0.0 && center_hz > 0.0))
        throw config_error("design_bandpass: center and bandwidth must be > 0");

    const double w0 = 2.0 * M_PI * center_hz / sample_rate_hz;
    const double q = center_hz / bandwidth_hz;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;

    FilterCoefficients c;
    c.b0 = alpha / a0;
    c.b2 = -alpha / a0;
    c.a1 = -2.0 * std::cos(w0) / a0;
    c.a2 = (1.0 - alpha) / a0;
    c.center_hz = center_hz;
    c.bandwidth_hz = bandwidth_hz;
    c.sample_rate_hz = sample_rate_hz;
    return c;
}

// ---------------------------------------------------------------------------
// Per-trajectory filter state: biquad registers, quadrature-mixer lowpass
// registers, and the delay ring.
// ---------------------------------------------------------------------------

struct FilterState {
    FilterCoefficients coeff;
    double x1 = 0.0, x2 = 0.0, y1 = 0.0, y2 = 0.0;  // biquad
    // Two-pole mixer lowpass per quadrature; a single pole leaks enough
    // 2*nu ripple to eat most of the 0.02 rad loop-phase budget.
    double i1 = 0.0, i2 = 0.0, q1 = 0.0, q2 = 0.0;
    double lp_beta = 0.0;
    // Carrier phase advance compensating the loop delay, so the net loop
    // phase at the trap frequency equals the configured setting. An
    // uncompensated one-sample delay already rotates the feedback by
    // nu dt_sample and mixes the damping and spring branches.
    double delay_comp = 0.0;
    std::vector<double> ring;
    std::size_t ring_pos = 0;

    void reset() {
        x1 = x2 = y1 = y2 = 0.0;
        i1 = i2 = q1 = q2 = 0.0;
        std::fill(ring.begin(), ring.end(), 0.0);
        ring_pos = 0;
    }
};

inline FilterState make_filter_state(const ValidatedParams& p,
                                     const FeedbackConfig& cfg,
                                     double sample_rate_hz) {
    FilterState fs;
    const double b = cfg.bandwidth_hz > 0.0 ? cfg.bandwidth_hz
                                            : default_bandwidth_hz(p);
    fs.coeff = design_bandpass(params::rad_to_hz(p.trap_omega), b,
                               sample_rate_hz);
    // Mixer lowpass wide enough to pass the whole sideband.
    fs.lp_beta = 1.0 - std::exp(-2.0 * M_PI * b / sample_rate_hz);
    fs.ring.assign(std::max(1, cfg.delay_samples), 0.0);
    fs.delay_comp =
        p.trap_omega * double(fs.ring.size()) / sample_rate_hz;
    return fs;
}

// One sample through bandpass -> phase shift -> gain -> delay.
// `t` is the absolute time of the sample (carrier phase reference).
inline double process_sample(FilterState& fs, double x,
                             const FeedbackConfig& cfg,
                             const ValidatedParams& p, double t) {
    // biquad bandpass
    const auto& c = fs.coeff;
    const double y = c.b0 * x + c.b2 * fs.x2 - c.a1 * fs.y1 - c.a2 * fs.y2;
    fs.x2 = fs.x1;
    fs.x1 = x;
    fs.y2 = fs.y1;
    fs.y1 = y;

    // quadrature rotation: envelope multiplied by exp(-i phase), trimmed
    // by the delay compensation
    const double wt = p.trap_omega * t;
    const double cs = std::cos(wt), sn = std::sin(wt);
    fs.i1 += fs.lp_beta * (2.0 * y * cs - fs.i1);
    fs.i2 += fs.lp_beta * (fs.i1 - fs.i2);
    fs.q1 += fs.lp_beta * (2.0 * y * sn - fs.q1);
    fs.q2 += fs.lp_beta * (fs.q1 - fs.q2);
    const double rot = cfg.phase - fs.delay_comp;
    const double cp = std::cos(rot), sp = std::sin(rot);
    const double env_c = fs.i2 * cp - fs.q2 * sp;
    const double env_s = fs.q2 * cp + fs.i2 * sp;
    const double shifted = env_c * cs + env_s * sn;

    // gain, then the causal delay
    const double amplified = cfg.gain_electronic * shifted;
    const double out = fs.ring[fs.ring_pos];
    fs.ring[fs.ring_pos] = amplified;
    fs.ring_pos = (fs.ring_pos + 1) % fs.ring.size();
    return out;
}

// ---------------------------------------------------------------------------
// Idealized demodulated feedback current, the analytic form of the
// post-circuit signal:  I_fb = (gamma eta <p> + sqrt(gamma/2) Xi) cos(nu t).
// Xi is the caller's band-limited unit-spectral-density noise sample; the
// trajectory engines build it from the measurement record so that the loop
// averages to the feedback master equation.
// ---------------------------------------------------------------------------

inline double ideal_demod_feedback(double pmean, double xi,
                                   const ValidatedParams& p, double t) {
    return (p.meas_rate * p.eta * pmean +
            std::sqrt(p.meas_rate / 2.0) * xi) *
           std::cos(p.trap_omega * t);
}

// Electronic-gain calibration from a measured sideband-width increase.
// The averaged theory adds gamma*eta*G to the energy decay rate at theory
// gain G, so the multiplier mapping electronic gain to theory gain is
//   cal = delta_Gamma / (gamma * eta * G_ref).
struct ReferenceSweep {
    double gain_ref = 0.0;      // electronic gain of the reference run
    double fwhm_ref_hz = 0.0;   // fitted sideband FWHM at gain_ref
    double fwhm_zero_hz = 0.0;  // fitted FWHM with the loop open
};

inline double calibrate_gain(const ReferenceSweep& sweep,
                             const ValidatedParams& p) {
    if (!(sweep.gain_ref > 0.0) || !(sweep.fwhm_ref_hz > 0.0) ||
        !(sweep.fwhm_zero_hz > 0.0))
        throw calibration_error("calibrate_gain: reference sweep missing");
    const double delta_rad =
        params::hz_to_rad(sweep.fwhm_ref_hz - sweep.fwhm_zero_hz);
    if (delta_rad <= 0.0)
        throw calibration_error(
            "calibrate_gain: no width increase at the reference gain");
    return delta_rad / (p.meas_rate * p.eta * sweep.gain_ref);
}

}  // namespace colddamp::circuit
