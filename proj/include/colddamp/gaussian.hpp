#pragma once

// Exact conditional Gaussian fast path. The conditional state of the
// linearly driven, linearly measured oscillator stays Gaussian, so first
// and second moments carry everything; this engine propagates them at a
// tiny fraction of the density-matrix cost and is cross-validated against
// the full SME engine (acceptance criterion on engine equivalence).
//
// Quadrature normalization: [z, p] = 2i, vacuum variances V_zz = V_pp = 1,
// thermal V = (2N+1) I, <n> = (V_zz + V_pp + <z>^2 + <p>^2 - 2)/4.

#include <cmath>

#include "colddamp/errors.hpp"
#include "colddamp/params.hpp"

namespace colddamp::gaussian {

using params::ValidatedParams;

struct GaussianState {
    double mz = 0.0, mp = 0.0;              // lab-frame conditional means
    double vzz = 1.0, vzp = 0.0, vpp = 1.0;  // conditional central moments
    double t = 0.0;

    double mean_n() const {
        return (vzz + vpp + mz * mz + mp * mp - 2.0) / 4.0;
    }
    double det_cov() const { return vzz * vpp - vzp * vzp; }

    void check_physical() const {
        if (!(vzz > 0.0) || !(vpp > 0.0) || det_cov() < 1.0 - 1e-6)
            throw positivity_error(
                "gaussian covariance lost the Heisenberg bound, det = " +
                std::to_string(det_cov()));
    }

    static GaussianState thermal(double n_mean) {
        GaussianState g;
        g.vzz = g.vpp = 2.0 * n_mean + 1.0;
        return g;
    }
};

// One conditional step in the lab frame with one measurement channel per
// detector: rotation at nu and damping Gamma/2 on the means, the matrix
// Riccati flow for the covariance (laser-cooling diffusion Gamma(2N+1),
// measurement update per channel), innovation gain 2 sqrt(2 gamma eta^2) V
// on each Wiener increment, and the feedback kick -2 drive dt on <p>
// (drive = G I_fb).
//
// The free (rotation + damping + diffusion) part uses its exact one-step
// map: plain Euler treatment of the rotation is linearly unstable at
// dt = 1/(50 nu) once nu/Gamma >~ 50.
inline GaussianState step_two_channel(const GaussianState& g, double dw_in,
                                      double dw_out, double drive,
                                      const ValidatedParams& p,
                                      double gamma_in, double gamma_out,
                                      double dt) {
    GaussianState s = g;

    // measurement updates with the pre-step covariance
    const double vzz0 = s.vzz, vzp0 = s.vzp;
    const double root_in = std::sqrt(2.0 * gamma_in * p.eta * p.eta);
    const double kz_in = 2.0 * root_in * vzz0;
    const double kp_in = 2.0 * root_in * vzp0;
    s.mz += kz_in * dw_in;
    s.mp += kp_in * dw_in;
    double dvzz = kz_in * kz_in, dvzp = kz_in * kp_in, dvpp = kp_in * kp_in;
    if (gamma_out > 0.0) {
        const double root_out = std::sqrt(2.0 * gamma_out * p.eta * p.eta);
        const double kz_out = 2.0 * root_out * vzz0;
        const double kp_out = 2.0 * root_out * vzp0;
        s.mz += kz_out * dw_out;
        s.mp += kp_out * dw_out;
        dvzz += kz_out * kz_out;
        dvzp += kz_out * kp_out;
        dvpp += kp_out * kp_out;
    }
    s.vzz -= dvzz * dt;
    s.vzp -= dvzp * dt;
    s.vpp -= dvpp * dt;

    // feedback force (momentum kick only)
    s.mp += -2.0 * drive * dt;

    // exact free flow
    const double c = std::cos(p.trap_omega * dt);
    const double sn = std::sin(p.trap_omega * dt);
    const double d = std::exp(-0.5 * p.cool_rate * dt);
    const double mz2 = d * (c * s.mz + sn * s.mp);
    const double mp2 = d * (-sn * s.mz + c * s.mp);
    s.mz = mz2;
    s.mp = mp2;

    const double vzz = s.vzz, vzp = s.vzp, vpp = s.vpp;
    const double rzz = c * c * vzz + 2.0 * c * sn * vzp + sn * sn * vpp;
    const double rzp = -c * sn * vzz + (c * c - sn * sn) * vzp + c * sn * vpp;
    const double rpp = sn * sn * vzz - 2.0 * c * sn * vzp + c * c * vpp;
    const double d2 = d * d;
    const double veq = 2.0 * p.n_doppler + 1.0;
    s.vzz = d2 * rzz + veq * (1.0 - d2);
    s.vzp = d2 * rzp;
    s.vpp = d2 * rpp + veq * (1.0 - d2);

    s.t += dt;
    if (!(s.det_cov() > 0.0))
        throw positivity_error("gaussian step: covariance not positive");
    return s;
}

inline GaussianState gaussian_step(const GaussianState& g, double dW,
                                   double i_fb, const ValidatedParams& p,
                                   double g_tilde, double dt) {
    return step_two_channel(g, dW, 0.0, g_tilde * i_fb, p, p.meas_rate, 0.0,
                            dt);
}

}  // namespace colddamp::gaussian
