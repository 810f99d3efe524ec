#pragma once

// Deterministic theory layer for the feedback-cooled ion: the averaged
// feedback master equation, its closed-form steady state, optimal gain,
// pi-phase frequency shift, and the measurement-rate calibration that pins
// gamma from the quoted cooling performance.

#include <cmath>
#include <limits>
#include <vector>

#include "colddamp/fock.hpp"
#include "colddamp/kernels.hpp"
#include "colddamp/params.hpp"

namespace colddamp::moments {

using params::ValidatedParams;

enum class FeedbackBranch {
    damping,  // -pi/2 phase: momentum-proportional force
    shift,    // pi phase: position-proportional force, frequency shift only
};

struct SteadyStatePrediction {
    double n_ss = 0.0;
    double gain = 0.0;
    FeedbackBranch regime = FeedbackBranch::damping;
    double freq_shift_rad = 0.0;
};

// Closed-form steady-state occupation under momentum feedback at gain G:
//   n_ss = (N + eta g G (2N-1)/(2 Gamma) + g G^2/(8 Gamma))
//          / (1 + 2 eta g G / Gamma)
inline double n_ss(const ValidatedParams& p, double gain) {
    if (gain < 0.0) throw param_error("n_ss: negative gain is out of the modeled regime");
    const double N = p.n_doppler;
    const double g_over_G = p.meas_rate / p.cool_rate;
    const double num = N + p.eta * g_over_G * gain * (2.0 * N - 1.0) / 2.0 +
                       g_over_G * gain * gain / 8.0;
    const double den = 1.0 + 2.0 * p.eta * g_over_G * gain;
    if (!(den > 0.0)) throw param_error("n_ss: nonpositive denominator");
    return num / den;
}

// Minimizer of n_ss over gain >= 0. Setting the derivative to zero gives
//   a b G^2 + a G - 2 b (2N+1) = 0,  a = gamma/Gamma, b = eta a,
// whose positive root is
//   G_opt = (-1 + sqrt(1 + 8 eta^2 (2N+1) gamma/Gamma)) / (2 eta gamma/Gamma).
struct OptimalGain {
    double gain = 0.0;
    double n_min = 0.0;
};

inline OptimalGain optimal_gain(const ValidatedParams& p) {
    const double a = p.meas_rate / p.cool_rate;
    if (a <= 0.0 || p.eta <= 0.0 || p.n_doppler < 1.0) {
        // No interior minimum in the degenerate limits; zero gain is optimal
        // when the measurement carries no usable signal.
        const double disc =
            1.0 + 8.0 * p.eta * p.eta * (2.0 * p.n_doppler + 1.0) * a;
        const double g =
            a > 0.0 ? (-1.0 + std::sqrt(disc)) / (2.0 * p.eta * a) : 0.0;
        if (g <= 0.0 || n_ss(p, g) >= p.n_doppler)
            return {0.0, p.n_doppler};
        return {g, n_ss(p, g)};
    }
    const double disc = 1.0 + 8.0 * p.eta * p.eta * (2.0 * p.n_doppler + 1.0) * a;
    const double g = (-1.0 + std::sqrt(disc)) / (2.0 * p.eta * a);
    return {g, n_ss(p, g)};
}

// pi-phase branch: the feedback force is position-proportional and only
// shifts the oscillation frequency, delta_omega = G gamma eta / 2.
inline double frequency_shift(const ValidatedParams& p, double gain) {
    return gain * p.meas_rate * p.eta / 2.0;
}

// ---------------------------------------------------------------------------
// RK4 integration of the averaged feedback master equation on a truncated
// Fock space (rotating frame, no free-rotation term):
//
//   mu' = L0 mu - i (G g eta / 4) [z, p mu + mu p] - (G^2 g / 16) [z, [z, mu]]
//
// with L0 = Gamma (N+1) D[a] + Gamma N D[a\dag]. On the pi branch (-z)
// replaces p in the second term. This integrator is the internal oracle for
// the closed form above.
// ---------------------------------------------------------------------------

struct MeqResult {
    std::vector<double> times;
    std::vector<double> n_of_t;
    double n_steady = 0.0;
    double dt_used = 0.0;
    int retries = 0;
};

namespace detail {

// Right-hand side of the averaged feedback master equation, built on the
// banded O(D^2) kernels. The quadrature weights: z <-> w = 1, p <-> w = i.
class MeqRhs {
  public:
    MeqRhs(const ValidatedParams& p, double gain, int dim,
           FeedbackBranch branch)
        : dim_(dim), st_(dim) {
        gamma_np1_ = p.cool_rate * (p.n_doppler + 1.0);
        gamma_n_ = p.cool_rate * p.n_doppler;
        damp_coeff_ = gain * p.meas_rate * p.eta / 4.0;
        diff_coeff_ = gain * gain * p.meas_rate / 16.0;
        branch_ = branch;
        buf1_.setZero(dim, dim);
        buf2_.setZero(dim, dim);
    }

    void eval(const fock::Matrix& mu, fock::Matrix& out) {
        using fock::Complex;
        out.setZero();
        kernels::add_thermal_dissipators(out, mu, gamma_np1_, gamma_n_, st_);

        if (damp_coeff_ != 0.0) {
            const Complex wq =
                branch_ == FeedbackBranch::damping ? Complex(0, 1)
                                                   : Complex(-1, 0);
            kernels::quad_anticommutator(buf1_, mu, wq, st_);
            kernels::quad_commutator(buf2_, buf1_, Complex(1, 0), st_);
            out += Complex(0, -damp_coeff_) * buf2_;
        }
        if (diff_coeff_ != 0.0) {
            kernels::quad_commutator(buf1_, mu, Complex(1, 0), st_);
            kernels::quad_commutator(buf2_, buf1_, Complex(1, 0), st_);
            out -= diff_coeff_ * buf2_;
        }
    }

    double mean_n(const fock::Matrix& mu) const {
        return kernels::number_expectation(mu);
    }

    int dim() const { return dim_; }

  private:
    int dim_;
    kernels::SqrtTable st_;
    fock::Matrix buf1_, buf2_;
    double gamma_np1_ = 0.0, gamma_n_ = 0.0;
    double damp_coeff_ = 0.0, diff_coeff_ = 0.0;
    FeedbackBranch branch_ = FeedbackBranch::damping;
};

}  // namespace detail

inline MeqResult integrate_feedback_meq(
    const ValidatedParams& p, double gain, double t_max, int dim,
    FeedbackBranch branch = FeedbackBranch::damping,
    const fock::DensityMatrix* initial = nullptr, int record_points = 200) {
    if (initial && fock::thermal_tail(p.n_doppler, dim) >= 1e-6 &&
        initial->dim() != dim)
        throw truncation_error("integrate_feedback_meq: bad initial state");

    detail::MeqRhs rhs(p, gain, dim, branch);

    const double gamma_eff =
        p.cool_rate + 2.0 * p.eta * p.meas_rate * gain;
    double dt = 0.01 / gamma_eff;
    if (gain * p.meas_rate > 0.0)
        dt = std::min(dt, 0.1 / (gain * p.meas_rate));

    for (int attempt = 0;; ++attempt) {
        fock::Matrix mu = initial ? initial->op.m
                                  : fock::thermal_state(p.n_doppler, dim).op.m;
        MeqResult res;
        res.dt_used = dt;
        res.retries = attempt;

        const std::int64_t steps =
            static_cast<std::int64_t>(std::ceil(t_max / dt));
        const std::int64_t record_stride =
            std::max<std::int64_t>(1, steps / std::max(1, record_points));

        fock::Matrix k1(dim, dim), k2(dim, dim), k3(dim, dim), k4(dim, dim);
        fock::Matrix stage(dim, dim);

        // Early exit once <n> is flat over consecutive cooling times, but
        // never before 10 relaxation times have elapsed.
        const std::int64_t settle_chunk = std::max<std::int64_t>(
            1, static_cast<std::int64_t>(std::llround(1.0 / (gamma_eff * dt))));
        const std::int64_t min_steps = 10 * settle_chunk;
        double chunk_n = std::numeric_limits<double>::quiet_NaN();
        int flat_chunks = 0;

        bool unstable = false;
        for (std::int64_t k = 0; k < steps; ++k) {
            rhs.eval(mu, k1);
            stage = mu + 0.5 * dt * k1;
            rhs.eval(stage, k2);
            stage = mu + 0.5 * dt * k2;
            rhs.eval(stage, k3);
            stage = mu + dt * k3;
            rhs.eval(stage, k4);
            mu += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

            const double tr = mu.trace().real();
            if (!std::isfinite(tr) || std::abs(tr - 1.0) > 1e-6) {
                unstable = true;
                break;
            }
            if (k % record_stride == 0 || k == steps - 1) {
                const double n = rhs.mean_n(mu);
                if (!std::isfinite(n)) {
                    unstable = true;
                    break;
                }
                res.times.push_back(double(k + 1) * dt);
                res.n_of_t.push_back(n);
            }
            if ((k + 1) % settle_chunk == 0) {
                const double n = rhs.mean_n(mu);
                if (std::abs(n - chunk_n) < 5e-10 * std::max(1.0, n)) {
                    if (++flat_chunks >= 2 && k + 1 >= min_steps) break;
                } else {
                    flat_chunks = 0;
                }
                chunk_n = n;
            }
        }
        if (!unstable) {
            if (mu(dim - 1, dim - 1).real() > 1e-4)
                throw truncation_error(
                    "integrate_feedback_meq: top-level population breach");
            res.n_steady = rhs.mean_n(mu);
            return res;
        }
        if (attempt >= 3)
            throw error("integrate_feedback_meq: unstable after 3 dt halvings");
        dt *= 0.5;
    }
}

// Solves for the measurement rate gamma such that the optimal-gain minimum of
// n_ss reaches `n_to`, holding eta, Gamma and N fixed. The minimum is
// monotone decreasing in gamma with asymptote (2N-1)/4, so the root is
// unique when it exists.
struct GammaCalibration {
    double gamma = 0.0;              // rad/s
    double gain_at_min = 0.0;
    double n_min = 0.0;
    double n_min_gamma_x15 = 0.0;    // prediction for epsilon scaled 15x
};

inline GammaCalibration calibrate_gamma(const ValidatedParams& base,
                                        double n_from, double n_to) {
    if (std::abs(base.n_doppler - n_from) > 1e-12)
        throw calibration_error("calibrate_gamma: params carry N != n_from");
    ValidatedParams p = base;

    auto n_min_at = [&](double gamma) {
        p.meas_rate = gamma;
        p.ratio_meas_cool = gamma / p.cool_rate;
        return optimal_gain(p).n_min;
    };

    GammaCalibration out;
    if (std::abs(n_to - n_from) < 1e-12) {
        out.gamma = 0.0;
        out.n_min = n_from;
        out.n_min_gamma_x15 = n_from;
        return out;
    }

    const double floor = (2.0 * n_from - 1.0) / 4.0;
    if (n_to <= floor || n_to > n_from)
        throw calibration_error(
            "calibration-infeasible: reachable n_min range is (" +
            std::to_string(floor) + ", " + std::to_string(n_from) + ")");

    double lo = 1e-6 * base.cool_rate, hi = base.cool_rate;
    while (n_min_at(hi) > n_to) {
        hi *= 2.0;
        if (hi > 1e12 * base.cool_rate)
            throw calibration_error("calibration-infeasible: no bracket");
    }
    // n_min is decreasing in gamma: bisect to 1e-8 relative.
    for (int it = 0; it < 200 && (hi - lo) > 1e-8 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (n_min_at(mid) > n_to ? lo : hi) = mid;
    }
    out.gamma = 0.5 * (lo + hi);

    p.meas_rate = out.gamma;
    p.ratio_meas_cool = out.gamma / p.cool_rate;
    auto opt = optimal_gain(p);
    out.gain_at_min = opt.gain;
    out.n_min = opt.n_min;

    p.meas_rate = 15.0 * out.gamma;
    p.ratio_meas_cool = p.meas_rate / p.cool_rate;
    out.n_min_gamma_x15 = optimal_gain(p).n_min;
    return out;
}

}  // namespace colddamp::moments
