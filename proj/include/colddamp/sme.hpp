#pragma once

// Conditional stochastic master equation engine.
//
// Public operations carry the textbook (lab-frame) forms and are what the
// unit tests exercise; the trajectory core integrates the same equation in
// the interaction picture, where the free rotation is removed analytically.
// Euler-Maruyama applied to the bare -i nu [n, rho] commutator is linearly
// unstable at dt = 1/(50 nu) once nu/Gamma exceeds ~50, so the lab-frame
// form is not integrable directly at the mandated step size; the rotating
// frame keeps the stochastic and dissipative terms intact with the
// measured quadrature rotating instead, X(t) = a e^{-i nu t} + h.c.

#include <cmath>
#include <complex>
#include <vector>

#include "colddamp/errors.hpp"
#include "colddamp/fock.hpp"
#include "colddamp/kernels.hpp"
#include "colddamp/params.hpp"

namespace colddamp::sme {

using fock::Complex;
using fock::DensityMatrix;
using fock::Matrix;
using fock::Operator;
using params::ValidatedParams;

struct ConditionedState {
    DensityMatrix rho;
    double t = 0.0;
    double top_pop = 0.0;

    int dim() const { return rho.dim(); }
};

// -i nu [n, rho] + Gamma (N+1) D[a] rho + Gamma N D[a\dag] rho
inline Operator drift_term(const DensityMatrix& rho,
                           const ValidatedParams& p) {
    const int dim = rho.dim();
    kernels::SqrtTable st(dim);
    Matrix out = Matrix::Zero(dim, dim);
    kernels::add_thermal_dissipators(out, rho.op.m,
                                     p.cool_rate * (p.n_doppler + 1.0),
                                     p.cool_rate * p.n_doppler, st);
    // number commutator: [n, rho]_{jk} = (j - k) rho_{jk}
    for (int k = 0; k < dim; ++k)
        for (int j = 0; j < dim; ++j)
            out(j, k) += Complex(0, -p.trap_omega) * double(j - k) * rho.op.m(j, k);
    return {dim, std::move(out)};
}

// sqrt(2 gamma eta^2) (z rho + rho z - 2 <z> rho); traceless by the <z>
// subtraction.
inline Operator innovation_term(const DensityMatrix& rho,
                                const ValidatedParams& p) {
    const int dim = rho.dim();
    kernels::SqrtTable st(dim);
    Matrix out(dim, dim);
    kernels::quad_anticommutator(out, rho.op.m, Complex(1, 0), st);
    const double zbar = kernels::quad_expectation(rho.op.m, Complex(1, 0), st);
    out -= 2.0 * zbar * rho.op.m;
    out *= std::sqrt(2.0 * p.meas_rate * p.eta * p.eta);
    return {dim, std::move(out)};
}

// -i G I_fb [z, rho]
inline Operator feedback_term(const DensityMatrix& rho, double i_fb,
                              double g_tilde) {
    const int dim = rho.dim();
    kernels::SqrtTable st(dim);
    Matrix out(dim, dim);
    kernels::quad_commutator(out, rho.op.m, Complex(1, 0), st);
    out *= Complex(0, -g_tilde * i_fb);
    return {dim, std::move(out)};
}

// I = 2 gamma eta <z>_c + sqrt(gamma/2) dW/dt, sharing dW with the
// innovation term; the shared noise is what squashing rests on.
//
// Signal weight: the filter-consistent companion of the sqrt(2 gamma eta^2)
// innovation carries 2 gamma eta <z>, not gamma eta <z>. With the smaller
// weight the cross-correlation between the recorded noise and the
// conditional mean no longer completes the sideband to the true motional
// spectrum, so fitted line centers stop tracking the motion (visible as a
// wrong pi-branch frequency shift). The factor is a detector gain
// convention; the shot-noise floor is unchanged.
inline double photocurrent_sample(double z_mean, double dW, double dt,
                                  const ValidatedParams& p) {
    return 2.0 * p.meas_rate * p.eta * z_mean +
           std::sqrt(p.meas_rate / 2.0) * dW / dt;
}

// Second detector outside the loop: gamma_out = (1 - split) gamma, its own
// independent Wiener increment.
inline double out_loop_sample(double z_mean, double dW_out, double dt,
                              const ValidatedParams& p, double split) {
    if (!(split > 0.0 && split < 1.0))
        throw param_error("out_loop_sample: split must lie in (0, 1)");
    const double gamma_out = (1.0 - split) * p.meas_rate;
    return 2.0 * gamma_out * p.eta * z_mean +
           std::sqrt(gamma_out / 2.0) * dW_out / dt;
}

// ---------------------------------------------------------------------------
// Rotating-frame trajectory core. One object per trajectory; all buffers
// preallocated. The conditioning uses one innovation channel per detector,
// both measuring the rotating quadrature X_w(t), w = exp(i nu t).
// ---------------------------------------------------------------------------

class SmeCore {
  public:
    SmeCore(const ValidatedParams& p, int dim, double gamma_in,
            double gamma_out, double n_initial)
        : p_(p),
          dim_(dim),
          st_(dim),
          root_in_(std::sqrt(2.0 * gamma_in * p.eta * p.eta)),
          root_out_(std::sqrt(2.0 * gamma_out * p.eta * p.eta)),
          gamma_np1_(p.cool_rate * (p.n_doppler + 1.0)),
          gamma_n_(p.cool_rate * p.n_doppler) {
        rho_ = fock::thermal_state(n_initial, dim).op.m;
        buf_.setZero(dim, dim);
        zbar_rot_ = pbar_rot_ = 0.0;
        refresh_moments(1.0, 0.0);
    }

    // Lab-frame <z> at carrier (cos, sin) = (cos nu t, sin nu t).
    double z_lab() const { return z_lab_; }
    double zbar_rot() const { return zbar_rot_; }
    double pbar_rot() const { return pbar_rot_; }
    double mean_n() const { return kernels::number_expectation(rho_); }
    double top_pop() const { return rho_(dim_ - 1, dim_ - 1).real(); }
    double last_trace_drift() const { return last_trace_drift_; }
    const Matrix& rho() const { return rho_; }

    // One Euler-Maruyama step at time t; `drive` is the feedback current
    // already scaled to theory gain (G I_fb). The drift, both innovation
    // channels and the feedback commutator form one banded stencil, applied
    // in a single pass; a second pass hermitizes and renormalizes.
    void step(double t, double dt, double dw_in, double dw_out, double drive) {
        const Complex w = std::polar(1.0, p_.trap_omega * t);
        const double weight = root_in_ * dw_in + root_out_ * dw_out;
        const double xbar =
            weight != 0.0 ? kernels::quad_expectation(rho_, w, st_) : 0.0;

        const Complex fb(0.0, -drive * dt);
        const Complex wl = weight + fb;   // left products X_w rho
        const Complex wr = weight - fb;   // right products rho X_w
        const Complex lw = wl * w, lwc = wl * std::conj(w);
        const Complex rw = wr * w, rwc = wr * std::conj(w);
        const double gd = gamma_np1_ * dt, gu = gamma_n_ * dt;
        const double diag_inn = -2.0 * xbar * weight;
        const auto& s = st_.s;
        const int D = dim_;

        // Per-step coefficient vectors, hoisted out of the column loop.
        // Splitting the seven stencil terms into independent products and
        // tree-summing them matters here: a single serial accumulation
        // chain is latency-bound and costs ~3x.
        if (int(diag_row_.size()) != D) {
            diag_row_.resize(std::size_t(D));
            lws_.resize(std::size_t(D) + 1);
            lwcs_.resize(std::size_t(D) + 1);
        }
        for (int n = 0; n < D; ++n) {
            const double cn = (n == D - 1) ? 0.0 : double(n + 1);
            diag_row_[std::size_t(n)] = -0.5 * (gd * double(n) + gu * cn);
        }
        for (int n = 0; n <= D; ++n) {
            const double sn = s[std::size_t(n)];
            lws_[std::size_t(n)] = lw * sn;
            lwcs_[std::size_t(n)] = lwc * sn;
        }

        // Interior rows carry no bounds checks; row 0, row D-1 and the two
        // edge columns are peeled.
        auto column = [&](int m, const Complex* __restrict__ col,
                          const Complex* __restrict__ colL,
                          const Complex* __restrict__ colR,
                          Complex* __restrict__ out) {
            const double cm = (m == D - 1) ? 0.0 : double(m + 1);
            const double dm = 1.0 + diag_inn - 0.5 * (gd * double(m) + gu * cm);
            const double sm = s[m], sm1 = (m + 1 < D) ? s[m + 1] : 0.0;
            const double gd_m = gd * sm1, gu_m = gu * sm;
            const Complex rw_m = rw * sm1, rwc_m = rwc * sm;

            {   // n = 0
                Complex acc = (dm + diag_row_[0]) * col[0] + lwcs_[1] * col[1];
                if (colR) acc += gd_m * s[1] * colR[1] + rw_m * colR[0];
                if (colL) acc += rwc_m * colL[0];
                out[0] = acc;
            }
            if (colL && colR) {
                for (int n = 1; n < D - 1; ++n) {
                    const Complex a0 = (dm + diag_row_[std::size_t(n)]) * col[n];
                    const Complex a1 = lws_[std::size_t(n)] * col[n - 1];
                    const Complex a2 = lwcs_[std::size_t(n) + 1] * col[n + 1];
                    const Complex a3 = (gd_m * s[n + 1]) * colR[n + 1];
                    const Complex a4 = (gu_m * s[n]) * colL[n - 1];
                    const Complex a5 = rw_m * colR[n];
                    const Complex a6 = rwc_m * colL[n];
                    out[n] = ((a0 + a1) + (a2 + a3)) + ((a4 + a5) + a6);
                }
            } else {
                for (int n = 1; n < D - 1; ++n) {
                    Complex acc = (dm + diag_row_[std::size_t(n)]) * col[n] +
                                  lws_[std::size_t(n)] * col[n - 1] +
                                  lwcs_[std::size_t(n) + 1] * col[n + 1];
                    if (colR)
                        acc += (gd_m * s[n + 1]) * colR[n + 1] + rw_m * colR[n];
                    if (colL)
                        acc += (gu_m * s[n]) * colL[n - 1] + rwc_m * colL[n];
                    out[n] = acc;
                }
            }
            {   // n = D - 1
                const int n = D - 1;
                Complex acc = (dm + diag_row_[std::size_t(n)]) * col[n] +
                              lws_[std::size_t(n)] * col[n - 1];
                if (colR) acc += rw_m * colR[n];
                if (colL) acc += (gu_m * s[n]) * colL[n - 1] + rwc_m * colL[n];
                out[n] = acc;
            }
        };

        double trace = 0.0;
        for (int m = 0; m < D; ++m) {
            const Complex* col = &rho_(0, m);
            const Complex* colL = m > 0 ? &rho_(0, m - 1) : nullptr;
            const Complex* colR = m + 1 < D ? &rho_(0, m + 1) : nullptr;
            Complex* out = &buf_(0, m);
            column(m, col, colL, colR, out);
            trace += out[m].real();
        }

        // Hermitize and renormalize into rho_; track the pre-normalization
        // trace drift (contract: < 1e-6 per step).
        last_trace_drift_ = std::abs(trace - 1.0);
        const double inv = 1.0 / trace;
        for (int m = 0; m < D; ++m) {
            rho_(m, m) = Complex(buf_(m, m).real() * inv, 0.0);
            for (int n = 0; n < m; ++n) {
                const Complex v =
                    0.5 * (buf_(n, m) + std::conj(buf_(m, n))) * inv;
                rho_(n, m) = v;
                rho_(m, n) = std::conj(v);
            }
        }

        const double nu_t = p_.trap_omega * (t + dt);
        refresh_moments(std::cos(nu_t), std::sin(nu_t));
    }

    // Positivity proxy each step is the diagonal; the full spectrum check
    // runs at the cadence the engine chooses (diagonalization is O(D^3)).
    void check_positivity_proxy() const {
        for (int k = 0; k < dim_; ++k)
            if (rho_(k, k).real() < -1e-4)
                throw positivity_error("positivity-breach: diagonal " +
                                       std::to_string(rho_(k, k).real()));
    }

    void check_positivity_full() const {
        Eigen::SelfAdjointEigenSolver<Matrix> es(rho_,
                                                 Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-4)
            throw positivity_error(
                "positivity-breach: min eigenvalue " +
                std::to_string(es.eigenvalues().minCoeff()));
    }

    void check_truncation() const {
        if (top_pop() >= 1e-4)
            throw truncation_error("truncation-breach: top population " +
                                   std::to_string(top_pop()));
    }

  private:
    void refresh_moments(double c, double s) {
        zbar_rot_ = kernels::quad_expectation(rho_, Complex(1, 0), st_);
        pbar_rot_ = kernels::quad_expectation(rho_, Complex(0, 1), st_);
        z_lab_ = c * zbar_rot_ + s * pbar_rot_;
    }

    ValidatedParams p_;
    int dim_;
    kernels::SqrtTable st_;
    double root_in_, root_out_;
    double gamma_np1_, gamma_n_;
    Matrix rho_, buf_;
    std::vector<double> diag_row_;
    std::vector<Complex> lws_, lwcs_;
    double zbar_rot_ = 0.0, pbar_rot_ = 0.0, z_lab_ = 0.0;
    double last_trace_drift_ = 0.0;
};

}  // namespace colddamp::sme
