#pragma once

// Trajectory orchestration: the causal measurement -> circuit -> feedback
// loop shared by the density-matrix and Gaussian engines, plus the
// deterministic parallel ensemble runner.
//
// Loop wiring per integration step (time t, increment dt):
//   1. draw dW_in (and dW_out when the beam is split),
//   2. advance the conditional state with the pending feedback drive,
//   3. update the drive for the next step (ideal-demod mode) or, at sample
//      boundaries, push the sampled photocurrent through the electronics
//      (filter mode) and hold the output until the next boundary.
// The drive always lags its information by at least one step: causality.
//
// Ideal-demod noise: Eq.-of-motion averaging of the fed-back current
// reproduces the feedback master equation exactly when Xi has unit spectral
// density at low frequency and carries the record's phase-quadrature noise
// at half power:  Xi = LP[cos(nu t + phase) xi_in] + LP[xi_x]/sqrt(2),
// with xi_in = dW_in/dt the in-loop shot noise and xi_x an independent
// stream. A fully independent Xi would damp only the conditional-mean part
// of <p^2> and the ensemble would miss the closed-form steady state by tens
// of percent; a fully correlated one would double the injected noise.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "colddamp/circuit.hpp"
#include "colddamp/errors.hpp"
#include "colddamp/fock.hpp"
#include "colddamp/gaussian.hpp"
#include "colddamp/moments.hpp"
#include "colddamp/params.hpp"
#include "colddamp/rng.hpp"
#include "colddamp/sme.hpp"
#include "colddamp/spectra.hpp"
#include "colddamp/trajectory.hpp"

namespace colddamp::engine {

using params::LoopTimebase;
using params::ValidatedParams;
using trajectory::TrajectoryRecord;

enum class EngineKind { sme, gaussian };

inline const char* engine_name(EngineKind k) {
    return k == EngineKind::sme ? "sme" : "gaussian";
}

struct RunConfig {
    ValidatedParams p;  // meas_rate = total mirror-mode gamma
    LoopTimebase tb;
    circuit::FeedbackConfig fb;
    bool out_loop = false;
    double split = 0.5;      // in-loop fraction of the light when split
    double n_initial = -1.0; // < 0: start thermal at the Doppler limit
    int fock_dim = 0;        // 0: automatic truncation
    std::uint64_t seed = 1;

    double gamma_in() const {
        return out_loop ? split * p.meas_rate : p.meas_rate;
    }
    double gamma_out() const {
        return out_loop ? (1.0 - split) * p.meas_rate : 0.0;
    }
    // Parameter view of the in-loop channel (currents, circuit, demod).
    ValidatedParams params_in() const {
        ValidatedParams v = p;
        v.meas_rate = gamma_in();
        v.ratio_meas_cool = v.meas_rate / v.cool_rate;
        return v;
    }
    double n_start() const {
        return n_initial < 0.0 ? p.n_doppler : n_initial;
    }
};

// Upper estimate of the occupations a run can reach, used to size the Fock
// space. Phase-aware: a pure damping loop never heats past the closed-form
// steady state, while spring-like settings pick up the noise-driven and
// anti-damped estimates. Oversizing here multiplies every step's cost.
inline double estimate_peak_n(const RunConfig& cfg) {
    const auto pin = cfg.params_in();
    const double g = cfg.fb.theory_gain();
    double peak = std::max(cfg.p.n_doppler, cfg.n_start());
    if (g <= 0.0) return peak;

    const double c = std::cos(cfg.fb.phase), s = std::sin(cfg.fb.phase);
    const double kq = g * pin.meas_rate * pin.eta;  // coupling scale

    peak = std::max(peak, moments::n_ss(pin, g));

    if (std::abs(c) > 0.2) {
        // spring admixture: pi-branch noise heating
        const double n_pi = pin.n_doppler +
                            kq * kq * (2.0 * pin.n_doppler + 1.0) /
                                (2.0 * pin.cool_rate * pin.cool_rate) +
                            g * g * pin.meas_rate / (8.0 * pin.cool_rate);
        peak = std::max(peak, n_pi);
    }
    if (cfg.fb.mode == circuit::FeedbackMode::filter) {
        // record-fed loop: both quadratures driven with the full demod
        // noise; damping only from the velocity component of the phase
        const double damping = 4.0 * kq * std::max(0.0, -s);
        const double v2q = (pin.cool_rate * (2.0 * pin.n_doppler + 1.0) +
                            g * g * pin.meas_rate) /
                           (pin.cool_rate + damping);
        peak = std::max(peak, (v2q - 1.0) / 2.0);
    }
    if (s > 0.2) {
        // anti-damped setting: bounded only by the reduced net decay
        const double net = cfg.p.cool_rate - 2.0 * kq * s;
        const double blow =
            net > 0.05 * cfg.p.cool_rate
                ? (2.0 * pin.n_doppler + 1.0) * cfg.p.cool_rate / net
                : 40.0 * (2.0 * pin.n_doppler + 1.0);
        peak = std::max(peak, (blow - 1.0) / 2.0);
    }
    return peak;
}

inline int resolve_fock_dim(const RunConfig& cfg) {
    if (cfg.fock_dim > 0) return cfg.fock_dim;
    // Sized for the hottest state theory predicts; the runtime top-level
    // population monitor catches anything beyond it.
    return fock::default_dim(estimate_peak_n(cfg));
}

// ---------------------------------------------------------------------------
// Engine adapters: a uniform conditional-state interface over the two cores.
// ---------------------------------------------------------------------------

class GaussianAdapter {
  public:
    GaussianAdapter(const RunConfig& cfg)
        : p_(cfg.p),
          gamma_in_(cfg.gamma_in()),
          gamma_out_(cfg.gamma_out()),
          state_(gaussian::GaussianState::thermal(cfg.n_start())) {}

    double z_lab(double) const { return state_.mz; }
    std::pair<double, double> rot_means(double t) const {
        const double c = std::cos(p_.trap_omega * t);
        const double s = std::sin(p_.trap_omega * t);
        return {c * state_.mz - s * state_.mp, s * state_.mz + c * state_.mp};
    }
    double mean_n() const { return state_.mean_n(); }

    void step(double t, double dt, double dw_in, double dw_out, double drive) {
        (void)t;
        state_ = gaussian::step_two_channel(state_, dw_in, dw_out, drive, p_,
                                            gamma_in_, gamma_out_, dt);
    }

    void sample_checks() const { state_.check_physical(); }
    void periodic_checks() const {}

  private:
    ValidatedParams p_;
    double gamma_in_, gamma_out_;
    gaussian::GaussianState state_;
};

class SmeAdapter {
  public:
    SmeAdapter(const RunConfig& cfg)
        : core_(cfg.p, resolve_fock_dim(cfg), cfg.gamma_in(), cfg.gamma_out(),
                cfg.n_start()) {}

    double z_lab(double) const { return core_.z_lab(); }
    std::pair<double, double> rot_means(double) const {
        return {core_.zbar_rot(), core_.pbar_rot()};
    }
    double mean_n() const { return core_.mean_n(); }

    void step(double t, double dt, double dw_in, double dw_out, double drive) {
        core_.step(t, dt, dw_in, dw_out, drive);
        core_.check_positivity_proxy();
        if (core_.last_trace_drift() > 1e-6)
            throw error("trace drift " +
                        std::to_string(core_.last_trace_drift()) +
                        " exceeded 1e-6 in one step");
    }

    void sample_checks() const { core_.check_truncation(); }
    void periodic_checks() const { core_.check_positivity_full(); }

  private:
    sme::SmeCore core_;
};

// ---------------------------------------------------------------------------
// One trajectory through the closed loop.
// ---------------------------------------------------------------------------

struct TrajectoryResult {
    TrajectoryRecord record;
    double n_tail_avg = 0.0;  // time average over the trailing window
    std::vector<double> n_checkpoints;
};

struct TrajectoryOptions {
    double tail_window_frac = 1.0 / 3.0;
    int n_checkpoints = 0;
    bool keep_record = true;
};

template <class Adapter>
TrajectoryResult run_trajectory_impl(const RunConfig& cfg,
                                     std::uint64_t traj_index,
                                     const TrajectoryOptions& opt) {
    const auto pin = cfg.params_in();
    const double dt = cfg.tb.dt_sme;
    const int stride = cfg.tb.sample_stride();
    const std::int64_t steps = cfg.tb.total_steps();
    const double dt_sample = cfg.tb.dt_sample;
    const double sqrt_dt = std::sqrt(dt);
    const double gamma_in = cfg.gamma_in();
    const double gamma_out = cfg.gamma_out();

    NormalStream noise_in(cfg.seed, traj_index, 0);
    NormalStream noise_out(cfg.seed, traj_index, 1);
    NormalStream noise_x(cfg.seed, traj_index, 2);

    Adapter state(cfg);

    // Demodulator state for ideal-demod mode: one-pole lowpass at the loop
    // bandwidth on both noise components.
    const double b_hz = cfg.fb.bandwidth_hz > 0.0
                            ? cfg.fb.bandwidth_hz
                            : circuit::default_bandwidth_hz(cfg.p);
    const double lp_beta = 1.0 - std::exp(-2.0 * M_PI * b_hz * dt);
    double lp_corr = 0.0, lp_x = 0.0;

    // Electronics state for filter mode (runs at the sample rate).
    circuit::FilterState filter;
    const bool filter_mode = cfg.fb.mode == circuit::FeedbackMode::filter &&
                             cfg.fb.gain_electronic != 0.0;
    const bool demod_mode = cfg.fb.mode == circuit::FeedbackMode::ideal_demod &&
                            cfg.fb.theory_gain() != 0.0;
    if (filter_mode)
        filter = circuit::make_filter_state(pin, cfg.fb, 1.0 / dt_sample);

    TrajectoryResult out;
    const std::int64_t n_samples = steps / stride;
    if (opt.keep_record) out.record.reserve(std::size_t(n_samples));

    const std::int64_t tail_start =
        std::int64_t(double(steps) * (1.0 - opt.tail_window_frac));
    double tail_acc = 0.0;
    std::int64_t tail_count = 0;

    const std::int64_t checkpoint_stride =
        opt.n_checkpoints > 0 ? std::max<std::int64_t>(1, steps / opt.n_checkpoints)
                              : 0;

    const std::int64_t eig_stride = 4000;  // full positivity check cadence

    double drive = 0.0;         // feedback value applied during this step
    double window_dw_in = 0.0;  // Wiener aggregate within the sample window
    double window_dw_out = 0.0;

    for (std::int64_t k = 0; k < steps; ++k) {
        const double t = double(k) * dt;
        const double dw_in = noise_in() * sqrt_dt;
        const double dw_out = gamma_out > 0.0 ? noise_out() * sqrt_dt : 0.0;
        window_dw_in += dw_in;
        window_dw_out += dw_out;

        try {
            state.step(t, dt, dw_in, dw_out, drive);
        } catch (const error& e) {
            throw error("trajectory " + std::to_string(traj_index) + " at t=" +
                        std::to_string(t) + ": " + e.what());
        }

        if (demod_mode) {
            // Demodulated record noise (phase quadrature) plus the
            // independent makeup stream, both band-limited.
            const double xi_in = dw_in / dt;
            const double raw_corr =
                std::cos(pin.trap_omega * t + cfg.fb.phase) * xi_in;
            lp_corr += lp_beta * (raw_corr - lp_corr);
            lp_x += lp_beta * (noise_x() / sqrt_dt - lp_x);
            const double xi = lp_corr + lp_x / std::sqrt(2.0);

            const auto [zr, pr] = state.rot_means(t + dt);
            const double q_phi =
                zr * std::cos(cfg.fb.phase) - pr * std::sin(cfg.fb.phase);
            const double i_fb = (gamma_in * pin.eta * q_phi +
                                 std::sqrt(gamma_in / 2.0) * xi) *
                                std::cos(pin.trap_omega * (t + dt));
            drive = cfg.fb.theory_gain() * i_fb;
        }

        if ((k + 1) % stride == 0) {
            const double t_s = double(k + 1) * dt;
            const double z = state.z_lab(t_s);
            // Kalman-consistent signal weight (see sme::photocurrent_sample)
            const double i_in = 2.0 * gamma_in * pin.eta * z +
                                std::sqrt(gamma_in / 2.0) * window_dw_in /
                                    dt_sample;
            double i_out = 0.0;
            if (gamma_out > 0.0)
                i_out = 2.0 * gamma_out * pin.eta * z +
                        std::sqrt(gamma_out / 2.0) * window_dw_out / dt_sample;
            window_dw_in = window_dw_out = 0.0;

            double v_fb = drive;
            if (filter_mode) {
                const double v =
                    circuit::process_sample(filter, i_in, cfg.fb, pin, t_s);
                drive = cfg.fb.calibration * v;
                v_fb = v;
            }

            state.sample_checks();

            if (opt.keep_record) {
                const auto [zr, pr] = state.rot_means(t_s);
                const double c = std::cos(pin.trap_omega * t_s);
                const double s = std::sin(pin.trap_omega * t_s);
                const double p_lab = c * pr - s * zr;
                out.record.push(t_s, i_in, i_out, v_fb, z, p_lab,
                                state.mean_n());
            }
        }

        if (k >= tail_start) {
            tail_acc += state.mean_n();
            ++tail_count;
        }
        if (checkpoint_stride > 0 && (k + 1) % checkpoint_stride == 0)
            out.n_checkpoints.push_back(state.mean_n());
        if ((k + 1) % eig_stride == 0) state.periodic_checks();
    }
    state.periodic_checks();

    out.n_tail_avg = tail_count > 0 ? tail_acc / double(tail_count) : 0.0;
    return out;
}

inline TrajectoryResult run_trajectory(const RunConfig& cfg, EngineKind kind,
                                       std::uint64_t traj_index = 0,
                                       TrajectoryOptions opt = {}) {
    if (kind == EngineKind::sme)
        return run_trajectory_impl<SmeAdapter>(cfg, traj_index, opt);
    return run_trajectory_impl<GaussianAdapter>(cfg, traj_index, opt);
}

// ---------------------------------------------------------------------------
// Ensemble runner: N-way parallel trajectories, deterministic ordered
// reduction over the trajectory index.
// ---------------------------------------------------------------------------

struct EnsembleOptions {
    int n_trajectories = 200;
    int threads = 0;  // 0: hardware concurrency
    TrajectoryOptions traj;
    bool collect_psd = false;
    std::size_t psd_segment_len = 4096;
    double psd_overlap = 0.5;
    bool keep_first_record = false;
};

struct EnsembleResult {
    double n_tail_mean = 0.0;
    double n_tail_se = 0.0;
    std::vector<double> checkpoint_mean;
    std::vector<double> checkpoint_se;
    spectra::SpectrumEstimate psd_in;
    spectra::SpectrumEstimate psd_out;
    TrajectoryRecord first_record;
    int n_trajectories = 0;
};

inline EnsembleResult run_ensemble(const RunConfig& cfg, EngineKind kind,
                                   const EnsembleOptions& opt) {
    const int n = opt.n_trajectories;
    struct Slot {
        double n_tail = 0.0;
        std::vector<double> checkpoints;
        std::vector<double> psd_in, psd_out;
        int segments = 0;
        TrajectoryRecord record;
        bool have_record = false;
    };
    const std::size_t slot_count = std::size_t(n);
    std::vector<Slot> slots(slot_count);
    std::vector<std::exception_ptr> errors;
    std::mutex err_mutex;

    int n_threads = opt.threads > 0
                        ? opt.threads
                        : int(std::max(1u, std::thread::hardware_concurrency()));
    n_threads = std::min(n_threads, n);

    auto worker = [&](int tid) {
        for (int idx = tid; idx < n; idx += n_threads) {
            try {
                TrajectoryOptions topt = opt.traj;
                const bool want_record =
                    opt.collect_psd || (opt.keep_first_record && idx == 0);
                topt.keep_record = want_record;
                auto res = run_trajectory(cfg, kind, std::uint64_t(idx), topt);
                Slot& s = slots[std::size_t(idx)];
                s.n_tail = res.n_tail_avg;
                s.checkpoints = std::move(res.n_checkpoints);
                if (opt.collect_psd) {
                    const double fs = 1.0 / cfg.tb.dt_sample;
                    auto pin_spec = spectra::welch_psd(
                        res.record.i_in, fs, opt.psd_segment_len,
                        opt.psd_overlap);
                    s.psd_in = std::move(pin_spec.psd);
                    s.segments = pin_spec.segments;
                    if (cfg.out_loop) {
                        auto pout_spec = spectra::welch_psd(
                            res.record.i_out, fs, opt.psd_segment_len,
                            opt.psd_overlap);
                        s.psd_out = std::move(pout_spec.psd);
                    }
                }
                if (opt.keep_first_record && idx == 0) {
                    s.record = std::move(res.record);
                    s.have_record = true;
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                errors.push_back(std::current_exception());
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    for (int tid = 0; tid < n_threads; ++tid) pool.emplace_back(worker, tid);
    for (auto& th : pool) th.join();
    if (!errors.empty()) std::rethrow_exception(errors.front());

    EnsembleResult out;
    out.n_trajectories = n;

    // Deterministic fold in trajectory order.
    double acc = 0.0, acc2 = 0.0;
    for (const auto& s : slots) {
        acc += s.n_tail;
        acc2 += s.n_tail * s.n_tail;
    }
    out.n_tail_mean = acc / double(n);
    const double var =
        std::max(0.0, acc2 / double(n) - out.n_tail_mean * out.n_tail_mean);
    out.n_tail_se = std::sqrt(var / double(std::max(1, n - 1)));

    if (!slots.empty() && !slots[0].checkpoints.empty()) {
        const std::size_t nc = slots[0].checkpoints.size();
        out.checkpoint_mean.assign(nc, 0.0);
        out.checkpoint_se.assign(nc, 0.0);
        for (const auto& s : slots)
            for (std::size_t c = 0; c < nc; ++c)
                out.checkpoint_mean[c] += s.checkpoints[c];
        for (auto& v : out.checkpoint_mean) v /= double(n);
        for (const auto& s : slots)
            for (std::size_t c = 0; c < nc; ++c) {
                const double d = s.checkpoints[c] - out.checkpoint_mean[c];
                out.checkpoint_se[c] += d * d;
            }
        for (auto& v : out.checkpoint_se)
            v = std::sqrt(v / double(n) / double(std::max(1, n - 1)));
    }

    if (opt.collect_psd && !slots.empty() && !slots[0].psd_in.empty()) {
        const double fs = 1.0 / cfg.tb.dt_sample;
        const std::size_t nbins = slots[0].psd_in.size();
        auto average = [&](bool in_loop) {
            spectra::SpectrumEstimate s;
            s.sample_rate_hz = fs;
            s.freq_hz.resize(nbins);
            for (std::size_t k = 0; k < nbins; ++k)
                s.freq_hz[k] =
                    double(k) * fs / double(opt.psd_segment_len);
            s.psd.assign(nbins, 0.0);
            int total_segments = 0;
            for (const auto& slot : slots) {
                const auto& src = in_loop ? slot.psd_in : slot.psd_out;
                if (src.empty()) continue;
                for (std::size_t k = 0; k < nbins; ++k)
                    s.psd[k] += src[k] * double(slot.segments);
                total_segments += slot.segments;
            }
            for (auto& v : s.psd) v /= double(total_segments);
            s.segments = total_segments;
            return s;
        };
        out.psd_in = average(true);
        if (cfg.out_loop) out.psd_out = average(false);
    }

    if (opt.keep_first_record && slots[0].have_record)
        out.first_record = std::move(slots[0].record);
    return out;
}

}  // namespace colddamp::engine
