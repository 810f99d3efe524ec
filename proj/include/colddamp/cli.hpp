#pragma once

// Scenario runner: resolves a preset plus user config into concrete runs,
// executes them, and writes CSV/JSON outputs plus a manifest sufficient to
// reproduce every byte.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "colddamp/config.hpp"
#include "colddamp/engine.hpp"
#include "colddamp/moments.hpp"
#include "colddamp/spectra.hpp"
#include "colddamp/trajectory.hpp"

namespace colddamp::cli {

using config::json;
using engine::EngineKind;

inline json scenario_preset(const std::string& name) {
    // Desk scale (nu/Gamma = 100) keeps full ensembles cheap while leaving
    // every dimensionless group at its lab value; lab scale is used where
    // absolute frequencies matter (sideband width, squashing).
    json desk = {
        {"nu_hz", 1.0e4},      {"gamma_cool_hz", 100.0},
        {"n_doppler", 2.0},    {"gamma_mirror_hz", 2000.0},
        {"eta", 0.07},         {"fb_bandwidth_hz", 600.0},
        {"out_loop", true},    {"split", 0.5},
        {"t_total_s", 0.1},    {"ensemble", 150},
        {"psd_segment_len", 16384},
    };
    json lab = {
        {"nu_hz", 1.0e6},      {"gamma_cool_hz", 400.0},
        {"n_doppler", 17.0},   {"gamma_mirror_hz", 3624.0},
        {"eta", 0.07},         {"fb_bandwidth_hz", 30.0e3},
        {"dt_sample_s", 5.0926e-8},  // 16 integration steps per sample
        {"t_total_s", 0.15},   {"ensemble", 16},
        {"psd_segment_len", 1u << 20},
    };

    if (name == "fig3a") {
        json j = desk;
        j["fb_mode"] = "filter";
        j["fb_phase_rad"] = -M_PI / 2.0;
        j["gains"] = {0.0, 0.06, 0.12, 0.2, 0.35, 0.55, 0.8, 1.1};
        return j;
    }
    if (name == "fig3b") {
        // pi-branch grid stays inside the servo-stable region: past ~0.6
        // the spring-shifted line meets the bandpass phase slope and the
        // loop runs away.
        json j = desk;
        j["fb_mode"] = "filter";
        j["fb_phase_rad"] = M_PI;
        j["gains"] = {0.0, 0.06, 0.12, 0.2, 0.28, 0.38, 0.48, 0.55};
        return j;
    }
    if (name == "fig2") {
        json j = lab;
        j["fb_mode"] = "filter";
        j["fb_phase_rad"] = -M_PI / 2.0;
        j["gains"] = {0.0, 0.8, 4.0};
        return j;
    }
    if (name == "trajectory" || name == "sweep-gain" || name == "spectrum")
        return desk;
    throw config_error("unknown scenario: " + name);
}

struct ScenarioIO {
    std::string out_dir = ".";
    EngineKind engine_kind = EngineKind::gaussian;

    std::string path(const std::string& file) const {
        return (std::filesystem::path(out_dir) / file).string();
    }
};

inline void write_manifest(const ScenarioIO& io, const std::string& scenario,
                           const config::ResolvedRun& rr,
                           const std::vector<std::string>& outputs,
                           double wall_seconds, std::int64_t total_steps) {
    json m;
    m["scenario"] = scenario;
    m["engine"] = engine::engine_name(io.engine_kind);
    m["config"] = rr.effective;
    m["seed"] = rr.run.seed;
    m["outputs"] = outputs;
    m["wall_seconds"] = wall_seconds;
    m["total_steps"] = total_steps;
    std::ofstream out(io.path("manifest.json"));
    out << m.dump(2) << "\n";
}

// --------------------------------------------------------------------------
// trajectory: one conditional trajectory, full record to CSV + sidecar.
// --------------------------------------------------------------------------

inline int cmd_trajectory(const config::ResolvedRun& rr,
                          const ScenarioIO& io) {
    const auto t0 = std::chrono::steady_clock::now();
    auto res = engine::run_trajectory(rr.run, io.engine_kind, 0);
    trajectory::write_csv(res.record, io.path("trajectory.csv"));

    json sidecar;
    sidecar["config"] = rr.effective;
    sidecar["seed"] = rr.run.seed;
    sidecar["engine"] = engine::engine_name(io.engine_kind);
    sidecar["samples"] = res.record.size();
    sidecar["n_tail_avg"] = res.n_tail_avg;
    std::ofstream side(io.path("trajectory.json"));
    side << sidecar.dump(2) << "\n";

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    write_manifest(io, "trajectory", rr,
                   {"trajectory.csv", "trajectory.json"}, wall,
                   rr.run.tb.total_steps());
    return 0;
}

// --------------------------------------------------------------------------
// Shared sideband analysis helpers.
// --------------------------------------------------------------------------

struct SidebandWindow {
    double lo_hz = 0.0, hi_hz = 0.0;  // integration window around nu
};

inline SidebandWindow sideband_window(const engine::RunConfig& cfg,
                                      double width_factor = 6.0) {
    const double nu_hz = params::rad_to_hz(cfg.p.trap_omega);
    const double gamma_hz = params::rad_to_hz(cfg.p.cool_rate);
    // Wide enough for feedback-broadened lines at every tested gain.
    const double g = cfg.fb.theory_gain();
    const double broadened =
        gamma_hz *
        (1.0 + 2.0 * g * cfg.params_in().meas_rate * cfg.p.eta /
                   cfg.p.cool_rate);
    const double half =
        std::max(width_factor * broadened, 3.0 * gamma_hz);
    return {nu_hz - half, nu_hz + half};
}

struct ChannelSpectra {
    spectra::SpectrumEstimate in_loop;
    spectra::SpectrumEstimate out_loop;
    double area_in = 0.0;
    double area_out = 0.0;
};

inline double window_area(const spectra::SpectrumEstimate& s,
                          const SidebandWindow& w) {
    double area = 0.0;
    for (std::size_t k = 0; k < s.freq_hz.size(); ++k)
        if (s.freq_hz[k] >= w.lo_hz && s.freq_hz[k] <= w.hi_hz)
            area += (s.normalized[k] - 1.0) * s.df();
    return area;
}

inline ChannelSpectra analyze_channels(const engine::EnsembleResult& res,
                                       const engine::RunConfig& cfg) {
    const auto w = sideband_window(cfg);
    ChannelSpectra out;
    out.in_loop = spectra::normalize_to_shotnoise(res.psd_in, w.lo_hz, w.hi_hz);
    out.area_in = window_area(out.in_loop, w);
    if (cfg.out_loop) {
        out.out_loop =
            spectra::normalize_to_shotnoise(res.psd_out, w.lo_hz, w.hi_hz);
        out.area_out = window_area(out.out_loop, w);
    }
    return out;
}

inline void write_spectrum_csv(const spectra::SpectrumEstimate& s,
                               const std::string& path) {
    std::ofstream out(path);
    out << "freq_hz,psd,normalized\n";
    char line[128];
    for (std::size_t k = 0; k < s.freq_hz.size(); ++k) {
        std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g\n", s.freq_hz[k],
                      s.psd[k], s.normalized.empty() ? 0.0 : s.normalized[k]);
        out << line;
    }
}

// --------------------------------------------------------------------------
// sweep-gain: ensemble per gain, out-loop sideband area vs gain with the
// closed-form theory overlay; doubles as fig3a / fig3b.
// --------------------------------------------------------------------------

inline int cmd_sweep_gain(const config::ResolvedRun& rr, const ScenarioIO& io,
                          const std::string& scenario) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> gains = rr.gains;
    if (gains.empty())
        throw config_error("sweep-gain needs a 'gains' array in the config");

    engine::EnsembleOptions opt;
    opt.n_trajectories = rr.ensemble;
    opt.traj.keep_record = false;
    opt.collect_psd = true;
    opt.psd_segment_len = rr.psd_segment_len;
    opt.psd_overlap = rr.psd_overlap;

    struct Row {
        double gain, area_norm, area_abs, n_mean, n_se, n_theory;
    };
    std::vector<Row> rows;
    std::int64_t steps = 0;

    for (double g : gains) {
        auto cfg = rr.run;
        cfg.fb.gain_electronic = g;
        auto res = engine::run_ensemble(cfg, io.engine_kind, opt);
        auto spec = analyze_channels(res, cfg);
        const double theory =
            moments::n_ss(cfg.params_in(), cfg.fb.theory_gain());
        rows.push_back({g, spec.area_out, spec.area_out, res.n_tail_mean,
                        res.n_tail_se, theory});
        steps += cfg.tb.total_steps() * opt.n_trajectories;
    }
    const double area0 = rows.front().area_abs;
    for (auto& r : rows) r.area_norm = r.area_abs / area0;

    std::ofstream out(io.path("sweep.csv"));
    out << "gain,area_norm,n_mean,n_se,n_ss_theory\n";
    char line[192];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      r.gain, r.area_norm, r.n_mean, r.n_se, r.n_theory);
        out << line;
    }
    out.close();

    // Theory companion: closed form, master-equation oracle where the
    // truncated space stays small, and the pi-branch frequency shift.
    std::ofstream th(io.path("theory_sweep.csv"));
    th << "gain,n_ss_analytic,n_ss_meq,freq_shift_hz\n";
    const auto pin = rr.run.params_in();
    for (double g : gains) {
        const double gt = rr.run.fb.calibration * g;
        const double analytic = moments::n_ss(pin, gt);
        double meq = std::nan("");
        const int dim = fock::default_dim(std::max(analytic, pin.n_doppler));
        if (dim <= 120) {
            auto r = moments::integrate_feedback_meq(
                pin, gt, 40.0 / pin.cool_rate, dim);
            meq = r.n_steady;
        }
        const double shift_hz =
            params::rad_to_hz(moments::frequency_shift(pin, gt));
        std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g\n", g,
                      analytic, meq, shift_hz);
        th << line;
    }
    th.close();

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    write_manifest(io, scenario, rr, {"sweep.csv", "theory_sweep.csv"}, wall,
                   steps);
    return 0;
}

// --------------------------------------------------------------------------
// spectrum: in-loop and out-loop normalized spectra per configured gain,
// with a Lorentzian fit summary; doubles as fig2.
// --------------------------------------------------------------------------

inline int cmd_spectrum(const config::ResolvedRun& rr, const ScenarioIO& io,
                        const std::string& scenario) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> gains = rr.gains;
    if (gains.empty()) gains = {0.0};

    engine::EnsembleOptions opt;
    opt.n_trajectories = rr.ensemble;
    opt.traj.keep_record = false;
    opt.collect_psd = true;
    opt.psd_segment_len = rr.psd_segment_len;
    opt.psd_overlap = rr.psd_overlap;

    std::vector<std::string> outputs;
    json fits = json::array();
    std::int64_t steps = 0;

    for (std::size_t gi = 0; gi < gains.size(); ++gi) {
        auto cfg = rr.run;
        cfg.fb.gain_electronic = gains[gi];
        auto res = engine::run_ensemble(cfg, io.engine_kind, opt);
        auto spec = analyze_channels(res, cfg);
        steps += cfg.tb.total_steps() * opt.n_trajectories;

        const std::string tag = "g" + std::to_string(gi);
        write_spectrum_csv(spec.in_loop, io.path("spectrum_in_" + tag + ".csv"));
        outputs.push_back("spectrum_in_" + tag + ".csv");
        if (cfg.out_loop) {
            write_spectrum_csv(spec.out_loop,
                               io.path("spectrum_out_" + tag + ".csv"));
            outputs.push_back("spectrum_out_" + tag + ".csv");
        }

        const auto w = sideband_window(cfg);
        json entry;
        entry["gain"] = gains[gi];
        entry["floor_in"] = spec.in_loop.floor;
        entry["area_in_hz"] = spec.area_in;
        const int smooth = std::max(
            1, int(params::rad_to_hz(cfg.p.cool_rate) / 4.0 /
                   spec.in_loop.df()));
        auto metric = cfg.out_loop
                          ? spectra::squash_metric(spec.in_loop,
                                                   spec.out_loop, w.lo_hz,
                                                   w.hi_hz, smooth)
                          : spectra::SquashMetric{};
        if (cfg.out_loop) {
            entry["floor_out"] = spec.out_loop.floor;
            entry["area_out_hz"] = spec.area_out;
            entry["min_norm_in"] = metric.min_in;
            entry["min_norm_out"] = metric.min_out;
            entry["squashing"] = metric.squashing();
        }
        try {
            auto fit = spectra::fit_lorentzian(
                cfg.out_loop ? spec.out_loop : spec.in_loop, w.lo_hz, w.hi_hz);
            entry["fit_center_hz"] = fit.center_hz;
            entry["fit_fwhm_hz"] = fit.fwhm_hz;
            entry["fit_area_hz"] = fit.area;
            entry["fit_rmse"] = fit.fit_rmse;
        } catch (const fit_error& e) {
            entry["fit_error"] = e.what();
        }
        fits.push_back(entry);
    }

    std::ofstream fj(io.path("fits.json"));
    fj << fits.dump(2) << "\n";
    outputs.push_back("fits.json");

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    write_manifest(io, scenario, rr, outputs, wall, steps);
    return 0;
}

}  // namespace colddamp::cli
