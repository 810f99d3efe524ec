#pragma once

// JSON run configuration: flat key-value document, unknown keys rejected,
// every key overridable through the COLDDAMP_<key> environment prefix.

#include <cstdlib>
#include <fstream>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "colddamp/circuit.hpp"
#include "colddamp/engine.hpp"
#include "colddamp/errors.hpp"
#include "colddamp/params.hpp"

namespace colddamp::config {

using nlohmann::json;

inline const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        // physical parameters (frequencies in plain Hz)
        "nu_hz", "gamma_cool_hz", "n_doppler", "gamma_mirror_hz", "eta",
        "epsilon",
        // run control
        "seed", "dt_sme_s", "dt_sample_s", "t_total_s", "ensemble",
        "n_initial", "fock_dim",
        // feedback electronics
        "fb_gain", "fb_phase_rad", "fb_bandwidth_hz", "fb_delay_samples",
        "fb_mode", "fb_calibration",
        // detection
        "split", "out_loop",
        // sweep / spectrum controls
        "gains", "psd_segment_len", "psd_overlap",
    };
    return keys;
}

inline void reject_unknown_keys(const json& j) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (known_keys().find(it.key()) == known_keys().end())
            throw config_error("unknown config key: " + it.key());
}

inline json load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw config_error("config parse error in " + path + ": " + e.what());
    }
    reject_unknown_keys(j);
    return j;
}

// COLDDAMP_<key>=value beats the file for any known key.
inline void apply_env_overrides(json& j) {
    for (const auto& key : known_keys()) {
        const std::string env_name = "COLDDAMP_" + key;
        const char* v = std::getenv(env_name.c_str());
        if (!v) continue;
        try {
            j[key] = json::parse(v);
        } catch (...) {
            j[key] = std::string(v);  // bare strings (e.g. fb_mode=filter)
        }
    }
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback) {
    auto it = j.find(key);
    if (it == j.end()) return fallback;
    return it->get<T>();
}

struct ResolvedRun {
    engine::RunConfig run;
    std::vector<double> gains;
    int ensemble = 200;
    std::size_t psd_segment_len = 4096;
    double psd_overlap = 0.5;
    json effective;  // the fully resolved document, for the manifest
};

inline ResolvedRun resolve(json j) {
    apply_env_overrides(j);
    reject_unknown_keys(j);

    params::PhysicalParams phys;
    phys.nu_hz = get_or(j, "nu_hz", 1.0e4);
    phys.gamma_cool_hz = get_or(j, "gamma_cool_hz", 100.0);
    phys.n_doppler = get_or(j, "n_doppler", 2.0);
    phys.gamma_mirror_hz = get_or(j, "gamma_mirror_hz", phys.gamma_cool_hz);
    phys.eta = get_or(j, "eta", 0.07);
    phys.epsilon = get_or(j, "epsilon", 0.01);

    ResolvedRun out;
    out.run.p = params::validate(phys);

    const double t_total =
        get_or(j, "t_total_s", 15.0 / out.run.p.cool_rate);
    const double dt_sme = get_or(j, "dt_sme_s", 0.0);
    const double dt_sample = get_or(j, "dt_sample_s", 0.0);
    params::LoopTimebase tb;
    tb.dt_sme = dt_sme > 0.0 ? dt_sme : 1.0 / (50.0 * out.run.p.trap_omega);
    tb.dt_sample = dt_sample > 0.0 ? dt_sample : 5.0 * tb.dt_sme;
    tb.t_total = t_total;
    params::check_timebase(tb, out.run.p, false);
    out.run.tb = tb;

    out.run.fb.gain_electronic = get_or(j, "fb_gain", 0.0);
    out.run.fb.phase = get_or(j, "fb_phase_rad", -M_PI / 2.0);
    out.run.fb.bandwidth_hz = get_or(j, "fb_bandwidth_hz", 0.0);
    out.run.fb.delay_samples = get_or(j, "fb_delay_samples", 1);
    out.run.fb.calibration = get_or(j, "fb_calibration", 1.0);
    const std::string mode = get_or<std::string>(j, "fb_mode", "filter");
    if (mode == "filter")
        out.run.fb.mode = circuit::FeedbackMode::filter;
    else if (mode == "ideal-demod")
        out.run.fb.mode = circuit::FeedbackMode::ideal_demod;
    else
        throw config_error("fb_mode must be 'filter' or 'ideal-demod'");

    out.run.split = get_or(j, "split", 0.5);
    out.run.out_loop = get_or(j, "out_loop", false);
    if (out.run.out_loop &&
        !(out.run.split > 0.0 && out.run.split < 1.0))
        throw config_error("split must lie in (0, 1) when out_loop is on");
    out.run.n_initial = get_or(j, "n_initial", -1.0);
    out.run.fock_dim = get_or(j, "fock_dim", 0);
    out.run.seed = get_or<std::uint64_t>(j, "seed", 1);

    out.ensemble = get_or(j, "ensemble", 200);
    out.gains = get_or(j, "gains", std::vector<double>{});
    out.psd_segment_len =
        get_or<std::size_t>(j, "psd_segment_len", 4096);
    out.psd_overlap = get_or(j, "psd_overlap", 0.5);

    // Echo the fully resolved values for the manifest.
    json eff = j;
    eff["nu_hz"] = phys.nu_hz;
    eff["gamma_cool_hz"] = phys.gamma_cool_hz;
    eff["n_doppler"] = phys.n_doppler;
    eff["gamma_mirror_hz"] = phys.gamma_mirror_hz;
    eff["eta"] = phys.eta;
    eff["epsilon"] = phys.epsilon;
    eff["dt_sme_s"] = tb.dt_sme;
    eff["dt_sample_s"] = tb.dt_sample;
    eff["t_total_s"] = tb.t_total;
    eff["fb_gain"] = out.run.fb.gain_electronic;
    eff["fb_phase_rad"] = out.run.fb.phase;
    eff["fb_bandwidth_hz"] = out.run.fb.bandwidth_hz;
    eff["fb_delay_samples"] = out.run.fb.delay_samples;
    eff["fb_calibration"] = out.run.fb.calibration;
    eff["fb_mode"] = mode;
    eff["split"] = out.run.split;
    eff["out_loop"] = out.run.out_loop;
    eff["n_initial"] = out.run.n_initial;
    eff["fock_dim"] = out.run.fock_dim;
    eff["seed"] = out.run.seed;
    eff["ensemble"] = out.ensemble;
    eff["psd_segment_len"] = out.psd_segment_len;
    eff["psd_overlap"] = out.psd_overlap;
    out.effective = std::move(eff);
    return out;
}

}  // namespace colddamp::config
