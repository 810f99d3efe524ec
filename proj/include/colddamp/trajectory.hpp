#pragma once

// Sampled trajectory data and its on-disk formats: a CSV of the recorded
// channels plus a JSON sidecar carrying everything needed to reproduce the
// run bit for bit.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "colddamp/errors.hpp"

namespace colddamp::trajectory {

struct TrajectoryRecord {
    std::vector<double> times;
    std::vector<double> i_in;    // in-loop photocurrent
    std::vector<double> i_out;   // out-of-loop photocurrent (0 if disabled)
    std::vector<double> v_fb;    // feedback drive
    std::vector<double> z_mean;  // lab-frame conditional <z>
    std::vector<double> p_mean;  // lab-frame conditional <p>
    std::vector<double> n_mean;  // conditional <n>

    std::size_t size() const { return times.size(); }

    void reserve(std::size_t n) {
        times.reserve(n);
        i_in.reserve(n);
        i_out.reserve(n);
        v_fb.reserve(n);
        z_mean.reserve(n);
        p_mean.reserve(n);
        n_mean.reserve(n);
    }

    void push(double t, double iin, double iout, double vfb, double z,
              double p, double n) {
        times.push_back(t);
        i_in.push_back(iin);
        i_out.push_back(iout);
        v_fb.push_back(vfb);
        z_mean.push_back(z);
        p_mean.push_back(p);
        n_mean.push_back(n);
    }

    void check_consistent() const {
        const std::size_t n = times.size();
        if (i_in.size() != n || i_out.size() != n || v_fb.size() != n ||
            z_mean.size() != n || p_mean.size() != n || n_mean.size() != n)
            throw error("trajectory record columns differ in length");
    }
};

inline void write_csv(const TrajectoryRecord& rec, const std::string& path) {
    rec.check_consistent();
    std::ofstream out(path);
    if (!out) throw error("cannot open " + path);
    out << "t,I_in,I_out,V_fb,z_mean,p_mean,n_mean\n";
    char line[256];
    for (std::size_t k = 0; k < rec.size(); ++k) {
        std::snprintf(line, sizeof line,
                      "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      rec.times[k], rec.i_in[k], rec.i_out[k], rec.v_fb[k],
                      rec.z_mean[k], rec.p_mean[k], rec.n_mean[k]);
        out << line;
    }
}

}  // namespace colddamp::trajectory
