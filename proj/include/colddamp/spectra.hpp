#pragma once

// Power spectral density estimation and sideband analysis for simulated
// photocurrents: Welch-averaged periodograms (Hann window), shot-noise
// normalization, signed-Lorentzian sideband fits, and the squashing metric.
//
// Convention: spectra are one-sided. A white series of per-sample variance
// sigma^2 fs / 2 reads as a flat level sigma^2, and sum(psd) * df recovers
// the series variance. The shot-noise term sqrt(gamma/2) xi of the
// photocurrent therefore shows a floor at gamma (one-sided), twice its
// two-sided density gamma/2.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "colddamp/errors.hpp"

namespace colddamp::spectra {

// In-place iterative radix-2 FFT; length must be a power of two.
inline void fft_pow2(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw config_error("fft: length must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * M_PI / double(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                const auto u = a[i + j];
                const auto v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

struct SpectrumEstimate {
    std::vector<double> freq_hz;     // strictly increasing, 0 .. fs/2
    std::vector<double> psd;         // one-sided
    std::vector<double> normalized;  // psd / floor once normalized
    double floor = 0.0;              // fitted shot-noise level
    double floor_sigma_rel = 0.0;    // per-bin relative estimator noise
    int segments = 0;
    double sample_rate_hz = 0.0;

    double df() const { return freq_hz.size() > 1 ? freq_hz[1] - freq_hz[0] : 0.0; }
};

inline SpectrumEstimate welch_psd(const std::vector<double>& series,
                                  double sample_rate_hz,
                                  std::size_t segment_len, double overlap) {
    if (segment_len < 8 || (segment_len & (segment_len - 1)) != 0)
        throw config_error("welch_psd: segment_len must be a power of two");
    if (!(overlap >= 0.0 && overlap <= 0.9))
        throw config_error("welch_psd: overlap must lie in [0, 0.9]");
    const std::size_t hop = std::max<std::size_t>(
        1, std::size_t(std::lround(double(segment_len) * (1.0 - overlap))));
    if (series.size() < segment_len + 3 * hop)
        throw config_error("welch_psd: series shorter than 4 segments");

    // Periodic Hann window.
    std::vector<double> window(segment_len);
    double wsumsq = 0.0;
    for (std::size_t j = 0; j < segment_len; ++j) {
        window[j] = 0.5 * (1.0 - std::cos(2.0 * M_PI * double(j) /
                                          double(segment_len)));
        wsumsq += window[j] * window[j];
    }

    SpectrumEstimate out;
    out.sample_rate_hz = sample_rate_hz;
    const std::size_t nbins = segment_len / 2 + 1;
    out.psd.assign(nbins, 0.0);
    out.freq_hz.resize(nbins);
    for (std::size_t k = 0; k < nbins; ++k)
        out.freq_hz[k] = double(k) * sample_rate_hz / double(segment_len);

    std::vector<std::complex<double>> buf(segment_len);
    for (std::size_t start = 0; start + segment_len <= series.size();
         start += hop) {
        for (std::size_t j = 0; j < segment_len; ++j)
            buf[j] = series[start + j] * window[j];
        fft_pow2(buf);
        const double scale = 1.0 / (sample_rate_hz * wsumsq);
        for (std::size_t k = 0; k < nbins; ++k) {
            const double mag2 = std::norm(buf[k]);
            const double onesided = (k == 0 || k == nbins - 1) ? 1.0 : 2.0;
            out.psd[k] += onesided * mag2 * scale;
        }
        ++out.segments;
    }
    for (auto& v : out.psd) v /= double(out.segments);
    return out;
}

// Floor = median PSD outside [exclude_lo, exclude_hi]; normalized = psd/floor.
inline SpectrumEstimate normalize_to_shotnoise(const SpectrumEstimate& s,
                                               double exclude_lo_hz,
                                               double exclude_hi_hz) {
    std::vector<double> outside;
    outside.reserve(s.psd.size());
    for (std::size_t k = 1; k + 1 < s.psd.size(); ++k) {
        const double f = s.freq_hz[k];
        if (f < exclude_lo_hz || f > exclude_hi_hz) outside.push_back(s.psd[k]);
    }
    if (outside.size() * 4 < s.psd.size())
        throw config_error(
            "normalize_to_shotnoise: exclusion leaves < 25% of bins");

    auto mid = outside.begin() + outside.size() / 2;
    std::nth_element(outside.begin(), mid, outside.end());
    const double floor = *mid;
    if (!(floor > 0.0))
        throw config_error("normalize_to_shotnoise: nonpositive floor");

    SpectrumEstimate out = s;
    out.floor = floor;
    out.normalized.resize(s.psd.size());
    for (std::size_t k = 0; k < s.psd.size(); ++k)
        out.normalized[k] = s.psd[k] / floor;

    // Per-bin estimator noise, measured from the out-of-band bins.
    double acc = 0.0;
    std::size_t cnt = 0;
    for (std::size_t k = 1; k + 1 < s.psd.size(); ++k) {
        const double f = s.freq_hz[k];
        if (f < exclude_lo_hz || f > exclude_hi_hz) {
            const double d = s.psd[k] / floor - 1.0;
            acc += d * d;
            ++cnt;
        }
    }
    out.floor_sigma_rel = std::sqrt(acc / double(cnt));
    return out;
}

struct SidebandFit {
    double center_hz = 0.0;
    double fwhm_hz = 0.0;
    double area = 0.0;    // integral of (normalized - 1) over the window, Hz
    double offset = 0.0;
    double amplitude = 0.0;  // signed peak height above the offset
    double fit_rmse = 0.0;
    int iterations = 0;
};

// Least-squares fit of offset + A (w/2)^2 / ((f-f0)^2 + (w/2)^2) to the
// normalized spectrum inside a window. Signed A accommodates squashed
// (dip) lineshapes.
inline SidebandFit fit_lorentzian(const SpectrumEstimate& s,
                                  double window_lo_hz, double window_hi_hz) {
    if (s.normalized.empty())
        throw fit_error("fit_lorentzian: spectrum not normalized");

    std::vector<double> f, y;
    for (std::size_t k = 0; k < s.freq_hz.size(); ++k) {
        if (s.freq_hz[k] >= window_lo_hz && s.freq_hz[k] <= window_hi_hz) {
            f.push_back(s.freq_hz[k]);
            y.push_back(s.normalized[k]);
        }
    }
    if (f.size() < 20)
        throw fit_error("fit_lorentzian: window holds fewer than 20 bins");

    // Initial guess: strongest signed excursion from 1.
    std::size_t kpk = 0;
    for (std::size_t k = 0; k < y.size(); ++k)
        if (std::abs(y[k] - 1.0) > std::abs(y[kpk] - 1.0)) kpk = k;
    double f0 = f[kpk];
    double amp = y[kpk] - 1.0;
    double offset = 1.0;
    // Half-max crossing scan for a width guess.
    double hw = (window_hi_hz - window_lo_hz) / 10.0;
    {
        const double half = offset + 0.5 * amp;
        std::size_t lo = kpk, hi = kpk;
        while (lo > 0 && (amp > 0 ? y[lo] > half : y[lo] < half)) --lo;
        while (hi + 1 < y.size() && (amp > 0 ? y[hi] > half : y[hi] < half))
            ++hi;
        if (hi > lo) hw = std::max(0.5 * (f[hi] - f[lo]), f[1] - f[0]);
    }

    // Levenberg-Marquardt on theta = (f0, hw, A, offset).
    double theta[4] = {f0, hw, amp, offset};
    double lambda = 1e-3;
    auto chi2 = [&](const double* th) {
        double acc = 0.0;
        for (std::size_t k = 0; k < f.size(); ++k) {
            const double d = f[k] - th[0];
            const double den = d * d + th[1] * th[1];
            const double r = y[k] - (th[3] + th[2] * th[1] * th[1] / den);
            acc += r * r;
        }
        return acc;
    };
    double cur = chi2(theta);
    int it = 0;
    for (; it < 200; ++it) {
        double jtj[4][4] = {};
        double jtr[4] = {};
        for (std::size_t k = 0; k < f.size(); ++k) {
            const double d = f[k] - theta[0];
            const double h = theta[1];
            const double den = d * d + h * h;
            const double shape = h * h / den;
            const double model = theta[3] + theta[2] * shape;
            const double r = y[k] - model;
            const double jac[4] = {
                theta[2] * h * h * 2.0 * d / (den * den),
                theta[2] * 2.0 * h * d * d / (den * den),
                shape,
                1.0,
            };
            for (int i = 0; i < 4; ++i) {
                jtr[i] += jac[i] * r;
                for (int j = 0; j < 4; ++j) jtj[i][j] += jac[i] * jac[j];
            }
        }
        // Solve (JtJ + lambda diag) delta = Jtr by Gaussian elimination.
        double m[4][5];
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) m[i][j] = jtj[i][j];
            m[i][i] *= 1.0 + lambda;
            m[i][4] = jtr[i];
        }
        bool singular = false;
        for (int col = 0; col < 4; ++col) {
            int piv = col;
            for (int r2 = col + 1; r2 < 4; ++r2)
                if (std::abs(m[r2][col]) > std::abs(m[piv][col])) piv = r2;
            if (std::abs(m[piv][col]) < 1e-300) {
                singular = true;
                break;
            }
            std::swap(m[piv], m[col]);
            for (int r2 = col + 1; r2 < 4; ++r2) {
                const double fac = m[r2][col] / m[col][col];
                for (int c2 = col; c2 < 5; ++c2) m[r2][c2] -= fac * m[col][c2];
            }
        }
        if (singular) {
            lambda *= 10.0;
            continue;
        }
        double delta[4];
        for (int i = 3; i >= 0; --i) {
            double acc = m[i][4];
            for (int j = i + 1; j < 4; ++j) acc -= m[i][j] * delta[j];
            delta[i] = acc / m[i][i];
        }
        double trial[4] = {theta[0] + delta[0], theta[1] + delta[1],
                           theta[2] + delta[2], theta[3] + delta[3]};
        trial[1] = std::abs(trial[1]);
        const double next = chi2(trial);
        if (next < cur) {
            const double rel =
                std::abs(delta[0]) / std::max(std::abs(theta[0]), 1.0) +
                std::abs(delta[1]) / std::max(std::abs(theta[1]), 1e-12);
            for (int i = 0; i < 4; ++i) theta[i] = trial[i];
            cur = next;
            lambda = std::max(lambda * 0.3, 1e-12);
            if (rel < 1e-12) break;
        } else {
            lambda *= 10.0;
            if (lambda > 1e12) break;
        }
    }
    if (!(std::isfinite(theta[0]) && std::isfinite(theta[1])) ||
        theta[1] <= 0.0)
        throw fit_error("fit-failed: non-finite Lorentzian parameters after " +
                        std::to_string(it) + " iterations");

    SidebandFit fit;
    fit.center_hz = theta[0];
    fit.fwhm_hz = 2.0 * theta[1];
    fit.amplitude = theta[2];
    fit.offset = theta[3];
    fit.iterations = it;
    fit.fit_rmse = std::sqrt(cur / double(f.size()));

    const double df = f.size() > 1 ? f[1] - f[0] : 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) fit.area += (y[k] - 1.0) * df;
    return fit;
}

struct SquashMetric {
    double min_in = 0.0;
    double min_out = 0.0;
    double sigma_in = 0.0;   // smoothed-bin estimator noise, in-loop
    double sigma_out = 0.0;
    // Noise-only reference: the same smoothed-min statistic taken over an
    // out-of-band window of equal width. The minimum of many noisy bins
    // sits a few sigma below one even without any physics, so dips are
    // judged against this null level rather than against 1 itself.
    double null_in = 1.0;
    double null_out = 1.0;

    bool in_loop_squashed() const {
        return min_in < null_in - 3.0 * sigma_in;
    }
    bool out_loop_clean() const {
        return min_out >= null_out - 3.0 * sigma_out;
    }
    bool squashing() const { return in_loop_squashed() && out_loop_clean(); }
};

// Minimum normalized PSD within the sideband window for each channel.
// `smooth_bins` applies a boxcar over the dip scale before taking the
// minimum: the raw minimum of a few thousand noisy bins sits several sigma
// below its mean from extreme-value statistics alone, which would read as
// spurious squashing. The reported sigmas scale down accordingly.
inline SquashMetric squash_metric(const SpectrumEstimate& s_in,
                                  const SpectrumEstimate& s_out,
                                  double window_lo_hz, double window_hi_hz,
                                  int smooth_bins = 1) {
    if (s_in.normalized.empty() || s_out.normalized.empty())
        throw config_error("squash_metric: spectra must be normalized");
    if (smooth_bins < 1) smooth_bins = 1;

    auto window_min = [&](const SpectrumEstimate& s, double lo, double hi) {
        std::vector<double> vals;
        for (std::size_t k = 0; k < s.freq_hz.size(); ++k)
            if (s.freq_hz[k] >= lo && s.freq_hz[k] <= hi)
                vals.push_back(s.normalized[k]);
        if (vals.empty()) return std::numeric_limits<double>::infinity();
        const int w = std::min<int>(smooth_bins, int(vals.size()));
        double best = std::numeric_limits<double>::infinity();
        double acc = 0.0;
        for (int k = 0; k < int(vals.size()); ++k) {
            acc += vals[std::size_t(k)];
            if (k >= w) acc -= vals[std::size_t(k - w)];
            if (k >= w - 1) best = std::min(best, acc / double(w));
        }
        return best;
    };

    // Null window of the same width placed above the sideband (or below if
    // the spectrum ends too soon).
    const double width = window_hi_hz - window_lo_hz;
    double null_lo = window_hi_hz + width;
    double null_hi = null_lo + width;
    if (!s_in.freq_hz.empty() && null_hi > s_in.freq_hz.back()) {
        null_hi = window_lo_hz - width;
        null_lo = null_hi - width;
    }

    SquashMetric m;
    m.min_in = window_min(s_in, window_lo_hz, window_hi_hz);
    m.min_out = window_min(s_out, window_lo_hz, window_hi_hz);
    m.null_in = window_min(s_in, null_lo, null_hi);
    m.null_out = window_min(s_out, null_lo, null_hi);
    const double shrink = std::sqrt(double(smooth_bins));
    m.sigma_in = s_in.floor_sigma_rel / shrink;
    m.sigma_out = s_out.floor_sigma_rel / shrink;
    return m;
}

}  // namespace colddamp::spectra
