#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "colddamp/rng.hpp"
#include "colddamp/spectra.hpp"

using namespace colddamp;
using spectra::SpectrumEstimate;

namespace {

std::vector<double> white_noise(std::size_t n, double sigma,
                                std::uint64_t seed) {
    NormalStream g(seed, 0, 0);
    std::vector<double> x(n);
    for (auto& v : x) v = sigma * g();
    return x;
}

double mean(const std::vector<double>& v, std::size_t lo, std::size_t hi) {
    double acc = 0.0;
    for (std::size_t k = lo; k < hi; ++k) acc += v[k];
    return acc / double(hi - lo);
}

}  // namespace

TEST_CASE("white noise maps to its variance-implied flat level") {
    // Per-sample variance v reads as a flat one-sided level 2 v / fs.
    const double fs = 1.0e4;
    const double v = 2.3;
    auto x = white_noise(220000, std::sqrt(v), 11);
    auto s = spectra::welch_psd(x, fs, 2048, 0.5);
    CHECK(s.segments >= 100);
    const double level = mean(s.psd, 1, s.psd.size() - 1);
    CHECK(level == doctest::Approx(2.0 * v / fs).epsilon(0.02));
}

TEST_CASE("pure sinusoid at a bin center integrates to A^2/2") {
    const double fs = 8192.0;
    const std::size_t seg = 4096;
    const double amp = 0.7;
    const double f0 = 512.0;  // exact bin center
    std::vector<double> x(6 * seg);
    for (std::size_t k = 0; k < x.size(); ++k)
        x[k] = amp * std::sin(2.0 * M_PI * f0 * double(k) / fs);
    auto s = spectra::welch_psd(x, fs, seg, 0.5);
    const double df = s.df();
    double peak_power = 0.0;
    for (std::size_t k = 0; k < s.freq_hz.size(); ++k)
        if (std::abs(s.freq_hz[k] - f0) <= 6.0 * df) peak_power += s.psd[k] * df;
    CHECK(peak_power == doctest::Approx(amp * amp / 2.0).epsilon(0.01));
}

TEST_CASE("Parseval: sum(psd) df equals the series variance within 1%") {
    const double fs = 5.0e3;
    auto x = white_noise(1 << 17, 1.4, 3);
    for (std::size_t k = 0; k < x.size(); ++k)
        x[k] += 0.8 * std::sin(2.0 * M_PI * 700.0 * double(k) / fs);
    double var = 0.0, m = 0.0;
    for (double v : x) m += v;
    m /= double(x.size());
    for (double v : x) var += (v - m) * (v - m);
    var /= double(x.size());

    auto s = spectra::welch_psd(x, fs, 4096, 0.5);
    double total = 0.0;
    for (double p : s.psd) total += p * s.df();
    CHECK(total == doctest::Approx(var).epsilon(0.01));
}

TEST_CASE("welch preconditions") {
    auto x = white_noise(4096, 1.0, 5);
    CHECK_THROWS_AS(spectra::welch_psd(x, 1e3, 1000, 0.5), config_error);
    CHECK_THROWS_AS(spectra::welch_psd(x, 1e3, 1024, 0.95), config_error);
    CHECK_THROWS_AS(spectra::welch_psd(x, 1e3, 4096, 0.0), config_error);
}

TEST_CASE("estimator noise shrinks as 1/sqrt(segments)") {
    const double fs = 1.0e4;
    auto sigma_of = [&](std::size_t n) {
        auto x = white_noise(n, 1.0, 21);
        auto s = spectra::welch_psd(x, fs, 1024, 0.5);
        const double level = mean(s.psd, 1, s.psd.size() - 1);
        double acc = 0.0;
        for (std::size_t k = 1; k + 1 < s.psd.size(); ++k)
            acc += (s.psd[k] - level) * (s.psd[k] - level);
        return std::sqrt(acc / double(s.psd.size() - 2)) / level;
    };
    const double s1 = sigma_of(1 << 15);
    const double s2 = sigma_of(1 << 19);  // 16x the data -> 4x smaller sigma
    CHECK(s1 / s2 == doctest::Approx(4.0).epsilon(0.20));
}

TEST_CASE("normalization: flat spectrum reads one, floor from median") {
    auto x = white_noise(1 << 17, 2.0, 8);
    auto s = spectra::welch_psd(x, 1e4, 1024, 0.5);
    auto n = spectra::normalize_to_shotnoise(s, 2000.0, 2500.0);
    CHECK(n.floor == doctest::Approx(2.0 * 4.0 / 1e4).epsilon(0.03));
    const double m = mean(n.normalized, 1, n.normalized.size() - 1);
    CHECK(m == doctest::Approx(1.0).epsilon(0.02));
    CHECK(n.floor_sigma_rel > 0.0);
    CHECK(n.floor_sigma_rel < 0.2);

    SUBCASE("excessive exclusion is rejected") {
        CHECK_THROWS_AS(spectra::normalize_to_shotnoise(s, 100.0, 4900.0),
                        config_error);
    }
}

TEST_CASE("Lorentzian fit recovers synthetic parameters within 2%") {
    const double fs = 1.0e4;
    const std::size_t nbins = 2049;
    SpectrumEstimate s;
    s.sample_rate_hz = fs;
    s.freq_hz.resize(nbins);
    s.psd.assign(nbins, 0.0);
    s.normalized.resize(nbins);
    s.floor = 1.0;
    s.floor_sigma_rel = 0.01;
    const double f0 = 1200.0, fwhm = 80.0, amp = 5.0;
    Xoshiro256 gen(17);
    for (std::size_t k = 0; k < nbins; ++k) {
        s.freq_hz[k] = double(k) * fs / 2.0 / double(nbins - 1);
        const double d = s.freq_hz[k] - f0;
        const double hw = fwhm / 2.0;
        const double clean = 1.0 + amp * hw * hw / (d * d + hw * hw);
        s.normalized[k] = clean * (1.0 + 0.01 * (2.0 * gen.uniform() - 1.0));
        s.psd[k] = s.normalized[k];
    }
    auto fit = spectra::fit_lorentzian(s, f0 - 600.0, f0 + 600.0);
    CHECK(fit.center_hz == doctest::Approx(f0).epsilon(0.02));
    CHECK(fit.fwhm_hz == doctest::Approx(fwhm).epsilon(0.02));
    CHECK(fit.amplitude == doctest::Approx(amp).epsilon(0.02));
    // Analytic window integral of the excess: A * hw * 2 atan(window/hw)
    const double hw = fwhm / 2.0;
    const double expected_area = amp * hw * 2.0 * std::atan(600.0 / hw);
    CHECK(fit.area == doctest::Approx(expected_area).epsilon(0.02));
    CHECK(fit.fit_rmse < 0.05);

    SUBCASE("signed dip is recovered too") {
        SpectrumEstimate dip = s;
        for (std::size_t k = 0; k < nbins; ++k) {
            const double d = dip.freq_hz[k] - f0;
            const double hw2 = fwhm / 2.0;
            dip.normalized[k] = 1.0 - 0.4 * hw2 * hw2 / (d * d + hw2 * hw2);
        }
        auto f = spectra::fit_lorentzian(dip, f0 - 600.0, f0 + 600.0);
        CHECK(f.amplitude == doctest::Approx(-0.4).epsilon(0.02));
        CHECK(f.area < 0.0);
    }

    SUBCASE("narrow window is rejected") {
        CHECK_THROWS_AS(spectra::fit_lorentzian(s, f0 - 10.0, f0 + 10.0),
                        fit_error);
    }
}

TEST_CASE("squash metric separates dipped and flat channels") {
    SpectrumEstimate in, out;
    const std::size_t nbins = 512;
    for (auto* s : {&in, &out}) {
        s->freq_hz.resize(nbins);
        s->normalized.assign(nbins, 1.0);
        s->psd.assign(nbins, 1.0);
        s->floor = 1.0;
        s->floor_sigma_rel = 0.02;
        for (std::size_t k = 0; k < nbins; ++k) s->freq_hz[k] = double(k);
    }
    for (std::size_t k = 240; k < 260; ++k) in.normalized[k] = 0.7;

    auto m = spectra::squash_metric(in, out, 200.0, 300.0);
    CHECK(m.min_in == doctest::Approx(0.7));
    CHECK(m.min_out == doctest::Approx(1.0));
    CHECK(m.squashing());

    auto none = spectra::squash_metric(out, out, 200.0, 300.0);
    CHECK_FALSE(none.squashing());
}
