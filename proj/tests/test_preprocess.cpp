#include <doctest.h>

#include <cmath>
#include <vector>

#include "mpcnn/error.hpp"
#include "mpcnn/preprocess.hpp"
#include "mpcnn/rng.hpp"
#include "oracles.hpp"

using namespace mpcnn;

namespace {

std::vector<double> sine(double f_hz, double fs, std::size_t n) {
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
        s[i] = std::sin(2.0 * 3.14159265358979323846 * f_hz * static_cast<double>(i) / fs);
    }
    return s;
}

}  // namespace

TEST_CASE("band-pass design: symmetry, DC rejection, mid-band gain") {
    const FirFilter f = design_fir_bandpass(0.5, 45.0, 401, 100.0);
    REQUIRE(f.taps.size() == 401);

    SUBCASE("taps are exactly symmetric") {
        for (std::size_t i = 0; i < f.taps.size(); ++i) {
            CHECK(f.taps[i] == f.taps[f.taps.size() - 1 - i]);
        }
    }

    SUBCASE("tap sum is numerically zero") {
        double sum = 0.0;
        for (double t : f.taps) sum += t;
        CHECK(std::fabs(sum) < 1e-3);
    }

    SUBCASE("constant input maps to nearly zero") {
        const std::vector<double> c(5000, 1.0);
        const auto y = filter_zero_phase(c, f);
        double mx = 0.0;
        for (double v : y) mx = std::max(mx, std::fabs(v));
        CHECK(mx < 0.01);
    }

    SUBCASE("mid-band sinusoid passes at unit gain") {
        const auto x = sine(0.5 * (0.5 + 45.0), 100.0, 12000);
        const auto y = filter_zero_phase(x, f);
        const double gain = oracle::sine_gain(x, y);
        CHECK(gain > 0.95);
        CHECK(gain < 1.05);
    }
}

TEST_CASE("band-pass design rejects bad parameters") {
    CHECK_THROWS_WITH_AS(design_fir_bandpass(0.5, 45.0, 400, 100.0),
                         doctest::Contains("EvenTaps"), Error);
    CHECK_THROWS_WITH_AS(design_fir_bandpass(45.0, 0.5, 401, 100.0),
                         doctest::Contains("BadBand"), Error);
    CHECK_THROWS_WITH_AS(design_fir_bandpass(0.5, 60.0, 401, 100.0),
                         doctest::Contains("BadBand"), Error);
    CHECK_THROWS_WITH_AS(design_fir_bandpass(0.0, 45.0, 401, 100.0),
                         doctest::Contains("BadBand"), Error);
}

TEST_CASE("zero-phase filtering: passband, stopband, phase") {
    const FirFilter f = design_fir_bandpass(0.5, 45.0, 401, 100.0);

    SUBCASE("20 Hz passes within [0.90, 1.05]") {
        const auto x = sine(20.0, 100.0, 12000);
        const auto y = filter_zero_phase(x, f);
        const double gain = oracle::sine_gain(x, y);
        CHECK(gain >= 0.90);
        CHECK(gain <= 1.05);
    }

    SUBCASE("0.1 Hz drift attenuated by at least 20 dB") {
        const auto x = sine(0.1, 100.0, 12000);
        const auto y = filter_zero_phase(x, f);
        CHECK(oracle::sine_gain(x, y) < 0.1);
    }

    SUBCASE("symmetric pulse keeps its peak position") {
        std::vector<double> x(4000, 0.0);
        const std::size_t c = 2000;
        for (int d = -30; d <= 30; ++d) {
            x[c + d] = std::exp(-0.5 * (d / 8.0) * (d / 8.0));
        }
        const auto y = filter_zero_phase(x, f);
        std::size_t argmax = 0;
        for (std::size_t i = 1; i < y.size(); ++i) {
            if (y[i] > y[argmax]) argmax = i;
        }
        CHECK(std::llabs(static_cast<long long>(argmax) - static_cast<long long>(c)) <= 1);
    }

    SUBCASE("too-short input is rejected") {
        const std::vector<double> x(1203, 0.0);
        CHECK_THROWS_WITH_AS(filter_zero_phase(x, f), doctest::Contains("SignalTooShort"),
                             Error);
    }
}

TEST_CASE("filtering is linear") {
    const FirFilter f = design_fir_bandpass(0.5, 45.0, 101, 100.0);
    Rng rng(4);
    std::vector<double> x(2000), y(2000);
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    for (auto& v : y) v = rng.uniform(-1.0, 1.0);
    const double a = 1.7, b = -0.4;

    std::vector<double> combo(2000);
    for (std::size_t i = 0; i < combo.size(); ++i) combo[i] = a * x[i] + b * y[i];

    const auto fx = filter_zero_phase(x, f);
    const auto fy = filter_zero_phase(y, f);
    const auto fc = filter_zero_phase(combo, f);
    for (std::size_t i = 0; i < combo.size(); ++i) {
        const double expected = a * fx[i] + b * fy[i];
        CHECK(std::fabs(fc[i] - expected) <= 1e-9 * std::max(1.0, std::fabs(expected)));
    }
}

TEST_CASE("extract_windows honors span and boundaries") {
    EcgRecord rec;
    rec.record_id = "w";
    rec.sampling_rate = 100.0;
    rec.samples.assign(10 * 60 * 100, 0.0);
    rec.minute_labels.assign(10, Label::N);
    rec.minute_labels[3] = Label::A;

    SUBCASE("span 5 keeps minutes 2..7") {
        const auto windows = extract_windows(rec, 5);
        REQUIRE(windows.size() == 6);
        CHECK(windows.front().center_minute == 2);
        CHECK(windows.back().center_minute == 7);
        CHECK(windows[1].label == Label::A);
        for (const auto& w : windows) CHECK(w.samples.size() == 5 * 60 * 100);
    }

    SUBCASE("span 1 keeps every labeled minute") {
        CHECK(extract_windows(rec, 1).size() == 10);
    }

    SUBCASE("windows never overrun the signal") {
        rec.samples.resize(rec.samples.size() - 1);  // truncate the last minute
        const auto windows = extract_windows(rec, 5);
        CHECK(windows.back().center_minute == 6);
    }

    SUBCASE("window labels are a subset of the record labels") {
        const auto windows = extract_windows(rec, 5);
        std::size_t apnea = 0;
        for (const auto& w : windows) apnea += (w.label == Label::A) ? 1 : 0;
        CHECK(apnea == 1);
    }

    SUBCASE("even spans are rejected") {
        CHECK_THROWS_AS(extract_windows(rec, 4), Error);
    }
}

TEST_CASE("beat_rate_valid thresholds are inclusive") {
    CHECK(beat_rate_valid(300, 300.0, 20.0, 200.0));    // 60 bpm
    CHECK_FALSE(beat_rate_valid(50, 300.0, 20.0, 200.0));   // 10 bpm
    CHECK_FALSE(beat_rate_valid(1200, 300.0, 20.0, 200.0)); // 240 bpm
    CHECK(beat_rate_valid(100, 300.0, 20.0, 200.0));    // 20 bpm exactly
    CHECK(beat_rate_valid(1000, 300.0, 20.0, 200.0));   // 200 bpm exactly
}
