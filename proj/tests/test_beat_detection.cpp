#include <doctest.h>

#include <cmath>
#include <vector>

#include "mpcnn/beat_detection.hpp"
#include "mpcnn/error.hpp"
#include "mpcnn/rng.hpp"
#include "mpcnn/synthetic.hpp"
#include "oracles.hpp"

using namespace mpcnn;

using oracle::brute_force_p_peaks;

TEST_CASE("detect_r_peaks finds every beat of a clean synthetic train") {
    SynthConfig cfg;
    cfg.duration_minutes = 5;
    cfg.base_bpm = 60.0;
    cfg.minute_labels.assign(5, Label::N);
    const SynthRecord s = generate(cfg);

    const auto det = detect_r_peaks(s.record.samples, 100.0);
    REQUIRE(det.size() == s.truth.r_peaks.size());
    for (std::size_t i = 0; i < det.size(); ++i) {
        CHECK(std::llabs(static_cast<long long>(det[i]) -
                         static_cast<long long>(s.truth.r_peaks[i])) <= 2);
    }
}

TEST_CASE("detect_r_peaks edge cases") {
    SUBCASE("all-zero signal yields nothing") {
        const std::vector<double> zeros(3000, 0.0);
        CHECK(detect_r_peaks(zeros, 100.0).empty());
    }
    SUBCASE("short signals are rejected") {
        const std::vector<double> stub(150, 0.0);
        CHECK_THROWS_WITH_AS(detect_r_peaks(stub, 100.0),
                             doctest::Contains("SignalTooShort"), Error);
    }
}

TEST_CASE("detect_r_peaks is invariant to positive affine rescaling") {
    SynthConfig cfg;
    cfg.duration_minutes = 3;
    cfg.base_bpm = 72.0;
    cfg.noise_snr_db = 15.0;
    cfg.seed = 21;
    const SynthRecord s = generate(cfg);

    const auto base = detect_r_peaks(s.record.samples, 100.0);
    REQUIRE(!base.empty());

    std::vector<double> scaled = s.record.samples;
    for (double& v : scaled) v = 10.0 * v + 3.5;
    CHECK(detect_r_peaks(scaled, 100.0) == base);
}

TEST_CASE("detector refractory spacing holds") {
    SynthConfig cfg;
    cfg.duration_minutes = 4;
    cfg.base_bpm = 90.0;
    cfg.noise_snr_db = 10.0;
    cfg.seed = 31;
    const SynthRecord s = generate(cfg);
    const auto det = detect_r_peaks(s.record.samples, 100.0);
    for (std::size_t i = 1; i < det.size(); ++i) {
        CHECK(det[i] - det[i - 1] >= 20);  // 0.2 s at 100 Hz
    }
}

TEST_CASE("find_p_peaks follows the pre-R window rule") {
    SUBCASE("single bump at r-10") {
        std::vector<double> signal(200, 0.0);
        signal[90] = 1.0;
        const auto p = find_p_peaks(signal, {100}, 20, 5);
        REQUIRE(p.size() == 1);
        CHECK(p[0] == 90);
    }

    SUBCASE("degenerate window near the start emits nothing") {
        std::vector<double> signal(50, 1.0);
        CHECK(find_p_peaks(signal, {3}, 20, 5).empty());
    }

    SUBCASE("ties resolve toward the lowest index") {
        std::vector<double> signal(100, 0.0);
        signal[85] = 2.0;
        signal[88] = 2.0;
        const auto p = find_p_peaks(signal, {100}, 20, 5);
        REQUIRE(p.size() == 1);
        CHECK(p[0] == 85);
    }

    SUBCASE("w1 <= w2 is rejected") {
        std::vector<double> signal(100, 0.0);
        CHECK_THROWS_AS(find_p_peaks(signal, {50}, 5, 5), Error);
    }
}

TEST_CASE("find_p_peaks equals brute force on random signals") {
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 60 + rng.bounded(300);
        std::vector<double> signal(n);
        for (double& v : signal) v = rng.uniform(-1.0, 1.0);
        std::vector<std::size_t> r_peaks;
        std::size_t pos = rng.bounded(30);
        while (pos < n) {
            r_peaks.push_back(pos);
            pos += 20 + rng.bounded(40);
        }
        const std::size_t w1 = 10 + rng.bounded(20);
        const std::size_t w2 = rng.bounded(w1);
        CHECK(find_p_peaks(signal, r_peaks, w1, w2) ==
              brute_force_p_peaks(signal, r_peaks, w1, w2));
    }
}

TEST_CASE("find_p_peaks is invariant to positive affine rescaling") {
    Rng rng(17);
    std::vector<double> signal(400);
    for (double& v : signal) v = rng.uniform(-1.0, 1.0);
    const std::vector<std::size_t> r_peaks = {40, 90, 160, 250, 330};
    const auto base = find_p_peaks(signal, r_peaks, 20, 5);
    for (double& v : signal) v = 4.0 * v - 2.0;
    CHECK(find_p_peaks(signal, r_peaks, 20, 5) == base);
}

TEST_CASE("p-peak count equals the number of usable windows") {
    Rng rng(13);
    std::vector<double> signal(500);
    for (double& v : signal) v = rng.uniform(-1.0, 1.0);
    const std::vector<std::size_t> r_peaks = {3, 10, 40, 80, 120, 499};
    const auto p = find_p_peaks(signal, r_peaks, 20, 5);
    std::size_t usable = 0;
    for (std::size_t r : r_peaks) {
        const std::size_t d1 = r > 20 ? r - 20 : 0;
        const std::size_t d2 = r > 5 ? r - 5 : 0;
        usable += (d1 < d2) ? 1 : 0;
    }
    CHECK(p.size() == usable);
}
