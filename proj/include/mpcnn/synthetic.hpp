#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mpcnn/beat_detection.hpp"
#include "mpcnn/ecg_io.hpp"

namespace mpcnn {

// Deterministic test-signal generator: Gaussian P/QRS/T lobes at known
// sample positions. A-labeled minutes get cyclic RR modulation and cyclic
// beat-amplitude modulation; optional white noise at a target SNR.
// Everything is a pure function of the config.
struct SynthConfig {
    std::string record_id = "s00";
    std::size_t duration_minutes = 2;
    double base_bpm = 60.0;
    double bpm_modulation_amplitude = 20.0;   // applied in A-labeled minutes
    double bpm_modulation_period_s = 20.0;
    double amplitude_modulation = 0.25;       // per-beat scale swing in A minutes
    std::optional<double> noise_snr_db;       // absent = noiseless
    std::uint64_t seed = 1;
    // one label per minute; when empty, labels are drawn from the seed with
    // P(A) ~ 0.4
    std::vector<Label> minute_labels;
};

struct SynthRecord {
    EcgRecord record;
    BeatIndices truth;
    std::vector<Label> labels;
};

SynthRecord generate(const SynthConfig& cfg);

}  // namespace mpcnn
