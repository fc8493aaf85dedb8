#pragma once

#include <cstddef>
#include <vector>

namespace mpcnn {

struct BeatIndices {
    std::vector<std::size_t> r_peaks;  // strictly increasing
    std::vector<std::size_t> p_peaks;  // one per R peak with a usable window
};

// Tunables of the R-peak detector. Defaults follow the published description
// of the Hamilton detector: 8-16 Hz emphasis band, 80 ms envelope, running
// 8-peak QRS/noise histories with threshold coefficient 0.45, 200 ms
// refractory and a search-back pass at 1.5x the mean RR with half threshold.
struct RPeakConfig {
    double emphasis_low_hz = 8.0;
    double emphasis_high_hz = 16.0;
    std::size_t emphasis_taps = 51;
    double envelope_ms = 80.0;
    double threshold_coeff = 0.45;
    std::size_t history = 8;
    double refractory_ms = 200.0;
    double searchback_rr_factor = 1.5;
    double searchback_threshold_factor = 0.5;
    double snap_ms = 40.0;
};

// Detections are snapped to the local signal maximum within +-snap_ms. The
// detector is invariant to positive affine rescaling of the input: the mean
// is removed up front and every threshold is relative.
std::vector<std::size_t> detect_r_peaks(const std::vector<double>& signal, double fs,
                                        const RPeakConfig& cfg = {});

// For each R peak r, the pre-R window is [max(0, r-w1), max(0, r-w2)); when
// non-empty, the argmax of the signal over that window (ties toward the
// lowest index) is emitted as the P peak.
std::vector<std::size_t> find_p_peaks(const std::vector<double>& signal,
                                      const std::vector<std::size_t>& r_peaks,
                                      std::size_t w1 = 20, std::size_t w2 = 5);

}  // namespace mpcnn
