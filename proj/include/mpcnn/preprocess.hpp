#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mpcnn/ecg_io.hpp"

namespace mpcnn {

// Linear-phase band-pass built from a Hamming-windowed ideal response.
// Tap count is odd so the group delay is an integer number of samples.
struct FirFilter {
    std::vector<double> taps;
    double low_cut_hz = 0.0;
    double high_cut_hz = 0.0;
};

// Gain is normalized to 1 at the band midpoint and the tap sum is zeroed so
// a constant input maps to (numerically) zero output.
FirFilter design_fir_bandpass(double low_cut_hz, double high_cut_hz,
                              std::size_t num_taps, double fs);

// Forward pass then time-reversed pass; output length equals input length.
// Edges are reflect-padded by num_taps samples before filtering.
std::vector<double> filter_zero_phase(const std::vector<double>& signal,
                                      const FirFilter& filter);

// Single centered pass (the taps are symmetric, so this is also zero phase).
// Used where the squared magnitude response of the double pass is unwanted.
std::vector<double> filter_single_pass(const std::vector<double>& signal,
                                       const FirFilter& filter);

struct AnalysisWindow {
    std::string record_id;
    std::size_t center_minute = 0;
    std::vector<double> samples;  // filtered mV, span_minutes * 60 * fs samples
    Label label = Label::N;
    double fs = 0.0;
};

// One window per labeled minute whose full span fits inside the signal;
// boundary minutes are dropped, never padded.
std::vector<AnalysisWindow> extract_windows(const EcgRecord& record,
                                            std::size_t span_minutes);

bool beat_rate_valid(std::size_t r_peak_count, double window_duration_s,
                     double min_bpm, double max_bpm);

}  // namespace mpcnn
