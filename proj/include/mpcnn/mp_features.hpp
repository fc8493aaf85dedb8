#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mpcnn/beat_detection.hpp"
#include "mpcnn/ecg_io.hpp"
#include "mpcnn/preprocess.hpp"

namespace mpcnn {

// k subsequences of length m copied verbatim from the source samples.
struct SubsequenceMatrix {
    std::size_t k = 0;
    std::size_t m = 0;
    std::vector<double> rows;                 // k * m, row-major
    std::vector<std::size_t> start_indices;   // k anchors, sorted

    double at(std::size_t i, std::size_t t) const { return rows[i * m + t]; }
};

// Symmetric k x k Euclidean distance matrix with zero diagonal.
struct DistanceMatrix {
    std::size_t k = 0;
    std::vector<double> d;  // k * k, row-major

    double at(std::size_t i, std::size_t j) const { return d[i * k + j]; }
};

struct ProfileReduction {
    std::vector<double> x_min;
    std::vector<double> x_max;
    std::vector<double> x_mean;
};

enum class Channel : std::uint8_t { MinDP = 0, MaxDP = 1, MeanDP = 2 };

constexpr std::uint8_t channel_bit(Channel c) {
    return static_cast<std::uint8_t>(1u << static_cast<std::uint8_t>(c));
}

const char* channel_name(Channel c);

// Fixed presentation order MinDP, MaxDP, MeanDP regardless of how the
// selection was written on the command line.
std::vector<Channel> parse_channels(const std::string& selection);
std::uint8_t channel_mask(const std::vector<Channel>& channels);
std::vector<Channel> channels_from_mask(std::uint8_t mask);

enum class StartFiducial : std::uint8_t { P = 0, Q = 1 };

struct WindowConfig {
    StartFiducial start_fiducial = StartFiducial::P;
    std::size_t m = 55;         // subsequence length, samples
    std::size_t q_offset = 5;   // Q := R - q_offset, samples
};

struct FeatureSegment {
    std::string record_id;
    std::uint32_t center_minute = 0;
    Label label = Label::N;
    std::uint32_t length = 0;        // L
    std::vector<Channel> channels;   // fixed order
    std::vector<double> values;      // channel-major: values[c * L + t], in [0, 1]

    double at(std::size_t c, std::size_t t) const { return values[c * length + t]; }
};

// ---- core operations ---------------------------------------------------------

// Anchors whose subsequence would run past the end are dropped. Throws
// TooFewSubsequences when fewer than two remain.
SubsequenceMatrix build_subsequences(const std::vector<double>& samples,
                                     const std::vector<std::size_t>& anchors,
                                     std::size_t m);

// Plain Euclidean distances on the raw subsequences (no z-normalization);
// computed for i <= j and mirrored.
DistanceMatrix distance_profile(const SubsequenceMatrix& a);

// Per-column min / max / mean excluding the diagonal.
ProfileReduction reduce_profiles(const DistanceMatrix& d);

// (v - min) / (max - min); an all-equal input maps to all zeros.
std::vector<double> minmax_normalize(const std::vector<double>& v);

// Natural cubic spline through knots (j/(k-1), v[j]) sampled at L uniform
// points on [0, 1]; k of 2 or 3 degrades to linear interpolation.
std::vector<double> cubic_spline_resample(const std::vector<double>& v, std::size_t length);

// Full per-window pipeline: anchors -> subsequences -> distances ->
// reductions -> normalize -> resample -> stack channels. Values are clamped
// to [0, 1] after resampling (the spline may overshoot its knots slightly).
FeatureSegment extract_features(const AnalysisWindow& window, const BeatIndices& beats,
                                const WindowConfig& wc,
                                const std::vector<Channel>& channels, std::size_t length);

// ---- feature file (.mpf) ------------------------------------------------------

// Little-endian layout: magic "MPF1"; u32 L; u8 C; u8 channel bitmask;
// u32 segment count; per segment an 8-byte space-padded record id, u32
// center minute, u8 label (0=N, 1=A) and L*C float32 values channel-major.
// A length-prefixed provenance text block (effective config) follows the
// last segment; readers that stop after the declared segments never see it.
void write_features(const std::string& path, const std::vector<FeatureSegment>& segments,
                    std::size_t length, const std::vector<Channel>& channels,
                    const std::string& provenance);

struct FeatureFile {
    std::uint32_t length = 0;
    std::vector<Channel> channels;
    std::vector<FeatureSegment> segments;
    std::string provenance;
};

FeatureFile read_features(const std::string& path);

}  // namespace mpcnn
