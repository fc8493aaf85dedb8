#include "mpcnn/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "mpcnn/error.hpp"
#include "mpcnn/rng.hpp"

namespace mpcnn {

namespace {

constexpr double kFs = 100.0;
constexpr double kTwoPi = 2.0 * 3.14159265358979323846;

// lobe shape: amplitude and width in samples, offset relative to the R sample
struct Lobe {
    double offset;
    double amplitude;
    double sigma;
};

constexpr Lobe kPLobe{-15.0, 0.15, 2.5};
constexpr Lobe kRLobe{0.0, 1.0, 1.5};
constexpr Lobe kTLobe{25.0, 0.30, 5.0};

void add_lobe(std::vector<double>& samples, double center, const Lobe& lobe) {
    const double lo = center + lobe.offset - 5.0 * lobe.sigma;
    const double hi = center + lobe.offset + 5.0 * lobe.sigma;
    const std::ptrdiff_t begin = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::floor(lo)));
    const std::ptrdiff_t end =
        std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(samples.size()) - 1,
                                 static_cast<std::ptrdiff_t>(std::ceil(hi)));
    for (std::ptrdiff_t i = begin; i <= end; ++i) {
        const double d = (static_cast<double>(i) - (center + lobe.offset)) / lobe.sigma;
        samples[static_cast<std::size_t>(i)] += lobe.amplitude * std::exp(-0.5 * d * d);
    }
}

}  // namespace

SynthRecord generate(const SynthConfig& cfg) {
    if (cfg.duration_minutes < 1) throw Error("BadConfig", "duration must be >= 1 minute");
    if (cfg.base_bpm < 30.0 || cfg.base_bpm > 180.0) {
        throw Error("BadConfig", "base_bpm must lie in [30, 180]");
    }
    if (!cfg.minute_labels.empty() && cfg.minute_labels.size() != cfg.duration_minutes) {
        throw Error("BadConfig", "minute_labels must match duration");
    }

    Rng rng(cfg.seed);

    std::vector<Label> labels = cfg.minute_labels;
    if (labels.empty()) {
        labels.resize(cfg.duration_minutes);
        for (auto& l : labels) l = rng.uniform() < 0.4 ? Label::A : Label::N;
    }

    const double duration_s = static_cast<double>(cfg.duration_minutes) * 60.0;
    const std::size_t n = static_cast<std::size_t>(duration_s * kFs);

    SynthRecord out;
    out.labels = labels;
    out.record.record_id = cfg.record_id;
    out.record.sampling_rate = kFs;
    out.record.minute_labels = labels;
    out.record.samples.assign(n, 0.0);

    // beat times: constant RR in N minutes, sinusoidally modulated in A
    // minutes; each R center lands exactly on a sample. A minutes also swing
    // the whole beat's amplitude cyclically, the way respiration-coupled
    // events modulate the ECG envelope.
    std::vector<double> beat_scale;
    double t = 0.5;
    while (t < duration_s - 0.4) {
        const std::size_t minute =
            std::min(cfg.duration_minutes - 1, static_cast<std::size_t>(t / 60.0));
        const std::size_t r = static_cast<std::size_t>(std::llround(t * kFs));
        if (r >= n) break;
        out.truth.r_peaks.push_back(r);
        const double p_offset = -kPLobe.offset;
        if (r >= static_cast<std::size_t>(p_offset)) {
            out.truth.p_peaks.push_back(r - static_cast<std::size_t>(p_offset));
        }

        double bpm = cfg.base_bpm;
        double scale = 1.0;
        if (labels[minute] == Label::A) {
            const double phase = std::sin(kTwoPi * t / cfg.bpm_modulation_period_s);
            bpm += cfg.bpm_modulation_amplitude * phase;
            scale += cfg.amplitude_modulation * phase;
        }
        beat_scale.push_back(scale);
        t += 60.0 / bpm;
    }

    for (std::size_t b = 0; b < out.truth.r_peaks.size(); ++b) {
        const double center = static_cast<double>(out.truth.r_peaks[b]);
        Lobe p = kPLobe, r = kRLobe, tw = kTLobe;
        p.amplitude *= beat_scale[b];
        r.amplitude *= beat_scale[b];
        tw.amplitude *= beat_scale[b];
        add_lobe(out.record.samples, center, p);
        add_lobe(out.record.samples, center, r);
        add_lobe(out.record.samples, center, tw);
    }

    if (cfg.noise_snr_db) {
        double power = 0.0;
        for (double v : out.record.samples) power += v * v;
        power /= static_cast<double>(n);
        const double noise_power = power / std::pow(10.0, *cfg.noise_snr_db / 10.0);
        const double sigma = std::sqrt(noise_power);
        for (double& v : out.record.samples) v += sigma * rng.normal();
    }
    return out;
}

}  // namespace mpcnn
