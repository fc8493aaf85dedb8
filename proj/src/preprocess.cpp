#include "mpcnn/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "mpcnn/error.hpp"

namespace mpcnn {

namespace {

constexpr double kPi = 3.14159265358979323846;

double sinc(double x) {
    if (x == 0.0) return 1.0;
    return std::sin(kPi * x) / (kPi * x);
}

// Reflect-pad by pad samples on each side (mirror, boundary sample not
// repeated), then convolve centered with the symmetric taps.
std::vector<double> convolve_padded(const std::vector<double>& x,
                                    const std::vector<double>& taps) {
    const std::size_t n = x.size();
    const std::size_t pad = taps.size();
    const std::size_t half = (taps.size() - 1) / 2;

    std::vector<double> ext(n + 2 * pad);
    for (std::size_t i = 0; i < pad; ++i) {
        const std::size_t src = std::min(pad - i, n - 1);
        ext[i] = x[src];
    }
    std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(pad));
    for (std::size_t i = 0; i < pad; ++i) {
        const std::size_t src = (i + 2 <= n) ? n - 2 - i : 0;
        ext[pad + n + i] = x[src];
    }

    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t base = pad + i + half;  // index of taps[0]'s partner
        double acc = 0.0;
        for (std::size_t k = 0; k < taps.size(); ++k) {
            acc += taps[k] * ext[base - k];
        }
        out[i] = acc;
    }
    return out;
}

}  // namespace

FirFilter design_fir_bandpass(double low_cut_hz, double high_cut_hz,
                              std::size_t num_taps, double fs) {
    if (num_taps % 2 == 0) {
        throw Error("EvenTaps", "tap count must be odd, got " + std::to_string(num_taps));
    }
    if (num_taps < 3) throw Error("EvenTaps", "tap count must be >= 3");
    if (!(low_cut_hz > 0.0) || !(low_cut_hz < high_cut_hz) || !(high_cut_hz < fs / 2.0)) {
        throw Error("BadBand", "need 0 < low < high < fs/2");
    }

    const double fl = low_cut_hz / fs;
    const double fh = high_cut_hz / fs;
    const std::size_t n = num_taps;
    const double mid = static_cast<double>(n - 1) / 2.0;

    // compute the left half and mirror it so symmetry is exact, not merely
    // up to rounding of the window term
    std::vector<double> taps(n);
    for (std::size_t i = 0; i <= (n - 1) / 2; ++i) {
        const double t = static_cast<double>(i) - mid;
        const double ideal = 2.0 * fh * sinc(2.0 * fh * t) - 2.0 * fl * sinc(2.0 * fl * t);
        const double window = 0.54 - 0.46 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                                     static_cast<double>(n - 1));
        taps[i] = ideal * window;
        taps[n - 1 - i] = taps[i];
    }

    // unit gain at the band midpoint (symmetric taps: response is real)
    const double f_mid = 0.5 * (low_cut_hz + high_cut_hz) / fs;
    double gain_mid = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        gain_mid += taps[i] * std::cos(2.0 * kPi * f_mid * (static_cast<double>(i) - mid));
    }
    for (double& t : taps) t /= gain_mid;

    // zero the DC response exactly; the constant shift is ~1e-5 of the
    // mid-band gain and leaves the passband untouched
    double sum = 0.0;
    for (double t : taps) sum += t;
    const double shift = sum / static_cast<double>(n);
    for (double& t : taps) t -= shift;

    FirFilter f;
    f.taps = std::move(taps);
    f.low_cut_hz = low_cut_hz;
    f.high_cut_hz = high_cut_hz;
    return f;
}

std::vector<double> filter_zero_phase(const std::vector<double>& signal,
                                      const FirFilter& filter) {
    if (signal.size() <= 3 * filter.taps.size()) {
        throw Error("SignalTooShort", "need more than 3x tap count samples");
    }
    // taps are symmetric, so the centered pass equals a causal pass with the
    // delay removed; two passes give forward-backward (zero net phase)
    std::vector<double> once = convolve_padded(signal, filter.taps);
    return convolve_padded(once, filter.taps);
}

std::vector<double> filter_single_pass(const std::vector<double>& signal,
                                       const FirFilter& filter) {
    return convolve_padded(signal, filter.taps);
}

std::vector<AnalysisWindow> extract_windows(const EcgRecord& record,
                                            std::size_t span_minutes) {
    if (span_minutes % 2 == 0 || span_minutes == 0) {
        throw Error("BadSpan", "span_minutes must be odd");
    }
    const std::size_t spm =
        static_cast<std::size_t>(std::llround(60.0 * record.sampling_rate));
    const std::size_t half = (span_minutes - 1) / 2;

    std::vector<AnalysisWindow> windows;
    for (std::size_t i = 0; i < record.minute_labels.size(); ++i) {
        if (i < half) continue;
        const std::size_t end_minute = i + half + 1;
        if (end_minute * spm > record.samples.size()) continue;
        AnalysisWindow w;
        w.record_id = record.record_id;
        w.center_minute = i;
        w.label = record.minute_labels[i];
        w.fs = record.sampling_rate;
        const std::size_t begin = (i - half) * spm;
        w.samples.assign(record.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                         record.samples.begin() +
                             static_cast<std::ptrdiff_t>(end_minute * spm));
        windows.push_back(std::move(w));
    }
    return windows;
}

bool beat_rate_valid(std::size_t r_peak_count, double window_duration_s,
                     double min_bpm, double max_bpm) {
    const double bpm = 60.0 * static_cast<double>(r_peak_count) / window_duration_s;
    return bpm >= min_bpm && bpm <= max_bpm;
}

}  // namespace mpcnn
