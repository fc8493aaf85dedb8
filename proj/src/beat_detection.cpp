#include "mpcnn/beat_detection.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "mpcnn/error.hpp"
#include "mpcnn/preprocess.hpp"

namespace mpcnn {

namespace {

struct EnvelopePeak {
    std::size_t index = 0;
    double height = 0.0;
};

double mean_of(const std::deque<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void push_history(std::deque<double>& hist, double value, std::size_t cap) {
    hist.push_back(value);
    while (hist.size() > cap) hist.pop_front();
}

}  // namespace

std::vector<std::size_t> detect_r_peaks(const std::vector<double>& signal, double fs,
                                        const RPeakConfig& cfg) {
    if (static_cast<double>(signal.size()) < 2.0 * fs) {
        throw Error("SignalTooShort", "detector needs at least 2 s of samples");
    }
    const std::size_t n = signal.size();

    // remove the mean so an additive offset cannot leak through the filter's
    // edge transients; everything downstream scales linearly with the input
    double mean = 0.0;
    for (double v : signal) mean += v;
    mean /= static_cast<double>(n);
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = signal[i] - mean;

    // QRS emphasis band
    const FirFilter emphasis = design_fir_bandpass(
        cfg.emphasis_low_hz, cfg.emphasis_high_hz,
        cfg.emphasis_taps | 1, fs);
    std::vector<double> band = filter_single_pass(x, emphasis);

    // absolute first difference
    std::vector<double> diff(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) diff[i] = std::fabs(band[i] - band[i - 1]);

    // centered moving-average envelope
    const std::size_t win =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.envelope_ms * fs / 1000.0)));
    std::vector<double> env(n, 0.0);
    {
        const std::size_t half = win / 2;
        double acc = 0.0;
        std::size_t lo = 0, hi = 0;  // current [lo, hi) sum window
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t want_lo = i > half ? i - half : 0;
            const std::size_t want_hi = std::min(n, i + (win - half));
            while (hi < want_hi) acc += diff[hi++];
            while (lo < want_lo) acc -= diff[lo++];
            env[i] = acc / static_cast<double>(hi - lo);
        }
    }

    // local maxima of the envelope
    std::vector<EnvelopePeak> peaks;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (env[i] > env[i - 1] && env[i] >= env[i + 1] && env[i] > 0.0) {
            peaks.push_back({i, env[i]});
        }
    }
    if (peaks.empty()) return {};

    const std::size_t refractory =
        static_cast<std::size_t>(std::llround(cfg.refractory_ms * fs / 1000.0));
    const std::size_t snap =
        static_cast<std::size_t>(std::llround(cfg.snap_ms * fs / 1000.0));

    // bootstrap the running estimates from the first two seconds
    std::deque<double> qrs_hist, noise_hist;
    {
        const std::size_t boot = std::min<std::size_t>(n, static_cast<std::size_t>(2.0 * fs));
        double peak0 = 0.0, sum = 0.0;
        for (std::size_t i = 0; i < boot; ++i) {
            peak0 = std::max(peak0, env[i]);
            sum += env[i];
        }
        qrs_hist.push_back(peak0);
        noise_hist.push_back(sum / static_cast<double>(boot));
    }

    std::deque<double> rr_hist;
    std::vector<std::size_t> detections;       // envelope indices
    std::vector<EnvelopePeak> noise_peaks;     // search-back candidates

    auto threshold = [&]() {
        const double nm = mean_of(noise_hist);
        const double qm = mean_of(qrs_hist);
        return nm + cfg.threshold_coeff * (qm - nm);
    };

    auto accept_qrs = [&](const EnvelopePeak& p) {
        if (!detections.empty()) {
            push_history(rr_hist, static_cast<double>(p.index - detections.back()),
                         cfg.history);
        }
        detections.push_back(p.index);
        push_history(qrs_hist, p.height, cfg.history);
    };

    auto try_searchback = [&](std::size_t now) {
        if (detections.empty() || rr_hist.empty()) return;
        const double mean_rr = mean_of(rr_hist);
        if (static_cast<double>(now - detections.back()) <=
            cfg.searchback_rr_factor * mean_rr) {
            return;
        }
        const double th = cfg.searchback_threshold_factor * threshold();
        const std::size_t lo = detections.back() + refractory;
        const EnvelopePeak* best = nullptr;
        for (const auto& cand : noise_peaks) {
            if (cand.index <= lo || cand.index + refractory > now) continue;
            if (cand.height > th && (!best || cand.height > best->height)) best = &cand;
        }
        if (best) accept_qrs(*best);
    };

    for (const auto& p : peaks) {
        try_searchback(p.index);
        if (!detections.empty() && p.index - detections.back() < refractory) continue;
        if (p.height > threshold()) {
            accept_qrs(p);
            // candidates before this beat can no longer be promoted
            while (!noise_peaks.empty() && noise_peaks.front().index < p.index) {
                noise_peaks.erase(noise_peaks.begin());
            }
        } else {
            push_history(noise_hist, p.height, cfg.history);
            noise_peaks.push_back(p);
        }
    }
    try_searchback(n - 1);

    // snap each detection to the strongest signal sample nearby
    std::vector<std::size_t> result;
    for (std::size_t d : detections) {
        const std::size_t lo = d > snap ? d - snap : 0;
        const std::size_t hi = std::min(n, d + snap + 1);
        std::size_t best = lo;
        for (std::size_t i = lo + 1; i < hi; ++i) {
            if (x[i] > x[best]) best = i;
        }
        if (!result.empty()) {
            if (best <= result.back() || best - result.back() < refractory) continue;
        }
        result.push_back(best);
    }
    return result;
}

std::vector<std::size_t> find_p_peaks(const std::vector<double>& signal,
                                      const std::vector<std::size_t>& r_peaks,
                                      std::size_t w1, std::size_t w2) {
    if (w1 <= w2) throw Error("BadWindow", "need w1 > w2");
    std::vector<std::size_t> p_peaks;
    for (std::size_t r : r_peaks) {
        const std::size_t d1 = r > w1 ? r - w1 : 0;
        const std::size_t d2 = r > w2 ? r - w2 : 0;
        if (d1 >= d2) continue;
        const std::size_t hi = std::min(d2, signal.size());
        if (d1 >= hi) continue;
        std::size_t best = d1;
        for (std::size_t i = d1 + 1; i < hi; ++i) {
            if (signal[i] > signal[best]) best = i;  // ties keep the lowest index
        }
        p_peaks.push_back(best);
    }
    return p_peaks;
}

}  // namespace mpcnn
