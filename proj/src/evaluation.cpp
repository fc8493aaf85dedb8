#include "mpcnn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mpcnn/error.hpp"

namespace mpcnn {

SegmentMetrics segment_metrics(const ConfusionCounts& c) {
    SegmentMetrics m;
    const std::size_t total = c.total();
    if (total > 0) m.acc = static_cast<double>(c.tp + c.tn) / static_cast<double>(total);
    if (c.tp + c.fn > 0) m.sens = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    if (c.tn + c.fp > 0) m.spec = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
    if (2 * c.tp + c.fp + c.fn > 0) {
        m.f1 = static_cast<double>(2 * c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
    }
    return m;
}

std::optional<double> roc_auc(const std::vector<double>& scores,
                              const std::vector<Label>& labels) {
    if (scores.size() != labels.size()) {
        throw Error("ShapeMismatch", "scores and labels differ in length");
    }
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (Label l : labels) n_pos += (l == Label::A) ? 1 : 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // midranks over tied scores
    std::vector<double> rank(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mid = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t t = i; t <= j; ++t) rank[order[t]] = mid;
        i = j + 1;
    }

    double rank_sum_pos = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
        if (labels[s] == Label::A) rank_sum_pos += rank[s];
    }
    const double np = static_cast<double>(n_pos);
    const double u = rank_sum_pos - np * (np + 1.0) / 2.0;
    return u / (np * static_cast<double>(n_neg));
}

double compute_ahi(const std::vector<Label>& minutes) {
    if (minutes.empty()) throw Error("EmptyInput", "AHI needs at least one minute");
    std::size_t apnea = 0;
    for (Label l : minutes) apnea += (l == Label::A) ? 1 : 0;
    return 60.0 * static_cast<double>(apnea) / static_cast<double>(minutes.size());
}

RecordingReport make_recording_report(const std::string& record_id,
                                      const std::vector<Label>& predicted_minutes,
                                      const std::vector<Label>& reference_minutes) {
    RecordingReport r;
    r.record_id = record_id;
    r.predicted_ahi = compute_ahi(predicted_minutes);
    r.reference_ahi = compute_ahi(reference_minutes);
    r.predicted_diagnosis = diagnose(r.predicted_ahi);
    r.reference_diagnosis = diagnose(r.reference_ahi);
    return r;
}

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw Error("ShapeMismatch", "vectors differ in length");
    if (x.size() < 2) throw Error("NeedTwoRecordings", "correlation needs >= 2 points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

RecordingMetrics recording_metrics(const std::vector<RecordingReport>& reports) {
    RecordingMetrics m;
    std::vector<double> scores, pred_ahi, ref_ahi;
    std::vector<Label> truth;
    for (const auto& r : reports) {
        const Label ref = r.reference_diagnosis == Diagnosis::apnea ? Label::A : Label::N;
        const Label pred = r.predicted_diagnosis == Diagnosis::apnea ? Label::A : Label::N;
        m.confusion.add(ref, pred);
        scores.push_back(r.predicted_ahi);
        truth.push_back(ref);
        pred_ahi.push_back(r.predicted_ahi);
        ref_ahi.push_back(r.reference_ahi);
    }
    const SegmentMetrics sm = segment_metrics(m.confusion);
    m.acc = sm.acc;
    m.sens = sm.sens;
    m.spec = sm.spec;
    if (!reports.empty()) m.auc = roc_auc(scores, truth);
    if (reports.size() >= 2) m.pearson = pearson(pred_ahi, ref_ahi);
    return m;
}

}  // namespace mpcnn
