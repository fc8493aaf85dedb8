#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mpcnn/ecg_io.hpp"

namespace mpcnn {

// Positive class is A (apnea).
struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t tn = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + tn + fp + fn; }
    void add(Label truth, Label predicted) {
        if (truth == Label::A) {
            (predicted == Label::A ? tp : fn) += 1;
        } else {
            (predicted == Label::N ? tn : fp) += 1;
        }
    }
};

// Ratios with an undefined denominator are absent, not zero.
struct SegmentMetrics {
    std::optional<double> acc;
    std::optional<double> sens;
    std::optional<double> spec;
    std::optional<double> f1;
};

SegmentMetrics segment_metrics(const ConfusionCounts& c);

// Rank-based (Mann-Whitney) AUC with midrank tie handling; absent when
// either class is empty.
std::optional<double> roc_auc(const std::vector<double>& scores,
                              const std::vector<Label>& labels);

// Apnea minutes per hour: 60 * count(A) / total minutes.
double compute_ahi(const std::vector<Label>& minutes);

inline constexpr double kAhiDiagnosisThreshold = 5.0;

enum class Diagnosis : std::uint8_t { normal = 0, apnea = 1 };

inline Diagnosis diagnose(double ahi) {
    return ahi >= kAhiDiagnosisThreshold ? Diagnosis::apnea : Diagnosis::normal;
}

struct RecordingReport {
    std::string record_id;
    double predicted_ahi = 0.0;
    double reference_ahi = 0.0;
    Diagnosis predicted_diagnosis = Diagnosis::normal;
    Diagnosis reference_diagnosis = Diagnosis::normal;
};

RecordingReport make_recording_report(const std::string& record_id,
                                      const std::vector<Label>& predicted_minutes,
                                      const std::vector<Label>& reference_minutes);

// Throws NeedTwoRecordings for fewer than two points; absent when either
// vector is constant.
std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y);

struct RecordingMetrics {
    ConfusionCounts confusion;  // diagnosis-level, positive = apnea
    std::optional<double> acc;
    std::optional<double> sens;
    std::optional<double> spec;
    std::optional<double> auc;      // predicted AHI as score
    std::optional<double> pearson;  // predicted vs reference AHI
};

RecordingMetrics recording_metrics(const std::vector<RecordingReport>& reports);

}  // namespace mpcnn
