#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mpcnn/config.hpp"
#include "mpcnn/evaluation.hpp"
#include "mpcnn/mp_features.hpp"
#include "mpcnn/neural_net.hpp"

namespace mpcnn {

// Orchestration entry points used by both the command-line tool and the
// integration tests. Each one is a pure function of (inputs, config).

struct PreprocessResult {
    std::size_t records = 0;
    std::size_t windows_total = 0;
    std::size_t rejected_rate = 0;       // beat rate outside [min_bpm, max_bpm]
    std::size_t rejected_subseq = 0;     // fewer than two subsequences
    std::size_t admitted = 0;
    std::string summary() const;
};

PreprocessResult run_preprocess(const Config& cfg, const std::string& data_dir,
                                const std::string& out_path);

struct TrainSummary {
    std::vector<EpochStats> history;
    std::size_t train_count = 0;
    std::size_t val_count = 0;
    std::size_t best_epoch = 0;
    double best_val_acc = 0.0;
    std::vector<std::size_t> train_indices;  // into the feature file's segments
    std::vector<std::size_t> val_indices;
    std::string model_path;
    std::string best_model_path;
    std::string history_path;
};

TrainSummary run_train(const Config& cfg, const std::string& features_path,
                       const std::string& model_out);

struct EvalSummary {
    ConfusionCounts segment_confusion;
    SegmentMetrics segment;
    std::optional<double> segment_auc;
    std::vector<RecordingReport> recordings;
    RecordingMetrics recording;
    bool per_recording = false;
    std::string report_text;
};

EvalSummary run_eval(const Config& cfg, const std::string& features_path,
                     const std::string& model_path, bool per_recording,
                     const std::string& report_path = "");

enum class AblationStudy { features, window };

struct AblationRow {
    std::string name;
    double acc_mean = 0.0, acc_std = 0.0;
    double sens_mean = 0.0, sens_std = 0.0;
    double spec_mean = 0.0, spec_std = 0.0;
};

struct AblationResult {
    AblationStudy study = AblationStudy::features;
    std::vector<AblationRow> rows;
    std::string table_text;
};

AblationResult run_ablate(const Config& cfg, AblationStudy study, const std::string& data_dir,
                          std::size_t repeats, const std::string& out_path = "");

// Writes <records> synthetic records (ids s01, s02, ...) into out_dir as
// .hea/.dat/.apn.txt triples; per-record seeds derive from cfg "seed".
std::vector<std::string> run_synth(const Config& cfg, const std::string& out_dir,
                                   std::size_t records, std::size_t minutes);

// Feature extraction for one preloaded record; exposed for tests.
struct RecordExtraction {
    std::vector<FeatureSegment> segments;
    std::size_t windows_total = 0;
    std::size_t rejected_rate = 0;
    std::size_t rejected_subseq = 0;
};

RecordExtraction extract_record_features(const Config& cfg, const EcgRecord& record);

// The ablation study's four subsequence windows (start fiducial + length).
std::vector<std::pair<std::string, WindowConfig>> window_study_configs(const Config& cfg);

// M1..M7 channel subsets in study order.
std::vector<std::pair<std::string, std::vector<Channel>>> feature_study_subsets();

}  // namespace mpcnn
