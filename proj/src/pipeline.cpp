#include "mpcnn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "mpcnn/beat_detection.hpp"
#include "mpcnn/error.hpp"
#include "mpcnn/parallel.hpp"
#include "mpcnn/preprocess.hpp"
#include "mpcnn/synthetic.hpp"
#include "mpcnn/version.hpp"

namespace mpcnn {

namespace {

// integer keys that flow into sizes must be positive before the cast
std::size_t positive_int(const Config& cfg, const std::string& key) {
    const std::int64_t v = cfg.get_int(key);
    if (v < 1) throw Error("BadConfigValue", key + " must be >= 1, got " + std::to_string(v));
    return static_cast<std::size_t>(v);
}

std::size_t nonneg_int(const Config& cfg, const std::string& key) {
    const std::int64_t v = cfg.get_int(key);
    if (v < 0) throw Error("BadConfigValue", key + " must be >= 0, got " + std::to_string(v));
    return static_cast<std::size_t>(v);
}

RPeakConfig rpeak_config(const Config& cfg) {
    RPeakConfig r;
    r.emphasis_low_hz = cfg.get_double("rpeak.emphasis_low_hz");
    r.emphasis_high_hz = cfg.get_double("rpeak.emphasis_high_hz");
    r.emphasis_taps = positive_int(cfg, "rpeak.emphasis_taps");
    r.envelope_ms = cfg.get_double("rpeak.envelope_ms");
    r.threshold_coeff = cfg.get_double("rpeak.threshold_coeff");
    r.history = positive_int(cfg, "rpeak.history");
    r.refractory_ms = cfg.get_double("rpeak.refractory_ms");
    r.searchback_rr_factor = cfg.get_double("rpeak.searchback_rr_factor");
    r.searchback_threshold_factor = cfg.get_double("rpeak.searchback_threshold_factor");
    r.snap_ms = cfg.get_double("rpeak.snap_ms");
    return r;
}

WindowConfig window_config(const Config& cfg) {
    WindowConfig wc;
    const std::string start = cfg.get_string("subseq.start");
    if (start == "p" || start == "P") {
        wc.start_fiducial = StartFiducial::P;
    } else if (start == "q" || start == "Q") {
        wc.start_fiducial = StartFiducial::Q;
    } else {
        throw Error("BadConfigValue", "subseq.start must be p or q");
    }
    wc.m = positive_int(cfg, "subseq.len");
    wc.q_offset = nonneg_int(cfg, "subseq.q_offset");
    return wc;
}

TrainConfig train_config(const Config& cfg) {
    TrainConfig tc;
    tc.epochs = positive_int(cfg, "train.epochs");
    tc.batch_size = positive_int(cfg, "train.batch_size");
    tc.lr0 = cfg.get_double("train.lr0");
    tc.beta1 = cfg.get_double("train.beta1");
    tc.beta2 = cfg.get_double("train.beta2");
    tc.adam_eps = cfg.get_double("train.adam_eps");
    tc.val_fraction = cfg.get_double("train.val_fraction");
    tc.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
    tc.net.dropout_rate = cfg.get_double("train.dropout");
    tc.net.bn_eps = cfg.get_double("train.bn_eps");
    tc.net.bn_momentum = cfg.get_double("train.bn_momentum");
    tc.threads = effective_threads(static_cast<unsigned>(nonneg_int(cfg, "threads")));
    return tc;
}

CodeMap code_map(const Config& cfg) {
    CodeMap m;
    m[static_cast<int>(cfg.get_int("anno.code_n"))] = Label::N;
    m[static_cast<int>(cfg.get_int("anno.code_a"))] = Label::A;
    return m;
}

std::string strip_suffix(const std::string& path, const std::string& suffix) {
    if (path.size() >= suffix.size() &&
        path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0) {
        return path.substr(0, path.size() - suffix.size());
    }
    return path;
}

std::string fmt(double v, const char* format = "%.6f") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), format, v);
    return buf;
}

void emit_optional(std::ostream& out, const char* key, const std::optional<double>& v) {
    if (v) out << key << "=" << fmt(*v) << "\n";
}

}  // namespace

RecordExtraction extract_record_features(const Config& cfg, const EcgRecord& record) {
    RecordExtraction out;

    const auto fir = design_fir_bandpass(cfg.get_double("filter.low_hz"),
                                         cfg.get_double("filter.high_hz"),
                                         positive_int(cfg, "filter.taps"),
                                         record.sampling_rate);
    EcgRecord filtered = record;
    filtered.samples = filter_zero_phase(record.samples, fir);

    const auto windows =
        extract_windows(filtered, positive_int(cfg, "window.span_minutes"));
    out.windows_total = windows.size();

    const RPeakConfig rc = rpeak_config(cfg);
    const WindowConfig wc = window_config(cfg);
    const auto channels = parse_channels(cfg.get_string("features.channels"));
    const std::size_t length = positive_int(cfg, "features.length");
    const double min_bpm = cfg.get_double("reject.min_bpm");
    const double max_bpm = cfg.get_double("reject.max_bpm");
    const std::size_t w1 = positive_int(cfg, "ppeak.w1");
    const std::size_t w2 = nonneg_int(cfg, "ppeak.w2");

    for (const auto& window : windows) {
        BeatIndices beats;
        beats.r_peaks = detect_r_peaks(window.samples, window.fs, rc);
        const double duration = static_cast<double>(window.samples.size()) / window.fs;
        if (!beat_rate_valid(beats.r_peaks.size(), duration, min_bpm, max_bpm)) {
            ++out.rejected_rate;
            continue;
        }
        beats.p_peaks = find_p_peaks(window.samples, beats.r_peaks, w1, w2);
        try {
            out.segments.push_back(extract_features(window, beats, wc, channels, length));
        } catch (const Error& e) {
            if (e.category() == "TooFewSubsequences") {
                ++out.rejected_subseq;
                continue;
            }
            throw;
        }
    }
    return out;
}

std::string PreprocessResult::summary() const {
    std::ostringstream out;
    out << "records=" << records << " windows=" << windows_total
        << " rejected_rate=" << rejected_rate << " rejected_subseq=" << rejected_subseq
        << " admitted=" << admitted;
    return out.str();
}

PreprocessResult run_preprocess(const Config& cfg, const std::string& data_dir,
                                const std::string& out_path) {
    const auto ids = list_records(data_dir);
    if (ids.empty()) throw Error("NoRecords", "no .hea files under " + data_dir);

    const CodeMap codes = code_map(cfg);
    const unsigned threads = effective_threads(static_cast<unsigned>(nonneg_int(cfg, "threads")));

    std::vector<RecordExtraction> per_record(ids.size());
    parallel_for_chunked(0, ids.size(), 1, threads,
                         [&](std::size_t, std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            EcgRecord record;
            try {
                record = load_record(data_dir, ids[i], codes);
                per_record[i] = extract_record_features(cfg, record);
            } catch (const Error& e) {
                throw Error(e.category(), "record " + ids[i] + ": " + e.detail());
            }
        }
    });

    PreprocessResult result;
    result.records = ids.size();
    std::vector<FeatureSegment> all;
    for (const auto& r : per_record) {
        result.windows_total += r.windows_total;
        result.rejected_rate += r.rejected_rate;
        result.rejected_subseq += r.rejected_subseq;
        all.insert(all.end(), r.segments.begin(), r.segments.end());
    }
    result.admitted = all.size();

    const auto channels = parse_channels(cfg.get_string("features.channels"));
    const std::size_t length = positive_int(cfg, "features.length");
    write_features(out_path, all, length, channels, cfg.serialize());
    return result;
}

TrainSummary run_train(const Config& cfg, const std::string& features_path,
                       const std::string& model_out) {
    const FeatureFile file = read_features(features_path);
    const TrainConfig tc = train_config(cfg);
    TrainResult r = train(file.segments, tc);

    TrainSummary summary;
    summary.history = r.history;
    summary.train_count = r.train_count;
    summary.val_count = r.val_count;
    summary.best_epoch = r.best_epoch;
    summary.best_val_acc = r.best_val_acc;
    summary.train_indices = r.train_indices;
    summary.val_indices = r.val_indices;
    summary.model_path = model_out;

    const std::string base = strip_suffix(model_out, ".mpnn");
    summary.best_model_path = base + ".best.mpnn";
    summary.history_path = base + ".history.txt";

    const std::string provenance = cfg.serialize();
    r.final_model.save_file(summary.model_path, provenance);
    r.best_model.save_file(summary.best_model_path, provenance);

    std::ofstream hist(summary.history_path);
    if (!hist) throw Error("IoError", "cannot write " + summary.history_path);
    hist << format_history(r.history, r.train_count, r.val_count);
    return summary;
}

namespace {

std::string render_report(const Config& cfg, const EvalSummary& s) {
    std::ostringstream out;
    out << "# " << kToolName << " evaluation report\n";
    out << "[config]\n" << cfg.serialize();
    out << "[segment]\n";
    out << "count=" << s.segment_confusion.total() << "\n";
    out << "tp=" << s.segment_confusion.tp << "\n";
    out << "fp=" << s.segment_confusion.fp << "\n";
    out << "tn=" << s.segment_confusion.tn << "\n";
    out << "fn=" << s.segment_confusion.fn << "\n";
    emit_optional(out, "acc", s.segment.acc);
    emit_optional(out, "sens", s.segment.sens);
    emit_optional(out, "spec", s.segment.spec);
    emit_optional(out, "f1", s.segment.f1);
    emit_optional(out, "auc", s.segment_auc);
    out << "[segment_confusion]\n";
    out << "# rows: truth N, A / columns: predicted N, A\n";
    out << s.segment_confusion.tn << " " << s.segment_confusion.fp << "\n";
    out << s.segment_confusion.fn << " " << s.segment_confusion.tp << "\n";

    if (s.per_recording) {
        for (const auto& r : s.recordings) {
            out << "[recording " << r.record_id << "]\n";
            out << "predicted_ahi=" << fmt(r.predicted_ahi, "%.4f") << "\n";
            out << "reference_ahi=" << fmt(r.reference_ahi, "%.4f") << "\n";
            out << "predicted_diagnosis="
                << (r.predicted_diagnosis == Diagnosis::apnea ? "apnea" : "normal") << "\n";
            out << "reference_diagnosis="
                << (r.reference_diagnosis == Diagnosis::apnea ? "apnea" : "normal") << "\n";
        }
        out << "[recording_summary]\n";
        out << "count=" << s.recordings.size() << "\n";
        emit_optional(out, "acc", s.recording.acc);
        emit_optional(out, "sens", s.recording.sens);
        emit_optional(out, "spec", s.recording.spec);
        emit_optional(out, "auc", s.recording.auc);
        emit_optional(out, "pearson", s.recording.pearson);
        out << "[recording_confusion]\n";
        out << "# rows: truth normal, apnea / columns: predicted normal, apnea\n";
        out << s.recording.confusion.tn << " " << s.recording.confusion.fp << "\n";
        out << s.recording.confusion.fn << " " << s.recording.confusion.tp << "\n";
    }
    return out.str();
}

}  // namespace

EvalSummary run_eval(const Config& cfg, const std::string& features_path,
                     const std::string& model_path, bool per_recording,
                     const std::string& report_path) {
    const FeatureFile file = read_features(features_path);
    Model model = Model::load_file(model_path);
    const unsigned threads = effective_threads(static_cast<unsigned>(nonneg_int(cfg, "threads")));
    const std::size_t batch = positive_int(cfg, "train.batch_size");

    const auto probs = predict(model, file.segments, batch, threads);

    EvalSummary s;
    s.per_recording = per_recording;
    std::vector<double> scores;
    std::vector<Label> truth;
    scores.reserve(file.segments.size());
    for (std::size_t i = 0; i < file.segments.size(); ++i) {
        const Label pred = probs[i][1] > probs[i][0] ? Label::A : Label::N;
        s.segment_confusion.add(file.segments[i].label, pred);
        scores.push_back(probs[i][1]);
        truth.push_back(file.segments[i].label);
    }
    s.segment = segment_metrics(s.segment_confusion);
    if (!file.segments.empty()) s.segment_auc = roc_auc(scores, truth);

    if (per_recording) {
        std::map<std::string, std::pair<std::vector<Label>, std::vector<Label>>> by_record;
        for (std::size_t i = 0; i < file.segments.size(); ++i) {
            auto& [pred_minutes, ref_minutes] = by_record[file.segments[i].record_id];
            pred_minutes.push_back(probs[i][1] > probs[i][0] ? Label::A : Label::N);
            ref_minutes.push_back(file.segments[i].label);
        }
        for (const auto& [id, minutes] : by_record) {
            s.recordings.push_back(make_recording_report(id, minutes.first, minutes.second));
        }
        s.recording = recording_metrics(s.recordings);
    }

    s.report_text = render_report(cfg, s);
    if (!report_path.empty()) {
        std::ofstream out(report_path);
        if (!out) throw Error("IoError", "cannot write " + report_path);
        out << s.report_text;
    }
    return s;
}

std::vector<std::pair<std::string, WindowConfig>> window_study_configs(const Config& cfg) {
    const std::size_t q_offset = nonneg_int(cfg, "subseq.q_offset");
    return {
        {"T1", {StartFiducial::P, 55, q_offset}},
        {"T2", {StartFiducial::P, 25, q_offset}},
        {"T3", {StartFiducial::Q, 40, q_offset}},
        {"T4", {StartFiducial::Q, 15, q_offset}},
    };
}

std::vector<std::pair<std::string, std::vector<Channel>>> feature_study_subsets() {
    using C = Channel;
    return {
        {"M1", {C::MinDP}},
        {"M2", {C::MaxDP}},
        {"M3", {C::MeanDP}},
        {"M4", {C::MinDP, C::MaxDP}},
        {"M5", {C::MaxDP, C::MeanDP}},
        {"M6", {C::MinDP, C::MeanDP}},
        {"M7", {C::MinDP, C::MaxDP, C::MeanDP}},
    };
}

namespace {

FeatureSegment project_channels(const FeatureSegment& seg, const std::vector<Channel>& subset) {
    FeatureSegment out;
    out.record_id = seg.record_id;
    out.center_minute = seg.center_minute;
    out.label = seg.label;
    out.length = seg.length;
    out.channels = subset;
    out.values.reserve(static_cast<std::size_t>(seg.length) * subset.size());
    for (Channel c : subset) {
        const auto it = std::find(seg.channels.begin(), seg.channels.end(), c);
        if (it == seg.channels.end()) {
            throw Error("BadChannel", "channel not present in extracted features");
        }
        const std::size_t idx = static_cast<std::size_t>(it - seg.channels.begin());
        const std::size_t L = seg.length;
        out.values.insert(out.values.end(), seg.values.begin() + static_cast<std::ptrdiff_t>(idx * L),
                          seg.values.begin() + static_cast<std::ptrdiff_t>((idx + 1) * L));
    }
    return out;
}

struct ConditionStats {
    std::vector<double> acc, sens, spec;
};

void run_condition(const std::vector<FeatureSegment>& segments, const TrainConfig& base,
                   std::uint64_t seed, ConditionStats& stats) {
    TrainConfig tc = base;
    tc.seed = seed;
    TrainResult r = train(segments, tc);

    // metrics on the run's own validation split
    std::vector<FeatureSegment> val;
    val.reserve(r.val_indices.size());
    for (std::size_t i : r.val_indices) val.push_back(segments[i]);
    const auto probs = predict(r.final_model, val, base.batch_size, base.threads);
    ConfusionCounts c;
    for (std::size_t i = 0; i < val.size(); ++i) {
        const Label pred = probs[i][1] > probs[i][0] ? Label::A : Label::N;
        c.add(val[i].label, pred);
    }
    const SegmentMetrics m = segment_metrics(c);
    stats.acc.push_back(m.acc.value_or(0.0));
    stats.sens.push_back(m.sens.value_or(0.0));
    stats.spec.push_back(m.spec.value_or(0.0));
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1.0))};
}

}  // namespace

AblationResult run_ablate(const Config& cfg, AblationStudy study, const std::string& data_dir,
                          std::size_t repeats, const std::string& out_path) {
    if (repeats < 1) throw Error("BadConfig", "repeats must be >= 1");

    AblationResult result;
    result.study = study;
    const TrainConfig base = train_config(cfg);
    const std::uint64_t base_seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
    const auto ids = list_records(data_dir);
    if (ids.empty()) throw Error("NoRecords", "no .hea files under " + data_dir);
    const CodeMap codes = code_map(cfg);

    auto extract_all = [&](const Config& extraction_cfg) {
        std::vector<FeatureSegment> all;
        const unsigned threads =
            effective_threads(static_cast<unsigned>(nonneg_int(cfg, "threads")));
        std::vector<std::vector<FeatureSegment>> per_record(ids.size());
        parallel_for_chunked(0, ids.size(), 1, threads,
                             [&](std::size_t, std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) {
                const EcgRecord record = load_record(data_dir, ids[i], codes);
                per_record[i] = extract_record_features(extraction_cfg, record).segments;
            }
        });
        for (auto& r : per_record) {
            all.insert(all.end(), std::make_move_iterator(r.begin()),
                       std::make_move_iterator(r.end()));
        }
        return all;
    };

    if (study == AblationStudy::features) {
        // extract once with all channels, then project per subset
        Config extraction_cfg = cfg;
        extraction_cfg.set("features.channels", "min,max,mean");
        const auto full = extract_all(extraction_cfg);

        for (const auto& [name, subset] : feature_study_subsets()) {
            std::vector<FeatureSegment> projected;
            projected.reserve(full.size());
            for (const auto& seg : full) projected.push_back(project_channels(seg, subset));

            ConditionStats stats;
            for (std::size_t rep = 0; rep < repeats; ++rep) {
                run_condition(projected, base, base_seed + rep, stats);
            }
            AblationRow row;
            row.name = name;
            std::tie(row.acc_mean, row.acc_std) = mean_std(stats.acc);
            std::tie(row.sens_mean, row.sens_std) = mean_std(stats.sens);
            std::tie(row.spec_mean, row.spec_std) = mean_std(stats.spec);
            result.rows.push_back(row);
        }
    } else {
        for (const auto& [name, wc] : window_study_configs(cfg)) {
            Config extraction_cfg = cfg;
            extraction_cfg.set("subseq.start",
                               wc.start_fiducial == StartFiducial::P ? "p" : "q");
            extraction_cfg.set("subseq.len", std::to_string(wc.m));
            const auto segments = extract_all(extraction_cfg);

            ConditionStats stats;
            for (std::size_t rep = 0; rep < repeats; ++rep) {
                run_condition(segments, base, base_seed + rep, stats);
            }
            AblationRow row;
            row.name = name;
            std::tie(row.acc_mean, row.acc_std) = mean_std(stats.acc);
            std::tie(row.sens_mean, row.sens_std) = mean_std(stats.sens);
            std::tie(row.spec_mean, row.spec_std) = mean_std(stats.spec);
            result.rows.push_back(row);
        }
    }

    std::ostringstream table;
    table << "# " << kToolName << " ablation ("
          << (study == AblationStudy::features ? "features" : "window") << ", repeats="
          << repeats << ")\n";
    table << "method acc(%) sens(%) spec(%)\n";
    auto pct = [](double mean, double std) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.2f±%.2f", 100.0 * mean, 100.0 * std);
        return std::string(buf);
    };
    for (const auto& row : result.rows) {
        table << row.name << " " << pct(row.acc_mean, row.acc_std) << " "
              << pct(row.sens_mean, row.sens_std) << " " << pct(row.spec_mean, row.spec_std)
              << "\n";
    }
    result.table_text = table.str();

    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) throw Error("IoError", "cannot write " + out_path);
        out << "[config]\n" << cfg.serialize() << "[table]\n" << result.table_text;
    }
    return result;
}

std::vector<std::string> run_synth(const Config& cfg, const std::string& out_dir,
                                   std::size_t records, std::size_t minutes) {
    if (records == 0 || minutes == 0) throw Error("BadConfig", "records and minutes must be >= 1");
    const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < records; ++i) {
        SynthConfig sc;
        char name[32];
        std::snprintf(name, sizeof(name), "s%02u", static_cast<unsigned>(i + 1));
        sc.record_id = name;
        sc.duration_minutes = minutes;
        sc.noise_snr_db = 20.0;
        sc.seed = seed + i;
        const SynthRecord synth = generate(sc);
        write_record(out_dir, synth.record);
        ids.push_back(sc.record_id);
    }
    return ids;
}

}  // namespace mpcnn
