#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mpcnn/config.hpp"
#include "mpcnn/error.hpp"
#include "mpcnn/pipeline.hpp"
#include "mpcnn/version.hpp"

namespace {

struct GlobalOptions {
    std::string config_path;
    std::vector<std::string> overrides;  // key=value
    std::string seed;
    std::string threads;
};

mpcnn::Config build_config(const GlobalOptions& g) {
    mpcnn::Config cfg;
    if (!g.config_path.empty()) cfg.merge_file(g.config_path);
    for (const auto& kv : g.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw mpcnn::Error("BadConfigLine", "--set expects key=value, got '" + kv + "'");
        }
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!g.seed.empty()) cfg.set("seed", g.seed);
    if (!g.threads.empty()) cfg.set("threads", g.threads);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(mpcnn::kToolName) + " " + mpcnn::kToolVersion +
                 " - distance-profile sleep apnea classifier"};
    app.require_subcommand(1);

    GlobalOptions global;
    app.add_option("--config", global.config_path, "key=value configuration file");
    app.add_option("--set", global.overrides, "override a single config key (key=value)")
        ->take_all();
    app.add_option("--seed", global.seed, "random seed");
    app.add_option("--threads", global.threads, "worker threads (0 = hardware)");

    // preprocess
    auto* pre = app.add_subcommand("preprocess", "extract distance-profile features");
    pre->fallthrough();
    std::string pre_data, pre_out, pre_channels, pre_start, pre_len, pre_length;
    pre->add_option("--data-dir", pre_data, "directory of .hea/.dat records")->required();
    pre->add_option("--out", pre_out, "output feature file (.mpf)")->required();
    pre->add_option("--channels", pre_channels, "subset of min,max,mean");
    pre->add_option("--subseq-start", pre_start, "subsequence anchor: p or q");
    pre->add_option("--subseq-len", pre_len, "subsequence length in samples");
    pre->add_option("--length", pre_length, "resampled feature length");

    // train
    auto* tr = app.add_subcommand("train", "train the classifier on a feature file");
    tr->fallthrough();
    std::string tr_features, tr_out, tr_epochs;
    tr->add_option("--features", tr_features, "input feature file")->required();
    tr->add_option("--out", tr_out, "output model file (.mpnn)")->required();
    tr->add_option("--epochs", tr_epochs, "training epochs");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a model on a feature file");
    ev->fallthrough();
    std::string ev_features, ev_model, ev_report;
    bool ev_per_recording = false;
    ev->add_option("--features", ev_features, "input feature file")->required();
    ev->add_option("--model", ev_model, "model file")->required();
    ev->add_flag("--per-recording", ev_per_recording, "AHI-based per-recording metrics");
    ev->add_option("--report", ev_report, "write the full report to this path");

    // ablate
    auto* ab = app.add_subcommand("ablate", "run an ablation study");
    ab->fallthrough();
    std::string ab_study, ab_data, ab_out, ab_channels;
    std::size_t ab_repeats = 5;
    ab->add_option("--study", ab_study, "features or window")->required();
    ab->add_option("--data-dir", ab_data, "directory of records")->required();
    ab->add_option("--repeats", ab_repeats, "training repetitions per condition");
    ab->add_option("--out", ab_out, "write the result table to this path");
    ab->add_option("--channels", ab_channels, "channels for the window study");

    // synth
    auto* sy = app.add_subcommand("synth", "write synthetic test records");
    sy->fallthrough();
    std::string sy_out;
    std::size_t sy_records = 4, sy_minutes = 10;
    sy->add_option("--out", sy_out, "output directory")->required();
    sy->add_option("--records", sy_records, "number of records");
    sy->add_option("--minutes", sy_minutes, "minutes per record");

    CLI11_PARSE(app, argc, argv);

    try {
        mpcnn::Config cfg = build_config(global);

        if (pre->parsed()) {
            if (!pre_channels.empty()) cfg.set("features.channels", pre_channels);
            if (!pre_start.empty()) cfg.set("subseq.start", pre_start);
            if (!pre_len.empty()) cfg.set("subseq.len", pre_len);
            if (!pre_length.empty()) cfg.set("features.length", pre_length);
            const auto result = mpcnn::run_preprocess(cfg, pre_data, pre_out);
            std::cout << result.summary() << "\n";
            std::cout << "wrote " << pre_out << "\n";
        } else if (tr->parsed()) {
            if (!tr_epochs.empty()) cfg.set("train.epochs", tr_epochs);
            const auto summary = mpcnn::run_train(cfg, tr_features, tr_out);
            std::cout << mpcnn::format_history(summary.history, summary.train_count,
                                               summary.val_count);
            std::cout << "best_epoch=" << summary.best_epoch << " best_val_acc="
                      << summary.best_val_acc << "\n";
            std::cout << "wrote " << summary.model_path << ", " << summary.best_model_path
                      << ", " << summary.history_path << "\n";
        } else if (ev->parsed()) {
            const auto summary =
                mpcnn::run_eval(cfg, ev_features, ev_model, ev_per_recording, ev_report);
            std::cout << summary.report_text;
            if (!ev_report.empty()) std::cout << "wrote " << ev_report << "\n";
        } else if (ab->parsed()) {
            mpcnn::AblationStudy study;
            if (ab_study == "features") {
                study = mpcnn::AblationStudy::features;
            } else if (ab_study == "window") {
                study = mpcnn::AblationStudy::window;
            } else {
                throw mpcnn::Error("BadConfigValue", "--study must be features or window");
            }
            if (!ab_channels.empty()) {
                cfg.set("features.channels", ab_channels);
            } else if (study == mpcnn::AblationStudy::window) {
                // the window study defaults to the best feature pair
                cfg.set("features.channels", "min,max");
            }
            const auto result = mpcnn::run_ablate(cfg, study, ab_data, ab_repeats, ab_out);
            std::cout << result.table_text;
            if (!ab_out.empty()) std::cout << "wrote " << ab_out << "\n";
        } else if (sy->parsed()) {
            const auto ids = mpcnn::run_synth(cfg, sy_out, sy_records, sy_minutes);
            std::cout << "wrote " << ids.size() << " records to " << sy_out << "\n";
        }
    } catch (const mpcnn::Error& e) {
        std::cerr << "error " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error [Internal] " << e.what() << "\n";
        return 1;
    }
    return 0;
}
