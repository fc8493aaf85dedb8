#include <doctest.h>

#include <cmath>
#include <vector>

#include "mpcnn/error.hpp"
#include "mpcnn/evaluation.hpp"
#include "mpcnn/rng.hpp"
#include "oracles.hpp"

using namespace mpcnn;

TEST_CASE("segment_metrics on a balanced confusion") {
    const ConfusionCounts c{8, 8, 2, 2};
    const SegmentMetrics m = segment_metrics(c);
    CHECK(m.acc.value() == doctest::Approx(0.8));
    CHECK(m.sens.value() == doctest::Approx(0.8));
    CHECK(m.spec.value() == doctest::Approx(0.8));
    CHECK(m.f1.value() == doctest::Approx(0.8));
}

TEST_CASE("segment_metrics reports undefined ratios as absent") {
    const ConfusionCounts no_pos{0, 10, 3, 0};
    const SegmentMetrics m = segment_metrics(no_pos);
    CHECK_FALSE(m.sens.has_value());
    CHECK(m.spec.has_value());

    const SegmentMetrics empty = segment_metrics(ConfusionCounts{});
    CHECK_FALSE(empty.acc.has_value());
    CHECK_FALSE(empty.f1.has_value());
}

TEST_CASE("accuracy is the prevalence-weighted mix of sens and spec") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        ConfusionCounts c;
        c.tp = rng.bounded(100);
        c.fn = 1 + rng.bounded(100);
        c.tn = rng.bounded(100);
        c.fp = 1 + rng.bounded(100);
        const SegmentMetrics m = segment_metrics(c);
        const double pos = static_cast<double>(c.tp + c.fn);
        const double neg = static_cast<double>(c.tn + c.fp);
        const double mixed =
            (m.sens.value() * pos + m.spec.value() * neg) / (pos + neg);
        CHECK(m.acc.value() == doctest::Approx(mixed).epsilon(1e-12));
    }
}

TEST_CASE("roc_auc endpoints") {
    const std::vector<Label> labels = {Label::N, Label::N, Label::A, Label::A};
    CHECK(roc_auc({0.1, 0.2, 0.8, 0.9}, labels).value() == doctest::Approx(1.0));
    CHECK(roc_auc({0.9, 0.8, 0.2, 0.1}, labels).value() == doctest::Approx(0.0));
    CHECK(roc_auc({0.5, 0.5, 0.5, 0.5}, labels).value() == doctest::Approx(0.5));
    CHECK_FALSE(roc_auc({0.5, 0.4}, {Label::N, Label::N}).has_value());
}

TEST_CASE("roc_auc agrees with trapezoidal integration") {
    Rng rng(19);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 5 + rng.bounded(200);
        std::vector<double> scores(n);
        std::vector<Label> labels(n);
        bool has_pos = false, has_neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            // quantized scores force ties through the midrank path
            scores[i] = std::floor(rng.uniform() * 8.0) / 8.0;
            labels[i] = rng.uniform() < 0.4 ? Label::A : Label::N;
            (labels[i] == Label::A ? has_pos : has_neg) = true;
        }
        if (!has_pos || !has_neg) continue;
        const double rank_based = roc_auc(scores, labels).value();
        const double trapezoid = oracle::trapezoid_auc(scores, labels);
        CHECK(std::fabs(rank_based - trapezoid) <= 1e-9);
    }
}

TEST_CASE("compute_ahi") {
    std::vector<Label> minutes(480, Label::N);
    for (std::size_t i = 0; i < 120; ++i) minutes[i * 4] = Label::A;
    CHECK(compute_ahi(minutes) == doctest::Approx(15.0));

    CHECK(compute_ahi(std::vector<Label>(60, Label::N)) == doctest::Approx(0.0));
    CHECK(compute_ahi(std::vector<Label>(60, Label::A)) == doctest::Approx(60.0));
    CHECK_THROWS_WITH_AS(compute_ahi({}), doctest::Contains("EmptyInput"), Error);
}

TEST_CASE("AHI is invariant to duplicating the minute sequence") {
    Rng rng(23);
    std::vector<Label> minutes(100);
    for (auto& m : minutes) m = rng.uniform() < 0.3 ? Label::A : Label::N;
    auto doubled = minutes;
    doubled.insert(doubled.end(), minutes.begin(), minutes.end());
    CHECK(compute_ahi(minutes) == doctest::Approx(compute_ahi(doubled)));
}

TEST_CASE("diagnosis boundary sits at AHI 5") {
    CHECK(diagnose(4.999) == Diagnosis::normal);
    CHECK(diagnose(5.0) == Diagnosis::apnea);
    CHECK(diagnose(0.0) == Diagnosis::normal);
    CHECK(diagnose(60.0) == Diagnosis::apnea);
}

TEST_CASE("pearson correlation") {
    const std::vector<double> x = {1.0, 2.0, 4.0, 8.0, 9.0};
    CHECK(pearson(x, x).value() == doctest::Approx(1.0));

    std::vector<double> neg = x;
    for (double& v : neg) v = -v;
    CHECK(pearson(x, neg).value() == doctest::Approx(-1.0));

    std::vector<double> affine = x;
    for (double& v : affine) v = 2.5 * v + 7.0;
    CHECK(pearson(x, affine).value() == doctest::Approx(1.0));

    CHECK_FALSE(pearson(x, std::vector<double>(5, 3.0)).has_value());
    CHECK_THROWS_WITH_AS(pearson({1.0}, {2.0}), doctest::Contains("NeedTwoRecordings"), Error);
}

TEST_CASE("recording reports and aggregate metrics") {
    std::vector<RecordingReport> reports;
    // predicted == reference for four recordings with distinct AHI
    const double ahis[] = {0.0, 3.0, 12.0, 40.0};
    for (int i = 0; i < 4; ++i) {
        RecordingReport r;
        r.record_id = "r" + std::to_string(i);
        r.predicted_ahi = ahis[i];
        r.reference_ahi = ahis[i];
        r.predicted_diagnosis = diagnose(ahis[i]);
        r.reference_diagnosis = diagnose(ahis[i]);
        reports.push_back(r);
    }
    const RecordingMetrics m = recording_metrics(reports);
    CHECK(m.acc.value() == doctest::Approx(1.0));
    CHECK(m.sens.value() == doctest::Approx(1.0));
    CHECK(m.spec.value() == doctest::Approx(1.0));
    CHECK(m.auc.value() == doctest::Approx(1.0));
    CHECK(m.pearson.value() == doctest::Approx(1.0));
}

TEST_CASE("positive affine prediction keeps correlation 1") {
    std::vector<RecordingReport> reports;
    // 5.5 maps to 4.75, flipping one diagnosis while r stays 1
    const double refs[] = {1.0, 5.5, 10.0, 30.0};
    for (int i = 0; i < 4; ++i) {
        RecordingReport r;
        r.record_id = "r" + std::to_string(i);
        r.reference_ahi = refs[i];
        r.predicted_ahi = 0.5 * refs[i] + 2.0;  // diagnoses may differ
        r.predicted_diagnosis = diagnose(r.predicted_ahi);
        r.reference_diagnosis = diagnose(r.reference_ahi);
        reports.push_back(r);
    }
    const RecordingMetrics m = recording_metrics(reports);
    CHECK(m.pearson.value() == doctest::Approx(1.0));
    CHECK(m.acc.value() < 1.0);
}

TEST_CASE("single recording: pearson absent, other metrics present") {
    RecordingReport r;
    r.record_id = "solo";
    r.predicted_ahi = 10.0;
    r.reference_ahi = 12.0;
    r.predicted_diagnosis = diagnose(10.0);
    r.reference_diagnosis = diagnose(12.0);
    const RecordingMetrics m = recording_metrics({r});
    CHECK_FALSE(m.pearson.has_value());
    CHECK(m.acc.value() == doctest::Approx(1.0));
}

TEST_CASE("recording diagnosis ignores minute order") {
    Rng rng(29);
    std::vector<Label> minutes(200);
    for (auto& m : minutes) m = rng.uniform() < 0.2 ? Label::A : Label::N;
    const auto base = make_recording_report("x", minutes, minutes);

    auto shuffled = minutes;
    rng.shuffle(shuffled);
    const auto after = make_recording_report("x", shuffled, shuffled);
    CHECK(base.predicted_ahi == doctest::Approx(after.predicted_ahi));
    CHECK(base.predicted_diagnosis == after.predicted_diagnosis);
}
