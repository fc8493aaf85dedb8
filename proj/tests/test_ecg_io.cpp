#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

#include "mpcnn/ecg_io.hpp"
#include "mpcnn/error.hpp"
#include "mpcnn/rng.hpp"
#include "temp_dir.hpp"

using namespace mpcnn;

namespace {

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

std::vector<unsigned char> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// annotation word: code in the high 6 bits, time increment in the low 10
void push_word(std::vector<unsigned char>& bytes, int code, int time) {
    const std::uint16_t w =
        static_cast<std::uint16_t>(((code & 0x3F) << 10) | (time & 0x3FF));
    bytes.push_back(static_cast<unsigned char>(w & 0xFF));
    bytes.push_back(static_cast<unsigned char>(w >> 8));
}

}  // namespace

TEST_CASE("read_header parses the record line") {
    testutil::TempDir dir("hea");
    write_text(dir.file("a01.hea"), "a01 1 100 2957000\na01.dat 16 200 16 0 -63 -22905 0 ECG\n");
    const RecordHeader h = read_header(dir.file("a01.hea"));
    CHECK(h.record_id == "a01");
    CHECK(h.num_signals == 1);
    CHECK(h.sampling_rate == doctest::Approx(100.0));
    CHECK(h.num_samples == 2957000);
    CHECK(h.format_codes.at(0) == 16);
    CHECK(h.gains.at(0) == doctest::Approx(200.0));
}

TEST_CASE("read_header accepts an empty record and defaults the gain") {
    testutil::TempDir dir("hea");
    write_text(dir.file("x.hea"), "x 1 100 0\n");
    const RecordHeader h = read_header(dir.file("x.hea"));
    CHECK(h.num_samples == 0);
    CHECK(h.gains.at(0) == doctest::Approx(200.0));
    CHECK(h.format_codes.at(0) == 16);
}

TEST_CASE("read_header rejects unsupported formats and short record lines") {
    testutil::TempDir dir("hea");
    write_text(dir.file("b.hea"), "b 1 100 10\nb.dat 8 200\n");
    CHECK_THROWS_WITH_AS(read_header(dir.file("b.hea")), doctest::Contains("UnsupportedFormat"),
                         Error);
    write_text(dir.file("c.hea"), "c 1 100\n");
    CHECK_THROWS_WITH_AS(read_header(dir.file("c.hea")), doctest::Contains("MalformedHeader"),
                         Error);
}

TEST_CASE("read_samples decodes format 16 and converts adu to mV") {
    testutil::TempDir dir("dat");
    RecordHeader h;
    h.record_id = "t";
    h.num_signals = 1;
    h.sampling_rate = 100.0;
    h.num_samples = 2;
    h.gains = {200.0};
    h.format_codes = {16};
    write_bytes(dir.file("t.dat"), {0x00, 0x00, 0xC8, 0x00});
    const auto mv = read_samples(h, dir.file("t.dat"));
    REQUIRE(mv.size() == 2);
    CHECK(mv[0] == doctest::Approx(0.0));
    CHECK(mv[1] == doctest::Approx(1.0));

    h.num_samples = 1;
    write_bytes(dir.file("neg.dat"), {0xFF, 0xFF});  // two's complement -1
    const auto neg = read_samples(h, dir.file("neg.dat"));
    CHECK(neg.at(0) == doctest::Approx(-0.005));

    write_bytes(dir.file("short.dat"), {0x01});
    CHECK_THROWS_WITH_AS(read_samples(h, dir.file("short.dat")),
                         doctest::Contains("SizeMismatch"), Error);
}

TEST_CASE("read_samples decodes packed format 212") {
    testutil::TempDir dir("dat212");
    RecordHeader h;
    h.record_id = "p";
    h.num_signals = 1;
    h.sampling_rate = 100.0;
    h.num_samples = 2;
    h.gains = {100.0};
    h.format_codes = {212};
    // samples +1 and -1: 0x001 and 0xFFF
    write_bytes(dir.file("p.dat"), {0x01, 0xF0, 0xFF});
    const auto mv = read_samples(h, dir.file("p.dat"));
    REQUIRE(mv.size() == 2);
    CHECK(mv[0] == doctest::Approx(0.01));
    CHECK(mv[1] == doctest::Approx(-0.01));
}

TEST_CASE("format 16 write then read round-trips byte-exactly") {
    testutil::TempDir dir("roundtrip");
    Rng rng(99);
    RecordHeader h;
    h.record_id = "r";
    h.num_signals = 1;
    h.sampling_rate = 100.0;
    h.num_samples = 733;
    h.gains = {200.0};
    h.format_codes = {16};

    std::vector<unsigned char> original;
    for (std::size_t i = 0; i < 733; ++i) {
        const std::uint16_t v = static_cast<std::uint16_t>(rng.next_u64() & 0xFFFF);
        original.push_back(static_cast<unsigned char>(v & 0xFF));
        original.push_back(static_cast<unsigned char>(v >> 8));
    }
    write_bytes(dir.file("r.dat"), original);

    const auto mv = read_samples(h, dir.file("r.dat"));
    write_samples_format16(h, dir.file("r2.dat"), mv);
    CHECK(read_bytes(dir.file("r2.dat")) == original);
}

TEST_CASE("read_annotations decodes the word stream") {
    testutil::TempDir dir("apn");

    SUBCASE("empty body") {
        write_bytes(dir.file("e.apn"), {0x00, 0x00});
        const auto labels = read_annotations(dir.file("e.apn"), 100.0);
        CHECK(labels.labels.empty());
        CHECK(labels.source == LabelSource::annotation_file);
    }

    SUBCASE("two minutes N then A") {
        std::vector<unsigned char> bytes;
        push_word(bytes, 1, 0);  // N at t=0
        // one minute is 6000 samples > 1023, needs an extended time word
        push_word(bytes, 59, 0);
        bytes.push_back(0x00);
        bytes.push_back(0x00);  // high word of 6000
        bytes.push_back(0x70);
        bytes.push_back(0x17);  // low word, 6000 = 0x1770
        push_word(bytes, 8, 0);  // A after the skip
        push_word(bytes, 0, 0);
        write_bytes(dir.file("na.apn"), bytes);
        const auto labels = read_annotations(dir.file("na.apn"), 100.0);
        REQUIRE(labels.labels.size() == 2);
        CHECK(labels.labels[0] == Label::N);
        CHECK(labels.labels[1] == Label::A);
    }

    SUBCASE("aux bytes are skipped with even padding") {
        std::vector<unsigned char> bytes;
        push_word(bytes, 1, 0);
        push_word(bytes, 63, 3);  // 3 aux bytes, padded to 4
        bytes.insert(bytes.end(), {0xAA, 0xBB, 0xCC, 0x00});
        push_word(bytes, 1, 10);
        push_word(bytes, 0, 0);
        write_bytes(dir.file("aux.apn"), bytes);
        CHECK(read_annotations(dir.file("aux.apn"), 100.0).labels.size() == 2);
    }

    SUBCASE("unknown code") {
        std::vector<unsigned char> bytes;
        push_word(bytes, 5, 0);
        push_word(bytes, 0, 0);
        write_bytes(dir.file("u.apn"), bytes);
        CHECK_THROWS_WITH_AS(read_annotations(dir.file("u.apn"), 100.0),
                             doctest::Contains("UnknownCode"), Error);
    }

    SUBCASE("missing terminator") {
        std::vector<unsigned char> bytes;
        push_word(bytes, 1, 0);
        write_bytes(dir.file("t.apn"), bytes);
        CHECK_THROWS_WITH_AS(read_annotations(dir.file("t.apn"), 100.0),
                             doctest::Contains("TruncatedFile"), Error);
    }
}

TEST_CASE("read_text_labels") {
    testutil::TempDir dir("txt");
    write_text(dir.file("l.apn.txt"), "N\nA\nN\n");
    const auto labels = read_text_labels(dir.file("l.apn.txt"));
    REQUIRE(labels.labels.size() == 3);
    CHECK(labels.labels[1] == Label::A);
    CHECK(labels.source == LabelSource::text_file);

    write_text(dir.file("empty.txt"), "");
    CHECK(read_text_labels(dir.file("empty.txt")).labels.empty());

    write_text(dir.file("bad.txt"), "A\nB\n");
    CHECK_THROWS_WITH_AS(read_text_labels(dir.file("bad.txt")),
                         doctest::Contains("BadLabelChar"), Error);
}

TEST_CASE("write_record then load_record round-trips a record") {
    testutil::TempDir dir("rec");
    EcgRecord rec;
    rec.record_id = "s01";
    rec.sampling_rate = 100.0;
    rec.samples.resize(2 * 60 * 100);
    for (std::size_t i = 0; i < rec.samples.size(); ++i) {
        rec.samples[i] = 0.5 * std::sin(0.01 * static_cast<double>(i));
    }
    rec.minute_labels = {Label::N, Label::A};
    write_record(dir.str(), rec);

    CHECK(list_records(dir.str()) == std::vector<std::string>{"s01"});
    const EcgRecord loaded = load_record(dir.str(), "s01");
    CHECK(loaded.record_id == "s01");
    CHECK(loaded.sampling_rate == doctest::Approx(100.0));
    REQUIRE(loaded.samples.size() == rec.samples.size());
    // format 16 at gain 200 quantizes to 2.5 uV either way
    for (std::size_t i = 0; i < 100; ++i) {
        CHECK(std::fabs(loaded.samples[i] - rec.samples[i]) <= 0.0025 + 1e-12);
    }
    CHECK(loaded.minute_labels == rec.minute_labels);
}

TEST_CASE("labels are truncated to the signal duration") {
    testutil::TempDir dir("trunc");
    EcgRecord rec;
    rec.record_id = "s02";
    rec.sampling_rate = 100.0;
    rec.samples.assign(60 * 100, 0.0);  // one minute of signal
    rec.minute_labels = {Label::N, Label::A, Label::A};
    write_record(dir.str(), rec);
    const EcgRecord loaded = load_record(dir.str(), "s02");
    CHECK(loaded.minute_labels.size() == 1);
}
