#include "mpcnn/ecg_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mpcnn/error.hpp"

namespace mpcnn {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

double parse_double_tok(const std::string& tok, const char* what) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str()) throw Error("MalformedHeader", std::string("bad ") + what + ": " + tok);
    return v;
}

std::int64_t parse_int_tok(const std::string& tok, const char* what) {
    char* end = nullptr;
    const long long v = std::strtoll(tok.c_str(), &end, 10);
    if (end == tok.c_str()) throw Error("MalformedHeader", std::string("bad ") + what + ": " + tok);
    return v;
}

std::vector<unsigned char> read_all_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("IoError", "cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (in.bad()) throw Error("IoError", "read failed: " + path);
    return bytes;
}

int sign_extend_12(int v) { return (v & 0x800) ? v - 0x1000 : v; }

}  // namespace

RecordHeader read_header(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("IoError", "cannot open " + path);

    std::string line;
    std::vector<std::string> first;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        first = split_ws(line);
        break;
    }
    if (first.size() < 4) {
        throw Error("MalformedHeader", path + ": record line needs >= 4 tokens");
    }

    RecordHeader h;
    h.record_id = first[0];
    h.num_signals = static_cast<int>(parse_int_tok(first[1], "signal count"));
    h.sampling_rate = parse_double_tok(first[2], "sampling rate");
    h.num_samples = parse_int_tok(first[3], "sample count");
    if (h.num_signals < 1) throw Error("MalformedHeader", "num_signals < 1");
    if (!(h.sampling_rate > 0)) throw Error("MalformedHeader", "sampling rate must be > 0");
    if (h.num_samples < 0) throw Error("MalformedHeader", "negative sample count");

    // Signal lines: "<file> <format> [gain] [...]". Missing lines or fields
    // fall back to format 16 / gain 200 (the WFDB default).
    for (int s = 0; s < h.num_signals; ++s) {
        int format = 16;
        double gain = 200.0;
        if (std::getline(in, line)) {
            const auto toks = split_ws(line);
            if (toks.size() >= 2) {
                format = static_cast<int>(parse_int_tok(toks[1], "format"));
            }
            if (toks.size() >= 3) {
                // the gain token may carry "(baseline)" or "/mV" suffixes
                gain = std::strtod(toks[2].c_str(), nullptr);
                if (gain == 0.0) gain = 200.0;
            }
        }
        if (format != 16 && format != 212) {
            throw Error("UnsupportedFormat",
                        "signal format " + std::to_string(format) + " (supported: 16, 212)");
        }
        h.format_codes.push_back(format);
        h.gains.push_back(gain);
    }
    return h;
}

std::vector<double> read_samples(const RecordHeader& header, const std::string& path) {
    const auto bytes = read_all_bytes(path);
    const std::int64_t total = header.num_samples * header.num_signals;
    const int format = header.format_codes.empty() ? 16 : header.format_codes[0];
    const double gain = header.gains.empty() ? 200.0 : header.gains[0];

    std::vector<double> all;
    all.reserve(static_cast<std::size_t>(total));

    if (format == 16) {
        const std::int64_t expected = 2 * total;
        if (static_cast<std::int64_t>(bytes.size()) != expected) {
            throw Error("SizeMismatch", path + ": expected " + std::to_string(expected) +
                                            " bytes, got " + std::to_string(bytes.size()));
        }
        for (std::int64_t i = 0; i < total; ++i) {
            const std::uint16_t u = static_cast<std::uint16_t>(bytes[2 * i]) |
                                    (static_cast<std::uint16_t>(bytes[2 * i + 1]) << 8);
            all.push_back(static_cast<double>(static_cast<std::int16_t>(u)));
        }
    } else {  // 212: 3 bytes per pair of 12-bit samples
        const std::int64_t expected = 3 * (total / 2) + ((total % 2) ? 2 : 0);
        if (static_cast<std::int64_t>(bytes.size()) != expected) {
            throw Error("SizeMismatch", path + ": expected " + std::to_string(expected) +
                                            " bytes, got " + std::to_string(bytes.size()));
        }
        std::int64_t produced = 0;
        std::size_t p = 0;
        while (produced < total) {
            const int b0 = bytes[p];
            const int b1 = bytes[p + 1];
            const int s0 = sign_extend_12(b0 | ((b1 & 0x0F) << 8));
            all.push_back(static_cast<double>(s0));
            ++produced;
            if (produced < total) {
                const int b2 = bytes[p + 2];
                const int s1 = sign_extend_12(b2 | ((b1 & 0xF0) << 4));
                all.push_back(static_cast<double>(s1));
                ++produced;
                p += 3;
            } else {
                p += 2;
            }
        }
    }

    // first signal only, converted to mV
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(header.num_samples));
    for (std::int64_t i = 0; i < header.num_samples; ++i) {
        out.push_back(all[static_cast<std::size_t>(i * header.num_signals)] / gain);
    }
    return out;
}

void write_samples_format16(const RecordHeader& header, const std::string& path,
                            const std::vector<double>& samples_mv) {
    if (header.num_signals != 1) {
        throw Error("UnsupportedFormat", "format-16 writer supports single-signal records");
    }
    const double gain = header.gains.empty() ? 200.0 : header.gains[0];
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("IoError", "cannot open " + path + " for writing");
    for (double mv : samples_mv) {
        long long adu = std::llround(mv * gain);
        adu = std::clamp<long long>(adu, -32768, 32767);
        const std::uint16_t u = static_cast<std::uint16_t>(static_cast<std::int16_t>(adu));
        const unsigned char b[2] = {static_cast<unsigned char>(u & 0xFF),
                                    static_cast<unsigned char>(u >> 8)};
        out.write(reinterpret_cast<const char*>(b), 2);
    }
    if (!out) throw Error("IoError", "write failed: " + path);
}

MinuteLabels read_annotations(const std::string& path, double sampling_rate,
                              const CodeMap& code_map) {
    const auto bytes = read_all_bytes(path);
    if (bytes.size() % 2 != 0) throw Error("TruncatedFile", path + ": odd byte count");

    MinuteLabels result;
    result.source = LabelSource::annotation_file;

    std::size_t p = 0;
    std::int64_t time = 0;       // cumulative samples
    std::int64_t pending = 0;    // extended-time offset awaiting the next annotation
    bool terminated = false;
    const double samples_per_minute = 60.0 * sampling_rate;

    auto next_word = [&](const char* ctx) -> std::uint16_t {
        if (p + 2 > bytes.size()) throw Error("TruncatedFile", path + ": " + ctx);
        const std::uint16_t w = static_cast<std::uint16_t>(bytes[p]) |
                                (static_cast<std::uint16_t>(bytes[p + 1]) << 8);
        p += 2;
        return w;
    };

    std::int64_t last_minute = -1;
    while (p < bytes.size()) {
        const std::uint16_t w = next_word("annotation word");
        const int code = (w >> 10) & 0x3F;
        const int field = w & 0x3FF;
        if (code == 0) {  // 0x0000 end marker (code 0 has no other use here)
            terminated = true;
            break;
        }
        if (code == 59) {  // extended time: 4 bytes, high word then low word
            const std::uint16_t hi = next_word("extended time");
            const std::uint16_t lo = next_word("extended time");
            pending += static_cast<std::int32_t>((static_cast<std::uint32_t>(hi) << 16) |
                                                 lo);
            continue;
        }
        if (code == 63) {  // aux bytes, padded to even
            std::size_t skip = static_cast<std::size_t>(field);
            skip += skip & 1;
            if (p + skip > bytes.size()) throw Error("TruncatedFile", path + ": aux block");
            p += skip;
            continue;
        }
        if (code == 60 || code == 61 || code == 62) continue;  // num/sub/chn fields

        time += pending + field;
        pending = 0;

        auto it = code_map.find(code);
        if (it == code_map.end()) {
            throw Error("UnknownCode", path + ": annotation code " + std::to_string(code));
        }
        const std::int64_t minute = std::llround(static_cast<double>(time) / samples_per_minute);
        if (minute < last_minute) {
            throw Error("TruncatedFile", path + ": annotation time went backwards");
        }
        last_minute = minute;
        result.labels.push_back(it->second);
    }
    if (!terminated) throw Error("TruncatedFile", path + ": missing end marker");
    return result;
}

MinuteLabels read_text_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("IoError", "cannot open " + path);
    MinuteLabels result;
    result.source = LabelSource::text_file;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t;
        for (char c : line) {
            if (!std::isspace(static_cast<unsigned char>(c))) t.push_back(c);
        }
        if (t.empty()) continue;
        if (t == "A") {
            result.labels.push_back(Label::A);
        } else if (t == "N") {
            result.labels.push_back(Label::N);
        } else {
            throw Error("BadLabelChar", path + ":" + std::to_string(lineno) + ": '" + t + "'");
        }
    }
    return result;
}

void write_text_labels(const std::string& path, const std::vector<Label>& labels) {
    std::ofstream out(path);
    if (!out) throw Error("IoError", "cannot open " + path + " for writing");
    for (Label l : labels) out << label_char(l) << "\n";
    if (!out) throw Error("IoError", "write failed: " + path);
}

EcgRecord load_record(const std::string& dir, const std::string& record_id,
                      const CodeMap& code_map) {
    namespace fs = std::filesystem;
    const fs::path base = fs::path(dir) / record_id;

    const RecordHeader header = read_header((base.string() + ".hea"));

    EcgRecord rec;
    rec.record_id = header.record_id;
    rec.sampling_rate = header.sampling_rate;
    rec.samples = read_samples(header, base.string() + ".dat");

    MinuteLabels labels;
    if (fs::exists(base.string() + ".apn")) {
        labels = read_annotations(base.string() + ".apn", header.sampling_rate, code_map);
    } else if (fs::exists(base.string() + ".apn.txt")) {
        labels = read_text_labels(base.string() + ".apn.txt");
    }
    rec.minute_labels = std::move(labels.labels);

    // labels may not outrun the signal
    const double spm = 60.0 * rec.sampling_rate;
    const std::size_t max_minutes =
        static_cast<std::size_t>(std::ceil(static_cast<double>(rec.samples.size()) / spm));
    if (rec.minute_labels.size() > max_minutes) rec.minute_labels.resize(max_minutes);
    return rec;
}

std::vector<std::string> list_records(const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<std::string> ids;
    if (!fs::is_directory(dir)) throw Error("IoError", "not a directory: " + dir);
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const fs::path p = entry.path();
        if (p.extension() == ".hea") ids.push_back(p.stem().string());
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

void write_record(const std::string& dir, const EcgRecord& record, double gain) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const fs::path base = fs::path(dir) / record.record_id;

    {
        std::ofstream hea(base.string() + ".hea");
        if (!hea) throw Error("IoError", "cannot write header for " + record.record_id);
        char fsbuf[32];
        std::snprintf(fsbuf, sizeof(fsbuf), "%g", record.sampling_rate);
        hea << record.record_id << " 1 " << fsbuf << " " << record.samples.size() << "\n";
        hea << record.record_id << ".dat 16 " << static_cast<long long>(gain)
            << " 16 0 0 0 0 ECG\n";
    }

    RecordHeader h;
    h.record_id = record.record_id;
    h.num_signals = 1;
    h.sampling_rate = record.sampling_rate;
    h.num_samples = static_cast<std::int64_t>(record.samples.size());
    h.gains = {gain};
    h.format_codes = {16};
    write_samples_format16(h, base.string() + ".dat", record.samples);
    write_text_labels(base.string() + ".apn.txt", record.minute_labels);
}

}  // namespace mpcnn
