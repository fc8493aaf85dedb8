#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mpcnn {

enum class Label : std::uint8_t { N = 0, A = 1 };

inline char label_char(Label l) { return l == Label::A ? 'A' : 'N'; }

// Parsed .hea header. Only the fields the pipeline needs; extra header
// tokens (ADC resolution, checksums, descriptions) are ignored on read.
struct RecordHeader {
    std::string record_id;
    int num_signals = 0;
    double sampling_rate = 0.0;  // Hz
    std::int64_t num_samples = 0;  // per signal
    std::vector<double> gains;     // adu per mV, one per signal
    std::vector<int> format_codes; // one per signal
};

enum class LabelSource : std::uint8_t { annotation_file, text_file };

struct MinuteLabels {
    std::vector<Label> labels;
    LabelSource source = LabelSource::text_file;
};

struct EcgRecord {
    std::string record_id;
    std::vector<double> samples;  // mV, first signal only
    double sampling_rate = 0.0;   // Hz
    std::vector<Label> minute_labels;
};

// ---- header / samples -------------------------------------------------------

RecordHeader read_header(const std::string& path);

// First-signal samples in mV. Supports format 16 (little-endian int16) and
// format 212 (packed 12-bit pairs). Throws SizeMismatch when the file length
// does not match the header, IoError on read failure.
std::vector<double> read_samples(const RecordHeader& header, const std::string& path);

// Format 16 writer (the counterpart of read_samples for format 16); values
// are converted back to adu with the first signal's gain and rounded.
void write_samples_format16(const RecordHeader& header, const std::string& path,
                            const std::vector<double>& samples_mv);

// ---- annotations ------------------------------------------------------------

using CodeMap = std::map<int, Label>;

inline CodeMap default_code_map() { return CodeMap{{1, Label::N}, {8, Label::A}}; }

// MIT annotation stream: 16-bit little-endian words, code in the high 6 bits,
// time increment (samples) in the low 10. Code 59 is followed by a 4-byte
// extended time (high word first), code 63 announces aux bytes (padded to
// even), codes 60..62 carry field values and no time, word 0x0000 terminates.
MinuteLabels read_annotations(const std::string& path, double sampling_rate,
                              const CodeMap& code_map = default_code_map());

// One "A" or "N" per non-empty line.
MinuteLabels read_text_labels(const std::string& path);

void write_text_labels(const std::string& path, const std::vector<Label>& labels);

// ---- record assembly --------------------------------------------------------

// Reads <dir>/<id>.hea, <id>.dat and the annotations (<id>.apn if present,
// else <id>.apn.txt). Labels are truncated to the signal duration.
EcgRecord load_record(const std::string& dir, const std::string& record_id,
                      const CodeMap& code_map = default_code_map());

// Record ids of all *.hea files in dir, sorted.
std::vector<std::string> list_records(const std::string& dir);

// Minimal .hea + .dat(+ .apn.txt) writer used by the synthetic generator.
void write_record(const std::string& dir, const EcgRecord& record, double gain = 200.0);

}  // namespace mpcnn
