#include "mpcnn/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mpcnn/error.hpp"
#include "mpcnn/version.hpp"

namespace mpcnn {

namespace {

const std::map<std::string, std::string>& default_entries() {
    static const std::map<std::string, std::string> defaults = {
        // annotation decoding
        {"anno.code_n", "1"},
        {"anno.code_a", "8"},
        // band-pass filter
        {"filter.low_hz", "0.5"},
        {"filter.high_hz", "45"},
        {"filter.taps", "401"},
        // windowing and physiological rejection
        {"window.span_minutes", "5"},
        {"reject.min_bpm", "20"},
        {"reject.max_bpm", "200"},
        // R-peak detector
        {"rpeak.emphasis_low_hz", "8"},
        {"rpeak.emphasis_high_hz", "16"},
        {"rpeak.emphasis_taps", "51"},
        {"rpeak.envelope_ms", "80"},
        {"rpeak.threshold_coeff", "0.45"},
        {"rpeak.history", "8"},
        {"rpeak.refractory_ms", "200"},
        {"rpeak.searchback_rr_factor", "1.5"},
        {"rpeak.searchback_threshold_factor", "0.5"},
        {"rpeak.snap_ms", "40"},
        // P-peak windows (samples)
        {"ppeak.w1", "20"},
        {"ppeak.w2", "5"},
        // subsequence / feature extraction
        {"subseq.start", "p"},
        {"subseq.len", "55"},
        {"subseq.q_offset", "5"},
        {"features.length", "900"},
        {"features.channels", "min,max,mean"},
        // training
        {"train.epochs", "100"},
        {"train.batch_size", "128"},
        {"train.lr0", "0.001"},
        {"train.beta1", "0.9"},
        {"train.beta2", "0.999"},
        {"train.adam_eps", "1e-7"},
        {"train.val_fraction", "0.30"},
        {"train.bn_eps", "1e-3"},
        {"train.bn_momentum", "0.99"},
        {"train.dropout", "0.5"},
        // global
        {"seed", "42"},
        {"threads", "0"},
    };
    return defaults;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

Config::Config() : values_(default_entries()) {}

Config Config::from_file(const std::string& path) {
    Config cfg;
    cfg.merge_file(path);
    return cfg;
}

void Config::merge_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("IoError", "cannot open config file: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw Error("BadConfigLine",
                        path + ":" + std::to_string(lineno) + ": expected key=value");
        }
        set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
}

void Config::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw Error("UnknownConfigKey", key);
    it->second = value;
}

bool Config::has(const std::string& key) const {
    return values_.count(key) > 0;
}

const std::string& Config::raw(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw Error("UnknownConfigKey", key);
    return it->second;
}

double Config::get_double(const std::string& key) const {
    const std::string& v = raw(key);
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0') {
        throw Error("BadConfigValue", key + "=" + v + " (expected number)");
    }
    return x;
}

std::int64_t Config::get_int(const std::string& key) const {
    const std::string& v = raw(key);
    char* end = nullptr;
    const long long x = std::strtoll(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0') {
        throw Error("BadConfigValue", key + "=" + v + " (expected integer)");
    }
    return x;
}

std::string Config::get_string(const std::string& key) const { return raw(key); }

bool Config::get_bool(const std::string& key) const {
    const std::string& v = raw(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw Error("BadConfigValue", key + "=" + v + " (expected bool)");
}

std::string Config::serialize() const {
    std::ostringstream out;
    out << "tool=" << kToolName << " " << kToolVersion << "\n";
    for (const auto& [k, v] : values_) out << k << "=" << v << "\n";
    return out.str();
}

}  // namespace mpcnn
