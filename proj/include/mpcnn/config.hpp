#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mpcnn {

// Flat key=value configuration. Every tunable in the pipeline has a key with
// a default; unknown keys are rejected so typos in config files fail loudly.
// The effective (fully resolved) configuration is echoed into every artifact
// the tools write, which is what makes reruns byte-reproducible and auditable.
class Config {
public:
    Config();  // defaults only

    static Config from_file(const std::string& path);

    void set(const std::string& key, const std::string& value);
    void merge_file(const std::string& path);

    const std::string& raw(const std::string& key) const;
    bool has(const std::string& key) const;

    double get_double(const std::string& key) const;
    std::int64_t get_int(const std::string& key) const;
    std::string get_string(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    // Canonical text form: "key=value" lines sorted by key, plus a leading
    // tool version line. Identical configs serialize to identical bytes.
    std::string serialize() const;

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace mpcnn
