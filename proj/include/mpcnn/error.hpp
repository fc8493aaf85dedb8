#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace mpcnn {

// All recoverable failures carry a short category tag ("UnsupportedFormat",
// "SizeMismatch", ...) so the CLI can print one categorized error line and
// tests can match on the category instead of the message text.
class Error : public std::runtime_error {
public:
    Error(std::string category, std::string message)
        : std::runtime_error("[" + category + "] " + message),
          category_(std::move(category)),
          detail_(std::move(message)) {}

    const std::string& category() const { return category_; }
    // message without the category prefix, for re-wrapping with context
    const std::string& detail() const { return detail_; }

private:
    std::string category_;
    std::string detail_;
};

}  // namespace mpcnn
