#pragma once

#include <stdexcept>
#include <string>

namespace netdissect {

/// Every failure the engine reports. `kind` is a short machine-readable tag
/// ("io", "format", "invalid_argument", "cache_miss", "network", "parse")
/// that the CLI copies into its error JSON.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

inline Error io_error(const std::string& msg) { return {"io", msg}; }
inline Error format_error(const std::string& msg) { return {"format", msg}; }
inline Error invalid_argument(const std::string& msg) { return {"invalid_argument", msg}; }

}  // namespace netdissect
