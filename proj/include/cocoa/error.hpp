#pragma once

#include <stdexcept>
#include <string>

namespace cocoa {

// All library failures carry a stable machine-checkable code next to the
// human-readable message, so callers (and tests) can branch on the code
// without parsing text.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

    const std::string& code() const { return code_; }

private:
    std::string code_;
};

inline void require(bool cond, const std::string& code, const std::string& message) {
    if (!cond) throw Error(code, message);
}

} // namespace cocoa
