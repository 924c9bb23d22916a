#pragma once

#include <stdexcept>
#include <string>

namespace mrtok {

/// Malformed or unreadable input data (bad PPM header, bad tensor magic, ...).
class format_error : public std::runtime_error {
public:
    explicit format_error(const std::string& what) : std::runtime_error(what) {}
};

/// A violated numeric or structural contract (dimension mismatch, unreachable
/// patch target, non-finite score, ...).
class contract_error : public std::runtime_error {
public:
    explicit contract_error(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw contract_error(msg);
}

}  // namespace mrtok
