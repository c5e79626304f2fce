#pragma once

#include <stdexcept>
#include <string>

namespace crossgram {

// Shape or dimensionality mismatch between operands. Messages name the
// offending shapes so callers can diagnose without a debugger.
class ShapeError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// File-level problems: unreadable paths, bad magic, truncated streams,
// malformed PNG or CGWT payloads.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration: unknown layer names, missing alpha in additive
// mode, nonpositive weights, contradictory job settings.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace crossgram
