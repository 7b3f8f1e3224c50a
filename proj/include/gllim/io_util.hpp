#pragma once

#include <cstdint>
#include <string>

namespace gllim {

/// Shortest round-trip decimal form of a double (17 significant digits);
/// parsing it back recovers the exact bit pattern.
std::string format_g17(double v);

/// strtod with full-string validation; throws ParseError tagged with
/// (row, column) on failure.
double parse_double(const std::string& token, std::int64_t row, std::int64_t column);

/// Writes content to path via a temporary file in the same directory followed
/// by an atomic rename, so failures never leave partial outputs behind.
void atomic_write_file(const std::string& path, const std::string& content);

/// FNV-1a 64-bit hash of a file's bytes, as 16 hex digits. Used for manifest
/// input fingerprints.
std::string file_fingerprint(const std::string& path);

}  // namespace gllim
