#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace attribkit {

// SplitMix64 finalizer; used to derive independent seeds from (seed, component, index).
std::uint64_t mix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view component, std::uint64_t index = 0);

// FNV-1a, 64 bit.
std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

std::string read_file(const std::filesystem::path& path);
std::vector<std::string> read_lines(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Minimal RFC 4180 quoting: fields containing ',', '"' or newlines are quoted.
std::string csv_escape(std::string_view field);
std::vector<std::string> parse_csv_line(std::string_view line);

// Fixed-precision decimal formatting ("%.*f").
std::string fmt_fixed(double v, int digits);
// Round-trip formatting ("%.17g").
std::string fmt_exact(double v);

// Runs fn(i) for i in [0, n) over at most `jobs` threads. Exceptions from
// workers are rethrown (lowest index first) after all threads have joined.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace attribkit
