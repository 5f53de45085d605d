#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dxagent {

std::string to_lower(std::string_view text);
std::string_view trim(std::string_view text) noexcept;
std::vector<std::string> split(std::string_view text, char sep);
bool contains_word(std::string_view haystack, std::string_view needle);

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

// Stable 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view data);

// Returns the largest balanced top-level {...} object in free text (string
// literals and escapes respected), or nullopt if none exists. Model replies
// often wrap JSON in prose or code fences.
std::optional<std::string> extract_json_object(std::string_view text);

// Reads a file, transparently inflating gzip content. max_bytes limits the
// decoded size (0 = unlimited).
std::string read_file_maybe_gzip(const std::filesystem::path& path, std::size_t max_bytes = 0);

// Inflates an in-memory buffer if it starts with the gzip magic, otherwise
// returns the first max_bytes bytes unchanged (0 = unlimited).
std::string maybe_gunzip(std::string_view bytes, std::size_t max_bytes = 0);

std::string read_text_file(const std::filesystem::path& path);

// Write to a temp file then rename; readers never observe partial content.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
void append_line(const std::filesystem::path& path, std::string_view line);

std::int64_t now_ms();

}  // namespace dxagent
