#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace placer {

// FNV-1a, used for deterministic content keys (prompt hashes, cache file
// names, stub embeddings). Not cryptographic.
uint64_t fnv1a64(const void* data, size_t size, uint64_t seed = 0xcbf29ce484222325ULL);
uint64_t fnv1a64(const std::string& s, uint64_t seed = 0xcbf29ce484222325ULL);

std::string to_hex(uint64_t value);

std::string lowercase(const std::string& s);

// Case-insensitive search; returns std::string::npos when absent.
size_t find_ci(const std::string& haystack, const std::string& needle);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);
void ensure_directory(const std::string& path);
bool file_exists(const std::string& path);

std::string base64_encode(const std::vector<uint8_t>& bytes);

std::vector<std::string> split(const std::string& s, char sep);
std::string trim(const std::string& s);

std::string format_double(double v);

}  // namespace placer
