#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace rival {

// Writes bytes to path via a sibling temp file + rename, so readers never
// observe a partially written artifact.
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& bytes);

std::string read_file(const std::filesystem::path& path);

std::string trim(const std::string& s);

// One "key = value" assignment with its 1-based source line.
struct KvEntry {
    int line = 0;
    std::string key;
    std::string value;
};

// Line-oriented "key = value" syntax, '#' starts a comment, blank lines
// ignored. Malformed lines raise FormatError naming the line.
std::vector<KvEntry> parse_key_value_lines(const std::string& text);

std::string format_double(double v);  // round-trip exact (%.17g)

}  // namespace rival
