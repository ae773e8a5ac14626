#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "serm/core.hpp"

namespace serm {

// One canonical JSON object per line, LF terminated.
std::string to_jsonl(const std::vector<Json>& rows);

void write_text_file(const std::filesystem::path& path, const std::string& bytes);
std::string read_text_file(const std::filesystem::path& path);

void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows);

// Throws CorruptArtifact naming the file and line on malformed input.
std::vector<Json> read_jsonl(const std::filesystem::path& path);

}  // namespace serm
