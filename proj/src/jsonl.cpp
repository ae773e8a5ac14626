#include "serm/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "serm/errors.hpp"

namespace serm {

std::string to_jsonl(const std::vector<Json>& rows) {
  std::string out;
  for (const auto& row : rows) {
    out += canonical_dump(row);
    out += '\n';
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << bytes;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptArtifact(path.string(), "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows) {
  write_text_file(path, to_jsonl(rows));
}

std::vector<Json> read_jsonl(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::vector<Json> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      rows.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw CorruptArtifact(path.string(), "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace serm
