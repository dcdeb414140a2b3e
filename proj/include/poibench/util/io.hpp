#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "poibench/errors.hpp"

namespace poibench::util {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file for reading: " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

/// Write via temp file + rename so readers never observe a partial file and
/// an interrupted run cannot leave a corrupt artifact in place.
inline void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open file for writing: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace poibench::util
