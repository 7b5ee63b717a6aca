#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>

#include "kinhier/errors.hpp"

namespace kinhier {

/// Shortest decimal that round-trips a double exactly.
inline std::string format_full(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

/// Write-then-rename: the final name either holds the previous content or the
/// complete new content, never a partial file.
inline void atomic_write(const std::filesystem::path& path,
                         const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw numeric_error("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw numeric_error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot read " + path.string());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

}  // namespace kinhier
