#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace poibench::util {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

/// Pick tab or comma by which occurs in the first non-empty line.
/// Tab wins when both appear (tab-separated data with commas inside values
/// is far more common than the reverse in check-in dumps).
inline char detect_delimiter(std::string_view text) {
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = trim(text.substr(pos, end - pos));
    if (!line.empty()) {
      if (line.find('\t') != std::string_view::npos) return '\t';
      if (line.find(',') != std::string_view::npos) return ',';
      return '\t';
    }
    pos = end + 1;
  }
  return '\t';
}

inline std::vector<std::string_view> split_fields(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t end = line.find(delim, pos);
    if (end == std::string_view::npos) {
      out.push_back(trim(line.substr(pos)));
      break;
    }
    out.push_back(trim(line.substr(pos, end - pos)));
    pos = end + 1;
  }
  return out;
}

/// Iterate lines of `text`, invoking fn(line_number, line) with 1-based
/// numbering. Blank lines are passed through so callers can skip them while
/// keeping line numbers aligned with the file.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    fn(line_no, text.substr(pos, end - pos));
    pos = end + 1;
  }
}

}  // namespace poibench::util
