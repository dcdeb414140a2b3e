#pragma once

#include <cstdint>
#include <cstring>
#include <string>

#include "poibench/errors.hpp"

// little-endian binary buffer helpers shared by the store and model
// checkpoint formats

namespace poibench::util::binio {

inline void put_u32(std::string& buf, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>(v >> (8 * i));
  buf.append(b, 4);
}

inline void put_u64(std::string& buf, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(v >> (8 * i));
  buf.append(b, 8);
}

inline void put_i32(std::string& buf, std::int32_t v) { put_u32(buf, static_cast<std::uint32_t>(v)); }
inline void put_i64(std::string& buf, std::int64_t v) { put_u64(buf, static_cast<std::uint64_t>(v)); }

inline void put_f64(std::string& buf, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(buf, bits);
}

inline void put_str(std::string& buf, const std::string& s) {
  put_u64(buf, s.size());
  buf.append(s);
}

struct Reader {
  const std::string& buf;
  const char* what;  // goes into truncation errors, e.g. "store"
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size())
      throw DataError(std::string("corrupt ") + what + " file: truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= std::uint32_t(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= std::uint64_t(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  // guard before resize: a count must fit in the remaining bytes
  std::uint64_t count(std::size_t bytes_per_element) {
    const std::uint64_t n = u64();
    need(n * bytes_per_element);
    return n;
  }
};

}  // namespace poibench::util::binio
