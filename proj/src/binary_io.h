// Little-endian primitive readers/writers shared by the binary containers.
#ifndef DIAASQ_SRC_BINARY_IO_H_
#define DIAASQ_SRC_BINARY_IO_H_

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "diaasq/error.h"

namespace diaasq::binary {

inline void PutU32(std::ostream& out, uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

inline void PutU64(std::ostream& out, uint64_t v) {
  PutU32(out, static_cast<uint32_t>(v & 0xffffffffu));
  PutU32(out, static_cast<uint32_t>(v >> 32));
}

inline void PutF32(std::ostream& out, float v) { PutU32(out, std::bit_cast<uint32_t>(v)); }
inline void PutF64(std::ostream& out, double v) { PutU64(out, std::bit_cast<uint64_t>(v)); }

inline void PutString(std::ostream& out, const std::string& s) {
  PutU32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  Reader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}

  void Bytes(char* dst, size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in_.gcount()) != n) {
      throw IoError(what_ + ": unexpected end of file" + context_);
    }
  }

  uint32_t U32() {
    unsigned char b[4];
    Bytes(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  }

  uint64_t U64() {
    const uint64_t lo = U32();
    const uint64_t hi = U32();
    return lo | (hi << 32);
  }

  float F32() { return std::bit_cast<float>(U32()); }
  double F64() { return std::bit_cast<double>(U64()); }

  std::string String(uint32_t max_len = 1u << 30) {
    const uint32_t n = U32();
    if (n > max_len) throw IoError(what_ + ": implausible string length" + context_);
    std::string s(n, '\0');
    Bytes(s.data(), n);
    return s;
  }

  void ExpectMagic(const char* magic) {
    char got[4];
    Bytes(got, 4);
    if (std::memcmp(got, magic, 4) != 0) {
      throw IoError(what_ + ": bad magic, expected \"" + std::string(magic, 4) + "\"");
    }
  }

  bool AtEnd() { return in_.peek() == std::char_traits<char>::eof(); }

  // Appended to error messages, e.g. " at dialogue 3".
  void SetContext(std::string context) { context_ = std::move(context); }

 private:
  std::istream& in_;
  std::string what_;
  std::string context_;
};

}  // namespace diaasq::binary

#endif  // DIAASQ_SRC_BINARY_IO_H_
