#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace mtvssl::binary {

// Little-endian scalar I/O independent of host byte order.
template <typename T>
void write_le(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

// Raised on short reads; `offset` is where the read started.
class TruncatedError : public std::runtime_error {
 public:
  TruncatedError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

inline std::uint64_t tell(std::istream& is) {
  const auto pos = is.tellg();
  return pos < 0 ? 0 : static_cast<std::uint64_t>(pos);
}

inline void read_bytes(std::istream& is, void* dst, std::size_t n, const char* what) {
  const std::uint64_t at = tell(is);
  is.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw TruncatedError(std::string("unexpected end of file reading ") + what, at);
  }
}

template <typename T>
T read_le(std::istream& is, const char* what) {
  unsigned char bytes[sizeof(T)];
  read_bytes(is, bytes, sizeof(T), what);
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace mtvssl::binary
