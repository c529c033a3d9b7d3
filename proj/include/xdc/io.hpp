#pragma once

// Little-endian byte packing and whole-file helpers shared by the binary
// formats (checkpoints, WAV).

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace xdc {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <class T>
void put_le(std::string& out, T v) {
  std::uint64_t bits = 0;
  if constexpr (std::is_same_v<T, double>)
    bits = std::bit_cast<std::uint64_t>(v);
  else
    bits = static_cast<std::uint64_t>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  template <class T>
  T get(const char* field) {
    need(sizeof(T), field);
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      bits |= static_cast<std::uint64_t>(
                  static_cast<unsigned char>(bytes_[pos_ + i]))
              << (8 * i);
    pos_ += sizeof(T);
    if constexpr (std::is_same_v<T, double>)
      return std::bit_cast<double>(bits);
    else
      return static_cast<T>(bits);
  }

  std::string get_string(std::size_t n, const char* field) {
    need(n, field);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* field) {
    if (pos_ + n > bytes_.size())
      throw IoError(what_ + ": truncated at offset " + std::to_string(pos_) +
                    " while reading " + field);
  }
  const std::string& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path,
                       const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace detail

}  // namespace xdc
