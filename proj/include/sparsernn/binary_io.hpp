#ifndef SPARSERNN_BINARY_IO_HPP
#define SPARSERNN_BINARY_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <type_traits>
#include <vector>

#include "sparsernn/errors.hpp"
#include "sparsernn/tensor.hpp"

namespace sparsernn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

// Append-only little-endian byte buffer.
class ByteWriter {
 public:
  template <class T>
    requires std::is_arithmetic_v<T>
  void put(T v) {
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }

  void put_string(const std::string& s);
  void put_bytes(const void* data, std::size_t n);

  template <class Scalar>
  void put_tensor(const Tensor<Scalar>& t) {
    put<std::uint64_t>(static_cast<std::uint64_t>(t.rows()));
    put<std::uint64_t>(static_cast<std::uint64_t>(t.cols()));
    put_bytes(t.data(), sizeof(Scalar) * static_cast<std::size_t>(t.size()));
  }

  const std::vector<unsigned char>& bytes() const { return bytes_; }
  std::vector<unsigned char>& bytes() { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  ByteReader(const unsigned char* data, std::size_t size) : data_(data), size_(size) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }

  std::string get_string();

  template <class Scalar>
  Tensor<Scalar> get_tensor() {
    const auto rows = get<std::uint64_t>();
    const auto cols = get<std::uint64_t>();
    if (rows > (1ULL << 32) || cols > (1ULL << 32)) throw CheckpointError("implausible tensor shape");
    Tensor<Scalar> t(static_cast<Index>(rows), static_cast<Index>(cols));
    std::memcpy(t.data(), take(sizeof(Scalar) * rows * cols), sizeof(Scalar) * rows * cols);
    return t;
  }

  std::size_t remaining() const { return size_ - pos_; }

 private:
  const unsigned char* take(std::size_t n);

  const unsigned char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(const unsigned char* data, std::size_t size);

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);
// Writes to a sibling temporary and renames, so readers never see a partial file.
void write_file_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes);

}  // namespace sparsernn

#endif  // SPARSERNN_BINARY_IO_HPP
