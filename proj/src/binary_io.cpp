#include "sparsernn/binary_io.hpp"

#include <zlib.h>

#include <fstream>
#include <iterator>

namespace sparsernn {

void ByteWriter::put_string(const std::string& s) {
  put<std::uint64_t>(s.size());
  put_bytes(s.data(), s.size());
}

void ByteWriter::put_bytes(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  bytes_.insert(bytes_.end(), p, p + n);
}

const unsigned char* ByteReader::take(std::size_t n) {
  if (n > size_ - pos_) throw CheckpointError("unexpected end of data");
  const unsigned char* p = data_ + pos_;
  pos_ += n;
  return p;
}

std::string ByteReader::get_string() {
  const auto n = get<std::uint64_t>();
  if (n > remaining()) throw CheckpointError("string length exceeds data");
  const auto* p = take(n);
  return std::string(reinterpret_cast<const char*>(p), n);
}

std::uint32_t crc32_of(const unsigned char* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace sparsernn
