#ifndef SPARSERNN_CHECKPOINT_HPP
#define SPARSERNN_CHECKPOINT_HPP

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sparsernn/binary_io.hpp"
#include "sparsernn/data.hpp"
#include "sparsernn/model.hpp"

namespace sparsernn {

// Layout (little-endian):
//   magic[8] "SPRSRNN\0" | u32 version | u32 scalar bytes (4 or 8) | u64 payload length
//   payload | u32 crc32 of everything before it
// The payload holds the config echo, free-form metadata, the model config,
// the vocabulary, each GaussianParam (name, θ, log σ, optional mask) and the biases.
inline constexpr std::array<char, 8> kCheckpointMagic{'S', 'P', 'R', 'S', 'R', 'N', 'N', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::size_t kCheckpointHeader = 8 + 4 + 4 + 8;

template <class Scalar>
struct Checkpoint {
  Model<Scalar> model;
  std::optional<PruneMask<Scalar>> mask;
  Vocabulary vocab;
  std::string config_echo;  // the flat key=value config the run was started with
  std::map<std::string, std::string> meta;
};

struct CheckpointHeader {
  std::uint32_t version = 0;
  std::uint32_t scalar_bytes = 0;
  std::uint64_t payload = 0;
};

// Validates magic, size and checksum, then the version. Throws CheckpointError with a diagnosis.
CheckpointHeader check_checkpoint(const std::vector<unsigned char>& bytes);
CheckpointHeader peek_checkpoint(const std::filesystem::path& path);

template <class Scalar>
std::vector<unsigned char> serialize_checkpoint(const Checkpoint<Scalar>& ck) {
  ByteWriter body;
  body.put_string(ck.config_echo);
  body.put<std::uint32_t>(static_cast<std::uint32_t>(ck.meta.size()));
  for (const auto& [k, v] : ck.meta) {
    body.put_string(k);
    body.put_string(v);
  }
  const auto& c = ck.model.config;
  body.put<std::uint32_t>(static_cast<std::uint32_t>(c.task));
  body.put<std::uint32_t>(static_cast<std::uint32_t>(c.mode));
  body.put<std::int64_t>(c.vocab_size);
  body.put<std::int64_t>(c.embedding_dim);
  body.put<std::int64_t>(c.hidden);
  body.put<std::int64_t>(c.outputs);
  body.put<std::uint8_t>(c.lrt_head ? 1 : 0);
  body.put<double>(c.log_sigma_init);
  ck.vocab.write(body);

  const auto params = ck.model.gaussian_params();
  body.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    body.put_string(p->name);
    body.put_tensor(p->theta);
    body.put_tensor(p->log_sigma);
    const auto* m = ck.mask ? ck.mask->find(p->name) : nullptr;
    body.put<std::uint8_t>(m ? 1 : 0);
    if (m) body.put_tensor(*m);
  }
  const auto biases = ck.model.biases();
  body.put<std::uint32_t>(static_cast<std::uint32_t>(biases.size()));
  for (const auto& [name, t] : biases) {
    body.put_string(name);
    body.put_tensor(*t);
  }

  ByteWriter out;
  out.put_bytes(kCheckpointMagic.data(), kCheckpointMagic.size());
  out.put<std::uint32_t>(kCheckpointVersion);
  out.put<std::uint32_t>(sizeof(Scalar));
  out.put<std::uint64_t>(body.bytes().size());
  out.put_bytes(body.bytes().data(), body.bytes().size());
  out.put<std::uint32_t>(crc32_of(out.bytes().data(), out.bytes().size()));
  return std::move(out.bytes());
}

template <class Scalar>
Checkpoint<Scalar> deserialize_checkpoint(const std::vector<unsigned char>& bytes) {
  const auto header = check_checkpoint(bytes);
  if (header.scalar_bytes != sizeof(Scalar))
    throw CheckpointError("precision mismatch: file stores " + std::to_string(header.scalar_bytes * 8) +
                          "-bit scalars, reader expects " + std::to_string(sizeof(Scalar) * 8));
  ByteReader in(bytes.data() + kCheckpointHeader, static_cast<std::size_t>(header.payload));

  Checkpoint<Scalar> ck;
  ck.config_echo = in.get_string();
  const auto n_meta = in.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto k = in.get_string();
    ck.meta[k] = in.get_string();
  }
  ModelConfig c;
  const auto task = in.get<std::uint32_t>(), mode = in.get<std::uint32_t>();
  if (task > 2 || mode > 2) throw CheckpointError("unknown task or mode code");
  c.task = static_cast<Task>(task);
  c.mode = static_cast<Mode>(mode);
  c.vocab_size = in.get<std::int64_t>();
  c.embedding_dim = in.get<std::int64_t>();
  c.hidden = in.get<std::int64_t>();
  c.outputs = in.get<std::int64_t>();
  c.lrt_head = in.get<std::uint8_t>() != 0;
  c.log_sigma_init = in.get<double>();
  ck.vocab = Vocabulary::read(in);

  try {
    ck.model = Model<Scalar>::create(c, 0);
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("stored model config is invalid: ") + e.what());
  }
  auto params = ck.model.gaussian_params();
  const auto n_params = in.get<std::uint32_t>();
  if (n_params != params.size()) throw CheckpointError("parameter count does not match the stored model config");
  PruneMask<Scalar> mask;
  for (std::uint32_t i = 0; i < n_params; ++i) {
    const auto name = in.get_string();
    auto* p = ck.model.find(name);
    if (!p) throw CheckpointError("unknown parameter " + name);
    auto theta = in.get_tensor<Scalar>();
    auto log_sigma = in.get_tensor<Scalar>();
    if (theta.rows() != p->rows() || theta.cols() != p->cols() || log_sigma.rows() != p->rows() ||
        log_sigma.cols() != p->cols())
      throw CheckpointError("shape mismatch for " + name);
    p->theta = std::move(theta);
    p->log_sigma = std::move(log_sigma);
    if (in.get<std::uint8_t>()) {
      auto m = in.get_tensor<Scalar>();
      if (m.rows() != p->rows() || m.cols() != p->cols()) throw CheckpointError("mask shape mismatch for " + name);
      mask.keep[name] = std::move(m);
    }
  }
  if (!mask.keep.empty()) ck.mask = std::move(mask);
  auto biases = ck.model.biases();
  const auto n_biases = in.get<std::uint32_t>();
  if (n_biases != biases.size()) throw CheckpointError("bias count does not match the stored model config");
  for (std::uint32_t i = 0; i < n_biases; ++i) {
    const auto name = in.get_string();
    auto t = in.get_tensor<Scalar>();
    bool found = false;
    for (auto& [bn, bt] : biases) {
      if (bn != name) continue;
      if (t.rows() != bt->rows() || t.cols() != bt->cols()) throw CheckpointError("shape mismatch for " + name);
      *bt = std::move(t);
      found = true;
    }
    if (!found) throw CheckpointError("unknown bias " + name);
  }
  if (in.remaining() != 0) throw CheckpointError("trailing bytes after payload");
  return ck;
}

template <class Scalar>
void save_checkpoint(const Checkpoint<Scalar>& ck, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_checkpoint(ck));
}

template <class Scalar>
Checkpoint<Scalar> load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint<Scalar>(read_file_bytes(path));
}

}  // namespace sparsernn

#endif  // SPARSERNN_CHECKPOINT_HPP
