#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

#include <json.hpp>

#include "sparsernn/checkpoint.hpp"
#include "sparsernn/compression.hpp"
#include "sparsernn/training.hpp"

namespace sparsernn {

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

double compression_rate(const CompressionReport& report) {
  if (report.kept == 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(report.total) / static_cast<double>(report.kept);
}

std::string format_compression(const CompressionReport& report) {
  if (report.kept == 0) return "all weights pruned";
  return fixed(compression_rate(report), 2) + "x";
}

std::string report_table(const CompressionReport& r) {
  std::ostringstream out;
  auto metric = [](const std::optional<double>& m) { return m ? fixed(*m, 4) : std::string("-"); };
  std::string neurons = std::to_string(r.neurons.vocabulary) + " - ";
  if (r.full.embedding > 0) neurons += std::to_string(r.neurons.embedding) + " - ";
  neurons += std::to_string(r.neurons.recurrent);
  std::string full = std::to_string(r.full.vocabulary) + " - ";
  if (r.full.embedding > 0) full += std::to_string(r.full.embedding) + " - ";
  full += std::to_string(r.full.recurrent);

  out << "method        " << r.method << "\n";
  out << r.metric_name << " before " << metric(r.metric_before) << "\n";
  out << r.metric_name << " after  " << metric(r.metric_after) << "\n";
  out << "compression   " << format_compression(r) << "  (" << r.kept << " of " << r.total << " weights kept, tau "
      << r.tau << ")\n";
  out << "vocabulary    " << r.neurons.vocabulary << " of " << r.full.vocabulary << "\n";
  out << "neurons       " << neurons << "  (of " << full << ")\n\n";
  out << "matrix          shape          kept / total\n";
  for (const auto& m : r.matrices) {
    char line[160];
    const std::string shape = std::to_string(m.rows) + "x" + std::to_string(m.cols);
    std::snprintf(line, sizeof line, "%-15s %-14s %lld / %lld\n", m.name.c_str(), shape.c_str(),
                  static_cast<long long>(m.kept), static_cast<long long>(m.total));
    out << line;
  }
  out << "\n|w| counts every sparsified weight (embedding, vocabulary multiplier, LSTM and head matrices); biases are "
         "excluded.\n";
  return out.str();
}

std::string report_csv(const CompressionReport& r) {
  std::ostringstream out;
  out << "matrix,rows,cols,total,kept\n";
  for (const auto& m : r.matrices) out << m.name << ',' << m.rows << ',' << m.cols << ',' << m.total << ',' << m.kept << '\n';
  out << "total,,," << r.total << ',' << r.kept << '\n';
  return out.str();
}

std::string sentiment_csv(const std::vector<SentimentRow>& rows) {
  std::ostringstream out;
  out << "word,texts,sentiment_score,kept_components\n";
  for (const auto& row : rows) {
    std::string comps;
    for (const auto& [j, v] : row.components) {
      if (!comps.empty()) comps += ';';
      char buf[64];
      std::snprintf(buf, sizeof buf, "%lld:%.6g", static_cast<long long>(j), v);
      comps += buf;
    }
    std::string word = row.word;
    if (word.find_first_of(",\"\n") != std::string::npos) {
      std::string q = "\"";
      for (char c : word) q += c == '"' ? std::string("\"\"") : std::string(1, c);
      word = q + "\"";
    }
    out << word << ',' << row.texts << ',' << fixed(row.score, 6) << ',' << comps << '\n';
  }
  return out.str();
}

CheckpointHeader check_checkpoint(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < kCheckpointMagic.size() || std::memcmp(bytes.data(), kCheckpointMagic.data(), kCheckpointMagic.size()) != 0)
    throw CheckpointError("not a checkpoint (bad magic)");
  if (bytes.size() < kCheckpointHeader + 4) throw CheckpointError("truncated header");
  ByteReader head(bytes.data() + kCheckpointMagic.size(), kCheckpointHeader - kCheckpointMagic.size());
  CheckpointHeader h;
  h.version = head.get<std::uint32_t>();
  h.scalar_bytes = head.get<std::uint32_t>();
  h.payload = head.get<std::uint64_t>();
  const std::uint64_t expected = kCheckpointHeader + h.payload + 4;
  if (bytes.size() < expected)
    throw CheckpointError("checksum failure: file truncated (" + std::to_string(bytes.size()) + " of " +
                          std::to_string(expected) + " bytes)");
  if (bytes.size() > expected) throw CheckpointError("checksum failure: trailing bytes after checksum");
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
  if (stored != crc32_of(bytes.data(), bytes.size() - 4)) throw CheckpointError("checksum failure: crc32 mismatch");
  if (h.version != kCheckpointVersion)
    throw CheckpointError("version mismatch: file version " + std::to_string(h.version) + ", reader version " +
                          std::to_string(kCheckpointVersion));
  if (h.scalar_bytes != 4 && h.scalar_bytes != 8) throw CheckpointError("unsupported scalar width");
  return h;
}

CheckpointHeader peek_checkpoint(const std::filesystem::path& path) { return check_checkpoint(read_file_bytes(path)); }

std::string EpochRecord::to_json() const {
  nlohmann::json j;
  j["epoch"] = epoch;
  j["split"] = split;
  j["loss"] = loss;
  j["metric"] = metric;
  j["kl_term"] = kl_term;
  j["wall_seconds"] = wall_seconds;
  return j.dump();
}

double task_metric(Task task, double mean_nll, double accuracy) {
  switch (task) {
    case Task::char_lm: return mean_nll / std::log(2.0);
    case Task::word_lm: return std::exp(mean_nll);
    case Task::classify: return 100.0 * accuracy;
  }
  return 0.0;
}

std::string metric_name(Task task) {
  switch (task) {
    case Task::char_lm: return "bpc";
    case Task::word_lm: return "perplexity";
    case Task::classify: return "accuracy";
  }
  return "";
}

}  // namespace sparsernn
