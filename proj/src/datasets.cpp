#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "sparsernn/data.hpp"
#include "sparsernn/errors.hpp"
#include "sparsernn/rng.hpp"

namespace sparsernn {

std::vector<LabeledText> load_classification_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<LabeledText> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    auto fail = [&](const std::string& why) {
      return DataError(path.string() + ":" + std::to_string(lineno) + ": " + why);
    };
    if (tab == std::string::npos) throw fail("expected label<TAB>text");
    Index label = -1;
    const char* first = line.data();
    const char* last = line.data() + tab;
    auto [ptr, ec] = std::from_chars(first, last, label);
    if (ec != std::errc() || ptr != last || label < 0) throw fail("label must be a non-negative integer");
    rows.push_back({label, line.substr(tab + 1)});
  }
  return rows;
}

void write_classification_tsv(const std::filesystem::path& path, std::span<const LabeledText> rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : rows) out << r.label << '\t' << r.text << '\n';
}

std::vector<std::string> classification_tokens(std::span<const LabeledText> rows) {
  std::vector<std::string> all;
  for (const auto& r : rows) {
    auto t = tokenize(r.text, Unit::word);
    all.insert(all.end(), std::make_move_iterator(t.begin()), std::make_move_iterator(t.end()));
  }
  return all;
}

std::vector<LabeledSequence> encode_classification(std::span<const LabeledText> rows, const Vocabulary& vocab) {
  std::vector<LabeledSequence> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    LabeledSequence s;
    s.label = r.label;
    s.tokens.push_back(Vocabulary::kStart);
    const auto ids = vocab.encode_text(r.text);
    s.tokens.insert(s.tokens.end(), ids.begin(), ids.end());
    out.push_back(std::move(s));
  }
  return out;
}

EmbeddingLoad load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab, Tensor<double> defaults) {
  if (defaults.rows() != vocab.size())
    throw DimensionError("load_embeddings: default table has " + std::to_string(defaults.rows()) + " rows for " +
                         std::to_string(vocab.size()) + " words");
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  EmbeddingLoad result;
  result.covered.assign(static_cast<std::size_t>(vocab.size()), false);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    std::vector<double> values;
    std::string field;
    while (fields >> field) {
      double v = 0;
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || ptr != field.data() + field.size())
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + field + "'");
      values.push_back(v);
    }
    if (lineno == 1 && values.size() == 1) continue;  // word2vec "count dim" header
    if (static_cast<Index>(values.size()) != defaults.cols())
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": dimension " + std::to_string(values.size()) +
                      ", expected " + std::to_string(defaults.cols()));
    if (!vocab.contains(token)) continue;
    const Index row = vocab.id(token);
    for (Index j = 0; j < defaults.cols(); ++j) defaults(row, j) = values[static_cast<std::size_t>(j)];
    result.covered[static_cast<std::size_t>(row)] = true;
  }
  result.table = std::move(defaults);
  const auto hit = std::count(result.covered.begin(), result.covered.end(), true);
  result.coverage = vocab.size() > 0 ? static_cast<double>(hit) / static_cast<double>(vocab.size()) : 0.0;
  return result;
}

namespace {

std::string synth_word(Index i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "w%03ld", static_cast<long>(i));
  return buf;
}

}  // namespace

SynthDataset synth_classification(Index n_objects, Index vocab_size, Index n_signal_words, Index seq_len,
                                  std::uint64_t seed) {
  if (n_objects <= 0 || vocab_size <= 0 || seq_len <= 0 || n_signal_words < 0)
    throw DataError("synth_classification: sizes must be positive");
  if (n_signal_words >= vocab_size) throw DataError("synth_classification: need n_signal_words < vocab_size");
  if (n_signal_words % 2 != 0) throw DataError("synth_classification: n_signal_words must be even (two classes)");
  if (n_signal_words > 0 && seq_len < 3) throw DataError("synth_classification: seq_len must be >= 3");

  SynthDataset data;
  for (Index i = 0; i < vocab_size; ++i) data.vocabulary_words.push_back(synth_word(i));

  RngStream pick = RngStream(seed).derive("signal");
  std::vector<Index> order(static_cast<std::size_t>(vocab_size));
  for (Index i = 0; i < vocab_size; ++i) order[static_cast<std::size_t>(i)] = i;
  for (Index i = vocab_size - 1; i > 0; --i)  // Fisher-Yates
    std::swap(order[static_cast<std::size_t>(i)], order[pick.below(static_cast<std::uint64_t>(i + 1))]);
  std::vector<Index> signal(order.begin(), order.begin() + n_signal_words);
  std::vector<Index> noise(order.begin() + n_signal_words, order.end());
  std::sort(noise.begin(), noise.end());
  const Index half = n_signal_words / 2;
  for (Index k = 0; k < n_signal_words; ++k) {
    data.signal_words.push_back(synth_word(signal[static_cast<std::size_t>(k)]));
    data.signal_class.push_back(k < half ? 0 : 1);
  }

  RngStream rng = RngStream(seed).derive("texts");
  for (Index n = 0; n < n_objects; ++n) {
    std::vector<Index> words(static_cast<std::size_t>(seq_len));
    for (auto& w : words) w = noise[rng.below(noise.size())];
    const Index label = static_cast<Index>(rng.below(2));
    if (n_signal_words > 0) {
      const Index lo = label == 0 ? 0 : half;
      const Index hi = label == 0 ? half : n_signal_words;
      const Index count = 1 + static_cast<Index>(rng.below(3));
      std::set<Index> slots;
      while (static_cast<Index>(slots.size()) < count) slots.insert(static_cast<Index>(rng.below(static_cast<std::uint64_t>(seq_len))));
      for (Index s : slots)
        words[static_cast<std::size_t>(s)] = signal[static_cast<std::size_t>(lo + static_cast<Index>(rng.below(static_cast<std::uint64_t>(hi - lo))))];
    }
    std::string text;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i) text.push_back(' ');
      text += synth_word(words[i]);
    }
    data.texts.push_back({label, std::move(text)});
  }
  return data;
}

Index synth_rule_label(const SynthDataset& data, std::string_view text) {
  for (const auto& tok : tokenize(text, Unit::word)) {
    auto it = std::find(data.signal_words.begin(), data.signal_words.end(), tok);
    if (it != data.signal_words.end()) return data.signal_class[static_cast<std::size_t>(it - data.signal_words.begin())];
  }
  return -1;
}

}  // namespace sparsernn
