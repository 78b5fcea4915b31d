#ifndef SPARSERNN_DATA_HPP
#define SPARSERNN_DATA_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sparsernn/tensor.hpp"

namespace sparsernn {

class ByteWriter;
class ByteReader;

enum class Unit { character, word };

// Characters are UTF-8 code points. Words are whitespace-separated after ASCII
// lowercasing; punctuation stays attached. Word detokenisation joins with a
// single space, so round trips hold modulo whitespace runs and case.
std::vector<std::string> tokenize(std::string_view text, Unit unit);
std::string detokenize(std::span<const std::string> tokens, Unit unit);

// Dense id space [0, V) with the specials at fixed ids.
class Vocabulary {
 public:
  static constexpr Index kPad = 0;
  static constexpr Index kStart = 1;
  static constexpr Index kOov = 2;
  static constexpr Index kSpecials = 3;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kStartToken = "<start>";
  static constexpr std::string_view kOovToken = "<oov>";

  Vocabulary();  // specials only

  // Keeps the most frequent tokens so that size() <= max_size (specials
  // included); frequency ties go to the lexicographically smaller token.
  static Vocabulary build(std::span<const std::string> tokens, Unit unit, Index max_size);

  Index size() const { return static_cast<Index>(tokens_.size()); }
  Unit unit() const { return unit_; }
  Index id(std::string_view token) const;  // kOov when absent
  bool contains(std::string_view token) const;
  const std::string& token(Index id) const;
  std::uint64_t frequency(Index id) const { return freq_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<Index> encode(std::span<const std::string> tokens) const;
  std::vector<Index> encode_text(std::string_view text) const;
  std::string decode(std::span<const Index> ids) const;

  void write(ByteWriter& out) const;
  static Vocabulary read(ByteReader& in);

  bool operator==(const Vocabulary&) const = default;

 private:
  Unit unit_ = Unit::word;
  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> freq_;
  std::unordered_map<std::string, Index> index_;
};

Vocabulary build_vocab(std::string_view corpus, Unit unit, Index max_size);

// One minibatch. Token ids are stored time-major: element (t, i) lives at
// t * batch + i, so each timestep is a contiguous span.
struct Batch {
  Index batch = 0;
  Index steps = 0;
  std::vector<Index> inputs;
  std::vector<Index> targets;  // LM: time-major next tokens; classification: one label per row
  std::vector<Index> lengths;  // classification: true lengths before padding
  bool classification = false;
  bool carry_state = false;  // stateful LM: continue from the previous batch's final state

  std::span<const Index> input_step(Index t) const {
    return {inputs.data() + t * batch, static_cast<std::size_t>(batch)};
  }
  std::span<const Index> target_step(Index t) const {
    return {targets.data() + t * batch, static_cast<std::size_t>(batch)};
  }
  Index input(Index row, Index t) const { return inputs[static_cast<std::size_t>(t * batch + row)]; }
  Index target(Index row, Index t) const { return targets[static_cast<std::size_t>(t * batch + row)]; }
  Index predictions() const { return classification ? batch : batch * steps; }
};

// Non-overlapping windows of seq_len inputs (targets shifted by one), grouped
// into batches of up to batch_size in corpus order. Every batch starts from a
// zero state.
std::vector<Batch> char_lm_batches(std::span<const Index> ids, Index seq_len, Index batch_size);

// Splits the corpus into batch_size contiguous streams laid side by side; batch
// k holds steps [k·unroll, (k+1)·unroll) of every stream.
std::vector<Batch> word_lm_batches(std::span<const Index> ids, Index unroll, Index batch_size);

struct LabeledText {
  Index label = 0;
  std::string text;
};

struct LabeledSequence {
  Index label = 0;
  std::vector<Index> tokens;  // start-prefixed
};

// `label<TAB>text` per line; labels are non-negative integers.
std::vector<LabeledText> load_classification_tsv(const std::filesystem::path& path);
void write_classification_tsv(const std::filesystem::path& path, std::span<const LabeledText> rows);

std::vector<std::string> classification_tokens(std::span<const LabeledText> rows);
std::vector<LabeledSequence> encode_classification(std::span<const LabeledText> rows, const Vocabulary& vocab);

// Groups sequences (in the given order) into padded batches. Padding is on the
// right with the pad id; true lengths are recorded.
std::vector<Batch> classification_batches(std::span<const LabeledSequence> seqs, Index batch_size);

struct EmbeddingLoad {
  Tensor<double> table;  // V×d
  std::vector<bool> covered;
  double coverage = 0;  // covered rows / V
};

// Text vectors, `token v1 … vd` per line (an optional word2vec `count dim`
// header line is skipped). Rows of `defaults` are kept for tokens the file
// does not mention.
EmbeddingLoad load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab, Tensor<double> defaults);

struct SynthDataset {
  std::vector<LabeledText> texts;
  std::vector<std::string> signal_words;
  std::vector<Index> signal_class;  // class announced by each signal word
  std::vector<std::string> vocabulary_words;
};

// Random-token texts over `vocab_size` words w000…; the first half of the
// signal words announce class 0 and the rest class 1. Each text receives one
// to three signal words of its label's class, so the label is determined by
// which signal words are present. With no signal words labels are coin flips.
SynthDataset synth_classification(Index n_objects, Index vocab_size, Index n_signal_words, Index seq_len,
                                  std::uint64_t seed);

// The generating rule applied to a text: the class of the first signal word
// present, or -1 if none.
Index synth_rule_label(const SynthDataset& data, std::string_view text);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace sparsernn

#endif  // SPARSERNN_DATA_HPP
