#include <algorithm>

#include "sparsernn/data.hpp"
#include "sparsernn/errors.hpp"

namespace sparsernn {

std::vector<Batch> char_lm_batches(std::span<const Index> ids, Index seq_len, Index batch_size) {
  if (seq_len <= 0 || batch_size <= 0) throw DataError("char_lm_batches: seq_len and batch must be positive");
  const auto n = static_cast<Index>(ids.size());
  if (n < seq_len + 1)
    throw DataError("char_lm_batches: corpus of " + std::to_string(n) + " tokens is shorter than one window of " +
                    std::to_string(seq_len + 1));
  const Index windows = (n - 1) / seq_len;
  std::vector<Batch> out;
  for (Index first = 0; first < windows; first += batch_size) {
    Batch b;
    b.batch = std::min(batch_size, windows - first);
    b.steps = seq_len;
    b.inputs.resize(static_cast<std::size_t>(b.batch * seq_len));
    b.targets.resize(b.inputs.size());
    for (Index i = 0; i < b.batch; ++i) {
      const Index start = (first + i) * seq_len;
      for (Index t = 0; t < seq_len; ++t) {
        b.inputs[static_cast<std::size_t>(t * b.batch + i)] = ids[static_cast<std::size_t>(start + t)];
        b.targets[static_cast<std::size_t>(t * b.batch + i)] = ids[static_cast<std::size_t>(start + t + 1)];
      }
    }
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<Batch> word_lm_batches(std::span<const Index> ids, Index unroll, Index batch_size) {
  if (unroll <= 0 || batch_size <= 0) throw DataError("word_lm_batches: unroll and batch must be positive");
  const auto n = static_cast<Index>(ids.size());
  if (n < batch_size * (unroll + 1))
    throw DataError("word_lm_batches: corpus of " + std::to_string(n) + " tokens is shorter than batch*(unroll+1) = " +
                    std::to_string(batch_size * (unroll + 1)));
  const Index stream_len = n / batch_size;
  const Index count = (stream_len - 1) / unroll;
  std::vector<Batch> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index k = 0; k < count; ++k) {
    Batch b;
    b.batch = batch_size;
    b.steps = unroll;
    b.carry_state = k > 0;
    b.inputs.resize(static_cast<std::size_t>(batch_size * unroll));
    b.targets.resize(b.inputs.size());
    for (Index s = 0; s < batch_size; ++s) {
      const Index base = s * stream_len + k * unroll;
      for (Index t = 0; t < unroll; ++t) {
        b.inputs[static_cast<std::size_t>(t * batch_size + s)] = ids[static_cast<std::size_t>(base + t)];
        b.targets[static_cast<std::size_t>(t * batch_size + s)] = ids[static_cast<std::size_t>(base + t + 1)];
      }
    }
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<Batch> classification_batches(std::span<const LabeledSequence> seqs, Index batch_size) {
  if (batch_size <= 0) throw DataError("classification_batches: batch must be positive");
  std::vector<Batch> out;
  const auto n = static_cast<Index>(seqs.size());
  for (Index first = 0; first < n; first += batch_size) {
    Batch b;
    b.classification = true;
    b.batch = std::min(batch_size, n - first);
    Index longest = 0;
    for (Index i = 0; i < b.batch; ++i) {
      const auto len = static_cast<Index>(seqs[static_cast<std::size_t>(first + i)].tokens.size());
      if (len == 0) throw DataError("classification_batches: empty sequence");
      longest = std::max(longest, len);
    }
    b.steps = longest;
    b.inputs.assign(static_cast<std::size_t>(b.batch * longest), Vocabulary::kPad);
    for (Index i = 0; i < b.batch; ++i) {
      const auto& s = seqs[static_cast<std::size_t>(first + i)];
      for (std::size_t t = 0; t < s.tokens.size(); ++t)
        b.inputs[static_cast<std::size_t>(static_cast<Index>(t) * b.batch + i)] = s.tokens[t];
      b.targets.push_back(s.label);
      b.lengths.push_back(static_cast<Index>(s.tokens.size()));
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace sparsernn
