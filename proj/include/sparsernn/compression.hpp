#ifndef SPARSERNN_COMPRESSION_HPP
#define SPARSERNN_COMPRESSION_HPP

#include <limits>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "sparsernn/data.hpp"
#include "sparsernn/model.hpp"

namespace sparsernn {

inline constexpr double kDefaultTau = 0.05;

// keep_ij = [SNR_ij ≥ τ] for every GaussianParam, z included. A word whose z is
// pruned is removed from the model, so its input-table row is pruned with it.
// The baseline has no posterior variance; its mask keeps everything.
template <class Scalar>
PruneMask<Scalar> prune_by_snr(const Model<Scalar>& model, double tau = kDefaultTau) {
  PruneMask<Scalar> mask;
  for (const auto* p : model.gaussian_params()) {
    if (!model.variational()) {
      mask.keep[p->name] = Tensor<Scalar>::Ones(p->rows(), p->cols());
      continue;
    }
    const Tensor<Scalar> s = snr(*p);
    mask.keep[p->name] = (s.array() >= static_cast<Scalar>(tau)).template cast<Scalar>().matrix();
  }
  if (model.vocab) {
    const auto& z = mask.keep.at(model.vocab->z.name);
    auto& rows = mask.keep.at(model.input_table().name);
    for (Index v = 0; v < z.cols(); ++v)
      if (z(0, v) == Scalar(0)) rows.row(v).setZero();
  }
  return mask;
}

// θ ← θ ∘ mask. Applying the same mask again changes nothing.
template <class Scalar>
void apply_mask(Model<Scalar>& model, const PruneMask<Scalar>& mask) {
  for (auto* p : model.gaussian_params()) {
    const auto* k = mask.find(p->name);
    if (!k) continue;
    if (k->rows() != p->rows() || k->cols() != p->cols())
      throw DimensionError("apply_mask: mask " + shape_string(*k) + " for " + p->name + " " + shape_string(p->theta));
    p->theta = p->theta.cwiseProduct(*k);
  }
}

// Elementwise AND of two masks over the names both contain.
template <class Scalar>
PruneMask<Scalar> intersect(const PruneMask<Scalar>& a, const PruneMask<Scalar>& b) {
  PruneMask<Scalar> out = a;
  for (auto& [name, m] : out.keep)
    if (const auto* o = b.find(name)) m = m.cwiseProduct(*o);
  return out;
}

struct NeuronCounts {
  Index vocabulary = 0;
  Index embedding = 0;  // 0 when the model has no embedding layer
  Index recurrent = 0;
  bool operator==(const NeuronCounts&) const = default;
};

namespace detail {

template <class Scalar>
Tensor<Scalar> keep_of(const GaussianParam<Scalar>& p, const std::type_identity_t<PruneMask<Scalar>>* mask) {
  const auto* k = mask ? mask->find(p.name) : nullptr;
  return k ? *k : Tensor<Scalar>(Tensor<Scalar>::Ones(p.rows(), p.cols()));
}

}  // namespace detail

// A unit is active iff at least one kept weight enters or leaves it.
//   vocabulary: z keep flags when z exists, else input-table rows with a kept weight;
//   embedding unit j: column j of W^e (incoming) or row j of W^x (outgoing);
//   recurrent unit k: the four gate columns k of W^x and W^h (incoming),
//                     row k of W^h or row k of the head (outgoing).
template <class Scalar>
NeuronCounts count_neurons(const Model<Scalar>& model, const std::type_identity_t<PruneMask<Scalar>>* mask = nullptr) {
  NeuronCounts n;
  const Tensor<Scalar> wx = detail::keep_of(model.lstm.w_x, mask);
  const Tensor<Scalar> wh = detail::keep_of(model.lstm.w_h, mask);
  const Tensor<Scalar> wd = detail::keep_of(model.head.weights, mask);
  const Tensor<Scalar> table = detail::keep_of(model.input_table(), mask);

  if (model.vocab) {
    const Tensor<Scalar> z = detail::keep_of(model.vocab->z, mask);
    for (Index v = 0; v < z.cols(); ++v) n.vocabulary += z(0, v) != Scalar(0);
  } else {
    for (Index v = 0; v < table.rows(); ++v) n.vocabulary += (table.row(v).array() != Scalar(0)).any();
  }
  if (model.embedding) {
    const Tensor<Scalar> we = detail::keep_of(model.embedding->weights, mask);
    for (Index j = 0; j < we.cols(); ++j)
      n.embedding += (we.col(j).array() != Scalar(0)).any() || (wx.row(j).array() != Scalar(0)).any();
  }
  const Index h = model.config.hidden;
  for (Index k = 0; k < h; ++k) {
    bool active = (wh.row(k).array() != Scalar(0)).any() || (wd.row(k).array() != Scalar(0)).any();
    for (Index g = 0; g < 4 && !active; ++g)
      active = (wx.col(g * h + k).array() != Scalar(0)).any() || (wh.col(g * h + k).array() != Scalar(0)).any();
    n.recurrent += active;
  }
  return n;
}

// Token ids the pruned model still reads (same rule as the vocabulary count).
template <class Scalar>
std::vector<Index> active_vocabulary(const Model<Scalar>& model,
                                     const std::type_identity_t<PruneMask<Scalar>>* mask = nullptr) {
  std::vector<Index> out;
  if (model.vocab) {
    const Tensor<Scalar> z = detail::keep_of(model.vocab->z, mask);
    for (Index v = 0; v < z.cols(); ++v)
      if (z(0, v) != Scalar(0)) out.push_back(v);
  } else {
    const Tensor<Scalar> table = detail::keep_of(model.input_table(), mask);
    for (Index v = 0; v < table.rows(); ++v)
      if ((table.row(v).array() != Scalar(0)).any()) out.push_back(v);
  }
  return out;
}

struct MatrixCount {
  std::string name;
  Index rows = 0, cols = 0;
  Index total = 0, kept = 0;
};

struct CompressionReport {
  std::string method;       // baseline / sparsevd / sparsevd_voc
  std::string metric_name;  // bpc / perplexity / accuracy
  std::optional<double> metric_before, metric_after;
  double tau = kDefaultTau;
  std::vector<MatrixCount> matrices;
  Index total = 0, kept = 0;
  NeuronCounts neurons, full;
  std::vector<std::string> remaining_vocabulary;
};

// |w| / |w≠0| over all GaussianParam elements (biases excluded); +∞ when
// nothing is kept.
double compression_rate(const CompressionReport& report);
std::string format_compression(const CompressionReport& report);  // "25x" or "all weights pruned"

// Human-readable table with Table-1 style columns and a footer on what |w| counts.
std::string report_table(const CompressionReport& report);
// One header row plus one row per matrix and a "total" row.
std::string report_csv(const CompressionReport& report);

template <class Scalar>
CompressionReport compression_report(const Model<Scalar>& model, const std::type_identity_t<PruneMask<Scalar>>* mask, const Vocabulary* vocab,
                                     double tau = kDefaultTau) {
  CompressionReport r;
  r.method = to_string(model.config.mode);
  r.tau = tau;
  for (const auto* p : model.gaussian_params()) {
    MatrixCount m;
    m.name = p->name;
    m.rows = p->rows();
    m.cols = p->cols();
    m.total = p->size();
    const auto* k = mask ? mask->find(p->name) : nullptr;
    m.kept = k ? static_cast<Index>((k->array() != Scalar(0)).count()) : m.total;
    r.total += m.total;
    r.kept += m.kept;
    r.matrices.push_back(m);
  }
  r.neurons = count_neurons(model, mask);
  r.full = count_neurons(model, nullptr);
  if (vocab)
    for (Index id : active_vocabulary(model, mask)) r.remaining_vocabulary.push_back(vocab->token(id));
  return r;
}

struct SentimentRow {
  std::string word;
  std::vector<std::pair<Index, double>> components;  // (embedding column, kept value)
  double score = 0;                                  // (#pos − #neg) / #texts with the word
  Index texts = 0;
};

// For each kept word that occurs in the corpus: its surviving embedding
// components and its sentiment score. Labels must be 0 (negative) or 1 (positive).
template <class Scalar>
std::vector<SentimentRow> sentiment_report(const Model<Scalar>& model, const std::type_identity_t<PruneMask<Scalar>>* mask,
                                           const Vocabulary& vocab, const std::vector<LabeledSequence>& corpus) {
  if (model.config.task != Task::classify || model.config.outputs != 2)
    throw UsageError("sentiment_report: unsupported task (needs binary classification)");
  if (!model.embedding) throw UsageError("sentiment_report: unsupported task (model has no embedding)");
  const Index V = model.config.vocab_size;
  std::vector<Index> pos(static_cast<std::size_t>(V), 0), neg(static_cast<std::size_t>(V), 0);
  std::vector<Index> seen_in(static_cast<std::size_t>(V), -1);
  for (std::size_t doc = 0; doc < corpus.size(); ++doc) {
    const auto& s = corpus[doc];
    if (s.label != 0 && s.label != 1) throw UsageError("sentiment_report: unsupported task (label " + std::to_string(s.label) + ")");
    for (Index id : s.tokens) {
      if (id < 0 || id >= V) throw IndexError("sentiment_report: token id out of range");
      auto& last = seen_in[static_cast<std::size_t>(id)];
      if (last == static_cast<Index>(doc)) continue;
      last = static_cast<Index>(doc);
      ++(s.label == 1 ? pos : neg)[static_cast<std::size_t>(id)];
    }
  }
  const auto& table = model.embedding->weights;
  const Tensor<Scalar> keep = detail::keep_of(table, mask);
  std::vector<SentimentRow> rows;
  for (Index id : active_vocabulary(model, mask)) {
    const auto u = static_cast<std::size_t>(id);
    const Index n = pos[u] + neg[u];
    if (n == 0) continue;
    SentimentRow row;
    row.word = vocab.token(id);
    row.texts = n;
    row.score = static_cast<double>(pos[u] - neg[u]) / static_cast<double>(n);
    for (Index j = 0; j < table.cols(); ++j)
      if (keep(id, j) != Scalar(0)) row.components.emplace_back(j, static_cast<double>(table.theta(id, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sentiment_csv(const std::vector<SentimentRow>& rows);

}  // namespace sparsernn

#endif  // SPARSERNN_COMPRESSION_HPP
