#ifndef SPARSERNN_MODEL_HPP
#define SPARSERNN_MODEL_HPP

#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "sparsernn/context.hpp"
#include "sparsernn/data.hpp"
#include "sparsernn/init.hpp"
#include "sparsernn/layers.hpp"

namespace sparsernn {

enum class Task { char_lm, word_lm, classify };
enum class Mode { baseline, sparsevd, sparsevd_voc };

std::string to_string(Task t);
std::string to_string(Mode m);
Task parse_task(const std::string& s);
Mode parse_mode(const std::string& s);

struct ModelConfig {
  Task task = Task::char_lm;
  Mode mode = Mode::sparsevd;
  Index vocab_size = 0;
  Index embedding_dim = 0;  // 0: tokens feed the LSTM directly (one-hot rows of W^x)
  Index hidden = 0;
  Index outputs = 0;  // LM: vocabulary size; classification: number of classes
  bool lrt_head = false;
  double log_sigma_init = -3.0;

  bool operator==(const ModelConfig&) const = default;
};

// Parameter names, used for masks, gradients, optimiser state and checkpoints.
namespace names {
inline const std::string embedding = "embedding.w";
inline const std::string vocab_z = "input.z";
inline const std::string lstm_wx = "lstm.w_x";
inline const std::string lstm_wh = "lstm.w_h";
inline const std::string lstm_b = "lstm.b";
inline const std::string head_w = "head.w";
inline const std::string head_b = "head.b";
}  // namespace names

// embedding (optional) → LSTM → dense head, with an optional vocabulary
// multiplier on the one-hot input.
template <class Scalar>
struct Model {
  ModelConfig config;
  std::optional<VariationalEmbedding<Scalar>> embedding;
  std::optional<VocabMultiplier<Scalar>> vocab;
  VariationalLSTM<Scalar> lstm;
  VariationalDense<Scalar> head;

  // Language models: every matrix orthogonal, biases zero. Classification:
  // W^h orthogonal, other matrices Glorot-uniform.
  static Model create(const ModelConfig& cfg, std::uint64_t seed) {
    if (cfg.vocab_size <= 0 || cfg.hidden <= 0 || cfg.outputs <= 0 || cfg.embedding_dim < 0)
      throw ConfigError("model dimensions must be positive");
    RngStream rng = RngStream(seed).derive("init");
    const Index h = cfg.hidden;
    const bool lm = cfg.task != Task::classify;
    auto blocks = [&](Index rows) -> Tensor<Scalar> {
      if (lm) return orthogonal_blocks<Scalar>(rows, h, 4, rng);
      Tensor<Scalar> out(rows, 4 * h);
      for (Index k = 0; k < 4; ++k) out.middleCols(k * h, h) = glorot_uniform<Scalar>(rows, h, rng);
      return out;
    };
    const double ls = cfg.log_sigma_init;

    Model m;
    m.config = cfg;
    Index lstm_in = cfg.vocab_size;
    if (cfg.embedding_dim > 0) {
      Tensor<Scalar> we = lm ? orthogonal<Scalar>(cfg.vocab_size, cfg.embedding_dim, rng)
                             : glorot_uniform<Scalar>(cfg.vocab_size, cfg.embedding_dim, rng);
      m.embedding = VariationalEmbedding<Scalar>{GaussianParam<Scalar>::with_log_sigma(names::embedding, std::move(we), ls)};
      lstm_in = cfg.embedding_dim;
    }
    if (cfg.mode == Mode::sparsevd_voc) m.vocab = VocabMultiplier<Scalar>::create(names::vocab_z, cfg.vocab_size, ls);
    m.lstm.w_x = GaussianParam<Scalar>::with_log_sigma(names::lstm_wx, blocks(lstm_in), ls);
    m.lstm.w_h = GaussianParam<Scalar>::with_log_sigma(names::lstm_wh, orthogonal_blocks<Scalar>(h, h, 4, rng), ls);
    m.lstm.bias = Tensor<Scalar>::Zero(1, 4 * h);
    m.lstm.bias_name = names::lstm_b;
    Tensor<Scalar> wd = lm ? orthogonal<Scalar>(h, cfg.outputs, rng) : glorot_uniform<Scalar>(h, cfg.outputs, rng);
    m.head = VariationalDense<Scalar>(GaussianParam<Scalar>::with_log_sigma(names::head_w, std::move(wd), ls),
                                      Tensor<Scalar>::Zero(1, cfg.outputs), names::head_b,
                                      cfg.lrt_head ? DenseMode::lrt : DenseMode::weight_sample, LayerPosition::output_head);
    return m;
  }

  bool variational() const { return config.mode != Mode::baseline; }

  // The table whose rows are selected by input tokens (W^e, or W^x without an embedding).
  GaussianParam<Scalar>& input_table() { return embedding ? embedding->weights : lstm.w_x; }
  const GaussianParam<Scalar>& input_table() const { return embedding ? embedding->weights : lstm.w_x; }

  // Every GaussianParam in a fixed order.
  std::vector<GaussianParam<Scalar>*> gaussian_params() {
    std::vector<GaussianParam<Scalar>*> out;
    if (embedding) out.push_back(&embedding->weights);
    if (vocab) out.push_back(&vocab->z);
    out.push_back(&lstm.w_x);
    out.push_back(&lstm.w_h);
    out.push_back(&head.weights);
    return out;
  }
  std::vector<const GaussianParam<Scalar>*> gaussian_params() const {
    auto v = const_cast<Model*>(this)->gaussian_params();
    return {v.begin(), v.end()};
  }

  std::vector<std::pair<std::string, Tensor<Scalar>*>> biases() {
    return {{lstm.bias_name, &lstm.bias}, {head.bias_name, &head.bias}};
  }
  std::vector<std::pair<std::string, const Tensor<Scalar>*>> biases() const {
    return {{lstm.bias_name, &lstm.bias}, {head.bias_name, &head.bias}};
  }

  // Trainable tensors keyed as in ForwardContext::gradients(). log σ is only
  // trained for variational modes.
  std::vector<std::pair<std::string, Tensor<Scalar>*>> trainable() {
    std::vector<std::pair<std::string, Tensor<Scalar>*>> out;
    for (auto* p : gaussian_params()) {
      out.emplace_back(p->name + ".theta", &p->theta);
      if (variational()) out.emplace_back(p->name + ".log_sigma", &p->log_sigma);
    }
    for (auto& b : biases()) out.push_back(b);
    return out;
  }

  GaussianParam<Scalar>* find(const std::string& name) {
    for (auto* p : gaussian_params())
      if (p->name == name) return p;
    return nullptr;
  }
};

template <class Scalar>
struct ForwardOutput {
  ad::Var<Scalar> mean_nll;  // mean over predictions
  Index predictions = 0;
  Index correct = 0;  // classification: argmax hits
  Tensor<Scalar> h_final, c_final;
  ad::Var<Scalar> logits;
};

// One minibatch through the model. Weights come from `ctx` (one sample per
// parameter, or means); z is drawn once per object. `h0`/`c0` default to zeros.
template <class Scalar>
ForwardOutput<Scalar> forward(const Model<Scalar>& m, const Batch& batch, ForwardContext<Scalar>& ctx,
                              const std::type_identity_t<Tensor<Scalar>>* h0 = nullptr,
                              const std::type_identity_t<Tensor<Scalar>>* c0 = nullptr,
                              std::type_identity_t<LstmTrace<Scalar>>* trace = nullptr) {
  using V = ad::Var<Scalar>;
  const Index b = batch.batch, h = m.config.hidden;
  if (b <= 0 || batch.steps <= 0) throw UsageError("forward: empty batch");
  if (batch.classification != (m.config.task == Task::classify))
    throw UsageError("forward: batch kind does not match the model task");
  for (Index tok : batch.inputs)
    if (tok < 0 || tok >= m.config.vocab_size)
      throw IndexError("forward: token " + std::to_string(tok) + " outside vocabulary of " + std::to_string(m.config.vocab_size));

  std::optional<V> z;
  if (m.vocab) z = ctx.per_object(m.vocab->z, b);
  const V* zp = z ? &*z : nullptr;

  const V h_init = ad::constant<Scalar>(h0 ? *h0 : Tensor<Scalar>::Zero(b, h));
  const V c_init = ad::constant<Scalar>(c0 ? *c0 : Tensor<Scalar>::Zero(b, h));
  const V w_x = ctx.weights(m.lstm.w_x);
  const V w_h = ctx.weights(m.lstm.w_h);
  const V bias = ctx.bias(m.lstm.bias_name, m.lstm.bias);
  const std::span<const Index> lengths = batch.classification ? std::span<const Index>(batch.lengths) : std::span<const Index>();

  LstmOutput<Scalar> rnn;
  if (m.embedding) {
    const V table = ctx.weights(m.embedding->weights);
    const auto inputs = embed(table, batch, zp);
    rnn = lstm_forward(w_x, w_h, bias, std::span<const V>(inputs), h_init, c_init, lengths, trace);
  } else {
    // One-hot input: the projection x·W^x is a row lookup.
    const auto projected = embed(w_x, batch, zp);
    if (trace)
      for (Index t = 0; t < batch.steps; ++t) trace->w_x_nodes.push_back(w_x.node());
    rnn = lstm_recurrence(w_h, bias, std::span<const V>(projected), h_init, c_init, lengths, trace);
  }

  const V features = batch.classification ? rnn.h : ad::concat_rows(std::span<const V>(rnn.states));
  const V head_bias = ctx.bias(m.head.bias_name, m.head.bias);
  V logits;
  if (m.head.mode() == DenseMode::lrt && ctx.stochastic()) {
    RngStream noise = ctx.substream("head.lrt");
    logits = dense_forward_lrt(m.head, ctx.theta(m.head.weights), ctx.log_sigma(m.head.weights), head_bias, features, noise);
  } else {
    logits = dense_forward(m.head, ctx.weights(m.head.weights), head_bias, features);
  }

  ForwardOutput<Scalar> out;
  out.mean_nll = ad::softmax_cross_entropy(logits, std::span<const Index>(batch.targets));
  out.predictions = batch.predictions();
  out.h_final = rnn.h.value();
  out.c_final = rnn.c.value();
  if (batch.classification) {
    for (Index i = 0; i < b; ++i) {
      Index best = 0;
      logits.value().row(i).maxCoeff(&best);
      if (best == batch.targets[static_cast<std::size_t>(i)]) ++out.correct;
    }
  }
  out.logits = logits;
  return out;
}

// Σ over every GaussianParam of −k(α), bound through `ctx`.
template <class Scalar>
ad::Var<Scalar> kl_total(const Model<Scalar>& m, ForwardContext<Scalar>& ctx) {
  ad::Var<Scalar> total;
  for (const auto* p : m.gaussian_params()) {
    auto term = ad::kl_term(ctx.theta(*p), ctx.log_sigma(*p));
    total = total.valid() ? ad::add(total, term) : term;
  }
  return total;
}

// Deterministic weights used at test time: θ ∘ mask for every parameter.
template <class Scalar>
std::map<std::string, Tensor<Scalar>> eval_mode_weights(const Model<Scalar>& m,
                                                         const std::type_identity_t<PruneMask<Scalar>>* mask = nullptr) {
  std::map<std::string, Tensor<Scalar>> out;
  for (const auto* p : m.gaussian_params()) {
    const auto* k = mask ? mask->find(p->name) : nullptr;
    out[p->name] = k ? Tensor<Scalar>(p->theta.cwiseProduct(*k)) : p->theta;
  }
  return out;
}

}  // namespace sparsernn

#endif  // SPARSERNN_MODEL_HPP
