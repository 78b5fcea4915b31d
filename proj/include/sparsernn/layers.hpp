#ifndef SPARSERNN_LAYERS_HPP
#define SPARSERNN_LAYERS_HPP

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sparsernn/autodiff.hpp"
#include "sparsernn/data.hpp"
#include "sparsernn/rng.hpp"
#include "sparsernn/variational.hpp"

namespace sparsernn {

// Multiplicative per-word weights z (1×V), θ_z = 1 so the untrained model
// computes exactly what it would without them.
template <class Scalar>
struct VocabMultiplier {
  GaussianParam<Scalar> z;

  static VocabMultiplier create(std::string name, Index vocab_size, double log_sigma_init) {
    return {GaussianParam<Scalar>::with_log_sigma(std::move(name), Tensor<Scalar>::Ones(1, vocab_size), log_sigma_init)};
  }
};

template <class Scalar>
struct VariationalEmbedding {
  GaussianParam<Scalar> weights;  // V×d

  Index vocab_size() const { return weights.rows(); }
  Index dim() const { return weights.cols(); }
};

// Gate blocks are laid out (input, forget, cell, output) along the columns of
// w_x (d_in×4h), w_h (h×4h) and bias (1×4h).
template <class Scalar>
struct VariationalLSTM {
  GaussianParam<Scalar> w_x;
  GaussianParam<Scalar> w_h;
  Tensor<Scalar> bias;
  std::string bias_name;

  Index hidden() const { return w_h.rows(); }
  Index input_size() const { return w_x.rows(); }
};

enum class DenseMode { weight_sample, lrt };
enum class LayerPosition { output_head, hidden };

// Fully connected layer y = x W + b. Sampling preactivations (lrt) is only
// sound when W is applied once per sample path, so only an output head may be
// built in that mode.
template <class Scalar>
class VariationalDense {
 public:
  GaussianParam<Scalar> weights;  // d_in×d_out
  Tensor<Scalar> bias;            // 1×d_out
  std::string bias_name;

  VariationalDense() = default;
  VariationalDense(GaussianParam<Scalar> w, Tensor<Scalar> b, std::string b_name, DenseMode mode, LayerPosition position)
      : weights(std::move(w)), bias(std::move(b)), bias_name(std::move(b_name)), mode_(mode), position_(position) {
    if (mode_ == DenseMode::lrt && position_ != LayerPosition::output_head)
      throw UsageError("VariationalDense: local reparametrisation is only allowed on an output head");
    if (bias.rows() != 1 || bias.cols() != weights.cols())
      throw DimensionError("VariationalDense: bias " + shape_string(bias) + " for weights " + shape_string(weights.theta));
  }

  DenseMode mode() const { return mode_; }
  LayerPosition position() const { return position_; }

 private:
  DenseMode mode_ = DenseMode::weight_sample;
  LayerPosition position_ = LayerPosition::output_head;
};

// ---------------------------------------------------------------------------

// One timestep of the input lookup: row i is z_i[token_i] · table[token_i].
// Equivalent to (onehot(token) ∘ z_i) · table. `z` is count×V (one sample per
// object) or absent.
template <class Scalar>
ad::Var<Scalar> embed_step(const ad::Var<Scalar>& table, std::span<const Index> tokens,
                           const ad::Var<Scalar>* z = nullptr) {
  ad::Var<Scalar> rows = ad::gather_rows(table, tokens);
  if (!z) return rows;
  return ad::mul(rows, ad::gather_per_row(*z, tokens));
}

template <class Scalar>
std::vector<ad::Var<Scalar>> embed(const ad::Var<Scalar>& table, const Batch& batch, const ad::Var<Scalar>* z = nullptr) {
  std::vector<ad::Var<Scalar>> out;
  out.reserve(static_cast<std::size_t>(batch.steps));
  for (Index t = 0; t < batch.steps; ++t) out.push_back(embed_step(table, batch.input_step(t), z));
  return out;
}

// Records which weight nodes an LSTM pass used at each timestep.
template <class Scalar>
struct LstmTrace {
  std::vector<const void*> w_h_nodes;
  std::vector<const void*> w_x_nodes;
  Tensor<Scalar> w_h_first, w_h_last;
};

template <class Scalar>
struct LstmOutput {
  std::vector<ad::Var<Scalar>> states;  // h_1 … h_T, each b×h
  ad::Var<Scalar> h, c;                 // final state
};

// Runs the recurrence over inputs already projected through W^x (each b×4h):
//   i, f, o = sigmoid(.), g = tanh(.), c_t = f∘c_{t−1} + i∘g, h_t = o∘tanh(c_t).
// The same w_h node is used at every step. With `lengths`, rows whose
// sequence has ended keep their state, so the final state is read at each
// row's true last token.
template <class Scalar>
LstmOutput<Scalar> lstm_recurrence(const ad::Var<Scalar>& w_h, const ad::Var<Scalar>& bias,
                                   std::span<const ad::Var<Scalar>> projected, const ad::Var<Scalar>& h0,
                                   const ad::Var<Scalar>& c0, std::span<const Index> lengths = {},
                                   LstmTrace<Scalar>* trace = nullptr) {
  const Index h = w_h.rows();
  if (w_h.cols() != 4 * h) throw DimensionError("lstm: w_h must be h×4h, got " + shape_string(w_h.value()));
  if (bias.rows() != 1 || bias.cols() != 4 * h) throw DimensionError("lstm: bias must be 1×4h");
  if (h0.cols() != h || c0.cols() != h || h0.rows() != c0.rows())
    throw DimensionError("lstm: initial state " + shape_string(h0.value()) + " for hidden size " + std::to_string(h));
  const Index b = h0.rows();
  if (!lengths.empty() && static_cast<Index>(lengths.size()) != b) throw DimensionError("lstm: lengths/batch mismatch");

  LstmOutput<Scalar> out;
  ad::Var<Scalar> hs = h0, cs = c0;
  const auto T = static_cast<Index>(projected.size());
  for (Index t = 0; t < T; ++t) {
    const auto& x = projected[static_cast<std::size_t>(t)];
    if (x.rows() != b || x.cols() != 4 * h)
      throw DimensionError("lstm: projected input " + shape_string(x.value()) + " at step " + std::to_string(t));
    if (trace) {
      trace->w_h_nodes.push_back(w_h.node());
      if (t == 0) trace->w_h_first = w_h.value();
      if (t == T - 1) trace->w_h_last = w_h.value();
    }
    const auto gates = ad::add(ad::add(x, ad::matmul(hs, w_h)), bias);
    const auto in = ad::sigmoid(ad::slice_cols(gates, 0, h));
    const auto forget = ad::sigmoid(ad::slice_cols(gates, h, h));
    const auto cell = ad::tanh(ad::slice_cols(gates, 2 * h, h));
    const auto outg = ad::sigmoid(ad::slice_cols(gates, 3 * h, h));
    auto c_new = ad::add(ad::mul(forget, cs), ad::mul(in, cell));
    auto h_new = ad::mul(outg, ad::tanh(c_new));
    if (!lengths.empty()) {
      Tensor<Scalar> live(b, 1);
      bool all_live = true;
      for (Index i = 0; i < b; ++i) {
        live(i, 0) = t < lengths[static_cast<std::size_t>(i)] ? Scalar(1) : Scalar(0);
        all_live = all_live && live(i, 0) == Scalar(1);
      }
      if (!all_live) {
        const auto keep = ad::constant<Scalar>(live);
        const auto hold = ad::constant<Scalar>(Tensor<Scalar>((Scalar(1) - live.array()).matrix()));
        c_new = ad::add(ad::mul(c_new, keep), ad::mul(cs, hold));
        h_new = ad::add(ad::mul(h_new, keep), ad::mul(hs, hold));
      }
    }
    cs = c_new;
    hs = h_new;
    out.states.push_back(hs);
  }
  out.h = hs;
  out.c = cs;
  return out;
}

// Full LSTM over dense inputs (each b×d_in). The input projection for all
// timesteps is one matmul against the single w_x sample.
template <class Scalar>
LstmOutput<Scalar> lstm_forward(const ad::Var<Scalar>& w_x, const ad::Var<Scalar>& w_h, const ad::Var<Scalar>& bias,
                                std::span<const ad::Var<Scalar>> inputs, const ad::Var<Scalar>& h0,
                                const ad::Var<Scalar>& c0, std::span<const Index> lengths = {},
                                LstmTrace<Scalar>* trace = nullptr) {
  if (inputs.empty()) throw UsageError("lstm_forward: empty sequence");
  const Index b = inputs.front().rows();
  for (const auto& x : inputs)
    if (x.cols() != w_x.rows() || x.rows() != b)
      throw DimensionError("lstm_forward: input " + shape_string(x.value()) + " vs w_x " + shape_string(w_x.value()));
  const auto stacked = ad::matmul(ad::concat_rows(inputs), w_x);
  std::vector<ad::Var<Scalar>> projected;
  projected.reserve(inputs.size());
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    projected.push_back(ad::slice_rows(stacked, static_cast<Index>(t) * b, b));
    if (trace) trace->w_x_nodes.push_back(w_x.node());
  }
  return lstm_recurrence(w_h, bias, std::span<const ad::Var<Scalar>>(projected), h0, c0, lengths, trace);
}

template <class Scalar>
ad::Var<Scalar> dense_forward(const VariationalDense<Scalar>& d, const ad::Var<Scalar>& w, const ad::Var<Scalar>& bias,
                              const ad::Var<Scalar>& input) {
  if (input.cols() != d.weights.rows())
    throw DimensionError("dense_forward: input " + shape_string(input.value()) + " for weights " +
                         shape_string(d.weights.theta));
  return ad::add(ad::matmul(input, w), bias);
}

// Samples the preactivation instead of the weights:
//   out = xθ + ε ∘ sqrt((x∘x)(σ∘σ)) + b, with fresh ε per row and unit.
// A 1e-12 floor inside the square root keeps its derivative finite for
// all-zero input rows.
template <class Scalar>
ad::Var<Scalar> dense_forward_lrt(const VariationalDense<Scalar>& d, const ad::Var<Scalar>& theta,
                                  const ad::Var<Scalar>& log_sigma, const ad::Var<Scalar>& bias,
                                  const ad::Var<Scalar>& input, RngStream& rng) {
  if (d.mode() != DenseMode::lrt || d.position() != LayerPosition::output_head)
    throw UsageError("dense_forward_lrt: layer is not an LRT output head");
  if (input.cols() != d.weights.rows())
    throw DimensionError("dense_forward_lrt: input " + shape_string(input.value()) + " for weights " +
                         shape_string(d.weights.theta));
  const auto mean = ad::matmul(input, theta);
  const auto variance = ad::matmul(ad::square(input), ad::exp(ad::scale(log_sigma, Scalar(2))));
  const auto stddev = ad::sqrt(ad::affine(variance, Scalar(1), Scalar(1e-12)));
  Tensor<Scalar> eps = rng.normal_tensor<Scalar>(mean.rows(), mean.cols());
  const auto noise = ad::mul(stddev, ad::constant<Scalar>(std::move(eps)));
  return ad::add(ad::add(mean, noise), bias);
}

}  // namespace sparsernn

#endif  // SPARSERNN_LAYERS_HPP
