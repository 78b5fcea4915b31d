#ifndef SPARSERNN_TRAINING_HPP
#define SPARSERNN_TRAINING_HPP

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "sparsernn/compression.hpp"
#include "sparsernn/model.hpp"

namespace sparsernn {

struct TrainConfig {
  Index dataset_size = 0;  // N: training objects (sequences or stream windows)
  Index batch_size = 0;
  double learning_rate = 0.002;
  std::optional<double> grad_clip;  // global L2 norm threshold
  int epochs = 1;
  std::uint64_t seed = 1;
  double kl_scale = 1.0;
  int early_stop_patience = 0;  // baseline only; 0 = train all epochs
  double tau = 0.05;            // SNR threshold for pruned validation
  bool shuffle = true;          // permute batch order each epoch (ignored when stateful)
  bool stateful = false;        // carry LSTM state across consecutive batches

  void validate() const {
    if (dataset_size <= 0) throw ConfigError("TrainConfig: dataset size must be positive");
    if (!(learning_rate > 0)) throw ConfigError("TrainConfig: learning rate must be positive");
    if (epochs < 0) throw ConfigError("TrainConfig: epochs must be non-negative");
    if (kl_scale < 0) throw ConfigError("TrainConfig: kl_scale must be non-negative");
    if (grad_clip && !(*grad_clip > 0)) throw ConfigError("TrainConfig: clip threshold must be positive");
  }
};

// One line of the training log.
struct EpochRecord {
  int epoch = 0;
  std::string split;  // "train" or "valid"
  double loss = 0;    // mean NLL per prediction
  double metric = 0;  // bits-per-char, perplexity, or accuracy %
  double kl_term = 0;
  double wall_seconds = 0;

  std::string to_json() const;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  int epochs_run = 0;
  bool stopped_early = false;
  int best_epoch = 0;
};

// Bits-per-char for character LMs, perplexity for word LMs, accuracy % for classification.
double task_metric(Task task, double mean_nll, double accuracy);
std::string metric_name(Task task);

// ---------------------------------------------------------------------------

template <class Scalar>
struct ElboResult {
  ad::Var<Scalar> loss;
  ad::Var<Scalar> kl;  // Σ −k(α); invalid in baseline mode
  ForwardOutput<Scalar> forward;
};

// N × (mean per-object NLL under the context's weights) + kl_scale × Σ −k(α).
// One object's NLL sums over its predictions, so for language models this is
// N · (T · mean token NLL). In baseline mode the KL term is omitted.
template <class Scalar>
ElboResult<Scalar> elbo_loss(const Model<Scalar>& model, const Batch& batch, ForwardContext<Scalar>& ctx, Index dataset_size,
                             double kl_scale, const std::type_identity_t<Tensor<Scalar>>* h0 = nullptr,
                             const std::type_identity_t<Tensor<Scalar>>* c0 = nullptr) {
  if (batch.batch <= 0) throw UsageError("elbo_loss: empty batch");
  ElboResult<Scalar> r;
  r.forward = forward(model, batch, ctx, h0, c0);
  const double per_object = static_cast<double>(r.forward.predictions) / static_cast<double>(batch.batch);
  const auto data = ad::scale(r.forward.mean_nll, static_cast<Scalar>(static_cast<double>(dataset_size) * per_object));
  if (!model.variational()) {
    r.loss = data;
    return r;
  }
  r.kl = kl_total(model, ctx);
  r.loss = ad::add(data, ad::scale(r.kl, static_cast<Scalar>(kl_scale)));
  return r;
}

// Bias-corrected Adam with per-tensor moments keyed by parameter name.
template <class Scalar>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::map<std::string, Tensor<Scalar>> first, second;
};

// Rejects the whole step, touching nothing, if any gradient is non-finite.
template <class Scalar>
void adam_step(const std::vector<std::pair<std::string, Tensor<Scalar>*>>& params,
               const std::map<std::string, Tensor<Scalar>>& grads, AdamState<Scalar>& state, double lr) {
  for (const auto& [name, g] : grads)
    if (!g.allFinite()) throw NumericError("adam_step: non-finite gradient for " + name);
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const auto b1 = static_cast<Scalar>(state.beta1), b2 = static_cast<Scalar>(state.beta2);
  const auto step_size = static_cast<Scalar>(lr / c1);
  const auto root_c2 = static_cast<Scalar>(std::sqrt(c2));
  const auto eps = static_cast<Scalar>(state.eps);
  for (const auto& [name, value] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    const auto& g = it->second;
    if (g.rows() != value->rows() || g.cols() != value->cols())
      throw DimensionError("adam_step: gradient shape mismatch for " + name);
    auto& m = state.first[name];
    auto& v = state.second[name];
    if (m.size() == 0) {
      m = Tensor<Scalar>::Zero(value->rows(), value->cols());
      v = Tensor<Scalar>::Zero(value->rows(), value->cols());
    }
    m.array() = b1 * m.array() + (Scalar(1) - b1) * g.array();
    v.array() = b2 * v.array() + (Scalar(1) - b2) * g.array().square();
    // lr·m̂ / (sqrt(v̂) + ε) with m̂ = m/c1, v̂ = v/c2.
    value->array() -= step_size * m.array() / (v.array().sqrt() / root_c2 + eps);
  }
}

// Scales every gradient by threshold/norm when the global L2 norm exceeds the
// threshold. Returns the norm before clipping.
template <class Scalar>
double clip_gradients(std::map<std::string, Tensor<Scalar>>& grads, std::optional<double> threshold) {
  double sq = 0;
  for (const auto& [name, g] : grads) sq += static_cast<double>(g.squaredNorm());
  const double norm = std::sqrt(sq);
  if (threshold && norm > *threshold) {
    const auto factor = static_cast<Scalar>(*threshold / norm);
    for (auto& [name, g] : grads) g *= factor;
  }
  return norm;
}

struct EvalResult {
  double mean_nll = 0;
  double accuracy = 0;  // classification only, in [0, 1]
  double metric = 0;
  Index predictions = 0;
};

// Test-time pass with mean weights (θ ∘ mask). Stateful evaluation carries the
// final state of each batch into the next one that asks for it.
template <class Scalar>
EvalResult evaluate(const Model<Scalar>& model, const std::vector<Batch>& batches,
                    const std::type_identity_t<PruneMask<Scalar>>* mask = nullptr,
                    bool stateful = false) {
  double nll = 0;
  Index predictions = 0, correct = 0, objects = 0;
  Tensor<Scalar> h, c;
  for (const auto& batch : batches) {
    auto ctx = ForwardContext<Scalar>::evaluation(mask);
    const bool carry = stateful && batch.carry_state && h.rows() == batch.batch;
    const auto out = forward(model, batch, ctx, carry ? &h : nullptr, carry ? &c : nullptr);
    nll += static_cast<double>(out.mean_nll.item()) * static_cast<double>(out.predictions);
    predictions += out.predictions;
    correct += out.correct;
    objects += batch.batch;
    h = out.h_final;
    c = out.c_final;
  }
  EvalResult r;
  r.predictions = predictions;
  r.mean_nll = predictions ? nll / static_cast<double>(predictions) : 0.0;
  r.accuracy = objects ? static_cast<double>(correct) / static_cast<double>(objects) : 0.0;
  r.metric = task_metric(model.config.task, r.mean_nll, r.accuracy);
  return r;
}

template <class Scalar>
double kl_value(const Model<Scalar>& model) {
  if (!model.variational()) return 0.0;
  double total = 0;
  for (const auto* p : model.gaussian_params()) total += kl_term_value(*p);
  return total;
}

// Mask used for validation: SNR pruning for variational models, none for the baseline.
template <class Scalar>
std::optional<PruneMask<Scalar>> validation_mask(const Model<Scalar>& model, double tau) {
  if (!model.variational()) return std::nullopt;
  return prune_by_snr(model, tau);
}

using EpochCallback = std::function<void(const EpochRecord&)>;

// Minibatch training: per batch, sample all weights once, run the model,
// backpropagate the ELBO, clip, and take an Adam step. The gradient is taken
// of the ELBO divided by the number of training predictions, so clipping
// thresholds refer to the per-prediction objective.
//
// Throws NumericError (naming epoch and batch) on divergence; parameters then
// hold the values from before the failing step.
template <class Scalar>
TrainResult train(Model<Scalar>& model, const std::vector<Batch>& train_batches, const std::vector<Batch>* valid_batches,
                  const TrainConfig& cfg, const EpochCallback& on_record = {}) {
  cfg.validate();
  if (train_batches.empty()) throw DataError("train: no training batches");
  for (const auto& b : train_batches)
    if (b.classification != (model.config.task == Task::classify)) throw ConfigError("train: batches do not match the model task");

  TrainResult result;
  AdamState<Scalar> adam;
  const RngStream root(cfg.seed);
  const bool stateful = cfg.stateful;
  double best_valid = std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::optional<Model<Scalar>> best_model;
  const bool early_stopping = cfg.early_stop_patience > 0 && !model.variational();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(train_batches.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (cfg.shuffle && !stateful) {
      RngStream perm = root.derive("order").derive(static_cast<std::uint64_t>(epoch));
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[perm.below(i)]);
    }

    double nll_sum = 0;
    Index predictions = 0, correct = 0, objects = 0;
    Tensor<Scalar> h, c;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      const std::size_t k = order[pos];
      const Batch& batch = train_batches[k];
      auto ctx = ForwardContext<Scalar>::training(
          root.derive("noise").derive(static_cast<std::uint64_t>(epoch)).derive(static_cast<std::uint64_t>(k)),
          model.variational());
      const bool carry = stateful && batch.carry_state && h.rows() == batch.batch;
      try {
        auto elbo = elbo_loss(model, batch, ctx, cfg.dataset_size, cfg.kl_scale, carry ? &h : nullptr, carry ? &c : nullptr);
        if (!std::isfinite(static_cast<double>(elbo.loss.item()))) throw NumericError("non-finite loss");
        const double per_object = static_cast<double>(elbo.forward.predictions) / static_cast<double>(batch.batch);
        const double total_predictions = static_cast<double>(cfg.dataset_size) * per_object;
        ad::backward(ad::scale(elbo.loss, static_cast<Scalar>(1.0 / total_predictions)));
        auto grads = ctx.gradients();
        clip_gradients(grads, cfg.grad_clip);
        adam_step(model.trainable(), grads, adam, cfg.learning_rate);
        nll_sum += static_cast<double>(elbo.forward.mean_nll.item()) * static_cast<double>(elbo.forward.predictions);
        predictions += elbo.forward.predictions;
        correct += elbo.forward.correct;
        objects += batch.batch;
        h = elbo.forward.h_final;
        c = elbo.forward.c_final;
      } catch (const NumericError& e) {
        throw NumericError("divergence at epoch " + std::to_string(epoch) + " batch " + std::to_string(k) + ": " + e.what());
      }
    }

    const double train_nll = nll_sum / static_cast<double>(predictions);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.split = "train";
    rec.loss = train_nll;
    rec.metric = task_metric(model.config.task, train_nll, static_cast<double>(correct) / static_cast<double>(objects));
    rec.kl_term = kl_value(model);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(rec);
    if (on_record) on_record(rec);
    result.epochs_run = epoch;

    if (valid_batches && !valid_batches->empty()) {
      const auto mask = validation_mask(model, cfg.tau);
      const auto ev = evaluate(model, *valid_batches, mask ? &*mask : nullptr, stateful);
      EpochRecord vr = rec;
      vr.split = "valid";
      vr.loss = ev.mean_nll;
      vr.metric = ev.metric;
      vr.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.log.push_back(vr);
      if (on_record) on_record(vr);
      if (ev.mean_nll < best_valid) {
        best_valid = ev.mean_nll;
        result.best_epoch = epoch;
        since_best = 0;
        if (early_stopping) best_model = model;
      } else {
        ++since_best;
      }
      if (early_stopping && since_best >= cfg.early_stop_patience) {
        result.stopped_early = true;
        break;
      }
    }
  }
  if (best_model) model = std::move(*best_model);
  return result;
}

}  // namespace sparsernn

#endif  // SPARSERNN_TRAINING_HPP
