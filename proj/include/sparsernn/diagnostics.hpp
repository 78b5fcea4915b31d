#ifndef SPARSERNN_DIAGNOSTICS_HPP
#define SPARSERNN_DIAGNOSTICS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "sparsernn/gradcheck.hpp"
#include "sparsernn/training.hpp"

namespace sparsernn {

// Finite-difference check of every trainable tensor of a model against the
// gradients of elbo_loss. The noise stream is rebuilt from `noise_seed` for
// each evaluation, so the sampled weights are a deterministic function of
// the parameters.
template <class Scalar>
GradCheckReport model_grad_check(const Model<Scalar>& model, const Batch& batch, Index dataset_size,
                                 std::uint64_t noise_seed, double step, double tolerance) {
  GradCheckReport report;
  report.tolerance = tolerance;
  constexpr double floor = 1e-6;
  auto loss_at = [&](const Model<Scalar>& m) {
    auto ctx = ForwardContext<Scalar>::training(RngStream(noise_seed), m.variational());
    return static_cast<double>(elbo_loss(m, batch, ctx, dataset_size, 1.0).loss.item());
  };
  try {
    auto ctx = ForwardContext<Scalar>::training(RngStream(noise_seed), model.variational());
    ad::backward(elbo_loss(model, batch, ctx, dataset_size, 1.0).loss);
    const auto grads = ctx.gradients();
    Model<Scalar> probe = model;
    for (auto& [name, value] : probe.trainable()) {
      auto it = grads.find(name);
      if (it == grads.end()) {
        report.message = "no gradient for " + name;
        return report;
      }
      double worst = 0;
      for (Index i = 0; i < value->size(); ++i) {
        Scalar& x = value->data()[i];
        const Scalar original = x;
        x = original + static_cast<Scalar>(step);
        const double up = loss_at(probe);
        x = original - static_cast<Scalar>(step);
        const double down = loss_at(probe);
        x = original;
        const double numeric = (up - down) / (2 * step);
        const double a = static_cast<double>(it->second.data()[i]);
        worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor}));
      }
      report.max_rel_error.push_back(worst);
      if (worst > tolerance && report.message.empty()) report.message = "worst tensor: " + name;
    }
  } catch (const NumericError& e) {
    report.numeric_error = true;
    report.message = e.what();
    return report;
  }
  report.passed = std::all_of(report.max_rel_error.begin(), report.max_rel_error.end(),
                              [&](double e) { return e <= tolerance; });
  return report;
}

struct GradCheckCase {
  std::string name;
  GradCheckReport report;
};

// Gradient checks in double precision over every layer type (embedding
// lookup with z, LSTM with and without padding, dense, LRT head, KL term,
// reparametrisation) and the full ELBO of 2-unit models in all modes.
std::vector<GradCheckCase> gradcheck_suite(std::uint64_t seed, double step = 1e-5, double tolerance = 1e-4);

struct TiedSamplingResult {
  bool one_draw_per_param = false;  // exactly one draw per matrix parameter
  bool z_per_object = false;        // b draws for z
  bool same_node_every_step = false;
  bool first_last_identical = false;
  std::string detail;
  bool passed() const { return one_draw_per_param && z_per_object && same_node_every_step && first_last_identical; }
};

// Instrumented forward pass of a SparseVD-Voc model with an embedding.
TiedSamplingResult check_tied_sampling(std::uint64_t seed, Index batch = 4, Index steps = 7);

}  // namespace sparsernn

#endif  // SPARSERNN_DIAGNOSTICS_HPP
