#ifndef SPARSERNN_VARIATIONAL_HPP
#define SPARSERNN_VARIATIONAL_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sparsernn/autodiff.hpp"
#include "sparsernn/rng.hpp"
#include "sparsernn/tensor.hpp"

namespace sparsernn {

// |θ| is offset by this before taking logs so exact zeros (pruned or
// initialised weights) keep log α finite.
inline constexpr double kThetaGuard = 1e-8;
// log α is clamped to ±this before entering k(α).
inline constexpr double kLogAlphaClamp = 20.0;

// Factorised Gaussian posterior N(θ, σ²) over one weight tensor, stored as
// (θ, log σ). Biases are not GaussianParams; they are never sparsified.
template <class Scalar>
struct GaussianParam {
  std::string name;
  Tensor<Scalar> theta;
  Tensor<Scalar> log_sigma;

  GaussianParam() = default;
  GaussianParam(std::string n, Tensor<Scalar> t, Tensor<Scalar> ls)
      : name(std::move(n)), theta(std::move(t)), log_sigma(std::move(ls)) {
    if (theta.rows() != log_sigma.rows() || theta.cols() != log_sigma.cols())
      throw DimensionError("GaussianParam " + name + ": theta " + shape_string(theta) + " vs log_sigma " +
                           shape_string(log_sigma));
  }

  // θ as given, log σ filled with a constant.
  static GaussianParam with_log_sigma(std::string n, Tensor<Scalar> t, double log_sigma_init) {
    Tensor<Scalar> ls = Tensor<Scalar>::Constant(t.rows(), t.cols(), static_cast<Scalar>(log_sigma_init));
    return GaussianParam(std::move(n), std::move(t), std::move(ls));
  }

  Index rows() const { return theta.rows(); }
  Index cols() const { return theta.cols(); }
  Index size() const { return theta.size(); }
};

// Binary keep-masks (1 = keep) per GaussianParam name. The vocabulary
// multiplier's mask doubles as the per-word keep flag.
template <class Scalar>
struct PruneMask {
  std::map<std::string, Tensor<Scalar>> keep;

  const Tensor<Scalar>* find(const std::string& name) const {
    auto it = keep.find(name);
    return it == keep.end() ? nullptr : &it->second;
  }
};

// log α = 2 (log σ − log(|θ| + guard)), unclamped.
template <class Scalar>
Tensor<Scalar> log_alpha(const GaussianParam<Scalar>& p) {
  return (Scalar(2) * (p.log_sigma.array() - (p.theta.array().abs() + static_cast<Scalar>(kThetaGuard)).log()))
      .matrix();
}

// Signal-to-noise ratio θ²/σ². Exactly zero for θ = 0.
template <class Scalar>
Tensor<Scalar> snr(const GaussianParam<Scalar>& p) {
  return (p.theta.array().square() * (Scalar(-2) * p.log_sigma.array()).exp()).matrix();
}

// k(α) = 0.64 sigmoid(1.87 + 1.49 log α) − 0.5 log(1 + 1/α), elementwise on log α.
// Approximates −KL(q || log-uniform prior) up to an additive constant.
template <class Derived>
auto k_alpha(const Eigen::ArrayBase<Derived>& log_alpha) {
  using S = typename Derived::Scalar;
  const auto x = log_alpha.derived();
  const auto sig = S(0.5) * ((S(0.5) * (S(1.87) + S(1.49) * x)).tanh() + S(1));
  const auto softplus_neg = (-x.abs()).exp().log1p() + (-x).max(S(0));
  return (S(0.64) * sig - S(0.5) * softplus_neg).eval();
}

double k_alpha(double log_alpha);

namespace ad {

template <class Scalar>
Var<Scalar> log_alpha(const Var<Scalar>& theta, const Var<Scalar>& log_sigma) {
  const auto log_abs = log(affine(abs(theta), Scalar(1), static_cast<Scalar>(kThetaGuard)));
  return scale(sub(log_sigma, log_abs), Scalar(2));
}

template <class Scalar>
Var<Scalar> k_alpha(const Var<Scalar>& log_alpha) {
  const auto gate = scale(sigmoid(affine(log_alpha, Scalar(1.49), Scalar(1.87))), Scalar(0.64));
  return sub(gate, scale(softplus(neg(log_alpha)), Scalar(0.5)));
}

// Regulariser added to the minimised objective: Σ −k(α_ij), with log α
// clamped to ±kLogAlphaClamp. Differentiable in θ and log σ.
template <class Scalar>
Var<Scalar> kl_term(const Var<Scalar>& theta, const Var<Scalar>& log_sigma) {
  const auto la = clamp(log_alpha(theta, log_sigma), static_cast<Scalar>(-kLogAlphaClamp),
                        static_cast<Scalar>(kLogAlphaClamp));
  return neg(sum(k_alpha(la)));
}

// w = θ + σ ∘ ε. θ and log σ may be 1×n rows with ε b×n (one sample per row).
template <class Scalar>
Var<Scalar> reparametrize(const Var<Scalar>& theta, const Var<Scalar>& log_sigma, Tensor<Scalar> eps) {
  return add(theta, mul(exp(log_sigma), constant<Scalar>(std::move(eps))));
}

}  // namespace ad

// Value of the regulariser for a parameter at its current (θ, log σ).
template <class Scalar>
double kl_term_value(const GaussianParam<Scalar>& p) {
  const Tensor<Scalar> la = log_alpha(p).array().max(static_cast<Scalar>(-kLogAlphaClamp))
                                .min(static_cast<Scalar>(kLogAlphaClamp)).matrix();
  return -static_cast<double>(k_alpha(la.array()).sum());
}

enum class Granularity { per_minibatch, per_object };

// Draws weights by the reparametrisation w = θ + σ ε. per_minibatch returns one
// sample; per_object returns `count` independent samples and is only allowed
// for 1-D parameters (the vocabulary multiplier).
template <class Scalar>
std::vector<Tensor<Scalar>> sample_weights(const GaussianParam<Scalar>& p, RngStream& rng, Granularity g,
                                           Index count = 1) {
  if (g == Granularity::per_object && p.rows() != 1 && p.cols() != 1)
    throw UsageError("sample_weights: per-object sampling requested for matrix parameter " + p.name);
  const Index n = g == Granularity::per_minibatch ? 1 : count;
  std::vector<Tensor<Scalar>> out;
  out.reserve(static_cast<std::size_t>(n));
  const auto sigma = p.log_sigma.array().exp();
  for (Index k = 0; k < n; ++k) {
    Tensor<Scalar> eps = rng.normal_tensor<Scalar>(p.rows(), p.cols());
    out.push_back((p.theta.array() + sigma * eps.array()).matrix());
  }
  return out;
}

// Monte-Carlo estimate of −KL(q || log-uniform prior) + C for N(θ, αθ²):
//   0.5 log α − E[log|1 + √α ε|],  ε ~ N(0, 1).
// Only differences across α are meaningful. Using the same seed for every α
// gives common random numbers, so differences have low variance.
double mc_kl_oracle(double alpha, std::int64_t samples, std::uint64_t seed = 7);

struct KlGridRow {
  double alpha;
  double k_diff;       // k(α) − k(1)
  double oracle_diff;  // oracle(α) − oracle(1)
  double error;
};

// Pairwise-difference comparison of k(α) against the oracle on a log grid.
std::vector<KlGridRow> verify_kl_grid(int points, double lo, double hi, std::int64_t samples, std::uint64_t seed = 7);

}  // namespace sparsernn

#endif  // SPARSERNN_VARIATIONAL_HPP
