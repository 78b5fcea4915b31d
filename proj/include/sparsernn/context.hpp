#ifndef SPARSERNN_CONTEXT_HPP
#define SPARSERNN_CONTEXT_HPP

#include <map>
#include <string>
#include <string_view>

#include "sparsernn/autodiff.hpp"
#include "sparsernn/rng.hpp"
#include "sparsernn/variational.hpp"

namespace sparsernn {

// Binds model parameters into one minibatch's graph.
//
// Training contexts expose θ, log σ and biases as leaves and hand out one
// weight tensor per GaussianParam: a reparametrised sample when stochastic,
// the mean otherwise. The sample is cached, so every timestep and every
// consumer of a parameter sees the same draw. Evaluation contexts hand out
// θ ∘ mask as constants and never draw noise.
template <class Scalar>
class ForwardContext {
 public:
  using V = ad::Var<Scalar>;

  static ForwardContext training(RngStream rng, bool stochastic) { return ForwardContext(true, stochastic, rng, nullptr); }
  static ForwardContext evaluation(const PruneMask<Scalar>* mask = nullptr) {
    return ForwardContext(false, false, RngStream::zeros(), mask);
  }

  bool is_training() const { return training_; }
  bool stochastic() const { return stochastic_; }

  V theta(const GaussianParam<Scalar>& p) {
    auto& b = slot(p.name);
    if (!b.theta.valid()) {
      if (training_) {
        b.theta = ad::leaf<Scalar>(p.theta);
      } else {
        const auto* m = mask_ ? mask_->find(p.name) : nullptr;
        b.theta = ad::constant<Scalar>(m ? Tensor<Scalar>(p.theta.cwiseProduct(*m)) : p.theta);
      }
    }
    return b.theta;
  }

  V log_sigma(const GaussianParam<Scalar>& p) {
    auto& b = slot(p.name);
    if (!b.log_sigma.valid()) b.log_sigma = training_ ? ad::leaf<Scalar>(p.log_sigma) : ad::constant<Scalar>(p.log_sigma);
    return b.log_sigma;
  }

  // The minibatch's single weight tensor for p.
  V weights(const GaussianParam<Scalar>& p) {
    auto& b = slot(p.name);
    if (!b.weights.valid()) {
      if (stochastic_) {
        RngStream noise = rng_.derive(p.name);
        b.weights = ad::reparametrize(theta(p), log_sigma(p), noise.template normal_tensor<Scalar>(p.rows(), p.cols()));
        ++draws_[p.name];
      } else {
        b.weights = theta(p);
      }
    }
    return b.weights;
  }

  // count×n independent samples of a 1×n parameter, one row per object.
  V per_object(const GaussianParam<Scalar>& p, Index count) {
    if (p.rows() != 1) throw UsageError("per_object: " + p.name + " is not a row vector");
    auto& b = slot(p.name);
    if (b.weights.valid()) {
      if (b.weights.rows() != count) throw UsageError("per_object: " + p.name + " already drawn for another batch size");
      return b.weights;
    }
    if (stochastic_) {
      RngStream noise = rng_.derive(p.name);
      b.weights = ad::reparametrize(theta(p), log_sigma(p), noise.template normal_tensor<Scalar>(count, p.cols()));
      draws_[p.name] += static_cast<int>(count);
    } else {
      const V t = theta(p);
      b.weights = ad::add(ad::constant<Scalar>(Tensor<Scalar>::Zero(count, p.cols())), t);
    }
    return b.weights;
  }

  V bias(const std::string& name, const Tensor<Scalar>& value) {
    auto it = biases_.find(name);
    if (it != biases_.end()) return it->second;
    V v = training_ ? ad::leaf<Scalar>(value) : ad::constant<Scalar>(value);
    biases_.emplace(name, v);
    return v;
  }

  // Independent noise for consumers that sample something other than weights
  // (the LRT head samples preactivations).
  RngStream substream(std::string_view name) const { return rng_.derive(name); }

  // Weight draws per parameter name in this context.
  const std::map<std::string, int>& draw_counts() const { return draws_; }

  // After backward(): gradients keyed "<param>.theta", "<param>.log_sigma" and
  // "<bias>". Leaves the loss never reached get zero gradients.
  std::map<std::string, Tensor<Scalar>> gradients() const {
    std::map<std::string, Tensor<Scalar>> out;
    auto take = [&](const std::string& key, const V& v) {
      if (!v.valid() || !v.requires_grad()) return;
      out[key] = v.grad().size() ? v.grad() : Tensor<Scalar>::Zero(v.rows(), v.cols());
    };
    for (const auto& [name, b] : params_) {
      take(name + ".theta", b.theta);
      take(name + ".log_sigma", b.log_sigma);
    }
    for (const auto& [name, v] : biases_) take(name, v);
    return out;
  }

 private:
  struct Bound {
    V theta, log_sigma, weights;
  };

  ForwardContext(bool training, bool stochastic, RngStream rng, const PruneMask<Scalar>* mask)
      : training_(training), stochastic_(stochastic), rng_(rng), mask_(mask) {}

  Bound& slot(const std::string& name) { return params_[name]; }

  bool training_;
  bool stochastic_;
  RngStream rng_;
  const PruneMask<Scalar>* mask_;
  std::map<std::string, Bound> params_;
  std::map<std::string, V> biases_;
  std::map<std::string, int> draws_;
};

}  // namespace sparsernn

#endif  // SPARSERNN_CONTEXT_HPP
