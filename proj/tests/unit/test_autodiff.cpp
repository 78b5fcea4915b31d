#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "sparsernn/autodiff.hpp"
#include "sparsernn/gradcheck.hpp"
#include "sparsernn/rng.hpp"

using namespace sparsernn;
using T = Tensor<double>;
using V = ad::Var<double>;

namespace {

T mat(Index r, Index c, std::initializer_list<double> v) {
  T t(r, c);
  std::copy(v.begin(), v.end(), t.data());
  return t;
}

T random(Index r, Index c, std::uint64_t seed, double lo = -2, double hi = 2) {
  RngStream rng(seed);
  T t(r, c);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = lo + (hi - lo) * rng.uniform();
  return t;
}

// Weighted sum with fixed random weights, so every output entry matters.
V project(const V& out) {
  return ad::sum(ad::mul(out, ad::constant<double>(random(out.rows(), out.cols(), 4242))));
}

using Fn = std::function<V(std::span<const V>)>;

double worst(const GradCheckReport& r) {
  double w = 0;
  for (double e : r.max_rel_error) w = std::max(w, e);
  return w;
}

}  // namespace

TEST_CASE("matmul values and errors") {
  const auto id = ad::constant<double>(T::Identity(2, 2));
  const auto m = ad::constant<double>(mat(2, 2, {1, 2, 3, 4}));
  CHECK(ad::matmul(id, m).value() == mat(2, 2, {1, 2, 3, 4}));
  const auto a = ad::constant<double>(mat(2, 2, {1, 0, 0, 0}));
  const auto b = ad::constant<double>(mat(2, 1, {5, 7}));
  CHECK(ad::matmul(a, b).value() == mat(2, 1, {5, 0}));
  CHECK_THROWS_AS(ad::matmul(b, b), DimensionError);
}

TEST_CASE("matmul gradient against finite differences") {
  const auto r = grad_check<double>([](std::span<const V> in) { return project(ad::matmul(in[0], in[1])); },
                                    {random(3, 4, 1), random(4, 2, 2)}, 1e-5, 1e-6);
  CHECK(r.passed);
  CHECK(worst(r) < 1e-6);
}

TEST_CASE("unary values, derivatives and domain errors") {
  const auto zero = ad::leaf<double>(T::Zero(1, 1));
  CHECK(ad::sigmoid(zero).item() == doctest::Approx(0.5).epsilon(1e-15));
  const auto t = ad::tanh(zero);
  CHECK(t.item() == 0.0);
  ad::backward(t);
  CHECK(zero.grad()(0, 0) == doctest::Approx(1.0));

  CHECK_THROWS_AS(ad::log(ad::constant<double>(mat(1, 2, {1, 0}))), DomainError);
  CHECK_THROWS_AS(ad::log(ad::constant<double>(mat(1, 1, {-1}))), DomainError);
  CHECK_THROWS_AS(ad::sqrt(ad::constant<double>(mat(1, 1, {-1e-3}))), DomainError);

  const auto r = grad_check<double>([](std::span<const V> in) { return project(ad::log(in[0])); },
                                    {random(3, 3, 5, 0.1, 2)}, 1e-5, 1e-6);
  CHECK(r.passed);

  // Every unary op on random inputs in [−2, 2] (positive where the domain requires).
  const std::vector<std::pair<const char*, Fn>> ops{
      {"sigmoid", [](std::span<const V> in) { return project(ad::sigmoid(in[0])); }},
      {"tanh", [](std::span<const V> in) { return project(ad::tanh(in[0])); }},
      {"exp", [](std::span<const V> in) { return project(ad::exp(in[0])); }},
      {"neg", [](std::span<const V> in) { return project(ad::neg(in[0])); }},
      {"softplus", [](std::span<const V> in) { return project(ad::softplus(in[0])); }},
      {"square", [](std::span<const V> in) { return project(ad::square(in[0])); }},
      {"affine", [](std::span<const V> in) { return project(ad::affine(in[0], 1.5, -0.25)); }},
  };
  for (const auto& [name, fn] : ops) {
    CAPTURE(name);
    CHECK(grad_check<double>(fn, {random(3, 4, 9)}, 1e-5, 1e-4).passed);
  }
  CHECK(grad_check<double>([](std::span<const V> in) { return project(ad::sqrt(in[0])); }, {random(3, 4, 9, 0.2, 2)},
                           1e-5, 1e-4)
            .passed);
}

TEST_CASE("softplus and sigmoid stay finite on extreme inputs") {
  const auto x = ad::constant<double>(mat(1, 4, {-800, -30, 30, 800}));
  const auto sp = ad::softplus(x).value();
  CHECK(sp(0, 0) == 0.0);
  CHECK(sp(0, 3) == 800.0);
  const auto sg = ad::sigmoid(x).value();
  CHECK(sg(0, 0) == doctest::Approx(0.0));
  CHECK(sg(0, 3) == 1.0);
}

TEST_CASE("binary ops and broadcasting") {
  const auto x = ad::leaf<double>(random(2, 3, 11));
  CHECK(ad::add(x, ad::constant<double>(T::Zero(2, 3))).value() == x.value());

  const auto s = ad::leaf<double>(mat(1, 1, {3}));
  ad::backward(ad::mul(s, s));
  CHECK(s.grad()(0, 0) == 6.0);

  // Row broadcast: gradient w.r.t. the row is the column-sum of the upstream gradient.
  const T upstream = random(2, 3, 12);
  const auto a = ad::leaf<double>(random(2, 3, 13));
  const auto row = ad::leaf<double>(random(1, 3, 14));
  ad::backward(ad::sum(ad::mul(ad::add(a, row), ad::constant<double>(upstream))));
  const T colsum = upstream.colwise().sum();
  CHECK((row.grad() - colsum).cwiseAbs().maxCoeff() < 1e-15);

  for (auto op : {ad::BinaryOp::add, ad::BinaryOp::sub, ad::BinaryOp::mul, ad::BinaryOp::div}) {
    for (auto [r, c] : {std::pair<Index, Index>{2, 3}, {1, 3}, {2, 1}, {1, 1}}) {
      CAPTURE(static_cast<int>(op));
      CAPTURE(r);
      CAPTURE(c);
      const auto rep = grad_check<double>([op](std::span<const V> in) { return project(ad::binary(op, in[0], in[1])); },
                                          {random(2, 3, 15), random(r, c, 16, 0.5, 2)}, 1e-5, 1e-4);
      CHECK(rep.passed);
      // Broadcast on the left operand too.
      const auto left = grad_check<double>([op](std::span<const V> in) { return project(ad::binary(op, in[1], in[0])); },
                                           {random(2, 3, 17, 0.5, 2), random(r, c, 18)}, 1e-5, 1e-4);
      CHECK(left.passed);
    }
  }
  CHECK_THROWS_AS(ad::add(ad::constant<double>(T::Zero(2, 3)), ad::constant<double>(T::Zero(3, 2))), DimensionError);
  CHECK_THROWS_AS(ad::mul(ad::constant<double>(T::Zero(2, 3)), ad::constant<double>(T::Zero(1, 2))), DimensionError);
}

TEST_CASE("gather_rows scatter-adds repeated indices") {
  const auto m = ad::leaf<double>(mat(2, 2, {1, 2, 3, 4}));
  const std::vector<Index> idx{1, 1};
  const auto g = ad::gather_rows(m, std::span<const Index>(idx));
  CHECK(g.value() == mat(2, 2, {3, 4, 3, 4}));
  ad::backward(ad::sum(g));
  CHECK(m.grad() == mat(2, 2, {0, 0, 2, 2}));

  const auto id = ad::constant<double>(T::Identity(4, 4));
  const std::vector<Index> k{2};
  CHECK(ad::gather_rows(id, std::span<const Index>(k)).value() == mat(1, 4, {0, 0, 1, 0}));

  const std::vector<Index> bad{0, 2};
  CHECK_THROWS_AS(ad::gather_rows(m, std::span<const Index>(bad)), IndexError);

  const std::vector<Index> rnd{0, 6, 0};
  CHECK(grad_check<double>([rnd](std::span<const V> in) { return project(ad::gather_rows(in[0], std::span<const Index>(rnd))); },
                           {random(7, 3, 19)}, 1e-5, 1e-6)
            .passed);
}

TEST_CASE("structural ops: slices, concat, per-row gather, clamp") {
  const std::vector<Index> cols{2, 0, 1};
  const auto fn_slices = [](std::span<const V> in) {
    const std::vector<V> parts{ad::slice_rows(in[0], 1, 2), ad::slice_cols(in[0], 0, 3)};
    return project(ad::concat_rows(std::span<const V>(parts)));
  };
  CHECK(grad_check<double>(fn_slices, {random(3, 3, 20)}, 1e-5, 1e-6).passed);
  CHECK(grad_check<double>([cols](std::span<const V> in) {
          return project(ad::gather_per_row(in[0], std::span<const Index>(cols)));
        },
                           {random(3, 4, 21)}, 1e-5, 1e-6)
            .passed);
  CHECK_THROWS_AS(ad::slice_cols(ad::constant<double>(T::Zero(2, 2)), 1, 2), IndexError);

  const auto x = ad::leaf<double>(mat(1, 4, {-3, -1, 1, 3}));
  const auto c = ad::clamp(x, -2.0, 2.0);
  CHECK(c.value() == mat(1, 4, {-2, -1, 1, 2}));
  ad::backward(ad::sum(c));
  CHECK(x.grad() == mat(1, 4, {0, 1, 1, 0}));
}

TEST_CASE("softmax cross-entropy") {
  const Index C = 5;
  const auto uniform = ad::constant<double>(T::Zero(3, C));
  const std::vector<Index> t3{0, 4, 2};
  CHECK(ad::softmax_cross_entropy(uniform, std::span<const Index>(t3)).item() == doctest::Approx(std::log(5.0)));

  const std::vector<Index> t0{0};
  CHECK(ad::softmax_cross_entropy(ad::constant<double>(mat(1, 2, {10, -10})), std::span<const Index>(t0)).item() < 1e-4);
  // No overflow on confident logits.
  CHECK(ad::softmax_cross_entropy(ad::constant<double>(mat(1, 2, {1000, -1000})), std::span<const Index>(t0)).item() ==
        0.0);

  // Log-sum-exp oracle on a random batch, value and gradient.
  const T x = random(4, 5, 22, -3, 3);
  const std::vector<Index> targets{1, 4, 0, 4};
  double expected = 0;
  T grad(4, 5);
  for (Index r = 0; r < 4; ++r) {
    double z = 0;
    for (Index k = 0; k < 5; ++k) z += std::exp(x(r, k));
    expected += std::log(z) - x(r, targets[static_cast<std::size_t>(r)]);
    for (Index k = 0; k < 5; ++k) grad(r, k) = (std::exp(x(r, k)) / z - (k == targets[static_cast<std::size_t>(r)])) / 4.0;
  }
  expected /= 4.0;
  const auto leaf = ad::leaf<double>(x);
  const auto loss = ad::softmax_cross_entropy(leaf, std::span<const Index>(targets));
  CHECK(std::abs(loss.item() - expected) / expected < 1e-8);
  ad::backward(loss);
  CHECK(((leaf.grad() - grad).cwiseAbs().array() / grad.cwiseAbs().array().max(1e-12)).maxCoeff() < 1e-8);

  const std::vector<Index> bad{0, 1, 5, 0};
  CHECK_THROWS_AS(ad::softmax_cross_entropy(leaf, std::span<const Index>(bad)), IndexError);
}

TEST_CASE("backward semantics") {
  const auto x = ad::leaf<double>(random(2, 3, 23));
  ad::backward(ad::sum(x));
  CHECK(x.grad() == T::Ones(2, 3));

  // Diamond: x feeds both operands.
  const auto y = ad::leaf<double>(mat(1, 3, {1.5, -2, 0.25}));
  ad::backward(ad::sum(ad::mul(y, y)));
  CHECK(y.grad() == (2.0 * y.value()).eval());

  // A second backward pass starts from fresh gradients.
  ad::backward(ad::sum(ad::mul(y, y)));
  CHECK(y.grad() == (2.0 * y.value()).eval());

  CHECK_THROWS_AS(ad::backward(x), UsageError);

  // Non-finite forward values are an error state.
  CHECK_THROWS_AS(ad::exp(ad::constant<double>(mat(1, 1, {1000}))), NumericError);
}

TEST_CASE("forward results are deterministic") {
  const T a = random(5, 7, 24), b = random(7, 3, 25);
  const auto once = ad::tanh(ad::matmul(ad::constant<double>(a), ad::constant<double>(b))).value();
  const auto twice = ad::tanh(ad::matmul(ad::constant<double>(a), ad::constant<double>(b))).value();
  CHECK(std::memcmp(once.data(), twice.data(), sizeof(double) * static_cast<std::size_t>(once.size())) == 0);
}

TEST_CASE("grad_check reports") {
  // Linear function: exact up to rounding.
  const auto lin = grad_check<double>([](std::span<const V> in) { return ad::sum(ad::scale(in[0], 3.0)); },
                                      {random(2, 2, 26)}, 1e-5, 1e-9);
  CHECK(lin.passed);
  const auto quad = grad_check<double>([](std::span<const V> in) { return ad::sum(ad::square(in[0])); },
                                       {random(2, 2, 27)}, 1e-5, 1e-6);
  CHECK(quad.passed);
  CHECK(worst(quad) < 1e-6);
  // Non-finite values are reported, not thrown.
  const auto bad = grad_check<double>([](std::span<const V> in) { return ad::sum(ad::exp(ad::scale(in[0], 1000.0))); },
                                      {mat(1, 1, {1})}, 1e-5, 1e-6);
  CHECK(bad.numeric_error);
  CHECK_FALSE(bad.passed);
  CHECK_THROWS_AS(grad_check<double>([](std::span<const V> in) { return ad::sum(in[0]); }, {mat(1, 1, {1})}, 0.0, 1e-6),
                  UsageError);
}
