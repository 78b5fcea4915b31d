#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "sparsernn/variational.hpp"

using namespace sparsernn;
using T = Tensor<double>;

namespace {

T filled(Index r, Index c, double v) { return T::Constant(r, c, v); }

// k(α) written directly from its definition, for cross-checking.
double k_direct(double log_alpha) {
  const double sig = 1.0 / (1.0 + std::exp(-(1.87 + 1.49 * log_alpha)));
  return 0.64 * sig - 0.5 * std::log1p(std::exp(-log_alpha));
}

}  // namespace

TEST_CASE("RngStream determinism and substreams") {
  RngStream a(5), b(5);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  RngStream x = RngStream(5).derive("w"), y = RngStream(5).derive("w"), z = RngStream(5).derive("v");
  CHECK(x.normal() == y.normal());
  CHECK(x.next_u64() != z.next_u64());
  RngStream zero = RngStream::zeros();
  CHECK(zero.normal() == 0.0);
  RngStream u(9);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK((v > 0 && v < 1));
    CHECK(u.below(7) < 7);
  }
}

TEST_CASE("GaussianParam shape invariant") {
  CHECK_THROWS_AS(GaussianParam<double>("w", T::Zero(2, 3), T::Zero(3, 2)), DimensionError);
  const auto p = GaussianParam<double>::with_log_sigma("w", T::Ones(2, 3), -3);
  CHECK(p.log_sigma == filled(2, 3, -3));
}

TEST_CASE("sample_weights") {
  auto p = GaussianParam<double>::with_log_sigma("w", filled(2, 2, 0.7), -1);
  RngStream zeros = RngStream::zeros();
  CHECK(sample_weights(p, zeros, Granularity::per_minibatch).front() == p.theta);

  RngStream s1(3), s2(3);
  const auto a = sample_weights(p, s1, Granularity::per_minibatch).front();
  const auto b = sample_weights(p, s2, Granularity::per_minibatch).front();
  CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * 4) == 0);

  CHECK_THROWS_AS(sample_weights(p, s1, Granularity::per_object, 4), UsageError);
  auto z = GaussianParam<double>::with_log_sigma("z", T::Ones(1, 5), -3);
  CHECK(sample_weights(z, s1, Granularity::per_object, 4).size() == 4);

  // Law of large numbers on a scalar with θ = 1, σ = 0.5.
  auto scalar = GaussianParam<double>::with_log_sigma("s", filled(1, 1, 1.0), std::log(0.5));
  RngStream rng(11);
  const int n = 1000000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const double w = sample_weights(scalar, rng, Granularity::per_minibatch).front()(0, 0);
    sum += w;
    sq += w * w;
  }
  const double mean = sum / n, sd = std::sqrt(sq / n - mean * mean);
  CHECK(std::abs(mean - 1.0) < 0.002);
  CHECK(std::abs(sd - 0.5) < 0.002);
}

TEST_CASE("k_alpha values") {
  CHECK(std::abs(k_alpha(20.0) - 0.64) < 1e-8);
  // 0.64·sigmoid(1.87) − 0.5·ln 2, evaluated independently.
  const double expected = 0.64 / (1.0 + std::exp(-1.87)) - 0.5 * std::log(2.0);
  CHECK(std::abs(k_alpha(0.0) - expected) < 1e-14);
  CHECK(std::abs(k_alpha(0.0) - 0.2080) < 5e-5);
  for (double la = -20; la <= 20; la += 0.37) CHECK(std::abs(k_alpha(la) - k_direct(la)) < 1e-12);

  // Monotone nondecreasing and bounded by 0.64.
  double prev = -1e300;
  for (double la = -30; la <= 30; la += 0.01) {
    const double k = k_alpha(la);
    CHECK(k >= prev);
    CHECK(k <= 0.64);
    prev = k;
  }
  // Array form agrees with the scalar form.
  Eigen::ArrayXd xs = Eigen::ArrayXd::LinSpaced(41, -20, 20);
  const Eigen::ArrayXd ks = k_alpha(xs);
  for (Index i = 0; i < xs.size(); ++i) CHECK(ks(i) == doctest::Approx(k_alpha(xs(i))).epsilon(1e-14));
}

TEST_CASE("snr and log_alpha") {
  auto p = GaussianParam<double>("w", T(1, 4), T::Zero(1, 4));
  p.theta << 0.0, 1.0, 0.1, 0.25;
  const T s = snr(p);
  CHECK(s(0, 0) == 0.0);
  CHECK(s(0, 1) == 1.0);
  CHECK(s(0, 2) == doctest::Approx(0.01));
  CHECK(s(0, 2) < 0.05);
  CHECK(s(0, 3) == doctest::Approx(0.0625));
  CHECK(s(0, 3) >= 0.05);
  const T la = log_alpha(p);
  CHECK(std::isfinite(la(0, 0)));
  CHECK(la(0, 1) == doctest::Approx(-2 * std::log(1 + 1e-8)));
}

TEST_CASE("kl_term") {
  using V = ad::Var<double>;
  // M identical entries → −M·k(α).
  const double ls = -1.0, th = 0.5;
  const auto v = ad::kl_term(ad::constant<double>(filled(3, 4, th)), ad::constant<double>(filled(3, 4, ls)));
  const double la = 2 * (ls - std::log(th + 1e-8));
  CHECK(v.item() == doctest::Approx(-12 * k_direct(la)).epsilon(1e-12));

  // d/d log σ is negative at θ = 1, log σ = −3 (finite-difference sign).
  auto value_at = [](double log_sigma) {
    return ad::kl_term(ad::constant<double>(filled(1, 1, 1.0)), ad::constant<double>(filled(1, 1, log_sigma))).item();
  };
  CHECK((value_at(-3 + 1e-5) - value_at(-3 - 1e-5)) / 2e-5 < 0);
  const V th_leaf = ad::leaf<double>(filled(1, 1, 1.0)), ls_leaf = ad::leaf<double>(filled(1, 1, -3.0));
  ad::backward(ad::kl_term(th_leaf, ls_leaf));
  CHECK(ls_leaf.grad()(0, 0) < 0);
  CHECK(th_leaf.grad()(0, 0) > 0);

  // Decreasing in log σ over [−4, 2] at fixed θ.
  double prev = 1e300;
  for (double s = -4; s <= 2; s += 0.05) {
    const double cur = value_at(s);
    CHECK(cur < prev);
    prev = cur;
  }

  // Sign-flip invariance in θ, and agreement with the value-level function.
  RngStream rng(4);
  T theta = rng.normal_tensor<double>(3, 5), log_sigma = rng.normal_tensor<double>(3, 5);
  const auto plus = ad::kl_term(ad::constant<double>(theta), ad::constant<double>(log_sigma)).item();
  const auto minus = ad::kl_term(ad::constant<double>(T(-theta)), ad::constant<double>(log_sigma)).item();
  CHECK(plus == minus);
  CHECK(kl_term_value(GaussianParam<double>("w", theta, log_sigma)) == doctest::Approx(plus).epsilon(1e-13));

  // Clamping keeps huge α finite with zero gradient beyond the clamp.
  const V z = ad::leaf<double>(filled(1, 1, 0.0)), big = ad::leaf<double>(filled(1, 1, 5.0));
  const auto clamped = ad::kl_term(z, big);
  CHECK(clamped.item() == doctest::Approx(-k_direct(20.0)));
  ad::backward(clamped);
  CHECK(big.grad()(0, 0) == 0.0);
}

TEST_CASE("reparametrize") {
  const auto th = ad::constant<double>(filled(1, 3, 2.0));
  const auto ls = ad::constant<double>(filled(1, 3, std::log(0.5)));
  T eps(2, 3);
  eps << 0, 1, -1, 2, 0, 0;
  const auto w = ad::reparametrize(th, ls, eps).value();
  CHECK(w(0, 0) == 2.0);
  CHECK(w(0, 1) == doctest::Approx(2.5));
  CHECK(w(0, 2) == doctest::Approx(1.5));
  CHECK(w(1, 0) == doctest::Approx(3.0));
}

TEST_CASE("Monte-Carlo KL oracle") {
  CHECK_THROWS_AS(mc_kl_oracle(0.0, 1000), DomainError);
  CHECK_THROWS_AS(mc_kl_oracle(-1.0, 1000), DomainError);
  for (double a : {1e-3, 0.5, 30.0}) CHECK(mc_kl_oracle(a, 100000) - mc_kl_oracle(a, 100000) == 0.0);

  const auto rows = verify_kl_grid(25, 1e-3, 1e3, 1000000, 7);
  REQUIRE(rows.size() == 25);
  CHECK(rows.front().alpha == doctest::Approx(1e-3));
  CHECK(rows.back().alpha == doctest::Approx(1e3));
  double worst = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    worst = std::max(worst, rows[i].error);
    if (i > 0) CHECK(rows[i].oracle_diff > rows[i - 1].oracle_diff);
    CHECK(rows[i].k_diff == doctest::Approx(k_direct(std::log(rows[i].alpha)) - k_direct(0.0)).epsilon(1e-12));
  }
  CHECK(worst <= 0.02);
}
