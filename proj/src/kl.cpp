#include <cmath>
#include <string>

#include "sparsernn/variational.hpp"

namespace sparsernn {

double k_alpha(double log_alpha) {
  const double sig = 1.0 / (1.0 + std::exp(-(1.87 + 1.49 * log_alpha)));
  const double softplus_neg = std::log1p(std::exp(-std::abs(log_alpha))) + std::max(-log_alpha, 0.0);
  return 0.64 * sig - 0.5 * softplus_neg;
}

double mc_kl_oracle(double alpha, std::int64_t samples, std::uint64_t seed) {
  if (!(alpha > 0)) throw DomainError("mc_kl_oracle: alpha must be positive, got " + std::to_string(alpha));
  if (samples <= 0) throw UsageError("mc_kl_oracle: sample count must be positive");
  RngStream rng(seed);
  const double root = std::sqrt(alpha);
  // Kahan-compensated mean; 1e6 terms of O(1) magnitude.
  double total = 0, carry = 0;
  for (std::int64_t i = 0; i < samples; ++i) {
    const double term = std::log(std::abs(1.0 + root * rng.normal())) - carry;
    const double next = total + term;
    carry = (next - total) - term;
    total = next;
  }
  return 0.5 * std::log(alpha) - total / static_cast<double>(samples);
}

std::vector<KlGridRow> verify_kl_grid(int points, double lo, double hi, std::int64_t samples, std::uint64_t seed) {
  if (points < 2 || !(lo > 0) || !(hi > lo)) throw UsageError("verify_kl_grid: need >= 2 points on 0 < lo < hi");
  const double k_ref = k_alpha(0.0);
  const double oracle_ref = mc_kl_oracle(1.0, samples, seed);
  std::vector<KlGridRow> rows;
  const double a = std::log10(lo), b = std::log10(hi);
  for (int i = 0; i < points; ++i) {
    const double alpha = std::pow(10.0, a + (b - a) * i / (points - 1));
    KlGridRow row;
    row.alpha = alpha;
    row.k_diff = k_alpha(std::log(alpha)) - k_ref;
    row.oracle_diff = mc_kl_oracle(alpha, samples, seed) - oracle_ref;
    row.error = std::abs(row.k_diff - row.oracle_diff);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace sparsernn
