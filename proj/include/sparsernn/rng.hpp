#ifndef SPARSERNN_RNG_HPP
#define SPARSERNN_RNG_HPP

#include <cstdint>
#include <string_view>

#include "sparsernn/tensor.hpp"

namespace sparsernn {

// Counter-based generator: the n-th draw is a pure function of (key, n), and
// substreams are derived by hashing a tag into the key. Results therefore do
// not depend on how draws are interleaved between consumers, and normals are
// produced by our own Box-Muller so they are identical across standard
// libraries.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  // A stream whose normal() is identically zero (used to switch noise off).
  static RngStream zeros();

  RngStream derive(std::uint64_t tag) const;
  RngStream derive(std::string_view name) const;

  std::uint64_t next_u64();
  double uniform();  // in (0, 1)
  double normal();
  std::uint64_t below(std::uint64_t n);  // uniform integer in [0, n)

  template <class Scalar>
  void fill_normal(Tensor<Scalar>& t) {
    Scalar* p = t.data();
    for (Index i = 0; i < t.size(); ++i) p[i] = static_cast<Scalar>(normal());
  }

  template <class Scalar>
  Tensor<Scalar> normal_tensor(Index rows, Index cols) {
    Tensor<Scalar> t(rows, cols);
    fill_normal(t);
    return t;
  }

  bool is_zero() const { return zero_; }
  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  RngStream(std::uint64_t key, bool zero) : key_(key), zero_(zero) {}

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  bool zero_ = false;
  bool has_spare_ = false;
  double spare_ = 0;
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t hash_name(std::string_view name);

}  // namespace sparsernn

#endif  // SPARSERNN_RNG_HPP
