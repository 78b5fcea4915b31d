#ifndef SPARSERNN_INIT_HPP
#define SPARSERNN_INIT_HPP

#include <cmath>

#include "sparsernn/rng.hpp"
#include "sparsernn/tensor.hpp"

namespace sparsernn {

// Semi-orthogonal matrix from the QR factorisation of a Gaussian draw: rows
// orthonormal when rows <= cols, columns orthonormal otherwise.
template <class Scalar>
Tensor<Scalar> orthogonal(Index rows, Index cols, RngStream& rng) {
  const Index big = std::max(rows, cols), small = std::min(rows, cols);
  Eigen::MatrixXd g(big, small);
  for (Index j = 0; j < small; ++j)
    for (Index i = 0; i < big; ++i) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  // Sign fix makes the draw uniform over the orthogonal group.
  for (Index j = 0; j < small; ++j)
    if (qr.matrixQR()(j, j) < 0) q.col(j) = -q.col(j);
  if (rows < cols) return q.transpose().cast<Scalar>();
  return q.cast<Scalar>();
}

// Orthogonal init applied separately to each of `blocks` column blocks.
template <class Scalar>
Tensor<Scalar> orthogonal_blocks(Index rows, Index block_cols, Index blocks, RngStream& rng) {
  Tensor<Scalar> out(rows, block_cols * blocks);
  for (Index k = 0; k < blocks; ++k) out.middleCols(k * block_cols, block_cols) = orthogonal<Scalar>(rows, block_cols, rng);
  return out;
}

// U(−a, a) with a = sqrt(6 / (fan_in + fan_out)).
template <class Scalar>
Tensor<Scalar> glorot_uniform(Index fan_in, Index fan_out, RngStream& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<Scalar> out(fan_in, fan_out);
  for (Index i = 0; i < out.size(); ++i) out.data()[i] = static_cast<Scalar>(a * (2.0 * rng.uniform() - 1.0));
  return out;
}

}  // namespace sparsernn

#endif  // SPARSERNN_INIT_HPP
