#ifndef SPARSERNN_TENSOR_HPP
#define SPARSERNN_TENSOR_HPP

#include <Eigen/Dense>

#include <sstream>
#include <string>

#include "sparsernn/errors.hpp"

namespace sparsernn {

// Dense row-major matrix; the unit of all computation. Vectors are 1×n rows,
// scalars are 1×1. Sequences are carried as one matrix per timestep.
template <class Scalar>
using Tensor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class Scalar>
using ColumnVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Index = Eigen::Index;

template <class Derived>
std::string shape_string(const Eigen::DenseBase<Derived>& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

template <class Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().allFinite();
}

}  // namespace sparsernn

#endif  // SPARSERNN_TENSOR_HPP
