// SPDX-License-Identifier: Apache-2.0
#include "diffil/autodiff/tensor.hpp"

#include "diffil/errors.hpp"

#include <string>

namespace diffil::ad {

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) {
    if (d < 0) throw ConfigError("negative dimension in tensor shape");
    n *= d;
  }
  return n;
}

Tensor::Tensor(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (numel(shape_) != data_.size()) {
    throw ConfigError("tensor data length " + std::to_string(data_.size()) +
                      " does not match shape product " + std::to_string(numel(shape_)));
  }
}

Tensor Tensor::scalar(double value) {
  Vector v(1);
  v[0] = value;
  return Tensor({}, std::move(v));
}

Tensor Tensor::vector(Vector values) {
  const Index n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  Vector v(static_cast<Index>(values.size()));
  Index i = 0;
  for (double x : values) v[i++] = x;
  return vector(std::move(v));
}

Tensor Tensor::matrix(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  Vector v(m.size());
  Eigen::Map<RowMajorMatrix>(v.data(), m.rows(), m.cols()) = m;
  return Tensor({m.rows(), m.cols()}, std::move(v));
}

Tensor Tensor::zeros(Shape shape) {
  const Index n = numel(shape);
  return Tensor(std::move(shape), Vector::Zero(n));
}

double Tensor::item() const {
  if (data_.size() != 1) throw UsageError("item() on a tensor with more than one element");
  return data_[0];
}

Eigen::Map<const RowMajorMatrix> Tensor::as_matrix() const {
  if (rank() == 2) return {data_.data(), shape_[0], shape_[1]};
  if (rank() == 1) return {data_.data(), shape_[0], 1};
  return {data_.data(), 1, data_.size()};
}

Tensor detach(const Tensor& t) { return Tensor(t.shape(), t.values()); }

}  // namespace diffil::ad
