// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace diffil::ad {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using Vector = Eigen::VectorXd;
using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using NodeId = std::int64_t;

inline constexpr NodeId kNoNode = -1;

class Tape;

Index numel(const Shape& shape);

/// Dense row-major array of doubles, optionally linked to a node on a Tape.
///
/// Tensors are plain values: copying one copies the data and the tape link.
/// A tensor without a tape link is a constant as far as differentiation is
/// concerned.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, Vector data);

  static Tensor scalar(double value);
  static Tensor vector(Vector values);
  static Tensor vector(std::initializer_list<double> values);
  /// Copies an Eigen matrix (any storage order) into row-major layout.
  static Tensor matrix(const Eigen::Ref<const Eigen::MatrixXd>& m);
  static Tensor zeros(Shape shape);

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index size() const { return data_.size(); }
  Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }

  const Vector& values() const { return data_; }
  double operator[](Index i) const { return data_[i]; }
  double item() const;

  Eigen::Map<const RowMajorMatrix> as_matrix() const;

  bool tracked() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  NodeId node() const { return node_; }

 private:
  friend class Tape;

  Shape shape_;
  Vector data_;
  Tape* tape_ = nullptr;
  NodeId node_ = kNoNode;
};

/// Same values, no tape linkage. Gradients never flow through the result.
Tensor detach(const Tensor& t);

}  // namespace diffil::ad
