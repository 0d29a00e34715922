// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "diffil/autodiff/tape.hpp"
#include "diffil/autodiff/tensor.hpp"

#include <span>
#include <vector>

// Differentiable ops over Tensor. Each op computes its forward value eagerly
// and, when any input is linked to a tape, appends a node carrying exactly the
// values its adjoint needs. Ops on constants return constants.
//
// Shape errors throw ConfigError; non-finite results throw NumericError.

namespace diffil::ad {

// Elementwise binary ops. Shapes must match, or one side must hold a single
// element, which is broadcast.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator+(const Tensor& a, double c) { return add_scalar(a, c); }
inline Tensor operator*(const Tensor& a, double c) { return mul_scalar(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul_scalar(a, c); }

/// [m,k]x[k,n] -> [m,n], [m,k]x[k] -> [m], [k]x[k,n] -> [n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// Batched affine map: x [B,in], w [out,in], b [out] -> x w^T + b, shape [B,out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
/// Column j of a [B,d] multiplied by v[j].
Tensor scale_columns(const Tensor& a, const Tensor& v);

/// Full reductions to a rank-0 tensor.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

struct MinResult {
  Tensor values;
  /// Flat index into the input of each selected element.
  std::vector<Index> argmin;
};

/// Minimum along `axis` (rank 1: axis 0; rank 2: axis 0 or 1). Ties go to
/// the lowest index. The adjoint is routed to the argmin lane only.
MinResult min_reduce(const Tensor& a, Index axis);

Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
/// x * sigmoid(x).
Tensor swish(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);

/// Straight-through inside [lo, hi] (boundaries included), zero outside.
Tensor clamp(const Tensor& a, double lo, double hi);

/// Concatenate along axis 0; trailing dimensions must agree.
Tensor concat(std::span<const Tensor> parts);
/// Stack rank-1 tensors of equal length into a [n, d] matrix.
Tensor stack(std::span<const Tensor> rows);
Tensor reshape(const Tensor& a, Shape shape);
/// Flat gather: out[i] = a.flat[indices[i]].
Tensor gather(const Tensor& a, std::span<const Index> indices);
/// Contiguous flat slice [offset, offset + count).
Tensor slice(const Tensor& a, Index offset, Index count);

/// D[i][j] = ||a_i - b_j||^2 for a [n,d] and b [m,d].
Tensor pairwise_sq_dist(const Tensor& a, const Tensor& b);

/// Identity forward. Backward rescales the incoming adjoint to unit L2 norm
/// (zero adjoints pass through unchanged).
Tensor normalize_grad(const Tensor& a);

/// Records an op with a caller-supplied adjoint. Used for fused kernels
/// (physics steps) that would be wasteful as a chain of primitive ops.
Tensor custom(std::string_view label, std::span<const Tensor* const> inputs,
              Tensor output, BackwardFn backward);

}  // namespace diffil::ad
