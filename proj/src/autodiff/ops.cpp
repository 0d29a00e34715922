// SPDX-License-Identifier: Apache-2.0
#include "diffil/autodiff/ops.hpp"

#include "diffil/errors.hpp"

#include <cmath>
#include <string>

namespace diffil::ad {
namespace {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tape* common_tape(std::span<const Tensor* const> inputs) {
  for (const Tensor* t : inputs) {
    if (t->tracked()) return t->tape();
  }
  return nullptr;
}

// Finite check, then record if any input is tracked. `make_backward` is only
// invoked for tracked results so constant-only evaluation captures nothing.
template <typename MakeBackward>
Tensor finish(OpKind kind, std::string_view label, std::span<const Tensor* const> inputs,
              Tensor out, MakeBackward&& make_backward) {
  Tape* tape = common_tape(inputs);
  if (!out.values().allFinite()) {
    const std::string name(label.empty() ? op_name(kind) : label);
    throw NumericError(name, tape ? static_cast<NodeId>(tape->size()) : kNoNode);
  }
  if (tape == nullptr) return out;
  return tape->record(kind, label, inputs, std::move(out), make_backward());
}

template <typename MakeBackward>
Tensor finish1(OpKind kind, const Tensor& a, Tensor out, MakeBackward&& make_backward) {
  const Tensor* in[] = {&a};
  return finish(kind, {}, in, std::move(out), std::forward<MakeBackward>(make_backward));
}

template <typename MakeBackward>
Tensor finish2(OpKind kind, const Tensor& a, const Tensor& b, Tensor out,
               MakeBackward&& make_backward) {
  const Tensor* in[] = {&a, &b};
  return finish(kind, {}, in, std::move(out), std::forward<MakeBackward>(make_backward));
}

enum class Broadcast { kNone, kLeft, kRight };

Broadcast broadcast_rule(OpKind kind, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::kNone;
  if (a.size() == 1) return Broadcast::kLeft;
  if (b.size() == 1) return Broadcast::kRight;
  throw ConfigError(std::string(op_name(kind)) + ": shape mismatch " + shape_str(a.shape()) +
                    " vs " + shape_str(b.shape()));
}

// Accumulates an elementwise adjoint into a slot, summing when that input was
// broadcast from a single element.
void accumulate(Vector* slot, const Vector& contrib) {
  if (slot == nullptr) return;
  if (slot->size() == contrib.size()) {
    *slot += contrib;
  } else {
    (*slot)[0] += contrib.sum();
  }
}

Vector expand(const Tensor& t, Index n) {
  if (t.size() == n) return t.values();
  return Vector::Constant(n, t.values()[0]);
}

template <typename Fn>
Tensor binary(OpKind kind, const Tensor& a, const Tensor& b, Fn&& fwd) {
  const Broadcast rule = broadcast_rule(kind, a, b);
  const Shape& shape = rule == Broadcast::kLeft ? b.shape() : a.shape();
  const Index n = numel(shape);
  return Tensor(shape, fwd(expand(a, n), expand(b, n)));
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = binary(OpKind::kAdd, a, b, [](const Vector& x, const Vector& y) -> Vector { return x + y; });
  return finish2(OpKind::kAdd, a, b, std::move(out), [] {
    return [](const Vector& g, GradSlots s) {
      accumulate(s[0], g);
      accumulate(s[1], g);
    };
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tensor out = binary(OpKind::kSub, a, b, [](const Vector& x, const Vector& y) -> Vector { return x - y; });
  return finish2(OpKind::kSub, a, b, std::move(out), [] {
    return [](const Vector& g, GradSlots s) {
      accumulate(s[0], g);
      accumulate(s[1], -g);
    };
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tensor out = binary(OpKind::kMul, a, b,
                      [](const Vector& x, const Vector& y) -> Vector { return x.cwiseProduct(y); });
  const Index n = out.size();
  return finish2(OpKind::kMul, a, b, std::move(out), [&] {
    return [av = expand(a, n), bv = expand(b, n)](const Vector& g, GradSlots s) {
      if (s[0]) accumulate(s[0], g.cwiseProduct(bv));
      if (s[1]) accumulate(s[1], g.cwiseProduct(av));
    };
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  Tensor out = binary(OpKind::kDiv, a, b,
                      [](const Vector& x, const Vector& y) -> Vector { return x.cwiseQuotient(y); });
  const Index n = out.size();
  return finish2(OpKind::kDiv, a, b, std::move(out), [&] {
    return [av = expand(a, n), bv = expand(b, n)](const Vector& g, GradSlots s) {
      if (s[0]) accumulate(s[0], g.cwiseQuotient(bv));
      if (s[1]) {
        accumulate(s[1], -(g.array() * av.array() / bv.array().square()).matrix());
      }
    };
  });
}

Tensor neg(const Tensor& a) {
  return finish1(OpKind::kNeg, a, Tensor(a.shape(), -a.values()), [] {
    return [](const Vector& g, GradSlots s) { *s[0] -= g; };
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  return finish1(OpKind::kAddScalar, a, Tensor(a.shape(), (a.values().array() + c).matrix()), [] {
    return [](const Vector& g, GradSlots s) { *s[0] += g; };
  });
}

Tensor mul_scalar(const Tensor& a, double c) {
  return finish1(OpKind::kMulScalar, a, Tensor(a.shape(), a.values() * c), [c] {
    return [c](const Vector& g, GradSlots s) { *s[0] += c * g; };
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 1 || a.rank() > 2 || b.rank() < 1 || b.rank() > 2 || (a.rank() == 1 && b.rank() == 1)) {
    throw ConfigError("matmul: unsupported ranks " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  // Treat a rank-1 left operand as a row and a rank-1 right operand as a column.
  const Index m = a.rank() == 2 ? a.dim(0) : 1;
  const Index k = a.rank() == 2 ? a.dim(1) : a.dim(0);
  const Index kb = b.dim(0);
  const Index n = b.rank() == 2 ? b.dim(1) : 1;
  if (k != kb) {
    throw ConfigError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                      shape_str(b.shape()));
  }
  Eigen::Map<const RowMajorMatrix> am(a.values().data(), m, k);
  Eigen::Map<const RowMajorMatrix> bm(b.values().data(), k, n);
  Vector data(m * n);
  Eigen::Map<RowMajorMatrix>(data.data(), m, n).noalias() = am * bm;

  Shape shape;
  if (a.rank() == 2) shape.push_back(m);
  if (b.rank() == 2) shape.push_back(n);
  return finish2(OpKind::kMatMul, a, b, Tensor(std::move(shape), std::move(data)), [&] {
    return [av = a.values(), bv = b.values(), m, k, n](const Vector& g, GradSlots s) {
      Eigen::Map<const RowMajorMatrix> gm(g.data(), m, n);
      if (s[0]) {
        Eigen::Map<const RowMajorMatrix> bm(bv.data(), k, n);
        Eigen::Map<RowMajorMatrix>(s[0]->data(), m, k).noalias() += gm * bm.transpose();
      }
      if (s[1]) {
        Eigen::Map<const RowMajorMatrix> am(av.data(), m, k);
        Eigen::Map<RowMajorMatrix>(s[1]->data(), k, n).noalias() += am.transpose() * gm;
      }
    };
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1 || x.dim(1) != w.dim(1) || b.dim(0) != w.dim(0)) {
    throw ConfigError("linear: bad shapes " + shape_str(x.shape()) + ", " + shape_str(w.shape()) + ", " +
                      shape_str(b.shape()));
  }
  const Index batch = x.dim(0), in = x.dim(1), out = w.dim(0);
  Eigen::Map<const RowMajorMatrix> xm(x.values().data(), batch, in);
  Eigen::Map<const RowMajorMatrix> wm(w.values().data(), out, in);
  Vector data(batch * out);
  Eigen::Map<RowMajorMatrix> ym(data.data(), batch, out);
  ym.noalias() = xm * wm.transpose();
  ym.rowwise() += b.values().transpose();
  const Tensor* inputs[] = {&x, &w, &b};
  return finish(OpKind::kLinear, {}, inputs, Tensor({batch, out}, std::move(data)), [&] {
    return [xv = x.values(), wv = w.values(), batch, in, out](const Vector& g, GradSlots s) {
      Eigen::Map<const RowMajorMatrix> gm(g.data(), batch, out);
      if (s[0]) {
        Eigen::Map<const RowMajorMatrix> wm(wv.data(), out, in);
        Eigen::Map<RowMajorMatrix>(s[0]->data(), batch, in).noalias() += gm * wm;
      }
      if (s[1]) {
        Eigen::Map<const RowMajorMatrix> xm(xv.data(), batch, in);
        Eigen::Map<RowMajorMatrix>(s[1]->data(), out, in).noalias() += gm.transpose() * xm;
      }
      if (s[2]) *s[2] += gm.colwise().sum().transpose();
    };
  });
}

Tensor scale_columns(const Tensor& a, const Tensor& v) {
  if (a.rank() != 2 || v.rank() != 1 || a.dim(1) != v.dim(0)) {
    throw ConfigError("scale_columns: bad shapes " + shape_str(a.shape()) + ", " + shape_str(v.shape()));
  }
  const Index rows = a.dim(0), cols = a.dim(1);
  Vector data(a.size());
  Eigen::Map<RowMajorMatrix>(data.data(), rows, cols) =
      Eigen::Map<const RowMajorMatrix>(a.values().data(), rows, cols) * v.values().asDiagonal();
  return finish2(OpKind::kScaleColumns, a, v, Tensor(a.shape(), std::move(data)), [&] {
    return [av = a.values(), vv = v.values(), rows, cols](const Vector& g, GradSlots s) {
      Eigen::Map<const RowMajorMatrix> gm(g.data(), rows, cols);
      if (s[0]) Eigen::Map<RowMajorMatrix>(s[0]->data(), rows, cols) += gm * vv.asDiagonal();
      if (s[1]) {
        Eigen::Map<const RowMajorMatrix> am(av.data(), rows, cols);
        *s[1] += gm.cwiseProduct(am).colwise().sum().transpose();
      }
    };
  });
}

Tensor sum(const Tensor& a) {
  return finish1(OpKind::kSum, a, Tensor::scalar(a.values().sum()), [] {
    return [](const Vector& g, GradSlots s) { s[0]->array() += g[0]; };
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw UsageError("mean of an empty tensor");
  const double inv = 1.0 / static_cast<double>(a.size());
  return finish1(OpKind::kMean, a, Tensor::scalar(a.values().sum() * inv), [inv] {
    return [inv](const Vector& g, GradSlots s) { s[0]->array() += g[0] * inv; };
  });
}

MinResult min_reduce(const Tensor& a, Index axis) {
  if (a.size() == 0) throw UsageError("min_reduce of an empty tensor");
  Index outer = 0;   // number of outputs
  Index inner = 0;   // reduction length
  Index stride = 0;  // flat step between reduced elements
  Index step = 0;    // flat step between outputs
  Shape shape;
  if (a.rank() == 1 && axis == 0) {
    outer = 1, inner = a.dim(0), stride = 1, step = 0;
  } else if (a.rank() == 2 && axis == 0) {
    outer = a.dim(1), inner = a.dim(0), stride = a.dim(1), step = 1;
    shape = {outer};
  } else if (a.rank() == 2 && axis == 1) {
    outer = a.dim(0), inner = a.dim(1), stride = 1, step = a.dim(1);
    shape = {outer};
  } else {
    throw ConfigError("min_reduce: invalid axis " + std::to_string(axis) + " for shape " +
                      shape_str(a.shape()));
  }
  if (inner == 0) throw UsageError("min_reduce over an empty axis");

  const Vector& x = a.values();
  Vector values(outer);
  std::vector<Index> argmin(static_cast<std::size_t>(outer));
  for (Index o = 0; o < outer; ++o) {
    Index best = o * step;
    for (Index r = 1; r < inner; ++r) {
      const Index idx = o * step + r * stride;
      if (x[idx] < x[best]) best = idx;
    }
    values[o] = x[best];
    argmin[static_cast<std::size_t>(o)] = best;
  }
  Tensor out = finish1(OpKind::kMinReduce, a, Tensor(std::move(shape), std::move(values)), [&] {
    return [argmin](const Vector& g, GradSlots s) {
      for (std::size_t o = 0; o < argmin.size(); ++o) (*s[0])[argmin[o]] += g[static_cast<Index>(o)];
    };
  });
  return {std::move(out), std::move(argmin)};
}

Tensor square(const Tensor& a) {
  return finish1(OpKind::kSquare, a, Tensor(a.shape(), a.values().array().square().matrix()), [&] {
    return [x = a.values()](const Vector& g, GradSlots s) {
      s[0]->array() += 2.0 * g.array() * x.array();
    };
  });
}

Tensor sqrt(const Tensor& a) {
  Vector y = a.values().array().sqrt().matrix();
  return finish1(OpKind::kSqrt, a, Tensor(a.shape(), y), [&] {
    return [y](const Vector& g, GradSlots s) { s[0]->array() += 0.5 * g.array() / y.array(); };
  });
}

Tensor exp(const Tensor& a) {
  Vector y = a.values().array().exp().matrix();
  return finish1(OpKind::kExp, a, Tensor(a.shape(), y), [&] {
    return [y](const Vector& g, GradSlots s) { s[0]->array() += g.array() * y.array(); };
  });
}

Tensor log(const Tensor& a) {
  return finish1(OpKind::kLog, a, Tensor(a.shape(), a.values().array().log().matrix()), [&] {
    return [x = a.values()](const Vector& g, GradSlots s) { s[0]->array() += g.array() / x.array(); };
  });
}

Tensor tanh(const Tensor& a) {
  Vector y = a.values().array().tanh().matrix();
  return finish1(OpKind::kTanh, a, Tensor(a.shape(), y), [&] {
    return [y](const Vector& g, GradSlots s) {
      s[0]->array() += g.array() * (1.0 - y.array().square());
    };
  });
}

Tensor sigmoid(const Tensor& a) {
  Vector y = a.values().unaryExpr(&stable_sigmoid);
  return finish1(OpKind::kSigmoid, a, Tensor(a.shape(), y), [&] {
    return [y](const Vector& g, GradSlots s) {
      s[0]->array() += g.array() * y.array() * (1.0 - y.array());
    };
  });
}

Tensor swish(const Tensor& a) {
  Vector sig = a.values().unaryExpr(&stable_sigmoid);
  Vector y = a.values().cwiseProduct(sig);
  return finish1(OpKind::kSwish, a, Tensor(a.shape(), std::move(y)), [&] {
    // d/dx x*s(x) = s + x*s*(1-s)
    Vector dy = (sig.array() + a.values().array() * sig.array() * (1.0 - sig.array())).matrix();
    return [dy = std::move(dy)](const Vector& g, GradSlots s) { *s[0] += g.cwiseProduct(dy); };
  });
}

Tensor sin(const Tensor& a) {
  return finish1(OpKind::kSin, a, Tensor(a.shape(), a.values().array().sin().matrix()), [&] {
    return [c = Vector(a.values().array().cos().matrix())](const Vector& g, GradSlots s) {
      *s[0] += g.cwiseProduct(c);
    };
  });
}

Tensor cos(const Tensor& a) {
  return finish1(OpKind::kCos, a, Tensor(a.shape(), a.values().array().cos().matrix()), [&] {
    return [sn = Vector(a.values().array().sin().matrix())](const Vector& g, GradSlots s) {
      *s[0] -= g.cwiseProduct(sn);
    };
  });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (lo > hi) throw ConfigError("clamp: lo > hi");
  Tensor out(a.shape(), a.values().cwiseMax(lo).cwiseMin(hi));
  return finish1(OpKind::kClamp, a, std::move(out), [&] {
    Vector mask = a.values().unaryExpr([lo, hi](double x) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
    return [mask = std::move(mask)](const Vector& g, GradSlots s) { *s[0] += g.cwiseProduct(mask); };
  });
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw UsageError("concat of zero tensors");
  const Shape& first = parts[0].shape();
  if (first.empty()) throw ConfigError("concat: rank-0 inputs");
  Shape shape = first;
  shape[0] = 0;
  Index total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != static_cast<Index>(first.size()) ||
        !std::equal(first.begin() + 1, first.end(), p.shape().begin() + 1)) {
      throw ConfigError("concat: trailing shape mismatch " + shape_str(first) + " vs " +
                        shape_str(p.shape()));
    }
    shape[0] += p.dim(0);
    total += p.size();
  }
  Vector data(total);
  std::vector<Index> offsets;
  offsets.reserve(parts.size());
  std::vector<const Tensor*> inputs;
  inputs.reserve(parts.size());
  Index off = 0;
  for (const Tensor& p : parts) {
    data.segment(off, p.size()) = p.values();
    offsets.push_back(off);
    inputs.push_back(&p);
    off += p.size();
  }
  return finish(OpKind::kConcat, {}, inputs, Tensor(std::move(shape), std::move(data)), [&] {
    return [offsets = std::move(offsets)](const Vector& g, GradSlots s) {
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i]) *s[i] += g.segment(offsets[i], s[i]->size());
      }
    };
  });
}

Tensor stack(std::span<const Tensor> rows) {
  std::vector<Tensor> reshaped;
  reshaped.reserve(rows.size());
  for (const Tensor& r : rows) {
    if (r.rank() != 1) throw ConfigError("stack: expected rank-1 rows, got " + shape_str(r.shape()));
    reshaped.push_back(reshape(r, {1, r.dim(0)}));
  }
  return concat(reshaped);
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw ConfigError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  return finish1(OpKind::kReshape, a, Tensor(std::move(shape), a.values()), [] {
    return [](const Vector& g, GradSlots s) { *s[0] += g; };
  });
}

Tensor gather(const Tensor& a, std::span<const Index> indices) {
  Vector data(static_cast<Index>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= a.size()) {
      throw ConfigError("gather: index " + std::to_string(indices[i]) + " out of range");
    }
    data[static_cast<Index>(i)] = a.values()[indices[i]];
  }
  return finish1(OpKind::kGather, a, Tensor::vector(std::move(data)), [&] {
    return [idx = std::vector<Index>(indices.begin(), indices.end())](const Vector& g, GradSlots s) {
      for (std::size_t i = 0; i < idx.size(); ++i) (*s[0])[idx[i]] += g[static_cast<Index>(i)];
    };
  });
}

Tensor slice(const Tensor& a, Index offset, Index count) {
  if (offset < 0 || count < 0 || offset + count > a.size()) {
    throw ConfigError("slice: range out of bounds for " + shape_str(a.shape()));
  }
  return finish1(OpKind::kGather, a, Tensor::vector(a.values().segment(offset, count)), [=] {
    return [=](const Vector& g, GradSlots s) { s[0]->segment(offset, count) += g; };
  });
}

Tensor pairwise_sq_dist(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw ConfigError("pairwise_sq_dist: expected [n,d] and [m,d], got " + shape_str(a.shape()) +
                      " and " + shape_str(b.shape()));
  }
  const Index n = a.dim(0), m = b.dim(0);
  auto am = a.as_matrix();
  auto bm = b.as_matrix();
  Vector data(n * m);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < m; ++j) data[i * m + j] = (am.row(i) - bm.row(j)).squaredNorm();
  }
  return finish2(OpKind::kPairwiseSqDist, a, b, Tensor({n, m}, std::move(data)), [&] {
    return [av = a.values(), bv = b.values(), n, m, d = a.dim(1)](const Vector& g, GradSlots s) {
      Eigen::Map<const RowMajorMatrix> am(av.data(), n, d);
      Eigen::Map<const RowMajorMatrix> bm(bv.data(), m, d);
      for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < m; ++j) {
          const double gij = g[i * m + j];
          if (gij == 0.0) continue;
          const auto diff = (2.0 * gij) * (am.row(i) - bm.row(j));
          if (s[0]) s[0]->segment(i * d, d) += diff.transpose();
          if (s[1]) s[1]->segment(j * d, d) -= diff.transpose();
        }
      }
    };
  });
}

Tensor normalize_grad(const Tensor& a) {
  return finish1(OpKind::kNormalizeGrad, a, Tensor(a.shape(), a.values()), [] {
    return [](const Vector& g, GradSlots s) {
      const double norm = g.norm();
      if (norm > 0.0) {
        *s[0] += g / norm;
      } else {
        *s[0] += g;
      }
    };
  });
}

Tensor custom(std::string_view label, std::span<const Tensor* const> inputs, Tensor output,
              BackwardFn backward) {
  return finish(OpKind::kCustom, label, inputs, std::move(output),
                [&] { return std::move(backward); });
}

}  // namespace diffil::ad
