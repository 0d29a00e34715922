// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "diffil/autodiff/tensor.hpp"

#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace diffil::ad {

enum class OpKind {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kAddScalar,
  kMulScalar,
  kMatMul,
  kLinear,
  kScaleColumns,
  kSum,
  kMean,
  kMinReduce,
  kSquare,
  kSqrt,
  kExp,
  kLog,
  kTanh,
  kSigmoid,
  kSwish,
  kSin,
  kCos,
  kClamp,
  kConcat,
  kReshape,
  kGather,
  kPairwiseSqDist,
  kNormalizeGrad,
  kCustom,
};

std::string_view op_name(OpKind kind);

/// One gradient accumulator per op input; null for inputs that are constants.
using GradSlots = std::span<Vector* const>;

/// Adjoint of a recorded op: given dL/d(output), accumulate (+=) dL/d(input)
/// into every non-null slot.
using BackwardFn = std::function<void(const Vector& grad_out, GradSlots grad_in)>;

class Gradients;

/// Append-only record of a forward computation.
///
/// Nodes only reference earlier nodes, so the append order is a topological
/// order. A tape is confined to the thread that builds it and must outlive
/// every tensor linked to it.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers a differentiable leaf.
  Tensor variable(Tensor value);

  /// Appends an op node. `output` is the forward result; inputs that are not
  /// linked to this tape are treated as constants.
  Tensor record(OpKind kind, std::string_view label,
                std::span<const Tensor* const> inputs, Tensor output,
                BackwardFn backward);

  /// Reverse sweep from a scalar output. Visits every node at most once, in
  /// strict reverse append order.
  Gradients backward(const Tensor& output) const;

  std::size_t size() const { return nodes_.size(); }
  OpKind kind(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)).kind; }
  std::string_view label(NodeId id) const;
  std::vector<NodeId> nodes_of_kind(OpKind kind, std::string_view label = {}) const;

 private:
  struct Node {
    OpKind kind;
    std::string_view label;
    std::vector<NodeId> inputs;
    Index size;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
};

/// dL/d(node) for every node reached by a backward sweep.
class Gradients {
 public:
  /// Gradient w.r.t. a tensor recorded on the swept tape, shaped like it.
  /// Unreached nodes and untracked tensors give zeros.
  Tensor wrt(const Tensor& t) const;
  /// Raw adjoint of a node; empty if the node was never reached.
  const Vector& at(NodeId id) const { return slots_.at(static_cast<std::size_t>(id)); }

 private:
  friend class Tape;
  explicit Gradients(const Tape* tape, std::vector<Vector> slots)
      : tape_(tape), slots_(std::move(slots)) {}

  const Tape* tape_;
  std::vector<Vector> slots_;
};

}  // namespace diffil::ad
