// SPDX-License-Identifier: Apache-2.0
#include "diffil/autodiff/tape.hpp"

#include "diffil/errors.hpp"

#include <string>

namespace diffil::ad {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kNeg: return "neg";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kMulScalar: return "mul_scalar";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kLinear: return "linear";
    case OpKind::kScaleColumns: return "scale_columns";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kMinReduce: return "min_reduce";
    case OpKind::kSquare: return "square";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSwish: return "swish";
    case OpKind::kSin: return "sin";
    case OpKind::kCos: return "cos";
    case OpKind::kClamp: return "clamp";
    case OpKind::kConcat: return "concat";
    case OpKind::kReshape: return "reshape";
    case OpKind::kGather: return "gather";
    case OpKind::kPairwiseSqDist: return "pairwise_sq_dist";
    case OpKind::kNormalizeGrad: return "normalize_grad";
    case OpKind::kCustom: return "custom";
  }
  return "unknown";
}

Tensor Tape::variable(Tensor value) {
  value.tape_ = this;
  value.node_ = static_cast<NodeId>(nodes_.size());
  nodes_.push_back(Node{OpKind::kLeaf, {}, {}, value.size(), {}});
  return value;
}

Tensor Tape::record(OpKind kind, std::string_view label, std::span<const Tensor* const> inputs,
                    Tensor output, BackwardFn backward) {
  std::vector<NodeId> ids;
  ids.reserve(inputs.size());
  for (const Tensor* in : inputs) {
    if (in->tape_ != nullptr && in->tape_ != this) {
      throw UsageError("op '" + std::string(op_name(kind)) + "' mixes tensors from different tapes");
    }
    ids.push_back(in->tape_ == this ? in->node_ : kNoNode);
  }
  output.tape_ = this;
  output.node_ = static_cast<NodeId>(nodes_.size());
  nodes_.push_back(Node{kind, label, std::move(ids), output.size(), std::move(backward)});
  return output;
}

std::string_view Tape::label(NodeId id) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(id));
  return n.label.empty() ? op_name(n.kind) : n.label;
}

std::vector<NodeId> Tape::nodes_of_kind(OpKind kind, std::string_view label) const {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind == kind && (label.empty() || nodes_[i].label == label)) {
      out.push_back(static_cast<NodeId>(i));
    }
  }
  return out;
}

Gradients Tape::backward(const Tensor& output) const {
  if (output.tape_ != this) throw UsageError("backward: output is not recorded on this tape");
  if (output.rank() != 0 || output.size() != 1) {
    throw UsageError("backward: output must be a scalar (shape [])");
  }

  std::vector<Vector> slots(nodes_.size());
  slots[static_cast<std::size_t>(output.node_)] = Vector::Ones(1);

  std::vector<Vector*> in_slots;
  for (NodeId id = output.node_; id >= 0; --id) {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    const Vector& grad = slots[static_cast<std::size_t>(id)];
    if (grad.size() == 0 || !node.backward) continue;

    in_slots.clear();
    for (NodeId in : node.inputs) {
      if (in == kNoNode) {
        in_slots.push_back(nullptr);
        continue;
      }
      Vector& slot = slots[static_cast<std::size_t>(in)];
      if (slot.size() == 0) slot = Vector::Zero(nodes_[static_cast<std::size_t>(in)].size);
      in_slots.push_back(&slot);
    }
    node.backward(grad, in_slots);
  }
  return Gradients(this, std::move(slots));
}

Tensor Gradients::wrt(const Tensor& t) const {
  if (t.tape() != tape_ || t.node() == kNoNode) return Tensor::zeros(t.shape());
  const Vector& g = slots_.at(static_cast<std::size_t>(t.node()));
  if (g.size() == 0) return Tensor::zeros(t.shape());
  return Tensor(t.shape(), g);
}

}  // namespace diffil::ad
