// SPDX-License-Identifier: Apache-2.0
#include "diffil/policy/mlp_policy.hpp"

#include "diffil/errors.hpp"

#include <cmath>

namespace diffil::policy {
namespace {

Eigen::MatrixXd uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Eigen::MatrixXd m(rows, cols);
  // Row-major fill so the draw order matches the flattened layout.
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = u(rng);
  return m;
}

}  // namespace

PolicyParams PolicyParams::init(Eigen::Index input_dim, Eigen::Index hidden1, Eigen::Index hidden2,
                                Eigen::Index action_dim, std::mt19937_64& rng) {
  if (input_dim < 1 || hidden1 < 1 || hidden2 < 1 || action_dim < 1) {
    throw ConfigError("policy: all layer widths must be positive");
  }
  PolicyParams p;
  const Eigen::Index widths[] = {input_dim, hidden1, hidden2, action_dim};
  for (int l = 0; l < 3; ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths[l]));
    p.weights.push_back(uniform_matrix(widths[l + 1], widths[l], bound, rng));
    p.biases.push_back(uniform_matrix(widths[l + 1], 1, bound, rng).col(0));
  }
  p.log_std = Eigen::VectorXd::Constant(action_dim, -1.0);
  return p;
}

Eigen::Index PolicyParams::num_parameters() const {
  Eigen::Index n = log_std.size();
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

std::vector<std::string> PolicyParams::names() const {
  std::vector<std::string> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back("l" + std::to_string(l) + ".weight");
    out.push_back("l" + std::to_string(l) + ".bias");
  }
  out.push_back("log_std");
  return out;
}

std::vector<ad::Shape> PolicyParams::shapes() const {
  std::vector<ad::Shape> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back({weights[l].rows(), weights[l].cols()});
    out.push_back({biases[l].size()});
  }
  out.push_back({log_std.size()});
  return out;
}

Eigen::VectorXd PolicyParams::flatten() const {
  Eigen::VectorXd flat(num_parameters());
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const auto& w = weights[l];
    Eigen::Map<ad::RowMajorMatrix>(flat.data() + off, w.rows(), w.cols()) = w;
    off += w.size();
    flat.segment(off, biases[l].size()) = biases[l];
    off += biases[l].size();
  }
  flat.segment(off, log_std.size()) = log_std;
  return flat;
}

void PolicyParams::assign(const Eigen::VectorXd& flat) {
  if (flat.size() != num_parameters()) throw UsageError("policy: flat parameter size mismatch");
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    auto& w = weights[l];
    w = Eigen::Map<const ad::RowMajorMatrix>(flat.data() + off, w.rows(), w.cols());
    off += w.size();
    biases[l] = flat.segment(off, biases[l].size());
    off += biases[l].size();
  }
  log_std = flat.segment(off, log_std.size());
}

bool PolicyParams::all_finite() const { return flatten().allFinite(); }

PolicyTensors PolicyTensors::constant(const PolicyParams& params) {
  PolicyTensors t;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    t.weights.push_back(ad::Tensor::matrix(params.weights[l]));
    t.biases.push_back(ad::Tensor::vector(params.biases[l]));
  }
  t.log_std = ad::Tensor::vector(params.log_std);
  return t;
}

PolicyTensors PolicyTensors::bind(const PolicyParams& params, ad::Tape& tape) {
  PolicyTensors t = constant(params);
  for (auto& w : t.weights) w = tape.variable(std::move(w));
  for (auto& b : t.biases) b = tape.variable(std::move(b));
  t.log_std = tape.variable(std::move(t.log_std));
  return t;
}

Eigen::VectorXd PolicyTensors::gradient(const ad::Gradients& grads) const {
  Eigen::Index n = log_std.size();
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  Eigen::VectorXd flat(n);
  Eigen::Index off = 0;
  auto put = [&](const ad::Tensor& t) {
    flat.segment(off, t.size()) = grads.wrt(t).values();
    off += t.size();
  };
  for (std::size_t l = 0; l < weights.size(); ++l) {
    put(weights[l]);
    put(biases[l]);
  }
  put(log_std);
  return flat;
}

PolicyOutput forward(const PolicyTensors& policy, const ad::Tensor& observation) {
  ad::Tensor h = observation;
  const std::size_t layers = policy.weights.size();
  const bool batched = observation.rank() == 2;
  for (std::size_t l = 0; l < layers; ++l) {
    h = batched ? ad::linear(h, policy.weights[l], policy.biases[l])
                : ad::matmul(policy.weights[l], h) + policy.biases[l];
    if (l + 1 < layers) h = ad::swish(h);
  }
  return {h, ad::clamp(policy.log_std, kLogStdMin, kLogStdMax)};
}

ad::Tensor sample(const PolicyOutput& out, const Eigen::VectorXd& eps, double action_bound) {
  if (eps.size() != out.mean.size()) throw UsageError("sample: noise dimension mismatch");
  const ad::Tensor std = ad::exp(out.log_std);
  const ad::Tensor noise = out.mean.rank() == 2 ? ad::scale_columns(ad::Tensor(out.mean.shape(), eps), std)
                                                : ad::mul(std, ad::Tensor::vector(eps));
  return ad::clamp(out.mean + noise, -action_bound, action_bound);
}

ad::Tensor mean_action(const PolicyOutput& out, double action_bound) {
  return ad::clamp(out.mean, -action_bound, action_bound);
}

}  // namespace diffil::policy
