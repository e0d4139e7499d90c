// Copyright 2026 The lrsched Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/// @file mlp.hpp
/// Fully connected softmax classifier with mean cross-entropy loss.
///
/// Weight layout: layers in order, each stored as its weight matrix
/// (out x in, row-major) followed by its bias (out). Gradients use reverse
/// accumulation; Hessian-vector products use the forward-over-reverse
/// R-operator, so each HVP costs one extra forward and backward sweep.

#pragma once

#include "lrsched/objective.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace lrsched {

enum class Activation { kTanh, kSoftplus, kRelu };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kSoftplus: return "softplus";
    case Activation::kRelu: return "relu";
  }
  return "?";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "softplus") return Activation::kSoftplus;
  if (s == "relu") return Activation::kRelu;
  throw ArgumentError("unknown activation '" + s + "'");
}

struct MlpSpec {
  std::vector<std::size_t> layer_sizes;  // input, hidden..., classes
  Activation activation = Activation::kTanh;
  /// Uniform init bound. Unset means 1/sqrt(fan_in) per layer.
  std::optional<double> init_scale;
  double weight_decay = 0.0;

  std::size_t parameter_count() const {
    std::size_t d = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) d += (layer_sizes[l] + 1) * layer_sizes[l + 1];
    return d;
  }
};

class MlpObjective final : public Objective {
 public:
  explicit MlpObjective(MlpSpec spec) : spec_(std::move(spec)) {
    require(spec_.layer_sizes.size() >= 2, "mlp: need at least input and output sizes");
    for (std::size_t s : spec_.layer_sizes) require(s > 0, "mlp: layer sizes must be positive");
    require(spec_.layer_sizes.back() >= 2, "mlp: need at least two classes");
    require(spec_.weight_decay >= 0.0, "mlp: weight_decay must be >= 0");
    if (spec_.init_scale) require(*spec_.init_scale > 0.0, "mlp: init_scale must be positive");
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < spec_.layer_sizes.size(); ++l) {
      layers_.push_back({spec_.layer_sizes[l], spec_.layer_sizes[l + 1], offset});
      offset += (spec_.layer_sizes[l] + 1) * spec_.layer_sizes[l + 1];
    }
    dim_ = offset;
  }

  const MlpSpec& spec() const { return spec_; }
  std::size_t dim() const override { return dim_; }
  std::string name() const override { return "mlp"; }
  std::size_t num_classes() const { return spec_.layer_sizes.back(); }

  /// Uniform initialization of weights and biases, seeded.
  Vector initial_weights(RngStream rng) const {
    Vector w(static_cast<Eigen::Index>(dim_));
    for (const Layer& layer : layers_) {
      const double bound = spec_.init_scale.value_or(1.0 / std::sqrt(static_cast<double>(layer.in)));
      const std::size_t count = (layer.in + 1) * layer.out;
      for (std::size_t i = 0; i < count; ++i) w[static_cast<Eigen::Index>(layer.offset + i)] = rng.uniform(-bound, bound);
    }
    return w;
  }

  double loss(const VecRef& w, const Batch& batch) const override {
    check_dim(w);
    const Forward fw = forward(w, batch);
    return fw.data_loss + regularizer(w);
  }

  Vector grad(const VecRef& w, const Batch& batch) const override {
    check_dim(w);
    const Forward fw = forward(w, batch);
    return backward(w, fw).grad;
  }

  LossGrad loss_grad(const VecRef& w, const Batch& batch) const override {
    check_dim(w);
    const Forward fw = forward(w, batch);
    return {fw.data_loss + regularizer(w), backward(w, fw).grad};
  }

  Vector hvp(const VecRef& w, const VecRef& v, const Batch& batch) const override {
    return grad_hvp(w, v, batch).hvp;
  }

  GradHvp grad_hvp(const VecRef& w, const VecRef& v, const Batch& batch) const override {
    check_dim(w);
    check_dim(v);
    const Forward fw = forward(w, batch);
    Backward bw = backward(w, fw);
    Vector hv = r_operator(w, v, fw, bw);
    return {std::move(bw.grad), std::move(hv)};
  }

  std::optional<double> accuracy(const VecRef& w, const Batch& batch) const override {
    check_dim(w);
    const Forward fw = forward(w, batch);
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < fw.probs.rows(); ++i) {
      Eigen::Index best = 0;
      fw.probs.row(i).maxCoeff(&best);
      if (best == fw.labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(fw.probs.rows());
  }

 private:
  struct Layer {
    std::size_t in;
    std::size_t out;
    std::size_t offset;  // weights at offset, bias at offset + in*out
  };

  struct Forward {
    std::vector<RowMatrix> inputs;  // inputs[l] feeds layer l; inputs[0] is the batch
    std::vector<RowMatrix> pre;     // pre-activations; pre.back() are the logits
    RowMatrix probs;
    std::vector<int> labels;
    double data_loss = 0.0;
  };

  struct Backward {
    Vector grad;
    std::vector<RowMatrix> delta;     // dLoss/dpre[l]
    std::vector<RowMatrix> upstream;  // delta[l] * W_l, before the activation mask (l > 0)
  };

  using ConstMap = Eigen::Map<const RowMatrix>;
  using MutMap = Eigen::Map<RowMatrix>;

  ConstMap weights(const VecRef& w, const Layer& layer) const {
    return ConstMap(w.data() + layer.offset, static_cast<Eigen::Index>(layer.out), static_cast<Eigen::Index>(layer.in));
  }
  Eigen::Map<const Eigen::RowVectorXd> bias(const VecRef& w, const Layer& layer) const {
    return Eigen::Map<const Eigen::RowVectorXd>(w.data() + layer.offset + layer.in * layer.out,
                                                static_cast<Eigen::Index>(layer.out));
  }

  double regularizer(const VecRef& w) const {
    return spec_.weight_decay == 0.0 ? 0.0 : 0.5 * spec_.weight_decay * w.squaredNorm();
  }

  using RowArray = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  RowMatrix activate(const RowMatrix& z) const {
    switch (spec_.activation) {
      case Activation::kTanh: {
        // Eigen's tanh does not vectorize for doubles; exp does. |z| > 20 is saturated anyway.
        const RowArray e = (2.0 * z.array().cwiseMax(-20.0).cwiseMin(20.0)).exp();
        return ((e - 1.0) / (e + 1.0)).matrix();
      }
      case Activation::kSoftplus:
        return z.unaryExpr([](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); });
      case Activation::kRelu: return z.cwiseMax(0.0);
    }
    return z;
  }

  // First derivative of the activation of hidden layer `l` (pre[l]).
  RowArray first_derivative(const Forward& fw, std::size_t l) const {
    switch (spec_.activation) {
      case Activation::kTanh: return 1.0 - fw.inputs[l + 1].array().square();
      case Activation::kSoftplus: return sigmoid(fw.pre[l]);
      case Activation::kRelu: return (fw.pre[l].array() > 0.0).cast<double>();
    }
    return {};
  }

  RowArray second_derivative(const Forward& fw, std::size_t l) const {
    switch (spec_.activation) {
      case Activation::kTanh: {
        const auto t = fw.inputs[l + 1].array();
        return -2.0 * t * (1.0 - t.square());
      }
      case Activation::kSoftplus: {
        const RowArray s = sigmoid(fw.pre[l]);
        return s * (1.0 - s);
      }
      case Activation::kRelu: return RowArray::Zero(fw.pre[l].rows(), fw.pre[l].cols());
    }
    return {};
  }

  static RowArray sigmoid(const RowMatrix& z) {
    return z.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); }).array();
  }

  Forward forward(const VecRef& w, const Batch& batch) const {
    require(batch.has_data() && batch.size() > 0, "mlp: empty batch");
    const Dataset& ds = *batch.data;
    require(ds.feature_dim() == layers_.front().in,
            "mlp: batch feature width " + std::to_string(ds.feature_dim()) + " != input size " +
                std::to_string(layers_.front().in));
    const auto rows = static_cast<Eigen::Index>(batch.size());

    Forward fw;
    fw.labels.resize(batch.size());
    RowMatrix x(rows, ds.features.cols());
    for (Eigen::Index i = 0; i < rows; ++i) {
      const std::size_t r = batch.rows[static_cast<std::size_t>(i)];
      x.row(i) = ds.features.row(static_cast<Eigen::Index>(r));
      const int y = ds.labels[r];
      if (y < 0 || static_cast<std::size_t>(y) >= num_classes())
        throw ArgumentError("mlp: label " + std::to_string(y) + " out of range");
      fw.labels[static_cast<std::size_t>(i)] = y;
    }

    fw.inputs.push_back(std::move(x));
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      RowMatrix z(rows, static_cast<Eigen::Index>(layers_[l].out));
      z.noalias() = fw.inputs[l] * weights(w, layers_[l]).transpose();
      z.rowwise() += bias(w, layers_[l]);
      if (l + 1 < layers_.size()) fw.inputs.push_back(activate(z));
      fw.pre.push_back(std::move(z));
    }

    const RowMatrix& logits = fw.pre.back();
    const Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
    fw.probs = (logits.colwise() - row_max).array().exp().matrix();
    const Eigen::VectorXd row_sum = fw.probs.rowwise().sum();
    double total = 0.0;
    for (Eigen::Index i = 0; i < rows; ++i) {
      fw.probs.row(i) /= row_sum[i];
      total += row_max[i] + std::log(row_sum[i]) - logits(i, fw.labels[static_cast<std::size_t>(i)]);
    }
    fw.data_loss = total / static_cast<double>(rows);
    if (!std::isfinite(fw.data_loss)) throw NumericError("mlp: non-finite loss");
    return fw;
  }

  Backward backward(const VecRef& w, const Forward& fw) const {
    const std::size_t n_layers = layers_.size();
    const auto rows = fw.probs.rows();
    Backward bw;
    bw.grad.resize(static_cast<Eigen::Index>(dim_));
    bw.delta.resize(n_layers);
    bw.upstream.resize(n_layers);

    RowMatrix delta = fw.probs;
    for (Eigen::Index i = 0; i < rows; ++i) delta(i, fw.labels[static_cast<std::size_t>(i)]) -= 1.0;
    delta /= static_cast<double>(rows);

    for (std::size_t l = n_layers; l-- > 0;) {
      const Layer& layer = layers_[l];
      MutMap(bw.grad.data() + layer.offset, static_cast<Eigen::Index>(layer.out), static_cast<Eigen::Index>(layer.in))
          .noalias() = delta.transpose() * fw.inputs[l];
      bw.grad.segment(static_cast<Eigen::Index>(layer.offset + layer.in * layer.out), static_cast<Eigen::Index>(layer.out)) =
          delta.colwise().sum().transpose();
      bw.delta[l] = delta;
      if (l > 0) {
        RowMatrix up(rows, static_cast<Eigen::Index>(layer.in));
        up.noalias() = delta * weights(w, layer);
        delta = (up.array() * first_derivative(fw, l - 1)).matrix();
        bw.upstream[l] = std::move(up);
      }
    }
    if (spec_.weight_decay != 0.0) bw.grad += spec_.weight_decay * w;
    return bw;
  }

  // Directional derivative of the gradient along v (Pearlmutter's R{.}).
  Vector r_operator(const VecRef& w, const VecRef& v, const Forward& fw, const Backward& bw) const {
    const std::size_t n_layers = layers_.size();
    const auto rows = fw.probs.rows();

    // R-forward: r_pre[l] = R{pre[l]}, r_in[l] = R{inputs[l]} (r_in[0] = 0).
    std::vector<RowMatrix> r_pre(n_layers);
    std::vector<RowMatrix> r_in(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
      const Layer& layer = layers_[l];
      RowMatrix rz(rows, static_cast<Eigen::Index>(layer.out));
      rz.noalias() = fw.inputs[l] * weights(v, layer).transpose();
      if (l > 0) rz.noalias() += r_in[l] * weights(w, layer).transpose();
      rz.rowwise() += bias(v, layer);
      if (l + 1 < n_layers) r_in[l + 1] = (first_derivative(fw, l) * rz.array()).matrix();
      r_pre[l] = std::move(rz);
    }

    // Softmax cross-entropy: R{delta_out} = (P .* R{z} - P .* <P, R{z}>) / B.
    const RowMatrix& rz_out = r_pre.back();
    const Eigen::VectorXd p_dot = (fw.probs.array() * rz_out.array()).rowwise().sum();
    RowMatrix r_delta = (fw.probs.array() * (rz_out.colwise() - p_dot).array()).matrix();
    r_delta /= static_cast<double>(rows);

    Vector hv(static_cast<Eigen::Index>(dim_));
    for (std::size_t l = n_layers; l-- > 0;) {
      const Layer& layer = layers_[l];
      MutMap r_gw(hv.data() + layer.offset, static_cast<Eigen::Index>(layer.out), static_cast<Eigen::Index>(layer.in));
      r_gw.noalias() = r_delta.transpose() * fw.inputs[l];
      if (l > 0) r_gw.noalias() += bw.delta[l].transpose() * r_in[l];
      hv.segment(static_cast<Eigen::Index>(layer.offset + layer.in * layer.out), static_cast<Eigen::Index>(layer.out)) =
          r_delta.colwise().sum().transpose();
      if (l > 0) {
        RowMatrix r_up(rows, static_cast<Eigen::Index>(layer.in));
        r_up.noalias() = r_delta * weights(w, layer);
        r_up.noalias() += bw.delta[l] * weights(v, layer);
        r_delta = (r_up.array() * first_derivative(fw, l - 1) +
                   bw.upstream[l].array() * second_derivative(fw, l - 1) * r_pre[l - 1].array())
                      .matrix();
      }
    }
    if (spec_.weight_decay != 0.0) hv += spec_.weight_decay * v;
    return hv;
  }

  MlpSpec spec_;
  std::vector<Layer> layers_;
  std::size_t dim_ = 0;
};

inline std::shared_ptr<const MlpObjective> mlp_objective(MlpSpec spec) {
  return std::make_shared<MlpObjective>(std::move(spec));
}

}  // namespace lrsched
