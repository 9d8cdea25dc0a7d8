// Copyright 2026 The DoPaNet Authors. All Rights Reserved.
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

// Dense multilayer perceptrons with hand-derived reverse-mode gradients and
// an RMSProp optimizer. Batches are row-major in the sense of "one sample per
// row": a batch of B inputs of width `in` is a B x in matrix.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dopanet/errors.hpp"
#include "dopanet/rng.hpp"

namespace dopanet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Probabilities entering a logarithm are kept inside [kProbClamp, 1 - kProbClamp].
inline constexpr double kProbClamp = 1e-7;

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out

  int in_dim() const { return static_cast<int>(weights.cols()); }
  int out_dim() const { return static_cast<int>(weights.rows()); }
};

enum class OutputActivation { identity, sigmoid, softmax };

struct Mlp {
  std::vector<DenseLayer> layers;
  double leaky_slope = 0.2;
  OutputActivation output = OutputActivation::identity;

  int in_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
  int out_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
  }

  void validate() const {
    require(!layers.empty(), "mlp: no layers");
    require(leaky_slope > 0.0 && leaky_slope < 1.0, "mlp: leaky slope must lie in (0,1)");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      require(layers[l].bias.size() == layers[l].weights.rows(), "mlp: bias/weight shape mismatch");
      if (l > 0) require(layers[l].in_dim() == layers[l - 1].out_dim(), "mlp: layer dims do not chain");
    }
  }
};

/// One tensor per parameter tensor of the owning Mlp.
struct GradientSet {
  std::vector<DenseLayer> layers;

  static GradientSet zeros_like(const Mlp& net) {
    GradientSet g;
    g.layers.reserve(net.layers.size());
    for (const auto& l : net.layers)
      g.layers.push_back({Matrix::Zero(l.weights.rows(), l.weights.cols()), Vector::Zero(l.bias.size())});
    return g;
  }

  GradientSet& operator+=(const GradientSet& other) {
    require(other.layers.size() == layers.size(), "gradient set: layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].weights += other.layers[l].weights;
      layers[l].bias += other.layers[l].bias;
    }
    return *this;
  }

  GradientSet& operator*=(double s) {
    for (auto& l : layers) {
      l.weights *= s;
      l.bias *= s;
    }
    return *this;
  }

  bool all_finite() const {
    return std::all_of(layers.begin(), layers.end(),
                       [](const DenseLayer& l) { return l.weights.allFinite() && l.bias.allFinite(); });
  }
};

inline bool shapes_match(const Mlp& net, const GradientSet& g) {
  if (net.layers.size() != g.layers.size()) return false;
  for (std::size_t l = 0; l < g.layers.size(); ++l) {
    if (net.layers[l].weights.rows() != g.layers[l].weights.rows() ||
        net.layers[l].weights.cols() != g.layers[l].weights.cols() ||
        net.layers[l].bias.size() != g.layers[l].bias.size())
      return false;
  }
  return true;
}

/// Visits every scalar parameter in a fixed order: per layer, weights
/// (column-major), then bias.
template <class Layered, class F>
void visit_parameters(Layered& net, F&& f) {
  for (auto& l : net.layers) {
    for (Eigen::Index i = 0; i < l.weights.size(); ++i) f(l.weights.data()[i]);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) f(l.bias.data()[i]);
  }
}

/// Layer widths `dims` = {in, hidden..., out}. Glorot-uniform weights, zero biases.
inline Mlp make_mlp(std::span<const int> dims, OutputActivation output, double leaky_slope, Rng& rng) {
  require(dims.size() >= 2, "make_mlp: need at least input and output widths");
  Mlp net;
  net.leaky_slope = leaky_slope;
  net.output = output;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l];
    const int out = dims[l + 1];
    require(in > 0 && out > 0, "make_mlp: widths must be positive");
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    DenseLayer layer{Matrix(out, in), Vector::Zero(out)};
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] = (2.0 * uniform01(rng) - 1.0) * a;
    net.layers.push_back(std::move(layer));
  }
  net.validate();
  return net;
}

inline Mlp make_zero_mlp(std::span<const int> dims, OutputActivation output, double leaky_slope = 0.2) {
  Rng unused(0);
  Mlp net = make_mlp(dims, output, leaky_slope, unused);
  for (auto& l : net.layers) l.weights.setZero();
  return net;
}

namespace detail {

inline void check_finite(const Matrix& m, const char* what, int layer) {
  if (!m.allFinite()) throw NumericError(std::string("non-finite ") + what, layer);
}

inline void leaky_relu_inplace(Matrix& m, double slope) {
  m = m.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
}

inline Matrix apply_output(const Matrix& logits, OutputActivation act) {
  switch (act) {
    case OutputActivation::identity:
      return logits;
    case OutputActivation::sigmoid:
      return logits.unaryExpr([](double v) {
        return std::clamp(1.0 / (1.0 + std::exp(-v)), kProbClamp, 1.0 - kProbClamp);
      });
    case OutputActivation::softmax: {
      Matrix out(logits.rows(), logits.cols());
      for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double mx = logits.row(r).maxCoeff();
        out.row(r) = (logits.row(r).array() - mx).exp().matrix();
        out.row(r) /= out.row(r).sum();
      }
      return out;
    }
  }
  return logits;
}

}  // namespace detail

/// Layer inputs recorded during a forward pass, enough to backpropagate.
struct ForwardTrace {
  std::vector<Matrix> inputs;  // inputs[l] feeds layer l
  Matrix logits;               // last-layer pre-activation
  Matrix output;               // after the output activation
};

inline ForwardTrace trace_forward(const Mlp& net, const Matrix& batch) {
  require(!net.layers.empty(), "forward: empty network");
  require(batch.cols() == net.in_dim(), "forward: batch has " + std::to_string(batch.cols()) +
                                            " columns, network expects " + std::to_string(net.in_dim()));
  detail::check_finite(batch, "input", 0);
  ForwardTrace t;
  t.inputs.reserve(net.layers.size());
  t.inputs.push_back(batch);
  const int last = static_cast<int>(net.layers.size()) - 1;
  for (int l = 0; l <= last; ++l) {
    const DenseLayer& layer = net.layers[static_cast<std::size_t>(l)];
    Matrix z = t.inputs.back() * layer.weights.transpose();
    z.rowwise() += layer.bias.transpose();
    detail::check_finite(z, "pre-activation", l);
    if (l == last) {
      t.logits = std::move(z);
    } else {
      detail::leaky_relu_inplace(z, net.leaky_slope);
      t.inputs.push_back(std::move(z));
    }
  }
  t.output = detail::apply_output(t.logits, net.output);
  return t;
}

inline Matrix forward(const Mlp& net, const Matrix& batch) { return trace_forward(net, batch).output; }

struct Backprop {
  GradientSet grads;
  Matrix input_grad;  // empty unless requested
};

/// Propagates d(loss)/d(logits) back through the network.
inline Backprop backprop(const Mlp& net, const ForwardTrace& trace, const Matrix& logit_grad, bool want_input_grad = false) {
  require(logit_grad.rows() == trace.logits.rows() && logit_grad.cols() == trace.logits.cols(),
          "backprop: logit gradient shape mismatch");
  Backprop out;
  out.grads.layers.resize(net.layers.size());
  Matrix delta = logit_grad;
  for (int l = static_cast<int>(net.layers.size()) - 1; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    const DenseLayer& layer = net.layers[li];
    out.grads.layers[li].weights = delta.transpose() * trace.inputs[li];
    out.grads.layers[li].bias = delta.colwise().sum().transpose();
    if (!out.grads.layers[li].weights.allFinite()) throw NumericError("non-finite gradient", l);
    if (l == 0 && !want_input_grad) break;
    Matrix back = delta * layer.weights;
    if (l > 0) {
      const double slope = net.leaky_slope;
      back.array() *= trace.inputs[li].array().unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; });
    }
    delta = std::move(back);
  }
  if (want_input_grad) out.input_grad = std::move(delta);
  return out;
}

/// Batch-mean losses. The bce_* kinds expect a scalar sigmoid output;
/// cross_entropy expects softmax and per-row target distributions.
struct LossSpec {
  enum class Kind { bce_real, bce_fake, bce_generator, cross_entropy };

  Kind kind = Kind::bce_real;
  Matrix targets;

  static LossSpec bce_real() { return {Kind::bce_real, {}}; }        // -log D(x)
  static LossSpec bce_fake() { return {Kind::bce_fake, {}}; }        // -log(1 - D(x))
  static LossSpec bce_generator() { return {Kind::bce_generator, {}}; }  // log(1 - D(x))
  static LossSpec cross_entropy(Matrix targets) { return {Kind::cross_entropy, std::move(targets)}; }
};

inline void check_loss_compat(const Mlp& net, const LossSpec& spec, Eigen::Index batch_rows) {
  if (spec.kind == LossSpec::Kind::cross_entropy) {
    require(net.output == OutputActivation::softmax, "cross_entropy loss requires a softmax output");
    require(spec.targets.rows() == batch_rows && spec.targets.cols() == net.out_dim(),
            "cross_entropy: target shape mismatch");
  } else {
    require(net.output == OutputActivation::sigmoid && net.out_dim() == 1,
            "bce losses require a scalar sigmoid output");
  }
}

/// Mean loss and its gradient with respect to the logits, from a clamped output.
inline std::pair<double, Matrix> loss_and_logit_grad(const Matrix& output, const LossSpec& spec) {
  const auto rows = output.rows();
  const double inv_b = 1.0 / static_cast<double>(rows);
  Matrix g(output.rows(), output.cols());
  double total = 0.0;
  if (spec.kind == LossSpec::Kind::cross_entropy) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      double active_mass = 0.0;
      for (Eigen::Index k = 0; k < output.cols(); ++k) {
        const double t = spec.targets(r, k);
        if (t == 0.0) continue;
        const double p = output(r, k);
        if (p >= kProbClamp) {
          total -= t * std::log(p);
          active_mass += t;
        } else {
          total -= t * std::log(kProbClamp);
        }
      }
      for (Eigen::Index k = 0; k < output.cols(); ++k) {
        const double t = spec.targets(r, k);
        const double active_t = (t != 0.0 && output(r, k) >= kProbClamp) ? t : 0.0;
        g(r, k) = (output(r, k) * active_mass - active_t) * inv_b;
      }
    }
    return {total * inv_b, std::move(g)};
  }
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double p = output(r, 0);
    const bool clamped = p <= kProbClamp || p >= 1.0 - kProbClamp;
    switch (spec.kind) {
      case LossSpec::Kind::bce_real:
        total -= std::log(p);
        g(r, 0) = clamped ? 0.0 : -(1.0 - p) * inv_b;
        break;
      case LossSpec::Kind::bce_fake:
        total -= std::log1p(-p);
        g(r, 0) = clamped ? 0.0 : p * inv_b;
        break;
      case LossSpec::Kind::bce_generator:
        total += std::log1p(-p);
        g(r, 0) = clamped ? 0.0 : -p * inv_b;
        break;
      case LossSpec::Kind::cross_entropy:
        break;
    }
  }
  return {total * inv_b, std::move(g)};
}

inline double evaluate_loss(const Mlp& net, const Matrix& batch, const LossSpec& spec) {
  check_loss_compat(net, spec, batch.rows());
  return loss_and_logit_grad(forward(net, batch), spec).first;
}

struct LossGradient {
  double loss = 0.0;
  GradientSet grads;
  Matrix input_grad;  // d(loss)/d(batch), only when requested
};

/// Exact gradient of the batch-mean loss.
inline LossGradient backward(const Mlp& net, const Matrix& batch, const LossSpec& spec, bool want_input_grad = false) {
  check_loss_compat(net, spec, batch.rows());
  const ForwardTrace trace = trace_forward(net, batch);
  auto [loss, logit_grad] = loss_and_logit_grad(trace.output, spec);
  if (!std::isfinite(loss)) throw NumericError("non-finite loss", static_cast<int>(net.layers.size()) - 1);
  Backprop bp = backprop(net, trace, logit_grad, want_input_grad);
  return {loss, std::move(bp.grads), std::move(bp.input_grad)};
}

enum class Direction { ascend, descend };

struct RmsPropHyper {
  double learning_rate = 1e-3;
  double decay = 0.99;
  double epsilon = 1e-8;
};

struct RmsPropState {
  GradientSet mean_square;
  RmsPropHyper hyper;

  static RmsPropState for_net(const Mlp& net, RmsPropHyper hyper = {}) {
    require(hyper.decay > 0.0 && hyper.decay < 1.0, "rmsprop: decay must lie in (0,1)");
    require(hyper.epsilon > 0.0, "rmsprop: epsilon must be positive");
    return {GradientSet::zeros_like(net), hyper};
  }
};

/// v <- a v + (1 - a) g^2, then theta <- theta +/- lr g / (sqrt(v) + eps).
inline void rmsprop_step(Mlp& params, const GradientSet& grads, RmsPropState& state, Direction direction) {
  require(shapes_match(params, grads) && shapes_match(params, state.mean_square), "rmsprop: shape mismatch");
  const double a = state.hyper.decay;
  const double lr = direction == Direction::ascend ? state.hyper.learning_rate : -state.hyper.learning_rate;
  const double eps = state.hyper.epsilon;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto update = [&](auto& theta, const auto& g, auto& v) {
      v.array() = a * v.array() + (1.0 - a) * g.array().square();
      theta.array() += lr * g.array() / (v.array().sqrt() + eps);
    };
    update(params.layers[l].weights, grads.layers[l].weights, state.mean_square.layers[l].weights);
    update(params.layers[l].bias, grads.layers[l].bias, state.mean_square.layers[l].bias);
  }
}

/// max over parameters of |analytic - central difference| / max(1, |analytic|).
inline double finite_difference_error(const Mlp& net, const LossSpec& spec, const Matrix& batch, double h,
                                      const GradientSet& analytic) {
  require(h > 0.0 && h <= 1e-3, "finite difference step must lie in (0, 1e-3]");
  require(shapes_match(net, analytic), "finite difference: gradient shape mismatch");
  Mlp probe = net;
  std::vector<double*> slots;
  slots.reserve(net.parameter_count());
  visit_parameters(probe, [&](double& p) { slots.push_back(&p); });
  std::vector<double> grads;
  grads.reserve(slots.size());
  visit_parameters(analytic, [&](const double& g) { grads.push_back(g); });

  double worst = 0.0;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const double saved = *slots[i];
    *slots[i] = saved + h;
    const double up = evaluate_loss(probe, batch, spec);
    *slots[i] = saved - h;
    const double down = evaluate_loss(probe, batch, spec);
    *slots[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(grads[i] - numeric) / std::max(1.0, std::abs(grads[i])));
  }
  return worst;
}

inline double finite_difference_check(const Mlp& net, const LossSpec& spec, const Matrix& batch, double h = 1e-5) {
  return finite_difference_error(net, spec, batch, h, backward(net, batch, spec).grads);
}

}  // namespace dopanet
