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

// The three agents: a code-conditioned generator, a bank of independent
// discriminators and the classifier that routes samples between them.

#pragma once

#include <algorithm>
#include <vector>

#include "dopanet/distributions.hpp"
#include "dopanet/nn_core.hpp"

namespace dopanet {

/// Fixed affine map between data coordinates and the coordinates the
/// networks see: net = (data - center) / scale.
struct DataScaler {
  Eigen::RowVectorXd center;
  double scale = 1.0;

  static DataScaler identity(int dims) { return {Eigen::RowVectorXd::Zero(dims), 1.0}; }

  /// Centers the +-3 sigma extent of the target and scales its widest half-extent to 1.
  static DataScaler for_target(const MixtureSpec& spec) {
    spec.validate();
    Eigen::RowVectorXd lo = Eigen::RowVectorXd::Constant(spec.dims, std::numeric_limits<double>::infinity());
    Eigen::RowVectorXd hi = -lo;
    for (int k = 0; k < spec.modes(); ++k) {
      const double s = 3.0 * spec.scales[static_cast<std::size_t>(k)];
      lo = lo.cwiseMin((spec.means[static_cast<std::size_t>(k)].transpose().array() - s).matrix());
      hi = hi.cwiseMax((spec.means[static_cast<std::size_t>(k)].transpose().array() + s).matrix());
    }
    return {0.5 * (lo + hi), 0.5 * (hi - lo).maxCoeff()};
  }

  int dims() const { return static_cast<int>(center.size()); }

  Matrix to_net(const Matrix& x) const { return (x.rowwise() - center) / scale; }
  Matrix to_data(const Matrix& y) const { return (y * scale).rowwise() + center; }
};

struct ArchitectureSpec {
  std::vector<int> hidden{128, 128};
  double leaky_slope = 0.2;
};

inline std::vector<int> layer_widths(int in, const ArchitectureSpec& arch, int out) {
  std::vector<int> dims{in};
  dims.insert(dims.end(), arch.hidden.begin(), arch.hidden.end());
  dims.push_back(out);
  return dims;
}

/// G(z, c): input row layout is [z | one-hot c].
struct Generator {
  Mlp net;
  int noise_dim = 0;
  int n_codes = 1;

  /// `code_gain` multiplies the initial first-layer weights of the code columns.
  static Generator create(int noise_dim, int n_codes, int data_dim, const ArchitectureSpec& arch, Rng& rng,
                          double code_gain = 1.0) {
    require(noise_dim >= 1 && n_codes >= 1 && data_dim >= 1, "generator: dims must be positive");
    const auto dims = layer_widths(noise_dim + n_codes, arch, data_dim);
    Generator g{make_mlp(dims, OutputActivation::identity, arch.leaky_slope, rng), noise_dim, n_codes};
    g.net.layers.front().weights.rightCols(n_codes) *= code_gain;
    return g;
  }

  int data_dim() const { return net.out_dim(); }
};

inline Matrix generator_input(const Generator& g, const Matrix& z, const Matrix& one_hot) {
  require(z.rows() == one_hot.rows(), "generate: noise and code row counts differ");
  require(z.cols() == g.noise_dim && one_hot.cols() == g.n_codes, "generate: noise/code width mismatch");
  Matrix in(z.rows(), g.noise_dim + g.n_codes);
  in << z, one_hot;
  return in;
}

/// Generated samples in network coordinates.
inline Matrix generate(const Generator& g, const Matrix& z, const Matrix& one_hot) {
  return forward(g.net, generator_input(g, z, one_hot));
}

/// N independent scalar sigmoid discriminators of identical architecture.
struct DiscriminatorBank {
  std::vector<Mlp> nets;

  static DiscriminatorBank create(int n, int data_dim, const ArchitectureSpec& arch, Rng& rng) {
    require(n >= 1, "discriminator bank: need at least one discriminator");
    DiscriminatorBank bank;
    const auto dims = layer_widths(data_dim, arch, 1);
    for (int i = 0; i < n; ++i) bank.nets.push_back(make_mlp(dims, OutputActivation::sigmoid, arch.leaky_slope, rng));
    return bank;
  }

  int size() const { return static_cast<int>(nets.size()); }
};

inline Vector discriminate(const DiscriminatorBank& bank, int idx, const Matrix& x) {
  require(idx >= 0 && idx < bank.size(), "discriminate: index out of range");
  return forward(bank.nets[static_cast<std::size_t>(idx)], x).col(0);
}

/// Q(x): categorical distribution over the N discriminators.
struct Classifier {
  Mlp net;

  static Classifier create(int data_dim, int n, const ArchitectureSpec& arch, Rng& rng) {
    require(n >= 1, "classifier: need at least one class");
    return {make_mlp(layer_widths(data_dim, arch, n), OutputActivation::softmax, arch.leaky_slope, rng)};
  }

  int n_classes() const { return net.out_dim(); }
};

inline Matrix classify(const Classifier& q, const Matrix& x) { return forward(q.net, x); }

/// Training-time routing: one categorical draw per row.
inline std::vector<int> route(const Matrix& probs, Rng& rng) {
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    const double u = uniform01(rng);
    double acc = 0.0;
    int chosen = -1;
    for (Eigen::Index k = 0; k < probs.cols(); ++k) {
      if (probs(r, k) <= 0.0) continue;
      acc += probs(r, k);
      chosen = static_cast<int>(k);
      if (u < acc) break;
    }
    require(chosen >= 0, "route: row without positive probability");
    out[static_cast<std::size_t>(r)] = chosen;
  }
  return out;
}

/// Evaluation/diagnostic routing only: most probable discriminator per row.
inline std::vector<int> route_argmax(const Matrix& probs) {
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    Eigen::Index k = 0;
    probs.row(r).maxCoeff(&k);
    out[static_cast<std::size_t>(r)] = static_cast<int>(k);
  }
  return out;
}

/// Rows of `m` listed in `indices`, in order.
inline Matrix gather_rows(const Matrix& m, std::span<const int> indices) {
  Matrix out(static_cast<Eigen::Index>(indices.size()), m.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(indices[i]);
  return out;
}

}  // namespace dopanet
