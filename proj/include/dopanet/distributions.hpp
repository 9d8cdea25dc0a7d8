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

// Target densities (1D and isotropic 2D Gaussian mixtures), the uniform
// noise prior and the categorical code prior.

#pragma once

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include "dopanet/nn_core.hpp"
#include "dopanet/rng.hpp"

namespace dopanet {

struct MixtureSpec {
  int dims = 1;
  std::vector<Vector> means;
  std::vector<double> scales;  // per-mode standard deviation (isotropic in 2D)
  std::vector<double> weights;

  int modes() const { return static_cast<int>(means.size()); }

  void validate() const {
    require(dims == 1 || dims == 2, "mixture: dims must be 1 or 2");
    require(!means.empty(), "mixture: at least one mode required");
    require(scales.size() == means.size() && weights.size() == means.size(), "mixture: list lengths differ");
    double sum = 0.0;
    for (std::size_t k = 0; k < means.size(); ++k) {
      require(means[k].size() == dims, "mixture: mean has wrong dimension");
      require(means[k].allFinite(), "mixture: non-finite mean");
      require(scales[k] > 0.0, "mixture: scales must be positive");
      require(weights[k] >= 0.0, "mixture: weights must be non-negative");
      sum += weights[k];
    }
    require(std::abs(sum - 1.0) <= 1e-12, "mixture: weights must sum to 1");
  }
};

/// Five modes at 10, 20, 60, 80, 110 with standard deviations 3, 3, 2, 2, 1.
inline MixtureSpec make_five_mode_1d_spec() {
  MixtureSpec s;
  s.dims = 1;
  const double mu[] = {10.0, 20.0, 60.0, 80.0, 110.0};
  const double sd[] = {3.0, 3.0, 2.0, 2.0, 1.0};
  for (int k = 0; k < 5; ++k) {
    s.means.push_back(Vector::Constant(1, mu[k]));
    s.scales.push_back(sd[k]);
    s.weights.push_back(0.2);
  }
  return s;
}

/// M equal-weight modes at angles 2 pi k / M on the unit circle.
inline MixtureSpec make_ring_spec(int modes, double sigma) {
  require(modes >= 1, "ring: at least one mode");
  require(sigma > 0.0, "ring: sigma must be positive");
  MixtureSpec s;
  s.dims = 2;
  for (int k = 0; k < modes; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / modes;
    Vector m(2);
    m << std::cos(angle), std::sin(angle);
    s.means.push_back(m);
    s.scales.push_back(sigma);
    s.weights.push_back(1.0 / modes);
  }
  // Equal weights must sum to exactly 1 within the validation tolerance.
  const double sum = std::accumulate(s.weights.begin(), s.weights.end(), 0.0);
  s.weights.back() += 1.0 - sum;
  return s;
}

/// Draws a mode index by inverse CDF over `weights`.
inline int draw_categorical(std::span<const double> weights, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  int last_positive = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k] <= 0.0) continue;
    acc += weights[k];
    last_positive = static_cast<int>(k);
    if (u < acc) return last_positive;
  }
  return last_positive;
}

inline Matrix sample_mixture(const MixtureSpec& spec, int n, Rng& rng) {
  spec.validate();
  require(n >= 1, "sample_mixture: n must be >= 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(n, spec.dims);
  for (int i = 0; i < n; ++i) {
    const int k = draw_categorical(spec.weights, rng);
    for (int d = 0; d < spec.dims; ++d) out(i, d) = spec.means[k](d) + spec.scales[k] * normal(rng);
  }
  return out;
}

/// Exact mixture density at `x`.
inline double mixture_pdf(const MixtureSpec& spec, const Vector& x) {
  require(x.size() == spec.dims && x.allFinite(), "mixture_pdf: bad point");
  double density = 0.0;
  for (int k = 0; k < spec.modes(); ++k) {
    const double s = spec.scales[static_cast<std::size_t>(k)];
    const double sq = (x - spec.means[static_cast<std::size_t>(k)]).squaredNorm();
    const double norm = std::pow(2.0 * std::numbers::pi * s * s, -0.5 * spec.dims);
    density += spec.weights[static_cast<std::size_t>(k)] * norm * std::exp(-0.5 * sq / (s * s));
  }
  return density;
}

inline double mixture_pdf(const MixtureSpec& spec, double x) { return mixture_pdf(spec, Vector::Constant(1, x)); }

/// Index of the mode whose mean is closest (Euclidean) to `x`.
inline int nearest_mode(const MixtureSpec& spec, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < spec.modes(); ++k) {
    const double d = (x.transpose() - spec.means[static_cast<std::size_t>(k)]).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

struct NoisePriorSpec {
  int dim = 64;
  double low = -1.0;
  double high = 1.0;

  void validate() const {
    require(dim >= 1, "noise prior: dim must be positive");
    require(low < high, "noise prior: low must be < high");
  }
};

inline Matrix sample_noise(const NoisePriorSpec& spec, int n, Rng& rng) {
  spec.validate();
  require(n >= 1, "sample_noise: n must be >= 1");
  Matrix z(n, spec.dim);
  const double width = spec.high - spec.low;
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < spec.dim; ++d) z(i, d) = spec.low + width * uniform01(rng);
  return z;
}

struct CodePriorSpec {
  std::vector<double> probabilities{1.0};

  static CodePriorSpec uniform(int n_codes) {
    require(n_codes >= 1, "code prior: need at least one code");
    return {std::vector<double>(static_cast<std::size_t>(n_codes), 1.0 / n_codes)};
  }

  int n_codes() const { return static_cast<int>(probabilities.size()); }

  void validate() const {
    require(!probabilities.empty(), "code prior: empty");
    double sum = 0.0;
    for (double p : probabilities) {
      require(p >= 0.0, "code prior: negative probability");
      sum += p;
    }
    require(std::abs(sum - 1.0) <= 1e-12, "code prior: probabilities must sum to 1");
  }
};

struct CodeBatch {
  std::vector<int> indices;
  Matrix one_hot;  // n x N
};

inline Matrix one_hot(std::span<const int> indices, int n_codes) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(indices.size()), n_codes);
  for (std::size_t i = 0; i < indices.size(); ++i) m(static_cast<Eigen::Index>(i), indices[i]) = 1.0;
  return m;
}

inline CodeBatch sample_codes(const CodePriorSpec& spec, int n, Rng& rng) {
  spec.validate();
  require(n >= 1, "sample_codes: n must be >= 1");
  CodeBatch out;
  out.indices.resize(static_cast<std::size_t>(n));
  for (auto& idx : out.indices) idx = draw_categorical(spec.probabilities, rng);
  out.one_hot = one_hot(out.indices, spec.n_codes());
  return out;
}

}  // namespace dopanet
