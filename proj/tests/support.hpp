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


// Shared fixtures for the unit and acceptance suites.

#pragma once

#include <vector>

#include "dopanet.hpp"

namespace dopanet::testing {

struct GradientCase {
  Mlp net;
  LossSpec loss;
  Matrix batch;
};

/// Small random network, batch and compatible loss. Kinds cycle through the
/// three BCE variants and cross entropy with soft targets.
inline GradientCase random_gradient_case(std::uint64_t seed) {
  Rng rng(splitmix64(seed));
  const int kind = static_cast<int>(seed % 4);
  const int in = 1 + static_cast<int>(rng() % 4);
  const int depth = 1 + static_cast<int>(rng() % 3);
  std::vector<int> dims{in};
  for (int d = 0; d < depth; ++d) dims.push_back(2 + static_cast<int>(rng() % 6));
  const int classes = 2 + static_cast<int>(rng() % 4);
  dims.push_back(kind == 3 ? classes : 1);
  const auto act = kind == 3 ? OutputActivation::softmax : OutputActivation::sigmoid;
  GradientCase c{make_mlp(dims, act, 0.2, rng), {}, {}};
  for (auto& l : c.net.layers) l.bias = Vector::NullaryExpr(l.bias.size(), [&] { return uniform01(rng) - 0.5; });
  const int rows = 1 + static_cast<int>(rng() % 8);
  c.batch = Matrix::NullaryExpr(rows, in, [&] { return 4.0 * uniform01(rng) - 2.0; });
  switch (kind) {
    case 0:
      c.loss = LossSpec::bce_real();
      break;
    case 1:
      c.loss = LossSpec::bce_fake();
      break;
    case 2:
      c.loss = LossSpec::bce_generator();
      break;
    default: {
      Matrix t = Matrix::NullaryExpr(rows, classes, [&] { return uniform01(rng); });
      for (Eigen::Index r = 0; r < rows; ++r) t.row(r) /= t.row(r).sum();
      c.loss = LossSpec::cross_entropy(t);
    }
  }
  return c;
}

/// Tiny 1D config that trains in well under a second.
inline TrainConfig tiny_config(Algorithm algorithm, int n, std::uint64_t seed, int iterations = 20) {
  TrainConfig c;
  c.algorithm = algorithm;
  c.n_discriminators = n;
  c.seed = seed;
  c.iterations = iterations;
  c.batch_size = 32;
  c.noise.dim = 4;
  c.arch.hidden = {8};
  c.log_every = 5;
  return c;
}

inline std::vector<double> flatten(const Mlp& net) {
  std::vector<double> out;
  visit_parameters(net, [&](const double& p) { out.push_back(p); });
  return out;
}

}  // namespace dopanet::testing
