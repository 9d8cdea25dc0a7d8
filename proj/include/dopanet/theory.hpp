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

// Optimal discriminators and the value of the routed minimax game evaluated
// on discretized 1D densities, independent of any training.
//
// With the support split into disjoint sets S_i of real mass rho_i, real
// density restricted to S_i p_d^i = p_d / rho_i and per-code generator
// density p_g^i, the optimal discriminator is
//     D*_i(x) = rho_i p_d^i(x) / (rho_i p_d^i(x) + p_g^i(x) / N)
// and the game value is
//     U = sum_i rho_i E_{p_d^i}[log D*_i] + (1/N) E_{p_g^i}[log(1 - D*_i)],
// which attains -log 4 when every p_g^i = p_d^i and rho_i = 1/N.

#pragma once

#include <cmath>
#include <vector>

#include "dopanet/distributions.hpp"
#include "dopanet/models.hpp"
#include "dopanet/nn_core.hpp"

namespace dopanet {

struct DiscretizedPartition {
  Vector centers;        // cell centers
  double cell_volume = 0.0;
  Vector data_density;   // p_d per cell
  std::vector<int> labels;  // partition index per cell
  int n_parts = 1;
  std::vector<double> rho;  // real mass per partition
  std::vector<Vector> generator_density;  // p_g^i per cell, one per partition

  Eigen::Index cells() const { return centers.size(); }

  /// p_d^i at `cell`: p_d / rho_i on S_i, zero elsewhere.
  double restricted_data_density(int i, Eigen::Index cell) const {
    return labels[static_cast<std::size_t>(cell)] == i ? data_density(cell) / rho[static_cast<std::size_t>(i)] : 0.0;
  }

  void validate(double tol = 1e-6) const {
    require(cells() > 0 && cell_volume > 0.0, "partition: empty grid");
    require(data_density.size() == cells() && static_cast<Eigen::Index>(labels.size()) == cells(),
            "partition: per-cell arrays differ in length");
    require(n_parts >= 1 && static_cast<int>(rho.size()) == n_parts &&
                static_cast<int>(generator_density.size()) == n_parts,
            "partition: per-part arrays differ in length");
    require(std::abs(data_density.sum() * cell_volume - 1.0) <= tol, "partition: p_d does not integrate to 1");
    std::vector<double> mass(static_cast<std::size_t>(n_parts), 0.0);
    for (Eigen::Index c = 0; c < cells(); ++c) {
      const int l = labels[static_cast<std::size_t>(c)];
      require(l >= 0 && l < n_parts, "partition: label out of range");
      mass[static_cast<std::size_t>(l)] += data_density(c) * cell_volume;
    }
    for (int i = 0; i < n_parts; ++i) {
      const auto ii = static_cast<std::size_t>(i);
      require(std::abs(mass[ii] - rho[ii]) <= tol, "partition: rho does not match the labelled mass");
      require(generator_density[ii].size() == cells(), "partition: p_g has wrong length");
      require((generator_density[ii].array() >= 0.0).all(), "partition: negative p_g");
      require(std::abs(generator_density[ii].sum() * cell_volume - 1.0) <= tol, "partition: p_g^i does not integrate to 1");
    }
  }
};

/// Builds a partition from a density and labels; every p_g^i starts at p_d^i.
inline DiscretizedPartition make_partition(Vector centers, double cell_volume, Vector data_density,
                                           std::vector<int> labels, int n_parts) {
  DiscretizedPartition p{std::move(centers), cell_volume, std::move(data_density), std::move(labels), n_parts, {}, {}};
  p.rho.assign(static_cast<std::size_t>(n_parts), 0.0);
  for (Eigen::Index c = 0; c < p.cells(); ++c) {
    const int l = p.labels[static_cast<std::size_t>(c)];
    require(l >= 0 && l < n_parts, "make_partition: label out of range");
    p.rho[static_cast<std::size_t>(l)] += p.data_density(c) * cell_volume;
  }
  for (int i = 0; i < n_parts; ++i) {
    require(p.rho[static_cast<std::size_t>(i)] > 0.0, "make_partition: partition with zero real mass");
    Vector pg(p.cells());
    for (Eigen::Index c = 0; c < p.cells(); ++c) pg(c) = p.restricted_data_density(i, c);
    p.generator_density.push_back(std::move(pg));
  }
  return p;
}

/// Grid of `cells` over the 6 sigma support of a 1D mixture, p_d normalized on
/// the grid, cut into `n_parts` contiguous pieces of (nearly) equal mass.
/// With `equal_mass`, p_d is reweighted inside each piece so that every rho_i
/// equals 1/N exactly.
inline DiscretizedPartition discretize_mixture(const MixtureSpec& spec, int n_parts, int cells = 2000,
                                               bool equal_mass = true) {
  spec.validate();
  require(spec.dims == 1, "discretize_mixture: 1D targets only");
  require(n_parts >= 1 && cells >= n_parts, "discretize_mixture: need at least one cell per part");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (int k = 0; k < spec.modes(); ++k) {
    const double s = 6.0 * spec.scales[static_cast<std::size_t>(k)];
    lo = std::min(lo, spec.means[static_cast<std::size_t>(k)](0) - s);
    hi = std::max(hi, spec.means[static_cast<std::size_t>(k)](0) + s);
  }
  const double h = (hi - lo) / cells;
  Vector centers(cells);
  Vector pd(cells);
  for (int c = 0; c < cells; ++c) {
    centers(c) = lo + (c + 0.5) * h;
    pd(c) = mixture_pdf(spec, centers(c));
  }
  pd /= pd.sum() * h;

  std::vector<int> labels(static_cast<std::size_t>(cells));
  double cumulative = 0.0;
  for (int c = 0; c < cells; ++c) {
    const double mid = cumulative + 0.5 * pd(c) * h;
    labels[static_cast<std::size_t>(c)] = std::min(n_parts - 1, static_cast<int>(mid * n_parts));
    cumulative += pd(c) * h;
  }
  // Every part must own at least one cell.
  std::vector<int> seen(static_cast<std::size_t>(n_parts), 0);
  for (int l : labels) seen[static_cast<std::size_t>(l)] = 1;
  for (int i = 0; i < n_parts; ++i) require(seen[static_cast<std::size_t>(i)] != 0, "discretize_mixture: empty part");

  if (equal_mass) {
    std::vector<double> mass(static_cast<std::size_t>(n_parts), 0.0);
    for (int c = 0; c < cells; ++c) mass[static_cast<std::size_t>(labels[static_cast<std::size_t>(c)])] += pd(c) * h;
    for (int c = 0; c < cells; ++c) pd(c) *= (1.0 / n_parts) / mass[static_cast<std::size_t>(labels[static_cast<std::size_t>(c)])];
  }
  DiscretizedPartition p = make_partition(centers, h, pd, labels, n_parts);
  if (equal_mass) {
    // Pin rho_i = 1/N exactly and rebuild p_g^i = p_d^i against it.
    for (int i = 0; i < n_parts; ++i) {
      p.rho[static_cast<std::size_t>(i)] = 1.0 / n_parts;
      for (int c = 0; c < cells; ++c) p.generator_density[static_cast<std::size_t>(i)](c) = p.restricted_data_density(i, c);
    }
  }
  return p;
}

/// D*_i at one cell.
inline double optimal_discriminator(const DiscretizedPartition& p, int i, Eigen::Index cell) {
  require(i >= 0 && i < p.n_parts, "optimal_discriminator: partition index out of range");
  require(cell >= 0 && cell < p.cells(), "optimal_discriminator: cell out of range");
  const double real = p.rho[static_cast<std::size_t>(i)] * p.restricted_data_density(i, cell);
  const double fake = (1.0 / p.n_parts) * p.generator_density[static_cast<std::size_t>(i)](cell);
  if (real + fake == 0.0) throw ContractError("optimal_discriminator: undefined where p_d^i and p_g^i both vanish");
  return real / (real + fake);
}

/// Game value U(G) with every discriminator at its optimum. Terms with a zero
/// weight contribute nothing (0 log 0 = 0).
inline double minimax_value(const DiscretizedPartition& p) {
  double value = 0.0;
  for (int i = 0; i < p.n_parts; ++i) {
    const double rho = p.rho[static_cast<std::size_t>(i)];
    const Vector& pg = p.generator_density[static_cast<std::size_t>(i)];
    for (Eigen::Index c = 0; c < p.cells(); ++c) {
      const double pdi = p.restricted_data_density(i, c);
      if (pdi == 0.0 && pg(c) == 0.0) continue;
      const double d = optimal_discriminator(p, i, c);
      if (pdi > 0.0) value += p.cell_volume * rho * pdi * std::log(d);
      if (pg(c) > 0.0) value += p.cell_volume * pg(c) / p.n_parts * std::log1p(-d);
    }
  }
  return value;
}

/// KL(p_d || sum_i p_g^i / N) on the grid; zero at the equal-mass equilibrium.
inline double reconstruction_kl(const DiscretizedPartition& p) {
  Vector mix = Vector::Zero(p.cells());
  for (const auto& pg : p.generator_density) mix += pg / p.n_parts;
  double kl = 0.0;
  for (Eigen::Index c = 0; c < p.cells(); ++c) {
    if (p.data_density(c) <= 0.0) continue;
    require(mix(c) > 0.0, "reconstruction_kl: generator mixture vanishes where p_d does not");
    kl += p.cell_volume * p.data_density(c) * std::log(p.data_density(c) / mix(c));
  }
  return kl;
}

struct ExtractedPartition {
  Vector centers;
  std::vector<int> labels;
  std::vector<double> boundaries;  // midpoints between cells whose labels differ
};

/// Labels each 1D grid point (data coordinates) with argmax Q.
inline ExtractedPartition extract_partition(const Classifier& q, const DataScaler& scaler, const Vector& centers) {
  require(scaler.dims() == 1, "extract_partition: 1D data only");
  ExtractedPartition out{centers, {}, {}};
  Matrix x(centers.size(), 1);
  x.col(0) = centers;
  out.labels = route_argmax(classify(q, scaler.to_net(x)));
  for (Eigen::Index c = 1; c < centers.size(); ++c)
    if (out.labels[static_cast<std::size_t>(c)] != out.labels[static_cast<std::size_t>(c - 1)])
      out.boundaries.push_back(0.5 * (centers(c) + centers(c - 1)));
  return out;
}

}  // namespace dopanet
