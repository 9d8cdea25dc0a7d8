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

// Measurement: fixed-grid histograms, KL and chi-square between histograms,
// mode coverage, per-code cluster purity, and input-space diagnostics of a
// trained discriminator bank (gradient fields, score heatmaps).

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "dopanet/distributions.hpp"
#include "dopanet/models.hpp"
#include "dopanet/nn_core.hpp"

namespace dopanet {

/// Half-open bins [lo + k w, lo + (k+1) w) per dimension.
struct HistogramSpec {
  int dims = 1;
  std::array<double, 2> lo{0.0, 0.0};
  std::array<double, 2> hi{1.0, 1.0};
  std::array<double, 2> width{0.1, 0.1};

  static HistogramSpec make_1d(double lo, double hi, double width) { return {1, {lo, 0.0}, {hi, 1.0}, {width, 1.0}}; }
  static HistogramSpec make_2d(double lo, double hi, double width) { return {2, {lo, lo}, {hi, hi}, {width, width}}; }

  /// [-10, 130) with bins of 0.1.
  static HistogramSpec five_mode_1d() { return make_1d(-10.0, 130.0, 0.1); }
  /// [-1.4, 1.4)^2 with bins of 0.0028 x 0.0028.
  static HistogramSpec ring_2d() { return make_2d(-1.4, 1.4, 0.0028); }

  int bins(int d) const { return static_cast<int>(std::lround((hi[d] - lo[d]) / width[d])); }
  std::int64_t total_bins() const {
    std::int64_t n = 1;
    for (int d = 0; d < dims; ++d) n *= bins(d);
    return n;
  }
  double edge(int d, int k) const { return lo[d] + k * width[d]; }

  void validate() const {
    require(dims == 1 || dims == 2, "histogram spec: dims must be 1 or 2");
    for (int d = 0; d < dims; ++d) {
      require(hi[d] > lo[d] && width[d] > 0.0, "histogram spec: empty range or non-positive width");
      require(bins(d) >= 1, "histogram spec: at least one bin per dimension");
    }
  }

  /// Bin of coordinate x along d, or -1 when outside.
  int bin_of(int d, double x) const {
    const int n = bins(d);
    if (!(x >= lo[d]) || !(x < edge(d, n))) return -1;
    int k = std::clamp(static_cast<int>(std::floor((x - lo[d]) / width[d])), 0, n - 1);
    while (k + 1 < n && x >= edge(d, k + 1)) ++k;
    while (k > 0 && x < edge(d, k)) --k;
    return k;
  }

  bool operator==(const HistogramSpec& o) const {
    if (dims != o.dims) return false;
    for (int d = 0; d < dims; ++d)
      if (lo[d] != o.lo[d] || hi[d] != o.hi[d] || width[d] != o.width[d]) return false;
    return true;
  }
};

struct Histogram {
  HistogramSpec spec;
  std::vector<std::uint64_t> counts;  // flat, first dimension major
  std::uint64_t total = 0;
  std::uint64_t out_of_range = 0;

  std::uint64_t in_range() const { return total - out_of_range; }
};

inline Histogram build_histogram(const Matrix& samples, const HistogramSpec& spec) {
  spec.validate();
  require(samples.cols() == spec.dims, "build_histogram: sample dimension does not match spec");
  Histogram h{spec, std::vector<std::uint64_t>(static_cast<std::size_t>(spec.total_bins()), 0), 0, 0};
  const int inner = spec.dims == 2 ? spec.bins(1) : 1;
  for (Eigen::Index r = 0; r < samples.rows(); ++r) {
    ++h.total;
    const int k0 = spec.bin_of(0, samples(r, 0));
    const int k1 = spec.dims == 2 ? spec.bin_of(1, samples(r, 1)) : 0;
    if (k0 < 0 || k1 < 0) {
      ++h.out_of_range;
      continue;
    }
    ++h.counts[static_cast<std::size_t>(k0) * static_cast<std::size_t>(inner) + static_cast<std::size_t>(k1)];
  }
  return h;
}

/// KL(gen || data) in nats over the bins plus one overflow cell. Cells empty
/// in both histograms are dropped; if any remaining cell is empty in either
/// histogram, 1 / (10 total) is added to every remaining cell of that
/// histogram's probabilities before renormalizing.
inline double kl_divergence(const Histogram& gen, const Histogram& data) {
  require(gen.spec == data.spec, "kl_divergence: histogram specs differ");
  require(gen.total > 0 && data.total > 0, "kl_divergence: empty histogram");
  std::vector<double> g;
  std::vector<double> d;
  g.reserve(gen.counts.size() + 1);
  d.reserve(gen.counts.size() + 1);
  bool any_zero = false;
  auto push = [&](std::uint64_t a, std::uint64_t b) {
    if (a == 0 && b == 0) return;
    any_zero = any_zero || a == 0 || b == 0;
    g.push_back(static_cast<double>(a) / static_cast<double>(gen.total));
    d.push_back(static_cast<double>(b) / static_cast<double>(data.total));
  };
  for (std::size_t b = 0; b < gen.counts.size(); ++b) push(gen.counts[b], data.counts[b]);
  push(gen.out_of_range, data.out_of_range);

  if (any_zero) {
    auto smooth = [](std::vector<double>& p, std::uint64_t total) {
      const double eps = 1.0 / (10.0 * static_cast<double>(total));
      double sum = 0.0;
      for (double& v : p) sum += (v += eps);
      for (double& v : p) v /= sum;
    };
    smooth(g, gen.total);
    smooth(d, data.total);
  }
  double kl = 0.0;
  for (std::size_t b = 0; b < g.size(); ++b)
    if (g[b] > 0.0) kl += g[b] * std::log(g[b] / d[b]);
  return std::max(kl, 0.0);
}

/// Symmetric chi-square over raw bin counts: sum (g - d)^2 / (g + d).
inline double chi_square(const Histogram& gen, const Histogram& data) {
  require(gen.spec == data.spec, "chi_square: histogram specs differ");
  double chi = 0.0;
  for (std::size_t b = 0; b < gen.counts.size(); ++b) {
    const double g = static_cast<double>(gen.counts[b]);
    const double d = static_cast<double>(data.counts[b]);
    if (g + d == 0.0) continue;
    chi += (g - d) * (g - d) / (g + d);
  }
  return chi;
}

struct ModeCoverage {
  std::vector<double> mass;  // fraction of all samples assigned to each mode
  std::vector<bool> covered;
  std::vector<bool> oversampled;
  double unassigned = 0.0;
  int covered_count = 0;
};

/// A mode is covered when it holds at least 0.2 / M of the samples and
/// oversampled at 2 / M or more.
inline constexpr double kCoverageFraction = 0.2;
inline constexpr double kOversampleFactor = 2.0;

/// Nearest-mean assignment, kept only within k_sigma standard deviations.
inline ModeCoverage mode_coverage(const Matrix& samples, const MixtureSpec& target, double k_sigma = 3.0) {
  target.validate();
  require(k_sigma > 0.0, "mode_coverage: k_sigma must be positive");
  const int m = target.modes();
  ModeCoverage c{std::vector<double>(static_cast<std::size_t>(m), 0.0), std::vector<bool>(static_cast<std::size_t>(m)),
                 std::vector<bool>(static_cast<std::size_t>(m)), 0.0, 0};
  if (samples.rows() == 0) return c;
  require(samples.cols() == target.dims, "mode_coverage: dimension mismatch");
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(m), 0);
  std::uint64_t unassigned = 0;
  for (Eigen::Index r = 0; r < samples.rows(); ++r) {
    const int k = nearest_mode(target, samples.row(r));
    const auto kk = static_cast<std::size_t>(k);
    const double dist = (samples.row(r).transpose() - target.means[kk]).norm();
    if (dist <= k_sigma * target.scales[kk])
      ++counts[kk];
    else
      ++unassigned;
  }
  const double n = static_cast<double>(samples.rows());
  for (std::size_t k = 0; k < counts.size(); ++k) {
    c.mass[k] = static_cast<double>(counts[k]) / n;
    c.covered[k] = c.mass[k] >= kCoverageFraction / m;
    c.oversampled[k] = c.mass[k] >= kOversampleFactor / m;
    c.covered_count += c.covered[k] ? 1 : 0;
  }
  c.unassigned = static_cast<double>(unassigned) / n;
  return c;
}

struct ClusterPurity {
  std::vector<double> purity;       // per code
  std::vector<int> majority_mode;   // per code
  double mean = 0.0;
};

inline ClusterPurity cluster_purity(const std::vector<Matrix>& samples_by_code, const MixtureSpec& target) {
  target.validate();
  require(!samples_by_code.empty(), "cluster_purity: no codes");
  ClusterPurity out;
  for (const Matrix& s : samples_by_code) {
    require(s.rows() > 0, "cluster_purity: empty sample set for a code");
    std::vector<std::uint64_t> votes(static_cast<std::size_t>(target.modes()), 0);
    for (Eigen::Index r = 0; r < s.rows(); ++r) ++votes[static_cast<std::size_t>(nearest_mode(target, s.row(r)))];
    const auto best = std::max_element(votes.begin(), votes.end());
    out.majority_mode.push_back(static_cast<int>(best - votes.begin()));
    out.purity.push_back(static_cast<double>(*best) / static_cast<double>(s.rows()));
  }
  double sum = 0.0;
  for (double p : out.purity) sum += p;
  out.mean = sum / static_cast<double>(out.purity.size());
  return out;
}

/// Regular grid including both end points of each axis.
struct FieldGridSpec {
  double lo = -2.0;
  double hi = 2.0;
  double step = 0.2;

  std::vector<double> axis() const {
    require(hi > lo && step > 0.0, "field grid: empty range or non-positive step");
    const int n = static_cast<int>(std::lround((hi - lo) / step));
    std::vector<double> a(static_cast<std::size_t>(n + 1));
    for (int k = 0; k < n; ++k) a[static_cast<std::size_t>(k)] = lo + k * step;
    a.back() = hi;
    return a;
  }

  /// All grid points, x major, as a P x 2 matrix.
  Matrix points() const {
    const auto a = axis();
    Matrix p(static_cast<Eigen::Index>(a.size() * a.size()), 2);
    Eigen::Index r = 0;
    for (double x : a)
      for (double y : a) {
        p(r, 0) = x;
        p(r, 1) = y;
        ++r;
      }
    return p;
  }
};

enum class FieldMode { routed, per_discriminator };

struct FieldGrid {
  FieldGridSpec spec;
  Matrix points;                // P x 2, data coordinates
  std::vector<Matrix> vectors;  // one P x 2 field per discriminator
  std::vector<int> route;       // routed discriminator per point, -1 in per_discriminator mode
};

/// Per-point descent direction of log(1 - D_i(x)) with respect to x, i.e.
/// the pull a generated sample at x feels from discriminator i. In routed
/// mode only the classifier's most probable discriminator is evaluated at each
/// point; other fields are zero there.
inline FieldGrid gradient_field(const DiscriminatorBank& bank, const Classifier* q, const DataScaler& scaler,
                                const FieldGridSpec& grid, FieldMode mode) {
  require(scaler.dims() == 2, "gradient_field: 2D data only");
  require(mode == FieldMode::per_discriminator || q != nullptr, "gradient_field: routed mode needs a classifier");
  FieldGrid f{grid, grid.points(), {}, {}};
  const Matrix x_net = scaler.to_net(f.points);
  const auto p = x_net.rows();
  f.route.assign(static_cast<std::size_t>(p), -1);
  if (mode == FieldMode::routed) f.route = route_argmax(classify(*q, x_net));
  for (int i = 0; i < bank.size(); ++i) {
    const Mlp& d = bank.nets[static_cast<std::size_t>(i)];
    Matrix field = Matrix::Zero(p, 2);
    const ForwardTrace t = trace_forward(d, x_net);
    Matrix logit_grad(p, 1);
    for (Eigen::Index r = 0; r < p; ++r) {
      const double prob = t.output(r, 0);
      const bool clamped = prob <= kProbClamp || prob >= 1.0 - kProbClamp;
      logit_grad(r, 0) = clamped ? 0.0 : -prob;  // d log(1 - sigmoid(a)) / da
    }
    const Matrix grad_net = backprop(d, t, logit_grad, true).input_grad;
    for (Eigen::Index r = 0; r < p; ++r) {
      if (mode == FieldMode::routed && f.route[static_cast<std::size_t>(r)] != i) continue;
      field.row(r) = -grad_net.row(r) / scaler.scale;
    }
    f.vectors.push_back(std::move(field));
  }
  return f;
}

/// Magnitude of the field acting at each point (sum over discriminators).
inline Vector field_magnitude(const FieldGrid& f) {
  Matrix total = Matrix::Zero(f.points.rows(), 2);
  for (const auto& v : f.vectors) total += v;
  return total.rowwise().norm();
}

struct HeatmapGrid {
  FieldGridSpec spec;
  Matrix points;
  std::vector<Vector> scores;    // D_i(x)
  std::vector<Vector> weighted;  // D_i(x) Q(x)_i, when a classifier is given
};

inline HeatmapGrid score_heatmap(const DiscriminatorBank& bank, const Classifier* q, const DataScaler& scaler,
                                 const FieldGridSpec& grid) {
  require(scaler.dims() == 2, "score_heatmap: 2D data only");
  HeatmapGrid h{grid, grid.points(), {}, {}};
  const Matrix x_net = scaler.to_net(h.points);
  std::optional<Matrix> probs;
  if (q) probs = classify(*q, x_net);
  for (int i = 0; i < bank.size(); ++i) {
    h.scores.push_back(discriminate(bank, i, x_net));
    if (probs) h.weighted.push_back(h.scores.back().cwiseProduct(probs->col(i)));
  }
  return h;
}

}  // namespace dopanet
