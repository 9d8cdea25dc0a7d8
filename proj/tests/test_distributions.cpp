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


#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "support.hpp"

namespace dopanet {
namespace {

MixtureSpec single_mode(double mean, double sd) {
  MixtureSpec s;
  s.means = {Vector::Constant(1, mean)};
  s.scales = {sd};
  s.weights = {1.0};
  return s;
}

double normal_pdf(double x, double mu, double sd) {
  return std::exp(-0.5 * (x - mu) * (x - mu) / (sd * sd)) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

/// KL(empirical || analytic) over the bins of `spec`; the analytic cell mass is
/// the pdf at the cell center times the cell volume, renormalized on the grid.
double empirical_vs_pdf_kl(const Histogram& h, const MixtureSpec& target) {
  const HistogramSpec& hs = h.spec;
  std::vector<double> q(h.counts.size());
  double qsum = 0.0;
  for (std::size_t b = 0; b < q.size(); ++b) {
    Vector c(hs.dims);
    if (hs.dims == 1) {
      c(0) = hs.edge(0, static_cast<int>(b)) + 0.5 * hs.width[0];
    } else {
      const int i = static_cast<int>(b) / hs.bins(1), j = static_cast<int>(b) % hs.bins(1);
      c << hs.edge(0, i) + 0.5 * hs.width[0], hs.edge(1, j) + 0.5 * hs.width[1];
    }
    q[b] = mixture_pdf(target, c);
    qsum += q[b];
  }
  double kl = 0.0;
  const double n = static_cast<double>(h.in_range());
  for (std::size_t b = 0; b < q.size(); ++b) {
    if (h.counts[b] == 0) continue;
    const double p = static_cast<double>(h.counts[b]) / n;
    kl += p * std::log(p / (q[b] / qsum));
  }
  return kl;
}

TEST(MixtureSpec, ValidationRejectsBadSpecs) {
  MixtureSpec s = make_five_mode_1d_spec();
  s.weights[0] = 0.3;
  EXPECT_THROW(s.validate(), ContractError);
  s = make_five_mode_1d_spec();
  s.scales[2] = 0.0;
  EXPECT_THROW(s.validate(), ContractError);
  s = make_five_mode_1d_spec();
  s.scales.pop_back();
  EXPECT_THROW(s.validate(), ContractError);
  EXPECT_THROW(MixtureSpec{}.validate(), ContractError);
  EXPECT_THROW(make_ring_spec(0, 0.1), ContractError);
  EXPECT_THROW(make_ring_spec(8, 0.0), ContractError);
}

TEST(SampleMixture, FiveModeProportionsAreEqual) {
  const MixtureSpec s = make_five_mode_1d_spec();
  Rng rng(42);
  const Matrix x = sample_mixture(s, 65536, rng);
  std::vector<int> count(5, 0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) ++count[static_cast<std::size_t>(nearest_mode(s, x.row(i)))];
  for (int c : count) EXPECT_NEAR(c / 65536.0, 0.2, 0.01);
}

TEST(SampleMixture, DegenerateScaleCollapsesToMean) {
  Rng rng(1);
  const Matrix x = sample_mixture(single_mode(3.5, 1e-12), 1000, rng);
  EXPECT_LT((x.array() - 3.5).abs().maxCoeff(), 1e-9);
}

TEST(SampleMixture, ThreeModeRingMeanIsCentroid) {
  const MixtureSpec s = make_ring_spec(3, 0.1);
  Vector centroid = Vector::Zero(2);
  for (const auto& m : s.means) centroid += m / 3.0;
  Rng rng(7);
  const Matrix x = sample_mixture(s, 1000000, rng);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  EXPECT_NEAR(mean(0), centroid(0), 0.005);
  EXPECT_NEAR(mean(1), centroid(1), 0.005);
}

TEST(SampleMixture, SameSeedSameStream) {
  const MixtureSpec s = make_ring_spec(8, 0.1);
  Rng a(99), b(99);
  EXPECT_EQ(sample_mixture(s, 500, a), sample_mixture(s, 500, b));
}

TEST(SampleMixture, FiveModeHistogramMatchesPdf) {
  Rng rng(3);
  const Histogram h = build_histogram(sample_mixture(make_five_mode_1d_spec(), 1000000, rng), HistogramSpec::five_mode_1d());
  EXPECT_LT(empirical_vs_pdf_kl(h, make_five_mode_1d_spec()), 0.01);
}

TEST(SampleMixture, RingHistogramMatchesPdf) {
  // 10^8 samples: with 10^6 cells the plug-in estimate is dominated by
  // sampling bias at smaller n even for an exact sampler.
  const MixtureSpec s = make_ring_spec(8, 0.1);
  const HistogramSpec hs = HistogramSpec::ring_2d();
  Histogram total = build_histogram(Matrix::Zero(0, 2), hs);
  Rng rng(5);
  for (int chunk = 0; chunk < 100; ++chunk) {
    const Histogram h = build_histogram(sample_mixture(s, 1000000, rng), hs);
    for (std::size_t b = 0; b < h.counts.size(); ++b) total.counts[b] += h.counts[b];
    total.total += h.total;
    total.out_of_range += h.out_of_range;
  }
  EXPECT_LT(empirical_vs_pdf_kl(total, s), 0.01);
}

TEST(RingSpec, FourModesOnAxes) {
  const MixtureSpec s = make_ring_spec(4, 0.1);
  const double expected[4][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  for (int k = 0; k < 4; ++k) {
    EXPECT_NEAR(s.means[static_cast<std::size_t>(k)](0), expected[k][0], 1e-15);
    EXPECT_NEAR(s.means[static_cast<std::size_t>(k)](1), expected[k][1], 1e-15);
  }
}

TEST(RingSpec, ThreeModesAt120Degrees) {
  const MixtureSpec s = make_ring_spec(3, 0.1);
  for (int k = 0; k < 3; ++k) {
    const Vector& m = s.means[static_cast<std::size_t>(k)];
    double angle = std::atan2(m(1), m(0));
    if (angle < 0) angle += 2 * std::numbers::pi;
    EXPECT_NEAR(angle, k * 2 * std::numbers::pi / 3, 1e-12);
    EXPECT_NEAR(m.norm(), 1.0, 1e-15);
  }
}

TEST(RingSpec, EightModeChordLength) {
  const MixtureSpec s = make_ring_spec(8, 0.3);
  for (int k = 0; k < 8; ++k)
    EXPECT_NEAR((s.means[static_cast<std::size_t>(k)] - s.means[static_cast<std::size_t>((k + 1) % 8)]).norm(),
                2 * std::sin(std::numbers::pi / 8), 1e-12);
  s.validate();
  EXPECT_EQ(s.scales[0], 0.3);
}

TEST(MixturePdf, SymmetricMidpointContributionsAreEqual) {
  MixtureSpec s;
  s.means = {Vector::Constant(1, -2.0), Vector::Constant(1, 2.0)};
  s.scales = {1.5, 1.5};
  s.weights = {0.5, 0.5};
  EXPECT_DOUBLE_EQ(mixture_pdf(s, 0.0), normal_pdf(0.0, -2.0, 1.5));
}

TEST(MixturePdf, StandardNormalAtZero) {
  EXPECT_NEAR(mixture_pdf(single_mode(0.0, 1.0), 0.0), 1.0 / std::sqrt(2 * std::numbers::pi), 1e-15);
}

TEST(MixturePdf, FiveModeTermwise) {
  const double mu[] = {10, 20, 60, 80, 110}, sd[] = {3, 3, 2, 2, 1};
  double expected = 0.0;
  for (int k = 0; k < 5; ++k) expected += 0.2 * normal_pdf(10.0, mu[k], sd[k]);
  EXPECT_NEAR(mixture_pdf(make_five_mode_1d_spec(), 10.0), expected, 1e-15);
}

TEST(MixturePdf, IntegratesToOne) {
  const MixtureSpec s1 = make_five_mode_1d_spec();
  double sum = 0.0;
  for (double x = -10.0 + 0.005; x < 130.0; x += 0.01) sum += mixture_pdf(s1, x) * 0.01;
  EXPECT_NEAR(sum, 1.0, 1e-3);
  const MixtureSpec s2 = make_ring_spec(8, 0.1);
  sum = 0.0;
  Vector p(2);
  for (double x = -1.4 + 0.0025; x < 1.4; x += 0.005)
    for (double y = -1.4 + 0.0025; y < 1.4; y += 0.005) {
      p << x, y;
      sum += mixture_pdf(s2, p) * 0.005 * 0.005;
    }
  EXPECT_NEAR(sum, 1.0, 1e-3);
}

TEST(MixturePdf, RejectsNonFinitePoint) {
  EXPECT_THROW(mixture_pdf(make_five_mode_1d_spec(), std::nan("")), ContractError);
}

TEST(Noise, RangeShapeAndMean) {
  Rng rng(8);
  const Matrix z = sample_noise({1, -1.0, 1.0}, 1000000, rng);
  EXPECT_NEAR(z.mean(), 0.0, 0.005);
  EXPECT_GE(z.minCoeff(), -1.0);
  EXPECT_LT(z.maxCoeff(), 1.0);
  const Matrix z64 = sample_noise({}, 10, rng);
  EXPECT_EQ(z64.rows(), 10);
  EXPECT_EQ(z64.cols(), 64);
}

TEST(Noise, EmptyRangeIsRejected) {
  Rng rng(1);
  EXPECT_THROW(sample_noise({4, 1.0, 1.0}, 3, rng), ContractError);
}

TEST(Codes, SingleCodeIsAlwaysZero) {
  Rng rng(1);
  const CodeBatch c = sample_codes(CodePriorSpec::uniform(1), 100, rng);
  for (int i : c.indices) EXPECT_EQ(i, 0);
  EXPECT_TRUE(c.one_hot.isOnes());
}

TEST(Codes, UniformFrequencies) {
  Rng rng(2);
  const CodeBatch c = sample_codes(CodePriorSpec::uniform(5), 1000000, rng);
  std::vector<int> count(5, 0);
  for (int i : c.indices) ++count[static_cast<std::size_t>(i)];
  for (int n : count) EXPECT_NEAR(n / 1e6, 0.2, 0.002);
  for (Eigen::Index r = 0; r < 1000; ++r) {
    EXPECT_EQ(c.one_hot.row(r).sum(), 1.0);
    EXPECT_EQ(c.one_hot(r, c.indices[static_cast<std::size_t>(r)]), 1.0);
  }
}

TEST(Codes, DegenerateProbabilities) {
  Rng rng(3);
  const CodeBatch c = sample_codes({{1.0, 0.0, 0.0}}, 1000, rng);
  for (int i : c.indices) EXPECT_EQ(i, 0);
  EXPECT_THROW(sample_codes({{0.5, 0.6}}, 1, rng), ContractError);
  EXPECT_THROW(sample_codes({{1.5, -0.5}}, 1, rng), ContractError);
}

TEST(Streams, NamedStreamsAreDistinctAndReproducible) {
  Rng a = make_stream(1, Stream::noise), b = make_stream(1, Stream::codes), c = make_stream(1, Stream::noise);
  const auto va = a(), vb = b(), vc = c();
  EXPECT_NE(va, vb);
  EXPECT_EQ(va, vc);
  EXPECT_NE(make_stream(1, Stream::noise)(), make_stream(2, Stream::noise)());
}

}  // namespace
}  // namespace dopanet
