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
#include <limits>

#include <gtest/gtest.h>

#include "support.hpp"

namespace dopanet {
namespace {

Mlp two_layer_scalar() {
  // 2 -> 2 -> 1, hand-set weights.
  const int dims[] = {2, 2, 1};
  Mlp net = make_zero_mlp(dims, OutputActivation::sigmoid, 0.2);
  net.layers[0].weights << 1.0, -1.0, 0.5, 2.0;
  net.layers[0].bias << 0.0, -1.0;
  net.layers[1].weights << 2.0, -1.0;
  net.layers[1].bias << 0.5;
  return net;
}

TEST(Forward, MatchesHandComputation) {
  const Mlp net = two_layer_scalar();
  Matrix x(1, 2);
  x << 1.0, 2.0;
  // hidden pre: (1-2, 0.5+4-1) = (-1, 3.5); leaky: (-0.2, 3.5)
  // logit: 2*(-0.2) - 3.5 + 0.5 = -3.4
  const ForwardTrace t = trace_forward(net, x);
  EXPECT_DOUBLE_EQ(t.logits(0, 0), -3.4);
  EXPECT_DOUBLE_EQ(t.output(0, 0), 1.0 / (1.0 + std::exp(3.4)));
}

TEST(Forward, SigmoidOutputIsClamped) {
  const int dims[] = {1, 1};
  Mlp net = make_zero_mlp(dims, OutputActivation::sigmoid);
  net.layers[0].bias << 100.0;
  EXPECT_EQ(forward(net, Matrix::Zero(1, 1))(0, 0), 1.0 - kProbClamp);
  net.layers[0].bias << -100.0;
  EXPECT_EQ(forward(net, Matrix::Zero(1, 1))(0, 0), kProbClamp);
}

TEST(Forward, SoftmaxRowsSumToOne) {
  Rng rng(3);
  const int dims[] = {3, 5, 4};
  const Mlp net = make_mlp(dims, OutputActivation::softmax, 0.2, rng);
  const Matrix x = Matrix::Random(10, 3) * 50.0;
  const Matrix p = forward(net, x);
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-12);
    EXPECT_TRUE((p.row(r).array() >= 0.0).all());
  }
}

TEST(Forward, RejectsWrongWidth) {
  const Mlp net = two_layer_scalar();
  EXPECT_THROW(forward(net, Matrix::Zero(2, 3)), ContractError);
}

TEST(Forward, NonFiniteInputReportsLayer) {
  const Mlp net = two_layer_scalar();
  Matrix x(1, 2);
  x << std::numeric_limits<double>::quiet_NaN(), 0.0;
  try {
    forward(net, x);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(e.layer(), 0);
  }
}

TEST(Forward, OverflowReportsLayer) {
  Mlp net = two_layer_scalar();
  net.layers[1].weights << 1e308, 1e308;
  Matrix x(1, 2);
  x << 10.0, 10.0;
  try {
    forward(net, x);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(e.layer(), 1);
  }
}

TEST(MakeMlp, GlorotBoundsAndZeroBias) {
  Rng rng(11);
  const int dims[] = {64, 128, 1};
  const Mlp net = make_mlp(dims, OutputActivation::sigmoid, 0.2, rng);
  EXPECT_LE(net.layers[0].weights.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 192.0));
  EXPECT_LE(net.layers[1].weights.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 129.0));
  EXPECT_TRUE(net.layers[0].bias.isZero());
  EXPECT_EQ(net.parameter_count(), 64u * 128 + 128 + 128 + 1);
}

TEST(MakeMlp, SameSeedSameWeights) {
  const int dims[] = {3, 7, 2};
  Rng a(5), b(5);
  EXPECT_EQ(testing::flatten(make_mlp(dims, OutputActivation::softmax, 0.2, a)),
            testing::flatten(make_mlp(dims, OutputActivation::softmax, 0.2, b)));
}

TEST(MakeMlp, RejectsDegenerateWidths) {
  Rng rng(1);
  const int one[] = {3};
  const int zero[] = {3, 0, 1};
  EXPECT_THROW(make_mlp(one, OutputActivation::identity, 0.2, rng), ContractError);
  EXPECT_THROW(make_mlp(zero, OutputActivation::identity, 0.2, rng), ContractError);
}

TEST(Loss, BceValues) {
  Matrix out(2, 1);
  out << 0.25, 0.5;
  EXPECT_NEAR(loss_and_logit_grad(out, LossSpec::bce_real()).first, -(std::log(0.25) + std::log(0.5)) / 2, 1e-15);
  EXPECT_NEAR(loss_and_logit_grad(out, LossSpec::bce_fake()).first, -(std::log(0.75) + std::log(0.5)) / 2, 1e-15);
  EXPECT_NEAR(loss_and_logit_grad(out, LossSpec::bce_generator()).first, (std::log(0.75) + std::log(0.5)) / 2, 1e-15);
}

TEST(Loss, ClampedOutputHasZeroGradient) {
  Matrix out(1, 1);
  out << 1.0 - kProbClamp;
  const auto [loss, g] = loss_and_logit_grad(out, LossSpec::bce_fake());
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_EQ(g(0, 0), 0.0);
}

TEST(Loss, SingleClassCrossEntropyIsExactlyZero) {
  const int dims[] = {2, 3, 1};
  Rng rng(2);
  const Mlp net = make_mlp(dims, OutputActivation::softmax, 0.2, rng);
  const Matrix x = Matrix::Random(6, 2);
  const LossGradient lg = backward(net, x, LossSpec::cross_entropy(Matrix::Ones(6, 1)));
  EXPECT_EQ(lg.loss, 0.0);
  for (const auto& l : lg.grads.layers) {
    EXPECT_TRUE(l.weights.isZero());
    EXPECT_TRUE(l.bias.isZero());
  }
}

TEST(Loss, IncompatibleHeadIsRejected) {
  const int dims[] = {2, 3};
  const Mlp net = make_zero_mlp(dims, OutputActivation::softmax);
  EXPECT_THROW(backward(net, Matrix::Zero(1, 2), LossSpec::bce_real()), ContractError);
  EXPECT_THROW(backward(net, Matrix::Zero(2, 2), LossSpec::cross_entropy(Matrix::Ones(1, 3) / 3)), ContractError);
}

TEST(Gradient, MatchesFiniteDifferencesOnRandomNets) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto c = testing::random_gradient_case(seed);
    EXPECT_LT(finite_difference_check(c.net, c.loss, c.batch), 1e-4) << "seed " << seed;
  }
}

TEST(Gradient, InputGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto c = testing::random_gradient_case(seed);
    const LossGradient lg = backward(c.net, c.batch, c.loss, true);
    ASSERT_EQ(lg.input_grad.rows(), c.batch.rows());
    Matrix probe = c.batch;
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < probe.size(); ++i) {
      const double saved = probe.data()[i];
      probe.data()[i] = saved + h;
      const double up = evaluate_loss(c.net, probe, c.loss);
      probe.data()[i] = saved - h;
      const double down = evaluate_loss(c.net, probe, c.loss);
      probe.data()[i] = saved;
      EXPECT_NEAR(lg.input_grad.data()[i], (up - down) / (2 * h), 1e-6) << "seed " << seed;
    }
  }
}

TEST(Gradient, FiniteDifferenceStepIsBounded) {
  const auto c = testing::random_gradient_case(1);
  const GradientSet g = backward(c.net, c.batch, c.loss).grads;
  EXPECT_THROW(finite_difference_error(c.net, c.loss, c.batch, 0.0, g), ContractError);
  EXPECT_THROW(finite_difference_error(c.net, c.loss, c.batch, 1e-2, g), ContractError);
}

TEST(Gradient, CorruptedGradientIsDetected) {
  const auto c = testing::random_gradient_case(4);
  GradientSet g = backward(c.net, c.batch, c.loss).grads;
  g.layers[0].weights(0, 0) += 0.5;
  EXPECT_GT(finite_difference_error(c.net, c.loss, c.batch, 1e-5, g), 0.1);
}

TEST(RmsProp, FirstTwoStepsMatchHandValues) {
  const int dims[] = {1, 1};
  Mlp net = make_zero_mlp(dims, OutputActivation::identity);
  RmsPropState state = RmsPropState::for_net(net);
  GradientSet g = GradientSet::zeros_like(net);
  g.layers[0].weights(0, 0) = 1.0;
  rmsprop_step(net, g, state, Direction::descend);
  EXPECT_NEAR(net.layers[0].weights(0, 0), -1e-3 / (0.1 + 1e-8), 1e-15);
  EXPECT_NEAR(state.mean_square.layers[0].weights(0, 0), 0.01, 1e-15);
  EXPECT_EQ(net.layers[0].bias(0), 0.0);
  rmsprop_step(net, g, state, Direction::descend);
  EXPECT_NEAR(state.mean_square.layers[0].weights(0, 0), 0.0199, 1e-15);
  EXPECT_NEAR(net.layers[0].weights(0, 0), -1e-3 / (0.1 + 1e-8) - 1e-3 / (std::sqrt(0.0199) + 1e-8), 1e-15);
}

TEST(RmsProp, AscentMirrorsDescent) {
  const auto c = testing::random_gradient_case(7);
  const GradientSet g = backward(c.net, c.batch, c.loss).grads;
  Mlp up = c.net, down = c.net;
  RmsPropState su = RmsPropState::for_net(up), sd = RmsPropState::for_net(down);
  rmsprop_step(up, g, su, Direction::ascend);
  rmsprop_step(down, g, sd, Direction::descend);
  const auto p0 = testing::flatten(c.net), pu = testing::flatten(up), pd = testing::flatten(down);
  for (std::size_t i = 0; i < p0.size(); ++i) EXPECT_NEAR(pu[i] - p0[i], p0[i] - pd[i], 1e-15);
}

TEST(RmsProp, DescentLowersLossForSmallSteps) {
  const auto c = testing::random_gradient_case(9);
  Mlp net = c.net;
  RmsPropState s = RmsPropState::for_net(net, {1e-4, 0.99, 1e-8});
  const double before = evaluate_loss(net, c.batch, c.loss);
  rmsprop_step(net, backward(net, c.batch, c.loss).grads, s, Direction::descend);
  EXPECT_LT(evaluate_loss(net, c.batch, c.loss), before);
}

TEST(RmsProp, RejectsShapeMismatchAndBadHyper) {
  const int a[] = {2, 3, 1};
  const int b[] = {2, 4, 1};
  Mlp net = make_zero_mlp(a, OutputActivation::sigmoid);
  RmsPropState s = RmsPropState::for_net(net);
  EXPECT_THROW(rmsprop_step(net, GradientSet::zeros_like(make_zero_mlp(b, OutputActivation::sigmoid)), s,
                            Direction::descend),
               ContractError);
  EXPECT_THROW(RmsPropState::for_net(net, {1e-3, 1.0, 1e-8}), ContractError);
  EXPECT_THROW(RmsPropState::for_net(net, {1e-3, 0.9, 0.0}), ContractError);
}

}  // namespace
}  // namespace dopanet
