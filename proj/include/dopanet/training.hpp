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

// Adversarial training loops. The DoPaNet iteration is, in order:
//   1. draw noise z, codes c and real samples x;
//   2. one classifier step on cross-entropy(c, Q(G(z, c)));
//   3. route every real and every generated sample to a discriminator by
//      sampling from Q, then one ascent step per touched discriminator;
//   4. draw fresh z, c, route G(z, c) again and take one generator descent
//      step on the mean of log(1 - D_routed(G(z, c))).
// The standard GAN and GMAN loops share the same building blocks.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dopanet/distributions.hpp"
#include "dopanet/models.hpp"
#include "dopanet/nn_core.hpp"
#include "dopanet/rng.hpp"

namespace dopanet {

enum class Algorithm { dopanet, standard_gan, gman };

/// How a GMAN generator combines its per-discriminator losses.
struct GmanVariant {
  enum class Kind { mean, max, weighted };
  Kind kind = Kind::mean;
  double lambda = 0.0;  // softmax temperature, weighted only

  static GmanVariant mean() { return {Kind::mean, 0.0}; }
  static GmanVariant max() { return {Kind::max, 0.0}; }
  static GmanVariant weighted(double lambda) { return {Kind::weighted, lambda}; }
};

/// Learning rate as a function of the iteration. `linear_decay` holds the
/// base rate until `decay_start` (fraction of the run), then decays linearly
/// to `final_fraction` times the base rate at the last iteration.
struct LearningRateSchedule {
  enum class Kind { constant, linear_decay };

  Kind kind = Kind::constant;
  double decay_start = 0.5;
  double final_fraction = 0.01;

  double factor(std::int64_t iteration, std::int64_t iterations) const {
    if (kind == Kind::constant || iterations <= 1) return 1.0;
    const double start = decay_start * static_cast<double>(iterations - 1);
    const double t = static_cast<double>(iteration);
    if (t <= start) return 1.0;
    const double progress = (t - start) / (static_cast<double>(iterations - 1) - start);
    return 1.0 - (1.0 - final_fraction) * std::min(1.0, progress);
  }

  void validate() const {
    require(decay_start >= 0.0 && decay_start < 1.0, "schedule: decay_start must lie in [0,1)");
    require(final_fraction > 0.0 && final_fraction <= 1.0, "schedule: final_fraction must lie in (0,1]");
  }
};

struct TrainConfig {
  MixtureSpec target = make_five_mode_1d_spec();
  int n_discriminators = 5;
  NoisePriorSpec noise;
  std::optional<CodePriorSpec> codes;  // uniform over N when unset
  int batch_size = 256;
  std::int64_t iterations = 20000;
  ArchitectureSpec arch;
  RmsPropHyper optimizer;
  LearningRateSchedule schedule;
  std::uint64_t seed = 0;
  Algorithm algorithm = Algorithm::dopanet;
  GmanVariant gman;
  bool normalize_data = true;
  double code_init_gain = 1.0;
  int log_every = 100;

  /// Number of generator code columns: N for DoPaNet, 1 otherwise.
  int code_count() const { return algorithm == Algorithm::dopanet ? n_discriminators : 1; }

  CodePriorSpec code_prior() const {
    if (algorithm == Algorithm::dopanet && codes) return *codes;
    return CodePriorSpec::uniform(code_count());
  }

  /// Copy with derived fields pinned (standard GAN always has one discriminator).
  TrainConfig resolved() const {
    TrainConfig c = *this;
    if (c.algorithm == Algorithm::standard_gan) c.n_discriminators = 1;
    if (c.algorithm == Algorithm::dopanet && !c.codes) c.codes = CodePriorSpec::uniform(c.n_discriminators);
    return c;
  }

  void validate() const {
    target.validate();
    noise.validate();
    require(n_discriminators >= 1, "config: n_discriminators must be >= 1");
    require(algorithm != Algorithm::standard_gan || n_discriminators == 1, "config: standard_gan requires N = 1");
    require(batch_size >= 2, "config: batch_size must be >= 2");
    require(iterations >= 0, "config: iterations must be >= 0");
    require(log_every >= 1, "config: log_every must be >= 1");
    require(!arch.hidden.empty(), "config: at least one hidden layer");
    require(gman.lambda >= 0.0, "config: GMAN lambda must be >= 0");
    require(optimizer.learning_rate > 0.0, "config: learning rate must be positive");
    schedule.validate();
    if (algorithm == Algorithm::dopanet && codes) {
      codes->validate();
      require(codes->n_codes() == n_discriminators, "config: code prior size must equal N");
    }
  }
};

struct RngStreams {
  Rng noise;
  Rng codes;
  Rng data;
  Rng routing;

  static RngStreams from_seed(std::uint64_t seed) {
    return {make_stream(seed, Stream::noise), make_stream(seed, Stream::codes), make_stream(seed, Stream::data),
            make_stream(seed, Stream::routing)};
  }
};

struct TrainState {
  TrainConfig config;
  DataScaler scaler;
  Generator generator;
  DiscriminatorBank bank;
  std::optional<Classifier> classifier;  // DoPaNet only
  RmsPropState generator_opt;
  std::vector<RmsPropState> discriminator_opt;
  std::optional<RmsPropState> classifier_opt;
  RngStreams rng;
  std::int64_t iteration = 0;

  int n_discriminators() const { return bank.size(); }
};

inline TrainState init_state(const TrainConfig& raw) {
  const TrainConfig config = raw.resolved();
  config.validate();
  const int dims = config.target.dims;
  Rng g_init = make_stream(config.seed, Stream::init_generator);
  Rng d_init = make_stream(config.seed, Stream::init_discriminators);
  Rng q_init = make_stream(config.seed, Stream::init_classifier);

  TrainState s{
      config,
      config.normalize_data ? DataScaler::for_target(config.target) : DataScaler::identity(dims),
      Generator::create(config.noise.dim, config.code_count(), dims, config.arch, g_init, config.code_init_gain),
      DiscriminatorBank::create(config.n_discriminators, dims, config.arch, d_init),
      std::nullopt,
      {},
      {},
      std::nullopt,
      RngStreams::from_seed(config.seed),
      0,
  };
  s.generator_opt = RmsPropState::for_net(s.generator.net, config.optimizer);
  for (const auto& d : s.bank.nets) s.discriminator_opt.push_back(RmsPropState::for_net(d, config.optimizer));
  if (config.algorithm == Algorithm::dopanet) {
    s.classifier = Classifier::create(dims, config.n_discriminators, config.arch, q_init);
    s.classifier_opt = RmsPropState::for_net(s.classifier->net, config.optimizer);
  }
  return s;
}

struct Minibatch {
  Matrix z;
  CodeBatch codes;
};

inline Minibatch sample_latent(TrainState& s) {
  const int m = s.config.batch_size;
  Matrix z = sample_noise(s.config.noise, m, s.rng.noise);
  CodeBatch c = sample_codes(s.config.code_prior(), m, s.rng.codes);
  return {std::move(z), std::move(c)};
}

/// Real minibatch in network coordinates.
inline Matrix sample_real(TrainState& s) {
  return s.scaler.to_net(sample_mixture(s.config.target, s.config.batch_size, s.rng.data));
}

namespace detail {

/// One ascent step on mean log D(real) + mean log(1 - D(fake)); an empty
/// matrix drops its term. Returns the objective value.
inline double ascend_discriminator(Mlp& d, RmsPropState& opt, const Matrix& real, const Matrix& fake) {
  std::optional<GradientSet> loss_grads;
  double objective = 0.0;
  if (real.rows() > 0) {
    LossGradient lg = backward(d, real, LossSpec::bce_real());
    objective -= lg.loss;
    loss_grads = std::move(lg.grads);
  }
  if (fake.rows() > 0) {
    LossGradient lg = backward(d, fake, LossSpec::bce_fake());
    objective -= lg.loss;
    if (loss_grads)
      *loss_grads += lg.grads;
    else
      loss_grads = std::move(lg.grads);
  }
  if (!loss_grads) return 0.0;
  *loss_grads *= -1.0;
  rmsprop_step(d, *loss_grads, opt, Direction::ascend);
  return objective;
}

inline void check_state_finite(const TrainState& s, const char* phase) {
  auto finite = [](const Mlp& net) {
    return std::all_of(net.layers.begin(), net.layers.end(),
                       [](const DenseLayer& l) { return l.weights.allFinite() && l.bias.allFinite(); });
  };
  bool ok = finite(s.generator.net);
  for (const auto& d : s.bank.nets) ok = ok && finite(d);
  if (s.classifier) ok = ok && finite(s.classifier->net);
  if (!ok) throw TrainingError(std::string("non-finite parameter after ") + phase, s.iteration);
}

}  // namespace detail

/// Classifier step on precomputed generations; returns the cross-entropy.
inline double update_classifier_on(TrainState& s, const Matrix& fake, const CodeBatch& codes) {
  require(s.classifier.has_value(), "update_classifier: state has no classifier");
  LossGradient lg = backward(s.classifier->net, fake, LossSpec::cross_entropy(codes.one_hot));
  // Ascending c . log Q is descending the cross-entropy.
  lg.grads *= -1.0;
  rmsprop_step(s.classifier->net, lg.grads, *s.classifier_opt, Direction::ascend);
  return lg.loss;
}

inline double update_classifier(TrainState& s, const Matrix& z, const CodeBatch& codes) {
  return update_classifier_on(s, generate(s.generator, z, codes.one_hot), codes);
}

/// Per-discriminator index lists for the real and the generated batch.
struct Partition {
  std::vector<std::vector<int>> real;
  std::vector<std::vector<int>> fake;
};

inline std::vector<std::vector<int>> group_by_index(std::span<const int> assignment, int n) {
  std::vector<std::vector<int>> groups(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < assignment.size(); ++i)
    groups[static_cast<std::size_t>(assignment[i])].push_back(static_cast<int>(i));
  return groups;
}

inline Partition partition_batches(TrainState& s, const Matrix& real, const Matrix& fake) {
  const int n = s.n_discriminators();
  require(s.classifier.has_value(), "partition_batches: state has no classifier");
  const auto sigma = route(classify(*s.classifier, real), s.rng.routing);
  const auto sigma_hat = route(classify(*s.classifier, fake), s.rng.routing);
  return {group_by_index(sigma, n), group_by_index(sigma_hat, n)};
}

/// One ascent step per discriminator on its own routed samples. Returns the
/// objective value per discriminator (0 when both partitions are empty).
inline Vector update_discriminators(TrainState& s, const Matrix& real, const Matrix& fake, const Partition& part) {
  const int n = s.n_discriminators();
  require(static_cast<int>(part.real.size()) == n && static_cast<int>(part.fake.size()) == n,
          "update_discriminators: partition count mismatch");
  Vector objective = Vector::Zero(n);
  for (int i = 0; i < n; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    if (part.real[ii].empty() && part.fake[ii].empty()) continue;
    objective(i) = detail::ascend_discriminator(s.bank.nets[ii], s.discriminator_opt[ii],
                                                gather_rows(real, part.real[ii]), gather_rows(fake, part.fake[ii]));
  }
  return objective;
}

struct GeneratorStep {
  double loss = 0.0;
  std::vector<int> fake_sizes;
};

/// Fresh z, c and routing, then one descent step on mean log(1 - D_routed(G(z, c))).
inline GeneratorStep update_generator(TrainState& s) {
  require(s.classifier.has_value(), "update_generator: state has no classifier");
  const int n = s.n_discriminators();
  const Minibatch mb = sample_latent(s);
  const ForwardTrace trace = trace_forward(s.generator.net, generator_input(s.generator, mb.z, mb.codes.one_hot));
  const Matrix& fake = trace.output;
  const auto groups = group_by_index(route(classify(*s.classifier, fake), s.rng.routing), n);

  const double m = static_cast<double>(fake.rows());
  Matrix out_grad = Matrix::Zero(fake.rows(), fake.cols());
  GeneratorStep step;
  for (int i = 0; i < n; ++i) {
    const auto& idx = groups[static_cast<std::size_t>(i)];
    step.fake_sizes.push_back(static_cast<int>(idx.size()));
    if (idx.empty()) continue;
    const double share = static_cast<double>(idx.size()) / m;
    LossGradient lg = backward(s.bank.nets[static_cast<std::size_t>(i)], gather_rows(fake, idx),
                               LossSpec::bce_generator(), /*want_input_grad=*/true);
    step.loss += lg.loss * share;
    for (std::size_t r = 0; r < idx.size(); ++r)
      out_grad.row(idx[r]) = lg.input_grad.row(static_cast<Eigen::Index>(r)) * share;
  }
  Backprop bp = backprop(s.generator.net, trace, out_grad);
  rmsprop_step(s.generator.net, bp.grads, s.generator_opt, Direction::descend);
  return step;
}

struct StepRecord {
  std::int64_t iteration = 0;
  double generator_loss = 0.0;
  double classifier_loss = 0.0;
  std::vector<double> discriminator_objective;
  std::vector<int> real_sizes;  // |D_n|
  std::vector<int> fake_sizes;  // |D^_n|
};

struct TrainLog {
  std::vector<StepRecord> records;
};

inline StepRecord dopanet_step(TrainState& s) {
  const Minibatch mb = sample_latent(s);
  const Matrix real = sample_real(s);
  const Matrix fake = generate(s.generator, mb.z, mb.codes.one_hot);

  StepRecord rec;
  rec.iteration = s.iteration;
  rec.classifier_loss = update_classifier_on(s, fake, mb.codes);
  detail::check_state_finite(s, "classifier step");

  const Partition part = partition_batches(s, real, fake);
  const Vector obj = update_discriminators(s, real, fake, part);
  detail::check_state_finite(s, "discriminator step");
  rec.discriminator_objective.assign(obj.data(), obj.data() + obj.size());
  for (const auto& p : part.real) rec.real_sizes.push_back(static_cast<int>(p.size()));
  for (const auto& p : part.fake) rec.fake_sizes.push_back(static_cast<int>(p.size()));

  rec.generator_loss = update_generator(s).loss;
  detail::check_state_finite(s, "generator step");
  ++s.iteration;
  return rec;
}

struct GmanBatches {
  Matrix real;   // network coordinates
  Matrix fake;   // G(z) for the discriminator step
};

/// Aggregation weights over per-discriminator generator losses.
inline Vector gman_weights(const Vector& losses, const GmanVariant& variant) {
  const auto n = losses.size();
  switch (variant.kind) {
    case GmanVariant::Kind::mean:
      return Vector::Constant(n, 1.0 / static_cast<double>(n));
    case GmanVariant::Kind::max: {
      Eigen::Index k = 0;
      losses.maxCoeff(&k);
      Vector w = Vector::Zero(n);
      w(k) = 1.0;
      return w;
    }
    case GmanVariant::Kind::weighted: {
      const Vector scaled = variant.lambda * losses;
      Vector w = (scaled.array() - scaled.maxCoeff()).exp().matrix();
      return w / w.sum();
    }
  }
  return Vector::Constant(n, 1.0 / static_cast<double>(n));
}

inline double gman_aggregate(const Vector& losses, const GmanVariant& variant) {
  return gman_weights(losses, variant).dot(losses);
}

/// Discriminator step where every discriminator sees the whole batch.
inline Vector update_all_discriminators(TrainState& s, const Matrix& real, const Matrix& fake) {
  Vector objective(s.n_discriminators());
  for (int i = 0; i < s.n_discriminators(); ++i) {
    const auto ii = static_cast<std::size_t>(i);
    objective(i) = detail::ascend_discriminator(s.bank.nets[ii], s.discriminator_opt[ii], real, fake);
  }
  return objective;
}

/// Generator step against all discriminators, aggregated by `variant`. The
/// aggregation weights are treated as constants in the gradient.
inline double update_generator_aggregated(TrainState& s, const GmanVariant& variant) {
  const int n = s.n_discriminators();
  const Minibatch mb = sample_latent(s);
  const ForwardTrace trace = trace_forward(s.generator.net, generator_input(s.generator, mb.z, mb.codes.one_hot));
  Vector losses(n);
  std::vector<Matrix> input_grads;
  for (int i = 0; i < n; ++i) {
    LossGradient lg = backward(s.bank.nets[static_cast<std::size_t>(i)], trace.output, LossSpec::bce_generator(), true);
    losses(i) = lg.loss;
    input_grads.push_back(std::move(lg.input_grad));
  }
  const Vector w = gman_weights(losses, variant);
  Matrix out_grad = input_grads[0] * w(0);
  for (int i = 1; i < n; ++i) out_grad += input_grads[static_cast<std::size_t>(i)] * w(i);
  Backprop bp = backprop(s.generator.net, trace, out_grad);
  rmsprop_step(s.generator.net, bp.grads, s.generator_opt, Direction::descend);
  return w.dot(losses);
}

struct GmanStepLosses {
  Vector discriminator_objective;
  double generator_loss = 0.0;
};

inline GmanStepLosses train_gman_step(TrainState& s, const GmanVariant& variant, const GmanBatches& batches) {
  require(s.config.algorithm != Algorithm::dopanet, "train_gman_step: requires a GMAN or standard GAN state");
  GmanStepLosses out;
  out.discriminator_objective = update_all_discriminators(s, batches.real, batches.fake);
  detail::check_state_finite(s, "discriminator step");
  out.generator_loss = update_generator_aggregated(s, variant);
  detail::check_state_finite(s, "generator step");
  return out;
}

/// Standard GAN (N = 1) and GMAN iteration.
inline StepRecord multi_discriminator_step(TrainState& s) {
  const Minibatch mb = sample_latent(s);
  const Matrix real = sample_real(s);
  GmanBatches batches{real, generate(s.generator, mb.z, mb.codes.one_hot)};
  const GmanVariant variant = s.config.algorithm == Algorithm::gman ? s.config.gman : GmanVariant::mean();
  const GmanStepLosses l = train_gman_step(s, variant, batches);

  StepRecord rec;
  rec.iteration = s.iteration;
  rec.generator_loss = l.generator_loss;
  rec.discriminator_objective.assign(l.discriminator_objective.data(),
                                     l.discriminator_objective.data() + l.discriminator_objective.size());
  rec.real_sizes.assign(static_cast<std::size_t>(s.n_discriminators()), s.config.batch_size);
  rec.fake_sizes = rec.real_sizes;
  ++s.iteration;
  return rec;
}

/// Sets every optimizer's learning rate for the upcoming iteration.
inline void apply_schedule(TrainState& s) {
  const double lr = s.config.optimizer.learning_rate * s.config.schedule.factor(s.iteration, s.config.iterations);
  s.generator_opt.hyper.learning_rate = lr;
  for (auto& o : s.discriminator_opt) o.hyper.learning_rate = lr;
  if (s.classifier_opt) s.classifier_opt->hyper.learning_rate = lr;
}

inline StepRecord train_step(TrainState& s) {
  apply_schedule(s);
  return s.config.algorithm == Algorithm::dopanet ? dopanet_step(s) : multi_discriminator_step(s);
}

struct TrainResult {
  TrainState state;
  TrainLog log;
};

/// Called after every iteration with the updated state.
using StepObserver = std::function<void(const TrainState&, const StepRecord&)>;

inline TrainResult train(const TrainConfig& config, const StepObserver& observer = {}) {
  TrainResult r{init_state(config), {}};
  const auto iterations = r.state.config.iterations;
  const int every = r.state.config.log_every;
  for (std::int64_t it = 0; it < iterations; ++it) {
    StepRecord rec = train_step(r.state);
    if (observer) observer(r.state, rec);
    if (it % every == 0 || it + 1 == iterations) r.log.records.push_back(std::move(rec));
  }
  return r;
}

/// Draws n generations in data coordinates (chunked); `codes_out` receives each sample's code.
inline Matrix sample_generator(const TrainState& s, int n, Rng& rng, std::vector<int>* codes_out = nullptr) {
  require(n >= 1, "sample_generator: n must be >= 1");
  const int chunk = 8192;
  Matrix out(n, s.generator.data_dim());
  if (codes_out) codes_out->clear();
  const CodePriorSpec prior = s.config.code_prior();
  for (int start = 0; start < n; start += chunk) {
    const int k = std::min(chunk, n - start);
    const Matrix z = sample_noise(s.config.noise, k, rng);
    const CodeBatch c = sample_codes(prior, k, rng);
    out.middleRows(start, k) = s.scaler.to_data(generate(s.generator, z, c.one_hot));
    if (codes_out) codes_out->insert(codes_out->end(), c.indices.begin(), c.indices.end());
  }
  return out;
}

/// n generations with a fixed code, in data coordinates.
inline Matrix sample_generator_code(const TrainState& s, int code, int n, Rng& rng) {
  require(code >= 0 && code < s.generator.n_codes, "sample_generator_code: code out of range");
  const std::vector<int> idx(static_cast<std::size_t>(n), code);
  const Matrix z = sample_noise(s.config.noise, n, rng);
  return s.scaler.to_data(generate(s.generator, z, one_hot(idx, s.generator.n_codes)));
}

}  // namespace dopanet
