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

// Experiment orchestration: JSON configs, seed/N/algorithm sweeps, run
// artifacts on disk, summary tables and diagnostic grids.
//
// Artifact directory layout (one directory per run):
//   config.json       resolved training config, evaluation spec, run id
//   metrics.json      final metrics
//   log.csv           training log
//   samples_real.csv  x[,y]
//   samples_gen.csv   x[,y],code
//   params.bin        agent parameters (see save_params)
//   field_*.csv, heatmap_*.csv, hist_*.csv, q_curves.csv   diagnostics

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dopanet/distributions.hpp"
#include "dopanet/evaluation.hpp"
#include "dopanet/models.hpp"
#include "dopanet/nn_core.hpp"
#include "dopanet/training.hpp"
#include "json.hpp"

namespace dopanet {

using Json = nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config <-> JSON

inline std::string algorithm_label(Algorithm a, const GmanVariant& v) {
  switch (a) {
    case Algorithm::dopanet:
      return "dopanet";
    case Algorithm::standard_gan:
      return "standard_gan";
    case Algorithm::gman:
      switch (v.kind) {
        case GmanVariant::Kind::mean:
          return "gman:mean";
        case GmanVariant::Kind::max:
          return "gman:max";
        case GmanVariant::Kind::weighted: {
          std::ostringstream os;
          os << "gman:weighted:" << v.lambda;
          return os.str();
        }
      }
  }
  return "unknown";
}

/// Parses "dopanet", "standard_gan", "gman", "gman:mean", "gman:max", "gman:weighted:<lambda>".
inline std::pair<Algorithm, GmanVariant> parse_algorithm(const std::string& text) {
  if (text == "dopanet") return {Algorithm::dopanet, {}};
  if (text == "standard_gan" || text == "gan") return {Algorithm::standard_gan, {}};
  if (text == "gman" || text == "gman:mean") return {Algorithm::gman, GmanVariant::mean()};
  if (text == "gman:max") return {Algorithm::gman, GmanVariant::max()};
  const std::string prefix = "gman:weighted";
  if (text.rfind(prefix, 0) == 0) {
    double lambda = 1.0;
    if (text.size() > prefix.size()) {
      require(text[prefix.size()] == ':', "unknown algorithm '" + text + "'");
      try {
        lambda = std::stod(text.substr(prefix.size() + 1));
      } catch (const std::exception&) {
        throw ContractError("bad GMAN lambda in '" + text + "'");
      }
    }
    require(lambda >= 0.0, "GMAN lambda must be >= 0");
    return {Algorithm::gman, GmanVariant::weighted(lambda)};
  }
  throw ContractError("unknown algorithm '" + text + "'");
}

inline Json mixture_to_json(const MixtureSpec& s) {
  Json means = Json::array();
  for (const auto& m : s.means) means.push_back(std::vector<double>(m.data(), m.data() + m.size()));
  return {{"dims", s.dims}, {"means", means}, {"scales", s.scales}, {"weights", s.weights}};
}

/// Accepts {"kind": "five_mode_1d"}, {"kind": "ring", "modes": M, "sigma": s}
/// or an explicit {"dims", "means", "scales", "weights"} description.
inline MixtureSpec mixture_from_json(const Json& j) {
  MixtureSpec s;
  const std::string kind = j.value("kind", std::string("explicit"));
  if (kind == "five_mode_1d") {
    s = make_five_mode_1d_spec();
  } else if (kind == "ring") {
    s = make_ring_spec(j.value("modes", 8), j.value("sigma", 0.1));
  } else if (kind == "explicit") {
    s.dims = j.at("dims").get<int>();
    for (const auto& m : j.at("means")) {
      const auto v = m.get<std::vector<double>>();
      s.means.push_back(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    s.scales = j.at("scales").get<std::vector<double>>();
    if (j.contains("weights")) {
      s.weights = j.at("weights").get<std::vector<double>>();
    } else {
      s.weights.assign(s.means.size(), 1.0 / static_cast<double>(s.means.size()));
    }
  } else {
    throw ContractError("unknown target kind '" + kind + "'");
  }
  s.validate();
  return s;
}

inline Json train_config_to_json(const TrainConfig& c) {
  Json j;
  j["target"] = mixture_to_json(c.target);
  j["algorithm"] = algorithm_label(c.algorithm, c.gman);
  j["n_discriminators"] = c.n_discriminators;
  j["noise"] = {{"dim", c.noise.dim}, {"low", c.noise.low}, {"high", c.noise.high}};
  j["code_probabilities"] = c.code_prior().probabilities;
  j["batch_size"] = c.batch_size;
  j["iterations"] = c.iterations;
  j["hidden"] = c.arch.hidden;
  j["leaky_slope"] = c.arch.leaky_slope;
  j["optimizer"] = {{"learning_rate", c.optimizer.learning_rate},
                    {"decay", c.optimizer.decay},
                    {"epsilon", c.optimizer.epsilon}};
  j["schedule"] = {{"kind", c.schedule.kind == LearningRateSchedule::Kind::constant ? "constant" : "linear_decay"},
                   {"decay_start", c.schedule.decay_start},
                   {"final_fraction", c.schedule.final_fraction}};
  j["seed"] = c.seed;
  j["normalize_data"] = c.normalize_data;
  j["code_init_gain"] = c.code_init_gain;
  j["log_every"] = c.log_every;
  return j;
}

/// Missing keys keep the TrainConfig defaults.
inline TrainConfig train_config_from_json(const Json& j, TrainConfig c = {}) {
  try {
    if (j.contains("target")) c.target = mixture_from_json(j.at("target"));
    if (j.contains("algorithm")) std::tie(c.algorithm, c.gman) = parse_algorithm(j.at("algorithm").get<std::string>());
    c.n_discriminators = j.value("n_discriminators", c.n_discriminators);
    if (j.contains("noise")) {
      const Json& n = j.at("noise");
      c.noise.dim = n.value("dim", c.noise.dim);
      c.noise.low = n.value("low", c.noise.low);
      c.noise.high = n.value("high", c.noise.high);
    }
    if (j.contains("code_probabilities") && c.algorithm == Algorithm::dopanet)
      c.codes = CodePriorSpec{j.at("code_probabilities").get<std::vector<double>>()};
    c.batch_size = j.value("batch_size", c.batch_size);
    c.iterations = j.value("iterations", c.iterations);
    if (j.contains("hidden")) c.arch.hidden = j.at("hidden").get<std::vector<int>>();
    c.arch.leaky_slope = j.value("leaky_slope", c.arch.leaky_slope);
    if (j.contains("optimizer")) {
      const Json& o = j.at("optimizer");
      c.optimizer.learning_rate = o.value("learning_rate", c.optimizer.learning_rate);
      c.optimizer.decay = o.value("decay", c.optimizer.decay);
      c.optimizer.epsilon = o.value("epsilon", c.optimizer.epsilon);
    }
    if (j.contains("schedule")) {
      const Json& sc = j.at("schedule");
      const std::string kind = sc.value("kind", std::string("constant"));
      require(kind == "constant" || kind == "linear_decay", "config: unknown schedule kind '" + kind + "'");
      c.schedule.kind = kind == "constant" ? LearningRateSchedule::Kind::constant : LearningRateSchedule::Kind::linear_decay;
      c.schedule.decay_start = sc.value("decay_start", c.schedule.decay_start);
      c.schedule.final_fraction = sc.value("final_fraction", c.schedule.final_fraction);
    }
    c.seed = j.value("seed", c.seed);
    c.normalize_data = j.value("normalize_data", c.normalize_data);
    c.code_init_gain = j.value("code_init_gain", c.code_init_gain);
    c.log_every = j.value("log_every", c.log_every);
  } catch (const Json::exception& e) {
    throw ContractError(std::string("config: ") + e.what());
  }
  return c;
}

struct EvaluationSpec {
  int samples = 65536;
  HistogramSpec histogram = HistogramSpec::five_mode_1d();
  double k_sigma = 3.0;
  int q_accuracy_samples = 20000;

  /// Sample counts and bin grid used for a target of the given dimension.
  static EvaluationSpec for_dims(int dims) {
    EvaluationSpec e;
    if (dims == 2) {
      e.samples = 1000000;
      e.histogram = HistogramSpec::ring_2d();
    }
    return e;
  }
};

inline Json histogram_spec_to_json(const HistogramSpec& h) {
  Json j{{"dims", h.dims}, {"lo", Json::array()}, {"hi", Json::array()}, {"width", Json::array()}};
  for (int d = 0; d < h.dims; ++d) {
    j["lo"].push_back(h.lo[static_cast<std::size_t>(d)]);
    j["hi"].push_back(h.hi[static_cast<std::size_t>(d)]);
    j["width"].push_back(h.width[static_cast<std::size_t>(d)]);
  }
  return j;
}

inline HistogramSpec histogram_spec_from_json(const Json& j) {
  HistogramSpec h;
  h.dims = j.at("dims").get<int>();
  require(h.dims == 1 || h.dims == 2, "histogram: dims must be 1 or 2");
  for (int d = 0; d < h.dims; ++d) {
    const auto dd = static_cast<std::size_t>(d);
    h.lo[dd] = j.at("lo").at(dd).get<double>();
    h.hi[dd] = j.at("hi").at(dd).get<double>();
    h.width[dd] = j.at("width").at(dd).get<double>();
  }
  h.validate();
  return h;
}

inline Json evaluation_to_json(const EvaluationSpec& e) {
  return {{"samples", e.samples},
          {"histogram", histogram_spec_to_json(e.histogram)},
          {"k_sigma", e.k_sigma},
          {"q_accuracy_samples", e.q_accuracy_samples}};
}

inline EvaluationSpec evaluation_from_json(const Json& j, int dims) {
  EvaluationSpec e = EvaluationSpec::for_dims(dims);
  e.samples = j.value("samples", e.samples);
  if (j.contains("histogram")) e.histogram = histogram_spec_from_json(j.at("histogram"));
  e.k_sigma = j.value("k_sigma", e.k_sigma);
  e.q_accuracy_samples = j.value("q_accuracy_samples", e.q_accuracy_samples);
  require(e.samples >= 1, "evaluation: samples must be >= 1");
  require(e.k_sigma > 0.0, "evaluation: k_sigma must be positive");
  require(e.histogram.dims == dims, "evaluation: histogram dims differ from target dims");
  return e;
}

enum class SelectionRule { best, all };
enum class Metric { kl, chi_square };

inline std::string metric_name(Metric m) { return m == Metric::kl ? "kl" : "chi_square"; }

struct Selection {
  SelectionRule rule = SelectionRule::best;
  Metric metric = Metric::kl;
};

struct ExperimentPlan {
  std::string name = "plan";
  TrainConfig base;
  std::vector<std::string> algorithms{"dopanet"};
  std::vector<int> n_discriminators{5};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  EvaluationSpec evaluation;
  Selection selection;
  bool dump_samples = true;

  void validate() const {
    require(!algorithms.empty(), "plan: empty algorithm list");
    require(!n_discriminators.empty(), "plan: empty N list");
    require(!seeds.empty(), "plan: empty seed list");
    for (const auto& a : algorithms) parse_algorithm(a);
    for (int n : n_discriminators) require(n >= 1, "plan: N must be >= 1");
    base.target.validate();
    require(evaluation.histogram.dims == base.target.dims, "plan: histogram dims differ from target dims");
  }
};

/// Plan file:
///   {"name": ..., "base": {TrainConfig}, "sweep": {"algorithms": [...],
///    "n_discriminators": [...], "seeds": [...]}, "evaluation": {...},
///    "selection": {"rule": "best"|"all", "metric": "kl"|"chi_square"},
///    "dump_samples": true}
inline ExperimentPlan plan_from_json(const Json& j) {
  ExperimentPlan p;
  try {
    p.name = j.value("name", p.name);
    p.base = train_config_from_json(j.value("base", Json::object()));
    p.algorithms = {algorithm_label(p.base.algorithm, p.base.gman)};
    p.n_discriminators = {p.base.n_discriminators};
    if (j.contains("sweep")) {
      const Json& s = j.at("sweep");
      if (s.contains("algorithms")) p.algorithms = s.at("algorithms").get<std::vector<std::string>>();
      if (s.contains("n_discriminators")) p.n_discriminators = s.at("n_discriminators").get<std::vector<int>>();
      if (s.contains("seeds")) p.seeds = s.at("seeds").get<std::vector<std::uint64_t>>();
    }
    p.evaluation = evaluation_from_json(j.value("evaluation", Json::object()), p.base.target.dims);
    if (j.contains("selection")) {
      const Json& s = j.at("selection");
      const std::string rule = s.value("rule", std::string("best"));
      const std::string metric = s.value("metric", std::string("kl"));
      require(rule == "best" || rule == "all", "plan: selection rule must be best or all");
      require(metric == "kl" || metric == "chi_square", "plan: selection metric must be kl or chi_square");
      p.selection = {rule == "best" ? SelectionRule::best : SelectionRule::all,
                     metric == "kl" ? Metric::kl : Metric::chi_square};
    }
    p.dump_samples = j.value("dump_samples", p.dump_samples);
  } catch (const Json::exception& e) {
    throw ContractError(std::string("plan: ") + e.what());
  }
  p.validate();
  return p;
}

inline Json plan_to_json(const ExperimentPlan& p) {
  return {{"name", p.name},
          {"base", train_config_to_json(p.base)},
          {"sweep", {{"algorithms", p.algorithms}, {"n_discriminators", p.n_discriminators}, {"seeds", p.seeds}}},
          {"evaluation", evaluation_to_json(p.evaluation)},
          {"selection",
           {{"rule", p.selection.rule == SelectionRule::best ? "best" : "all"}, {"metric", metric_name(p.selection.metric)}}},
          {"dump_samples", p.dump_samples}};
}

inline Json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ContractError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// ---------------------------------------------------------------------------
// Metrics

struct RunMetrics {
  double kl = 0.0;
  double chi_square = 0.0;
  int covered_modes = 0;
  std::vector<double> mode_mass;
  std::vector<bool> oversampled;
  double unassigned = 0.0;
  std::vector<double> purity;
  double mean_purity = 0.0;
  std::optional<double> q_accuracy;  // DoPaNet only
  std::uint64_t samples = 0;
};

inline Json metrics_to_json(const RunMetrics& m) {
  Json j{{"kl", m.kl},
         {"chi_square", m.chi_square},
         {"covered_modes", m.covered_modes},
         {"mode_mass", m.mode_mass},
         {"oversampled", m.oversampled},
         {"unassigned", m.unassigned},
         {"purity", m.purity},
         {"mean_purity", m.mean_purity},
         {"samples", m.samples}};
  j["q_accuracy"] = m.q_accuracy ? Json(*m.q_accuracy) : Json(nullptr);
  return j;
}

inline RunMetrics metrics_from_json(const Json& j) {
  RunMetrics m;
  m.kl = j.at("kl").get<double>();
  m.chi_square = j.at("chi_square").get<double>();
  m.covered_modes = j.at("covered_modes").get<int>();
  m.mode_mass = j.at("mode_mass").get<std::vector<double>>();
  m.oversampled = j.at("oversampled").get<std::vector<bool>>();
  m.unassigned = j.at("unassigned").get<double>();
  m.purity = j.at("purity").get<std::vector<double>>();
  m.mean_purity = j.at("mean_purity").get<double>();
  if (!j.at("q_accuracy").is_null()) m.q_accuracy = j.at("q_accuracy").get<double>();
  m.samples = j.at("samples").get<std::uint64_t>();
  return m;
}

/// Everything derivable from the dumped real/generated samples alone.
inline RunMetrics metrics_from_samples(const Matrix& real, const Matrix& gen, std::span<const int> codes, int n_codes,
                                       const MixtureSpec& target, const EvaluationSpec& eval) {
  require(static_cast<Eigen::Index>(codes.size()) == gen.rows(), "metrics: one code per generated sample required");
  RunMetrics m;
  const Histogram hg = build_histogram(gen, eval.histogram);
  const Histogram hd = build_histogram(real, eval.histogram);
  m.kl = kl_divergence(hg, hd);
  m.chi_square = chi_square(hg, hd);
  const ModeCoverage cov = mode_coverage(gen, target, eval.k_sigma);
  m.covered_modes = cov.covered_count;
  m.mode_mass = cov.mass;
  m.oversampled = cov.oversampled;
  m.unassigned = cov.unassigned;
  const auto groups = group_by_index(codes, n_codes);
  std::vector<Matrix> by_code;
  for (const auto& g : groups)
    if (!g.empty()) by_code.push_back(gather_rows(gen, g));
  if (!by_code.empty()) {
    const ClusterPurity p = cluster_purity(by_code, target);
    m.purity = p.purity;
    m.mean_purity = p.mean;
  }
  m.samples = static_cast<std::uint64_t>(gen.rows());
  return m;
}

/// Fraction of fresh generations whose argmax-Q route equals their code.
inline double classifier_accuracy(const TrainState& s, int n, Rng& rng) {
  require(s.classifier.has_value(), "classifier_accuracy: state has no classifier");
  std::vector<int> codes;
  const Matrix gen = sample_generator(s, n, rng, &codes);
  const auto routes = route_argmax(classify(*s.classifier, s.scaler.to_net(gen)));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < codes.size(); ++i) hits += routes[i] == codes[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(codes.size());
}

struct EvaluationSamples {
  Matrix real;
  Matrix gen;
  std::vector<int> codes;
};

/// Evaluation draws come from dedicated streams of the run seed.
inline EvaluationSamples draw_evaluation_samples(const TrainState& s, const EvaluationSpec& eval) {
  Rng gen_rng = make_stream(s.config.seed, Stream::evaluation);
  Rng real_rng = make_stream(s.config.seed ^ 0x5eed5eedULL, Stream::evaluation);
  EvaluationSamples out;
  out.gen = sample_generator(s, eval.samples, gen_rng, &out.codes);
  out.real = sample_mixture(s.config.target, eval.samples, real_rng);
  return out;
}

inline RunMetrics evaluate_state(const TrainState& s, const EvaluationSpec& eval, const EvaluationSamples& samples) {
  RunMetrics m = metrics_from_samples(samples.real, samples.gen, samples.codes, s.generator.n_codes, s.config.target, eval);
  if (s.classifier) {
    Rng q_rng = make_stream(s.config.seed ^ 0x0a11ce55ULL, Stream::evaluation);
    m.q_accuracy = classifier_accuracy(s, eval.q_accuracy_samples, q_rng);
  }
  return m;
}

// ---------------------------------------------------------------------------
// CSV and parameter files

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_samples_csv(const fs::path& path, const Matrix& samples, const std::vector<int>* codes) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << (samples.cols() == 1 ? "x" : "x,y") << (codes ? ",code" : "") << '\n';
  std::string line;
  for (Eigen::Index r = 0; r < samples.rows(); ++r) {
    line.clear();
    for (Eigen::Index c = 0; c < samples.cols(); ++c) {
      if (c) line += ',';
      line += format_double(samples(r, c));
    }
    if (codes) {
      line += ',';
      line += std::to_string((*codes)[static_cast<std::size_t>(r)]);
    }
    line += '\n';
    out << line;
  }
}

struct SampleTable {
  Matrix samples;
  std::vector<int> codes;
};

/// Reads a samples CSV; a trailing "code" column goes into `codes`.
inline SampleTable read_samples_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  const int columns = static_cast<int>(std::count(header.begin(), header.end(), ',')) + 1;
  const bool has_code = header.size() >= 4 && header.substr(header.size() - 4) == "code";
  const int dims = has_code ? columns - 1 : columns;
  require(dims == 1 || dims == 2, "samples CSV: unexpected header '" + header + "'");
  std::vector<double> values;
  SampleTable t;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const char* p = line.c_str();
    for (int c = 0; c < dims; ++c) {
      char* end = nullptr;
      values.push_back(std::strtod(p, &end));
      require(end != p, "samples CSV: malformed row in " + path.string());
      p = (*end == ',') ? end + 1 : end;
    }
    if (has_code) t.codes.push_back(std::atoi(p));
  }
  const auto rows = static_cast<Eigen::Index>(values.size() / static_cast<std::size_t>(dims));
  t.samples = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(values.data(), rows, dims);
  return t;
}

inline void write_log_csv(const fs::path& path, const TrainLog& log, int n) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "iteration,generator_loss,classifier_loss";
  for (int i = 0; i < n; ++i) out << ",d_objective_" << i;
  for (int i = 0; i < n; ++i) out << ",real_size_" << i;
  for (int i = 0; i < n; ++i) out << ",fake_size_" << i;
  out << '\n';
  for (const auto& r : log.records) {
    out << r.iteration << ',' << format_double(r.generator_loss) << ',' << format_double(r.classifier_loss);
    for (double v : r.discriminator_objective) out << ',' << format_double(v);
    for (int v : r.real_sizes) out << ',' << v;
    for (int v : r.fake_sizes) out << ',' << v;
    out << '\n';
  }
}

namespace detail {

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw ContractError("params: truncated file");
  return v;
}

inline void put_mlp(std::ostream& out, const std::string& name, const Mlp& net) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(net.output));
  put<double>(out, net.leaky_slope);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& l : net.layers) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.out_dim()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.in_dim()));
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) put<double>(out, l.weights(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) put<double>(out, l.bias(r));
  }
}

inline std::pair<std::string, Mlp> get_mlp(std::istream& in) {
  const auto name_len = get<std::uint32_t>(in);
  require(name_len < 256, "params: bad agent name");
  std::string name(name_len, '\0');
  in.read(name.data(), name_len);
  Mlp net;
  const auto act = get<std::uint8_t>(in);
  require(act <= 2, "params: bad output activation");
  net.output = static_cast<OutputActivation>(act);
  net.leaky_slope = get<double>(in);
  const auto layers = get<std::uint32_t>(in);
  require(layers >= 1 && layers < 64, "params: bad layer count");
  for (std::uint32_t i = 0; i < layers; ++i) {
    const auto out_dim = get<std::uint32_t>(in);
    const auto in_dim = get<std::uint32_t>(in);
    require(out_dim >= 1 && in_dim >= 1 && out_dim < (1u << 20) && in_dim < (1u << 20), "params: bad layer shape");
    DenseLayer l{Matrix(out_dim, in_dim), Vector(out_dim)};
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = get<double>(in);
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = get<double>(in);
    net.layers.push_back(std::move(l));
  }
  net.validate();
  return {name, std::move(net)};
}

}  // namespace detail

inline constexpr char kParamsMagic[8] = {'D', 'P', 'N', 'P', 'A', 'R', 'M', '1'};

/// Binary snapshot, little-endian: magic "DPNPARM1", u32 agent count, then
/// per agent: u32 name length, name, u8 output activation, f64 leaky slope,
/// u32 layer count, and per layer u32 out, u32 in, out*in f64 weights
/// (row-major), out f64 biases. Agents: "generator", "discriminator_<i>",
/// and "classifier" when present.
inline void save_params(const fs::path& path, const TrainState& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kParamsMagic, sizeof kParamsMagic);
  const auto agents = 1 + s.bank.size() + (s.classifier ? 1 : 0);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(agents));
  detail::put_mlp(out, "generator", s.generator.net);
  for (int i = 0; i < s.bank.size(); ++i)
    detail::put_mlp(out, "discriminator_" + std::to_string(i), s.bank.nets[static_cast<std::size_t>(i)]);
  if (s.classifier) detail::put_mlp(out, "classifier", s.classifier->net);
}

/// Restores agents saved by save_params into a state built from the same config.
inline void load_params(const fs::path& path, TrainState& s) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("cannot open " + path.string());
  char magic[sizeof kParamsMagic];
  in.read(magic, sizeof magic);
  require(in && std::memcmp(magic, kParamsMagic, sizeof magic) == 0, "params: bad magic");
  const auto agents = detail::get<std::uint32_t>(in);
  auto same_shape = [](const Mlp& a, const Mlp& b) {
    if (a.layers.size() != b.layers.size() || a.output != b.output) return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l)
      if (a.layers[l].weights.rows() != b.layers[l].weights.rows() ||
          a.layers[l].weights.cols() != b.layers[l].weights.cols())
        return false;
    return true;
  };
  for (std::uint32_t k = 0; k < agents; ++k) {
    auto [name, net] = detail::get_mlp(in);
    Mlp* slot = nullptr;
    if (name == "generator") {
      slot = &s.generator.net;
    } else if (name == "classifier" && s.classifier) {
      slot = &s.classifier->net;
    } else if (name.rfind("discriminator_", 0) == 0) {
      const int i = std::stoi(name.substr(14));
      require(i >= 0 && i < s.bank.size(), "params: discriminator index out of range");
      slot = &s.bank.nets[static_cast<std::size_t>(i)];
    }
    require(slot != nullptr, "params: unexpected agent '" + name + "'");
    require(same_shape(*slot, net), "params: shape of '" + name + "' does not match the config");
    *slot = std::move(net);
  }
}

// ---------------------------------------------------------------------------
// Runs and artifacts

struct RunArtifact {
  std::string run_id;
  TrainConfig config;  // resolved
  EvaluationSpec evaluation;
  std::string algorithm;
  bool ok = false;
  std::string error;
  RunMetrics metrics;
  TrainLog log;
  double wall_seconds = 0.0;
  std::optional<fs::path> directory;
};

inline std::string run_id_for(const TrainConfig& c) {
  std::string label = algorithm_label(c.algorithm, c.gman);
  std::replace(label.begin(), label.end(), ':', '-');
  return label + "_N" + std::to_string(c.n_discriminators) + "_s" + std::to_string(c.seed);
}

inline Json artifact_config_json(const RunArtifact& a) {
  return {{"run_id", a.run_id},
          {"algorithm", a.algorithm},
          {"train", train_config_to_json(a.config)},
          {"evaluation", evaluation_to_json(a.evaluation)}};
}

struct CompletedRun {
  RunArtifact artifact;
  std::optional<TrainState> state;
  std::optional<EvaluationSamples> samples;
};

/// Trains one config, evaluates it and, when `out_dir` is given, writes the
/// artifact directory. Training failures are captured in the artifact.
inline CompletedRun execute_run(const TrainConfig& raw, const EvaluationSpec& eval, const std::optional<fs::path>& out_dir,
                                bool dump_samples = true, bool keep_state = false) {
  CompletedRun done;
  RunArtifact& a = done.artifact;
  a.config = raw.resolved();
  a.evaluation = eval;
  a.algorithm = algorithm_label(a.config.algorithm, a.config.gman);
  a.run_id = run_id_for(a.config);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    TrainResult result = train(a.config);
    a.log = std::move(result.log);
    EvaluationSamples samples = draw_evaluation_samples(result.state, eval);
    a.metrics = evaluate_state(result.state, eval, samples);
    a.ok = true;
    if (out_dir) {
      const fs::path dir = *out_dir / a.run_id;
      fs::create_directories(dir);
      a.directory = dir;
      write_log_csv(dir / "log.csv", a.log, result.state.n_discriminators());
      save_params(dir / "params.bin", result.state);
      if (dump_samples) {
        write_samples_csv(dir / "samples_real.csv", samples.real, nullptr);
        write_samples_csv(dir / "samples_gen.csv", samples.gen, &samples.codes);
      }
    }
    if (keep_state) {
      done.state = std::move(result.state);
      done.samples = std::move(samples);
    }
  } catch (const std::exception& e) {
    a.ok = false;
    a.error = e.what();
  }
  a.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (out_dir) {
    const fs::path dir = *out_dir / a.run_id;
    fs::create_directories(dir);
    a.directory = dir;
    write_text_file(dir / "config.json", artifact_config_json(a).dump(2) + "\n");
    Json metrics = a.ok ? metrics_to_json(a.metrics) : Json::object();
    metrics["ok"] = a.ok;
    metrics["error"] = a.error;
    metrics["wall_seconds"] = a.wall_seconds;
    write_text_file(dir / "metrics.json", metrics.dump(2) + "\n");
  }
  return done;
}

inline RunArtifact run_single(const TrainConfig& config, const EvaluationSpec& eval,
                              const std::optional<fs::path>& out_dir = std::nullopt, bool dump_samples = true) {
  return execute_run(config, eval, out_dir, dump_samples).artifact;
}

/// Artifact metadata plus metrics as written to disk.
inline RunArtifact load_artifact(const fs::path& dir) {
  const Json cfg = read_json_file(dir / "config.json");
  const Json met = read_json_file(dir / "metrics.json");
  RunArtifact a;
  a.run_id = cfg.at("run_id").get<std::string>();
  a.algorithm = cfg.at("algorithm").get<std::string>();
  a.config = train_config_from_json(cfg.at("train")).resolved();
  a.evaluation = evaluation_from_json(cfg.at("evaluation"), a.config.target.dims);
  a.ok = met.value("ok", false);
  a.error = met.value("error", std::string());
  a.wall_seconds = met.value("wall_seconds", 0.0);
  if (a.ok) a.metrics = metrics_from_json(met);
  a.directory = dir;
  return a;
}

/// Rebuilds the trained agents of an artifact from config.json + params.bin.
inline TrainState load_state(const fs::path& dir) {
  const RunArtifact a = load_artifact(dir);
  TrainState s = init_state(a.config);
  load_params(dir / "params.bin", s);
  return s;
}

/// Recomputes metrics from an artifact's dumped samples (and params.bin for
/// the classifier accuracy).
inline RunMetrics recompute_metrics(const fs::path& dir) {
  const RunArtifact a = load_artifact(dir);
  const SampleTable real = read_samples_csv(dir / "samples_real.csv");
  const SampleTable gen = read_samples_csv(dir / "samples_gen.csv");
  const int n_codes = a.config.code_count();
  RunMetrics m = metrics_from_samples(real.samples, gen.samples, gen.codes, n_codes, a.config.target, a.evaluation);
  if (a.config.algorithm == Algorithm::dopanet && fs::exists(dir / "params.bin")) {
    const TrainState s = load_state(dir);
    Rng q_rng = make_stream(s.config.seed ^ 0x0a11ce55ULL, Stream::evaluation);
    m.q_accuracy = classifier_accuracy(s, a.evaluation.q_accuracy_samples, q_rng);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Summary tables

struct TableRow {
  std::string algorithm;
  int n_discriminators = 0;
  int runs = 0;
  int successful = 0;
  std::vector<double> values;   // per successful run, in seed order
  std::vector<std::string> run_ids;
  double best = 0.0;
  std::string best_run;
  double mean = 0.0;
  double stddev = 0.0;
};

struct SummaryTable {
  std::string metric;
  SelectionRule rule = SelectionRule::best;
  std::vector<TableRow> rows;

  bool all_groups_succeeded() const {
    return std::all_of(rows.begin(), rows.end(), [](const TableRow& r) { return r.successful > 0; });
  }
};

inline std::string format_mean_std(double mean, double stddev, int precision = 2) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << mean << "±" << stddev;
  return os.str();
}

inline double metric_value(const RunMetrics& m, Metric metric) { return metric == Metric::kl ? m.kl : m.chi_square; }

/// Groups artifacts by (algorithm, N); lower metric values are better.
/// Groups are ordered by first appearance.
inline SummaryTable emit_table(const std::vector<RunArtifact>& artifacts, Metric metric, SelectionRule rule) {
  SummaryTable t{metric_name(metric), rule, {}};
  std::map<std::pair<std::string, int>, std::size_t> index;
  std::map<std::pair<std::string, int>, HistogramSpec> specs;
  for (const auto& a : artifacts) {
    const auto key = std::make_pair(a.algorithm, a.config.n_discriminators);
    auto [it, inserted] = index.emplace(key, t.rows.size());
    if (inserted) {
      TableRow row;
      row.algorithm = a.algorithm;
      row.n_discriminators = a.config.n_discriminators;
      t.rows.push_back(row);
      specs.emplace(key, a.evaluation.histogram);
    } else {
      require(specs.at(key) == a.evaluation.histogram,
              "emit_table: runs in group " + a.algorithm + "/N=" + std::to_string(key.second) +
                  " use different histogram specs");
    }
    TableRow& row = t.rows[it->second];
    ++row.runs;
    if (!a.ok) continue;
    ++row.successful;
    row.values.push_back(metric_value(a.metrics, metric));
    row.run_ids.push_back(a.run_id);
  }
  for (auto& row : t.rows) {
    if (row.values.empty()) continue;
    const auto best = std::min_element(row.values.begin(), row.values.end());
    row.best = *best;
    row.best_run = row.run_ids[static_cast<std::size_t>(best - row.values.begin())];
    double sum = 0.0;
    for (double v : row.values) sum += v;
    row.mean = sum / static_cast<double>(row.values.size());
    double var = 0.0;
    for (double v : row.values) var += (v - row.mean) * (v - row.mean);
    row.stddev = row.values.size() > 1 ? std::sqrt(var / static_cast<double>(row.values.size() - 1)) : 0.0;
  }
  return t;
}

inline std::string table_to_text(const SummaryTable& t) {
  std::ostringstream os;
  os << std::left << std::setw(22) << "algorithm" << std::setw(4) << "N" << std::setw(8) << "ok/runs" << std::setw(14)
     << ("best " + t.metric) << "mean±std" << (t.rule == SelectionRule::all ? "   values" : "") << '\n';
  for (const auto& r : t.rows) {
    os << std::left << std::setw(22) << r.algorithm << std::setw(4) << r.n_discriminators << std::setw(8)
       << (std::to_string(r.successful) + "/" + std::to_string(r.runs));
    if (r.successful == 0) {
      os << "FAILED\n";
      continue;
    }
    std::ostringstream best;
    best << std::setprecision(4) << r.best;
    os << std::setw(14) << best.str() << format_mean_std(r.mean, r.stddev);
    if (t.rule == SelectionRule::all) {
      os << "  ";
      for (double v : r.values) os << ' ' << std::setprecision(4) << v;
    }
    os << '\n';
  }
  return os.str();
}

inline Json table_to_json(const SummaryTable& t) {
  Json rows = Json::array();
  for (const auto& r : t.rows) {
    Json row{{"algorithm", r.algorithm}, {"n_discriminators", r.n_discriminators}, {"runs", r.runs},
             {"successful", r.successful}, {"values", r.values}, {"run_ids", r.run_ids}};
    if (r.successful > 0) {
      row["best"] = r.best;
      row["best_run"] = r.best_run;
      row["mean"] = r.mean;
      row["std"] = r.stddev;
    }
    rows.push_back(row);
  }
  return {{"metric", t.metric}, {"rule", t.rule == SelectionRule::best ? "best" : "all"}, {"rows", rows}};
}

// ---------------------------------------------------------------------------
// Plans

/// One config per (algorithm, N, seed) cell, in that nesting order.
inline std::vector<TrainConfig> expand_plan(const ExperimentPlan& plan) {
  plan.validate();
  std::vector<TrainConfig> cells;
  for (const auto& alg : plan.algorithms) {
    const auto [algorithm, variant] = parse_algorithm(alg);
    for (int n : plan.n_discriminators) {
      for (auto seed : plan.seeds) {
        TrainConfig c = plan.base;
        c.algorithm = algorithm;
        c.gman = variant;
        c.n_discriminators = algorithm == Algorithm::standard_gan ? 1 : n;
        c.codes.reset();
        c.seed = seed;
        c = c.resolved();
        c.validate();
        cells.push_back(c);
      }
    }
  }
  // A standard GAN ignores N; keep one cell per seed.
  std::vector<TrainConfig> unique;
  std::vector<std::string> seen;
  for (auto& c : cells) {
    const std::string id = run_id_for(c);
    if (std::find(seen.begin(), seen.end(), id) != seen.end()) continue;
    seen.push_back(id);
    unique.push_back(std::move(c));
  }
  return unique;
}

struct PlanResult {
  std::vector<RunArtifact> artifacts;  // in expand_plan order
  SummaryTable table;
};

/// Runs every cell (up to `jobs` in parallel, each single-threaded) and
/// summarizes. With `out_dir`, writes one directory per run plus
/// plan.json, summary.txt and summary.json.
inline PlanResult run_plan(const ExperimentPlan& plan, int jobs = 1, const std::optional<fs::path>& out_dir = std::nullopt,
                           const std::function<void(const RunArtifact&)>& on_done = {}) {
  const auto cells = expand_plan(plan);
  std::vector<RunArtifact> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex report;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      results[i] = run_single(cells[i], plan.evaluation, out_dir, plan.dump_samples);
      if (on_done) {
        std::lock_guard<std::mutex> lock(report);
        on_done(results[i]);
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(cells.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  PlanResult r{std::move(results), {}};
  r.table = emit_table(r.artifacts, plan.selection.metric, plan.selection.rule);
  if (out_dir) {
    fs::create_directories(*out_dir);
    write_text_file(*out_dir / "plan.json", plan_to_json(plan).dump(2) + "\n");
    write_text_file(*out_dir / "summary.txt", table_to_text(r.table));
    write_text_file(*out_dir / "summary.json", table_to_json(r.table).dump(2) + "\n");
  }
  return r;
}

// ---------------------------------------------------------------------------
// Diagnostics

struct DiagnosticsOptions {
  int samples_per_code = 20000;
  FieldGridSpec field{-2.0, 2.0, 0.2};
  FieldGridSpec heatmap{-1.5, 1.5, 0.05};
  std::uint64_t seed_salt = 0xd1a6ULL;
};

/// Writes figure-ready grids for a trained (or freshly initialized) state:
///   1D: hist_code_<k>.csv and hist_all.csv (bin_left,count over the
///       evaluation grid), target_pdf.csv (x,pdf at bin centers),
///       q_curves.csv (x,p_0..p_{N-1}; DoPaNet only), coverage.json.
///   2D: samples_code.csv (x,y,code), field_routed.csv or
///       field_per_discriminator.csv (x,y,disc,gx,gy), heatmap_scores.csv
///       and, for DoPaNet, heatmap_weighted.csv (x,y,d_0..d_{N-1}),
///       coverage.json.
/// Returns the list of files written.
inline std::vector<fs::path> dump_diagnostics(const TrainState& s, const EvaluationSpec& eval, const fs::path& dir,
                                              const DiagnosticsOptions& opt = {}) {
  fs::create_directories(dir);
  std::vector<fs::path> written;
  Rng rng = make_stream(s.config.seed ^ opt.seed_salt, Stream::evaluation);
  const int n_codes = s.generator.n_codes;
  std::vector<Matrix> per_code;
  for (int k = 0; k < n_codes; ++k) per_code.push_back(sample_generator_code(s, k, opt.samples_per_code, rng));
  Matrix all(static_cast<Eigen::Index>(n_codes) * opt.samples_per_code, s.generator.data_dim());
  for (int k = 0; k < n_codes; ++k) all.middleRows(static_cast<Eigen::Index>(k) * opt.samples_per_code, opt.samples_per_code) = per_code[static_cast<std::size_t>(k)];

  const ModeCoverage cov = mode_coverage(all, s.config.target, eval.k_sigma);
  Json coverage{{"mode_mass", cov.mass}, {"covered", cov.covered}, {"oversampled", cov.oversampled},
                {"unassigned", cov.unassigned}, {"covered_modes", cov.covered_count}};
  write_text_file(dir / "coverage.json", coverage.dump(2) + "\n");
  written.push_back(dir / "coverage.json");

  if (s.config.target.dims == 1) {
    const HistogramSpec& hs = eval.histogram;
    auto write_hist = [&](const fs::path& path, const Histogram& h) {
      std::ofstream out(path);
      out << "bin_left,count\n";
      for (int b = 0; b < hs.bins(0); ++b) out << format_double(hs.edge(0, b)) << ',' << h.counts[static_cast<std::size_t>(b)] << '\n';
      written.push_back(path);
    };
    for (int k = 0; k < n_codes; ++k)
      write_hist(dir / ("hist_code_" + std::to_string(k) + ".csv"), build_histogram(per_code[static_cast<std::size_t>(k)], hs));
    write_hist(dir / "hist_all.csv", build_histogram(all, hs));

    Matrix centers(hs.bins(0), 1);
    for (int b = 0; b < hs.bins(0); ++b) centers(b, 0) = hs.edge(0, b) + 0.5 * hs.width[0];
    {
      std::ofstream out(dir / "target_pdf.csv");
      out << "x,pdf\n";
      for (Eigen::Index b = 0; b < centers.rows(); ++b)
        out << format_double(centers(b, 0)) << ',' << format_double(mixture_pdf(s.config.target, centers(b, 0))) << '\n';
      written.push_back(dir / "target_pdf.csv");
    }
    if (s.classifier) {
      const Matrix probs = classify(*s.classifier, s.scaler.to_net(centers));
      std::ofstream out(dir / "q_curves.csv");
      out << 'x';
      for (int k = 0; k < probs.cols(); ++k) out << ",p_" << k;
      out << '\n';
      for (Eigen::Index b = 0; b < centers.rows(); ++b) {
        out << format_double(centers(b, 0));
        for (Eigen::Index k = 0; k < probs.cols(); ++k) out << ',' << format_double(probs(b, k));
        out << '\n';
      }
      written.push_back(dir / "q_curves.csv");
    }
    return written;
  }

  {
    std::ofstream out(dir / "samples_code.csv");
    out << "x,y,code\n";
    for (int k = 0; k < n_codes; ++k) {
      const Matrix& m = per_code[static_cast<std::size_t>(k)];
      for (Eigen::Index r = 0; r < m.rows(); ++r) out << format_double(m(r, 0)) << ',' << format_double(m(r, 1)) << ',' << k << '\n';
    }
    written.push_back(dir / "samples_code.csv");
  }
  const Classifier* q = s.classifier ? &*s.classifier : nullptr;
  const FieldMode mode = q ? FieldMode::routed : FieldMode::per_discriminator;
  const FieldGrid field = gradient_field(s.bank, q, s.scaler, opt.field, mode);
  {
    const fs::path path = dir / (q ? "field_routed.csv" : "field_per_discriminator.csv");
    std::ofstream out(path);
    out << "x,y,disc,gx,gy\n";
    for (Eigen::Index p = 0; p < field.points.rows(); ++p) {
      for (int i = 0; i < static_cast<int>(field.vectors.size()); ++i) {
        if (mode == FieldMode::routed && field.route[static_cast<std::size_t>(p)] != i) continue;
        const Matrix& v = field.vectors[static_cast<std::size_t>(i)];
        out << format_double(field.points(p, 0)) << ',' << format_double(field.points(p, 1)) << ',' << i << ','
            << format_double(v(p, 0)) << ',' << format_double(v(p, 1)) << '\n';
      }
    }
    written.push_back(path);
  }
  const HeatmapGrid heat = score_heatmap(s.bank, q, s.scaler, opt.heatmap);
  auto write_grid = [&](const fs::path& path, const std::vector<Vector>& cols) {
    std::ofstream out(path);
    out << "x,y";
    for (std::size_t i = 0; i < cols.size(); ++i) out << ",d_" << i;
    out << '\n';
    for (Eigen::Index p = 0; p < heat.points.rows(); ++p) {
      out << format_double(heat.points(p, 0)) << ',' << format_double(heat.points(p, 1));
      for (const auto& c : cols) out << ',' << format_double(c(p));
      out << '\n';
    }
    written.push_back(path);
  };
  write_grid(dir / "heatmap_scores.csv", heat.scores);
  if (q) write_grid(dir / "heatmap_weighted.csv", heat.weighted);
  return written;
}

}  // namespace dopanet
