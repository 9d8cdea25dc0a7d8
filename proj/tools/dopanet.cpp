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


// Command-line front end: train, plan, eval, theory, diag.
// Exit codes: 0 success, 1 invalid input, 2 run failure.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "dopanet.hpp"

namespace {

using namespace dopanet;

constexpr int kExitInvalid = 1;
constexpr int kExitFailure = 2;

std::optional<fs::path> out_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

int cmd_train(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out) {
  TrainConfig c;
  if (!config.empty()) c = train_config_from_json(read_json_file(config));
  if (seed) c.seed = *seed;
  c = c.resolved();
  c.validate();
  const EvaluationSpec eval = EvaluationSpec::for_dims(c.target.dims);
  const RunArtifact a = run_single(c, eval, out_path(out));
  if (!a.ok) {
    std::cerr << "run " << a.run_id << " failed: " << a.error << '\n';
    return kExitFailure;
  }
  std::cout << metrics_to_json(a.metrics).dump(2) << '\n';
  return 0;
}

int cmd_plan(const std::string& config, std::optional<std::uint64_t> seed, std::optional<int> seed_count, int jobs,
             const std::string& out) {
  ExperimentPlan p = plan_from_json(read_json_file(config));
  if (seed_count) {
    p.seeds.clear();
    for (int i = 1; i <= *seed_count; ++i) p.seeds.push_back(static_cast<std::uint64_t>(i));
  }
  if (seed) p.seeds = {*seed};
  const PlanResult r = run_plan(p, jobs, out_path(out), [](const RunArtifact& a) {
    std::cerr << (a.ok ? "done   " : "FAILED ") << a.run_id;
    if (a.ok) std::cerr << "  kl=" << a.metrics.kl;
    else std::cerr << "  " << a.error;
    std::cerr << '\n';
  });
  std::cout << table_to_text(r.table);
  return r.table.all_groups_succeeded() ? 0 : kExitFailure;
}

int cmd_eval(const std::string& artifact) {
  const RunMetrics m = recompute_metrics(artifact);
  std::cout << metrics_to_json(m).dump(2) << '\n';
  return 0;
}

int cmd_theory(int n_parts, const std::string& out) {
  const MixtureSpec target = make_five_mode_1d_spec();
  const DiscretizedPartition p = discretize_mixture(target, n_parts);
  double min_d = 1.0, max_d = 0.0;
  for (int i = 0; i < p.n_parts; ++i)
    for (Eigen::Index c = 0; c < p.cells(); ++c) {
      if (p.labels[static_cast<std::size_t>(c)] != i || p.data_density(c) == 0.0) continue;
      const double d = optimal_discriminator(p, i, c);
      min_d = std::min(min_d, d);
      max_d = std::max(max_d, d);
    }
  std::printf("N=%d cells=%lld\n", n_parts, static_cast<long long>(p.cells()));
  std::printf("optimal D on support: min=%.17g max=%.17g\n", min_d, max_d);
  std::printf("game value: %.17g (-log 4 = %.17g)\n", minimax_value(p), -std::log(4.0));
  std::printf("reconstruction KL: %.3g\n", reconstruction_kl(p));
  if (!out.empty()) {
    fs::create_directories(out);
    const Json j{{"n_parts", n_parts},          {"cells", p.cells()},
                 {"optimal_d_min", min_d},      {"optimal_d_max", max_d},
                 {"game_value", minimax_value(p)}, {"minus_log_4", -std::log(4.0)},
                 {"reconstruction_kl", reconstruction_kl(p)}};
    write_text_file(fs::path(out) / "theory.json", j.dump(2) + "\n");
  }
  return 0;
}

int cmd_diag(const std::string& artifact, const std::string& out) {
  const fs::path dir(artifact);
  const RunArtifact a = load_artifact(dir);
  const TrainState s = load_state(dir);
  const fs::path target = out.empty() ? dir / "diagnostics" : fs::path(out);
  for (const auto& f : dump_diagnostics(s, a.evaluation, target)) std::cout << f.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-discriminator GAN training with learned data partitioning"};
  app.require_subcommand(1);

  std::string config, out, artifact;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  int n_parts = 5;
  std::optional<int> seed_count;

  auto* train = app.add_subcommand("train", "train one config and print its metrics");
  train->add_option("--config", config, "training config JSON");
  train->add_option("--seed", seed, "override the seed");
  train->add_option("--out", out, "artifact root directory");

  auto* plan = app.add_subcommand("plan", "run a sweep plan and print the summary table");
  plan->add_option("--config", config, "plan JSON")->required();
  plan->add_option("--seed", seed, "run only this seed");
  plan->add_option("--seeds", seed_count, "replace the seed list with 1..N")->check(CLI::Range(1, 1000));
  plan->add_option("--jobs", jobs, "parallel runs")->check(CLI::PositiveNumber);
  plan->add_option("--out", out, "artifact root directory");

  auto* eval = app.add_subcommand("eval", "recompute metrics from an artifact directory");
  eval->add_option("--artifact", artifact, "run directory")->required();

  auto* theory = app.add_subcommand("theory", "optimal discriminators and game value on the 1D target");
  theory->add_option("-n,--parts", n_parts, "number of partitions")->check(CLI::Range(1, 64));
  theory->add_option("--out", out, "write theory.json here");

  auto* diag = app.add_subcommand("diag", "write diagnostic grids for an artifact");
  diag->add_option("--artifact", artifact, "run directory")->required();
  diag->add_option("--out", out, "output directory (default <artifact>/diagnostics)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInvalid;
  }

  try {
    if (*train) return cmd_train(config, seed, out);
    if (*plan) return cmd_plan(config, seed, seed_count, jobs, out);
    if (*eval) return cmd_eval(artifact);
    if (*theory) return cmd_theory(n_parts, out);
    if (*diag) return cmd_diag(artifact, out);
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitInvalid;
}
