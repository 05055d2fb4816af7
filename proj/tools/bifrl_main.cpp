// Command-line entry point: train, eval, theory validate, sweep.
// Exit codes: 0 success, 1 configuration error, 2 runtime training
// error, 3 theory-validation violation.

#include <cstdio>
#include <fstream>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bifrl/checkpoint.hpp"
#include "bifrl/config.hpp"
#include "bifrl/kernels.hpp"
#include "bifrl/orchestrator.hpp"
#include "bifrl/theory.hpp"

using namespace bifrl;

namespace {

void apply_kernel_choice(const std::string& kernels) {
  if (kernels == "scalar") kern::force_backend(kern::Backend::Scalar);
  else if (kernels == "avx2") kern::force_backend(kern::Backend::Avx2);
  else if (!kernels.empty() && kernels != "auto")
    throw ConfigError("--kernels must be auto|scalar|avx2");
}

int cmd_train(const std::string& config_path, int64_t seed,
              const std::string& out, const std::string& env_override,
              const std::string& resume, const std::string& kernels) {
  apply_kernel_choice(kernels);
  RunConfig cfg =
      config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
  if (seed >= 0) cfg.seed = static_cast<uint64_t>(seed);
  if (!env_override.empty()) cfg.env = env_override;
  cfg.validate();

  TrainLoop loop(cfg, out);
  if (!resume.empty()) loop.load_checkpoint(resume);
  loop.run();
  const auto& m = loop.metrics();
  if (!m.empty())
    std::printf("done: epochs=%d env_steps=%lld final_return=%.2f\n",
                loop.epoch(), static_cast<long long>(loop.env_steps()),
                m.back().eval_return_mean);
  return 0;
}

int cmd_eval(const std::string& ckpt, int episodes, int64_t seed,
             const std::string& kernels) {
  apply_kernel_choice(kernels);
  RunConfig cfg = RunConfig::from_text(checkpoint_config(ckpt));
  TrainLoop loop(cfg, "");
  loop.load_checkpoint(ckpt);
  auto env = make_env(cfg.env);
  Rng rng = Rng::seeded(seed >= 0 ? static_cast<uint64_t>(seed) : cfg.seed);
  const auto [mean, sd] = evaluate_policy(loop.agent(), *env, episodes, rng);
  std::printf("eval: episodes=%d return_mean=%.4f return_std=%.4f\n", episodes,
              mean, sd);
  return 0;
}

int cmd_theory_validate(int instances, int64_t seed, const std::string& out) {
  Rng rng = Rng::seeded(static_cast<uint64_t>(seed));
  BoundValidationReport rep = validate_bound(rng, instances);
  std::printf(
      "theory validate: instances=%d violations=%d median_margin=%.6f\n",
      rep.instances, rep.violations, rep.median_margin);
  if (!out.empty()) {
    std::ofstream f(out);
    f << "instance,bound,discrepancy,margin\n";
    for (size_t i = 0; i < rep.margins.size(); ++i)
      f << i << ',' << rep.bounds[i] << ',' << rep.discrepancies[i] << ','
        << rep.margins[i] << '\n';
  }
  if (rep.violations > 0) {
    std::printf("FAIL: %s\n", rep.worst_case.c_str());
    return 3;
  }
  std::printf("PASS: zero bound violations\n");
  return 0;
}

int cmd_sweep(const std::string& param, const std::string& values_csv,
              const std::string& config_path, int seeds,
              const std::string& out, double threshold,
              const std::string& kernels) {
  apply_kernel_choice(kernels);
  if (param != "K" && param != "kb")
    throw ConfigError("sweep --param must be K or kb");
  std::vector<double> values;
  std::stringstream ss(values_csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) values.push_back(std::stod(tok));
  if (values.empty()) throw ConfigError("sweep needs at least one value");

  RunConfig base =
      config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
  std::filesystem::create_directories(out);
  std::ofstream summary(out + "/summary.csv");
  if (!summary) throw ConfigError("sweep: cannot write to " + out);
  summary << "param,value,seed,steps_to_threshold,final_return\n";

  for (double v : values) {
    for (int s = 0; s < seeds; ++s) {
      RunConfig cfg = base;
      cfg.seed = static_cast<uint64_t>(s);
      if (param == "K") {
        cfg.top_k_percent = v;
      } else {
        cfg.k_b = ScheduleSpec::constant(v);
        cfg.enforce_kb_lt_kf = false;
      }
      cfg.validate();
      std::ostringstream dir;
      dir << out << "/" << param << "_" << v << "/seed_" << s;
      TrainLoop loop(cfg, dir.str());
      loop.run();
      summary << param << ',' << v << ',' << s << ','
              << loop.steps_to_threshold(threshold) << ','
              << loop.metrics().back().eval_return_mean << '\n';
      summary.flush();
      std::printf("sweep %s=%g seed=%d done\n", param.c_str(), v, s);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bi-directional model-based RL trainer"};
  app.require_subcommand(1);

  std::string kernels = "auto";
  app.add_option("--kernels", kernels, "kernel backend: auto|scalar|avx2");

  auto* train = app.add_subcommand("train", "run the training loop");
  std::string t_config, t_out = "out", t_env, t_resume;
  int64_t t_seed = -1;
  train->add_option("--config", t_config, "config file (key = value)");
  train->add_option("--seed", t_seed, "seed override");
  train->add_option("--out", t_out, "output directory");
  train->add_option("--env", t_env,
                    "environment: pendulum|pointmass|pointmass-nt|chain");
  train->add_option("--resume", t_resume, "checkpoint to resume from");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpointed policy");
  std::string e_ckpt;
  int e_episodes = 10;
  int64_t e_seed = -1;
  eval->add_option("--checkpoint", e_ckpt, "checkpoint path")->required();
  eval->add_option("--episodes", e_episodes, "evaluation episodes");
  eval->add_option("--seed", e_seed, "evaluation seed");

  auto* theory = app.add_subcommand("theory", "theory tooling");
  auto* validate = theory->add_subcommand(
      "validate", "validate the return-discrepancy bound on random MDPs");
  int v_instances = 100;
  int64_t v_seed = 0;
  std::string v_out = "theory_margins.csv";
  validate->add_option("--instances", v_instances,
                       "number of random instances");
  validate->add_option("--seed", v_seed, "rng seed");
  validate->add_option("--out", v_out, "margins CSV path (empty to skip)");

  auto* sweep = app.add_subcommand("sweep", "hyperparameter sweep");
  std::string s_param, s_values, s_config, s_out = "sweep_out";
  int s_seeds = 3;
  double s_threshold = -300.0;
  sweep->add_option("--param", s_param, "K or kb")->required();
  sweep->add_option("--values", s_values, "comma-separated values")
      ->required();
  sweep->add_option("--config", s_config, "base config file");
  sweep->add_option("--seeds", s_seeds, "seeds per value");
  sweep->add_option("--out", s_out, "output directory");
  sweep->add_option("--threshold", s_threshold,
                    "return threshold for steps-to-threshold");

  try {
    app.parse(argc, argv);
    if (*train)
      return cmd_train(t_config, t_seed, t_out, t_env, t_resume, kernels);
    if (*eval) return cmd_eval(e_ckpt, e_episodes, e_seed, kernels);
    if (*theory) {
      if (*validate) return cmd_theory_validate(v_instances, v_seed, v_out);
      std::fprintf(stderr, "theory requires the validate subcommand\n");
      return 1;
    }
    if (*sweep)
      return cmd_sweep(s_param, s_values, s_config, s_seeds, s_out,
                       s_threshold, kernels);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const TrainError& e) {
    std::fprintf(stderr, "training error: %s\n", e.what());
    return 2;
  } catch (const CheckpointError& e) {
    std::fprintf(stderr, "checkpoint error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
