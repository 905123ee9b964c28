#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "gawm/harness.hpp"

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2, kBadInput = 3, kTrainingFailed = 4 };

int report_error(const std::string& type, const std::string& message, int code,
                 const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json err{{"error", {{"type", type}, {"message", message}}}};
  for (const auto& [k, v] : extra.items()) err["error"][k] = v;
  std::cerr << err.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group-action consistency toolkit for SE(2) world models", "gawm"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
  app.add_option("--config", config_path, "Experiment config (JSON); defaults apply if omitted");
  app.add_option("--seed", seed, "Root seed, overriding the config");
  app.add_option("--out", out, "Output directory, overriding the config");
  app.add_option("--threads", threads, "Worker threads for metrics, overriding the config")
      ->check(CLI::PositiveNumber);

  auto* gen = app.add_subcommand("gen-data", "Generate train and eval trajectories");
  auto* train = app.add_subcommand("train", "Pretrain (cached) and fine-tune a latent model");
  std::string label;
  train->add_option("--label", label, "Run label (default: baseline if lambda_ga is 0, else ga)");
  auto* probe = app.add_subcommand("probe", "Group-action consistency probes");
  std::string probe_ref;
  probe->add_option("--model-ref", probe_ref, "exact, injectors, or a checkpoint path")
      ->required();
  auto* gar = app.add_subcommand("gar", "Rollout agreement across stochastic rollouts");
  std::string gar_ref;
  gar->add_option("--model-ref", gar_ref, "exact, injectors, or a checkpoint path")->required();
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate one ablation axis");
  std::string axis;
  ablate->add_option("--axis", axis, "lambda, span, mode or constraints")->required();
  auto* report = app.add_subcommand("report", "Summarize results under the output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), kUsage);
  }

  try {
    gawm::ExperimentConfig cfg =
        config_path.empty() ? gawm::ExperimentConfig{} : gawm::load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (out) cfg.output_dir = *out;
    if (threads) cfg.threads = *threads;
    cfg.validate();

    gawm::StageResult result;
    if (gen->parsed()) {
      result = gawm::run_gen_data(cfg);
    } else if (train->parsed()) {
      result = gawm::run_train(cfg, label);
    } else if (probe->parsed()) {
      result = gawm::run_probe(cfg, probe_ref);
    } else if (gar->parsed()) {
      result = gawm::run_gar(cfg, gar_ref);
    } else if (ablate->parsed()) {
      result = gawm::run_ablate(cfg, axis);
    } else if (report->parsed()) {
      result = gawm::run_report(cfg);
    }
    nlohmann::json summary{{"status", "ok"}, {"dir", result.dir.string()}};
    for (const char* key : {"command", "label", "model", "checkpoint_hash", "eval_pred_loss"}) {
      if (result.manifest.contains(key)) summary[key] = result.manifest[key];
    }
    std::cout << summary.dump() << std::endl;
    return kOk;
  } catch (const gawm::ConfigError& e) {
    return report_error("config", e.what(), kUsage);
  } catch (const gawm::FormatError& e) {
    return report_error("format", e.what(), kBadInput);
  } catch (const gawm::TrainingError& e) {
    return report_error("training", e.what(), kTrainingFailed, {{"step", e.step()}});
  } catch (const std::exception& e) {
    return report_error("runtime", e.what(), kFailure);
  }
}
