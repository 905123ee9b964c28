#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gawm/ga_metrics.hpp"
#include "gawm/ga_training.hpp"
#include "gawm/latent_model.hpp"
#include "gawm/reference_models.hpp"
#include "gawm/serialization.hpp"

namespace gawm {

using Json = nlohmann::json;

/// Invalid configuration or command arguments.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-component Gaussian over body-frame increments.
struct ActionDistribution {
  ActionIncrement mean{0.1, 0.0, 0.0};
  ActionIncrement stddev{0.02, 0.01, 0.1};
};

struct DatasetSpec {
  std::size_t train_trajectories = 200;
  std::size_t eval_trajectories = 20;
  /// Actions per trajectory; each trajectory stores length + 1 poses.
  std::size_t length = 64;
  ActionDistribution actions{};
  /// Start positions are uniform on [-r, r]^2, headings uniform.
  double start_position_range = 1.0;
  /// Model that generates the recorded poses.
  ViolationConfig model{};
};

struct EncoderSpec {
  std::size_t latent_dim = 16;
  double obs_noise = 0.02;
};

struct NetworkSpec {
  std::size_t hidden = 64;
  double init_scale = 1.0;
};

/// Prediction-only stage shared by every run of one config.
struct PretrainSpec {
  std::size_t steps = 10000;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::kAdam;
};

struct TrainSpec {
  std::size_t steps = 40000;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  /// Data root holding train/ and eval/; empty means <output_dir>/data.
  std::string dataset_path;
};

struct ProbeSpec {
  std::vector<ProbeConfig> grid = default_probe_grid();
  std::size_t starts_per_sequence = 4;
  double alpha_rot = 1.0;
  double dirichlet_concentration = 1.0;
};

struct GarSpec {
  std::size_t n_rollouts = 5;
  std::vector<std::size_t> horizons{16, 64};
};

struct AblateSpec {
  std::vector<double> lambda_values{0.0, 0.1, 0.5, 1.0};
  std::vector<std::size_t> span_values{2, 4, 6};
};

struct ExperimentConfig {
  /// Root seed; every stream below derives from it.
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::size_t threads = 1;
  DatasetSpec dataset{};
  EncoderSpec encoder{};
  NetworkSpec network{};
  PretrainSpec pretrain{};
  TrainSpec train{};
  GALossConfig ga{};
  ProbeSpec probe{};
  GarSpec gar{};
  AblateSpec ablate{};

  void validate() const;
};

/// Named seeds derived from the root seed.
struct SeedPlan {
  std::uint64_t train_data = 0;
  std::uint64_t eval_data = 0;
  std::uint64_t encoder = 0;
  std::uint64_t init = 0;
  std::uint64_t pretrain = 0;
  std::uint64_t train = 0;
  std::uint64_t dirichlet = 0;
  std::uint64_t probe = 0;
  std::uint64_t gar = 0;
  std::uint64_t pred_eval = 0;
};

SeedPlan seed_plan(std::uint64_t root);
Json to_json(const SeedPlan& seeds);

/// Every field is written, so the document is a complete description of a run.
Json to_json(const ExperimentConfig& cfg);
/// Missing keys keep their defaults; unknown keys and bad values throw ConfigError.
ExperimentConfig config_from_json(const Json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
/// FNV-1a over the canonical JSON dump.
std::string config_hash(const ExperimentConfig& cfg);

/// Rolls the configured data model from random starts. Deterministic in `seed`.
Dataset generate_dataset(const DatasetSpec& spec, std::size_t count, std::uint64_t seed);

/// Reads traj_*.jsonl with their action files from a split directory.
Dataset load_dataset(const std::filesystem::path& dir);

std::vector<EvalSequence> eval_sequences(const Dataset& dataset);

/**
 * Output of one command. `manifest` is also written, after every other
 * file, to manifest.json in `dir`.
 */
struct StageResult {
  std::filesystem::path dir;
  Json manifest;
};

StageResult run_gen_data(const ExperimentConfig& cfg);

/// Prediction-only pretraining, cached under <output_dir>/pretrain.
Checkpoint pretrained_checkpoint(const ExperimentConfig& cfg);

/// Fine-tunes the pretrained net with cfg.ga into <output_dir>/train/<label>.
/// An empty label resolves to "baseline" when lambda_ga is 0 and "ga" otherwise.
StageResult run_train(const ExperimentConfig& cfg, std::string label = "");

/// A resolved model reference.
struct ModelHandle {
  std::unique_ptr<WorldModel> model;
  std::string name;
  std::string checkpoint_hash;
};

/**
 * "exact", a '+'-joined list of injectors (drift:dx,dy,dtheta  sat:c
 * asym:gain_pos,gain_neg  noise:sigma), or a path to a checkpoint file.
 */
ModelHandle resolve_model(std::string_view ref);

StageResult run_probe(const ExperimentConfig& cfg, std::string_view model_ref);
StageResult run_gar(const ExperimentConfig& cfg, std::string_view model_ref);

/// One row of an ablation table.
struct AblationRow {
  std::string name;
  GALossConfig ga;
};

/// axis: "lambda", "span", "mode" or "constraints".
std::vector<AblationRow> ablation_rows(const ExperimentConfig& cfg, std::string_view axis);
StageResult run_ablate(const ExperimentConfig& cfg, std::string_view axis);

/// Collects every probe, gar and ablation result under output_dir.
StageResult run_report(const ExperimentConfig& cfg);

}  // namespace gawm
