#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "gawm/action_segments.hpp"
#include "gawm/latent_model.hpp"
#include "gawm/reference_models.hpp"

namespace gawm {

enum class ConstraintKind { kIdentity, kInverse, kComposition };

std::string_view to_string(ConstraintKind kind);
ConstraintKind constraint_from_string(std::string_view name);

enum class RolloutMode { kFreeRunning, kTeacherForced };

std::string_view to_string(RolloutMode mode);
RolloutMode rollout_mode_from_string(std::string_view name);

struct GALossConfig {
  double lambda_id = 1.0;
  double lambda_inv = 1.0;
  double lambda_comp = 1.0;
  double lambda_ga = 0.5;
  std::size_t max_span = 4;
  DirichletParams dirichlet{};
  RolloutMode mode = RolloutMode::kFreeRunning;
  /// Start GA rollouts from the noise-free encoding of s_t instead of the
  /// observed (noisy) latent used by the prediction loss.
  bool clean_anchor = false;
  /// Constraint types the per-batch sampler draws from, uniformly.
  std::vector<ConstraintKind> constraints{ConstraintKind::kIdentity, ConstraintKind::kInverse,
                                          ConstraintKind::kComposition};

  void validate() const;
  double lambda(ConstraintKind kind) const;
};

struct GALossValues {
  double l_pred = 0.0;
  std::optional<double> l_id;
  std::optional<double> l_inv;
  std::optional<double> l_comp;
  ConstraintKind active = ConstraintKind::kIdentity;

  /// Unweighted value of the active constraint loss.
  double active_loss() const;
};

enum class OptimizerKind { kGradientDescent, kAdam };

std::string_view to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(std::string_view name);

struct TrainRunConfig {
  std::size_t steps = 5000;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::string dataset_path;

  void validate() const;
};

/// A recorded trajectory: poses[i + 1] follows poses[i] under actions[i].
struct TrainingExample {
  Trajectory poses;
  ActionSegment actions;
};

using Dataset = std::vector<TrainingExample>;

void validate_dataset(const Dataset& dataset);

struct TransitionSample {
  Pose2 pose;
  ActionIncrement action;
  Pose2 next;
};

/// Training was aborted; carries the failing step.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::size_t step)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// The segments one constraint compares. For identity and inverse only
/// `primary` is rolled out; composition rolls out both.
struct ConstraintSegments {
  ConstraintKind kind;
  ActionSegment primary;
  ActionSegment alternative;
};

/// Builds u^id, u^inv or (u^A, u^B) from a native segment. `weights` are
/// only used for composition and must lie on the simplex.
ConstraintSegments synthesize_constraint(ConstraintKind kind, const ActionSegment& base_segment,
                                         std::span<const double> weights = {});

/// Mean over the batch of ||net_step(encode(s), a) - encode(s')||^2.
double prediction_loss(const DynamicsNet& net, const FeatureEncoder& encoder,
                       std::span<const TransitionSample> batch, Rng& noise);

/// Unweighted latent loss of one constraint, rolled out freely from z_t.
double ga_loss(const DynamicsNet& net, const LatentState& z_t, const ConstraintSegments& segments);

/// Samples the active constraint uniformly from cfg.constraints (and, for
/// composition, Dirichlet weights) and evaluates it from z_t. Only the active
/// loss is set in the result; l_pred is left at zero.
GALossValues ga_losses(const DynamicsNet& net, const LatentState& z_t,
                       const ActionSegment& base_segment, const GALossConfig& cfg, Rng& rng);

struct BatchItem {
  std::size_t trajectory = 0;
  std::size_t t = 0;
  /// Dirichlet weights for the composition constraint (empty otherwise).
  std::vector<double> weights;
};

struct TrainingBatch {
  ConstraintKind active = ConstraintKind::kIdentity;
  std::size_t span = 1;
  std::vector<BatchItem> items;
};

/// Draws the constraint type, span l ~ U{1..L} and start indices for one batch.
TrainingBatch sample_batch(const Dataset& dataset, const GALossConfig& cfg, std::size_t batch_size,
                           Rng& rng);

struct BatchEvaluation {
  GALossValues values;
  double objective = 0.0;
  Eigen::VectorXd gradient;
};

/**
 * Per-batch objective l_pred + lambda_ga * lambda_c * L_c for constraint c
 * (the batch's active constraint unless `override_kind` is set).
 *
 * Start latents are detached, so gradients flow only through the
 * constrained interval. In teacher-forced mode every step after the first is
 * fed the encoding of the exact-kinematics pose instead of the model's own
 * previous latent.
 */
BatchEvaluation evaluate_batch(const DynamicsNet& net, const FeatureEncoder& encoder,
                               const Dataset& dataset, const TrainingBatch& batch,
                               const GALossConfig& cfg, Rng& noise, bool with_gradient = true,
                               std::optional<ConstraintKind> override_kind = std::nullopt);

/// l_pred + lambda_ga / |C| * sum over c in cfg.constraints of lambda_c * L_c on one
/// batch: the expectation of the per-batch objective over constraint sampling.
double full_objective(const DynamicsNet& net, const FeatureEncoder& encoder, const Dataset& dataset,
                      const TrainingBatch& batch, const GALossConfig& cfg, std::uint64_t noise_seed);

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, std::size_t parameter_count);

  void apply(Eigen::VectorXd& params, const Eigen::VectorXd& gradient);
  std::size_t iterations() const { return t_; }

 private:
  OptimizerKind kind_;
  double lr_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  std::size_t t_ = 0;
};

struct TrainState {
  DynamicsNet net;
  Optimizer optimizer;
  std::size_t step = 0;

  TrainState(DynamicsNet initial, const TrainRunConfig& run);
};

GALossValues train_step(TrainState& state, const FeatureEncoder& encoder, const Dataset& dataset,
                        const TrainingBatch& batch, const GALossConfig& cfg, Rng& noise);

struct LossRow {
  std::size_t step = 0;
  ConstraintKind active = ConstraintKind::kIdentity;
  double l_pred = 0.0;
  double l_ga = 0.0;
  double total = 0.0;
};

struct TrainResult {
  DynamicsNet net;
  std::vector<LossRow> curve;
};

/// Runs run.steps train steps. Step i draws everything from a stream derived
/// from (run.seed, i), so runs are reproducible bit for bit.
TrainResult train(const TrainRunConfig& run, const GALossConfig& cfg, const Dataset& dataset,
                  const FeatureEncoder& encoder, DynamicsNet initial);

/// Mean one-step latent prediction error over every transition of a dataset.
double dataset_prediction_loss(const DynamicsNet& net, const FeatureEncoder& encoder,
                               const Dataset& dataset, std::uint64_t noise_seed);

}  // namespace gawm
