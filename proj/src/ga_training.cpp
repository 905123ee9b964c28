#include "gawm/ga_training.hpp"

#include <cmath>

namespace gawm {

std::string_view to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::kIdentity:
      return "id";
    case ConstraintKind::kInverse:
      return "inv";
    case ConstraintKind::kComposition:
      return "comp";
  }
  return "?";
}

ConstraintKind constraint_from_string(std::string_view name) {
  if (name == "id" || name == "identity") return ConstraintKind::kIdentity;
  if (name == "inv" || name == "inverse") return ConstraintKind::kInverse;
  if (name == "comp" || name == "composition") return ConstraintKind::kComposition;
  throw std::invalid_argument("unknown constraint kind '" + std::string(name) + "'");
}

std::string_view to_string(RolloutMode mode) {
  return mode == RolloutMode::kFreeRunning ? "free-running" : "teacher-forced";
}

RolloutMode rollout_mode_from_string(std::string_view name) {
  if (name == "free-running") return RolloutMode::kFreeRunning;
  if (name == "teacher-forced") return RolloutMode::kTeacherForced;
  throw std::invalid_argument("unknown rollout mode '" + std::string(name) + "'");
}

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "gd";
}

OptimizerKind optimizer_from_string(std::string_view name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "gd" || name == "sgd") return OptimizerKind::kGradientDescent;
  throw std::invalid_argument("unknown optimizer '" + std::string(name) + "'");
}

void GALossConfig::validate() const {
  for (double w : {lambda_id, lambda_inv, lambda_comp, lambda_ga}) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("GALossConfig: loss weights must be finite and >= 0");
    }
  }
  if (max_span < 1) {
    throw std::invalid_argument("GALossConfig: max_span must be >= 1");
  }
  if (constraints.empty()) {
    throw std::invalid_argument("GALossConfig: at least one constraint kind is required");
  }
  dirichlet.validate();
}

double GALossConfig::lambda(ConstraintKind kind) const {
  switch (kind) {
    case ConstraintKind::kIdentity:
      return lambda_id;
    case ConstraintKind::kInverse:
      return lambda_inv;
    case ConstraintKind::kComposition:
      return lambda_comp;
  }
  return 0.0;
}

double GALossValues::active_loss() const {
  const auto& v = active == ConstraintKind::kIdentity  ? l_id
                  : active == ConstraintKind::kInverse ? l_inv
                                                       : l_comp;
  return v.value_or(0.0);
}

void TrainRunConfig::validate() const {
  if (steps < 1) {
    throw std::invalid_argument("TrainRunConfig: steps must be >= 1");
  }
  if (batch_size < 1) {
    throw std::invalid_argument("TrainRunConfig: batch_size must be >= 1");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("TrainRunConfig: learning_rate must be finite and >= 0");
  }
}

void validate_dataset(const Dataset& dataset) {
  if (dataset.empty()) {
    throw std::invalid_argument("dataset is empty");
  }
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& ex = dataset[i];
    if (ex.actions.empty() || ex.poses.size() != ex.actions.size() + 1) {
      throw std::invalid_argument("dataset trajectory " + std::to_string(i) +
                                  " must hold T >= 1 actions and T + 1 poses");
    }
  }
}

ConstraintSegments synthesize_constraint(ConstraintKind kind, const ActionSegment& base_segment,
                                         std::span<const double> weights) {
  switch (kind) {
    case ConstraintKind::kIdentity:
      return {kind, make_identity_segment(base_segment.size()), {}};
    case ConstraintKind::kInverse:
      return {kind, make_inverse_segment(base_segment), {}};
    case ConstraintKind::kComposition:
      return {kind, base_segment, make_compatibility_segment(base_segment, weights)};
  }
  throw std::logic_error("synthesize_constraint: bad kind");
}

double prediction_loss(const DynamicsNet& net, const FeatureEncoder& encoder,
                       std::span<const TransitionSample> batch, Rng& noise) {
  if (batch.empty()) {
    throw std::invalid_argument("prediction_loss: empty batch");
  }
  double total = 0.0;
  for (const auto& s : batch) {
    const LatentState z = encode(s.pose, encoder, noise);
    const LatentState target = encode(s.next, encoder, noise);
    total += (net_step(z, s.action, net) - target).squaredNorm();
  }
  return total / static_cast<double>(batch.size());
}

double ga_loss(const DynamicsNet& net, const LatentState& z_t, const ConstraintSegments& segments) {
  const LatentState end = latent_rollout_endpoint(z_t, segments.primary, net);
  if (segments.kind == ConstraintKind::kComposition) {
    return (end - latent_rollout_endpoint(z_t, segments.alternative, net)).squaredNorm();
  }
  return (end - z_t).squaredNorm();
}

namespace {

ConstraintKind sample_kind(const GALossConfig& cfg, Rng& rng) {
  return cfg.constraints[rng.uniform_index(cfg.constraints.size())];
}

void set_loss(GALossValues& v, ConstraintKind kind, double value) {
  switch (kind) {
    case ConstraintKind::kIdentity:
      v.l_id = value;
      break;
    case ConstraintKind::kInverse:
      v.l_inv = value;
      break;
    case ConstraintKind::kComposition:
      v.l_comp = value;
      break;
  }
}

// Rolls `u` out on the tape from `z0`. Teacher forcing replaces every
// intermediate input by the encoding of the exact-kinematics pose.
RolloutTape::NodeId record_rollout(RolloutTape& tape, RolloutTape::NodeId z0,
                                   const ActionSegment& u, RolloutMode mode, const Pose2& s_t,
                                   const FeatureEncoder& encoder, bool clean, Rng& noise) {
  if (mode == RolloutMode::kFreeRunning) {
    return tape.rollout(z0, u);
  }
  RolloutTape::NodeId cur = z0;
  Pose2 truth = s_t;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (i > 0) {
      cur = tape.input(clean ? encode(truth, encoder) : encode(truth, encoder, noise),
                       /*detached=*/true);
    }
    cur = tape.step(cur, u[i]);
    truth = exact_step(truth, u[i]);
  }
  return cur;
}

}  // namespace

GALossValues ga_losses(const DynamicsNet& net, const LatentState& z_t,
                       const ActionSegment& base_segment, const GALossConfig& cfg, Rng& rng) {
  cfg.validate();
  GALossValues out;
  out.active = sample_kind(cfg, rng);
  std::vector<double> weights;
  if (out.active == ConstraintKind::kComposition) {
    weights = sample_dirichlet_weights(base_segment.size(), cfg.dirichlet.concentration, rng);
  }
  set_loss(out, out.active, ga_loss(net, z_t, synthesize_constraint(out.active, base_segment, weights)));
  return out;
}

TrainingBatch sample_batch(const Dataset& dataset, const GALossConfig& cfg, std::size_t batch_size,
                           Rng& rng) {
  validate_dataset(dataset);
  if (batch_size == 0) {
    throw std::invalid_argument("sample_batch: batch_size must be >= 1");
  }
  TrainingBatch batch;
  batch.active = sample_kind(cfg, rng);
  batch.span = 1 + rng.uniform_index(cfg.max_span);
  batch.items.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    BatchItem item;
    item.trajectory = rng.uniform_index(dataset.size());
    const std::size_t horizon = dataset[item.trajectory].actions.size();
    if (horizon < batch.span) {
      throw std::invalid_argument("sample_batch: trajectory shorter than the sampled span");
    }
    item.t = rng.uniform_index(horizon - batch.span + 1);
    // Drawn for every batch so the stream does not depend on the active kind.
    item.weights = sample_dirichlet_weights(batch.span, cfg.dirichlet.concentration, rng);
    batch.items.push_back(std::move(item));
  }
  return batch;
}

BatchEvaluation evaluate_batch(const DynamicsNet& net, const FeatureEncoder& encoder,
                               const Dataset& dataset, const TrainingBatch& batch,
                               const GALossConfig& cfg, Rng& noise, bool with_gradient,
                               std::optional<ConstraintKind> override_kind) {
  if (batch.items.empty()) {
    throw std::invalid_argument("evaluate_batch: empty batch");
  }
  const ConstraintKind kind = override_kind.value_or(batch.active);
  const double inv_b = 1.0 / static_cast<double>(batch.items.size());
  const double ga_weight = cfg.lambda_ga * cfg.lambda(kind) * inv_b;

  // Encode every start and target first so the noise stream is consumed
  // identically whatever constraint is evaluated afterwards.
  std::vector<LatentState> starts, targets;
  starts.reserve(batch.items.size());
  targets.reserve(batch.items.size());
  for (const auto& item : batch.items) {
    const auto& ex = dataset.at(item.trajectory);
    starts.push_back(encode(ex.poses[item.t], encoder, noise));
    targets.push_back(encode(ex.poses[item.t + 1], encoder, noise));
  }

  RolloutTape tape(net);
  double l_pred = 0.0;
  double l_ga = 0.0;
  for (std::size_t i = 0; i < batch.items.size(); ++i) {
    const auto& item = batch.items[i];
    const auto& ex = dataset[item.trajectory];
    const auto z_t = tape.input(starts[i], /*detached=*/true);

    const auto pred = tape.step(z_t, ex.actions[item.t]);
    tape.add_squared_distance(pred, targets[i], inv_b);
    l_pred += (tape.value(pred) - targets[i]).squaredNorm();

    const auto anchor =
        cfg.clean_anchor ? tape.input(encode(ex.poses[item.t], encoder), /*detached=*/true) : z_t;
    const ConstraintSegments seg =
        synthesize_constraint(kind, ex.actions.slice(item.t, batch.span), item.weights);
    const Pose2& s_t = ex.poses[item.t];
    const auto end = record_rollout(tape, anchor, seg.primary, cfg.mode, s_t, encoder,
                                    cfg.clean_anchor, noise);
    if (kind == ConstraintKind::kComposition) {
      const auto alt = record_rollout(tape, anchor, seg.alternative, cfg.mode, s_t, encoder,
                                      cfg.clean_anchor, noise);
      tape.add_squared_distance(end, alt, ga_weight);
      l_ga += (tape.value(end) - tape.value(alt)).squaredNorm();
    } else {
      tape.add_squared_distance(end, anchor, ga_weight);
      l_ga += (tape.value(end) - tape.value(anchor)).squaredNorm();
    }
  }

  BatchEvaluation out;
  out.values.active = kind;
  out.values.l_pred = l_pred * inv_b;
  set_loss(out.values, kind, l_ga * inv_b);
  out.objective = out.values.l_pred + cfg.lambda_ga * cfg.lambda(kind) * out.values.active_loss();
  if (!std::isfinite(out.objective)) {
    throw NonFiniteError("evaluate_batch: non-finite objective");
  }
  if (with_gradient) {
    out.gradient = tape.backward().params;
  }
  return out;
}

double full_objective(const DynamicsNet& net, const FeatureEncoder& encoder, const Dataset& dataset,
                      const TrainingBatch& batch, const GALossConfig& cfg, std::uint64_t noise_seed) {
  cfg.validate();
  double total = 0.0;
  double l_pred = 0.0;
  for (ConstraintKind kind : cfg.constraints) {
    Rng noise(noise_seed);
    const auto eval = evaluate_batch(net, encoder, dataset, batch, cfg, noise, false, kind);
    l_pred = eval.values.l_pred;
    total += cfg.lambda(kind) * eval.values.active_loss();
  }
  return l_pred + cfg.lambda_ga * total / static_cast<double>(cfg.constraints.size());
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, std::size_t parameter_count)
    : kind_(kind),
      lr_(learning_rate),
      m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count))),
      v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count))) {}

void Optimizer::apply(Eigen::VectorXd& params, const Eigen::VectorXd& gradient) {
  ++t_;
  if (kind_ == OptimizerKind::kGradientDescent) {
    params -= lr_ * gradient;
    return;
  }
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  m_ = kBeta1 * m_ + (1.0 - kBeta1) * gradient;
  v_ = kBeta2 * v_ + (1.0 - kBeta2) * gradient.cwiseProduct(gradient);
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + kEps);
}

TrainState::TrainState(DynamicsNet initial, const TrainRunConfig& run)
    : net(std::move(initial)),
      optimizer(run.optimizer, run.learning_rate, static_cast<std::size_t>(net.params().size())) {}

GALossValues train_step(TrainState& state, const FeatureEncoder& encoder, const Dataset& dataset,
                        const TrainingBatch& batch, const GALossConfig& cfg, Rng& noise) {
  BatchEvaluation eval;
  try {
    eval = evaluate_batch(state.net, encoder, dataset, batch, cfg, noise, true);
  } catch (const NonFiniteError& e) {
    throw TrainingError("non-finite loss at step " + std::to_string(state.step) + ": " + e.what(),
                        state.step);
  }
  state.optimizer.apply(state.net.params(), eval.gradient);
  if (!state.net.params().allFinite()) {
    throw TrainingError("non-finite parameters after step " + std::to_string(state.step),
                        state.step);
  }
  ++state.step;
  return eval.values;
}

TrainResult train(const TrainRunConfig& run, const GALossConfig& cfg, const Dataset& dataset,
                  const FeatureEncoder& encoder, DynamicsNet initial) {
  run.validate();
  cfg.validate();
  validate_dataset(dataset);
  if (initial.latent_dim() != encoder.latent_dim()) {
    throw std::invalid_argument("train: network and encoder latent dims differ");
  }
  TrainState state(std::move(initial), run);
  TrainResult result{state.net, {}};
  result.curve.reserve(run.steps);
  for (std::size_t step = 0; step < run.steps; ++step) {
    Rng rng(derive_seed(run.seed, {step}));
    const TrainingBatch batch = sample_batch(dataset, cfg, run.batch_size, rng);
    const GALossValues v = train_step(state, encoder, dataset, batch, cfg, rng);
    const double l_ga = v.active_loss();
    result.curve.push_back(
        {step, v.active, v.l_pred, l_ga, v.l_pred + cfg.lambda_ga * cfg.lambda(v.active) * l_ga});
  }
  result.net = std::move(state.net);
  return result;
}

double dataset_prediction_loss(const DynamicsNet& net, const FeatureEncoder& encoder,
                               const Dataset& dataset, std::uint64_t noise_seed) {
  validate_dataset(dataset);
  std::vector<TransitionSample> samples;
  for (const auto& ex : dataset) {
    for (std::size_t t = 0; t < ex.actions.size(); ++t) {
      samples.push_back({ex.poses[t], ex.actions[t], ex.poses[t + 1]});
    }
  }
  Rng noise(noise_seed);
  return prediction_loss(net, encoder, samples, noise);
}

}  // namespace gawm
