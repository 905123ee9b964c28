#include "gawm/reference_models.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace gawm {

void ViolationConfig::validate() const {
  if (!drift_bias.is_local()) {
    throw std::invalid_argument("ViolationConfig: drift_bias must be finite and local");
  }
  if (!(saturation_scale > 0.0)) {
    throw std::invalid_argument("ViolationConfig: saturation_scale must be > 0 (inf disables)");
  }
  if (!(gain_pos > 0.0) || !(gain_neg > 0.0) || !std::isfinite(gain_pos) ||
      !std::isfinite(gain_neg)) {
    throw std::invalid_argument("ViolationConfig: asymmetric gains must be finite and > 0");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw std::invalid_argument("ViolationConfig: noise_sigma must be finite and >= 0");
  }
}

bool ViolationConfig::all_disabled() const {
  return drift_bias == ActionIncrement{} && !saturation_enabled() && gain_pos == 1.0 &&
         gain_neg == 1.0 && noise_sigma == 0.0;
}

Pose2 exact_step(const Pose2& state, const ActionIncrement& action) {
  return se2_compose(state, pose_of(action));
}

ActionIncrement realized_increment(const ActionIncrement& action, const ViolationConfig& cfg,
                                   Rng& noise) {
  ActionIncrement r = action;
  if (cfg.saturation_enabled()) {
    const double c = cfg.saturation_scale;
    r = {c * std::tanh(r.dx / c), c * std::tanh(r.dy / c), c * std::tanh(r.dtheta / c)};
  }
  if (cfg.gain_pos != 1.0 || cfg.gain_neg != 1.0) {
    auto gain = [&](double v) { return v > 0.0 ? cfg.gain_pos * v : cfg.gain_neg * v; };
    r.dx = gain(r.dx);
    r.dy = gain(r.dy);
  }
  if (!(cfg.drift_bias == ActionIncrement{})) {
    r += cfg.drift_bias;
  }
  if (cfg.noise_sigma > 0.0) {
    r.dx += cfg.noise_sigma * noise.normal();
    r.dy += cfg.noise_sigma * noise.normal();
    r.dtheta += cfg.noise_sigma * noise.normal();
  }
  return r;
}

Pose2 perturbed_step(const Pose2& state, const ActionIncrement& action, const ViolationConfig& cfg,
                     Rng& noise) {
  if (cfg.all_disabled()) {
    return exact_step(state, action);
  }
  return exact_step(state, realized_increment(action, cfg, noise));
}

Pose2 ExactModel::step(const Pose2& state, const ActionIncrement& action, Rng&) const {
  return exact_step(state, action);
}

PerturbedModel::PerturbedModel(ViolationConfig cfg) : cfg_(cfg) { cfg_.validate(); }

Pose2 PerturbedModel::step(const Pose2& state, const ActionIncrement& action, Rng& noise) const {
  return perturbed_step(state, action, cfg_, noise);
}

std::string PerturbedModel::name() const {
  std::ostringstream os;
  os << "perturbed";
  if (!(cfg_.drift_bias == ActionIncrement{})) {
    os << ";drift:" << cfg_.drift_bias.dx << "," << cfg_.drift_bias.dy << ","
       << cfg_.drift_bias.dtheta;
  }
  if (cfg_.saturation_enabled()) {
    os << ";sat:" << cfg_.saturation_scale;
  }
  if (cfg_.gain_pos != 1.0 || cfg_.gain_neg != 1.0) {
    os << ";asym:" << cfg_.gain_pos << "," << cfg_.gain_neg;
  }
  if (cfg_.noise_sigma > 0.0) {
    os << ";noise:" << cfg_.noise_sigma;
  }
  return os.str();
}

Trajectory rollout(const WorldModel& model, const Pose2& start, const ActionSegment& actions,
                   Rng& noise) {
  Trajectory traj;
  traj.poses.reserve(actions.size() + 1);
  traj.poses.push_back(start);
  for (const auto& a : actions.increments) {
    traj.poses.push_back(model.step(traj.poses.back(), a, noise));
  }
  return traj;
}

Trajectory rollout(const WorldModel& model, const Pose2& start, const ActionSegment& actions,
                   std::uint64_t seed) {
  Rng noise(seed);
  return rollout(model, start, actions, noise);
}

Pose2 rollout_endpoint(const WorldModel& model, const Pose2& start, const ActionSegment& actions,
                       Rng& noise) {
  Pose2 s = start;
  for (const auto& a : actions.increments) {
    s = model.step(s, a, noise);
  }
  return s;
}

}  // namespace gawm
