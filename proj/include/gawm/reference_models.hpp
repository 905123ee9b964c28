#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "gawm/action_segments.hpp"
#include "gawm/random.hpp"
#include "gawm/se2.hpp"

namespace gawm {

/// Any (possibly stochastic) transition s' = f(s, a). The noise source is
/// always passed in explicitly; models hold no mutable state.
class WorldModel {
 public:
  virtual ~WorldModel() = default;
  virtual Pose2 step(const Pose2& state, const ActionIncrement& action, Rng& noise) const = 0;
  virtual std::string name() const = 0;
};

struct Trajectory {
  std::vector<Pose2> poses;

  std::size_t size() const { return poses.size(); }
  const Pose2& operator[](std::size_t i) const { return poses[i]; }
  const Pose2& back() const { return poses.back(); }
};

/**
 * Controlled violations of the group-action conditions.
 *
 * The realized increment is
 *   asym_gain (.) saturate(action) + drift_bias + N(0, noise_sigma^2 I)
 * where saturate is componentwise c * tanh(a / c), and the asymmetric gain
 * scales positive translation components by gain_pos and negative ones by
 * gain_neg. Every injector is off by default.
 */
struct ViolationConfig {
  ActionIncrement drift_bias{};
  double saturation_scale = std::numeric_limits<double>::infinity();
  double gain_pos = 1.0;
  double gain_neg = 1.0;
  double noise_sigma = 0.0;

  void validate() const;
  bool saturation_enabled() const { return std::isfinite(saturation_scale); }
  bool all_disabled() const;
};

/// state o (R(dtheta), (dx, dy)): the increment acts in the body frame.
Pose2 exact_step(const Pose2& state, const ActionIncrement& action);

/// The increment a perturbed model actually executes for `action`.
ActionIncrement realized_increment(const ActionIncrement& action, const ViolationConfig& cfg,
                                   Rng& noise);

Pose2 perturbed_step(const Pose2& state, const ActionIncrement& action, const ViolationConfig& cfg,
                     Rng& noise);

class ExactModel final : public WorldModel {
 public:
  Pose2 step(const Pose2& state, const ActionIncrement& action, Rng& noise) const override;
  std::string name() const override { return "exact"; }
};

class PerturbedModel final : public WorldModel {
 public:
  explicit PerturbedModel(ViolationConfig cfg);
  Pose2 step(const Pose2& state, const ActionIncrement& action, Rng& noise) const override;
  std::string name() const override;
  const ViolationConfig& config() const { return cfg_; }

 private:
  ViolationConfig cfg_;
};

Trajectory rollout(const WorldModel& model, const Pose2& start, const ActionSegment& actions,
                   std::uint64_t seed);

/// Same, continuing an existing noise stream.
Trajectory rollout(const WorldModel& model, const Pose2& start, const ActionSegment& actions,
                   Rng& noise);

/// Endpoint only; avoids storing the intermediate poses.
Pose2 rollout_endpoint(const WorldModel& model, const Pose2& start, const ActionSegment& actions,
                       Rng& noise);

}  // namespace gawm
