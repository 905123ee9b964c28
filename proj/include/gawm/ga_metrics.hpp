#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "gawm/action_segments.hpp"
#include "gawm/reference_models.hpp"
#include "gawm/se2.hpp"

namespace gawm {

enum class ProbeKind { kIdentity, kInverse, kComposition };

std::string_view to_string(ProbeKind kind);
ProbeKind probe_kind_from_string(std::string_view name);

/**
 * One probe configuration (kind, k, l).
 *
 * Identity: k zero-action pauses of length l, separated by l native actions.
 * Inverse: k consecutive native segments of length l, each executed as a
 * forward-inverse cycle. Composition: one native window of length l against
 * a Dirichlet redistribution of it (k is always 1).
 *
 * start_indices are action offsets where the probe begins, after the model
 * has been rolled through the preceding native actions. Empty means
 * "uniformly spaced", resolved by the suite. n_sequences = 0 uses all.
 */
struct ProbeConfig {
  ProbeKind kind = ProbeKind::kIdentity;
  std::size_t k = 1;
  std::size_t l = 1;
  std::vector<std::size_t> start_indices;
  std::size_t n_sequences = 0;

  static constexpr std::size_t kMaxLocalLength = 8;

  void validate() const;
  /// Number of native actions consumed after the start index.
  std::size_t span() const { return kind == ProbeKind::kComposition ? l : k * l; }
};

/// An evaluation sequence: a start state and the native actions after it.
struct EvalSequence {
  Pose2 start;
  ActionSegment actions;
};

struct ProbeResult {
  ProbeKind kind = ProbeKind::kIdentity;
  std::size_t k = 1;
  std::size_t l = 1;
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<std::size_t> start_indices;
  /// One entry per (sequence, start index), sequence-major.
  std::vector<double> instance_errors;
};

/// Count offsets spread evenly over [0, horizon - span], deduplicated.
std::vector<std::size_t> uniform_start_indices(std::size_t horizon, std::size_t span,
                                               std::size_t count);

// Single probe instances. Each rolls the model through actions[0, t0) from
// `start` and then runs the probe; `noise` supplies every stochastic step.

/// Mean over the k pauses of d(state after pause, state before pause).
double identity_probe_instance(const WorldModel& model, const EvalSequence& seq, std::size_t t0,
                               std::size_t k, std::size_t l, const DistanceParams& dist, Rng& noise);

/// Mean over the k cycles of d(state after u then its inverse, state before u).
double inverse_probe_instance(const WorldModel& model, const EvalSequence& seq, std::size_t t0,
                              std::size_t k, std::size_t l, const DistanceParams& dist, Rng& noise);

/// d(endpoint under u_a, endpoint under u_b) from the state reached at t0.
/// The prefix uses `prefix_noise`; the two branches use independent streams.
double composition_probe_instance(const WorldModel& model, const EvalSequence& seq,
                                  std::size_t t0, const ActionSegment& u_a,
                                  const ActionSegment& u_b, const DistanceParams& dist,
                                  Rng& prefix_noise, Rng& noise_a, Rng& noise_b);

/// Per-instance seeds derive from (seed, kind, k, l, sequence, start).
ProbeResult probe_identity(const WorldModel& model, std::span<const EvalSequence> sequences,
                           const ProbeConfig& cfg, const DistanceParams& dist, std::uint64_t seed,
                           std::size_t threads = 1);

ProbeResult probe_inverse(const WorldModel& model, std::span<const EvalSequence> sequences,
                          const ProbeConfig& cfg, const DistanceParams& dist, std::uint64_t seed,
                          std::size_t threads = 1);

/// Dirichlet weights for each instance derive from dirichlet.seed.
ProbeResult probe_composition(const WorldModel& model, std::span<const EvalSequence> sequences,
                              const ProbeConfig& cfg, const DistanceParams& dist,
                              const DirichletParams& dirichlet, std::uint64_t noise_seed,
                              std::size_t threads = 1);

struct ComponentSummary {
  double mean = 0.0;
  double stddev = 0.0;
};

struct GacReport {
  /// Sorted by (kind, k, l).
  std::vector<ProbeResult> configs;
  ComponentSummary identity;
  ComponentSummary inverse;
  ComponentSummary composition;
  double e_gac = 0.0;
};

/// Component means are unweighted means over configurations; E_GAC is the
/// mean of the three. Stddevs pool every probe instance of a component.
/// Throws if any component has no configuration.
GacReport aggregate_gac(std::vector<ProbeResult> configs);

/// The default grid: identity k in {1,3,5} at l = 3; inverse l in {1,3,5}
/// at k = 1; composition l in {2,4,6}.
std::vector<ProbeConfig> default_probe_grid();

struct ProbeSuiteConfig {
  std::vector<ProbeConfig> grid = default_probe_grid();
  std::size_t starts_per_sequence = 4;
  DistanceParams dist{};
  DirichletParams dirichlet{};
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

GacReport run_gac_suite(const WorldModel& model, std::span<const EvalSequence> sequences,
                        const ProbeSuiteConfig& cfg);

/// Translates and rotates `traj` by the rigid motion minimizing
///   sum_i |R p_i + t - q_i|^2 + heading_weight * |R h_i - k_i|^2
/// against `reference`, where h_i, k_i are heading unit vectors (closed form,
/// no scale). heading_weight = 0 is plain position alignment.
Trajectory align_trajectory(const Trajectory& traj, const Trajectory& reference,
                            double heading_weight = 0.0);

/// Mean pairwise, time-averaged state distance over N >= 2 equal-length
/// trajectories. With `aligned`, each trajectory is first aligned to the first
/// with heading weight alpha_rot^2.
double gar_error(std::span<const Trajectory> trajectories, const DistanceParams& dist, bool aligned);

struct GarEntry {
  std::size_t horizon = 0;
  std::size_t n_rollouts = 0;
  ComponentSummary aligned;
  ComponentSummary nonaligned;
  std::vector<double> aligned_per_sequence;
  std::vector<double> nonaligned_per_sequence;
};

struct GarReport {
  std::vector<GarEntry> entries;
};

/// For each sequence, samples n_rollouts rollouts of the first `horizon`
/// actions and scores the recovered states s_1..s_T.
GarEntry evaluate_gar(const WorldModel& model, std::span<const EvalSequence> sequences,
                      std::size_t horizon, std::size_t n_rollouts, const DistanceParams& dist,
                      std::uint64_t seed, std::size_t threads = 1);

GarReport run_gar_suite(const WorldModel& model, std::span<const EvalSequence> sequences,
                        std::span<const std::size_t> horizons, std::size_t n_rollouts,
                        const DistanceParams& dist, std::uint64_t seed, std::size_t threads = 1);

}  // namespace gawm
