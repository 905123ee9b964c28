#include "gawm/ga_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <tuple>

#include "gawm/parallel.hpp"

namespace gawm {

std::string_view to_string(ProbeKind kind) {
  switch (kind) {
    case ProbeKind::kIdentity:
      return "identity";
    case ProbeKind::kInverse:
      return "inverse";
    case ProbeKind::kComposition:
      return "composition";
  }
  return "?";
}

ProbeKind probe_kind_from_string(std::string_view name) {
  if (name == "identity" || name == "id") return ProbeKind::kIdentity;
  if (name == "inverse" || name == "inv") return ProbeKind::kInverse;
  if (name == "composition" || name == "comp") return ProbeKind::kComposition;
  throw std::invalid_argument("unknown probe kind '" + std::string(name) + "'");
}

void ProbeConfig::validate() const {
  if (k < 1 || l < 1) {
    throw std::invalid_argument("ProbeConfig: k and l must be >= 1");
  }
  if (kind == ProbeKind::kComposition && k != 1) {
    throw std::invalid_argument("ProbeConfig: composition probes have k = 1");
  }
  if (l > kMaxLocalLength) {
    throw std::invalid_argument("ProbeConfig: l = " + std::to_string(l) +
                                " is outside the local regime (<= 8)");
  }
}

std::vector<std::size_t> uniform_start_indices(std::size_t horizon, std::size_t span,
                                               std::size_t count) {
  if (span > horizon) {
    throw std::out_of_range("uniform_start_indices: probe span " + std::to_string(span) +
                            " exceeds horizon " + std::to_string(horizon));
  }
  if (count == 0) {
    throw std::invalid_argument("uniform_start_indices: count must be >= 1");
  }
  const std::size_t last = horizon - span;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t idx = count == 1 ? 0 : (i * last + (count - 1) / 2) / (count - 1);
    if (out.empty() || out.back() != idx) {
      out.push_back(idx);
    }
  }
  return out;
}

namespace {

void check_fits(const EvalSequence& seq, std::size_t t0, std::size_t span) {
  if (t0 > seq.actions.size() || span > seq.actions.size() - t0) {
    throw std::out_of_range("probe: start " + std::to_string(t0) + " with span " +
                            std::to_string(span) + " exceeds sequence of " +
                            std::to_string(seq.actions.size()) + " actions");
  }
}

Pose2 prefix_state(const WorldModel& model, const EvalSequence& seq, std::size_t t0, Rng& noise) {
  Pose2 s = seq.start;
  for (std::size_t i = 0; i < t0; ++i) {
    s = model.step(s, seq.actions[i], noise);
  }
  return s;
}

ComponentSummary summarize(std::span<const double> values) {
  ComponentSummary out;
  if (values.empty()) {
    return out;
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - out.mean) * (v - out.mean);
  out.stddev = std::sqrt(sq / static_cast<double>(values.size()));
  return out;
}

std::span<const EvalSequence> used_sequences(std::span<const EvalSequence> sequences,
                                             const ProbeConfig& cfg) {
  if (sequences.empty()) {
    throw std::invalid_argument("probe: no evaluation sequences");
  }
  if (cfg.n_sequences == 0) {
    return sequences;
  }
  if (cfg.n_sequences > sequences.size()) {
    throw std::out_of_range("probe: n_sequences exceeds available sequences");
  }
  return sequences.first(cfg.n_sequences);
}

template <typename InstanceFn>
ProbeResult run_probe(std::span<const EvalSequence> sequences, const ProbeConfig& cfg,
                      std::size_t threads, InstanceFn&& instance) {
  cfg.validate();
  if (cfg.start_indices.empty()) {
    throw std::invalid_argument("probe: no start indices");
  }
  const auto seqs = used_sequences(sequences, cfg);
  for (const auto& seq : seqs) {
    for (std::size_t t0 : cfg.start_indices) {
      check_fits(seq, t0, cfg.span());
    }
  }
  const std::size_t n_starts = cfg.start_indices.size();
  ProbeResult out{cfg.kind, cfg.k, cfg.l, 0.0, 0.0, cfg.start_indices, {}};
  out.instance_errors.assign(seqs.size() * n_starts, 0.0);
  parallel_for(out.instance_errors.size(), threads, [&](std::size_t i) {
    const std::size_t s = i / n_starts;
    out.instance_errors[i] = instance(seqs[s], s, cfg.start_indices[i % n_starts]);
  });
  const auto summary = summarize(out.instance_errors);
  out.mean = summary.mean;
  out.stddev = summary.stddev;
  return out;
}

std::uint64_t instance_seed(std::uint64_t seed, const ProbeConfig& cfg, std::size_t seq,
                            std::size_t t0) {
  return derive_seed(seed, {static_cast<std::uint64_t>(cfg.kind), cfg.k, cfg.l, seq, t0});
}

}  // namespace

double identity_probe_instance(const WorldModel& model, const EvalSequence& seq, std::size_t t0,
                               std::size_t k, std::size_t l, const DistanceParams& dist,
                               Rng& noise) {
  check_fits(seq, t0, k * l);
  Pose2 s = prefix_state(model, seq, t0, noise);
  const ActionIncrement zero{};
  double total = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    const Pose2 before = s;
    for (std::size_t i = 0; i < l; ++i) {
      s = model.step(s, zero, noise);
    }
    total += state_distance(s, before, dist);
    if (j + 1 < k) {
      for (std::size_t i = 0; i < l; ++i) {
        s = model.step(s, seq.actions[t0 + j * l + i], noise);
      }
    }
  }
  return total / static_cast<double>(k);
}

double inverse_probe_instance(const WorldModel& model, const EvalSequence& seq, std::size_t t0,
                              std::size_t k, std::size_t l, const DistanceParams& dist,
                              Rng& noise) {
  check_fits(seq, t0, k * l);
  Pose2 s = prefix_state(model, seq, t0, noise);
  double total = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    const Pose2 before = s;
    s = rollout_endpoint(model, s, make_inverse_segment(seq.actions.slice(t0 + j * l, l)), noise);
    total += state_distance(s, before, dist);
  }
  return total / static_cast<double>(k);
}

double composition_probe_instance(const WorldModel& model, const EvalSequence& seq,
                                  std::size_t t0, const ActionSegment& u_a,
                                  const ActionSegment& u_b, const DistanceParams& dist,
                                  Rng& prefix_noise, Rng& noise_a, Rng& noise_b) {
  check_fits(seq, t0, 0);
  const Pose2 s = prefix_state(model, seq, t0, prefix_noise);
  const Pose2 end_a = rollout_endpoint(model, s, u_a, noise_a);
  const Pose2 end_b = rollout_endpoint(model, s, u_b, noise_b);
  return state_distance(end_a, end_b, dist);
}

ProbeResult probe_identity(const WorldModel& model, std::span<const EvalSequence> sequences,
                           const ProbeConfig& cfg, const DistanceParams& dist, std::uint64_t seed,
                           std::size_t threads) {
  if (cfg.kind != ProbeKind::kIdentity) {
    throw std::invalid_argument("probe_identity: config kind is not identity");
  }
  dist.validate();
  return run_probe(sequences, cfg, threads, [&](const EvalSequence& seq, std::size_t s, std::size_t t0) {
    Rng noise(instance_seed(seed, cfg, s, t0));
    return identity_probe_instance(model, seq, t0, cfg.k, cfg.l, dist, noise);
  });
}

ProbeResult probe_inverse(const WorldModel& model, std::span<const EvalSequence> sequences,
                          const ProbeConfig& cfg, const DistanceParams& dist, std::uint64_t seed,
                          std::size_t threads) {
  if (cfg.kind != ProbeKind::kInverse) {
    throw std::invalid_argument("probe_inverse: config kind is not inverse");
  }
  dist.validate();
  return run_probe(sequences, cfg, threads, [&](const EvalSequence& seq, std::size_t s, std::size_t t0) {
    Rng noise(instance_seed(seed, cfg, s, t0));
    return inverse_probe_instance(model, seq, t0, cfg.k, cfg.l, dist, noise);
  });
}

ProbeResult probe_composition(const WorldModel& model, std::span<const EvalSequence> sequences,
                              const ProbeConfig& cfg, const DistanceParams& dist,
                              const DirichletParams& dirichlet, std::uint64_t noise_seed,
                              std::size_t threads) {
  if (cfg.kind != ProbeKind::kComposition) {
    throw std::invalid_argument("probe_composition: config kind is not composition");
  }
  dist.validate();
  dirichlet.validate();
  return run_probe(sequences, cfg, threads, [&](const EvalSequence& seq, std::size_t s, std::size_t t0) {
    const ActionSegment u_a = seq.actions.slice(t0, cfg.l);
    const DirichletParams w{dirichlet.concentration, instance_seed(dirichlet.seed, cfg, s, t0)};
    const ActionSegment u_b = make_compatibility_segment(u_a, w);
    const std::uint64_t base = instance_seed(noise_seed, cfg, s, t0);
    Rng prefix(derive_seed(base, {0}));
    Rng noise_a(derive_seed(base, {1}));
    Rng noise_b(derive_seed(base, {2}));
    return composition_probe_instance(model, seq, t0, u_a, u_b, dist, prefix, noise_a, noise_b);
  });
}

GacReport aggregate_gac(std::vector<ProbeResult> configs) {
  std::sort(configs.begin(), configs.end(), [](const ProbeResult& a, const ProbeResult& b) {
    return std::tie(a.kind, a.k, a.l) < std::tie(b.kind, b.k, b.l);
  });
  GacReport report;
  auto component = [&](ProbeKind kind) {
    double sum = 0.0;
    std::size_t n = 0;
    std::vector<double> pooled;
    for (const auto& c : configs) {
      if (c.kind != kind) continue;
      sum += c.mean;
      ++n;
      pooled.insert(pooled.end(), c.instance_errors.begin(), c.instance_errors.end());
    }
    if (n == 0) {
      throw std::invalid_argument("aggregate_gac: no " + std::string(to_string(kind)) +
                                  " configurations");
    }
    ComponentSummary out;
    out.mean = sum / static_cast<double>(n);
    out.stddev = summarize(pooled).stddev;
    return out;
  };
  report.identity = component(ProbeKind::kIdentity);
  report.inverse = component(ProbeKind::kInverse);
  report.composition = component(ProbeKind::kComposition);
  report.e_gac = (report.identity.mean + report.inverse.mean + report.composition.mean) / 3.0;
  report.configs = std::move(configs);
  return report;
}

std::vector<ProbeConfig> default_probe_grid() {
  std::vector<ProbeConfig> grid;
  for (std::size_t k : {1, 3, 5}) {
    grid.push_back({ProbeKind::kIdentity, k, 3, {}, 0});
  }
  for (std::size_t l : {1, 3, 5}) {
    grid.push_back({ProbeKind::kInverse, 1, l, {}, 0});
  }
  for (std::size_t l : {2, 4, 6}) {
    grid.push_back({ProbeKind::kComposition, 1, l, {}, 0});
  }
  return grid;
}

GacReport run_gac_suite(const WorldModel& model, std::span<const EvalSequence> sequences,
                        const ProbeSuiteConfig& cfg) {
  if (sequences.empty()) {
    throw std::invalid_argument("run_gac_suite: no evaluation sequences");
  }
  std::size_t horizon = sequences.front().actions.size();
  for (const auto& s : sequences) horizon = std::min(horizon, s.actions.size());

  std::vector<ProbeResult> results;
  for (ProbeConfig pc : cfg.grid) {
    pc.validate();
    if (pc.start_indices.empty()) {
      pc.start_indices = uniform_start_indices(horizon, pc.span(), cfg.starts_per_sequence);
    }
    switch (pc.kind) {
      case ProbeKind::kIdentity:
        results.push_back(probe_identity(model, sequences, pc, cfg.dist, cfg.seed, cfg.threads));
        break;
      case ProbeKind::kInverse:
        results.push_back(probe_inverse(model, sequences, pc, cfg.dist, cfg.seed, cfg.threads));
        break;
      case ProbeKind::kComposition:
        results.push_back(
            probe_composition(model, sequences, pc, cfg.dist, cfg.dirichlet, cfg.seed, cfg.threads));
        break;
    }
  }
  return aggregate_gac(std::move(results));
}

Trajectory align_trajectory(const Trajectory& traj, const Trajectory& reference,
                            double heading_weight) {
  if (!(heading_weight >= 0.0) || !std::isfinite(heading_weight)) {
    throw std::invalid_argument("align_trajectory: heading weight must be finite and >= 0");
  }
  if (traj.size() != reference.size()) {
    throw std::invalid_argument("align_trajectory: length mismatch");
  }
  if (traj.size() < 2) {
    throw std::invalid_argument("align_trajectory: need at least two poses");
  }
  const double n = static_cast<double>(traj.size());
  Eigen::Vector2d ct = Eigen::Vector2d::Zero();
  Eigen::Vector2d cr = Eigen::Vector2d::Zero();
  for (std::size_t i = 0; i < traj.size(); ++i) {
    ct += traj[i].position();
    cr += reference[i].position();
  }
  ct /= n;
  cr /= n;
  double dot = 0.0;
  double cross = 0.0;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const Eigen::Vector2d a = traj[i].position() - ct;
    const Eigen::Vector2d b = reference[i].position() - cr;
    dot += a.dot(b);
    cross += a.x() * b.y() - a.y() * b.x();
    const double dth = reference[i].theta() - traj[i].theta();
    dot += heading_weight * std::cos(dth);
    cross += heading_weight * std::sin(dth);
  }
  const double phi = std::atan2(cross, dot);
  const Pose2 rot(phi, 0.0, 0.0);
  const Pose2 g(phi, cr - rot.rotation() * ct);
  Trajectory out;
  out.poses.reserve(traj.size());
  for (const auto& p : traj.poses) {
    out.poses.push_back(se2_compose(g, p));
  }
  return out;
}

double gar_error(std::span<const Trajectory> trajectories, const DistanceParams& dist, bool aligned) {
  dist.validate();
  const std::size_t n = trajectories.size();
  if (n < 2) {
    throw std::invalid_argument("gar_error: need at least two trajectories");
  }
  const std::size_t horizon = trajectories.front().size();
  if (horizon == 0) {
    throw std::invalid_argument("gar_error: empty trajectories");
  }
  for (const auto& t : trajectories) {
    if (t.size() != horizon) {
      throw std::invalid_argument("gar_error: trajectory length mismatch");
    }
  }
  std::vector<Trajectory> aligned_storage;
  std::span<const Trajectory> trajs = trajectories;
  if (aligned) {
    aligned_storage.reserve(n);
    aligned_storage.push_back(trajectories.front());
    for (std::size_t i = 1; i < n; ++i) {
      aligned_storage.push_back(align_trajectory(trajectories[i], trajectories.front(),
                                                 dist.alpha_rot * dist.alpha_rot));
    }
    trajs = aligned_storage;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double pair = 0.0;
      for (std::size_t t = 0; t < horizon; ++t) {
        pair += state_distance(trajs[i][t], trajs[j][t], dist);
      }
      total += pair / static_cast<double>(horizon);
    }
  }
  return 2.0 * total / (static_cast<double>(n) * static_cast<double>(n - 1));
}

GarEntry evaluate_gar(const WorldModel& model, std::span<const EvalSequence> sequences,
                      std::size_t horizon, std::size_t n_rollouts, const DistanceParams& dist,
                      std::uint64_t seed, std::size_t threads) {
  if (n_rollouts < 2) {
    throw std::invalid_argument("evaluate_gar: need at least two rollouts");
  }
  if (sequences.empty()) {
    throw std::invalid_argument("evaluate_gar: no evaluation sequences");
  }
  if (horizon < 2) {
    throw std::invalid_argument("evaluate_gar: horizon must be >= 2");
  }
  for (const auto& s : sequences) {
    if (s.actions.size() < horizon) {
      throw std::out_of_range("evaluate_gar: sequence shorter than horizon " +
                              std::to_string(horizon));
    }
  }
  GarEntry out;
  out.horizon = horizon;
  out.n_rollouts = n_rollouts;
  out.aligned_per_sequence.assign(sequences.size(), 0.0);
  out.nonaligned_per_sequence.assign(sequences.size(), 0.0);
  parallel_for(sequences.size(), threads, [&](std::size_t s) {
    const ActionSegment actions = sequences[s].actions.slice(0, horizon);
    std::vector<Trajectory> trajs;
    trajs.reserve(n_rollouts);
    for (std::size_t r = 0; r < n_rollouts; ++r) {
      Trajectory full = rollout(model, sequences[s].start, actions, derive_seed(seed, {s, r}));
      full.poses.erase(full.poses.begin());
      trajs.push_back(std::move(full));
    }
    out.nonaligned_per_sequence[s] = gar_error(trajs, dist, false);
    out.aligned_per_sequence[s] = gar_error(trajs, dist, true);
  });
  out.aligned = summarize(out.aligned_per_sequence);
  out.nonaligned = summarize(out.nonaligned_per_sequence);
  return out;
}

GarReport run_gar_suite(const WorldModel& model, std::span<const EvalSequence> sequences,
                        std::span<const std::size_t> horizons, std::size_t n_rollouts,
                        const DistanceParams& dist, std::uint64_t seed, std::size_t threads) {
  GarReport report;
  for (std::size_t h : horizons) {
    report.entries.push_back(evaluate_gar(model, sequences, h, n_rollouts, dist, seed, threads));
  }
  return report;
}

}  // namespace gawm
