#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gawm/action_segments.hpp"
#include "gawm/ga_metrics.hpp"
#include "gawm/ga_training.hpp"
#include "gawm/latent_model.hpp"
#include "gawm/reference_models.hpp"
#include "gawm/se2.hpp"

namespace gawm {

using Json = nlohmann::json;

/// Malformed input file or document.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// {"theta": f64, "x": f64, "y": f64}
Json to_json(const Pose2& pose);
Pose2 pose_from_json(const Json& j);

// [[dx, dy, dtheta], ...]
Json to_json(const ActionSegment& segment);
ActionSegment segment_from_json(const Json& j);

struct TrajectoryHeader {
  std::uint64_t seed = 0;
  std::string model;
  std::string actions_file;
};

/// JSON Lines: a header object, then one pose object per line.
std::string trajectory_to_jsonl(const TrajectoryHeader& header, const Trajectory& traj);
std::pair<TrajectoryHeader, Trajectory> trajectory_from_jsonl(std::string_view text);

inline constexpr std::string_view kCheckpointVersion = "gawm-checkpoint/1";

struct Checkpoint {
  FeatureEncoder encoder;
  DynamicsNet net;
  std::uint64_t train_steps = 0;
  std::string label;
};

Json to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const Json& j);

std::string loss_curve_csv(const std::vector<LossRow>& rows);

Json to_json(const ProbeResult& r);
Json to_json(const GacReport& report, std::string_view model);
/// Flat rows (model, kind, k, l, mean, std) plus a summary row
/// (model, summary, id, inv, comp, e_gac).
std::string gac_csv(const GacReport& report, std::string_view model);
/// kind k l mean std, whitespace separated with a comment header.
std::string gac_gnuplot(const GacReport& report, std::string_view model);

Json to_json(const GarReport& report, std::string_view model);
/// Rows (model, horizon, n_rollouts, aligned_mean, aligned_std, nonaligned_mean, nonaligned_std).
std::string gar_csv(const GarReport& report, std::string_view model);

/// Shortest round-trip decimal form, identical to the JSON writer's.
std::string format_double(double v);

std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary file and rename, so readers never see partial output.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view data);

}  // namespace gawm
