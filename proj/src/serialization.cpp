#include "gawm/serialization.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace gawm {

namespace {

double number(const Json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw FormatError(std::string("missing numeric field '") + key + "'");
  }
  return j.at(key).get<double>();
}

}  // namespace

std::string format_double(double v) {
  // nlohmann emits the shortest representation that round-trips.
  return Json(v).dump();
}

Json to_json(const Pose2& pose) {
  return Json{{"theta", pose.theta()}, {"x", pose.x()}, {"y", pose.y()}};
}

Pose2 pose_from_json(const Json& j) {
  if (!j.is_object()) {
    throw FormatError("pose must be a JSON object");
  }
  return Pose2(number(j, "theta"), number(j, "x"), number(j, "y"));
}

Json to_json(const ActionSegment& segment) {
  Json arr = Json::array();
  for (const auto& a : segment.increments) {
    arr.push_back(Json::array({a.dx, a.dy, a.dtheta}));
  }
  return arr;
}

ActionSegment segment_from_json(const Json& j) {
  if (!j.is_array()) {
    throw FormatError("action segment must be a JSON array");
  }
  std::vector<ActionIncrement> incs;
  incs.reserve(j.size());
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 3 || !e[0].is_number() || !e[1].is_number() ||
        !e[2].is_number()) {
      throw FormatError("action must be a [dx, dy, dtheta] triple");
    }
    incs.push_back({e[0].get<double>(), e[1].get<double>(), e[2].get<double>()});
  }
  return ActionSegment(std::move(incs));
}

std::string trajectory_to_jsonl(const TrajectoryHeader& header, const Trajectory& traj) {
  std::string out = Json{{"seed", header.seed},
                         {"model", header.model},
                         {"actions_file", header.actions_file}}
                        .dump();
  out += '\n';
  for (const auto& p : traj.poses) {
    out += to_json(p).dump();
    out += '\n';
  }
  return out;
}

std::pair<TrajectoryHeader, Trajectory> trajectory_from_jsonl(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  TrajectoryHeader header;
  Trajectory traj;
  bool have_header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw FormatError("trajectory line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!have_header) {
      if (!j.is_object() || !j.contains("seed") || !j.contains("model")) {
        throw FormatError("trajectory file must start with a header line");
      }
      header.seed = j.at("seed").get<std::uint64_t>();
      header.model = j.at("model").get<std::string>();
      header.actions_file = j.value("actions_file", std::string{});
      have_header = true;
      continue;
    }
    traj.poses.push_back(pose_from_json(j));
  }
  if (!have_header) {
    throw FormatError("empty trajectory file");
  }
  if (traj.poses.empty()) {
    throw FormatError("trajectory file holds no poses");
  }
  return {header, traj};
}

Json to_json(const Checkpoint& ckpt) {
  const auto& p = ckpt.encoder.projection();
  Json proj = Json::array();
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < p.cols(); ++c) row.push_back(p(r, c));
    proj.push_back(std::move(row));
  }
  Json params = Json::array();
  for (Eigen::Index i = 0; i < ckpt.net.params().size(); ++i) params.push_back(ckpt.net.params()(i));
  return Json{{"version", kCheckpointVersion},
              {"label", ckpt.label},
              {"train_steps", ckpt.train_steps},
              {"encoder",
               {{"seed", ckpt.encoder.seed()},
                {"latent_dim", ckpt.encoder.latent_dim()},
                {"obs_noise_sigma", ckpt.encoder.obs_noise_sigma()},
                {"projection", std::move(proj)}}},
              {"network",
               {{"latent_dim", ckpt.net.latent_dim()},
                {"hidden", ckpt.net.hidden()},
                {"params", std::move(params)}}}};
}

Checkpoint checkpoint_from_json(const Json& j) {
  try {
    if (j.at("version").get<std::string>() != kCheckpointVersion) {
      throw FormatError("unsupported checkpoint version '" + j.at("version").get<std::string>() + "'");
    }
    const auto& e = j.at("encoder");
    const auto d = e.at("latent_dim").get<std::size_t>();
    const auto& rows = e.at("projection");
    if (rows.size() != d) {
      throw FormatError("checkpoint projection has wrong row count");
    }
    Eigen::MatrixXd proj(static_cast<Eigen::Index>(d), 4);
    for (std::size_t r = 0; r < d; ++r) {
      if (rows[r].size() != 4) throw FormatError("checkpoint projection rows must have 4 entries");
      for (std::size_t c = 0; c < 4; ++c) {
        proj(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c].get<double>();
      }
    }
    FeatureEncoder encoder(std::move(proj), e.at("obs_noise_sigma").get<double>(),
                           e.at("seed").get<std::uint64_t>());
    const auto& n = j.at("network");
    const auto& pj = n.at("params");
    Eigen::VectorXd params(static_cast<Eigen::Index>(pj.size()));
    for (std::size_t i = 0; i < pj.size(); ++i) params(static_cast<Eigen::Index>(i)) = pj[i].get<double>();
    DynamicsNet net(n.at("latent_dim").get<std::size_t>(), n.at("hidden").get<std::size_t>(),
                    std::move(params));
    return Checkpoint{std::move(encoder), std::move(net), j.value("train_steps", std::uint64_t{0}),
                      j.value("label", std::string{})};
  } catch (const Json::exception& ex) {
    throw FormatError(std::string("malformed checkpoint: ") + ex.what());
  } catch (const std::invalid_argument& ex) {
    throw FormatError(std::string("malformed checkpoint: ") + ex.what());
  }
}

std::string loss_curve_csv(const std::vector<LossRow>& rows) {
  std::string out = "step,active_constraint,l_pred,l_ga,total\n";
  for (const auto& r : rows) {
    out += std::to_string(r.step) + ',' + std::string(to_string(r.active)) + ',' +
           format_double(r.l_pred) + ',' + format_double(r.l_ga) + ',' + format_double(r.total) +
           '\n';
  }
  return out;
}

Json to_json(const ProbeResult& r) {
  return Json{{"kind", to_string(r.kind)},       {"k", r.k},
              {"l", r.l},                        {"mean", r.mean},
              {"std", r.stddev},                 {"start_indices", r.start_indices},
              {"instances", r.instance_errors.size()}, {"instance_errors", r.instance_errors}};
}

Json to_json(const GacReport& report, std::string_view model) {
  Json configs = Json::array();
  for (const auto& c : report.configs) configs.push_back(to_json(c));
  auto comp = [](const ComponentSummary& s) { return Json{{"mean", s.mean}, {"std", s.stddev}}; };
  return Json{{"model", model},
              {"configs", std::move(configs)},
              {"identity", comp(report.identity)},
              {"inverse", comp(report.inverse)},
              {"composition", comp(report.composition)},
              {"e_gac", report.e_gac}};
}

std::string gac_csv(const GacReport& report, std::string_view model) {
  std::string out = "model,kind,k,l,mean,std\n";
  for (const auto& c : report.configs) {
    out += std::string(model) + ',' + std::string(to_string(c.kind)) + ',' + std::to_string(c.k) +
           ',' + std::to_string(c.l) + ',' + format_double(c.mean) + ',' + format_double(c.stddev) +
           '\n';
  }
  out += "# summary: model,id_mean,id_std,inv_mean,inv_std,comp_mean,comp_std,e_gac\n";
  out += std::string(model) + ",summary," + format_double(report.identity.mean) + ',' +
         format_double(report.identity.stddev) + ',' + format_double(report.inverse.mean) + ',' +
         format_double(report.inverse.stddev) + ',' + format_double(report.composition.mean) + ',' +
         format_double(report.composition.stddev) + ',' + format_double(report.e_gac) + '\n';
  return out;
}

std::string gac_gnuplot(const GacReport& report, std::string_view model) {
  std::ostringstream os;
  os << "# model: " << model << "\n# kind k l mean std\n";
  for (const auto& c : report.configs) {
    os << to_string(c.kind) << ' ' << c.k << ' ' << c.l << ' ' << format_double(c.mean) << ' '
       << format_double(c.stddev) << '\n';
  }
  return os.str();
}

Json to_json(const GarReport& report, std::string_view model) {
  Json entries = Json::array();
  for (const auto& e : report.entries) {
    entries.push_back(Json{{"horizon", e.horizon},
                           {"n_rollouts", e.n_rollouts},
                           {"aligned", {{"mean", e.aligned.mean}, {"std", e.aligned.stddev}}},
                           {"nonaligned", {{"mean", e.nonaligned.mean}, {"std", e.nonaligned.stddev}}},
                           {"aligned_per_sequence", e.aligned_per_sequence},
                           {"nonaligned_per_sequence", e.nonaligned_per_sequence}});
  }
  return Json{{"model", model}, {"entries", std::move(entries)}};
}

std::string gar_csv(const GarReport& report, std::string_view model) {
  std::string out = "model,horizon,n_rollouts,aligned_mean,aligned_std,nonaligned_mean,nonaligned_std\n";
  for (const auto& e : report.entries) {
    out += std::string(model) + ',' + std::to_string(e.horizon) + ',' + std::to_string(e.n_rollouts) +
           ',' + format_double(e.aligned.mean) + ',' + format_double(e.aligned.stddev) + ',' +
           format_double(e.nonaligned.mean) + ',' + format_double(e.nonaligned.stddev) + '\n';
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open '" + path.string() + "' for reading");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
    }
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) {
      throw std::runtime_error("write to '" + tmp.string() + "' failed");
    }
  }
  std::filesystem::rename(tmp, path);
}

std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace gawm
