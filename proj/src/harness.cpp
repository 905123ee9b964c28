#include "gawm/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>

#include "gawm/random.hpp"

namespace gawm {

namespace fs = std::filesystem;

namespace {

constexpr const char* kToolVersion = "gawm 0.1.0";

// ---------------------------------------------------------------------------
// Strict JSON reading

class Reader {
 public:
  Reader(const Json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) fail("", "expected an object");
  }

  /// Throws on any key not in `known`.
  void allow(std::initializer_list<const char*> known) const {
    std::set<std::string> names(known.begin(), known.end());
    for (const auto& [key, _] : obj_.items()) {
      if (!names.count(key)) fail(key, "unknown key");
    }
  }

  bool has(const char* key) const { return obj_.contains(key); }
  const Json& at(const char* key) const { return obj_.at(key); }
  std::string where(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void get(const char* key, double& out) const {
    if (!has(key)) return;
    if (!at(key).is_number()) fail(key, "expected a number");
    out = at(key).get<double>();
    if (!std::isfinite(out)) fail(key, "must be finite");
  }

  void get(const char* key, std::size_t& out) const {
    if (!has(key)) return;
    if (!at(key).is_number_unsigned()) fail(key, "expected a non-negative integer");
    out = at(key).get<std::size_t>();
  }

  void get(const char* key, std::uint64_t& out, int) const {
    if (!has(key)) return;
    if (!at(key).is_number_unsigned()) fail(key, "expected a non-negative integer");
    out = at(key).get<std::uint64_t>();
  }

  void get(const char* key, bool& out) const {
    if (!has(key)) return;
    if (!at(key).is_boolean()) fail(key, "expected a boolean");
    out = at(key).get<bool>();
  }

  void get(const char* key, std::string& out) const {
    if (!has(key)) return;
    if (!at(key).is_string()) fail(key, "expected a string");
    out = at(key).get<std::string>();
  }

  void get(const char* key, ActionIncrement& out) const {
    if (!has(key)) return;
    const auto& v = at(key);
    if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() ||
        !v[2].is_number()) {
      fail(key, "expected [dx, dy, dtheta]");
    }
    out = {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
  }

  template <typename Parse>
  void get_enum(const char* key, Parse parse) const {
    if (!has(key)) return;
    if (!at(key).is_string()) fail(key, "expected a string");
    try {
      parse(at(key).get<std::string>());
    } catch (const std::exception& e) {
      fail(key, e.what());
    }
  }

  Reader child(const char* key) const { return Reader(at(key), where(key)); }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    std::string loc = path_;
    if (!key.empty()) loc = loc.empty() ? key : loc + "." + key;
    throw ConfigError("config" + (loc.empty() ? std::string() : " '" + loc + "'") + ": " + msg);
  }

 private:
  const Json& obj_;
  std::string path_;
};

Json increment_json(const ActionIncrement& a) { return Json::array({a.dx, a.dy, a.dtheta}); }

Json violation_json(const ViolationConfig& v) {
  return Json{{"drift_bias", increment_json(v.drift_bias)},
              {"saturation_scale",
               v.saturation_enabled() ? Json(v.saturation_scale) : Json(nullptr)},
              {"gain_pos", v.gain_pos},
              {"gain_neg", v.gain_neg},
              {"noise_sigma", v.noise_sigma}};
}

ViolationConfig read_violation(const Reader& r) {
  r.allow({"drift_bias", "saturation_scale", "gain_pos", "gain_neg", "noise_sigma"});
  ViolationConfig v;
  r.get("drift_bias", v.drift_bias);
  if (r.has("saturation_scale") && !r.at("saturation_scale").is_null()) {
    r.get("saturation_scale", v.saturation_scale);
  }
  r.get("gain_pos", v.gain_pos);
  r.get("gain_neg", v.gain_neg);
  r.get("noise_sigma", v.noise_sigma);
  return v;
}

Json probe_config_json(const ProbeConfig& p) {
  return Json{{"kind", to_string(p.kind)},
              {"k", p.k},
              {"l", p.l},
              {"start_indices", p.start_indices},
              {"n_sequences", p.n_sequences}};
}

ProbeConfig read_probe_config(const Reader& r) {
  r.allow({"kind", "k", "l", "start_indices", "n_sequences"});
  ProbeConfig p;
  r.get_enum("kind", [&](const std::string& s) { p.kind = probe_kind_from_string(s); });
  r.get("k", p.k);
  r.get("l", p.l);
  r.get("n_sequences", p.n_sequences);
  if (r.has("start_indices")) {
    const auto& v = r.at("start_indices");
    if (!v.is_array()) r.fail("start_indices", "expected an array");
    for (const auto& e : v) {
      if (!e.is_number_unsigned()) r.fail("start_indices", "expected non-negative integers");
      p.start_indices.push_back(e.get<std::size_t>());
    }
  }
  return p;
}

template <typename T>
std::vector<T> read_number_list(const Reader& r, const char* key, std::vector<T> fallback) {
  if (!r.has(key)) return fallback;
  const auto& v = r.at(key);
  if (!v.is_array()) r.fail(key, "expected an array");
  std::vector<T> out;
  for (const auto& e : v) {
    if constexpr (std::is_integral_v<T>) {
      if (!e.is_number_unsigned()) r.fail(key, "expected non-negative integers");
    } else {
      if (!e.is_number()) r.fail(key, "expected numbers");
    }
    out.push_back(e.get<T>());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output helpers

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Writes a file atomically and records its hash under `outputs`.
void emit(const fs::path& dir, const std::string& name, const std::string& contents,
          Json& outputs) {
  write_file_atomic(dir / name, contents);
  outputs[name] = fnv1a_hex(contents);
}

Json base_manifest(const ExperimentConfig& cfg, std::string_view command) {
  return Json{{"tool", kToolVersion},
              {"command", command},
              {"config_hash", config_hash(cfg)},
              {"seed", cfg.seed},
              {"seeds", to_json(seed_plan(cfg.seed))},
              {"threads", cfg.threads}};
}

StageResult finish(const fs::path& dir, Json manifest, Json outputs, Clock::time_point t0) {
  manifest["outputs"] = std::move(outputs);
  manifest["wall_seconds"] = seconds_since(t0);
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
  return {dir, std::move(manifest)};
}

fs::path data_root(const ExperimentConfig& cfg) {
  return cfg.train.dataset_path.empty() ? fs::path(cfg.output_dir) / "data"
                                        : fs::path(cfg.train.dataset_path);
}

Dataset load_split(const ExperimentConfig& cfg, const char* split) {
  const auto dir = data_root(cfg) / split;
  if (!fs::is_directory(dir)) {
    throw ConfigError("missing dataset '" + dir.string() + "'; run gen-data first");
  }
  return load_dataset(dir);
}

std::string sanitize(std::string_view s) {
  std::string out;
  for (char c : s) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-';
    out.push_back(keep ? c : '_');
  }
  return out;
}

std::vector<double> parse_numbers(std::string_view text, std::string_view ref) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find(',', pos), text.size());
    const std::string piece(text.substr(pos, end - pos));
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(piece, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (piece.empty() || used != piece.size()) {
      throw ConfigError("model ref '" + std::string(ref) + "': bad number '" + piece + "'");
    }
    out.push_back(v);
    pos = end + 1;
  }
  return out;
}

ProbeSuiteConfig probe_suite(const ExperimentConfig& cfg) {
  const auto seeds = seed_plan(cfg.seed);
  ProbeSuiteConfig pc;
  pc.grid = cfg.probe.grid;
  pc.starts_per_sequence = cfg.probe.starts_per_sequence;
  pc.dist.alpha_rot = cfg.probe.alpha_rot;
  pc.dirichlet = {cfg.probe.dirichlet_concentration, seeds.dirichlet};
  pc.seed = seeds.probe;
  pc.threads = cfg.threads;
  return pc;
}

GarReport gar_suite(const ExperimentConfig& cfg, const WorldModel& model,
                    std::span<const EvalSequence> seqs) {
  DistanceParams dist;
  dist.alpha_rot = cfg.probe.alpha_rot;
  return run_gar_suite(model, seqs, cfg.gar.horizons, cfg.gar.n_rollouts, dist,
                       seed_plan(cfg.seed).gar, cfg.threads);
}

FeatureEncoder make_encoder(const ExperimentConfig& cfg) {
  return FeatureEncoder::sample(cfg.encoder.latent_dim, seed_plan(cfg.seed).encoder,
                                cfg.encoder.obs_noise);
}

std::string dataset_fingerprint(const Dataset& ds) {
  std::string buf;
  for (const auto& ex : ds) {
    for (const auto& p : ex.poses.poses) {
      buf += format_double(p.x()) + format_double(p.y()) + format_double(p.theta());
    }
  }
  return fnv1a_hex(buf);
}

double tail_mean_pred(const std::vector<LossRow>& curve) {
  const std::size_t n = std::min<std::size_t>(1000, curve.size());
  if (n == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = curve.size() - n; i < curve.size(); ++i) s += curve[i].l_pred;
  return s / static_cast<double>(n);
}

struct TrainedModel {
  Checkpoint checkpoint;
  std::string checkpoint_hash;
  double eval_pred_loss = 0.0;
};

/// Fine-tunes from the pretrained checkpoint and writes checkpoint, curve and metrics.
TrainedModel train_into(const ExperimentConfig& cfg, const GALossConfig& ga,
                        const std::string& label, const fs::path& dir, Json& outputs) {
  const auto seeds = seed_plan(cfg.seed);
  const Dataset train_ds = load_split(cfg, "train");
  const Dataset eval_ds = load_split(cfg, "eval");
  Checkpoint base = pretrained_checkpoint(cfg);

  TrainRunConfig run;
  run.steps = cfg.train.steps;
  run.batch_size = cfg.train.batch_size;
  run.learning_rate = cfg.train.learning_rate;
  run.seed = seeds.train;
  run.optimizer = cfg.train.optimizer;
  run.dataset_path = (data_root(cfg) / "train").string();
  GALossConfig g = ga;
  g.dirichlet.seed = seeds.dirichlet;

  TrainResult res = train(run, g, train_ds, base.encoder, base.net);
  TrainedModel out{Checkpoint{base.encoder, res.net, base.train_steps + run.steps, label}, "", 0.0};
  out.eval_pred_loss = dataset_prediction_loss(res.net, base.encoder, eval_ds, seeds.pred_eval);

  const std::string ckpt = to_json(out.checkpoint).dump() + "\n";
  out.checkpoint_hash = fnv1a_hex(ckpt);
  emit(dir, "checkpoint.json", ckpt, outputs);
  emit(dir, "loss.csv", loss_curve_csv(res.curve), outputs);
  const Json metrics{{"label", label},
                     {"eval_pred_loss", out.eval_pred_loss},
                     {"train_pred_loss_tail", tail_mean_pred(res.curve)},
                     {"steps", run.steps},
                     {"pretrain_steps", base.train_steps}};
  emit(dir, "metrics.json", metrics.dump(2) + "\n", outputs);
  return out;
}

std::string ga_summary(const GALossConfig& ga) {
  std::string s;
  for (auto c : ga.constraints) {
    if (!s.empty()) s += '+';
    s += to_string(c);
  }
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void ExperimentConfig::validate() const {
  auto check = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("config: " + msg);
  };
  check(threads >= 1, "threads must be >= 1");
  check(!output_dir.empty(), "output_dir must not be empty");
  check(dataset.train_trajectories >= 1, "dataset.train_trajectories must be >= 1");
  check(dataset.eval_trajectories >= 1, "dataset.eval_trajectories must be >= 1");
  check(dataset.length >= 1, "dataset.length must be >= 1");
  for (double s : {dataset.actions.stddev.dx, dataset.actions.stddev.dy,
                   dataset.actions.stddev.dtheta}) {
    check(std::isfinite(s) && s >= 0.0, "dataset.actions.stddev must be finite and >= 0");
  }
  check(dataset.actions.mean.is_local(), "dataset.actions.mean must be a local increment");
  check(std::isfinite(dataset.start_position_range) && dataset.start_position_range >= 0.0,
        "dataset.start_position_range must be finite and >= 0");
  check(encoder.latent_dim >= 4, "encoder.latent_dim must be >= 4");
  check(std::isfinite(encoder.obs_noise) && encoder.obs_noise >= 0.0,
        "encoder.obs_noise must be finite and >= 0");
  check(network.hidden >= 1, "network.hidden must be >= 1");
  check(std::isfinite(network.init_scale) && network.init_scale >= 0.0,
        "network.init_scale must be finite and >= 0");
  check(pretrain.batch_size >= 1, "pretrain.batch_size must be >= 1");
  check(std::isfinite(pretrain.learning_rate) && pretrain.learning_rate >= 0.0,
        "pretrain.learning_rate must be finite and >= 0");
  check(probe.starts_per_sequence >= 1, "probe.starts_per_sequence must be >= 1");
  check(!probe.grid.empty(), "probe.grid must not be empty");
  check(gar.n_rollouts >= 2, "gar.n_rollouts must be >= 2");
  check(!gar.horizons.empty(), "gar.horizons must not be empty");
  for (auto h : gar.horizons) {
    check(h >= 1 && h <= dataset.length, "gar.horizons must lie in [1, dataset.length]");
  }
  check(!ablate.lambda_values.empty(), "ablate.lambda_values must not be empty");
  check(!ablate.span_values.empty(), "ablate.span_values must not be empty");
  for (double v : ablate.lambda_values) {
    check(std::isfinite(v) && v >= 0.0, "ablate.lambda_values must be finite and >= 0");
  }
  for (auto v : ablate.span_values) check(v >= 1, "ablate.span_values must be >= 1");
  try {
    dataset.model.validate();
    ga.validate();
    for (const auto& p : probe.grid) {
      p.validate();
      check(p.span() <= dataset.length, "probe span exceeds dataset.length");
    }
    DistanceParams{probe.alpha_rot}.validate();
    DirichletParams{probe.dirichlet_concentration, 0}.validate();
    TrainRunConfig run;
    run.steps = train.steps;
    run.batch_size = train.batch_size;
    run.learning_rate = train.learning_rate;
    run.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  check(ga.max_span <= dataset.length, "ga.max_span exceeds dataset.length");
}

SeedPlan seed_plan(std::uint64_t root) {
  SeedPlan s;
  s.train_data = derive_seed(root, {1});
  s.eval_data = derive_seed(root, {2});
  s.encoder = derive_seed(root, {3});
  s.init = derive_seed(root, {4});
  s.pretrain = derive_seed(root, {5});
  s.train = derive_seed(root, {6});
  s.dirichlet = derive_seed(root, {7});
  s.probe = derive_seed(root, {8});
  s.gar = derive_seed(root, {9});
  s.pred_eval = derive_seed(root, {10});
  return s;
}

Json to_json(const SeedPlan& s) {
  return Json{{"train_data", s.train_data}, {"eval_data", s.eval_data}, {"encoder", s.encoder},
              {"init", s.init},             {"pretrain", s.pretrain},   {"train", s.train},
              {"dirichlet", s.dirichlet},   {"probe", s.probe},         {"gar", s.gar},
              {"pred_eval", s.pred_eval}};
}

Json to_json(const ExperimentConfig& c) {
  Json grid = Json::array();
  for (const auto& p : c.probe.grid) grid.push_back(probe_config_json(p));
  Json constraints = Json::array();
  for (auto k : c.ga.constraints) constraints.push_back(to_string(k));
  return Json{
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"threads", c.threads},
      {"dataset",
       {{"train_trajectories", c.dataset.train_trajectories},
        {"eval_trajectories", c.dataset.eval_trajectories},
        {"length", c.dataset.length},
        {"actions",
         {{"mean", increment_json(c.dataset.actions.mean)},
          {"stddev", increment_json(c.dataset.actions.stddev)}}},
        {"start_position_range", c.dataset.start_position_range},
        {"model", violation_json(c.dataset.model)}}},
      {"encoder", {{"latent_dim", c.encoder.latent_dim}, {"obs_noise", c.encoder.obs_noise}}},
      {"network", {{"hidden", c.network.hidden}, {"init_scale", c.network.init_scale}}},
      {"pretrain",
       {{"steps", c.pretrain.steps},
        {"batch_size", c.pretrain.batch_size},
        {"learning_rate", c.pretrain.learning_rate},
        {"optimizer", to_string(c.pretrain.optimizer)}}},
      {"train",
       {{"steps", c.train.steps},
        {"batch_size", c.train.batch_size},
        {"learning_rate", c.train.learning_rate},
        {"optimizer", to_string(c.train.optimizer)},
        {"dataset_path", c.train.dataset_path}}},
      {"ga",
       {{"lambda_id", c.ga.lambda_id},
        {"lambda_inv", c.ga.lambda_inv},
        {"lambda_comp", c.ga.lambda_comp},
        {"lambda_ga", c.ga.lambda_ga},
        {"max_span", c.ga.max_span},
        {"dirichlet_concentration", c.ga.dirichlet.concentration},
        {"mode", to_string(c.ga.mode)},
        {"clean_anchor", c.ga.clean_anchor},
        {"constraints", std::move(constraints)}}},
      {"probe",
       {{"grid", std::move(grid)},
        {"starts_per_sequence", c.probe.starts_per_sequence},
        {"alpha_rot", c.probe.alpha_rot},
        {"dirichlet_concentration", c.probe.dirichlet_concentration}}},
      {"gar", {{"n_rollouts", c.gar.n_rollouts}, {"horizons", c.gar.horizons}}},
      {"ablate",
       {{"lambda_values", c.ablate.lambda_values}, {"span_values", c.ablate.span_values}}}};
}

ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  const Reader r(j, "");
  r.allow({"seed", "output_dir", "threads", "dataset", "encoder", "network", "pretrain", "train",
           "ga", "probe", "gar", "ablate"});
  r.get("seed", c.seed, 0);
  r.get("output_dir", c.output_dir);
  r.get("threads", c.threads);
  if (r.has("dataset")) {
    const auto d = r.child("dataset");
    d.allow({"train_trajectories", "eval_trajectories", "length", "actions",
             "start_position_range", "model"});
    d.get("train_trajectories", c.dataset.train_trajectories);
    d.get("eval_trajectories", c.dataset.eval_trajectories);
    d.get("length", c.dataset.length);
    d.get("start_position_range", c.dataset.start_position_range);
    if (d.has("actions")) {
      const auto a = d.child("actions");
      a.allow({"mean", "stddev"});
      a.get("mean", c.dataset.actions.mean);
      a.get("stddev", c.dataset.actions.stddev);
    }
    if (d.has("model")) c.dataset.model = read_violation(d.child("model"));
  }
  if (r.has("encoder")) {
    const auto e = r.child("encoder");
    e.allow({"latent_dim", "obs_noise"});
    e.get("latent_dim", c.encoder.latent_dim);
    e.get("obs_noise", c.encoder.obs_noise);
  }
  if (r.has("network")) {
    const auto n = r.child("network");
    n.allow({"hidden", "init_scale"});
    n.get("hidden", c.network.hidden);
    n.get("init_scale", c.network.init_scale);
  }
  if (r.has("pretrain")) {
    const auto p = r.child("pretrain");
    p.allow({"steps", "batch_size", "learning_rate", "optimizer"});
    p.get("steps", c.pretrain.steps);
    p.get("batch_size", c.pretrain.batch_size);
    p.get("learning_rate", c.pretrain.learning_rate);
    p.get_enum("optimizer",
               [&](const std::string& s) { c.pretrain.optimizer = optimizer_from_string(s); });
  }
  if (r.has("train")) {
    const auto t = r.child("train");
    t.allow({"steps", "batch_size", "learning_rate", "optimizer", "dataset_path"});
    t.get("steps", c.train.steps);
    t.get("batch_size", c.train.batch_size);
    t.get("learning_rate", c.train.learning_rate);
    t.get("dataset_path", c.train.dataset_path);
    t.get_enum("optimizer",
               [&](const std::string& s) { c.train.optimizer = optimizer_from_string(s); });
  }
  if (r.has("ga")) {
    const auto g = r.child("ga");
    g.allow({"lambda_id", "lambda_inv", "lambda_comp", "lambda_ga", "max_span",
             "dirichlet_concentration", "mode", "clean_anchor", "constraints"});
    g.get("lambda_id", c.ga.lambda_id);
    g.get("lambda_inv", c.ga.lambda_inv);
    g.get("lambda_comp", c.ga.lambda_comp);
    g.get("lambda_ga", c.ga.lambda_ga);
    g.get("max_span", c.ga.max_span);
    g.get("dirichlet_concentration", c.ga.dirichlet.concentration);
    g.get("clean_anchor", c.ga.clean_anchor);
    g.get_enum("mode", [&](const std::string& s) { c.ga.mode = rollout_mode_from_string(s); });
    if (g.has("constraints")) {
      const auto& v = g.at("constraints");
      if (!v.is_array()) g.fail("constraints", "expected an array");
      c.ga.constraints.clear();
      for (const auto& e : v) {
        if (!e.is_string()) g.fail("constraints", "expected strings");
        try {
          c.ga.constraints.push_back(constraint_from_string(e.get<std::string>()));
        } catch (const std::exception& ex) {
          g.fail("constraints", ex.what());
        }
      }
    }
  }
  if (r.has("probe")) {
    const auto p = r.child("probe");
    p.allow({"grid", "starts_per_sequence", "alpha_rot", "dirichlet_concentration"});
    p.get("starts_per_sequence", c.probe.starts_per_sequence);
    p.get("alpha_rot", c.probe.alpha_rot);
    p.get("dirichlet_concentration", c.probe.dirichlet_concentration);
    if (p.has("grid")) {
      const auto& v = p.at("grid");
      if (!v.is_array()) p.fail("grid", "expected an array");
      c.probe.grid.clear();
      for (std::size_t i = 0; i < v.size(); ++i) {
        c.probe.grid.push_back(
            read_probe_config(Reader(v[i], p.where("grid") + "[" + std::to_string(i) + "]")));
      }
    }
  }
  if (r.has("gar")) {
    const auto g = r.child("gar");
    g.allow({"n_rollouts", "horizons"});
    g.get("n_rollouts", c.gar.n_rollouts);
    c.gar.horizons = read_number_list<std::size_t>(g, "horizons", c.gar.horizons);
  }
  if (r.has("ablate")) {
    const auto a = r.child("ablate");
    a.allow({"lambda_values", "span_values"});
    c.ablate.lambda_values = read_number_list<double>(a, "lambda_values", c.ablate.lambda_values);
    c.ablate.span_values = read_number_list<std::size_t>(a, "span_values", c.ablate.span_values);
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file '" + path.string() + "' not found");
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const ExperimentConfig& cfg) { return fnv1a_hex(to_json(cfg).dump()); }

// ---------------------------------------------------------------------------
// Data

Dataset generate_dataset(const DatasetSpec& spec, std::size_t count, std::uint64_t seed) {
  std::unique_ptr<WorldModel> model;
  if (spec.model.all_disabled()) {
    model = std::make_unique<ExactModel>();
  } else {
    model = std::make_unique<PerturbedModel>(spec.model);
  }
  const auto& m = spec.actions.mean;
  const auto& s = spec.actions.stddev;
  Dataset out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, {i, 0}));
    const double r = spec.start_position_range;
    const double theta = std::numbers::pi * (2.0 * rng.uniform() - 1.0);
    const double x = r * (2.0 * rng.uniform() - 1.0);
    const double y = r * (2.0 * rng.uniform() - 1.0);
    std::vector<ActionIncrement> incs(spec.length);
    for (auto& a : incs) {
      a.dx = rng.normal(m.dx, s.dx);
      a.dy = rng.normal(m.dy, s.dy);
      a.dtheta = std::clamp(rng.normal(m.dtheta, s.dtheta), -std::numbers::pi, std::numbers::pi);
    }
    ActionSegment seg(std::move(incs));
    Trajectory traj = rollout(*model, Pose2(theta, x, y), seg, derive_seed(seed, {i, 1}));
    out.push_back({std::move(traj), std::move(seg)});
  }
  return out;
}

Dataset load_dataset(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.starts_with("traj_") && entry.path().extension() == ".jsonl") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("dataset '" + dir.string() + "' has no trajectories");
  Dataset out;
  for (const auto& f : files) {
    auto [header, traj] = trajectory_from_jsonl(read_file(f));
    ActionSegment actions = segment_from_json(Json::parse(read_file(dir / header.actions_file)));
    out.push_back({std::move(traj), std::move(actions)});
  }
  try {
    validate_dataset(out);
  } catch (const std::invalid_argument& e) {
    throw FormatError("dataset '" + dir.string() + "': " + e.what());
  }
  return out;
}

std::vector<EvalSequence> eval_sequences(const Dataset& dataset) {
  std::vector<EvalSequence> out;
  out.reserve(dataset.size());
  for (const auto& ex : dataset) out.push_back({ex.poses[0], ex.actions});
  return out;
}

StageResult run_gen_data(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  cfg.validate();
  const auto seeds = seed_plan(cfg.seed);
  const fs::path dir = fs::path(cfg.output_dir) / "data";
  const std::string model_name =
      cfg.dataset.model.all_disabled() ? "exact" : PerturbedModel(cfg.dataset.model).name();
  Json outputs = Json::object();
  Json summary{{"length", cfg.dataset.length}, {"poses_per_trajectory", cfg.dataset.length + 1},
               {"model", model_name}};
  const std::pair<const char*, std::pair<std::size_t, std::uint64_t>> splits[] = {
      {"train", {cfg.dataset.train_trajectories, seeds.train_data}},
      {"eval", {cfg.dataset.eval_trajectories, seeds.eval_data}}};
  for (const auto& [split, spec] : splits) {
    const auto [count, seed] = spec;
    fs::remove_all(dir / split);
    const Dataset ds = generate_dataset(cfg.dataset, count, seed);
    double sum[3] = {0, 0, 0};
    double sq[3] = {0, 0, 0};
    std::size_t n = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      char stem[32];
      std::snprintf(stem, sizeof stem, "%04zu", i);
      const std::string actions_file = std::string("actions_") + stem + ".json";
      emit(dir, std::string(split) + "/" + actions_file, to_json(ds[i].actions).dump() + "\n",
           outputs);
      const TrajectoryHeader header{derive_seed(seed, {i, 1}), model_name, actions_file};
      emit(dir, std::string(split) + "/traj_" + stem + ".jsonl",
           trajectory_to_jsonl(header, ds[i].poses), outputs);
      for (const auto& a : ds[i].actions.increments) {
        const double v[3] = {a.dx, a.dy, a.dtheta};
        for (int c = 0; c < 3; ++c) {
          sum[c] += v[c];
          sq[c] += v[c] * v[c];
        }
        ++n;
      }
    }
    Json mean = Json::array();
    Json stddev = Json::array();
    for (int c = 0; c < 3; ++c) {
      const double mu = sum[c] / static_cast<double>(n);
      mean.push_back(mu);
      stddev.push_back(std::sqrt(std::max(0.0, sq[c] / static_cast<double>(n) - mu * mu)));
    }
    summary[split] = {{"trajectories", count},
                      {"seed", seed},
                      {"action_mean", std::move(mean)},
                      {"action_stddev", std::move(stddev)}};
  }
  emit(dir, "summary.json", summary.dump(2) + "\n", outputs);
  emit(dir, "config.json", to_json(cfg).dump(2) + "\n", outputs);
  return finish(dir, base_manifest(cfg, "gen-data"), std::move(outputs), t0);
}

// ---------------------------------------------------------------------------
// Training

Checkpoint pretrained_checkpoint(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto seeds = seed_plan(cfg.seed);
  const fs::path dir = fs::path(cfg.output_dir) / "pretrain";
  const Dataset train_ds = load_split(cfg, "train");
  const Json key_doc{{"data", dataset_fingerprint(train_ds)},
                     {"encoder", to_json(cfg).at("encoder")},
                     {"network", to_json(cfg).at("network")},
                     {"pretrain", to_json(cfg).at("pretrain")},
                     {"seed", cfg.seed}};
  const std::string key = fnv1a_hex(key_doc.dump());
  if (fs::exists(dir / "manifest.json") && fs::exists(dir / "checkpoint.json")) {
    const Json m = Json::parse(read_file(dir / "manifest.json"));
    if (m.value("pretrain_key", "") == key) {
      return checkpoint_from_json(Json::parse(read_file(dir / "checkpoint.json")));
    }
  }
  const auto t0 = Clock::now();
  FeatureEncoder encoder = make_encoder(cfg);
  DynamicsNet net =
      DynamicsNet::random(cfg.encoder.latent_dim, cfg.network.hidden, seeds.init,
                          cfg.network.init_scale);
  std::vector<LossRow> curve;
  if (cfg.pretrain.steps > 0) {
    TrainRunConfig run;
    run.steps = cfg.pretrain.steps;
    run.batch_size = cfg.pretrain.batch_size;
    run.learning_rate = cfg.pretrain.learning_rate;
    run.seed = seeds.pretrain;
    run.optimizer = cfg.pretrain.optimizer;
    GALossConfig pred_only = cfg.ga;
    pred_only.lambda_ga = 0.0;
    TrainResult res = train(run, pred_only, train_ds, encoder, std::move(net));
    net = std::move(res.net);
    curve = std::move(res.curve);
  }
  Checkpoint ckpt{std::move(encoder), std::move(net), cfg.pretrain.steps, "pretrain"};
  Json outputs = Json::object();
  emit(dir, "checkpoint.json", to_json(ckpt).dump() + "\n", outputs);
  emit(dir, "loss.csv", loss_curve_csv(curve), outputs);
  Json manifest = base_manifest(cfg, "pretrain");
  manifest["pretrain_key"] = key;
  finish(dir, std::move(manifest), std::move(outputs), t0);
  return ckpt;
}

StageResult run_train(const ExperimentConfig& cfg, std::string label) {
  const auto t0 = Clock::now();
  cfg.validate();
  if (label.empty()) label = cfg.ga.lambda_ga == 0.0 ? "baseline" : "ga";
  const fs::path dir = fs::path(cfg.output_dir) / "train" / sanitize(label);
  Json outputs = Json::object();
  const TrainedModel tm = train_into(cfg, cfg.ga, label, dir, outputs);
  emit(dir, "config.json", to_json(cfg).dump(2) + "\n", outputs);
  Json manifest = base_manifest(cfg, "train");
  manifest["label"] = label;
  manifest["checkpoint_hash"] = tm.checkpoint_hash;
  manifest["eval_pred_loss"] = tm.eval_pred_loss;
  return finish(dir, std::move(manifest), std::move(outputs), t0);
}

// ---------------------------------------------------------------------------
// Models and metrics

ModelHandle resolve_model(std::string_view ref) {
  if (ref.empty()) throw ConfigError("empty model ref");
  if (ref == "exact") return {std::make_unique<ExactModel>(), "exact", ""};
  const fs::path path{std::string(ref)};
  if (ref.find(':') == std::string_view::npos || fs::exists(path)) {
    if (!fs::is_regular_file(path)) {
      throw ConfigError("model ref '" + std::string(ref) + "' is neither a reference model nor a "
                        "checkpoint file");
    }
    const std::string text = read_file(path);
    Checkpoint ckpt = checkpoint_from_json(Json::parse(text));
    const std::string hash = fnv1a_hex(text);
    std::string name = ckpt.label + "-" + hash.substr(0, 8);
    return {std::make_unique<LatentWorldModel>(std::move(ckpt.encoder), std::move(ckpt.net), name),
            name, hash};
  }
  ViolationConfig v;
  std::size_t pos = 0;
  while (pos <= ref.size()) {
    const auto end = std::min(ref.find('+', pos), ref.size());
    const auto part = ref.substr(pos, end - pos);
    const auto colon = part.find(':');
    if (colon == std::string_view::npos) {
      throw ConfigError("model ref '" + std::string(ref) + "': expected name:values");
    }
    const auto name = part.substr(0, colon);
    const auto vals = parse_numbers(part.substr(colon + 1), ref);
    auto want = [&](std::size_t n) {
      if (vals.size() != n) {
        throw ConfigError("model ref '" + std::string(ref) + "': '" + std::string(name) +
                          "' takes " + std::to_string(n) + " value(s)");
      }
    };
    if (name == "drift") {
      want(3);
      v.drift_bias = {vals[0], vals[1], vals[2]};
    } else if (name == "sat") {
      want(1);
      v.saturation_scale = vals[0];
    } else if (name == "asym") {
      want(2);
      v.gain_pos = vals[0];
      v.gain_neg = vals[1];
    } else if (name == "noise") {
      want(1);
      v.noise_sigma = vals[0];
    } else {
      throw ConfigError("model ref '" + std::string(ref) + "': unknown injector '" +
                        std::string(name) + "'");
    }
    pos = end + 1;
  }
  try {
    v.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("model ref '" + std::string(ref) + "': " + e.what());
  }
  return {std::make_unique<PerturbedModel>(v), sanitize(ref), ""};
}

StageResult run_probe(const ExperimentConfig& cfg, std::string_view model_ref) {
  const auto t0 = Clock::now();
  cfg.validate();
  ModelHandle h = resolve_model(model_ref);
  const auto seqs = eval_sequences(load_split(cfg, "eval"));
  const GacReport report = run_gac_suite(*h.model, seqs, probe_suite(cfg));
  const fs::path dir = fs::path(cfg.output_dir) / "probe" / h.name;
  Json outputs = Json::object();
  emit(dir, "gac.json", to_json(report, h.name).dump(2) + "\n", outputs);
  emit(dir, "gac.csv", gac_csv(report, h.name), outputs);
  emit(dir, "gac.dat", gac_gnuplot(report, h.name), outputs);
  Json manifest = base_manifest(cfg, "probe");
  manifest["model_ref"] = model_ref;
  manifest["model"] = h.name;
  if (!h.checkpoint_hash.empty()) manifest["checkpoint_hash"] = h.checkpoint_hash;
  return finish(dir, std::move(manifest), std::move(outputs), t0);
}

StageResult run_gar(const ExperimentConfig& cfg, std::string_view model_ref) {
  const auto t0 = Clock::now();
  cfg.validate();
  ModelHandle h = resolve_model(model_ref);
  const auto seqs = eval_sequences(load_split(cfg, "eval"));
  const GarReport report = gar_suite(cfg, *h.model, seqs);
  const fs::path dir = fs::path(cfg.output_dir) / "gar" / h.name;
  Json outputs = Json::object();
  emit(dir, "gar.json", to_json(report, h.name).dump(2) + "\n", outputs);
  emit(dir, "gar.csv", gar_csv(report, h.name), outputs);
  Json manifest = base_manifest(cfg, "gar");
  manifest["model_ref"] = model_ref;
  manifest["model"] = h.name;
  if (!h.checkpoint_hash.empty()) manifest["checkpoint_hash"] = h.checkpoint_hash;
  return finish(dir, std::move(manifest), std::move(outputs), t0);
}

// ---------------------------------------------------------------------------
// Ablation and report

std::vector<AblationRow> ablation_rows(const ExperimentConfig& cfg, std::string_view axis) {
  std::vector<AblationRow> rows;
  if (axis == "lambda") {
    for (double v : cfg.ablate.lambda_values) {
      GALossConfig g = cfg.ga;
      g.lambda_ga = v;
      rows.push_back({"lambda_" + format_double(v), g});
    }
  } else if (axis == "span") {
    for (auto v : cfg.ablate.span_values) {
      GALossConfig g = cfg.ga;
      g.max_span = v;
      rows.push_back({"span_" + std::to_string(v), g});
    }
  } else if (axis == "mode") {
    for (auto m : {RolloutMode::kFreeRunning, RolloutMode::kTeacherForced}) {
      GALossConfig g = cfg.ga;
      g.mode = m;
      rows.push_back({std::string(to_string(m)), g});
    }
  } else if (axis == "constraints") {
    GALossConfig base = cfg.ga;
    base.lambda_ga = 0.0;
    rows.push_back({"baseline", base});
    for (auto k : {ConstraintKind::kIdentity, ConstraintKind::kInverse,
                   ConstraintKind::kComposition}) {
      GALossConfig g = cfg.ga;
      g.constraints = {k};
      rows.push_back({std::string(to_string(k)), g});
    }
    GALossConfig full = cfg.ga;
    full.constraints = {ConstraintKind::kIdentity, ConstraintKind::kInverse,
                        ConstraintKind::kComposition};
    rows.push_back({"full", full});
  } else {
    throw ConfigError("unknown ablation axis '" + std::string(axis) +
                      "' (expected lambda, span, mode or constraints)");
  }
  for (const auto& row : rows) {
    if (row.ga.max_span > cfg.dataset.length) {
      throw ConfigError("ablation row '" + row.name + "': span exceeds dataset.length");
    }
    try {
      row.ga.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("ablation row '" + row.name + "': " + e.what());
    }
  }
  return rows;
}

StageResult run_ablate(const ExperimentConfig& cfg, std::string_view axis) {
  const auto t0 = Clock::now();
  cfg.validate();
  const auto rows = ablation_rows(cfg, axis);
  const fs::path dir = fs::path(cfg.output_dir) / "ablate" / std::string(axis);
  const auto seqs = eval_sequences(load_split(cfg, "eval"));
  const auto suite = probe_suite(cfg);

  std::string table = "row,lambda_ga,max_span,mode,constraints,identity,inverse,composition,e_gac";
  for (auto h : cfg.gar.horizons) {
    table += ",gar" + std::to_string(h) + "_aligned,gar" + std::to_string(h) + "_nonaligned";
  }
  table += ",eval_pred_loss,checkpoint_hash\n";

  Json outputs = Json::object();
  Json row_manifest = Json::array();
  for (const auto& row : rows) {
    const fs::path row_dir = dir / sanitize(row.name);
    Json row_outputs = Json::object();
    const std::string label = row.ga.lambda_ga == 0.0 ? "baseline" : row.name;
    const TrainedModel tm = train_into(cfg, row.ga, label, row_dir, row_outputs);
    const LatentWorldModel model(tm.checkpoint.encoder, tm.checkpoint.net, row.name);
    const GacReport gac = run_gac_suite(model, seqs, suite);
    const GarReport gar = gar_suite(cfg, model, seqs);
    emit(row_dir, "gac.csv", gac_csv(gac, row.name), row_outputs);
    emit(row_dir, "gar.csv", gar_csv(gar, row.name), row_outputs);

    table += row.name + ',' + format_double(row.ga.lambda_ga) + ',' +
             std::to_string(row.ga.max_span) + ',' + std::string(to_string(row.ga.mode)) + ',' +
             ga_summary(row.ga) + ',' + format_double(gac.identity.mean) + ',' +
             format_double(gac.inverse.mean) + ',' + format_double(gac.composition.mean) + ',' +
             format_double(gac.e_gac);
    for (const auto& e : gar.entries) {
      table += ',' + format_double(e.aligned.mean) + ',' + format_double(e.nonaligned.mean);
    }
    table += ',' + format_double(tm.eval_pred_loss) + ',' + tm.checkpoint_hash + '\n';
    row_manifest.push_back(Json{{"row", row.name},
                                {"label", label},
                                {"dir", sanitize(row.name)},
                                {"checkpoint_hash", tm.checkpoint_hash},
                                {"outputs", std::move(row_outputs)}});
  }
  emit(dir, "table.csv", table, outputs);
  emit(dir, "config.json", to_json(cfg).dump(2) + "\n", outputs);
  Json manifest = base_manifest(cfg, "ablate");
  manifest["axis"] = axis;
  manifest["rows"] = std::move(row_manifest);
  return finish(dir, std::move(manifest), std::move(outputs), t0);
}

StageResult run_report(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  cfg.validate();
  const fs::path root(cfg.output_dir);
  auto subdirs = [](const fs::path& p) {
    std::vector<fs::path> out;
    if (fs::is_directory(p)) {
      for (const auto& e : fs::directory_iterator(p)) {
        if (e.is_directory()) out.push_back(e.path());
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  };

  std::string gac = "model,identity,inverse,composition,e_gac\n";
  for (const auto& d : subdirs(root / "probe")) {
    if (!fs::exists(d / "gac.json")) continue;
    const Json j = Json::parse(read_file(d / "gac.json"));
    gac += j.at("model").get<std::string>() + ',' +
           format_double(j.at("identity").at("mean").get<double>()) + ',' +
           format_double(j.at("inverse").at("mean").get<double>()) + ',' +
           format_double(j.at("composition").at("mean").get<double>()) + ',' +
           format_double(j.at("e_gac").get<double>()) + '\n';
  }
  std::string gar = "model,horizon,n_rollouts,aligned_mean,nonaligned_mean\n";
  for (const auto& d : subdirs(root / "gar")) {
    if (!fs::exists(d / "gar.json")) continue;
    const Json j = Json::parse(read_file(d / "gar.json"));
    for (const auto& e : j.at("entries")) {
      gar += j.at("model").get<std::string>() + ',' + std::to_string(e.at("horizon").get<int>()) +
             ',' + std::to_string(e.at("n_rollouts").get<int>()) + ',' +
             format_double(e.at("aligned").at("mean").get<double>()) + ',' +
             format_double(e.at("nonaligned").at("mean").get<double>()) + '\n';
    }
  }
  std::string train = "label,eval_pred_loss,train_pred_loss_tail,steps\n";
  for (const auto& d : subdirs(root / "train")) {
    if (!fs::exists(d / "metrics.json")) continue;
    const Json j = Json::parse(read_file(d / "metrics.json"));
    train += j.at("label").get<std::string>() + ',' +
             format_double(j.at("eval_pred_loss").get<double>()) + ',' +
             format_double(j.at("train_pred_loss_tail").get<double>()) + ',' +
             std::to_string(j.at("steps").get<std::size_t>()) + '\n';
  }

  std::string md = "# Report\n\n## Group-action consistency\n\n```\n" + gac +
                   "```\n\n## Rollout agreement\n\n```\n" + gar + "```\n\n## Training\n\n```\n" +
                   train + "```\n";
  for (const auto& d : subdirs(root / "ablate")) {
    if (!fs::exists(d / "table.csv")) continue;
    md += "\n## Ablation: " + d.filename().string() + "\n\n```\n" + read_file(d / "table.csv") +
          "```\n";
  }

  const fs::path dir = root / "report";
  Json outputs = Json::object();
  emit(dir, "gac_summary.csv", gac, outputs);
  emit(dir, "gar_summary.csv", gar, outputs);
  emit(dir, "train_summary.csv", train, outputs);
  emit(dir, "report.md", md, outputs);
  return finish(dir, base_manifest(cfg, "report"), std::move(outputs), t0);
}

}  // namespace gawm
