// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gawm/harness.hpp"

using namespace gawm;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double pose_gap(const Pose2& a, const Pose2& b) {
  return std::max({std::abs(a.x() - b.x()), std::abs(a.y() - b.y()),
                   std::abs(wrap_angle(a.theta() - b.theta()))});
}

Pose2 random_pose(Rng& rng) {
  return Pose2(kPi * (2.0 * rng.uniform() - 1.0), rng.normal() * 10.0, rng.normal() * 10.0);
}

Eigen::Matrix3d homogeneous(double theta, double x, double y) {
  Eigen::Matrix3d m;
  m << std::cos(theta), -std::sin(theta), x, std::sin(theta), std::cos(theta), y, 0, 0, 1;
  return m;
}

fs::path work_dir(const std::string& name) {
  const fs::path dir = fs::current_path() / "acceptance_out" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------

Outcome group_axioms() {
  Rng rng(101);
  double worst_group = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Pose2 a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    const Pose2 e = se2_identity();
    worst_group = std::max(
        {worst_group, pose_gap(se2_compose(se2_compose(a, b), c), se2_compose(a, se2_compose(b, c))),
         pose_gap(se2_compose(a, e), a), pose_gap(se2_compose(e, a), a),
         pose_gap(se2_compose(a, se2_inverse(a)), e), pose_gap(se2_compose(se2_inverse(a), a), e)});
  }
  // Rolling the exact model through a sequence equals one right action by
  // the product of the increments, computed here with 3x3 matrices.
  double worst_seq = 0.0;
  const ExactModel exact;
  for (int i = 0; i < 1000; ++i) {
    const Pose2 s = random_pose(rng);
    const std::size_t n = 1 + rng.uniform_index(8);
    std::vector<ActionIncrement> incs;
    Eigen::Matrix3d m = homogeneous(s.theta(), s.x(), s.y());
    for (std::size_t t = 0; t < n; ++t) {
      const ActionIncrement a{rng.normal(), rng.normal(), kPi * (2.0 * rng.uniform() - 1.0)};
      incs.push_back(a);
      m = m * homogeneous(a.dtheta, a.dx, a.dy);
    }
    Rng noise(0);
    const Pose2 end = rollout_endpoint(exact, s, ActionSegment(incs), noise);
    const Pose2 want(std::atan2(m(1, 0), m(0, 0)), m(0, 2), m(1, 2));
    worst_seq = std::max(worst_seq, pose_gap(end, want));
  }
  return {worst_group <= 1e-12 && worst_seq <= 1e-9,
          "axioms max err " + fmt("%.2e", worst_group) + " (tol 1e-12), sequence action max err " +
              fmt("%.2e", worst_seq) + " (tol 1e-9)"};
}

Outcome exact_zero_scores() {
  DatasetSpec spec;
  spec.actions.stddev.dtheta = 0.0;
  const auto seqs = eval_sequences(generate_dataset(spec, 20, 202));
  const GacReport gac = run_gac_suite(ExactModel{}, seqs, ProbeSuiteConfig{});
  double worst = std::max({gac.identity.mean, gac.inverse.mean, gac.composition.mean});
  for (const auto& c : gac.configs) worst = std::max(worst, c.mean);
  const std::size_t horizons[] = {16, 64};
  const GarReport gar = run_gar_suite(ExactModel{}, seqs, horizons, 5, {}, 203);
  bool gar_zero = true;
  for (const auto& e : gar.entries) gar_zero = gar_zero && e.aligned.mean == 0.0 && e.nonaligned.mean == 0.0;

  // Rotating increments: the negated-reverse segment is not the group inverse,
  // so the exact model has a nonzero analytic residual. Logged, not gated.
  const auto rot = eval_sequences(generate_dataset(DatasetSpec{}, 20, 202));
  const GacReport rg = run_gac_suite(ExactModel{}, rot, ProbeSuiteConfig{});
  return {worst <= 1e-9 && gar_zero,
          "translation-only grid max " + fmt("%.2e", worst) + ", GAR " +
              (gar_zero ? "exactly 0" : "nonzero") + "; with rotations inv " +
              fmt("%.4f", rg.inverse.mean) + " comp " + fmt("%.4f", rg.composition.mean) +
              " (analytic residual)"};
}

// Stepwise simulation written against the injector formula.
Pose2 brute_step(const Pose2& s, const ActionIncrement& a, const ViolationConfig& v) {
  auto sat = [&](double x) {
    return v.saturation_enabled() ? v.saturation_scale * std::tanh(x / v.saturation_scale) : x;
  };
  auto gain = [&](double x) { return x >= 0.0 ? v.gain_pos * x : v.gain_neg * x; };
  const double dx = gain(sat(a.dx)) + v.drift_bias.dx;
  const double dy = gain(sat(a.dy)) + v.drift_bias.dy;
  const double dth = sat(a.dtheta) + v.drift_bias.dtheta;
  const double c = std::cos(s.theta()), sn = std::sin(s.theta());
  return Pose2(s.theta() + dth, s.x() + c * dx - sn * dy, s.y() + sn * dx + c * dy);
}

Pose2 brute_prefix(const EvalSequence& seq, std::size_t t0, const ViolationConfig& v) {
  Pose2 s = seq.start;
  for (std::size_t i = 0; i < t0; ++i) s = brute_step(s, seq.actions[i], v);
  return s;
}

Outcome oracle_equivalence() {
  const std::vector<std::pair<std::string, ViolationConfig>> injectors = {
      {"drift", ViolationConfig{.drift_bias = {0.1, 0.0, 0.02}}},
      {"asym_gain", ViolationConfig{.gain_pos = 1.2}},
      {"saturation", ViolationConfig{.saturation_scale = 0.3}}};
  const auto seqs = eval_sequences(generate_dataset(DatasetSpec{}, 5, 303));
  double worst = 0.0;
  std::size_t checked = 0;
  for (const auto& [name, v] : injectors) {
    const PerturbedModel model(v);
    for (std::size_t k : {1, 3, 5}) {
      for (std::size_t l : {1, 3, 5}) {
        const auto starts = uniform_start_indices(64, k * l, 4);
        const auto id = probe_identity(model, seqs, {ProbeKind::kIdentity, k, l, starts, 0}, {}, 0);
        const auto inv = probe_inverse(model, seqs, {ProbeKind::kInverse, k, l, starts, 0}, {}, 0);
        for (std::size_t s = 0; s < seqs.size(); ++s) {
          for (std::size_t i = 0; i < starts.size(); ++i) {
            double want_id = 0.0, want_inv = 0.0;
            Pose2 p = brute_prefix(seqs[s], starts[i], v);
            Pose2 q = p;
            for (std::size_t j = 0; j < k; ++j) {
              const std::size_t base = starts[i] + j * l;
              const Pose2 before_id = p;
              for (std::size_t r = 0; r < l; ++r) p = brute_step(p, {}, v);
              want_id += state_distance(p, before_id);
              if (j + 1 < k) {
                for (std::size_t r = 0; r < l; ++r) p = brute_step(p, seqs[s].actions[base + r], v);
              }
              const Pose2 before_inv = q;
              for (std::size_t r = 0; r < l; ++r) q = brute_step(q, seqs[s].actions[base + r], v);
              for (std::size_t r = l; r-- > 0;) q = brute_step(q, -seqs[s].actions[base + r], v);
              want_inv += state_distance(q, before_inv);
            }
            const std::size_t at = s * starts.size() + i;
            worst = std::max({worst, std::abs(id.instance_errors[at] - want_id / k),
                              std::abs(inv.instance_errors[at] - want_inv / k)});
            checked += 2;
          }
        }
      }
    }
    for (std::size_t l : {2, 4, 6}) {
      const ActionSegment u_a = seqs[1].actions.slice(10, l);
      const ActionSegment u_b = make_compatibility_segment(u_a, DirichletParams{1.0, 40 + l});
      Rng p(1), a(2), b(3);
      const double got = composition_probe_instance(model, seqs[1], 10, u_a, u_b, {}, p, a, b);
      Pose2 ea = brute_prefix(seqs[1], 10, v), eb = ea;
      for (const auto& x : u_a.increments) ea = brute_step(ea, x, v);
      for (const auto& x : u_b.increments) eb = brute_step(eb, x, v);
      worst = std::max(worst, std::abs(got - state_distance(ea, eb)));
      ++checked;
    }
  }
  // Closed-form spot values.
  const PerturbedModel sat(ViolationConfig{.saturation_scale = 1.0});
  const EvalSequence two{Pose2{}, ActionSegment({{2, 0, 0}, {0, 0, 0}})};
  const std::vector<double> half{0.5, 0.5};
  Rng p(0), a(0), b(0);
  const double sat_err = composition_probe_instance(
      sat, two, 0, two.actions, make_compatibility_segment(two.actions, half), {}, p, a, b);
  const PerturbedModel asym(ViolationConfig{.gain_pos = 1.2});
  const EvalSequence one{Pose2{}, ActionSegment({{1, 0, 0}})};
  Rng n(0);
  const double asym_err = inverse_probe_instance(asym, one, 0, 1, 1, {}, n);
  const bool spots = std::abs(sat_err - std::abs(std::tanh(2.0) - 2.0 * std::tanh(1.0))) <= 1e-12 &&
                     std::abs(sat_err - 0.5592) < 5e-5 && std::abs(asym_err - 0.2) <= 1e-12;
  return {worst <= 1e-12 && spots,
          std::to_string(checked) + " instances, max err " + fmt("%.2e", worst) +
              "; saturation comp " + fmt("%.4f", sat_err) + ", asym inverse " +
              fmt("%.4f", asym_err)};
}

Outcome table_arithmetic() {
  auto row = [](ProbeKind kind, double mean) {
    return ProbeResult{kind, 1, kind == ProbeKind::kComposition ? std::size_t{2} : std::size_t{1},
                       mean, 0.0, {}, {mean}};
  };
  const auto ga = aggregate_gac({row(ProbeKind::kIdentity, 1.95), row(ProbeKind::kInverse, 1.95),
                                 row(ProbeKind::kComposition, 0.60)});
  const auto base = aggregate_gac({row(ProbeKind::kIdentity, 2.10), row(ProbeKind::kInverse, 2.29),
                                   row(ProbeKind::kComposition, 0.79)});
  const double r_ga = std::round(ga.e_gac * 100.0) / 100.0;
  const double r_base = std::round(base.e_gac * 100.0) / 100.0;
  return {r_ga == 1.50 && r_base == 1.73 && std::abs(ga.e_gac - 1.5) < 1e-12,
          "GA row " + fmt("%.6f", ga.e_gac) + " -> " + fmt("%.2f", r_ga) + ", baseline row " +
              fmt("%.6f", base.e_gac) + " -> " + fmt("%.2f", r_base)};
}

Outcome gar_formula() {
  Rng rng(505);
  std::vector<Trajectory> trajs(3);
  for (auto& t : trajs) {
    Pose2 s = random_pose(rng);
    for (int i = 0; i < 20; ++i) {
      t.poses.push_back(s);
      s = exact_step(s, {rng.normal(0.5, 0.3), rng.normal(0, 0.3), rng.normal(0, 0.4)});
    }
  }
  auto double_loop = [](const std::vector<Trajectory>& ts) {
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
      for (std::size_t j = i + 1; j < ts.size(); ++j) {
        double sum = 0.0;
        for (std::size_t t = 0; t < ts[i].size(); ++t) sum += state_distance(ts[i][t], ts[j][t]);
        total += sum / static_cast<double>(ts[i].size());
        ++pairs;
      }
    }
    return total / static_cast<double>(pairs);
  };
  std::vector<Trajectory> aligned{trajs[0]};
  for (int i = 1; i < 3; ++i) aligned.push_back(align_trajectory(trajs[i], trajs[0], 1.0));
  const double err = std::max(std::abs(gar_error(trajs, {}, false) - double_loop(trajs)),
                              std::abs(gar_error(trajs, {}, true) - double_loop(aligned)));

  const auto seqs = eval_sequences(generate_dataset(DatasetSpec{}, 20, 506));
  const PerturbedModel lo(ViolationConfig{.noise_sigma = 0.01});
  const PerturbedModel hi(ViolationConfig{.noise_sigma = 0.02});
  const auto a = evaluate_gar(lo, seqs, 64, 32, {}, 507);
  const auto b = evaluate_gar(hi, seqs, 64, 32, {}, 507);
  const double ratio_n = b.nonaligned.mean / a.nonaligned.mean;
  const double ratio_a = b.aligned.mean / a.aligned.mean;
  const bool ok = err <= 1e-12 && ratio_n >= 1.8 && ratio_n <= 2.2 && ratio_a >= 1.8 &&
                  ratio_a <= 2.2;
  return {ok, "double-loop err " + fmt("%.2e", err) + "; noise ratio non-aligned " +
                  fmt("%.3f", ratio_n) + ", aligned " + fmt("%.3f", ratio_a)};
}

Outcome gradient_correctness() {
  DatasetSpec spec;
  spec.length = 16;
  const Dataset ds = generate_dataset(spec, 4, 606);
  const auto enc = FeatureEncoder::sample(16, 607, 0.02);
  const auto net = DynamicsNet::random(16, 32, 608, 0.5);
  double worst = 0.0;
  std::size_t cases = 0;

  auto check = [&](const GALossConfig& cfg, const TrainingBatch& batch,
                   std::optional<ConstraintKind> kind) {
    Rng n0(609);
    const auto g = evaluate_batch(net, enc, ds, batch, cfg, n0, true, kind).gradient;
    Rng pick(610 + cases);
    for (int c = 0; c < 100; ++c) {
      const auto i = static_cast<Eigen::Index>(
          pick.uniform_index(static_cast<std::uint64_t>(net.params().size())));
      DynamicsNet p = net, m = net;
      const double h = 1e-5;
      p.params()(i) += h;
      m.params()(i) -= h;
      Rng a(609), b(609);
      const double fd = (evaluate_batch(p, enc, ds, batch, cfg, a, false, kind).objective -
                         evaluate_batch(m, enc, ds, batch, cfg, b, false, kind).objective) /
                        (2.0 * h);
      worst = std::max(worst, std::abs(fd - g(i)) / std::max({std::abs(fd), std::abs(g(i)), 1e-6}));
    }
    ++cases;
  };

  TrainingBatch batch;
  batch.span = 4;
  for (std::size_t t = 0; t < 4; ++t) batch.items.push_back({t, 2 + 2 * t, {0.1, 0.2, 0.3, 0.4}});
  GALossConfig pred_only;
  pred_only.lambda_ga = 0.0;
  check(pred_only, batch, ConstraintKind::kIdentity);
  for (auto mode : {RolloutMode::kFreeRunning, RolloutMode::kTeacherForced}) {
    GALossConfig cfg;
    cfg.mode = mode;
    cfg.lambda_ga = 1.0;
    for (auto kind : {ConstraintKind::kIdentity, ConstraintKind::kInverse,
                      ConstraintKind::kComposition}) {
      batch.active = kind;
      check(cfg, batch, kind);
    }
  }

  // Detach: the step before the cut contributes nothing upstream.
  Rng rng(611);
  const LatentState z0 = Eigen::VectorXd::Random(16);
  const ActionIncrement up{0.1, 0.0, 0.05};
  const ActionSegment u({{0.2, 0.01, 0.1}, {-0.1, 0.02, -0.2}, {0.1, 0.0, 0.0}, {0.05, 0.0, 0.1}});
  RolloutTape cut(net);
  const auto leaf = cut.input(z0);
  const auto zt = cut.detach(cut.step(leaf, up));
  cut.add_squared_distance(cut.rollout(cut.rollout(zt, u), make_inverse_segment(u).slice(4, 4)), zt);
  const auto gc = cut.backward();
  RolloutTape fresh(net);
  const auto zt2 = fresh.input(net_step(z0, up, net), true);
  fresh.add_squared_distance(fresh.rollout(fresh.rollout(zt2, u), make_inverse_segment(u).slice(4, 4)), zt2);
  const auto gf = fresh.backward();
  const bool detach_ok = gc.inputs[leaf].norm() == 0.0 && gc.params == gf.params;

  return {worst <= 1e-4 && detach_ok,
          std::to_string(cases) + " objectives x 100 coords, max rel err " + fmt("%.2e", worst) +
              "; detach upstream gradient " + (detach_ok ? "exactly 0" : "NONZERO")};
}

struct ModelScores {
  double identity = 0, inverse = 0, composition = 0, e_gac = 0, gar64 = 0, pred = 0;
};

ModelScores scores_for(const ExperimentConfig& cfg, const StageResult& train) {
  const std::string ckpt = (train.dir / "checkpoint.json").string();
  const StageResult p = run_probe(cfg, ckpt);
  const StageResult g = run_gar(cfg, ckpt);
  const Json gac = Json::parse(read_file(p.dir / "gac.json"));
  const Json gar = Json::parse(read_file(g.dir / "gar.json"));
  ModelScores s;
  s.identity = gac.at("identity").at("mean").get<double>();
  s.inverse = gac.at("inverse").at("mean").get<double>();
  s.composition = gac.at("composition").at("mean").get<double>();
  s.e_gac = gac.at("e_gac").get<double>();
  for (const auto& e : gar.at("entries")) {
    if (e.at("horizon") == 64) s.gar64 = e.at("nonaligned").at("mean").get<double>();
  }
  s.pred = train.manifest.at("eval_pred_loss").get<double>();
  return s;
}

ExperimentConfig benchmark_config() {
  ExperimentConfig cfg;
  cfg.output_dir = (fs::current_path() / "acceptance_out" / "benchmark").string();
  return cfg;
}

Outcome directional_reproduction() {
  fs::remove_all(fs::current_path() / "acceptance_out" / "benchmark");
  ExperimentConfig cfg = benchmark_config();
  run_gen_data(cfg);
  ExperimentConfig base_cfg = cfg;
  base_cfg.ga.lambda_ga = 0.0;
  const ModelScores base = scores_for(base_cfg, run_train(base_cfg));
  const ModelScores ga = scores_for(cfg, run_train(cfg));
  const double gac_drop = 1.0 - ga.e_gac / base.e_gac;
  const double gar_drop = 1.0 - ga.gar64 / base.gar64;
  const double pred_rise = ga.pred / base.pred - 1.0;
  const bool ok = gac_drop >= 0.15 && gar_drop >= 0.15 && pred_rise <= 0.10;
  return {ok, "E_GAC " + fmt("%.4f", base.e_gac) + " -> " + fmt("%.4f", ga.e_gac) + " (" +
                  fmt("%+.1f%%", -100 * gac_drop) + ", need <= -15%), GAR64 non-aligned " +
                  fmt("%.4f", base.gar64) + " -> " + fmt("%.4f", ga.gar64) + " (" +
                  fmt("%+.1f%%", -100 * gar_drop) + ", need <= -15%), pred loss " +
                  fmt("%.5f", base.pred) + " -> " + fmt("%.5f", ga.pred) + " (" +
                  fmt("%+.1f%%", 100 * pred_rise) + ", need <= +10%)"};
}

Outcome ablation_structure() {
  ExperimentConfig cfg = benchmark_config();
  if (!fs::exists(fs::path(cfg.output_dir) / "data" / "manifest.json")) run_gen_data(cfg);
  const StageResult r = run_ablate(cfg, "constraints");
  std::istringstream table(read_file(r.dir / "table.csv"));
  std::string line;
  std::getline(table, line);
  std::map<std::string, std::vector<double>> rows;
  while (std::getline(table, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    // identity, inverse, composition, e_gac
    rows[cells[0]] = {std::stod(cells[5]), std::stod(cells[6]), std::stod(cells[7]),
                      std::stod(cells[8])};
  }
  const auto& b = rows.at("baseline");
  const bool id_ok = rows.at("id")[0] < b[0];
  const bool inv_ok = rows.at("inv")[1] < b[1];
  const bool comp_ok = rows.at("comp")[2] < b[2];
  double best_other = 1e300;
  for (const auto& [name, v] : rows) {
    if (name != "full") best_other = std::min(best_other, v[3]);
  }
  const bool full_ok = rows.at("full")[3] <= best_other;
  return {id_ok && inv_ok && comp_ok && full_ok,
          "id row identity " + fmt("%.4f", rows.at("id")[0]) + " vs " + fmt("%.4f", b[0]) +
              ", inv row inverse " + fmt("%.4f", rows.at("inv")[1]) + " vs " + fmt("%.4f", b[1]) +
              ", comp row composition " + fmt("%.4f", rows.at("comp")[2]) + " vs " +
              fmt("%.4f", b[2]) + ", full E_GAC " + fmt("%.4f", rows.at("full")[3]) +
              " vs best other " + fmt("%.4f", best_other)};
}

Outcome determinism() {
  std::map<std::string, std::string> files[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path out = work_dir("determinism_" + std::to_string(run));
    ExperimentConfig cfg;
    cfg.output_dir = out.string();
    cfg.dataset.train_trajectories = 40;
    cfg.dataset.eval_trajectories = 8;
    cfg.pretrain.steps = 300;
    cfg.train.steps = 300;
    run_gen_data(cfg);
    const StageResult t = run_train(cfg);
    const std::string ckpt = (t.dir / "checkpoint.json").string();
    run_probe(cfg, ckpt);
    run_gar(cfg, ckpt);
    run_probe(cfg, "drift:0.05,0,0.01+noise:0.01");
    run_gar(cfg, "noise:0.02");
    run_report(cfg);
    for (const auto& e : fs::recursive_directory_iterator(out)) {
      if (e.is_regular_file() && e.path().extension() == ".csv") {
        files[run][fs::relative(e.path(), out).string()] = read_file(e.path());
      }
    }
  }
  std::size_t same = 0;
  for (const auto& [name, text] : files[0]) {
    auto it = files[1].find(name);
    if (it != files[1].end() && it->second == text) ++same;
  }
  const bool ok = files[0].size() == files[1].size() && same == files[0].size() && same >= 8;
  return {ok, std::to_string(same) + "/" + std::to_string(files[0].size()) +
                  " metric CSVs byte-identical across two runs"};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "group axioms", 1.0, group_axioms},
      {2, "exact-model zero scores", 10.0, exact_zero_scores},
      {3, "oracle equivalence", 30.0, oracle_equivalence},
      {4, "aggregation arithmetic", 1.0, table_arithmetic},
      {5, "GAR formula", 60.0, gar_formula},
      {6, "gradient correctness", 60.0, gradient_correctness},
      {7, "directional reproduction", 600.0, directional_reproduction},
      {8, "ablation structure", 2700.0, ablation_structure},
      {9, "determinism", 600.0, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_seconds) {
      o.pass = false;
      o.detail += "; over time budget";
    }
    if (!o.pass) ++failures;
    std::printf("criterion %d %s: %s | %s | %.1fs (budget %.0fs)\n", c.id, o.pass ? "PASS" : "FAIL",
                c.name, o.detail.c_str(), secs, c.budget_seconds);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
