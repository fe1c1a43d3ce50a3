// goalgen: one binary tying the pipeline together — simulated dataset
// generation, demo-to-scene contact transfer, diffusion training and
// sampling, evaluation reports, and a desk-scale end-to-end run.
#include "CLI11.hpp"

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "goalgen/cpca.hpp"
#include "goalgen/dataset.hpp"
#include "goalgen/diffusion.hpp"
#include "goalgen/error.hpp"
#include "goalgen/eval.hpp"
#include "goalgen/io.hpp"
#include "goalgen/kernels.hpp"
#include "goalgen/planning.hpp"

namespace fs = std::filesystem;
using namespace goalgen;

namespace {

// --config sections mirror the owning structs' field names one-to-one.
template <typename T>
T cfg(const Json& config, const char* section, const char* key, T fallback) {
  if (config.contains(section) && config[section].contains(key))
    return config[section][key].get<T>();
  return fallback;
}

PredictorConfig predictor_config(const Json& c) {
  PredictorConfig p;
  p.width = cfg(c, "predictor", "width", p.width);
  p.name_dim = cfg(c, "predictor", "name_dim", p.name_dim);
  p.instr_dim = cfg(c, "predictor", "instr_dim", p.instr_dim);
  p.time_dim = cfg(c, "predictor", "time_dim", p.time_dim);
  p.ff_mult = cfg(c, "predictor", "ff_mult", p.ff_mult);
  p.voxel_reduction = cfg(c, "predictor", "voxel_reduction", p.voxel_reduction);
  p.vocab_seed = cfg(c, "predictor", "vocab_seed", p.vocab_seed);
  return p;
}

NoiseSchedule schedule_config(const Json& c) {
  return make_schedule(cfg(c, "schedule", "T", 100), cfg(c, "schedule", "beta_start", 1e-4),
                       cfg(c, "schedule", "beta_end", 0.02));
}

TrainConfig train_config(const Json& c, std::uint64_t seed) {
  TrainConfig t;
  t.steps = cfg(c, "train", "steps", t.steps);
  t.batch = cfg(c, "train", "batch", t.batch);
  t.learning_rate = cfg(c, "train", "learning_rate", t.learning_rate);
  t.weight_decay = cfg(c, "train", "weight_decay", t.weight_decay);
  t.omega = cfg(c, "train", "omega", t.omega);
  t.log_every = cfg(c, "train", "log_every", t.log_every);
  t.seed = seed;
  return t;
}

PlanParams plan_config(const Json& c) {
  PlanParams p;
  p.samples = cfg(c, "plan", "samples", p.samples);
  p.waypoint_step = cfg(c, "plan", "waypoint_step", p.waypoint_step);
  p.rotation_step = cfg(c, "plan", "rotation_step", p.rotation_step);
  p.sweep_radius = cfg(c, "plan", "sweep_radius", p.sweep_radius);
  return p;
}

CpcaParams cpca_config(const Json& c) {
  CpcaParams p;
  p.contact_threshold = cfg(c, "cpca", "contact_threshold", p.contact_threshold);
  p.cpd.beta = cfg(c, "cpd", "beta", p.cpd.beta);
  p.cpd.lambda = cfg(c, "cpd", "lambda", p.cpd.lambda);
  p.cpd.max_iter = cfg(c, "cpd", "max_iter", p.cpd.max_iter);
  p.cpd.tol = cfg(c, "cpd", "tol", p.cpd.tol);
  p.cpd.feature_weight = cfg(c, "cpd", "feature_weight", p.cpd.feature_weight);
  p.cpd.outlier_w = cfg(c, "cpd", "outlier_w", p.cpd.outlier_w);
  p.resolve.radius_step = cfg(c, "resolve", "radius_step", p.resolve.radius_step);
  p.resolve.samples_per_shell =
      cfg(c, "resolve", "samples_per_shell", p.resolve.samples_per_shell);
  p.resolve.max_radius = cfg(c, "resolve", "max_radius", p.resolve.max_radius);
  p.resolve.collision_margin =
      cfg(c, "resolve", "collision_margin", p.resolve.collision_margin);
  return p;
}

EvalOptions eval_config(const Json& c, std::uint64_t seed, const std::string& split) {
  EvalOptions o;
  o.ddim_steps = cfg(c, "eval", "ddim_steps", o.ddim_steps);
  o.eta = cfg(c, "eval", "eta", o.eta);
  o.huber_delta = cfg(c, "eval", "huber_delta", o.huber_delta);
  o.anchor_id = cfg<std::string>(c, "eval", "anchor_id", o.anchor_id);
  o.relation.gap_tol = cfg(c, "eval", "gap_tol", o.relation.gap_tol);
  o.relation.overlap_frac = cfg(c, "eval", "overlap_frac", o.relation.overlap_frac);
  o.relation.near_max = cfg(c, "eval", "near_max", o.relation.near_max);
  o.seed = seed;
  o.split_name = split;
  return o;
}

fs::path require_out(const std::string& out) {
  if (out.empty()) throw UsageError("--out is required");
  return fs::path(out);
}

std::vector<TaskSample> subset(const std::vector<TaskSample>& all, const std::vector<int>& idx) {
  std::vector<TaskSample> out;
  out.reserve(idx.size());
  for (const int i : idx) out.push_back(all[i]);
  return out;
}

// The dataset's declared relation, when the automatic check supports it.
std::optional<RelationKind> dataset_predicate(const fs::path& manifest_path, const Json& c) {
  const std::string forced = cfg<std::string>(c, "eval", "predicate", "auto");
  if (forced == "none") return std::nullopt;
  if (forced != "auto") return relation_from_string(forced);
  const DatasetManifest manifest = load_manifest(manifest_path);
  for (const ManifestEntry& e : manifest.entries) {
    if (e.status != "ok") continue;
    const RelationKind kind = relation_from_string(e.relation);
    if (kind == RelationKind::OnTop || kind == RelationKind::Inside ||
        kind == RelationKind::Near)
      return kind;
    return std::nullopt;  // articulated tasks have no pose predicate
  }
  return std::nullopt;
}

EvalReport run_eval(const NoisePredictor& model, const NoiseSchedule& schedule,
                    const std::vector<TaskSample>& samples, const EvalOptions& opts,
                    const fs::path& out) {
  const EvalReport report = evaluate_model(model, schedule, samples, opts);
  write_eval_files(out, report);
  std::cout << "eval " << report.split << ": " << report.sample_count
            << " samples, PCE mean " << report.pce_mean;
  if (report.has_predicate) std::cout << ", success rate " << report.success_rate;
  std::cout << "\n";
  return report;
}

int cmd_gen(const std::string& task, int count, int points, std::uint64_t seed,
            const std::string& out, const Json& config) {
  const fs::path dir = require_out(out);
  TaskSpec spec = builtin_task(task);
  spec.points_per_object = cfg(config, "gen", "points_per_object", spec.points_per_object);
  spec.clutter = cfg(config, "gen", "clutter", spec.clutter);
  if (points > 0) spec.points_per_object = points;

  const DatasetManifest manifest = generate_dataset(spec, count, seed, dir);
  std::map<std::string, int> by_status;
  for (const ManifestEntry& e : manifest.entries) by_status[e.status]++;
  for (const auto& [status, n] : by_status) std::cout << status << ": " << n << "\n";
  std::cout << "wrote " << (dir / "manifest.jsonl").string() << "\n";
  if (manifest.ok_indices().empty()) throw DataError("gen: no usable samples generated");
  return 0;
}

int cmd_cpca(const std::string& demo_path, const std::string& scene_path,
             const std::string& out, const Json& config) {
  const fs::path dir = require_out(out);
  if (demo_path.empty() || scene_path.empty())
    throw UsageError("cpca: --demo and --scene are required");
  const DemoRecord demo = load_demo(demo_path);
  const SceneState scene = load_scene(scene_path);
  const GoalPose goal = cpca_generate(demo, scene, cpca_config(config));

  fs::create_directories(dir);
  write_json_file(dir / "goal_pose.json",
                  Json{{"pose", pose_to_json(goal.transform)},
                       {"collision_free", goal.collision_free},
                       {"sphere_radius_used", goal.sphere_radius_used}});
  std::cout << "goal pose written, collision_free=" << goal.collision_free << "\n";
  return 0;
}

int cmd_train(const std::string& manifest, double hold_frac, std::uint64_t seed,
              const std::string& out, const Json& config) {
  const fs::path dir = require_out(out);
  const std::vector<TaskSample> samples = load_samples(manifest);
  if (samples.empty()) throw DataError("train: manifest lists no usable samples");
  const DatasetSplit split = split_dataset(static_cast<int>(samples.size()), hold_frac);
  if (split.train.empty()) throw UsageError("train: empty training split");
  const std::vector<TaskSample> train_set = subset(samples, split.train);

  NoisePredictor model(predictor_config(config), seed);
  const NoiseSchedule schedule = schedule_config(config);
  const TrainConfig tc = train_config(config, seed);
  const TrainResult result = train(model, train_set, schedule, tc);

  fs::create_directories(dir);
  model.save(dir / "model.ffm");
  save_loss_curve(dir / "loss_curve.csv", result.curve);
  write_json_file(dir / "train_summary.json",
                  Json{{"steps", tc.steps},
                       {"train_samples", static_cast<int>(train_set.size())},
                       {"held_out", static_cast<int>(split.held_out.size())},
                       {"final_total", result.curve.back().total},
                       {"final_noise_term", result.curve.back().noise_term},
                       {"final_structure_term", result.curve.back().structure_term}});
  std::cout << "trained " << tc.steps << " steps, final loss "
            << result.curve.back().total << ", wrote " << (dir / "model.ffm").string()
            << "\n";
  return 0;
}

int cmd_sample(const std::string& model_path, const std::string& manifest, int index,
               int steps, double eta, std::uint64_t seed, const std::string& out,
               const Json& config) {
  const fs::path dir = require_out(out);
  if (model_path.empty()) throw UsageError("sample: --model is required");
  const NoisePredictor model = NoisePredictor::load(model_path);
  const std::vector<TaskSample> samples = load_samples(manifest);
  if (index < 0 || index >= static_cast<int>(samples.size()))
    throw IndexError("sample: --index outside the usable sample list");
  const TaskSample& sample = samples[index];

  const NoiseSchedule schedule = schedule_config(config);
  const ConditionBundle cond = condition_from_sample(sample, model.config());
  const DiffusionSample generated =
      ddim_sample(model, cond, schedule, steps, eta, substream(seed, "eval", index));

  PointCloud initial;
  initial.coords = sample.moving_object().world_points();
  const RobustFitResult fit = extract_goal_transform(initial, generated);
  int inliers = 0;
  for (const bool b : fit.inlier_mask) inliers += b;

  fs::create_directories(dir);
  char stem[32];
  std::snprintf(stem, sizeof(stem), "%04d", index);
  write_fpc1(dir / (std::string("predicted_") + stem + ".fpc"), generated.final_cloud);
  write_json_file(dir / (std::string("goal_pose_") + stem + ".json"),
                  Json{{"pose", pose_to_json(fit.transform)},
                       {"inliers", inliers},
                       {"points", static_cast<int>(fit.inlier_mask.size())}});
  std::cout << "PCE vs stored goal: "
            << kernels::pce(generated.final_cloud.coords, sample.goal_cloud.coords) << "\n";
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& manifest,
             const std::string& split_name, double hold_frac, int steps, double eta,
             std::uint64_t seed, const std::string& out, const Json& config) {
  const fs::path dir = require_out(out);
  if (model_path.empty()) throw UsageError("eval: --model is required");
  const NoisePredictor model = NoisePredictor::load(model_path);
  const std::vector<TaskSample> samples = load_samples(manifest);
  const DatasetSplit split = split_dataset(static_cast<int>(samples.size()), hold_frac);
  const std::vector<TaskSample> chosen =
      subset(samples, split_name == "seen" ? split.train : split.held_out);
  if (chosen.empty()) throw UsageError("eval: empty split selection");

  EvalOptions opts = eval_config(config, seed, split_name);
  if (steps > 0) opts.ddim_steps = steps;
  if (eta >= 0.0) opts.eta = eta;
  opts.predicate = dataset_predicate(manifest, config);

  const NoiseSchedule schedule = schedule_config(config);
  run_eval(model, schedule, chosen, opts, dir);
  return 0;
}

int cmd_e2e(const std::string& spec_path, const std::string& task_flag, std::uint64_t seed,
            const std::string& out, const Json& base_config) {
  const fs::path dir = require_out(out);
  fs::create_directories(dir);

  Json stages = Json::array();
  Json summary{{"seed", seed}};
  const auto write_summary = [&] {
    summary["stages"] = stages;
    write_json_file(dir / "summary.json", summary);
  };
  const auto fail_stage = [&](const std::string& stage, const std::exception& e) {
    stages.push_back(Json{{"stage", stage}, {"status", "failed"}, {"detail", e.what()}});
    write_summary();
  };
  const auto ok_stage = [&](const std::string& stage, const std::string& detail) {
    stages.push_back(Json{{"stage", stage}, {"status", "ok"}, {"detail", detail}});
  };

  // parse: the spec file is a config-shaped JSON with a required "task" key
  Json config = base_config;
  TaskSpec task;
  int count = 24;
  double hold_frac = 0.25;
  try {
    if (!spec_path.empty()) {
      const Json spec = read_json_file(spec_path);
      if (!spec.is_object()) throw DataError("e2e: spec must be a JSON object");
      config.update(spec);
    }
    std::string name = task_flag;
    if (config.contains("task")) name = config["task"].get<std::string>();
    if (name.empty()) throw UsageError("e2e: no task (--task or \"task\" in the spec)");
    task = builtin_task(name);
    task.points_per_object = cfg(config, "gen", "points_per_object", task.points_per_object);
    task.clutter = cfg(config, "gen", "clutter", task.clutter);
    count = config.value("count", count);
    hold_frac = config.value("hold_frac", hold_frac);
    summary["task"] = task.task_id;
    ok_stage("parse", task.task_id + ", count " + std::to_string(count));
  } catch (const std::exception& e) {
    fail_stage("parse", e);
    throw;
  }

  // generate
  std::vector<TaskSample> samples;
  DatasetSplit split;
  try {
    generate_dataset(task, count, seed, dir / "dataset");
    samples = load_samples(dir / "dataset" / "manifest.jsonl");
    split = split_dataset(static_cast<int>(samples.size()), hold_frac);
    if (split.train.empty() || split.held_out.empty())
      throw UsageError("e2e: split leaves a side empty; raise count");
    summary["split"] = Json{{"train", static_cast<int>(split.train.size())},
                            {"held_out", static_cast<int>(split.held_out.size())}};
    ok_stage("generate", std::to_string(samples.size()) + " usable samples");
  } catch (const std::exception& e) {
    fail_stage("generate", e);
    throw;
  }

  // train
  NoisePredictor model(predictor_config(config), seed);
  const NoiseSchedule schedule = schedule_config(config);
  const std::vector<TaskSample> train_set = subset(samples, split.train);
  try {
    const TrainConfig tc = train_config(config, seed);
    const TrainResult result = train(model, train_set, schedule, tc);
    model.save(dir / "model.ffm");
    save_loss_curve(dir / "loss_curve.csv", result.curve);
    summary["final_loss"] = result.curve.back().total;
    ok_stage("train", std::to_string(tc.steps) + " steps");
  } catch (const std::exception& e) {
    fail_stage("train", e);
    throw;
  }

  // eval on the held-out split, against the mean-goal baseline
  const std::vector<TaskSample> held = subset(samples, split.held_out);
  try {
    EvalOptions opts = eval_config(config, seed, "unseen");
    opts.predicate = dataset_predicate(dir / "dataset" / "manifest.jsonl", config);
    const EvalReport report = run_eval(model, schedule, held, opts, dir / "eval");

    const MatX3 baseline = mean_goal_cloud(train_set);
    double baseline_pce = 0.0;
    for (const TaskSample& s : held) baseline_pce += kernels::pce(baseline, s.goal_cloud.coords);
    baseline_pce /= static_cast<double>(held.size());

    summary["pce_mean"] = report.pce_mean;
    summary["baseline_pce"] = baseline_pce;
    summary["beats_baseline"] = report.pce_mean < baseline_pce;
    if (report.has_predicate) summary["success_rate"] = report.success_rate;
    ok_stage("eval", std::to_string(held.size()) + " held-out samples");
  } catch (const std::exception& e) {
    fail_stage("eval", e);
    throw;
  }

  // plan: decompose the first held-out sample's predicted goal into motion
  try {
    const TaskSample& probe = held.front();
    const ConditionBundle cond = condition_from_sample(probe, model.config());
    const EvalOptions opts = eval_config(config, seed, "unseen");
    const DiffusionSample generated = ddim_sample(model, cond, schedule, opts.ddim_steps,
                                                  opts.eta, substream(seed, "plan"));
    PointCloud initial;
    initial.coords = probe.moving_object().world_points();
    const RobustFitResult fit =
        extract_goal_transform(initial, generated, opts.huber_delta);

    const RigidTransform start_pose = probe.moving_object().pose;
    const RigidTransform goal_pose = fit.transform * start_pose;
    // collision proxies: distractors only — the mover, its support and the
    // relation target are part of the intended motion
    const std::vector<Aabb> obstacles =
        obstacle_boxes(probe.initial, {probe.moving_id, "table", "anchor"});
    const Trajectory traj =
        decompose_translation_first(start_pose, goal_pose, obstacles, plan_config(config));
    save_trajectory(dir / "trajectory.json", traj);
    summary["trajectory_waypoints"] = static_cast<int>(traj.waypoints.size());
    summary["split_index"] = traj.split_index;

    std::string detail = std::to_string(traj.waypoints.size()) + " waypoints";
    try {
      const PushCommand push = push_primitive(initial, generated.final_cloud);
      write_json_file(dir / "push.json", Json{{"start", vec3_to_json(push.start)},
                                              {"direction", vec3_to_json(push.direction)},
                                              {"distance", push.distance}});
      detail += ", push written";
    } catch (const ZeroDisplacement&) {
      detail += ", no horizontal push";
    }
    ok_stage("plan", detail);
  } catch (const std::exception& e) {
    fail_stage("plan", e);
    throw;
  }

  write_summary();
  std::cout << "e2e complete: " << (dir / "summary.json").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"simulated goal-cloud generation, training and planning pipeline"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string out, config_path;
  int threads = 0;
  app.add_option("--seed", seed, "stream seed for every derived RNG");
  app.add_option("--out", out, "output directory");
  app.add_option("--threads", threads, "kernel threads; any value gives identical bytes");
  app.add_option("--config", config_path, "JSON config; sections mirror module parameters");

  auto* gen = app.add_subcommand("gen", "generate a simulated dataset");
  std::string task = "toy_ontop";
  int count = 20, points = 0;
  gen->add_option("--task", task, "builtin task family");
  gen->add_option("--count", count, "scenes to synthesize");
  gen->add_option("--points", points, "surface points per object");

  auto* cpca = app.add_subcommand("cpca", "transfer one demo goal to a new scene");
  std::string demo_path, scene_path;
  cpca->add_option("--demo", demo_path, "demo record JSON");
  cpca->add_option("--scene", scene_path, "target scene JSON");

  auto* train_cmd = app.add_subcommand("train", "fit the noise predictor on a dataset");
  std::string manifest;
  double hold_frac = 0.2;
  train_cmd->add_option("--manifest", manifest, "dataset manifest (JSONL)")->required();
  train_cmd->add_option("--hold-frac", hold_frac, "trailing fraction held out");

  auto* sample_cmd = app.add_subcommand("sample", "draw one goal cloud from a checkpoint");
  std::string model_path;
  int index = 0, steps = 0;
  double eta = -1.0;
  sample_cmd->add_option("--model", model_path, "FFM1 checkpoint")->required();
  sample_cmd->add_option("--manifest", manifest, "dataset manifest (JSONL)")->required();
  sample_cmd->add_option("--index", index, "sample index");
  sample_cmd->add_option("--steps", steps, "DDIM steps");
  sample_cmd->add_option("--eta", eta, "DDIM stochasticity");

  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a dataset split");
  std::string split_name = "unseen";
  eval_cmd->add_option("--model", model_path, "FFM1 checkpoint")->required();
  eval_cmd->add_option("--manifest", manifest, "dataset manifest (JSONL)")->required();
  eval_cmd->add_option("--split", split_name, "which side of the split")
      ->check(CLI::IsMember({"seen", "unseen"}));
  eval_cmd->add_option("--hold-frac", hold_frac, "trailing fraction held out");
  eval_cmd->add_option("--steps", steps, "DDIM steps");
  eval_cmd->add_option("--eta", eta, "DDIM stochasticity");

  auto* e2e = app.add_subcommand("e2e", "generate, train, evaluate and plan in one run");
  std::string spec_path;
  e2e->add_option("--spec", spec_path, "task spec JSON (config sections plus \"task\")");
  e2e->add_option("--task", task, "builtin task family (alternative to --spec)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (threads > 0) set_threads(threads);
    const Json config = config_path.empty() ? Json::object() : read_json_file(config_path);

    if (app.got_subcommand(gen)) return cmd_gen(task, count, points, seed, out, config);
    if (app.got_subcommand(cpca)) return cmd_cpca(demo_path, scene_path, out, config);
    if (app.got_subcommand(train_cmd))
      return cmd_train(manifest, hold_frac, seed, out, config);
    if (app.got_subcommand(sample_cmd))
      return cmd_sample(model_path, manifest, index, steps > 0 ? steps : 25,
                        eta >= 0.0 ? eta : 0.0, seed, out, config);
    if (app.got_subcommand(eval_cmd))
      return cmd_eval(model_path, manifest, split_name, hold_frac, steps, eta, seed, out,
                      config);
    if (app.got_subcommand(e2e))
      return cmd_e2e(spec_path, e2e->count("--task") ? task : "", seed, out, config);
    throw UsageError("no subcommand");
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
