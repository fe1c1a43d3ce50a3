#include "goalgen/dataset.hpp"

#include <cstdio>
#include <sstream>

#include "goalgen/cpca.hpp"
#include "goalgen/io.hpp"
#include "goalgen/rng.hpp"

namespace goalgen {

// --- task sample ---------------------------------------------------------------

MatX3 TaskSample::goal_cloud_from_state() const {
  const SceneObject& mover = moving_object();
  if (!goal_transform && !goal_joints) throw UsageError("task sample: no goal state recorded");
  SceneObject posed = mover;
  if (goal_transform) posed.pose = *goal_transform;
  if (goal_joints) posed.joint_values = *goal_joints;
  return posed.world_points();
}

void TaskSample::validate() const {
  initial.validate();
  const SceneObject& mover = moving_object();  // IndexError when the id is missing
  if (goal_joints) check_joint_values(mover.geometry, *goal_joints);
  const MatX3 expect = goal_cloud_from_state();
  if (goal_cloud.size() != static_cast<int>(expect.rows()))
    throw SizeMismatch("task sample: goal cloud size does not match the moving object");
  if ((goal_cloud.coords - expect).cwiseAbs().maxCoeff() > 1e-9)
    throw DataError("task sample: goal cloud disagrees with the recorded goal state");
  goal_cloud.validate();
}

// --- sample files ----------------------------------------------------------------

void save_sample(const std::filesystem::path& sample_path, const TaskSample& sample,
                 const std::filesystem::path& geom_dir) {
  std::filesystem::create_directories(geom_dir);
  std::filesystem::create_directories(sample_path.parent_path());
  const std::string stem = sample_path.stem().string();
  std::vector<std::string> refs;
  for (const SceneObject& o : sample.initial.objects) {
    const std::filesystem::path gf = geom_dir / (stem + "." + o.id + ".json");
    write_json_file(gf, geometry_to_json(o.geometry));
    refs.push_back(std::filesystem::relative(gf, sample_path.parent_path()).generic_string());
  }
  const std::filesystem::path cloud_file =
      sample_path.parent_path() / (stem + ".goal.fpc");
  write_fpc1(cloud_file, sample.goal_cloud);

  Json j{{"task_id", sample.task_id},
         {"instruction", sample.instruction},
         {"scene", scene_to_json(sample.initial, refs)},
         {"moving_id", sample.moving_id},
         {"goal_cloud", cloud_file.filename().generic_string()}};
  if (sample.goal_transform) j["goal_pose"] = pose_to_json(*sample.goal_transform);
  if (sample.goal_joints) j["goal_joints"] = *sample.goal_joints;
  write_json_file(sample_path, j);
}

TaskSample load_sample(const std::filesystem::path& sample_path) {
  const Json j = read_json_file(sample_path);
  TaskSample s;
  std::string cloud_ref;
  try {
    s.task_id = j.at("task_id").get<std::string>();
    s.instruction = j.at("instruction").get<std::string>();
    s.initial = scene_from_json(j.at("scene"), sample_path.parent_path());
    s.moving_id = j.at("moving_id").get<std::string>();
    if (j.contains("goal_pose")) s.goal_transform = pose_from_json(j.at("goal_pose"));
    if (j.contains("goal_joints")) s.goal_joints = j.at("goal_joints").get<std::vector<double>>();
    cloud_ref = j.at("goal_cloud").get<std::string>();
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed task sample: ") + e.what());
  }
  // The stored cloud is f32; the supervision target is re-derived from the
  // geometry and goal state in full precision and checked against the file.
  const PointCloud stored = read_fpc1(sample_path.parent_path() / cloud_ref);
  s.goal_cloud.coords = s.goal_cloud_from_state();
  if (stored.size() != s.goal_cloud.size() ||
      (stored.coords - s.goal_cloud.coords).cwiseAbs().maxCoeff() > 1e-4)
    throw DataError("task sample: stored goal cloud disagrees with the goal state");
  s.validate();
  return s;
}

// --- built-in task families -------------------------------------------------------

TaskSpec builtin_task(const std::string& name) {
  TaskSpec s;
  s.task_id = name;
  if (name == "toy_ontop") {
    s.relation = RelationKind::OnTop;
    s.moving_category = "box";
    s.anchor_category = "box";
    s.instruction_template = "place the {A} on the {B}";
    s.clutter = 1;
  } else if (name == "mug_coaster") {
    s.relation = RelationKind::OnTop;
    s.moving_category = "mug";
    s.anchor_category = "cylinder";
    s.instruction_template = "put the {A} on the {B}";
  } else if (name == "toy_near") {
    s.relation = RelationKind::Near;
    s.moving_category = "cylinder";
    s.anchor_category = "box";
    s.instruction_template = "move the {A} next to the {B}";
  } else if (name == "toy_inside") {
    s.relation = RelationKind::Inside;
    s.moving_category = "box";
    s.anchor_category = "open_box";
    s.instruction_template = "put the {A} in the {B}";
  } else if (name == "drawer_open") {
    s.relation = RelationKind::Joint;
    s.moving_category = "drawer_unit";
    s.anchor_category = "";
    s.instruction_template = "pull the {A} open";
  } else {
    throw UsageError("unknown task family: " + name);
  }
  return s;
}

std::vector<std::string> builtin_task_names() {
  return {"toy_ontop", "mug_coaster", "toy_near", "toy_inside", "drawer_open"};
}

// --- generation ---------------------------------------------------------------------

namespace {

constexpr double kMargin = 0.002;

// Desk-scale instance variation per recipe kind. Anchors are the flat/hollow
// supports, movers the handheld pieces; ranges stay within the ~1.3x spread
// the registration stage is tuned for.
ObjectGeometry sample_instance(const std::string& kind, bool as_anchor, int n, Rng& rng) {
  auto u = [&](double lo, double hi) { return rng.uniform(lo, hi); };
  if (kind == "box") {
    if (as_anchor) return make_box(u(0.11, 0.15), u(0.11, 0.15), u(0.012, 0.02), n);
    const double e = u(0.028, 0.042);
    return make_box(e, e, e, n);
  }
  if (kind == "cylinder") {
    if (as_anchor) return make_cylinder(u(0.042, 0.055), u(0.006, 0.01), n);  // coaster
    return make_cylinder(u(0.018, 0.028), u(0.05, 0.08), n);
  }
  if (kind == "mug") return make_mug(u(0.028, 0.037), u(0.07, 0.095), 0.004, true, n);
  if (kind == "open_box")
    return make_open_box(u(0.11, 0.15), u(0.11, 0.15), u(0.05, 0.07), 0.006, n);
  if (kind == "drawer_unit")
    return make_drawer_unit(u(0.12, 0.16), u(0.12, 0.16), u(0.075, 0.1), 0.008, n);
  if (kind == "sphere") return make_sphere(u(0.014, 0.024), n);
  throw UsageError("no instance sampler for asset kind: " + kind);
}

ObjectGeometry make_table(int n) {
  ObjectGeometry g = make_box(0.6, 0.6, 0.02, n);
  g.category = "table";
  return g;
}

SceneObject make_object(std::string id, ObjectGeometry g, const RigidTransform& pose) {
  SceneObject o;
  o.id = std::move(id);
  o.category = g.category;
  o.joint_values = default_joints(g);
  o.geometry = std::move(g);
  o.pose = pose;
  return o;
}

// Uniform tabletop placement with yaw, rejected on collision or leaving the
// workspace.
RigidTransform place_on_table(const ObjectGeometry& g, const SceneState& scene, Rng& rng,
                              int attempts = 2000) {
  const double radius = g.surface.coords.leftCols(2).rowwise().norm().maxCoeff();
  const double lim = 0.3 - radius;
  if (lim <= 0.0) throw SamplingExhausted("asset too large for the tabletop");
  const std::vector<double> joints = default_joints(g);
  for (int a = 0; a < attempts; ++a) {
    RigidTransform t;
    t.rotation = yaw_rotation(rng.uniform(0.0, 6.283185307179586));
    t.translation = Eigen::Vector3d(rng.uniform(-lim, lim), rng.uniform(-lim, lim), 0.0);
    if (!placement_collides(g, t, joints, scene, kMargin) &&
        scene.workspace.contains(aabb_of(t.apply(posed_points(g, joints)))))
      return t;
  }
  throw SamplingExhausted("no free tabletop pose found");
}

std::string fill_template(std::string text, const std::string& a, const std::string& b) {
  auto display = [](std::string s) {
    for (char& ch : s)
      if (ch == '_') ch = ' ';
    return s;
  };
  auto replace = [](std::string& t, const std::string& slot, const std::string& value) {
    for (std::size_t at = t.find(slot); at != std::string::npos; at = t.find(slot))
      t.replace(at, slot.size(), value);
  };
  replace(text, "{A}", display(a));
  replace(text, "{B}", display(b));
  return text;
}

// The demonstration a goal is transferred from: independently drawn instances
// with the moving object recorded at a canonical completed placement.
DemoRecord make_demo(const TaskSpec& spec, Rng& rng) {
  DemoRecord demo;
  demo.scene.workspace = {Eigen::Vector3d(-2, -2, -2), Eigen::Vector3d(2, 2, 2)};
  ObjectGeometry mover = sample_instance(spec.moving_category, false, spec.points_per_object, rng);
  ObjectGeometry anchor = sample_instance(spec.anchor_category, true, spec.points_per_object, rng);
  const Aabb mbox = aabb_of(mover.surface.coords);
  const Aabb abox = aabb_of(anchor.surface.coords);

  RigidTransform goal;
  if (spec.relation == RelationKind::OnTop) {
    goal.translation = Eigen::Vector3d(0, 0, abox.max.z());  // resting, centered
  } else {  // Near: beside the anchor with a fixed air gap
    goal.translation = Eigen::Vector3d(abox.max.x() - mbox.min.x() + 0.012, 0.0, 0.0);
  }
  demo.scene.objects.push_back(make_object("demo_mover", std::move(mover), goal));
  demo.scene.objects.push_back(make_object("demo_anchor", std::move(anchor), {}));
  demo.moving_id = "demo_mover";
  demo.proximal_id = "demo_anchor";
  demo.goal_pose = goal;
  return demo;
}

struct Generated {
  TaskSample sample;
  std::vector<std::string> categories;
};

Generated generate_one(const TaskSpec& spec, std::uint64_t seed) {
  Generated out;
  TaskSample& s = out.sample;
  s.task_id = spec.task_id;

  Rng scene_rng(substream(seed, "scene"));
  SceneState& scene = s.initial;
  scene.workspace = {Eigen::Vector3d(-0.35, -0.35, -0.05), Eigen::Vector3d(0.35, 0.35, 0.4)};
  RigidTransform table_pose;
  table_pose.translation = Eigen::Vector3d(0, 0, -0.02);  // tabletop at z = 0
  scene.objects.push_back(make_object("table", make_table(spec.points_per_object), table_pose));

  ObjectGeometry mover_geom =
      sample_instance(spec.moving_category, false, spec.points_per_object, scene_rng);
  out.categories.push_back(mover_geom.category);
  scene.objects.push_back(
      make_object("mover", mover_geom, place_on_table(mover_geom, scene, scene_rng)));

  const bool has_anchor = spec.relation != RelationKind::Joint;
  if (has_anchor) {
    ObjectGeometry anchor_geom =
        sample_instance(spec.anchor_category, true, spec.points_per_object, scene_rng);
    out.categories.push_back(anchor_geom.category);
    scene.objects.push_back(
        make_object("anchor", anchor_geom, place_on_table(anchor_geom, scene, scene_rng)));
  }
  for (int cl = 0; cl < spec.clutter; ++cl) {
    ObjectGeometry g = sample_instance("sphere", false, spec.points_per_object, scene_rng);
    scene.objects.push_back(make_object("clutter" + std::to_string(cl), g,
                                        place_on_table(g, scene, scene_rng)));
  }
  scene.validate();

  s.moving_id = "mover";
  s.instruction = fill_template(spec.instruction_template, out.categories.front(),
                                has_anchor ? out.categories.back() : "");

  switch (spec.relation) {
    case RelationKind::OnTop:
    case RelationKind::Near: {
      Rng demo_rng(substream(seed, "demo"));
      const DemoRecord demo = make_demo(spec, demo_rng);
      CpcaParams params;
      if (spec.relation == RelationKind::Near)
        params.contact_threshold = 0.02;  // must reach across the demo air gap
      const GoalPose gp = cpca_generate(demo, scene, params);
      if (!gp.collision_free) throw NoFreePose("goal collision unresolved");
      s.goal_transform = gp.transform;
      break;
    }
    case RelationKind::Inside: {
      s.goal_transform = sample_relation_pose(spec.relation, scene.by_id("mover").geometry,
                                              scene.by_id("anchor"), scene,
                                              substream(seed, "goal"));
      break;
    }
    case RelationKind::Joint: {
      Rng demo_rng(substream(seed, "demo"));
      ObjectGeometry demo_geom =
          sample_instance(spec.moving_category, false, spec.points_per_object, demo_rng);
      std::vector<double> demo_joints;
      for (const LinkDef& l : demo_geom.links)
        demo_joints.push_back(l.lower + scene_rng.uniform(0.45, 0.85) * (l.upper - l.lower));
      s.goal_joints = align_joint_state(demo_geom, demo_joints, scene.by_id("mover").geometry);
      break;
    }
    default:
      throw UsageError("task family relation not supported: " + to_string(spec.relation));
  }

  // audit: the recorded goal must actually satisfy the task relation
  if (has_anchor) {
    SceneObject at_goal = scene.by_id("mover");
    if (s.goal_transform) at_goal.pose = *s.goal_transform;
    if (!relation_holds(spec.relation, at_goal, scene.by_id("anchor")))
      throw NoFreePose("transferred goal violates the task relation");
  }

  s.goal_cloud.coords = s.goal_cloud_from_state();
  return out;
}

std::string sample_stem(const TaskSpec& spec, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_%04d", index);
  return spec.task_id + buf;
}

}  // namespace

DatasetManifest generate_dataset(const TaskSpec& spec, int count, std::uint64_t seed,
                                 const std::filesystem::path& out_dir) {
  if (count < 1) throw RangeError("generate_dataset: count must be >= 1");
  if (spec.points_per_object < 16) throw RangeError("generate_dataset: too few points per object");
  std::filesystem::create_directories(out_dir / "geom");

  DatasetManifest manifest;
  manifest.entries.resize(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < count; ++i) {
    ManifestEntry& e = manifest.entries[static_cast<std::size_t>(i)];
    e.task_id = spec.task_id;
    e.sample_index = i;
    e.seed = substream(seed, "sample", static_cast<std::uint64_t>(i));
    e.relation = to_string(spec.relation);
    try {
      Generated g = generate_one(spec, e.seed);
      const std::string file = sample_stem(spec, i) + ".json";
      save_sample(out_dir / file, g.sample, out_dir / "geom");
      e.status = "ok";
      e.sample_file = file;
      e.categories = std::move(g.categories);
    } catch (const SamplingExhausted&) {
      e.status = "sampling_exhausted";
    } catch (const NoFreePose&) {
      e.status = "relation_failed";
    } catch (const NoContacts&) {
      e.status = "no_contacts";
    } catch (const NonConvergence&) {
      e.status = "non_convergence";
    } catch (const std::exception&) {  // never lets an exception cross the omp region
      e.status = "failed";
    }
  }
  save_manifest(out_dir / "manifest.jsonl", manifest);
  return manifest;
}

// --- manifests ----------------------------------------------------------------------

std::vector<int> DatasetManifest::ok_indices() const {
  std::vector<int> idx;
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].status == "ok") idx.push_back(static_cast<int>(i));
  return idx;
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  std::ostringstream out;
  for (const ManifestEntry& e : manifest.entries) {
    const Json j{{"task_id", e.task_id},     {"sample_index", e.sample_index},
                 {"seed", e.seed},           {"status", e.status},
                 {"sample_file", e.sample_file}, {"relation", e.relation},
                 {"categories", e.categories}};
    out << j.dump() << '\n';
  }
  write_text_file(path, out.str());
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  DatasetManifest manifest;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const Json j = Json::parse(line);
      ManifestEntry e;
      e.task_id = j.at("task_id").get<std::string>();
      e.sample_index = j.at("sample_index").get<int>();
      e.seed = j.at("seed").get<std::uint64_t>();
      e.status = j.at("status").get<std::string>();
      e.sample_file = j.at("sample_file").get<std::string>();
      e.relation = j.at("relation").get<std::string>();
      e.categories = j.at("categories").get<std::vector<std::string>>();
      manifest.entries.push_back(std::move(e));
    } catch (const Json::exception& e) {
      throw DataError("malformed manifest line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return manifest;
}

std::vector<TaskSample> load_samples(const std::filesystem::path& manifest_path) {
  const DatasetManifest manifest = load_manifest(manifest_path);
  const std::filesystem::path base = manifest_path.parent_path();
  std::vector<TaskSample> samples;
  for (int i : manifest.ok_indices())
    samples.push_back(load_sample(base / manifest.entries[static_cast<std::size_t>(i)].sample_file));
  return samples;
}

DatasetSplit split_dataset(int n_samples, double hold_frac) {
  if (n_samples < 0) throw RangeError("split_dataset: negative sample count");
  if (!(hold_frac >= 0.0 && hold_frac <= 1.0))
    throw RangeError("split_dataset: hold fraction must lie in [0, 1]");
  const int hold = static_cast<int>(std::lround(n_samples * hold_frac));
  DatasetSplit split;
  for (int i = 0; i < n_samples - hold; ++i) split.train.push_back(i);
  for (int i = n_samples - hold; i < n_samples; ++i) split.held_out.push_back(i);
  return split;
}

}  // namespace goalgen
