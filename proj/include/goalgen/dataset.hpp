#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "goalgen/scene.hpp"

namespace goalgen {

// One supervised example: an initial scene, the object to move, and the
// world-frame cloud of that object at the goal. Rigid tasks carry the goal
// pose; articulated tasks carry goal joint values instead.
struct TaskSample {
  std::string task_id;
  std::string instruction;
  SceneState initial;
  std::string moving_id;
  std::optional<RigidTransform> goal_transform;
  std::optional<std::vector<double>> goal_joints;
  PointCloud goal_cloud;  // moving object's surface at the goal, world frame

  const SceneObject& moving_object() const { return initial.by_id(moving_id); }
  // Re-derives the goal cloud from geometry + goal state; the stored cloud
  // must agree with this to 1e-9 (validated by the dataset tests).
  MatX3 goal_cloud_from_state() const;
  void validate() const;
};

// Sample files: JSON descriptor referencing a scene file and an FPC1 goal
// cloud, all paths relative to the descriptor.
void save_sample(const std::filesystem::path& sample_path, const TaskSample& sample,
                 const std::filesystem::path& geom_dir);
TaskSample load_sample(const std::filesystem::path& sample_path);

// Declarative task family: which relation to synthesize, which procedural
// assets to draw, and how to phrase the instruction.
struct TaskSpec {
  std::string task_id;
  RelationKind relation = RelationKind::OnTop;
  std::string moving_category;   // recipe kind for the object that moves
  std::string anchor_category;   // recipe kind for the relation counterpart
  std::string instruction_template;  // "place the {A} on the {B}"
  int points_per_object = 256;
  int clutter = 0;  // extra distractor objects per scene
};

// Built-in desk-scale task families keyed by name; UsageError on unknown names.
TaskSpec builtin_task(const std::string& name);
std::vector<std::string> builtin_task_names();

struct ManifestEntry {
  std::string task_id;
  int sample_index = 0;
  std::uint64_t seed = 0;
  std::string status;  // "ok" or the error category
  std::string sample_file;  // relative path, empty on failure
  std::string relation;
  std::vector<std::string> categories;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<int> ok_indices() const;
};

// Emits `count` samples under out_dir (scenes, geometries, clouds, JSONL
// manifest). Per-sample RNG derives from (seed, sample index) so parallel and
// serial runs write identical bytes.
DatasetManifest generate_dataset(const TaskSpec& spec, int count, std::uint64_t seed,
                                 const std::filesystem::path& out_dir);

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::filesystem::path& path);

// Loads every "ok" sample listed by a manifest file.
std::vector<TaskSample> load_samples(const std::filesystem::path& manifest_path);

// Deterministic split: the last hold_frac of samples (by manifest order) form
// the held-out set.
struct DatasetSplit {
  std::vector<int> train;  // indices into the loaded sample list
  std::vector<int> held_out;
};
DatasetSplit split_dataset(int n_samples, double hold_frac);

}  // namespace goalgen
