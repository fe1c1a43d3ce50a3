#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "goalgen/geometry.hpp"
#include "goalgen/io.hpp"
#include "goalgen/scene.hpp"

namespace goalgen {

// Translation-prioritized end-effector path: waypoints[0..split_index] all
// carry the start orientation (bitwise); rotation is interpolated only after
// the split waypoint. split_index always addresses a valid waypoint.
struct Trajectory {
  std::vector<RigidTransform> waypoints;
  int split_index = 0;

  double path_length() const;
  void validate() const;  // UsageError on empty / bad split / early rotation
};

// Straight horizontal push: place the pusher at `start`, move along
// `direction` (unit, z == 0) for `distance` meters.
struct PushCommand {
  Eigen::Vector3d start = Eigen::Vector3d::Zero();
  Eigen::Vector3d direction = Eigen::Vector3d::UnitX();
  double distance = 0.0;

  void validate() const;  // unit direction within 1e-9, distance >= 0
};

struct PlanParams {
  int samples = 100;            // backward split candidates tested
  double waypoint_step = 0.01;  // candidate stride and waypoint spacing (m)
  double rotation_step = 0.1;   // max orientation change per waypoint (rad)
  double sweep_radius = 0.03;   // capsule proxy radius for the held segment
};

// Exact capsule-vs-AABB clearance test for the translation phase. The
// boundary counts as a hit: distance exactly sweep_radius -> false.
bool check_segment_free(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                        double sweep_radius, const std::vector<Aabb>& obstacles);

// Minimum squared distance between segment ab and an AABB (exact, piecewise
// quadratic in the segment parameter).
double segment_aabb_sqdist(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                           const Aabb& box);

// Walk split candidates backward from the goal in waypoint_step strides and
// return the trajectory for the first candidate whose fixed-orientation
// approach segment is collision-free: translate start -> split, then blend
// rotation+translation split -> goal (shortest-arc slerp).
// Throws NoFeasibleSplit when every candidate is blocked.
Trajectory decompose_translation_first(const RigidTransform& start,
                                       const RigidTransform& goal,
                                       const std::vector<Aabb>& obstacles,
                                       const PlanParams& params = {});

// Push derived from point-wise cloud displacement: direction = normalized
// horizontal mean displacement, distance = its norm, start = centroid backed
// off by half the cloud extent along the push direction plus 5 mm clearance.
// Throws ZeroDisplacement when the mean horizontal displacement < 1e-6 m.
PushCommand push_primitive(const PointCloud& initial_cloud, const PointCloud& goal_cloud);

// World AABBs of every scene object except the ignored ids (the moved object
// itself, usually) — the planner's collision proxies.
std::vector<Aabb> obstacle_boxes(const SceneState& scene,
                                 const std::vector<std::string>& ignore_ids);

// {"split_index": i, "waypoints": [{"position": [...], "quaternion_wxyz": [...]}]}
Json trajectory_to_json(const Trajectory& traj);
Trajectory trajectory_from_json(const Json& j);
void save_trajectory(const std::filesystem::path& path, const Trajectory& traj);
Trajectory load_trajectory(const std::filesystem::path& path);

}  // namespace goalgen
