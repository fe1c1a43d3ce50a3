#include "goalgen/planning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "goalgen/error.hpp"

namespace goalgen {

double Trajectory::path_length() const {
  double len = 0.0;
  for (size_t i = 1; i < waypoints.size(); ++i)
    len += (waypoints[i].translation - waypoints[i - 1].translation).norm();
  return len;
}

void Trajectory::validate() const {
  if (waypoints.empty()) throw UsageError("trajectory: no waypoints");
  if (split_index < 0 || split_index >= static_cast<int>(waypoints.size()))
    throw RangeError("trajectory: split_index out of range");
  const Eigen::Matrix3d& r0 = waypoints.front().rotation;
  for (int i = 0; i <= split_index; ++i) {
    waypoints[i].validate();
    if (!(waypoints[i].rotation.array() == r0.array()).all())
      throw UsageError("trajectory: rotation before the split waypoint");
  }
  for (size_t i = split_index + 1; i < waypoints.size(); ++i) waypoints[i].validate();
}

void PushCommand::validate() const {
  if (!start.allFinite() || !direction.allFinite() || !std::isfinite(distance))
    throw UsageError("push: non-finite field");
  if (std::abs(direction.norm() - 1.0) > 1e-9) throw UsageError("push: direction not unit");
  if (distance < 0.0) throw RangeError("push: negative distance");
}

// Minimum of sum_i gap_i(t)^2 over t in [0,1], where gap_i is the per-axis
// slab violation of a(1-t)+bt. Each gap is affine between the parameter
// values where the point crosses a slab face, so the minimum is attained at
// an interval endpoint or at the vertex of one interval's quadratic.
double segment_aabb_sqdist(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                           const Aabb& box) {
  double ts[8] = {0.0, 1.0};
  int n_ts = 2;
  for (int i = 0; i < 3; ++i) {
    const double d = b[i] - a[i];
    if (d == 0.0) continue;
    for (const double face : {box.min[i], box.max[i]}) {
      const double t = (face - a[i]) / d;
      if (t > 0.0 && t < 1.0) ts[n_ts++] = t;
    }
  }
  std::sort(ts, ts + n_ts);

  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k + 1 < n_ts; ++k) {
    const double t0 = ts[k], t1 = ts[k + 1];
    if (!(t1 > t0)) continue;
    const double tm = 0.5 * (t0 + t1);
    // Quadratic A t^2 + B t + C on this interval from the axes in violation.
    double A = 0.0, B = 0.0, C = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double d = b[i] - a[i];
      const double xm = a[i] + tm * d;
      double c1, c0;
      if (xm < box.min[i]) {
        c1 = -d;
        c0 = box.min[i] - a[i];
      } else if (xm > box.max[i]) {
        c1 = d;
        c0 = a[i] - box.max[i];
      } else {
        continue;
      }
      A += c1 * c1;
      B += 2.0 * c1 * c0;
      C += c0 * c0;
    }
    double local = std::min(A * t0 * t0 + B * t0 + C, A * t1 * t1 + B * t1 + C);
    if (A > 0.0) {
      const double tv = std::clamp(-B / (2.0 * A), t0, t1);
      local = std::min(local, A * tv * tv + B * tv + C);
    }
    best = std::min(best, std::max(local, 0.0));
  }
  return best;
}

bool check_segment_free(const Eigen::Vector3d& a, const Eigen::Vector3d& b,
                        double sweep_radius, const std::vector<Aabb>& obstacles) {
  if (!(sweep_radius >= 0.0)) throw RangeError("check_segment_free: sweep_radius < 0");
  if (!a.allFinite() || !b.allFinite()) throw UsageError("check_segment_free: non-finite endpoint");
  for (const Aabb& box : obstacles)
    if (segment_aabb_sqdist(a, b, box) <= sweep_radius * sweep_radius) return false;
  return true;
}

namespace {

int segments_for(double length, double step) {
  if (length <= 0.0) return 0;
  return std::max(1, static_cast<int>(std::ceil(length / step - 1e-9)));
}

Trajectory build_split_trajectory(const RigidTransform& start, const RigidTransform& goal,
                                  const Eigen::Vector3d& split_pos, const PlanParams& params) {
  const Eigen::Vector3d approach = split_pos - start.translation;
  const Eigen::Vector3d blend = goal.translation - split_pos;
  const bool same_rotation = (start.rotation.array() == goal.rotation.array()).all();

  const Eigen::Quaterniond qs(start.rotation);
  const Eigen::Quaterniond qg(goal.rotation);
  const double angle = qs.angularDistance(qg);

  const int m1 = segments_for(approach.norm(), params.waypoint_step);
  int m2 = std::max(segments_for(blend.norm(), params.waypoint_step),
                    segments_for(angle, params.rotation_step));
  if (m2 == 0 && !same_rotation) m2 = 1;  // rotation differs only in the last ulps

  Trajectory traj;
  traj.waypoints.reserve(m1 + m2 + 1);
  for (int i = 0; i <= m1; ++i) {
    RigidTransform w;
    w.rotation = start.rotation;  // held exactly through the approach
    w.translation = (i == m1) ? split_pos
                              : start.translation + approach * (static_cast<double>(i) / m1);
    traj.waypoints.push_back(w);
  }
  for (int j = 1; j <= m2; ++j) {
    if (j == m2) {
      traj.waypoints.push_back(goal);
      break;
    }
    const double u = static_cast<double>(j) / m2;
    RigidTransform w;
    w.rotation = qs.slerp(u, qg).toRotationMatrix();
    w.translation = split_pos + blend * u;
    traj.waypoints.push_back(w);
  }
  traj.split_index = m1;
  traj.validate();
  return traj;
}

}  // namespace

Trajectory decompose_translation_first(const RigidTransform& start, const RigidTransform& goal,
                                       const std::vector<Aabb>& obstacles,
                                       const PlanParams& params) {
  if (params.samples < 1) throw RangeError("decompose: samples < 1");
  if (!(params.waypoint_step > 0.0)) throw RangeError("decompose: waypoint_step <= 0");
  if (!(params.rotation_step > 0.0)) throw RangeError("decompose: rotation_step <= 0");
  if (!(params.sweep_radius >= 0.0)) throw RangeError("decompose: sweep_radius < 0");
  start.validate();
  goal.validate();

  const Eigen::Vector3d line = goal.translation - start.translation;
  const double total = line.norm();
  for (int k = 0; k < params.samples; ++k) {
    const double back = k * params.waypoint_step;
    if (k > 0 && back >= total) break;  // a split at the start is the caller's fallback
    const Eigen::Vector3d split_pos =
        total > 0.0 ? Eigen::Vector3d(goal.translation - line * (back / total))
                    : start.translation;
    if (check_segment_free(start.translation, split_pos, params.sweep_radius, obstacles))
      return build_split_trajectory(start, goal, split_pos, params);
  }
  throw NoFeasibleSplit("decompose: no collision-free translation split");
}

PushCommand push_primitive(const PointCloud& initial_cloud, const PointCloud& goal_cloud) {
  const Eigen::Index n = initial_cloud.coords.rows();
  if (n == 0) throw SizeError("push: empty cloud");
  if (goal_cloud.coords.rows() != n) throw SizeMismatch("push: cloud sizes differ");

  Eigen::Vector3d mean_disp = (goal_cloud.coords - initial_cloud.coords).colwise().mean();
  mean_disp.z() = 0.0;
  const double dist = mean_disp.norm();
  if (dist < 1e-6) throw ZeroDisplacement("push: mean horizontal displacement < 1e-6");

  PushCommand cmd;
  cmd.direction = mean_disp / dist;
  cmd.distance = dist;
  const Eigen::Vector3d centroid = initial_cloud.coords.colwise().mean();
  const Eigen::VectorXd proj = initial_cloud.coords * cmd.direction;
  const double half_extent = 0.5 * (proj.maxCoeff() - proj.minCoeff());
  cmd.start = centroid - cmd.direction * (half_extent + 0.005);
  cmd.validate();
  return cmd;
}

std::vector<Aabb> obstacle_boxes(const SceneState& scene,
                                 const std::vector<std::string>& ignore_ids) {
  std::vector<Aabb> boxes;
  boxes.reserve(scene.objects.size());
  for (const SceneObject& obj : scene.objects) {
    if (std::find(ignore_ids.begin(), ignore_ids.end(), obj.id) != ignore_ids.end()) continue;
    boxes.push_back(obj.world_aabb());
  }
  return boxes;
}

Json trajectory_to_json(const Trajectory& traj) {
  traj.validate();
  Json ws = Json::array();
  for (const RigidTransform& w : traj.waypoints) {
    const Eigen::Vector4d q = w.quat_wxyz();
    ws.push_back(Json{{"position", vec3_to_json(w.translation)},
                      {"quaternion_wxyz", {q[0], q[1], q[2], q[3]}}});
  }
  return Json{{"split_index", traj.split_index}, {"waypoints", std::move(ws)}};
}

Trajectory trajectory_from_json(const Json& j) {
  try {
    Trajectory traj;
    traj.split_index = j.at("split_index").get<int>();
    for (const Json& wj : j.at("waypoints")) {
      const auto& qj = wj.at("quaternion_wxyz");
      if (qj.size() != 4) throw DataError("trajectory: quaternion needs 4 entries");
      const Eigen::Vector4d q(qj[0].get<double>(), qj[1].get<double>(), qj[2].get<double>(),
                              qj[3].get<double>());
      traj.waypoints.push_back(
          RigidTransform::from_quat_wxyz(q, vec3_from_json(wj.at("position"))));
    }
    traj.validate();
    return traj;
  } catch (const Json::exception& e) {
    throw DataError(std::string("trajectory: malformed JSON: ") + e.what());
  }
}

void save_trajectory(const std::filesystem::path& path, const Trajectory& traj) {
  write_json_file(path, trajectory_to_json(traj));
}

Trajectory load_trajectory(const std::filesystem::path& path) {
  return trajectory_from_json(read_json_file(path));
}

}  // namespace goalgen
