#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "goalgen/geometry.hpp"
#include "goalgen/io.hpp"

namespace goalgen {

enum class JointType { Revolute, Prismatic };

struct LinkDef {
  std::string category;  // semantic label used for cross-asset joint alignment
  JointType type = JointType::Prismatic;
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();    // object frame, unit
  Eigen::Vector3d anchor = Eigen::Vector3d::Zero();   // point on axis (revolute)
  double lower = 0.0, upper = 0.0;                    // joint limits, lower <= upper
  int point_begin = 0, point_end = 0;                 // [begin,end) into surface cloud
  int vert_begin = 0, vert_end = 0;                   // [begin,end) into mesh vertices
};

struct ObjectGeometry {
  PointCloud surface;  // object frame, bottom of the asset at z = 0
  MatX3 normals;       // per-point outward directions (0x3 when absent)
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::string category;
  std::vector<LinkDef> links;
  Json recipe;  // {"kind": ..., "params": {...}} — geometry files store this, not raw data

  bool has_mesh() const { return !triangles.empty(); }
  bool has_normals() const {
    return normals.rows() > 0 && normals.rows() == surface.coords.rows();
  }
  void validate() const;
};

// Forward kinematics in the object frame: link point/vertex ranges move along
// (prismatic) or about (revolute) their axis by the joint value.
void check_joint_values(const ObjectGeometry& g, const std::vector<double>& joints);
MatX3 posed_points(const ObjectGeometry& g, const std::vector<double>& joints);
MatX3 posed_normals(const ObjectGeometry& g, const std::vector<double>& joints);
std::vector<Eigen::Vector3d> posed_vertices(const ObjectGeometry& g,
                                            const std::vector<double>& joints);
std::vector<double> default_joints(const ObjectGeometry& g);  // lower limits

struct SceneObject {
  std::string id;
  std::string category;
  ObjectGeometry geometry;
  RigidTransform pose;
  std::vector<double> joint_values;  // one per link

  MatX3 world_points() const;
  MatX3 world_normals() const;  // empty when geometry has none
  Aabb world_aabb() const { return aabb_of(world_points()); }
};

struct SceneState {
  std::vector<SceneObject> objects;
  Aabb workspace;

  int index_of(const std::string& id) const;           // -1 when absent
  const SceneObject& by_id(const std::string& id) const;  // IndexError when absent
  int index_of_category(const std::string& category, int skip = 0) const;
  void validate() const;  // unique ids, joints within limits, AABBs inside workspace
};

// --- procedural assets ------------------------------------------------------
// All builders are deterministic, emit exactly n_points surface samples with
// analytic outward normals, and a coarse triangle mesh. Frames: x/y centered,
// z = 0 at the asset bottom.
ObjectGeometry make_box(double wx, double wy, double wz, int n_points);
ObjectGeometry make_open_box(double wx, double wy, double wz, double wall, int n_points);
ObjectGeometry make_cylinder(double radius, double height, int n_points);
ObjectGeometry make_sphere(double radius, int n_points);
ObjectGeometry make_mug(double radius, double height, double wall, bool handle, int n_points);
ObjectGeometry make_drawer_unit(double w, double d, double h, double wall, int n_points);
ObjectGeometry make_lid_box(double w, double d, double thickness, int n_points);
ObjectGeometry build_geometry(const Json& recipe);  // dispatch on recipe["kind"]

// --- spatial relations ------------------------------------------------------
enum class RelationKind { OnTop, Inside, InsideLink, Near, Joint };
std::string to_string(RelationKind k);
RelationKind relation_from_string(const std::string& s);

struct RelationParams {
  double gap_tol = 0.003;     // OnTop: |bottom(A) - top(B)| tolerance
  double overlap_frac = 0.5;  // OnTop: horizontal AABB overlap / A's footprint
  double near_max = 0.03;     // Near: max surface gap; gap must be strictly positive
};

// OnTop: A's AABB bottom within gap_tol of B's AABB top and horizontal overlap
// at least overlap_frac of A's footprint. Inside: AABB(A) contained in AABB(B)
// and A strictly between B's top/bottom faces or strictly between B's four side
// faces. Near: minimum surface-sample gap in (0, near_max] — contact excluded.
// InsideLink/Joint are rejected here (see inside_link_holds / joint values).
bool relation_holds(RelationKind kind, const SceneObject& a, const SceneObject& b,
                    const RelationParams& params = {});
bool inside_link_holds(const SceneObject& a, const SceneObject& b, int link_index,
                       const RelationParams& params = {});

// --- collision proxy ---------------------------------------------------------
// A point collides with an object when it sits deeper than `margin` inside that
// object's world AABB; surface-on-surface contact is therefore not a collision.
bool objects_collide(const SceneObject& a, const SceneObject& b, double margin);
bool placement_collides(const ObjectGeometry& g, const RigidTransform& pose,
                        const std::vector<double>& joints, const SceneState& scene,
                        double margin, const std::vector<std::string>& ignore_ids = {});
bool scene_collision_free(const SceneState& scene, double margin);

struct SampleParams {
  RelationParams relation;
  double collision_margin = 0.002;
  int max_attempts = 10000;
};

// Rejection-samples a pose for A (uniform position in an expanded AABB of B,
// yaw-only rotation) until the relation holds, the placement is collision-free,
// and A stays inside the workspace. Inside relations skip the A-B collision
// pair (containment is governed by the predicate itself).
RigidTransform sample_relation_pose(RelationKind kind, const ObjectGeometry& a,
                                    const SceneObject& b, const SceneState& scene,
                                    std::uint64_t rng_seed, const SampleParams& params = {});

// Maps demo joint values onto the target by matching link categories and
// preserving the normalized value (v - lo) / (hi - lo).
std::vector<double> align_joint_state(const ObjectGeometry& demo,
                                      const std::vector<double>& demo_joints,
                                      const ObjectGeometry& target);

// --- serialization ------------------------------------------------------------
Json geometry_to_json(const ObjectGeometry& g);  // recipe + category
ObjectGeometry geometry_from_json(const Json& j);

// Scene files reference per-object geometry JSON files (relative paths).
void save_scene(const std::filesystem::path& scene_path, const SceneState& scene,
                const std::filesystem::path& geom_dir);
SceneState load_scene(const std::filesystem::path& scene_path);
Json scene_to_json(const SceneState& scene,
                   const std::vector<std::string>& geometry_refs);
SceneState scene_from_json(const Json& j, const std::filesystem::path& base_dir);

}  // namespace goalgen
