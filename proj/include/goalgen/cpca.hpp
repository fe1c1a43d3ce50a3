#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "goalgen/io.hpp"
#include "goalgen/registration.hpp"
#include "goalgen/scene.hpp"

namespace goalgen {

// Proximal contacts of one object against another. Points and directions live
// in the owning object's frame; distances are the shared ray gaps.
struct ContactSet {
  MatX3 points;                   // C, M x 3
  MatX3 directions;               // D, M x 3, unit rows
  Eigen::VectorXd distances;      // L, M, non-negative
  std::vector<int> source_index;  // nearest surface-sample index per contact

  int size() const { return static_cast<int>(points.rows()); }
  void validate() const;
};

struct GoalPose {
  RigidTransform transform;
  bool collision_free = false;
  double sphere_radius_used = 0.0;
};

// Covariance-based outward directions for clouds without stored normals:
// smallest principal axis of the k-nearest neighborhood, oriented away from
// the cloud centroid.
MatX3 estimate_outward_directions(const MatX3& points, int k_neighbors = 12);

// Casts a ray from every surface point of `a` along its outward direction and
// records hits on `b`'s triangle mesh within `threshold`. Paired outputs share
// index and gap distance; the b-side contact point is the exact ray hit.
std::pair<ContactSet, ContactSet> detect_contacts(const SceneObject& a, const SceneObject& b,
                                                  double threshold);

// Relocates each contact to the corresponding point on the target instance;
// directions and distances carry over unchanged.
ContactSet transfer_contacts(const ContactSet& contacts, const CorrespondenceSet& corr,
                             const PointCloud& target_cloud);

// Goal pose for A': rotation from relative-rotation invariance, translation
// from averaging the contact-alignment condition over all contact pairs.
RigidTransform solve_goal_pose(const ContactSet& contacts_a, const ContactSet& contacts_b,
                               const Eigen::Matrix3d& r_a, const Eigen::Matrix3d& r_b,
                               const RigidTransform& pose_b_prime);

struct ResolveParams {
  double radius_step = 0.005;
  int samples_per_shell = 64;
  double max_radius = 0.3;
  double collision_margin = 0.002;
  std::vector<std::string> ignore_ids;  // scene objects excluded from the check
};

// Keeps the candidate if collision-free; otherwise walks translation offsets
// over growing Fibonacci-direction shells and returns the first free pose.
GoalPose resolve_collision(const RigidTransform& candidate, const ObjectGeometry& moving,
                           const SceneState& scene, const ResolveParams& params = {});

// A manipulation demonstration: a scene, the object that moves, the object it
// ends up proximal to, and the recorded goal pose of the moving object.
struct DemoRecord {
  SceneState scene;
  std::string moving_id;
  std::string proximal_id;
  RigidTransform goal_pose;
};

void save_demo(const std::filesystem::path& path, const DemoRecord& demo,
               const std::filesystem::path& geom_dir);
DemoRecord load_demo(const std::filesystem::path& path);

// Registration settings tuned for surface clouds that carry their analytic
// unit normals as the feature channel (squared feature distances in [0, 4]).
// The normal gate keeps thin parts — plate faces, mug walls — from collapsing
// onto each other during the wide-sigma EM phase, and the stiff smoothness
// weight holds sparsely sampled regions coherent.
inline CpdParams cpd_params_for_surfaces() {
  CpdParams p;
  p.feature_weight = 2e-2;
  p.lambda = 10.0;
  return p;
}

struct CpcaParams {
  double contact_threshold = 0.01;
  CpdParams cpd = cpd_params_for_surfaces();
  ResolveParams resolve;
};

// Full contact-alignment pipeline: register demo objects to their augmented
// counterparts, detect demo contacts at the goal state, transfer them through
// the correspondences, solve the goal pose, then resolve collisions.
GoalPose cpca_generate(const DemoRecord& demo, const SceneState& augmented,
                       const CpcaParams& params = {});

}  // namespace goalgen
