#include "goalgen/cpca.hpp"

#include <algorithm>
#include <cmath>

#include "goalgen/kernels.hpp"

namespace goalgen {

namespace {

// Two-sided ray/triangle intersection; forward hits only (t >= 0, so a ray
// starting exactly on the triangle plane still counts as a touch).
bool ray_triangle(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                  const Eigen::Vector3d& v0, const Eigen::Vector3d& v1,
                  const Eigen::Vector3d& v2, double& t_out) {
  constexpr double eps = 1e-12;
  const Eigen::Vector3d e1 = v1 - v0, e2 = v2 - v0;
  const Eigen::Vector3d pvec = dir.cross(e2);
  const double det = e1.dot(pvec);
  if (std::abs(det) < 1e-14) return false;
  const double inv = 1.0 / det;
  const Eigen::Vector3d svec = origin - v0;
  const double u = svec.dot(pvec) * inv;
  if (u < -eps || u > 1.0 + eps) return false;
  const Eigen::Vector3d qvec = svec.cross(e1);
  const double v = dir.dot(qvec) * inv;
  if (v < -eps || u + v > 1.0 + eps) return false;
  const double t = e2.dot(qvec) * inv;
  if (t < -eps) return false;
  t_out = std::max(t, 0.0);
  return true;
}

}  // namespace

void ContactSet::validate() const {
  const int m = size();
  if (m < 1) throw NoContacts("contact set is empty");
  if (directions.rows() != m || distances.size() != m ||
      static_cast<int>(source_index.size()) != m)
    throw SizeMismatch("contact set arrays disagree on length");
  for (int i = 0; i < m; ++i) {
    if (std::abs(directions.row(i).norm() - 1.0) > 1e-9)
      throw DegenerateInput("contact direction is not unit length");
    if (distances[i] < 0.0) throw RangeError("contact distance is negative");
  }
}

MatX3 estimate_outward_directions(const MatX3& points, int k_neighbors) {
  const int n = static_cast<int>(points.rows());
  if (n < 4) throw SizeError("estimate_outward_directions: need at least 4 points");
  const int k = std::min(k_neighbors, n - 1);
  const Eigen::RowVector3d centroid = points.colwise().mean();
  MatX3 out(n, 3);
  std::vector<std::pair<double, int>> dist(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) dist[j] = {(points.row(j) - points.row(i)).squaredNorm(), j};
    std::partial_sort(dist.begin(), dist.begin() + k + 1, dist.end());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (int t = 0; t <= k; ++t) mean += points.row(dist[t].second).transpose();
    mean /= k + 1;
    for (int t = 0; t <= k; ++t) {
      const Eigen::Vector3d d = points.row(dist[t].second).transpose() - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    Eigen::Vector3d normal = es.eigenvectors().col(0);  // smallest variance axis
    if (normal.dot(points.row(i).transpose() - centroid.transpose()) < 0.0) normal = -normal;
    out.row(i) = normal.normalized().transpose();
  }
  return out;
}

std::pair<ContactSet, ContactSet> detect_contacts(const SceneObject& a, const SceneObject& b,
                                                  double threshold) {
  if (!(threshold > 0.0)) throw RangeError("detect_contacts: threshold must be positive");
  if (!b.geometry.has_mesh())
    throw UsageError("detect_contacts: proximal object has no triangle mesh");

  const MatX3 a_local = posed_points(a.geometry, a.joint_values);  // joint state baked in
  const MatX3 a_world = a.pose.apply(a_local);
  MatX3 a_dirs = a.geometry.has_normals() ? a.world_normals()
                                          : estimate_outward_directions(a_world);

  const std::vector<Eigen::Vector3d> b_local = posed_vertices(b.geometry, b.joint_values);
  std::vector<Eigen::Vector3d> b_verts(b_local.size());
  for (std::size_t i = 0; i < b_local.size(); ++i) b_verts[i] = b.pose.apply(b_local[i]);
  const MatX3 b_world = b.world_points();

  const Eigen::Matrix3d a_rot_inv = a.pose.rotation.transpose();
  const Eigen::Matrix3d b_rot_inv = b.pose.rotation.transpose();

  std::vector<Eigen::RowVector3d> ca, da, cb, db;
  std::vector<double> dist;
  std::vector<int> src_a, src_b;

  for (int i = 0; i < a_world.rows(); ++i) {
    const Eigen::Vector3d origin = a_world.row(i).transpose();
    const Eigen::Vector3d dir = a_dirs.row(i).transpose();
    double best = threshold;
    bool hit = false;
    for (const auto& tri : b.geometry.triangles) {
      double t;
      if (ray_triangle(origin, dir, b_verts[tri[0]], b_verts[tri[1]], b_verts[tri[2]], t) &&
          t <= best) {
        best = t;
        hit = true;
      }
    }
    if (!hit) continue;

    const Eigen::Vector3d hit_world = origin + best * dir;
    // nearest b surface sample to the hit, for later correspondence lookup
    int nearest = 0;
    double nd = (b_world.row(0).transpose() - hit_world).squaredNorm();
    for (int j = 1; j < b_world.rows(); ++j) {
      const double d = (b_world.row(j).transpose() - hit_world).squaredNorm();
      if (d < nd) {
        nd = d;
        nearest = j;
      }
    }

    ca.push_back(a_local.row(i));
    da.push_back((a_rot_inv * dir).transpose());
    src_a.push_back(i);
    cb.push_back((b_rot_inv * (hit_world - b.pose.translation)).transpose());
    db.push_back((b_rot_inv * (-dir)).transpose());
    src_b.push_back(nearest);
    dist.push_back(best);
  }

  if (dist.empty()) throw NoContacts("detect_contacts: no proximal contacts within threshold");

  const int m = static_cast<int>(dist.size());
  ContactSet on_a, on_b;
  on_a.points.resize(m, 3);
  on_a.directions.resize(m, 3);
  on_a.distances.resize(m);
  on_a.source_index = src_a;
  on_b.points.resize(m, 3);
  on_b.directions.resize(m, 3);
  on_b.distances.resize(m);
  on_b.source_index = src_b;
  for (int i = 0; i < m; ++i) {
    on_a.points.row(i) = ca[i];
    on_a.directions.row(i) = da[i];
    on_a.distances[i] = dist[i];
    on_b.points.row(i) = cb[i];
    on_b.directions.row(i) = db[i];
    on_b.distances[i] = dist[i];
  }
  return {on_a, on_b};
}

ContactSet transfer_contacts(const ContactSet& contacts, const CorrespondenceSet& corr,
                             const PointCloud& target_cloud) {
  contacts.validate();
  target_cloud.validate();
  const int n_corr = static_cast<int>(corr.target_index.size());
  ContactSet out = contacts;
  for (int i = 0; i < contacts.size(); ++i) {
    const int s = contacts.source_index[i];
    if (s < 0 || s >= n_corr)
      throw IndexError("transfer_contacts: contact source index outside correspondences");
    const int j = corr.target_index[s];
    if (j < 0 || j >= target_cloud.size())
      throw IndexError("transfer_contacts: correspondence target index outside cloud");
    out.points.row(i) = target_cloud.coords.row(j);
    out.source_index[i] = j;
  }
  return out;
}

RigidTransform solve_goal_pose(const ContactSet& contacts_a, const ContactSet& contacts_b,
                               const Eigen::Matrix3d& r_a, const Eigen::Matrix3d& r_b,
                               const RigidTransform& pose_b_prime) {
  contacts_a.validate();
  contacts_b.validate();
  if (contacts_a.size() != contacts_b.size())
    throw SizeMismatch("solve_goal_pose: contact counts differ");

  RigidTransform out;
  out.rotation = pose_b_prime.rotation * r_b.transpose() * r_a;

  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  for (int i = 0; i < contacts_b.size(); ++i) {
    const Eigen::Vector3d cb = contacts_b.points.row(i).transpose();
    const Eigen::Vector3d db = contacts_b.directions.row(i).transpose();
    const Eigen::Vector3d ca = contacts_a.points.row(i).transpose();
    acc += pose_b_prime.rotation * cb + pose_b_prime.translation +
           pose_b_prime.rotation * (db * contacts_b.distances[i]) - out.rotation * ca;
  }
  out.translation = acc / contacts_b.size();
  return out;
}

GoalPose resolve_collision(const RigidTransform& candidate, const ObjectGeometry& moving,
                           const SceneState& scene, const ResolveParams& params) {
  if (!(params.radius_step > 0.0) || params.samples_per_shell < 1 ||
      !(params.max_radius > 0.0))
    throw RangeError("resolve_collision: params must be positive");

  const std::vector<double> joints = default_joints(moving);
  const auto free_at = [&](const RigidTransform& pose) {
    return !placement_collides(moving, pose, joints, scene, params.collision_margin,
                               params.ignore_ids);
  };

  if (free_at(candidate)) return {candidate, true, 0.0};

  const int n = params.samples_per_shell;
  const double golden = 3.14159265358979323846 * (1.0 + std::sqrt(5.0));
  for (double r = params.radius_step; r <= params.max_radius + 1e-12;
       r += params.radius_step) {
    for (int k = 0; k < n; ++k) {
      const double z = 1.0 - 2.0 * (k + 0.5) / n;
      const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double th = golden * k;
      const Eigen::Vector3d dir(rho * std::cos(th), rho * std::sin(th), z);
      RigidTransform shifted = candidate;
      shifted.translation += r * dir;
      if (free_at(shifted)) return {shifted, true, r};
    }
  }
  throw NoFreePose("resolve_collision: no free pose within max_radius");
}

void save_demo(const std::filesystem::path& path, const DemoRecord& demo,
               const std::filesystem::path& geom_dir) {
  std::filesystem::create_directories(geom_dir);
  const std::string stem = path.stem().string();
  std::vector<std::string> refs;
  for (const SceneObject& o : demo.scene.objects) {
    const std::filesystem::path gf = geom_dir / (stem + "." + o.id + ".json");
    write_json_file(gf, geometry_to_json(o.geometry));
    refs.push_back(std::filesystem::relative(gf, path.parent_path()).generic_string());
  }
  const Json j{{"scene", scene_to_json(demo.scene, refs)},
               {"moving_id", demo.moving_id},
               {"proximal_id", demo.proximal_id},
               {"goal_pose", pose_to_json(demo.goal_pose)}};
  write_json_file(path, j);
}

DemoRecord load_demo(const std::filesystem::path& path) {
  const Json j = read_json_file(path);
  try {
    DemoRecord demo;
    demo.scene = scene_from_json(j.at("scene"), path.parent_path());
    demo.moving_id = j.at("moving_id").get<std::string>();
    demo.proximal_id = j.at("proximal_id").get<std::string>();
    demo.goal_pose = pose_from_json(j.at("goal_pose"));
    demo.scene.by_id(demo.moving_id);
    demo.scene.by_id(demo.proximal_id);
    return demo;
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed demo record: ") + e.what());
  }
}

namespace {

// Same-category counterparts in the augmented scene: first match for the
// moving object, first *other* match for the proximal one.
std::pair<int, int> find_counterparts(const SceneState& augmented, const std::string& cat_a,
                                      const std::string& cat_b) {
  const int ia = augmented.index_of_category(cat_a);
  if (ia < 0) throw DataError("cpca_generate: augmented scene lacks category '" + cat_a + "'");
  int ib = augmented.index_of_category(cat_b);
  if (ib == ia) ib = augmented.index_of_category(cat_b, 1);
  if (ib < 0) throw DataError("cpca_generate: augmented scene lacks category '" + cat_b + "'");
  return {ia, ib};
}

// Surface cloud with the analytic normals attached as features, so the CPD
// responsibilities can tell apart spatially close but oppositely facing
// regions (top/bottom of a thin plate, inner/outer mug wall).
PointCloud cloud_with_normals(const ObjectGeometry& g) {
  PointCloud c = g.surface;
  if (!c.has_features() && g.normals.rows() == c.coords.rows()) c.features = g.normals;
  return c;
}

CorrespondenceSet register_pair(const ObjectGeometry& demo_geom, const ObjectGeometry& aug_geom,
                                const CpdParams& params) {
  const NonRigidResult reg =
      cpd_nonrigid(cloud_with_normals(demo_geom), cloud_with_normals(aug_geom), params);
  if (!reg.converged)
    throw NonConvergence("cpca_generate: point drift did not converge");
  return kernels::nn_correspondences(reg.deformed.coords, aug_geom.surface.coords);
}

}  // namespace

GoalPose cpca_generate(const DemoRecord& demo, const SceneState& augmented,
                       const CpcaParams& params) {
  const SceneObject& a = demo.scene.by_id(demo.moving_id);
  const SceneObject& b = demo.scene.by_id(demo.proximal_id);
  const auto [ia, ib] = find_counterparts(augmented, a.category, b.category);
  const SceneObject& a_prime = augmented.objects[static_cast<std::size_t>(ia)];
  const SceneObject& b_prime = augmented.objects[static_cast<std::size_t>(ib)];

  // contacts are detected with the demo's moving object placed at its goal
  SceneObject a_at_goal = a;
  a_at_goal.pose = demo.goal_pose;
  const auto [on_a, on_b] = detect_contacts(a_at_goal, b, params.contact_threshold);

  const CorrespondenceSet corr_a = register_pair(a.geometry, a_prime.geometry, params.cpd);
  const CorrespondenceSet corr_b = register_pair(b.geometry, b_prime.geometry, params.cpd);

  const ContactSet on_a_prime = transfer_contacts(on_a, corr_a, a_prime.geometry.surface);
  const ContactSet on_b_prime = transfer_contacts(on_b, corr_b, b_prime.geometry.surface);

  const RigidTransform candidate = solve_goal_pose(
      on_a_prime, on_b_prime, demo.goal_pose.rotation, b.pose.rotation, b_prime.pose);

  ResolveParams resolve = params.resolve;
  resolve.ignore_ids.push_back(a_prime.id);
  return resolve_collision(candidate, a_prime.geometry, augmented, resolve);
}

}  // namespace goalgen
