#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "goalgen/error.hpp"

namespace goalgen {

using MatX3 = Eigen::MatrixX3d;

// Point cloud with optional per-point feature rows (the pluggable feature
// interface: any upstream featurizer may fill `features`; registration can
// weight them into its correspondence metric).
struct PointCloud {
  MatX3 coords;              // N x 3
  Eigen::MatrixXd features;  // N x d, or 0 x 0 when absent

  int size() const { return static_cast<int>(coords.rows()); }
  int feature_dim() const { return features.size() == 0 ? 0 : static_cast<int>(features.cols()); }
  bool has_features() const { return feature_dim() > 0; }
  void validate() const;
};

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform from_quat_wxyz(const Eigen::Vector4d& q, const Eigen::Vector3d& t);

  Eigen::Vector4d quat_wxyz() const;  // normalized, w >= 0
  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }
  MatX3 apply(const MatX3& pts) const;
  RigidTransform inverse() const;
  RigidTransform operator*(const RigidTransform& rhs) const;  // this after rhs
  void validate(double tol = 1e-6) const;
};

struct Aabb {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Zero();

  Eigen::Vector3d center() const { return 0.5 * (min + max); }
  Eigen::Vector3d extents() const { return max - min; }
  Aabb expanded(double margin) const { return {min.array() - margin, max.array() + margin}; }
  bool contains(const Eigen::Vector3d& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  bool contains(const Aabb& inner) const {
    return (inner.min.array() >= min.array()).all() && (inner.max.array() <= max.array()).all();
  }
  bool intersects(const Aabb& other) const {
    return (min.array() <= other.max.array()).all() && (max.array() >= other.min.array()).all();
  }
};

// Per-source-point nearest-neighbor assignment into a target cloud.
struct CorrespondenceSet {
  std::vector<int> target_index;  // size = N_src
  Eigen::VectorXd distance;       // Euclidean, size = N_src
  void validate(int n_src, int n_tgt) const;
};

Aabb aabb_of(const MatX3& pts);

// Least-squares rigid fit: finds (R, t) minimizing sum_i w_i |R*src_i + t - tgt_i|^2.
// SVD-based with reflection correction. Throws SizeMismatch on length mismatch,
// SizeError for fewer than 3 points, DegenerateInput for collinear/coincident
// support or non-positive total weight.
RigidTransform kabsch_fit(const MatX3& src, const MatX3& tgt,
                          const std::optional<Eigen::VectorXd>& weights = std::nullopt);

// Geodesic distance between rotations, radians in [0, pi].
double rotation_angle(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b);

inline double rotation_angle(const RigidTransform& a, const RigidTransform& b) {
  return rotation_angle(a.rotation, b.rotation);
}

Eigen::Matrix3d yaw_rotation(double yaw);

}  // namespace goalgen
