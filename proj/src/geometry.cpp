#include "goalgen/geometry.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace goalgen {

void PointCloud::validate() const {
  if (coords.rows() < 1) throw SizeError("point cloud must contain at least one point");
  if (!coords.allFinite()) throw DegenerateInput("point cloud has non-finite coordinates");
  if (features.size() != 0) {
    if (features.rows() != coords.rows())
      throw ShapeMismatch("feature rows do not match point count");
    if (!features.allFinite()) throw DegenerateInput("point cloud has non-finite features");
  }
}

RigidTransform RigidTransform::from_quat_wxyz(const Eigen::Vector4d& q, const Eigen::Vector3d& t) {
  const double n = q.norm();
  if (!(n > 0.0) || !q.allFinite()) throw DegenerateInput("invalid quaternion");
  Eigen::Quaterniond quat(q[0] / n, q[1] / n, q[2] / n, q[3] / n);
  RigidTransform out;
  out.rotation = quat.toRotationMatrix();
  out.translation = t;
  return out;
}

Eigen::Vector4d RigidTransform::quat_wxyz() const {
  Eigen::Quaterniond q(rotation);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  return {q.w(), q.x(), q.y(), q.z()};
}

MatX3 RigidTransform::apply(const MatX3& pts) const {
  MatX3 out = pts * rotation.transpose();
  out.rowwise() += translation.transpose();
  return out;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform out;
  out.rotation = rotation.transpose();
  out.translation = -(rotation.transpose() * translation);
  return out;
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
  RigidTransform out;
  out.rotation = rotation * rhs.rotation;
  out.translation = rotation * rhs.translation + translation;
  return out;
}

void RigidTransform::validate(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite())
    throw DegenerateInput("transform has non-finite entries");
  const Eigen::Matrix3d err = rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
  if (err.cwiseAbs().maxCoeff() > tol) throw DegenerateInput("rotation is not orthonormal");
  if (rotation.determinant() < 0.0) throw DegenerateInput("rotation has negative determinant");
}

void CorrespondenceSet::validate(int n_src, int n_tgt) const {
  if (static_cast<int>(target_index.size()) != n_src ||
      static_cast<int>(distance.size()) != n_src)
    throw SizeMismatch("correspondence set size does not match source cloud");
  for (int j : target_index)
    if (j < 0 || j >= n_tgt) throw IndexError("correspondence target index out of range");
}

Aabb aabb_of(const MatX3& pts) {
  if (pts.rows() < 1) throw SizeError("aabb of empty point set");
  Aabb box;
  box.min = pts.colwise().minCoeff().transpose();
  box.max = pts.colwise().maxCoeff().transpose();
  return box;
}

RigidTransform kabsch_fit(const MatX3& src, const MatX3& tgt,
                          const std::optional<Eigen::VectorXd>& weights) {
  const int n = static_cast<int>(src.rows());
  if (tgt.rows() != n) throw SizeMismatch("kabsch_fit: source/target length mismatch");
  if (n < 3) throw SizeError("kabsch_fit: need at least 3 points");

  Eigen::VectorXd w;
  if (weights) {
    if (weights->size() != n) throw SizeMismatch("kabsch_fit: weight length mismatch");
    if ((weights->array() < 0.0).any()) throw DegenerateInput("kabsch_fit: negative weight");
    w = *weights;
  } else {
    w = Eigen::VectorXd::Ones(n);
  }
  const double wsum = w.sum();
  if (!(wsum > 0.0)) throw DegenerateInput("kabsch_fit: total weight is zero");

  const Eigen::RowVector3d cs = (w.transpose() * src) / wsum;
  const Eigen::RowVector3d ct = (w.transpose() * tgt) / wsum;
  const MatX3 s = src.rowwise() - cs;
  const MatX3 t = tgt.rowwise() - ct;

  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (int i = 0; i < n; ++i) h += w[i] * s.row(i).transpose() * t.row(i);

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sig = svd.singularValues();
  // Rank <= 1 support (coincident or collinear points) cannot pin down a rotation.
  if (sig[1] <= 1e-12 * std::max(sig[0], 1e-300))
    throw DegenerateInput("kabsch_fit: degenerate (collinear or coincident) support");

  const Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;

  RigidTransform out;
  out.rotation = v * d * u.transpose();
  out.translation = ct.transpose() - out.rotation * cs.transpose();
  return out;
}

double rotation_angle(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  const double c = ((a.transpose() * b).trace() - 1.0) * 0.5;
  return std::acos(std::min(1.0, std::max(-1.0, c)));
}

Eigen::Matrix3d yaw_rotation(double yaw) {
  Eigen::Matrix3d r;
  const double c = std::cos(yaw), s = std::sin(yaw);
  r << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return r;
}

}  // namespace goalgen
