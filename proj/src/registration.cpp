#include "goalgen/registration.hpp"

#include <Eigen/LU>
#include <cmath>

#include "goalgen/kernels.hpp"

namespace goalgen {

namespace {

double bbox_diagonal(const MatX3& pts) {
  const Aabb box = aabb_of(pts);
  return (box.max - box.min).norm();
}

}  // namespace

NonRigidResult cpd_nonrigid(const PointCloud& source, const PointCloud& target,
                            const CpdParams& params) {
  source.validate();
  target.validate();
  if (params.lambda <= 0.0) throw RangeError("cpd_nonrigid: lambda must be positive");
  if (params.max_iter < 1) throw RangeError("cpd_nonrigid: max_iter must be >= 1");

  const int m = source.size();
  const int n = target.size();

  const bool use_features = params.feature_weight > 0.0 && source.has_features() &&
                            target.has_features();
  if (use_features && source.feature_dim() != target.feature_dim())
    throw ShapeMismatch("cpd_nonrigid: feature widths differ");

  const double beta =
      params.beta > 0.0 ? params.beta : std::max(0.3 * bbox_diagonal(source.coords), 1e-6);

  const Eigen::MatrixXd g = kernels::gaussian_gram(source.coords, beta);

  Eigen::MatrixXd fd2;  // feature_weight-scaled feature squared distances, M x N
  const Eigen::MatrixXd* fd2_ptr = nullptr;
  double joint_dim = 3.0;
  if (use_features) {
    fd2 = params.feature_weight * kernels::cross_sqdist(source.features, target.features);
    fd2_ptr = &fd2;
    joint_dim += params.feature_weight * source.feature_dim();
  }

  // sigma^2 init: mean spatial squared distance over all pairs. Deliberately
  // excludes the feature channel — feature mismatch is persistent, and folding
  // it in would start the anneal so wide that the feature gate does nothing.
  double sig_acc = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      sig_acc += (source.coords.row(i) - target.coords.row(j)).squaredNorm();
  double sigma2 = std::max(sig_acc / (3.0 * m * n), 1e-12);

  MatX3 t_cur = source.coords;
  MatX3 w = MatX3::Zero(m, 3);

  NonRigidResult res;
  res.converged = false;
  double prev_e = std::numeric_limits<double>::infinity();
  double last_change = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < params.max_iter; ++iter) {
    const CpdEStep es =
        kernels::cpd_estep(t_cur, target.coords, fd2_ptr, sigma2, params.outlier_w, joint_dim);

    const double e = es.nll + 0.5 * params.lambda * (w.transpose() * g * w).trace();
    res.objective_trace.push_back(e);
    res.iterations_run = iter + 1;
    last_change = std::abs(prev_e - e);
    if (last_change < params.tol * (1.0 + std::abs(e))) {
      res.converged = true;
      break;
    }
    prev_e = e;

    // M-step: (diag(P1) G + lambda sigma^2 I) W = PX - diag(P1) Y
    Eigen::MatrixXd a = es.p1.asDiagonal() * g;
    a.diagonal().array() += params.lambda * sigma2;
    const MatX3 rhs = es.px - es.p1.asDiagonal() * source.coords;
    w = a.partialPivLu().solve(rhs);
    t_cur = source.coords + g * w;

    // sigma^2 from old responsibilities at the new positions (exact via sufficient stats).
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += es.pt1[j] * target.coords.row(j).squaredNorm();
    s -= 2.0 * (es.px.array() * t_cur.array()).sum();
    for (int i = 0; i < m; ++i) s += es.p1[i] * t_cur.row(i).squaredNorm();
    s += es.pfd.sum();
    sigma2 = std::max(s / (es.np * joint_dim), 1e-12);
  }

  if (!res.converged) {
    const double e_last = res.objective_trace.back();
    res.converged = last_change <= 10.0 * params.tol * (1.0 + std::abs(e_last));
  }

  res.displacement = g * w;
  res.deformed.coords = source.coords + res.displacement;
  res.deformed.features = source.features;
  res.final_objective = res.objective_trace.back();
  return res;
}

RobustFitResult robust_rigid_register(const PointCloud& source, const PointCloud& generated,
                                      const RobustParams& params) {
  source.validate();
  generated.validate();
  const int n = source.size();
  if (generated.size() != n) throw SizeMismatch("robust_rigid_register: point count mismatch");
  if (!(params.huber_delta > 0.0)) throw RangeError("robust_rigid_register: huber_delta > 0");

  const MatX3& src = source.coords;
  const MatX3& gen = generated.coords;

  auto residuals_at = [&](const RigidTransform& t) {
    Eigen::VectorXd r(n);
    const MatX3 mapped = t.apply(src);
    for (int i = 0; i < n; ++i) r[i] = (mapped.row(i) - gen.row(i)).norm();
    return r;
  };

  RigidTransform t = kabsch_fit(src, gen);
  Eigen::VectorXd r = residuals_at(t);

  // Anneal the Huber width from the data scale down to the target delta so the
  // iteration settles into the dominant cluster before sharpening.
  const double start_delta = std::max(params.huber_delta, r.maxCoeff());

  for (int iter = 0; iter < params.max_iter; ++iter) {
    const double delta = std::max(params.huber_delta, start_delta * std::pow(0.5, iter));
    Eigen::VectorXd wts(n);
    for (int i = 0; i < n; ++i) wts[i] = r[i] <= delta ? 1.0 : delta / r[i];
    const RigidTransform t_new = kabsch_fit(src, gen, wts);
    const double change =
        rotation_angle(t_new, t) + (t_new.translation - t.translation).norm();
    t = t_new;
    r = residuals_at(t);
    if (delta == params.huber_delta && change < params.tol) break;
  }

  // Trimmed refinement: hard-select inliers and refit, twice.
  for (int round = 0; round < 2; ++round) {
    std::vector<int> keep;
    for (int i = 0; i < n; ++i)
      if (r[i] < 2.0 * params.huber_delta) keep.push_back(i);
    if (static_cast<int>(keep.size()) < 3)
      throw DegenerateInput("robust_rigid_register: inliers collapsed below 3 points");
    MatX3 s_in(keep.size(), 3), g_in(keep.size(), 3);
    for (std::size_t k = 0; k < keep.size(); ++k) {
      s_in.row(k) = src.row(keep[k]);
      g_in.row(k) = gen.row(keep[k]);
    }
    t = kabsch_fit(s_in, g_in);
    r = residuals_at(t);
  }

  RobustFitResult out;
  out.transform = t;
  out.residuals = r;
  out.inlier_mask.resize(n);
  int inliers = 0;
  for (int i = 0; i < n; ++i) {
    out.inlier_mask[i] = r[i] < 2.0 * params.huber_delta;
    inliers += out.inlier_mask[i];
  }
  if (inliers < 3)
    throw DegenerateInput("robust_rigid_register: inliers collapsed below 3 points");
  return out;
}

}  // namespace goalgen
