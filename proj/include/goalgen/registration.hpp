#pragma once

#include <vector>

#include "goalgen/geometry.hpp"

namespace goalgen {

struct CpdParams {
  double beta = 0.0;          // Gaussian kernel width; <= 0 means 0.3 * bbox diagonal
  double lambda = 2.0;        // displacement-smoothness weight
  int max_iter = 100;
  double tol = 1e-6;          // relative objective-change stop
  double feature_weight = 1.0;  // scales feature squared distance inside responsibilities
  double outlier_w = 0.1;       // uniform-outlier mixture weight
};

struct NonRigidResult {
  PointCloud deformed;        // source + displacement, exactly
  MatX3 displacement;         // u(p_i)
  int iterations_run = 0;
  double final_objective = 0.0;
  bool converged = true;      // false = max_iter hit with objective still moving > 10*tol
  std::vector<double> objective_trace;  // one entry per EM iteration
};

// Coherent point drift, non-rigid. EM over a Gaussian mixture: responsibilities
// use squared distance in the joint space (3 spatial dims plus feature_weight-
// scaled feature dims); the M-step displacement stays purely spatial, u = G*W
// with G the Gaussian Gram matrix of the source.
NonRigidResult cpd_nonrigid(const PointCloud& source, const PointCloud& target,
                            const CpdParams& params = {});

struct RobustParams {
  double huber_delta = 0.01;  // meters
  int max_iter = 50;
  double tol = 1e-10;         // parameter-change stop
};

struct RobustFitResult {
  RigidTransform transform;
  std::vector<bool> inlier_mask;  // residual < 2 * huber_delta
  Eigen::VectorXd residuals;      // meters, at the final transform
};

// Iteratively reweighted rigid fit with Huber weights, then a trimmed Kabsch
// refinement on the detected inliers; recovers the dominant rigid mode when the
// paired clouds split into multiple contours.
RobustFitResult robust_rigid_register(const PointCloud& source, const PointCloud& generated,
                                      const RobustParams& params = {});

}  // namespace goalgen
