#pragma once

#include <Eigen/Dense>

#include "goalgen/geometry.hpp"

namespace goalgen {

// Thread count for the OpenMP kernels below. Results are byte-identical for
// any value: every parallel loop writes each output element from exactly one
// iteration, and all reductions are re-ordered into a fixed serial pass.
void set_threads(int n);
int thread_count();

struct CpdEStep {
  Eigen::VectorXd p1;   // M, sum_n p_mn
  Eigen::VectorXd pt1;  // N, sum_m p_mn
  MatX3 px;             // M x 3, sum_n p_mn * x_n
  Eigen::VectorXd pfd;  // M, sum_n p_mn * feat_sqdist_mn (zero without features)
  double np = 0.0;      // total responsibility mass
  double nll = 0.0;     // negative log-likelihood of the mixture
};

namespace kernels {

// For each source point, index of (and distance to) its nearest target point;
// ties resolve to the smallest index.
CorrespondenceSet nn_correspondences(const MatX3& src, const MatX3& tgt);

Eigen::MatrixXd self_sqdist(const MatX3& pts);                                     // N x N
Eigen::MatrixXd cross_sqdist(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);  // M x N

// Mean over `generated` points of the distance to the nearest `target` point
// (directional: generated -> target).
double pce(const MatX3& generated, const MatX3& target);

// G_ij = exp(-|p_i - p_j|^2 / (2 beta^2))
Eigen::MatrixXd gaussian_gram(const MatX3& pts, double beta);

double min_gap(const MatX3& a, const MatX3& b);

// One coherent-point-drift E-step. `feat_sqdist` (M x N, pre-weighted feature
// squared distances) may be null. `joint_dim` is the dimensionality used by the
// Gaussian normalizer (3, or 3 + feature_weight * feature dim when features
// participate — fractional when the feature channel is down-weighted).
CpdEStep cpd_estep(const MatX3& deformed, const MatX3& target,
                   const Eigen::MatrixXd* feat_sqdist, double sigma2, double outlier_w,
                   double joint_dim);

}  // namespace kernels

// Serial reference implementations: plain loops, no OpenMP. Kept for testing
// (kernels must match them exactly) and for the benchmark baseline.
namespace serial {

CorrespondenceSet nn_correspondences(const MatX3& src, const MatX3& tgt);
Eigen::MatrixXd self_sqdist(const MatX3& pts);
Eigen::MatrixXd cross_sqdist(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
double pce(const MatX3& generated, const MatX3& target);
Eigen::MatrixXd gaussian_gram(const MatX3& pts, double beta);
double min_gap(const MatX3& a, const MatX3& b);
CpdEStep cpd_estep(const MatX3& deformed, const MatX3& target,
                   const Eigen::MatrixXd* feat_sqdist, double sigma2, double outlier_w,
                   double joint_dim);

}  // namespace serial
}  // namespace goalgen
