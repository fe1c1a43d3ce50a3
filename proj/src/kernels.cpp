#include "goalgen/kernels.hpp"

#include <omp.h>

#include <cmath>

namespace goalgen {

namespace {
int g_threads = 1;

inline double sqdist3(const MatX3& a, int i, const MatX3& b, int j) {
  const double dx = a(i, 0) - b(j, 0);
  const double dy = a(i, 1) - b(j, 1);
  const double dz = a(i, 2) - b(j, 2);
  return dx * dx + dy * dy + dz * dz;
}

inline void check_nonempty(const MatX3& a, const MatX3& b) {
  if (a.rows() < 1 || b.rows() < 1) throw SizeError("kernel input cloud is empty");
}
}  // namespace

void set_threads(int n) {
  g_threads = n < 1 ? 1 : n;
  omp_set_num_threads(g_threads);
}

int thread_count() { return g_threads; }

// ---------------------------------------------------------------------------
// serial reference
// ---------------------------------------------------------------------------
namespace serial {

CorrespondenceSet nn_correspondences(const MatX3& src, const MatX3& tgt) {
  check_nonempty(src, tgt);
  const int m = static_cast<int>(src.rows()), n = static_cast<int>(tgt.rows());
  CorrespondenceSet out;
  out.target_index.resize(m);
  out.distance.resize(m);
  for (int i = 0; i < m; ++i) {
    int best = 0;
    double bd = sqdist3(src, i, tgt, 0);
    for (int j = 1; j < n; ++j) {
      const double d = sqdist3(src, i, tgt, j);
      if (d < bd) {
        bd = d;
        best = j;
      }
    }
    out.target_index[i] = best;
    out.distance[i] = std::sqrt(bd);
  }
  return out;
}

Eigen::MatrixXd self_sqdist(const MatX3& pts) {
  const int n = static_cast<int>(pts.rows());
  if (n < 1) throw SizeError("self_sqdist: empty cloud");
  Eigen::MatrixXd d(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) d(i, j) = sqdist3(pts, i, pts, j);
  return d;
}

Eigen::MatrixXd cross_sqdist(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols()) throw ShapeMismatch("cross_sqdist: dimension mismatch");
  const int m = static_cast<int>(a.rows()), n = static_cast<int>(b.rows());
  Eigen::MatrixXd d(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) d(i, j) = (a.row(i) - b.row(j)).squaredNorm();
  return d;
}

double pce(const MatX3& generated, const MatX3& target) {
  check_nonempty(generated, target);
  const int m = static_cast<int>(generated.rows()), n = static_cast<int>(target.rows());
  double acc = 0.0;
  for (int i = 0; i < m; ++i) {
    double bd = sqdist3(generated, i, target, 0);
    for (int j = 1; j < n; ++j) bd = std::min(bd, sqdist3(generated, i, target, j));
    acc += std::sqrt(bd);
  }
  return acc / m;
}

Eigen::MatrixXd gaussian_gram(const MatX3& pts, double beta) {
  if (!(beta > 0.0)) throw RangeError("gaussian_gram: beta must be positive");
  const int n = static_cast<int>(pts.rows());
  if (n < 1) throw SizeError("gaussian_gram: empty cloud");
  const double inv = 1.0 / (2.0 * beta * beta);
  Eigen::MatrixXd g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = std::exp(-sqdist3(pts, i, pts, j) * inv);
  return g;
}

double min_gap(const MatX3& a, const MatX3& b) {
  check_nonempty(a, b);
  double best = sqdist3(a, 0, b, 0);
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.rows(); ++j) best = std::min(best, sqdist3(a, i, b, j));
  return std::sqrt(best);
}

CpdEStep cpd_estep(const MatX3& deformed, const MatX3& target,
                   const Eigen::MatrixXd* feat_sqdist, double sigma2, double outlier_w,
                   double joint_dim) {
  check_nonempty(deformed, target);
  if (!(sigma2 > 0.0)) throw RangeError("cpd_estep: sigma2 must be positive");
  if (outlier_w < 0.0 || outlier_w >= 1.0) throw RangeError("cpd_estep: outlier weight in [0,1)");
  const int m = static_cast<int>(deformed.rows()), n = static_cast<int>(target.rows());
  if (feat_sqdist && (feat_sqdist->rows() != m || feat_sqdist->cols() != n))
    throw ShapeMismatch("cpd_estep: feature distance matrix shape");

  const double inv2s = 1.0 / (2.0 * sigma2);
  const double two_pi_s = 6.283185307179586476925286766559 * sigma2;
  const double c = std::max(1e-300, std::pow(two_pi_s, joint_dim * 0.5) * outlier_w /
                                        (1.0 - outlier_w) * double(m) / double(n));

  CpdEStep out;
  out.p1 = Eigen::VectorXd::Zero(m);
  out.pt1 = Eigen::VectorXd::Zero(n);
  out.px = MatX3::Zero(m, 3);
  out.pfd = Eigen::VectorXd::Zero(m);

  Eigen::VectorXd denom(n);
  double nll = 0.0;
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (int i = 0; i < m; ++i) {
      double d2 = sqdist3(deformed, i, target, j);
      if (feat_sqdist) d2 += (*feat_sqdist)(i, j);
      s += std::exp(-d2 * inv2s);
    }
    denom[j] = s + c;
    out.pt1[j] = s / denom[j];
    nll += -std::log(denom[j]) + joint_dim * 0.5 * std::log(two_pi_s) -
           std::log((1.0 - outlier_w) / m);
  }
  out.nll = nll;

  for (int i = 0; i < m; ++i) {
    double p1 = 0.0, pfd = 0.0;
    Eigen::RowVector3d px = Eigen::RowVector3d::Zero();
    for (int j = 0; j < n; ++j) {
      double d2 = sqdist3(deformed, i, target, j);
      const double fd = feat_sqdist ? (*feat_sqdist)(i, j) : 0.0;
      const double p = std::exp(-(d2 + fd) * inv2s) / denom[j];
      p1 += p;
      pfd += p * fd;
      px += p * target.row(j);
    }
    out.p1[i] = p1;
    out.pfd[i] = pfd;
    out.px.row(i) = px;
  }
  double np = 0.0;  // explicit order: must match the parallel kernel bit-for-bit
  for (int i = 0; i < m; ++i) np += out.p1[i];
  out.np = np;
  return out;
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP kernels. Each output element is written by exactly one iteration and
// every inner loop runs in a fixed order, so results match `serial` exactly.
// ---------------------------------------------------------------------------
namespace kernels {

CorrespondenceSet nn_correspondences(const MatX3& src, const MatX3& tgt) {
  check_nonempty(src, tgt);
  const int m = static_cast<int>(src.rows()), n = static_cast<int>(tgt.rows());
  CorrespondenceSet out;
  out.target_index.resize(m);
  out.distance.resize(m);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    int best = 0;
    double bd = sqdist3(src, i, tgt, 0);
    for (int j = 1; j < n; ++j) {
      const double d = sqdist3(src, i, tgt, j);
      if (d < bd) {
        bd = d;
        best = j;
      }
    }
    out.target_index[i] = best;
    out.distance[i] = std::sqrt(bd);
  }
  return out;
}

Eigen::MatrixXd self_sqdist(const MatX3& pts) {
  const int n = static_cast<int>(pts.rows());
  if (n < 1) throw SizeError("self_sqdist: empty cloud");
  Eigen::MatrixXd d(n, n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) d(i, j) = sqdist3(pts, i, pts, j);
  return d;
}

Eigen::MatrixXd cross_sqdist(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols()) throw ShapeMismatch("cross_sqdist: dimension mismatch");
  const int m = static_cast<int>(a.rows()), n = static_cast<int>(b.rows());
  Eigen::MatrixXd d(m, n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) d(i, j) = (a.row(i) - b.row(j)).squaredNorm();
  return d;
}

double pce(const MatX3& generated, const MatX3& target) {
  check_nonempty(generated, target);
  const int m = static_cast<int>(generated.rows()), n = static_cast<int>(target.rows());
  Eigen::VectorXd per(m);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    double bd = sqdist3(generated, i, target, 0);
    for (int j = 1; j < n; ++j) bd = std::min(bd, sqdist3(generated, i, target, j));
    per[i] = std::sqrt(bd);
  }
  double acc = 0.0;  // fixed-order reduction
  for (int i = 0; i < m; ++i) acc += per[i];
  return acc / m;
}

Eigen::MatrixXd gaussian_gram(const MatX3& pts, double beta) {
  if (!(beta > 0.0)) throw RangeError("gaussian_gram: beta must be positive");
  const int n = static_cast<int>(pts.rows());
  if (n < 1) throw SizeError("gaussian_gram: empty cloud");
  const double inv = 1.0 / (2.0 * beta * beta);
  Eigen::MatrixXd g(n, n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = std::exp(-sqdist3(pts, i, pts, j) * inv);
  return g;
}

double min_gap(const MatX3& a, const MatX3& b) {
  check_nonempty(a, b);
  const int m = static_cast<int>(a.rows());
  Eigen::VectorXd per(m);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    double bd = sqdist3(a, i, b, 0);
    for (int j = 1; j < b.rows(); ++j) bd = std::min(bd, sqdist3(a, i, b, j));
    per[i] = bd;
  }
  return std::sqrt(per.minCoeff());
}

CpdEStep cpd_estep(const MatX3& deformed, const MatX3& target,
                   const Eigen::MatrixXd* feat_sqdist, double sigma2, double outlier_w,
                   double joint_dim) {
  check_nonempty(deformed, target);
  if (!(sigma2 > 0.0)) throw RangeError("cpd_estep: sigma2 must be positive");
  if (outlier_w < 0.0 || outlier_w >= 1.0) throw RangeError("cpd_estep: outlier weight in [0,1)");
  const int m = static_cast<int>(deformed.rows()), n = static_cast<int>(target.rows());
  if (feat_sqdist && (feat_sqdist->rows() != m || feat_sqdist->cols() != n))
    throw ShapeMismatch("cpd_estep: feature distance matrix shape");

  const double inv2s = 1.0 / (2.0 * sigma2);
  const double two_pi_s = 6.283185307179586476925286766559 * sigma2;
  const double c = std::max(1e-300, std::pow(two_pi_s, joint_dim * 0.5) * outlier_w /
                                        (1.0 - outlier_w) * double(m) / double(n));

  CpdEStep out;
  out.p1.resize(m);
  out.pt1.resize(n);
  out.px.resize(m, 3);
  out.pfd.resize(m);

  Eigen::VectorXd denom(n), nll_per(n);
#pragma omp parallel for schedule(static)
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (int i = 0; i < m; ++i) {
      double d2 = sqdist3(deformed, i, target, j);
      if (feat_sqdist) d2 += (*feat_sqdist)(i, j);
      s += std::exp(-d2 * inv2s);
    }
    denom[j] = s + c;
    out.pt1[j] = s / denom[j];
    nll_per[j] = -std::log(denom[j]) + joint_dim * 0.5 * std::log(two_pi_s) -
                 std::log((1.0 - outlier_w) / m);
  }
  double nll = 0.0;
  for (int j = 0; j < n; ++j) nll += nll_per[j];
  out.nll = nll;

#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) {
    double p1 = 0.0, pfd = 0.0;
    Eigen::RowVector3d px = Eigen::RowVector3d::Zero();
    for (int j = 0; j < n; ++j) {
      double d2 = sqdist3(deformed, i, target, j);
      const double fd = feat_sqdist ? (*feat_sqdist)(i, j) : 0.0;
      const double p = std::exp(-(d2 + fd) * inv2s) / denom[j];
      p1 += p;
      pfd += p * fd;
      px += p * target.row(j);
    }
    out.p1[i] = p1;
    out.pfd[i] = pfd;
    out.px.row(i) = px;
  }
  double np = 0.0;
  for (int i = 0; i < m; ++i) np += out.p1[i];
  out.np = np;
  return out;
}

}  // namespace kernels
}  // namespace goalgen
