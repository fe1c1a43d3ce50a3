#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>

#include "goalgen/kernels.hpp"
#include "goalgen/rng.hpp"
#include "oracles.hpp"

using namespace goalgen;

namespace {

bool bytes_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

}  // namespace

TEST_CASE("nn_correspondences basics") {
  Rng rng(1);
  const MatX3 cloud = oracles::random_cloud(rng, 32);
  const CorrespondenceSet self = kernels::nn_correspondences(cloud, cloud);
  for (int i = 0; i < 32; ++i) {
    CHECK(self.target_index[i] == i);
    CHECK(self.distance[i] == 0.0);
  }

  MatX3 src(1, 3), tgt(2, 3);
  src << 0, 0, 0;
  tgt << 1, 0, 0, 0.5, 0, 0;
  const CorrespondenceSet c = kernels::nn_correspondences(src, tgt);
  CHECK(c.target_index[0] == 1);
  CHECK(c.distance[0] == doctest::Approx(0.5));

  // tie -> smallest target index
  MatX3 tie(2, 3);
  tie << 1, 0, 0, -1, 0, 0;
  CHECK(kernels::nn_correspondences(src, tie).target_index[0] == 0);
}

TEST_CASE("nn_correspondences equals exhaustive scan") {
  Rng rng(2);
  const MatX3 src = oracles::random_cloud(rng, 200);
  const MatX3 tgt = oracles::random_cloud(rng, 300);
  const auto ref = oracles::brute_nn(src, tgt);
  for (auto impl : {&kernels::nn_correspondences, &serial::nn_correspondences}) {
    const CorrespondenceSet got = (*impl)(src, tgt);
    got.validate(200, 300);
    for (int i = 0; i < 200; ++i) {
      CHECK(got.target_index[i] == ref[i].first);
      CHECK(got.distance[i] == doctest::Approx(ref[i].second).epsilon(1e-12));
    }
  }
}

TEST_CASE("self_sqdist") {
  MatX3 two(2, 3);
  two << 0, 0, 0, 1, 0, 0;
  Eigen::MatrixXd d = kernels::self_sqdist(two);
  CHECK(d(0, 0) == 0.0);
  CHECK(d(1, 1) == 0.0);
  CHECK(d(0, 1) == 1.0);
  CHECK(d(1, 0) == 1.0);

  MatX3 tri(3, 3);
  tri << 0, 0, 0, 3, 0, 0, 0, 4, 0;
  d = kernels::self_sqdist(tri);
  CHECK(d(0, 1) == 9.0);
  CHECK(d(0, 2) == 16.0);
  CHECK(d(1, 2) == 25.0);

  // rigid invariance at matrix level
  Rng rng(3);
  const MatX3 cloud = oracles::random_cloud(rng, 40);
  RigidTransform t;
  t.rotation = oracles::random_rotation(rng);
  t.translation << 0.2, 0.4, -0.1;
  const Eigen::MatrixXd before = kernels::self_sqdist(cloud);
  const Eigen::MatrixXd after = kernels::self_sqdist(t.apply(cloud));
  CHECK((before - after).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("pce directional mean-min distance") {
  Rng rng(4);
  const MatX3 a = oracles::random_cloud(rng, 64);
  CHECK(kernels::pce(a, a) == 0.0);

  MatX3 p(1, 3), q(1, 3);
  p << 0, 0, 0;
  q << 0, 0, 1;
  CHECK(kernels::pce(p, q) == doctest::Approx(1.0));

  const MatX3 b = oracles::random_cloud(rng, 64);
  const double ref = oracles::brute_pce(a, b);
  CHECK(kernels::pce(a, b) == ref);
  CHECK(serial::pce(a, b) == ref);
  CHECK(kernels::pce(a, b) >= 0.0);

  // not symmetric in general
  MatX3 big(3, 3);
  big << 0, 0, 0, 10, 0, 0, 20, 0, 0;
  MatX3 small(1, 3);
  small << 0, 0, 0;
  CHECK(kernels::pce(small, big) != kernels::pce(big, small));
}

TEST_CASE("gaussian_gram") {
  Rng rng(5);
  const MatX3 pts = oracles::random_cloud(rng, 30);
  const double beta = 0.4;
  const Eigen::MatrixXd g = kernels::gaussian_gram(pts, beta);
  for (int i = 0; i < 30; ++i) {
    CHECK(g(i, i) == 1.0);
    for (int j = 0; j < 30; ++j) {
      const double want = std::exp(-(pts.row(i) - pts.row(j)).squaredNorm() / (2 * beta * beta));
      CHECK(g(i, j) == doctest::Approx(want).epsilon(1e-14));
    }
  }
}

TEST_CASE("min_gap equals brute force") {
  Rng rng(6);
  const MatX3 a = oracles::random_cloud(rng, 70);
  const MatX3 b = oracles::random_cloud(rng, 55, 3.0);
  const double ref = oracles::brute_min_gap(a, b);
  CHECK(kernels::min_gap(a, b) == ref);
  CHECK(serial::min_gap(a, b) == ref);
}

TEST_CASE("cpd_estep matches dense naive computation") {
  Rng rng(7);
  const MatX3 y = oracles::random_cloud(rng, 20);
  const MatX3 x = oracles::random_cloud(rng, 25);
  Eigen::MatrixXd fd(20, 25);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 25; ++j) fd(i, j) = rng.uniform() * 0.01;

  const double sigma2 = 0.05, omega = 0.1;
  const double dim = 3 + 0.6 * 4;  // fractional: feature channel down-weighted

  // dense reference
  Eigen::MatrixXd p(20, 25);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 25; ++j)
      p(i, j) = std::exp(-((y.row(i) - x.row(j)).squaredNorm() + fd(i, j)) / (2 * sigma2));
  const double two_pi = 6.283185307179586476925286766559;
  const double c = std::pow(two_pi * sigma2, 0.5 * dim) * omega / (1 - omega) * 20.0 / 25.0;
  double nll = 0.0;
  for (int j = 0; j < 25; ++j) {
    const double denom = p.col(j).sum() + c;
    nll += -std::log(denom) + 0.5 * dim * std::log(two_pi * sigma2) - std::log((1 - omega) / 20.0);
    p.col(j) /= denom;
  }

  for (auto impl : {&kernels::cpd_estep, &serial::cpd_estep}) {
    const CpdEStep es = (*impl)(y, x, &fd, sigma2, omega, dim);
    CHECK((es.p1 - p.rowwise().sum()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((es.pt1 - p.colwise().sum().transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((es.px - p * x).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((es.pfd - (p.array() * fd.array()).rowwise().sum().matrix()).cwiseAbs().maxCoeff() <
          1e-12);
    CHECK(es.np == doctest::Approx(p.sum()).epsilon(1e-12));
    CHECK(es.nll == doctest::Approx(nll).epsilon(1e-12));
  }
}

TEST_CASE("parallel kernels are byte-identical to serial for any thread count") {
  Rng rng(8);
  const MatX3 a = oracles::random_cloud(rng, 150);
  const MatX3 b = oracles::random_cloud(rng, 120);
  Eigen::MatrixXd fd(150, 120);
  for (int i = 0; i < fd.size(); ++i) fd.data()[i] = rng.uniform();

  const auto serial_nn = serial::nn_correspondences(a, b);
  const auto serial_self = serial::self_sqdist(a);
  const auto serial_cross = serial::cross_sqdist(a, b);
  const double serial_pce = serial::pce(a, b);
  const auto serial_gram = serial::gaussian_gram(a, 0.3);
  const double serial_gap = serial::min_gap(a, b);
  const CpdEStep se = serial::cpd_estep(a, b, &fd, 0.02, 0.1, 3);

  for (int threads : {1, 2, 8}) {
    set_threads(threads);
    CHECK(thread_count() == threads);

    const auto nn = kernels::nn_correspondences(a, b);
    CHECK(nn.target_index == serial_nn.target_index);
    CHECK(bytes_equal(nn.distance, serial_nn.distance));
    CHECK(bytes_equal(kernels::self_sqdist(a), serial_self));
    CHECK(bytes_equal(kernels::cross_sqdist(a, b), serial_cross));
    CHECK(kernels::pce(a, b) == serial_pce);
    CHECK(bytes_equal(kernels::gaussian_gram(a, 0.3), serial_gram));
    CHECK(kernels::min_gap(a, b) == serial_gap);

    const CpdEStep ke = kernels::cpd_estep(a, b, &fd, 0.02, 0.1, 3);
    CHECK(bytes_equal(ke.p1, se.p1));
    CHECK(bytes_equal(ke.pt1, se.pt1));
    CHECK(bytes_equal(ke.px, se.px));
    CHECK(bytes_equal(ke.pfd, se.pfd));
    CHECK(ke.np == se.np);
    CHECK(ke.nll == se.nll);
  }
  set_threads(1);
}
