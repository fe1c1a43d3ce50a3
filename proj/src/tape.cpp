#include "goalgen/tape.hpp"

#include <cmath>
#include <utility>

namespace goalgen {

namespace {
constexpr double kLnEps = 1e-5;  // layer_norm variance floor
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void require(bool ok, const char* msg) {
  if (!ok) throw ShapeMismatch(msg);
}
}  // namespace

int Tape::push(Mat value, bool needs_grad,
               std::function<void(Tape&, const Mat&, const Mat&)> pull) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  n.pull = std::move(pull);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::accum(int i, const Mat& g) {
  Node& n = nodes_[static_cast<std::size_t>(i)];
  if (n.needs_grad) n.grad += g;
}

int Tape::constant(Mat value) { return push(std::move(value), false, {}); }

int Tape::param(Mat value) { return push(std::move(value), true, {}); }

int Tape::add(int a, int b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
          "tape add: shape mismatch");
  return push(value(a) + value(b), tracked(a) || tracked(b),
              [a, b](Tape& t, const Mat&, const Mat& g) {
                t.accum(a, g);
                t.accum(b, g);
              });
}

int Tape::sub(int a, int b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
          "tape sub: shape mismatch");
  return push(value(a) - value(b), tracked(a) || tracked(b),
              [a, b](Tape& t, const Mat&, const Mat& g) {
                t.accum(a, g);
                t.accum(b, -g);
              });
}

int Tape::scale(int a, double s) {
  return push(value(a) * s, tracked(a),
              [a, s](Tape& t, const Mat&, const Mat& g) { t.accum(a, s * g); });
}

int Tape::matmul(int a, int b) {
  require(value(a).cols() == value(b).rows(), "tape matmul: inner dims differ");
  return push(value(a) * value(b), tracked(a) || tracked(b),
              [a, b](Tape& t, const Mat&, const Mat& g) {
                t.accum(a, g * t.value(b).transpose());
                t.accum(b, t.value(a).transpose() * g);
              });
}

int Tape::matmul_bt(int a, int b) {
  require(value(a).cols() == value(b).cols(), "tape matmul_bt: inner dims differ");
  return push(value(a) * value(b).transpose(), tracked(a) || tracked(b),
              [a, b](Tape& t, const Mat&, const Mat& g) {
                t.accum(a, g * t.value(b));
                t.accum(b, g.transpose() * t.value(a));
              });
}

int Tape::add_rowvec(int a, int bias) {
  require(value(bias).rows() == 1 && value(bias).cols() == value(a).cols(),
          "tape add_rowvec: bias must be 1 x cols(a)");
  Mat out = value(a);
  out.rowwise() += value(bias).row(0);
  return push(std::move(out), tracked(a) || tracked(bias),
              [a, bias](Tape& t, const Mat&, const Mat& g) {
                t.accum(a, g);
                t.accum(bias, g.colwise().sum());
              });
}

int Tape::gelu(int a) {
  const Mat& x = value(a);
  Mat out = x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); });
  return push(std::move(out), tracked(a), [a](Tape& t, const Mat&, const Mat& g) {
    const Mat& x = t.value(a);
    const Mat dydx = x.unaryExpr([](double v) {
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      return cdf + v * pdf;
    });
    t.accum(a, g.cwiseProduct(dydx));
  });
}

int Tape::layer_norm(int a, int gain, int bias) {
  const Mat& x = value(a);
  const int k = static_cast<int>(x.cols());
  require(value(gain).rows() == 1 && value(gain).cols() == k, "tape layer_norm: gain shape");
  require(value(bias).rows() == 1 && value(bias).cols() == k, "tape layer_norm: bias shape");
  Mat y(x.rows(), k);                 // normalized rows, pre gain/bias
  Eigen::VectorXd inv_s(x.rows());    // 1/sqrt(var + eps) per row
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().mean();
    inv_s[r] = 1.0 / std::sqrt(var + kLnEps);
    y.row(r) = (x.row(r).array() - mu) * inv_s[r];
  }
  Mat out = y.array().rowwise() * value(gain).row(0).array();
  out.rowwise() += value(bias).row(0);
  return push(std::move(out), tracked(a) || tracked(gain) || tracked(bias),
              [a, gain, bias, y = std::move(y), inv_s = std::move(inv_s)](
                  Tape& t, const Mat&, const Mat& g) {
                t.accum(bias, g.colwise().sum());
                t.accum(gain, g.cwiseProduct(y).colwise().sum());
                Mat gy = g.array().rowwise() * t.value(gain).row(0).array();
                Mat dx(gy.rows(), gy.cols());
                const double k = static_cast<double>(gy.cols());
                for (Eigen::Index r = 0; r < gy.rows(); ++r) {
                  const double m1 = gy.row(r).sum() / k;
                  const double m2 = gy.row(r).cwiseProduct(y.row(r)).sum() / k;
                  dx.row(r) = (gy.row(r).array() - m1 - y.row(r).array() * m2) * inv_s[r];
                }
                t.accum(a, dx);
              });
}

int Tape::softmax_rows(int a) {
  const Mat& x = value(a);
  Mat out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Eigen::ArrayXd e = (x.row(r).array() - x.row(r).maxCoeff()).exp();
    out.row(r) = e / e.sum();
  }
  return push(std::move(out), tracked(a), [a](Tape& t, const Mat& p, const Mat& g) {
    Mat dx(p.rows(), p.cols());
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      const double dot = g.row(r).dot(p.row(r));
      dx.row(r) = (p.row(r).array() * (g.row(r).array() - dot)).matrix();
    }
    t.accum(a, dx);
  });
}

int Tape::concat_rows(int a, int b) {
  require(value(a).cols() == value(b).cols(), "tape concat_rows: column mismatch");
  Mat out(value(a).rows() + value(b).rows(), value(a).cols());
  out.topRows(value(a).rows()) = value(a);
  out.bottomRows(value(b).rows()) = value(b);
  return push(std::move(out), tracked(a) || tracked(b),
              [a, b](Tape& t, const Mat&, const Mat& g) {
                t.accum(a, g.topRows(t.value(a).rows()));
                t.accum(b, g.bottomRows(t.value(b).rows()));
              });
}

int Tape::repeat_row(int a, int rows) {
  require(value(a).rows() == 1, "tape repeat_row: input must be a row vector");
  Mat out = value(a).replicate(rows, 1);
  return push(std::move(out), tracked(a), [a](Tape& t, const Mat&, const Mat& g) {
    t.accum(a, g.colwise().sum());
  });
}

int Tape::sqdist_matrix(int a) {
  const Mat& x = value(a);
  const Eigen::Index n = x.rows(), k = x.cols();
  // Pairwise differences rather than the Gram expansion: matches a direct
  // squared-distance computation bit-for-bit, so identical rows give exact 0.
  Mat out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      double acc = 0.0;
      for (Eigen::Index d = 0; d < k; ++d) {
        const double diff = x(i, d) - x(j, d);
        acc += diff * diff;
      }
      out(i, j) = acc;
    }
  return push(std::move(out), tracked(a), [a](Tape& t, const Mat&, const Mat& g) {
    const Mat& x = t.value(a);
    const Mat s = g + g.transpose();
    t.accum(a, 2.0 * (s.rowwise().sum().asDiagonal() * x - s * x));
  });
}

int Tape::mean_sq_error(int a, Mat target) {
  require(value(a).rows() == target.rows() && value(a).cols() == target.cols(),
          "tape mean_sq_error: target shape mismatch");
  const double n = static_cast<double>(target.size());
  Mat out(1, 1);
  out(0, 0) = (value(a) - target).squaredNorm() / n;
  return push(std::move(out), tracked(a),
              [a, target = std::move(target), n](Tape& t, const Mat&, const Mat& g) {
                t.accum(a, (2.0 * g(0, 0) / n) * (t.value(a) - target));
              });
}

void Tape::backward(int out) {
  Node& top = nodes_[static_cast<std::size_t>(out)];
  if (top.value.rows() != 1 || top.value.cols() != 1)
    throw SizeMismatch("tape backward: output must be a 1x1 scalar");
  if (!top.needs_grad) return;  // no parameters upstream; nothing to do
  top.grad(0, 0) = 1.0;
  for (int i = out; i >= 0; --i) {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.needs_grad && n.pull) n.pull(*this, n.value, n.grad);
  }
}

}  // namespace goalgen
