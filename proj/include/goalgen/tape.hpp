#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "goalgen/error.hpp"

namespace goalgen {

// Reverse-mode automatic differentiation over dense matrices. Every builder
// records one node; backward() walks the record once in reverse and
// accumulates exact gradients into every leaf created with param(). Scalars
// travel as 1x1 matrices. The op set is exactly what the noise predictor's
// forward pass and losses need — nothing speculative.
class Tape {
 public:
  using Mat = Eigen::MatrixXd;

  // Leaves. constant() never receives a gradient; param() does.
  int constant(Mat value);
  int param(Mat value);

  int add(int a, int b);            // same shape
  int sub(int a, int b);
  int scale(int a, double s);
  int matmul(int a, int b);         // A * B
  int matmul_bt(int a, int b);      // A * B^T
  int add_rowvec(int a, int bias);  // bias 1 x k, broadcast over rows of a
  int gelu(int a);                  // exact erf form, elementwise
  int layer_norm(int a, int gain, int bias);  // row-wise; gain/bias 1 x k
  int softmax_rows(int a);
  int concat_rows(int a, int b);    // stack [A; B]
  int repeat_row(int a, int rows);  // 1 x k -> rows x k
  int sqdist_matrix(int a);         // n x n pairwise squared row distances
  int mean_sq_error(int a, Mat target);  // 1x1 mean over entries of (a - target)^2

  const Mat& value(int node) const { return nodes_[static_cast<std::size_t>(node)].value; }
  const Mat& grad(int node) const { return nodes_[static_cast<std::size_t>(node)].grad; }

  // Seeds d(out)/d(out) = 1 — out must be 1x1 — and propagates to the leaves.
  void backward(int out);

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Mat value;
    Mat grad;  // allocated (zero) only when the node participates in gradients
    bool needs_grad = false;
    // Pulls this node's gradient into its inputs. Receives (tape, own value,
    // own grad) so ops like softmax can reuse their forward output.
    std::function<void(Tape&, const Mat&, const Mat&)> pull;
  };

  int push(Mat value, bool needs_grad, std::function<void(Tape&, const Mat&, const Mat&)> pull);
  bool tracked(int i) const { return nodes_[static_cast<std::size_t>(i)].needs_grad; }
  void accum(int i, const Mat& g);

  std::vector<Node> nodes_;
};

}  // namespace goalgen
