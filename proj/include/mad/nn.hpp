#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace mad::nn {

using Mat = Eigen::MatrixXd;

struct Param {
  std::string name;
  Mat val;
  Mat grad;
  Mat m, v;  // AdamW moments
  bool is_stem = false;

  explicit Param(std::string n, Mat value, bool stem = false)
      : name(std::move(n)), val(std::move(value)), is_stem(stem) {
    grad = Mat::Zero(val.rows(), val.cols());
    m = Mat::Zero(val.rows(), val.cols());
    v = Mat::Zero(val.rows(), val.cols());
  }
};

// Eager reverse-mode tape over dense matrices. Node values are computed at
// op-creation time; backward() walks the tape in reverse creation order.
class Tape {
 public:
  int input(Mat v);        // leaf without gradient
  int param(Param& p);     // leaf accumulating into p.grad

  const Mat& val(int id) const { return nodes_[id].val; }
  Mat& grad(int id);       // lazily sized to the value's shape, zero-filled
  bool has_grad(int id) const { return nodes_[id].grad.size() > 0; }
  size_t size() const { return nodes_.size(); }

  void backward(int root);  // root must be 1x1

  // --- ops ---
  int matmul(int a, int b);
  int add(int a, int b);
  int add_rowvec(int a, int b);          // b: 1 x C, broadcast over rows of a
  int scale(int a, double s);
  int relu(int a);
  // Row-wise layer norm with affine (gamma, beta: 1 x C).
  int layernorm(int x, int gamma, int beta, double eps = 1e-5);
  // Multi-head scaled dot-product attention over already-projected q, k, v
  // (rows = positions, cols = embed). causal restricts position i to keys <= i.
  int mha(int q, int k, int v, int heads, bool causal);
  // Embedding lookup: one output row per id.
  int rows_gather(int table, std::vector<int> ids);
  // (H*W) x C row-major grid -> (H/s * W/s) x (s*s*C); inverse-permutation backward.
  int space_to_depth(int x, int height, int width, int s);
  // Weighted masked cross-entropy with the softmax restricted to the `filter`
  // token ids. Rows with weight 0 contribute nothing (and get zero gradient).
  int masked_softmax_ce(int logits, std::vector<int> targets, std::vector<double> weights,
                        std::vector<int> filter);
  int add_scalars(const std::vector<int>& ids);  // sum of 1x1 nodes

 private:
  struct Node {
    Mat val;
    Mat grad;
    bool needs_grad = false;
    std::function<void(Tape&)> back;
    Mat* extern_grad = nullptr;
  };
  std::vector<Node> nodes_;

  int emit(Mat v, bool needs_grad, std::function<void(Tape&)> back);
  bool needs(int id) const { return nodes_[id].needs_grad; }
};

struct AdamWConfig {
  double lr = 1e-4;
  double stem_lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  double clip_norm = 0.1;
};

class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}
  // lr_scale applies the schedule (e.g. the x0.1 multi-step drop).
  void step(std::vector<Param*>& params, double lr_scale = 1.0);
  static void zero_grad(std::vector<Param*>& params);
  int steps_taken() const { return t_; }

 private:
  AdamWConfig cfg_;
  int t_ = 0;
};

}  // namespace mad::nn
