#include "mad/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace mad::nn {

int Tape::emit(Mat v, bool needs_grad, std::function<void(Tape&)> back) {
  Node n;
  n.val = std::move(v);
  n.needs_grad = needs_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::input(Mat v) { return emit(std::move(v), false, nullptr); }

int Tape::param(Param& p) {
  int id = emit(p.val, true, nullptr);
  nodes_[id].extern_grad = &p.grad;
  return id;
}

Mat& Tape::grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.val.rows(), n.val.cols());
  return n.grad;
}

void Tape::backward(int root) {
  if (nodes_[root].val.size() != 1) throw std::invalid_argument("backward root must be scalar");
  grad(root)(0, 0) = 1.0;
  for (int i = root; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.back) n.back(*this);
    if (n.extern_grad) *n.extern_grad += n.grad;
  }
}

int Tape::matmul(int a, int b) {
  Mat v = nodes_[a].val * nodes_[b].val;
  bool ng = needs(a) || needs(b);
  int id = emit(std::move(v), ng, nullptr);
  if (ng)
    nodes_[id].back = [=](Tape& t) {
      const Mat& g = t.nodes_[id].grad;
      if (t.needs(a)) t.grad(a).noalias() += g * t.nodes_[b].val.transpose();
      if (t.needs(b)) t.grad(b).noalias() += t.nodes_[a].val.transpose() * g;
    };
  return id;
}

int Tape::add(int a, int b) {
  Mat v = nodes_[a].val + nodes_[b].val;
  bool ng = needs(a) || needs(b);
  int id = emit(std::move(v), ng, nullptr);
  if (ng)
    nodes_[id].back = [=](Tape& t) {
      const Mat& g = t.nodes_[id].grad;
      if (t.needs(a)) t.grad(a) += g;
      if (t.needs(b)) t.grad(b) += g;
    };
  return id;
}

int Tape::add_rowvec(int a, int b) {
  Mat v = nodes_[a].val;
  v.rowwise() += nodes_[b].val.row(0);
  bool ng = needs(a) || needs(b);
  int id = emit(std::move(v), ng, nullptr);
  if (ng)
    nodes_[id].back = [=](Tape& t) {
      const Mat& g = t.nodes_[id].grad;
      if (t.needs(a)) t.grad(a) += g;
      if (t.needs(b)) t.grad(b).row(0) += g.colwise().sum();
    };
  return id;
}

int Tape::scale(int a, double s) {
  Mat v = nodes_[a].val * s;
  bool ng = needs(a);
  int id = emit(std::move(v), ng, nullptr);
  if (ng)
    nodes_[id].back = [=](Tape& t) {
      if (t.needs(a)) t.grad(a) += t.nodes_[id].grad * s;
    };
  return id;
}

int Tape::relu(int a) {
  Mat v = nodes_[a].val.cwiseMax(0.0);
  bool ng = needs(a);
  int id = emit(std::move(v), ng, nullptr);
  if (ng)
    nodes_[id].back = [=](Tape& t) {
      if (!t.needs(a)) return;
      const Mat& g = t.nodes_[id].grad;
      const Mat& x = t.nodes_[a].val;
      t.grad(a) += (x.array() > 0.0).cast<double>().matrix().cwiseProduct(g);
    };
  return id;
}

int Tape::layernorm(int x, int gamma, int beta, double eps) {
  const Mat& in = nodes_[x].val;
  const int rows = static_cast<int>(in.rows());
  const int cols = static_cast<int>(in.cols());
  Mat xhat(rows, cols);
  Eigen::VectorXd inv_std(rows);
  for (int r = 0; r < rows; ++r) {
    const double mu = in.row(r).mean();
    const double var = (in.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (in.row(r).array() - mu) * inv_std(r);
  }
  Mat v = xhat;
  v.array().rowwise() *= nodes_[gamma].val.row(0).array();
  v.rowwise() += nodes_[beta].val.row(0);
  bool ng = needs(x) || needs(gamma) || needs(beta);
  int id = emit(std::move(v), ng, nullptr);
  if (ng)
    nodes_[id].back = [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t) {
      const Mat& g = t.nodes_[id].grad;
      if (t.needs(gamma)) t.grad(gamma).row(0) += g.cwiseProduct(xhat).colwise().sum();
      if (t.needs(beta)) t.grad(beta).row(0) += g.colwise().sum();
      if (t.needs(x)) {
        const auto gammarow = t.nodes_[gamma].val.row(0);
        Mat dxhat = g;
        dxhat.array().rowwise() *= gammarow.array();
        Mat& gx = t.grad(x);
        const int n = static_cast<int>(dxhat.cols());
        for (int r = 0; r < dxhat.rows(); ++r) {
          const double m1 = dxhat.row(r).mean();
          const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
          gx.row(r) +=
              inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2).matrix();
          (void)n;
        }
      }
    };
  return id;
}

int Tape::mha(int q, int k, int v, int heads, bool causal) {
  const Mat& Q = nodes_[q].val;
  const Mat& K = nodes_[k].val;
  const Mat& V = nodes_[v].val;
  const int d_model = static_cast<int>(Q.cols());
  if (d_model % heads != 0) throw std::invalid_argument("embed dim not divisible by heads");
  const int dh = d_model / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const int sq = static_cast<int>(Q.rows());
  const int sk = static_cast<int>(K.rows());
  if (causal && sq != sk) throw std::invalid_argument("causal mha requires square attention");

  std::vector<Mat> attn(heads);
  Mat out(sq, d_model);
  for (int h = 0; h < heads; ++h) {
    Mat scores = (Q.middleCols(h * dh, dh) * K.middleCols(h * dh, dh).transpose()) * scale;
    if (causal)
      for (int i = 0; i < sq; ++i)
        for (int j = i + 1; j < sk; ++j) scores(i, j) = -1e30;
    for (int i = 0; i < sq; ++i) {
      const double m = scores.row(i).maxCoeff();
      Eigen::ArrayXd e = (scores.row(i).array() - m).exp();
      scores.row(i) = (e / e.sum()).matrix();
    }
    attn[h] = std::move(scores);
    out.middleCols(h * dh, dh).noalias() = attn[h] * V.middleCols(h * dh, dh);
  }

  bool ng = needs(q) || needs(k) || needs(v);
  int id = emit(std::move(out), ng, nullptr);
  if (ng)
    nodes_[id].back = [=, attn = std::move(attn)](Tape& t) {
      const Mat& g = t.nodes_[id].grad;
      const Mat& Qv = t.nodes_[q].val;
      const Mat& Kv = t.nodes_[k].val;
      const Mat& Vv = t.nodes_[v].val;
      for (int h = 0; h < heads; ++h) {
        const auto A = attn[h];
        const auto gOut = g.middleCols(h * dh, dh);
        if (t.needs(v)) t.grad(v).middleCols(h * dh, dh).noalias() += A.transpose() * gOut;
        if (t.needs(q) || t.needs(k)) {
          Mat dA = gOut * Vv.middleCols(h * dh, dh).transpose();
          // softmax backward per row
          Mat dS(A.rows(), A.cols());
          for (int i = 0; i < A.rows(); ++i) {
            const double dot = dA.row(i).cwiseProduct(A.row(i)).sum();
            dS.row(i) = A.row(i).cwiseProduct((dA.row(i).array() - dot).matrix());
          }
          dS *= scale;
          if (t.needs(q))
            t.grad(q).middleCols(h * dh, dh).noalias() += dS * Kv.middleCols(h * dh, dh);
          if (t.needs(k))
            t.grad(k).middleCols(h * dh, dh).noalias() += dS.transpose() * Qv.middleCols(h * dh, dh);
        }
      }
    };
  return id;
}

int Tape::rows_gather(int table, std::vector<int> ids) {
  const Mat& tab = nodes_[table].val;
  Mat v(static_cast<int>(ids.size()), tab.cols());
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tab.rows()) throw std::out_of_range("gather id out of range");
    v.row(static_cast<int>(i)) = tab.row(ids[i]);
  }
  bool ng = needs(table);
  int id = emit(std::move(v), ng, nullptr);
  if (ng)
    nodes_[id].back = [=, ids = std::move(ids)](Tape& t) {
      const Mat& g = t.nodes_[id].grad;
      Mat& gt = t.grad(table);
      for (size_t i = 0; i < ids.size(); ++i) gt.row(ids[i]) += g.row(static_cast<int>(i));
    };
  return id;
}

int Tape::space_to_depth(int x, int height, int width, int s) {
  const Mat& in = nodes_[x].val;
  if (in.rows() != static_cast<long>(height) * width)
    throw std::invalid_argument("space_to_depth: rows != H*W");
  if (height % s != 0 || width % s != 0)
    throw std::invalid_argument("space_to_depth: grid not divisible by stride");
  const int c = static_cast<int>(in.cols());
  const int gh = height / s, gw = width / s;
  Mat v(gh * gw, s * s * c);
  for (int gy = 0; gy < gh; ++gy)
    for (int gx = 0; gx < gw; ++gx)
      for (int dy = 0; dy < s; ++dy)
        for (int dx = 0; dx < s; ++dx)
          v.row(gy * gw + gx).segment((dy * s + dx) * c, c) =
              in.row((gy * s + dy) * width + gx * s + dx);
  bool ng = needs(x);
  int id = emit(std::move(v), ng, nullptr);
  if (ng)
    nodes_[id].back = [=](Tape& t) {
      const Mat& g = t.nodes_[id].grad;
      Mat& gx_ = t.grad(x);
      for (int gy = 0; gy < gh; ++gy)
        for (int gxi = 0; gxi < gw; ++gxi)
          for (int dy = 0; dy < s; ++dy)
            for (int dx = 0; dx < s; ++dx)
              gx_.row((gy * s + dy) * width + gxi * s + dx) +=
                  g.row(gy * gw + gxi).segment((dy * s + dx) * c, c);
    };
  return id;
}

int Tape::masked_softmax_ce(int logits, std::vector<int> targets, std::vector<double> weights,
                            std::vector<int> filter) {
  const Mat& L = nodes_[logits].val;
  if (static_cast<long>(targets.size()) != L.rows() ||
      static_cast<long>(weights.size()) != L.rows())
    throw std::invalid_argument("masked_softmax_ce: row count mismatch");

  const int f = static_cast<int>(filter.size());
  Mat probs(L.rows(), f);  // filter-restricted softmax rows (only weighted rows used)
  double loss = 0.0;
  for (int r = 0; r < L.rows(); ++r) {
    if (weights[r] == 0.0) continue;
    double mx = -1e300;
    for (int j = 0; j < f; ++j) mx = std::max(mx, L(r, filter[j]));
    double z = 0.0;
    int t_idx = -1;
    for (int j = 0; j < f; ++j) {
      const double e = std::exp(L(r, filter[j]) - mx);
      probs(r, j) = e;
      z += e;
      if (filter[j] == targets[r]) t_idx = j;
    }
    if (t_idx < 0) throw std::invalid_argument("target token outside task filter");
    probs.row(r) /= z;
    loss += weights[r] * -std::log(std::max(probs(r, t_idx), 1e-300));
  }

  Mat v(1, 1);
  v(0, 0) = loss;
  bool ng = needs(logits);
  int id = emit(std::move(v), ng, nullptr);
  if (ng)
    nodes_[id].back = [=, targets = std::move(targets), weights = std::move(weights),
                       filter = std::move(filter), probs = std::move(probs)](Tape& t) {
      const double g0 = t.nodes_[id].grad(0, 0);
      Mat& gl = t.grad(logits);
      for (int r = 0; r < gl.rows(); ++r) {
        if (weights[r] == 0.0) continue;
        for (size_t j = 0; j < filter.size(); ++j) {
          double delta = probs(r, static_cast<int>(j));
          if (filter[j] == targets[r]) delta -= 1.0;
          gl(r, filter[j]) += g0 * weights[r] * delta;
        }
      }
    };
  return id;
}

int Tape::add_scalars(const std::vector<int>& ids) {
  if (ids.empty()) return input(Mat::Zero(1, 1));
  int acc = ids[0];
  for (size_t i = 1; i < ids.size(); ++i) acc = add(acc, ids[i]);
  return acc;
}

void AdamW::step(std::vector<Param*>& params, double lr_scale) {
  ++t_;
  double sq = 0.0;
  for (Param* p : params) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  const double clip = cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;

  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (Param* p : params) {
    const double lr = (p->is_stem ? cfg_.stem_lr : cfg_.lr) * lr_scale;
    Mat g = p->grad * clip;
    p->m = cfg_.beta1 * p->m + (1.0 - cfg_.beta1) * g;
    p->v = cfg_.beta2 * p->v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    Mat mhat = p->m / bc1;
    Mat vhat = p->v / bc2;
    p->val.array() -=
        lr * (mhat.array() / (vhat.array().sqrt() + cfg_.eps) + cfg_.weight_decay * p->val.array());
  }
}

void AdamW::zero_grad(std::vector<Param*>& params) {
  for (Param* p : params) p->grad.setZero();
}

}  // namespace mad::nn
