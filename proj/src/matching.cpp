#include "mad/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mad {

namespace {

// Shortest-augmenting-path assignment on an n x n cost matrix (potentials
// method, O(n^3)). Returns row -> col.
std::vector<int> solve_square(const std::vector<double>& a, int n) {
  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, n);      // p[col] = row matched to col (1-based cols shifted)
  std::vector<int> way(n + 1, 0);
  for (int i = 0; i < n; ++i) {
    p[n] = i;
    int j0 = n;  // virtual column
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = -1;
      double delta = kInf;
      for (int j = 0; j < n; ++j) {
        if (used[j]) continue;
        double cur = a[static_cast<size_t>(i0) * n + j] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != n);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != n);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 0; j < n; ++j)
    if (p[j] != n) row_to_col[p[j]] = j;
  return row_to_col;
}

}  // namespace

Assignment hungarian(const CostMatrix& cost) {
  Assignment out;
  if (cost.rows == 0 || cost.cols == 0) return out;
  for (double x : cost.data)
    if (!std::isfinite(x)) throw std::invalid_argument("non-finite cost entry");

  const int n = std::max(cost.rows, cost.cols);
  std::vector<double> sq(static_cast<size_t>(n) * n, 0.0);
  for (int r = 0; r < cost.rows; ++r)
    for (int c = 0; c < cost.cols; ++c) sq[static_cast<size_t>(r) * n + c] = cost.at(r, c);

  std::vector<int> row_to_col = solve_square(sq, n);
  for (int r = 0; r < cost.rows; ++r) {
    int c = row_to_col[r];
    if (c < 0 || c >= cost.cols) continue;  // pad pair
    out.pairs.emplace_back(r, c);
    out.total_cost += cost.at(r, c);
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  return out;
}

double detection_cost(const SlotPrediction& slot, const GtObject& gt, const MatchWeights& w) {
  double p = 0.0;
  if (gt.class_id >= 0 && gt.class_id < static_cast<int>(slot.class_probs.size()))
    p = slot.class_probs[gt.class_id];
  double l1 = 0.0;
  for (int k = 0; k < 4; ++k) l1 += std::abs(slot.box[k] - gt.box[k]);
  return w.lambda_cls * (1.0 - p) + w.lambda_box * (l1 / 4.0);
}

DetectionTargets detection_targets(const std::vector<SlotPrediction>& slots,
                                   const std::vector<GtObject>& gts, const Vocab& vocab,
                                   const MatchWeights& w) {
  const int n = static_cast<int>(slots.size());
  DetectionTargets out;
  out.target.assign(static_cast<size_t>(n) * 5, vocab.noise_class());
  out.supervise.assign(static_cast<size_t>(n) * 5, false);
  out.matched_slot.assign(gts.size(), -1);

  // Default: every slot is a noise slot, class position supervised to NOISE.
  for (int s = 0; s < n; ++s) {
    for (int k = 0; k < 4; ++k) out.target[s * 5 + k] = vocab.coord(0);
    out.target[s * 5 + 4] = vocab.noise_class();
    out.supervise[s * 5 + 4] = true;
  }
  if (gts.empty() || n == 0) return out;

  CostMatrix cost;
  cost.rows = n;
  cost.cols = static_cast<int>(gts.size());
  cost.data.resize(static_cast<size_t>(cost.rows) * cost.cols);
  for (int s = 0; s < n; ++s)
    for (int g = 0; g < cost.cols; ++g) cost.at(s, g) = detection_cost(slots[s], gts[g], w);

  Assignment asg = hungarian(cost);
  const int bins = vocab.num_bins();
  for (auto [s, g] : asg.pairs) {
    const GtObject& gt = gts[g];
    out.matched_slot[g] = s;
    for (int k = 0; k < 4; ++k) {
      out.target[s * 5 + k] = vocab.coord(quantize_coord(gt.box[k], bins));
      out.supervise[s * 5 + k] = true;
    }
    out.target[s * 5 + 4] = vocab.cls(gt.class_id);
    out.supervise[s * 5 + 4] = true;
  }
  return out;
}

int caption_target(const std::vector<std::vector<double>>& probs,
                   const std::vector<std::vector<int>>& references) {
  if (references.empty()) throw std::invalid_argument("no caption references");
  int best = 0;
  double best_nll = std::numeric_limits<double>::infinity();
  for (size_t r = 0; r < references.size(); ++r) {
    double nll = 0.0;
    const auto& ref = references[r];
    for (size_t i = 0; i < ref.size() && i < probs.size(); ++i) {
      double p = 0.0;
      if (ref[i] >= 0 && ref[i] < static_cast<int>(probs[i].size())) p = probs[i][ref[i]];
      nll += -std::log(std::max(p, 1e-12));
    }
    if (nll < best_nll - 1e-12) {
      best_nll = nll;
      best = static_cast<int>(r);
    }
  }
  return best;
}

}  // namespace mad
