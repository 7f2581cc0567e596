#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "mad/harness.hpp"

namespace mad {

double box_iou(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  const double ix0 = std::max(a[0], b[0]), iy0 = std::max(a[1], b[1]);
  const double ix1 = std::min(a[2], b[2]), iy1 = std::min(a[3], b[3]);
  const double iw = std::max(0.0, ix1 - ix0), ih = std::max(0.0, iy1 - iy0);
  const double inter = iw * ih;
  const double area_a = (a[2] - a[0]) * (a[3] - a[1]);
  const double area_b = (b[2] - b[0]) * (b[3] - b[1]);
  const double uni = area_a + area_b - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

namespace {

// All-point interpolated AP from (score, is_tp) pairs sorted by score desc.
double ap_from_matches(std::vector<std::pair<double, bool>> matches, int n_gt) {
  if (n_gt == 0 || matches.empty()) return 0.0;
  std::stable_sort(matches.begin(), matches.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (const auto& [score, is_tp] : matches) {
    (void)score;
    is_tp ? ++tp : ++fp;
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / n_gt);
  }
  // envelope: precision at recall r = max precision at recall >= r
  for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i)
    precision[i] = std::max(precision[i], precision[i + 1]);
  double ap = 0.0;
  double prev_r = 0.0;
  for (size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_r) * precision[i];
    prev_r = recall[i];
  }
  return ap;
}

// Greedy score-ordered matching: each prediction takes the highest-IoU
// unmatched same-class gt with IoU >= threshold.
template <typename Pred, typename Gt, typename IouFn, typename ClassFn, typename GtClassFn,
          typename ImgFn, typename GtImgFn, typename ScoreFn>
double generic_ap(const std::vector<Pred>& preds, const std::vector<Gt>& gts, double thr,
                  IouFn iou, ClassFn pred_cls, GtClassFn gt_cls, ImgFn pred_img, GtImgFn gt_img,
                  ScoreFn score) {
  std::vector<int> order(preds.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return score(preds[a]) > score(preds[b]); });

  std::vector<bool> taken(gts.size(), false);
  std::vector<std::pair<double, bool>> matches;
  for (int pi : order) {
    int best = -1;
    double best_iou = thr;
    for (size_t gi = 0; gi < gts.size(); ++gi) {
      if (taken[gi] || gt_img(gts[gi]) != pred_img(preds[pi]) ||
          gt_cls(gts[gi]) != pred_cls(preds[pi]))
        continue;
      const double v = iou(preds[pi], gts[gi]);
      if (v >= best_iou) {
        best_iou = v;
        best = static_cast<int>(gi);
      }
    }
    if (best >= 0) taken[best] = true;
    matches.emplace_back(score(preds[pi]), best >= 0);
  }
  return ap_from_matches(std::move(matches), static_cast<int>(gts.size()));
}

}  // namespace

double eval_detection_ap(const std::vector<DetectionPred>& preds,
                         const std::vector<std::pair<int, GtObject>>& gts, double iou_thr) {
  return generic_ap(
      preds, gts, iou_thr,
      [](const DetectionPred& p, const std::pair<int, GtObject>& g) {
        return box_iou(p.box.box, g.second.box);
      },
      [](const DetectionPred& p) { return p.box.class_id; },
      [](const std::pair<int, GtObject>& g) { return g.second.class_id; },
      [](const DetectionPred& p) { return p.image_id; },
      [](const std::pair<int, GtObject>& g) { return g.first; },
      [](const DetectionPred& p) { return p.box.score; });
}

double eval_detection_map(const std::vector<DetectionPred>& preds,
                          const std::vector<std::pair<int, GtObject>>& gts) {
  double sum = 0.0;
  int n = 0;
  for (double thr = 0.5; thr < 0.951; thr += 0.05) {
    sum += eval_detection_ap(preds, gts, thr);
    ++n;
  }
  return sum / n;
}

namespace {

// Paste a codec-resolution mask into its box at image resolution.
BitGrid paste_mask(const BitGrid& mask, const std::array<double, 4>& box, int img_w, int img_h) {
  BitGrid out;
  out.width = img_w;
  out.height = img_h;
  out.data.assign(static_cast<size_t>(img_w) * img_h, 0);
  if (mask.width == 0 || mask.height == 0) return out;
  const int x0 = std::clamp(static_cast<int>(std::floor(box[0] * img_w)), 0, img_w);
  const int y0 = std::clamp(static_cast<int>(std::floor(box[1] * img_h)), 0, img_h);
  const int x1 = std::clamp(static_cast<int>(std::ceil(box[2] * img_w)), 0, img_w);
  const int y1 = std::clamp(static_cast<int>(std::ceil(box[3] * img_h)), 0, img_h);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      const int mx = std::min(mask.width - 1,
                              static_cast<int>((x - x0 + 0.5) * mask.width / (x1 - x0)));
      const int my = std::min(mask.height - 1,
                              static_cast<int>((y - y0 + 0.5) * mask.height / (y1 - y0)));
      out.set(x, y, mask.at(mx, my));
    }
  }
  return out;
}

double mask_iou(const BitGrid& a, const BitGrid& b) {
  size_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const bool va = a.data[i], vb = b.data[i];
    inter += va && vb;
    uni += va || vb;
  }
  return uni > 0 ? static_cast<double>(inter) / uni : 0.0;
}

}  // namespace

double eval_segmentation_ap(const std::vector<MaskPred>& preds,
                            const std::vector<InstanceRef>& gts, int image_width,
                            int image_height, double iou_thr) {
  // Pre-paste everything once.
  std::vector<BitGrid> pred_masks, gt_masks;
  for (const auto& p : preds)
    pred_masks.push_back(paste_mask(p.mask, p.box, image_width, image_height));
  for (const auto& g : gts)
    gt_masks.push_back(paste_mask(g.gt->bitmask, g.gt->box, image_width, image_height));

  struct Idx {
    int i;
  };
  std::vector<Idx> pi(preds.size()), gi(gts.size());
  for (size_t i = 0; i < pi.size(); ++i) pi[i].i = static_cast<int>(i);
  for (size_t i = 0; i < gi.size(); ++i) gi[i].i = static_cast<int>(i);
  return generic_ap(
      pi, gi, iou_thr,
      [&](const Idx& p, const Idx& g) { return mask_iou(pred_masks[p.i], gt_masks[g.i]); },
      [&](const Idx& p) { return preds[p.i].class_id; },
      [&](const Idx& g) { return gts[g.i].gt->class_id; },
      [&](const Idx& p) { return preds[p.i].image_id; },
      [&](const Idx& g) { return gts[g.i].image_id; },
      [&](const Idx& p) { return preds[p.i].score; });
}

double eval_pck(const std::vector<KeypointPred>& preds, const std::vector<InstanceRef>& gts,
                double alpha) {
  int visible = 0, correct = 0;
  for (const auto& g : gts) {
    if (!g.gt->keypoints) continue;
    // Best-IoU predicted instance for this gt person.
    const KeypointPred* best = nullptr;
    double best_iou = 0.0;
    for (const auto& p : preds) {
      if (p.image_id != g.image_id) continue;
      const double v = box_iou(p.box, g.gt->box);
      if (v > best_iou) {
        best_iou = v;
        best = &p;
      }
    }
    const double tol =
        alpha * std::max(g.gt->box[2] - g.gt->box[0], g.gt->box[3] - g.gt->box[1]);
    const auto& kps = *g.gt->keypoints;
    for (size_t k = 0; k < kps.size(); ++k) {
      if (!kps[k].visible) continue;
      ++visible;
      if (!best || k >= best->keypoints.size()) continue;
      const double d = std::hypot(best->keypoints[k].x - kps[k].x,
                                  best->keypoints[k].y - kps[k].y);
      if (d <= tol) ++correct;
    }
  }
  return visible > 0 ? static_cast<double>(correct) / visible : 0.0;
}

namespace {

std::map<std::vector<std::string>, int> ngram_counts(const std::vector<std::string>& words,
                                                     int n) {
  std::map<std::vector<std::string>, int> counts;
  for (int i = 0; i + n <= static_cast<int>(words.size()); ++i)
    ++counts[std::vector<std::string>(words.begin() + i, words.begin() + i + n)];
  return counts;
}

}  // namespace

double bleu4(const std::vector<std::vector<std::string>>& hypotheses,
             const std::vector<std::vector<std::vector<std::string>>>& references) {
  long matched[4] = {0, 0, 0, 0};
  long total[4] = {0, 0, 0, 0};
  long hyp_len = 0, ref_len = 0;

  for (size_t s = 0; s < hypotheses.size(); ++s) {
    const auto& hyp = hypotheses[s];
    const auto& refs = references[s];
    hyp_len += static_cast<long>(hyp.size());
    // closest reference length (ties -> shorter)
    long best_ref = 0;
    long best_diff = -1;
    for (const auto& r : refs) {
      const long diff = std::abs(static_cast<long>(r.size()) - static_cast<long>(hyp.size()));
      if (best_diff < 0 || diff < best_diff ||
          (diff == best_diff && static_cast<long>(r.size()) < best_ref)) {
        best_diff = diff;
        best_ref = static_cast<long>(r.size());
      }
    }
    ref_len += best_ref;

    for (int n = 1; n <= 4; ++n) {
      auto hyp_counts = ngram_counts(hyp, n);
      std::map<std::vector<std::string>, int> max_ref;
      for (const auto& r : refs)
        for (const auto& [gram, c] : ngram_counts(r, n))
          max_ref[gram] = std::max(max_ref[gram], c);
      for (const auto& [gram, c] : hyp_counts) {
        total[n - 1] += c;
        auto it = max_ref.find(gram);
        if (it != max_ref.end()) matched[n - 1] += std::min(c, it->second);
      }
    }
  }

  double log_prec = 0.0;
  for (int n = 0; n < 4; ++n) {
    if (total[n] == 0 || matched[n] == 0) return 0.0;  // no smoothing
    log_prec += std::log(static_cast<double>(matched[n]) / total[n]);
  }
  const double bp = hyp_len < ref_len
                        ? std::exp(1.0 - static_cast<double>(ref_len) / hyp_len)
                        : 1.0;
  return bp * std::exp(log_prec / 4.0);
}

double bleu4_single(const std::vector<std::string>& hyp,
                    const std::vector<std::vector<std::string>>& refs) {
  return bleu4({hyp}, {refs});
}

std::string EvalReport::to_json() const {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  os << "{\"images\": " << images << ", \"det_ap50\": " << det_ap50
     << ", \"det_map\": " << det_map << ", \"seg_ap50\": " << seg_ap50
     << ", \"kpt_pck\": " << kpt_pck << ", \"caption_bleu4\": " << caption_bleu4 << "}";
  return os.str();
}

}  // namespace mad
