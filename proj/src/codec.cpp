#include "mad/codec.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mad {

void SceneAnnotation::validate(int num_classes) const {
  for (const auto& inst : instances) {
    if (!(inst.box[0] < inst.box[2]) || !(inst.box[1] < inst.box[3]))
      throw std::invalid_argument("degenerate box");
    for (double c : inst.box)
      if (c < 0.0 || c > 1.0) throw std::invalid_argument("box coordinate outside [0,1]");
    if (inst.class_id < 0 || inst.class_id >= num_classes)
      throw std::invalid_argument("class id out of range");
    if (inst.keypoints) {
      for (const auto& kp : *inst.keypoints) {
        if (kp.visible && (kp.x < 0.0 || kp.x > 1.0 || kp.y < 0.0 || kp.y > 1.0))
          throw std::invalid_argument("visible keypoint outside image");
      }
    }
  }
}

int body_length(TaskKind task, const CodecConfig& cfg) {
  switch (task) {
    case TaskKind::Detection: return 5 * cfg.num_slots;
    case TaskKind::Segmentation: return cfg.mask_side * cfg.mask_side;
    case TaskKind::Keypoint: return 3 * cfg.num_keypoints;
    case TaskKind::Captioning: return cfg.caption_len;
  }
  return 0;
}

namespace {

std::array<double, 4> random_box(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double x0, x1, y0, y1;
  do {
    x0 = u(rng);
    x1 = u(rng);
  } while (x0 == x1);
  do {
    y0 = u(rng);
    y1 = u(rng);
  } while (y0 == y1);
  if (x0 > x1) std::swap(x0, x1);
  if (y0 > y1) std::swap(y0, y1);
  return {x0, y0, x1, y1};
}

void write_box_tokens(std::vector<int>& out, size_t at, const std::array<double, 4>& box,
                      const Vocab& vocab) {
  for (int k = 0; k < 4; ++k) out[at + k] = vocab.coord(quantize_coord(box[k], vocab.num_bins()));
}

std::vector<int> quantized_box_prompt(TaskKind task, const std::array<double, 4>& box,
                                      int class_id, const Vocab& vocab) {
  std::vector<int> p;
  p.push_back(vocab.prompt(task));
  for (int k = 0; k < 4; ++k) p.push_back(vocab.coord(quantize_coord(box[k], vocab.num_bins())));
  p.push_back(vocab.cls(class_id));
  return p;
}

}  // namespace

TaskSequence encode_detection(const SceneAnnotation& ann, const CodecConfig& cfg,
                              const Vocab& vocab, Rng& rng) {
  ann.validate(vocab.num_classes());
  const int n = cfg.num_slots;
  TaskSequence seq;
  seq.task = TaskKind::Detection;
  seq.prompt = {vocab.prompt(TaskKind::Detection)};
  seq.body.assign(static_cast<size_t>(n) * 5, 0);
  seq.supervise.assign(seq.body.size(), true);
  seq.slot_is_gt.assign(n, false);

  std::uniform_int_distribution<int> rand_class(0, vocab.num_classes() - 1);
  for (int s = 0; s < n; ++s) {
    write_box_tokens(seq.body, static_cast<size_t>(s) * 5, random_box(rng), vocab);
    seq.body[s * 5 + 4] = vocab.cls(rand_class(rng));
  }

  // Subsample ground truth if it exceeds the slot count, then place each
  // instance at a distinct random slot.
  std::vector<int> order(ann.instances.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const int keep = std::min<int>(static_cast<int>(order.size()), n);

  std::vector<int> slots(n);
  std::iota(slots.begin(), slots.end(), 0);
  std::shuffle(slots.begin(), slots.end(), rng);
  for (int i = 0; i < keep; ++i) {
    const InstanceGt& inst = ann.instances[order[i]];
    const int s = slots[i];
    write_box_tokens(seq.body, static_cast<size_t>(s) * 5, inst.box, vocab);
    seq.body[s * 5 + 4] = vocab.cls(inst.class_id);
    seq.slot_is_gt[s] = true;
  }
  return seq;
}

TaskSequence encode_segmentation(const InstanceGt& instance, const CodecConfig& cfg,
                                 const Vocab& vocab) {
  if (!(instance.box[0] < instance.box[2]) || !(instance.box[1] < instance.box[3]))
    throw std::invalid_argument("degenerate box");
  const int m = cfg.mask_side;
  TaskSequence seq;
  seq.task = TaskKind::Segmentation;
  seq.prompt = quantized_box_prompt(TaskKind::Segmentation, instance.box, instance.class_id, vocab);
  seq.body.resize(static_cast<size_t>(m) * m);
  seq.supervise.assign(seq.body.size(), true);

  const BitGrid& g = instance.bitmask;
  for (int y = 0; y < m; ++y) {
    for (int x = 0; x < m; ++x) {
      uint8_t bit = 0;
      if (g.width > 0 && g.height > 0) {
        int sx = std::min(g.width - 1, static_cast<int>((x + 0.5) * g.width / m));
        int sy = std::min(g.height - 1, static_cast<int>((y + 0.5) * g.height / m));
        bit = g.at(sx, sy);
      }
      seq.body[static_cast<size_t>(y) * m + x] =
          vocab.special(bit ? kForeground : kBackground);
    }
  }
  return seq;
}

TaskSequence encode_keypoint(const InstanceGt& instance, const CodecConfig& cfg,
                             const Vocab& vocab, Rng& rng) {
  const int k = cfg.num_keypoints;
  std::vector<KeypointGt> kps;
  if (instance.keypoints) kps = *instance.keypoints;
  if (static_cast<int>(kps.size()) > k)
    throw std::invalid_argument("keypoint count exceeds config");
  kps.resize(k);  // missing entries become invisible

  TaskSequence seq;
  seq.task = TaskKind::Keypoint;
  seq.prompt = quantized_box_prompt(TaskKind::Keypoint, instance.box, instance.class_id, vocab);
  seq.body.resize(static_cast<size_t>(k) * 3);
  seq.supervise.assign(seq.body.size(), true);

  const int bins = vocab.num_bins();
  const int bx0 = quantize_coord(instance.box[0], bins);
  const int bx1 = quantize_coord(instance.box[2], bins);
  const int by0 = quantize_coord(instance.box[1], bins);
  const int by1 = quantize_coord(instance.box[3], bins);
  std::uniform_int_distribution<int> rx(bx0, bx1), ry(by0, by1);

  for (int i = 0; i < k; ++i) {
    if (kps[i].visible) {
      seq.body[i * 3 + 0] = vocab.coord(quantize_coord(kps[i].x, bins));
      seq.body[i * 3 + 1] = vocab.coord(quantize_coord(kps[i].y, bins));
      seq.body[i * 3 + 2] = vocab.special(kVisible);
    } else {
      seq.body[i * 3 + 0] = vocab.coord(rx(rng));
      seq.body[i * 3 + 1] = vocab.coord(ry(rng));
      seq.body[i * 3 + 2] = vocab.special(kInvisible);
    }
  }
  return seq;
}

TaskSequence encode_caption(const std::vector<std::string>& caption, const CodecConfig& cfg,
                            const Vocab& vocab, Rng&) {
  TaskSequence seq;
  seq.task = TaskKind::Captioning;
  seq.prompt = {vocab.prompt(TaskKind::Captioning)};
  seq.body.assign(cfg.caption_len, vocab.pad());
  seq.supervise.assign(seq.body.size(), true);
  for (int i = 0; i < cfg.caption_len && i < static_cast<int>(caption.size()); ++i) {
    int id = vocab.word_id(caption[i]);
    if (id < 0) throw std::invalid_argument("out-of-vocabulary word: " + caption[i]);
    seq.body[i] = id;
  }
  return seq;
}

CaptionAugment caption_augment_input(const TaskSequence& seq, const CodecConfig& cfg,
                                     const Vocab& vocab, Rng& rng) {
  CaptionAugment out;
  out.input_body = seq.body;
  if (!cfg.caption_augment) return out;
  std::vector<int> non_pad;
  for (size_t i = 0; i < seq.body.size(); ++i)
    if (seq.body[i] != vocab.pad()) non_pad.push_back(static_cast<int>(i));
  if (non_pad.empty()) return out;
  std::uniform_int_distribution<size_t> pick(0, non_pad.size() - 1);
  const int pos = non_pad[pick(rng)];
  std::uniform_int_distribution<int> w(0, static_cast<int>(vocab.words().size()) - 1);
  int tok = seq.body[pos];
  while (tok == seq.body[pos]) tok = vocab.word(w(rng));
  out.input_body[pos] = tok;
  out.position = pos;
  return out;
}

DetectionDecode decode_detection(const std::vector<int>& body,
                                 const std::vector<std::vector<double>>& probs,
                                 const Vocab& vocab) {
  if (body.size() % 5 != 0) throw std::invalid_argument("detection body length not 5N");
  DetectionDecode out;
  const int n = static_cast<int>(body.size() / 5);
  const int bins = vocab.num_bins();
  for (int s = 0; s < n; ++s) {
    const int cls_tok = body[s * 5 + 4];
    if (!vocab.is_class(cls_tok)) {
      ++out.dropped_slots;
      continue;
    }
    const int cls = vocab.classify(cls_tok).index;
    if (cls == vocab.num_classes()) continue;  // noise slot
    ScoredBox b;
    double c[4];
    bool ok = true;
    for (int k = 0; k < 4; ++k) {
      const int tok = body[s * 5 + k];
      if (!vocab.is_coord(tok)) {
        ok = false;
        break;
      }
      c[k] = dequantize_coord(vocab.classify(tok).index, bins);
    }
    if (!ok) {
      ++out.dropped_slots;
      continue;
    }
    b.box = {std::min(c[0], c[2]), std::min(c[1], c[3]), std::max(c[0], c[2]),
             std::max(c[1], c[3])};
    b.class_id = cls;
    b.score = probs.empty() ? 1.0 : probs[s * 5 + 4][cls_tok];
    out.boxes.push_back(b);
  }
  return out;
}

SegmentationDecode decode_segmentation(const std::vector<std::vector<double>>& probs,
                                       const CodecConfig& cfg, const Vocab& vocab) {
  const int m = cfg.mask_side;
  if (static_cast<int>(probs.size()) != m * m)
    throw std::invalid_argument("segmentation probability rows != M*M");
  SegmentationDecode out;
  out.soft.resize(probs.size());
  out.binary.width = m;
  out.binary.height = m;
  out.binary.data.assign(probs.size(), 0);
  const int fg = vocab.special(kForeground), bg = vocab.special(kBackground);
  for (size_t i = 0; i < probs.size(); ++i) {
    const double pf = probs[i][fg], pb = probs[i][bg];
    const double denom = pf + pb;
    out.soft[i] = denom > 0.0 ? pf / denom : 0.0;
    out.binary.data[i] = out.soft[i] > 0.5 ? 1 : 0;  // ties -> background
  }
  return out;
}

std::vector<DecodedKeypoint> decode_keypoint(const std::vector<int>& body,
                                             const std::vector<std::vector<double>>& probs,
                                             const Vocab& vocab) {
  if (body.size() % 3 != 0) throw std::invalid_argument("keypoint body length not 3K");
  std::vector<DecodedKeypoint> out;
  const int bins = vocab.num_bins();
  const int vis = vocab.special(kVisible), invis = vocab.special(kInvisible);
  for (size_t i = 0; i + 2 < body.size(); i += 3) {
    DecodedKeypoint kp;
    kp.x = vocab.is_coord(body[i]) ? dequantize_coord(vocab.classify(body[i]).index, bins) : 0.0;
    kp.y = vocab.is_coord(body[i + 1])
               ? dequantize_coord(vocab.classify(body[i + 1]).index, bins)
               : 0.0;
    if (!probs.empty()) {
      const double pv = probs[i + 2][vis], pi = probs[i + 2][invis];
      kp.visibility = (pv + pi) > 0.0 ? pv / (pv + pi) : 0.0;
    } else {
      kp.visibility = body[i + 2] == vis ? 1.0 : 0.0;
    }
    out.push_back(kp);
  }
  return out;
}

CaptionDecode decode_caption(const std::vector<int>& body, const Vocab& vocab) {
  CaptionDecode out;
  for (int tok : body) {
    if (tok == vocab.pad()) break;
    if (!vocab.is_word(tok)) {
      ++out.skipped_tokens;
      continue;
    }
    out.words.push_back(vocab.words()[vocab.classify(tok).index]);
  }
  return out;
}

}  // namespace mad
