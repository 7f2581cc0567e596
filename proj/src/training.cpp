#include "mad/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mad {

void TrainConfig::validate() const {
  for (const auto& [t, w] : task_weights) {
    (void)t;
    if (w < 0.0) throw std::invalid_argument("task weight must be >= 0");
  }
  if (train_mask_ratio <= 0.0 || train_mask_ratio >= 1.0)
    throw std::invalid_argument("train_mask_ratio must lie in (0,1)");
  if (batch_size < 1 || total_steps < 1) throw std::invalid_argument("bad batch/step counts");
}

int masked_ce_node(nn::Tape& tape, int logits, const std::vector<int>& target,
                   const std::vector<int>& mask_positions, const std::vector<bool>& supervise,
                   const std::vector<int>& filter, double task_weight, int body_offset,
                   int* n_masked_out) {
  const int rows = static_cast<int>(tape.val(logits).rows());
  std::vector<int> targets(rows, filter.front());
  std::vector<double> weights(rows, 0.0);

  int n_m = 0;
  for (int p : mask_positions)
    if (supervise[p]) ++n_m;
  if (n_masked_out) *n_masked_out = n_m;
  if (n_m == 0) return tape.input(nn::Mat::Zero(1, 1));

  for (int p : mask_positions) {
    if (!supervise[p]) continue;
    targets[body_offset + p] = target[p];
    weights[body_offset + p] = task_weight / n_m;
  }
  return tape.masked_softmax_ce(logits, std::move(targets), std::move(weights), filter);
}

Trainer::Trainer(Model& model, const Vocab& vocab, TrainConfig cfg)
    : model_(model), vocab_(vocab), cfg_(std::move(cfg)), opt_(cfg_.opt), rng_(cfg_.seed) {
  cfg_.validate();
}

Trainer::ViewLoss Trainer::view_loss(Forward& fwd, int memory, const MaskedView& view,
                                     const std::vector<int>& filter, double weight) {
  ViewLoss out;
  out.task = view.task;
  std::vector<int> logits = fwd.decode(memory, view.input, false);
  for (int lg : logits)
    out.per_layer_nodes.push_back(masked_ce_node(fwd.tape(), lg, view.target,
                                                 view.mask_positions, view.supervise, filter,
                                                 weight, view.prompt_len, &out.n_masked));
  return out;
}

namespace {

// Slot predictions (class distribution + argmax-decoded box) from last-layer
// detection logits over the body rows.
std::vector<SlotPrediction> slot_predictions(const nn::Mat& logits, int body_offset,
                                             const Vocab& vocab) {
  const int n = static_cast<int>((logits.rows() - body_offset) / 5);
  const int bins = vocab.num_bins();
  std::vector<SlotPrediction> slots(n);
  for (int s = 0; s < n; ++s) {
    SlotPrediction& sp = slots[s];
    for (int k = 0; k < 4; ++k) {
      const auto row = logits.row(body_offset + s * 5 + k);
      int best = 0;
      for (int b = 1; b < bins; ++b)
        if (row(vocab.coord(b)) > row(vocab.coord(best))) best = b;
      sp.box[k] = dequantize_coord(best, bins);
    }
    if (sp.box[0] > sp.box[2]) std::swap(sp.box[0], sp.box[2]);
    if (sp.box[1] > sp.box[3]) std::swap(sp.box[1], sp.box[3]);

    // Class distribution: softmax over the detection filter at the class row,
    // restricted to the class tokens.
    const auto row = logits.row(body_offset + s * 5 + 4);
    sp.class_probs.resize(vocab.num_classes() + 1);
    double mx = -1e300, z = 0.0;
    std::vector<int> filter = vocab.task_filter(TaskKind::Detection);
    for (int id : filter) mx = std::max(mx, row(id));
    for (int id : filter) z += std::exp(row(id) - mx);
    for (int c = 0; c <= vocab.num_classes(); ++c)
      sp.class_probs[c] = std::exp(row(vocab.cls(c)) - mx) / z;
  }
  return slots;
}

std::vector<GtObject> gt_objects(const SceneAnnotation& ann) {
  std::vector<GtObject> gts;
  for (const auto& inst : ann.instances) gts.push_back({inst.box, inst.class_id});
  return gts;
}

}  // namespace

void Trainer::mad_views_for_image(Forward& fwd, int memory, const SceneExample& ex,
                                  std::vector<ViewLoss>& out) {
  const CodecConfig& codec = model_.codec();
  nn::Tape& tape = fwd.tape();
  const double ratio = cfg_.train_mask_ratio;

  // Detection: decode the fully masked view first, match its predictions to
  // ground truth, and supervise both views with the matched targets.
  if (double w = cfg_.task_weights.at(TaskKind::Detection); w > 0.0) {
    TaskSequence seq = encode_detection(ex.ann, codec, vocab_, rng_);
    const std::vector<int> filter = vocab_.task_filter(TaskKind::Detection);
    MaskedView fully = mask_fully(seq, vocab_);
    std::vector<int> logits = fwd.decode(memory, fully.input, false);

    auto slots = slot_predictions(tape.val(logits.back()), fully.prompt_len, vocab_);
    DetectionTargets tg = detection_targets(slots, gt_objects(ex.ann), vocab_, cfg_.match);

    fully.target = tg.target;
    fully.supervise.assign(tg.supervise.begin(), tg.supervise.end());
    ViewLoss vl;
    vl.task = TaskKind::Detection;
    for (int lg : logits)
      vl.per_layer_nodes.push_back(masked_ce_node(tape, lg, fully.target, fully.mask_positions,
                                                  fully.supervise, filter, w, fully.prompt_len,
                                                  &vl.n_masked));
    out.push_back(std::move(vl));

    // The partial view's visible tokens must agree with the matched targets,
    // otherwise context and supervision disagree about which object occupies
    // which slot. Rearrange the body to the matched layout (unsupervised
    // positions keep the encoded noise-box tokens) before masking.
    TaskSequence matched = seq;
    for (size_t i = 0; i < tg.supervise.size(); ++i)
      if (tg.supervise[i]) matched.body[i] = tg.target[i];
    MaskedView partly = mask_partial(matched, ratio, vocab_, rng_);
    partly.target = tg.target;
    partly.supervise.assign(tg.supervise.begin(), tg.supervise.end());
    out.push_back(view_loss(fwd, memory, partly, filter, w));
  }

  if (double w = cfg_.task_weights.at(TaskKind::Segmentation); w > 0.0) {
    const std::vector<int> filter = vocab_.task_filter(TaskKind::Segmentation);
    std::vector<int> order(ex.ann.instances.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng_);
    const int keep = std::min<int>(cfg_.max_seg_instances, static_cast<int>(order.size()));
    for (int i = 0; i < keep; ++i) {
      TaskSequence seq = encode_segmentation(ex.ann.instances[order[i]], codec, vocab_);
      out.push_back(view_loss(fwd, memory, mask_fully(seq, vocab_), filter, w));
      out.push_back(view_loss(fwd, memory, mask_partial(seq, ratio, vocab_, rng_), filter, w));
    }
  }

  if (double w = cfg_.task_weights.at(TaskKind::Keypoint); w > 0.0) {
    const std::vector<int> filter = vocab_.task_filter(TaskKind::Keypoint);
    int used = 0;
    for (const auto& inst : ex.ann.instances) {
      if (!inst.keypoints || used >= cfg_.max_kpt_instances) continue;
      ++used;
      TaskSequence seq = encode_keypoint(inst, codec, vocab_, rng_);
      out.push_back(view_loss(fwd, memory, mask_fully(seq, vocab_), filter, w));
      out.push_back(view_loss(fwd, memory, mask_partial(seq, ratio, vocab_, rng_), filter, w));
    }
  }

  if (double w = cfg_.task_weights.at(TaskKind::Captioning); w > 0.0) {
    if (!ex.ann.captions.empty()) {
      const std::vector<int> filter = vocab_.task_filter(TaskKind::Captioning);
      nn::Tape& t = fwd.tape();

      // Reference selection from the fully masked decode (1-of-R assignment).
      std::vector<TaskSequence> refs;
      for (const auto& cap : ex.ann.captions)
        refs.push_back(encode_caption(cap, codec, vocab_, rng_));
      MaskedView fully = mask_fully(refs[0], vocab_);
      std::vector<int> logits = fwd.decode(memory, fully.input, false);

      int chosen = 0;
      if (refs.size() > 1) {
        std::vector<std::vector<double>> probs;
        const nn::Mat& last = t.val(logits.back());
        for (int r = fully.prompt_len; r < last.rows(); ++r) {
          std::vector<double> row(last.cols());
          double mx = -1e300, z = 0.0;
          for (int id : filter) mx = std::max(mx, last(r, id));
          for (int id : filter) z += std::exp(last(r, id) - mx);
          for (int id : filter) row[id] = std::exp(last(r, id) - mx) / z;
          probs.push_back(std::move(row));
        }
        std::vector<std::vector<int>> ref_bodies;
        for (const auto& r : refs) ref_bodies.push_back(r.body);
        chosen = caption_target(probs, ref_bodies);
      }
      const TaskSequence& seq = refs[chosen];

      fully.target = seq.body;
      ViewLoss vl;
      vl.task = TaskKind::Captioning;
      for (int lg : logits)
        vl.per_layer_nodes.push_back(masked_ce_node(t, lg, fully.target, fully.mask_positions,
                                                    fully.supervise, filter, w, fully.prompt_len,
                                                    &vl.n_masked));
      out.push_back(std::move(vl));

      // Partly masked view with input-side augmentation; the corrupted
      // position is forced into the mask set.
      CaptionAugment aug = caption_augment_input(seq, codec, vocab_, rng_);
      std::vector<int> forced;
      if (aug.position >= 0) forced.push_back(aug.position);
      MaskedView partly = mask_partial(seq, ratio, vocab_, rng_, forced);
      for (size_t i = 0; i < aug.input_body.size(); ++i) {
        const int pos = partly.prompt_len + static_cast<int>(i);
        if (partly.input[pos] != vocab_.mask()) partly.input[pos] = aug.input_body[i];
      }
      out.push_back(view_loss(fwd, memory, partly, filter, w));
    }
  }
}

Trainer::ViewLoss Trainer::ar_view_loss(Forward& fwd, int memory, const std::vector<int>& prompt,
                                        const std::vector<int>& body,
                                        const std::vector<bool>& supervise,
                                        std::vector<int> filter, double weight) {
  // Teacher-forced next-token prediction: input [<start>, prompt, body],
  // target at position i is token i+1; the final body position is trained to
  // emit <end>. <start> reuses the MASK id and <end> the PAD id, neither of
  // which occurs elsewhere in AR sequences except caption padding.
  const int start = vocab_.mask();
  const int end = vocab_.pad();
  std::vector<int> input;
  input.push_back(start);
  input.insert(input.end(), prompt.begin(), prompt.end());
  input.insert(input.end(), body.begin(), body.end());

  const int plen = static_cast<int>(prompt.size());
  const int blen = static_cast<int>(body.size());
  std::vector<int> target(blen + 1);
  std::vector<bool> sup(blen + 1);
  for (int j = 0; j < blen; ++j) {
    target[j] = body[j];
    sup[j] = supervise[j];
  }
  target[blen] = end;
  sup[blen] = true;
  if (std::find(filter.begin(), filter.end(), end) == filter.end()) filter.push_back(end);

  std::vector<int> positions(blen + 1);
  std::iota(positions.begin(), positions.end(), 0);

  ViewLoss out;
  out.task = TaskKind::Detection;  // caller overwrites
  std::vector<int> logits = fwd.decode(memory, input, true);
  for (int lg : logits)
    out.per_layer_nodes.push_back(masked_ce_node(fwd.tape(), lg, target, positions, sup, filter,
                                                 weight, plen, &out.n_masked));
  return out;
}

void Trainer::ar_views_for_image(Forward& fwd, int memory, const SceneExample& ex,
                                 std::vector<ViewLoss>& out) {
  const CodecConfig& codec = model_.codec();

  if (double w = cfg_.task_weights.at(TaskKind::Detection); w > 0.0) {
    // Ground-truth objects at the front of the sequence, then noise slots with
    // NOISE-class targets and unsupervised coordinates.
    const int n = codec.num_slots;
    std::vector<int> body(static_cast<size_t>(n) * 5);
    std::vector<bool> sup(body.size(), true);
    std::vector<int> order(ex.ann.instances.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng_);
    const int keep = std::min<int>(n, static_cast<int>(order.size()));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int s = 0; s < n; ++s) {
      if (s < keep) {
        const auto& inst = ex.ann.instances[order[s]];
        for (int k = 0; k < 4; ++k)
          body[s * 5 + k] = vocab_.coord(quantize_coord(inst.box[k], vocab_.num_bins()));
        body[s * 5 + 4] = vocab_.cls(inst.class_id);
      } else {
        double x0 = u(rng_), x1 = u(rng_), y0 = u(rng_), y1 = u(rng_);
        if (x0 > x1) std::swap(x0, x1);
        if (y0 > y1) std::swap(y0, y1);
        const double c[4] = {x0, y0, x1, y1};
        for (int k = 0; k < 4; ++k) {
          body[s * 5 + k] = vocab_.coord(quantize_coord(c[k], vocab_.num_bins()));
          sup[s * 5 + k] = false;
        }
        body[s * 5 + 4] = vocab_.noise_class();
      }
    }
    ViewLoss vl = ar_view_loss(fwd, memory, {vocab_.prompt(TaskKind::Detection)}, body, sup,
                               vocab_.task_filter(TaskKind::Detection), w);
    vl.task = TaskKind::Detection;
    out.push_back(std::move(vl));
  }

  if (double w = cfg_.task_weights.at(TaskKind::Segmentation); w > 0.0) {
    std::vector<int> order(ex.ann.instances.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng_);
    const int keep = std::min<int>(cfg_.max_seg_instances, static_cast<int>(order.size()));
    for (int i = 0; i < keep; ++i) {
      TaskSequence seq = encode_segmentation(ex.ann.instances[order[i]], codec, vocab_);
      ViewLoss vl = ar_view_loss(fwd, memory, seq.prompt, seq.body, seq.supervise,
                                 vocab_.task_filter(TaskKind::Segmentation), w);
      vl.task = TaskKind::Segmentation;
      out.push_back(std::move(vl));
    }
  }

  if (double w = cfg_.task_weights.at(TaskKind::Keypoint); w > 0.0) {
    int used = 0;
    for (const auto& inst : ex.ann.instances) {
      if (!inst.keypoints || used >= cfg_.max_kpt_instances) continue;
      ++used;
      TaskSequence seq = encode_keypoint(inst, codec, vocab_, rng_);
      ViewLoss vl = ar_view_loss(fwd, memory, seq.prompt, seq.body, seq.supervise,
                                 vocab_.task_filter(TaskKind::Keypoint), w);
      vl.task = TaskKind::Keypoint;
      out.push_back(std::move(vl));
    }
  }

  if (double w = cfg_.task_weights.at(TaskKind::Captioning); w > 0.0) {
    if (!ex.ann.captions.empty()) {
      std::uniform_int_distribution<size_t> pick(0, ex.ann.captions.size() - 1);
      TaskSequence seq = encode_caption(ex.ann.captions[pick(rng_)], codec, vocab_, rng_);
      ViewLoss vl = ar_view_loss(fwd, memory, seq.prompt, seq.body, seq.supervise,
                                 vocab_.task_filter(TaskKind::Captioning), w);
      vl.task = TaskKind::Captioning;
      out.push_back(std::move(vl));
    }
  }
}

LossBreakdown Trainer::step(const std::vector<SceneExample>& batch) {
  LossBreakdown bd;
  nn::Tape tape;
  Forward fwd(model_, tape);
  std::vector<ViewLoss> views;

  for (const auto& ex : batch) {
    int memory = fwd.encode_image(ex.image);
    ++encoder_passes_;
    if (cfg_.ar_mode)
      ar_views_for_image(fwd, memory, ex, views);
    else
      mad_views_for_image(fwd, memory, ex, views);
  }

  const int layers = model_.cfg().dec_layers;
  bd.per_layer.assign(layers, 0.0);
  std::vector<int> layer_sums;
  for (const auto& v : views) {
    for (int l = 0; l < layers; ++l) bd.per_layer[l] += tape.val(v.per_layer_nodes[l])(0, 0);
    double task_total = 0.0;
    for (int node : v.per_layer_nodes) task_total += tape.val(node)(0, 0);
    bd.per_task[v.task] += task_total / layers / batch.size();
    bd.n_masked[v.task] += v.n_masked;
    for (int node : v.per_layer_nodes) layer_sums.push_back(node);
  }
  // Auxiliary per-layer losses averaged over layers, mean over batch images.
  int total_node = tape.scale(tape.add_scalars(layer_sums),
                              1.0 / (layers * static_cast<double>(batch.size())));
  bd.total = tape.val(total_node)(0, 0);
  if (!std::isfinite(bd.total)) {
    bd.finite = false;
    return bd;
  }

  auto params = model_.param_ptrs();
  nn::AdamW::zero_grad(params);
  tape.backward(total_node);

  const int drop_at = static_cast<int>(cfg_.lr_drop_fraction * cfg_.total_steps);
  const double lr_scale = step_count_ >= drop_at ? 0.1 : 1.0;
  opt_.step(params, lr_scale);
  ++step_count_;
  return bd;
}

}  // namespace mad
