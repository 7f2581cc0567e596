#include <algorithm>
#include <cmath>

#include "mad/pipeline.hpp"

namespace mad {

namespace {

DecodeFn make_decode_fn(const Model& m, const nn::Mat& memory, const std::vector<int>& filter,
                        int prompt_len, int* pass_counter = nullptr) {
  return [&m, &memory, filter, prompt_len, pass_counter](const std::vector<int>& input) {
    nn::Mat logits = infer_decode_logits(m, memory, input, false);
    if (pass_counter) ++*pass_counter;
    return filtered_probs(logits, filter, prompt_len);
  };
}

std::vector<int> mask_body(const Vocab& vocab, const std::vector<int>& prompt, int body_len) {
  std::vector<int> input = prompt;
  input.resize(prompt.size() + body_len, vocab.mask());
  return input;
}

}  // namespace

ScenePrediction run_inference(const Model& m, const Vocab& vocab, const Image& image,
                              const InferenceConfig& cfg, Rng& rng) {
  ScenePrediction out;
  const CodecConfig& codec = m.codec();
  nn::Mat memory = infer_encode_image(m, image);

  // Detection first; kept boxes prompt the per-instance decodes.
  {
    const std::vector<int> filter = vocab.task_filter(TaskKind::Detection);
    const std::vector<int> prompt = {vocab.prompt(TaskKind::Detection)};
    DecodeFn decode = make_decode_fn(m, memory, filter, 1, &out.decoder_passes);
    RefineResult res = ensemble_refine(decode, prompt, body_length(TaskKind::Detection, codec),
                                       vocab, cfg.detection, rng);
    DetectionDecode det = decode_detection(res.tokens, res.probs, vocab);
    for (const auto& b : det.boxes)
      if (b.score >= cfg.keep_score) out.boxes.push_back(b);
  }

  for (size_t bi = 0; bi < out.boxes.size(); ++bi) {
    const ScoredBox& box = out.boxes[bi];
    // Segmentation prompt: task token, quantized box, class.
    {
      std::vector<int> prompt = {vocab.prompt(TaskKind::Segmentation)};
      for (int k = 0; k < 4; ++k)
        prompt.push_back(vocab.coord(quantize_coord(box.box[k], vocab.num_bins())));
      prompt.push_back(vocab.cls(box.class_id));
      const std::vector<int> filter = vocab.task_filter(TaskKind::Segmentation);
      const int body_len = body_length(TaskKind::Segmentation, codec);
      nn::Mat logits = infer_decode_logits(m, memory, mask_body(vocab, prompt, body_len), false);
      ++out.decoder_passes;
      auto probs = filtered_probs(logits, filter, static_cast<int>(prompt.size()));
      out.masks.push_back(decode_segmentation(probs, codec, vocab));
    }
    // Keypoints only for detected persons; masked inference at the keypoint schedule.
    if (box.class_id == cfg.person_class) {
      std::vector<int> prompt = {vocab.prompt(TaskKind::Keypoint)};
      for (int k = 0; k < 4; ++k)
        prompt.push_back(vocab.coord(quantize_coord(box.box[k], vocab.num_bins())));
      prompt.push_back(vocab.cls(box.class_id));
      const std::vector<int> filter = vocab.task_filter(TaskKind::Keypoint);
      DecodeFn decode =
          make_decode_fn(m, memory, filter, static_cast<int>(prompt.size()), &out.decoder_passes);
      RefineResult res = ensemble_refine(decode, prompt, body_length(TaskKind::Keypoint, codec),
                                         vocab, cfg.keypoint, rng);
      out.keypoint_box.push_back(static_cast<int>(bi));
      out.keypoints.push_back(decode_keypoint(res.tokens, res.probs, vocab));
    }
  }

  // Captioning with its refinement schedule.
  {
    const std::vector<int> filter = vocab.task_filter(TaskKind::Captioning);
    const std::vector<int> prompt = {vocab.prompt(TaskKind::Captioning)};
    DecodeFn decode = make_decode_fn(m, memory, filter, 1, &out.decoder_passes);
    RefineResult res = ensemble_refine(decode, prompt, body_length(TaskKind::Captioning, codec),
                                       vocab, cfg.captioning, rng);
    out.caption = decode_caption(res.tokens, vocab).words;
  }
  return out;
}

ScenePrediction run_inference_ar(const Model& m, const Vocab& vocab, const Image& image,
                                 const InferenceConfig& cfg) {
  ScenePrediction out;
  const CodecConfig& codec = m.codec();
  nn::Mat memory = infer_encode_image(m, image);
  const int start = vocab.mask();

  {
    std::vector<int> filter = vocab.task_filter(TaskKind::Detection);
    ArResult res = ar_generate(m, memory, start, {vocab.prompt(TaskKind::Detection)},
                               body_length(TaskKind::Detection, codec), filter);
    out.decoder_passes += res.decoder_passes;
    DetectionDecode det = decode_detection(res.body, {}, vocab);
    out.boxes = det.boxes;  // AR has no soft scores to threshold on
  }

  for (size_t bi = 0; bi < out.boxes.size(); ++bi) {
    const ScoredBox& box = out.boxes[bi];
    std::vector<int> prompt = {vocab.prompt(TaskKind::Segmentation)};
    for (int k = 0; k < 4; ++k)
      prompt.push_back(vocab.coord(quantize_coord(box.box[k], vocab.num_bins())));
    prompt.push_back(vocab.cls(box.class_id));
    ArResult res = ar_generate(m, memory, start, prompt,
                               body_length(TaskKind::Segmentation, codec),
                               vocab.task_filter(TaskKind::Segmentation));
    out.decoder_passes += res.decoder_passes;
    SegmentationDecode seg;
    const int msd = codec.mask_side;
    seg.binary.width = msd;
    seg.binary.height = msd;
    seg.binary.data.assign(static_cast<size_t>(msd) * msd, 0);
    seg.soft.assign(static_cast<size_t>(msd) * msd, 0.0);
    for (int i = 0; i < msd * msd; ++i) {
      const bool fg = res.body[i] == vocab.special(kForeground);
      seg.binary.data[i] = fg;
      seg.soft[i] = fg ? 1.0 : 0.0;
    }
    out.masks.push_back(std::move(seg));

    if (box.class_id == cfg.person_class) {
      std::vector<int> kprompt = {vocab.prompt(TaskKind::Keypoint)};
      for (int k = 0; k < 4; ++k)
        kprompt.push_back(vocab.coord(quantize_coord(box.box[k], vocab.num_bins())));
      kprompt.push_back(vocab.cls(box.class_id));
      ArResult kres = ar_generate(m, memory, start, kprompt,
                                  body_length(TaskKind::Keypoint, codec),
                                  vocab.task_filter(TaskKind::Keypoint));
      out.decoder_passes += kres.decoder_passes;
      out.keypoint_box.push_back(static_cast<int>(bi));
      out.keypoints.push_back(decode_keypoint(kres.body, {}, vocab));
    }
  }

  {
    ArResult res = ar_generate(m, memory, start, {vocab.prompt(TaskKind::Captioning)},
                               body_length(TaskKind::Captioning, codec),
                               vocab.task_filter(TaskKind::Captioning));
    out.decoder_passes += res.decoder_passes;
    out.caption = decode_caption(res.body, vocab).words;
  }
  return out;
}

EvalReport evaluate(const Model& m, const Vocab& vocab,
                    const std::vector<DatasetRecord>& records, const InferenceConfig& cfg,
                    bool ar_mode) {
  EvalReport rep;
  std::vector<DetectionPred> det_preds;
  std::vector<std::pair<int, GtObject>> det_gts;
  std::vector<MaskPred> seg_preds;
  std::vector<InstanceRef> seg_gts, kpt_gts;
  std::vector<KeypointPred> kpt_preds;
  std::vector<std::vector<std::string>> hyps;
  std::vector<std::vector<std::vector<std::string>>> refs;

  Rng rng(cfg.seed);
  int img_w = 0, img_h = 0;
  for (size_t i = 0; i < records.size(); ++i) {
    const DatasetRecord& rec = records[i];
    img_w = rec.ann.width;
    img_h = rec.ann.height;
    ScenePrediction pred = ar_mode ? run_inference_ar(m, vocab, rec.image, cfg)
                                   : run_inference(m, vocab, rec.image, cfg, rng);
    const int id = static_cast<int>(i);
    for (const auto& b : pred.boxes) det_preds.push_back({id, b});
    for (size_t bi = 0; bi < pred.boxes.size() && bi < pred.masks.size(); ++bi)
      seg_preds.push_back({id, pred.masks[bi].binary, pred.boxes[bi].box,
                           pred.boxes[bi].class_id, pred.boxes[bi].score});
    for (size_t ki = 0; ki < pred.keypoints.size(); ++ki)
      kpt_preds.push_back({id, pred.boxes[pred.keypoint_box[ki]].box, pred.keypoints[ki]});

    for (const auto& inst : rec.ann.instances) {
      det_gts.push_back({id, {inst.box, inst.class_id}});
      seg_gts.push_back({id, &inst});
      if (inst.keypoints) kpt_gts.push_back({id, &inst});
    }
    if (!rec.ann.captions.empty()) {
      hyps.push_back(pred.caption);
      refs.push_back(rec.ann.captions);
    }
  }

  rep.images = static_cast<int>(records.size());
  rep.det_ap50 = eval_detection_ap(det_preds, det_gts, 0.5);
  rep.det_map = eval_detection_map(det_preds, det_gts);
  rep.seg_ap50 = eval_segmentation_ap(seg_preds, seg_gts, img_w, img_h, 0.5);
  rep.kpt_pck = eval_pck(kpt_preds, kpt_gts, 0.1);
  rep.caption_bleu4 = hyps.empty() ? 0.0 : bleu4(hyps, refs);
  return rep;
}

EvalReport evaluate_ground_truth(const std::vector<DatasetRecord>& records) {
  EvalReport rep;
  std::vector<DetectionPred> det_preds;
  std::vector<std::pair<int, GtObject>> det_gts;
  std::vector<MaskPred> seg_preds;
  std::vector<InstanceRef> seg_gts, kpt_gts;
  std::vector<KeypointPred> kpt_preds;
  std::vector<std::vector<std::string>> hyps;
  std::vector<std::vector<std::vector<std::string>>> refs;

  int img_w = 0, img_h = 0;
  for (size_t i = 0; i < records.size(); ++i) {
    const DatasetRecord& rec = records[i];
    const int id = static_cast<int>(i);
    img_w = rec.ann.width;
    img_h = rec.ann.height;
    for (const auto& inst : rec.ann.instances) {
      det_preds.push_back({id, {inst.box, inst.class_id, 1.0}});
      det_gts.push_back({id, {inst.box, inst.class_id}});
      seg_preds.push_back({id, inst.bitmask, inst.box, inst.class_id, 1.0});
      seg_gts.push_back({id, &inst});
      if (inst.keypoints) {
        kpt_gts.push_back({id, &inst});
        KeypointPred kp;
        kp.image_id = id;
        kp.box = inst.box;
        for (const auto& k : *inst.keypoints) kp.keypoints.push_back({k.x, k.y, 1.0});
        kpt_preds.push_back(std::move(kp));
      }
    }
    if (!rec.ann.captions.empty()) {
      hyps.push_back(rec.ann.captions.front());
      refs.push_back(rec.ann.captions);
    }
  }
  rep.images = static_cast<int>(records.size());
  rep.det_ap50 = eval_detection_ap(det_preds, det_gts, 0.5);
  rep.det_map = eval_detection_map(det_preds, det_gts);
  rep.seg_ap50 = eval_segmentation_ap(seg_preds, seg_gts, img_w, img_h, 0.5);
  rep.kpt_pck = eval_pck(kpt_preds, kpt_gts, 0.1);
  rep.caption_bleu4 = hyps.empty() ? 0.0 : bleu4(hyps, refs);
  return rep;
}

RoundTripReport tokenize_round_trip(const SceneAnnotation& ann, const CodecConfig& codec,
                                    const Vocab& vocab, Rng& rng) {
  RoundTripReport rep;
  const double tol = 1.0 / (2.0 * vocab.num_bins()) + 1e-12;

  TaskSequence det = encode_detection(ann, codec, vocab, rng);
  DetectionDecode dec = decode_detection(det.body, {}, vocab);
  // Every gt instance must be recoverable within quantization error by some
  // decoded box of its class.
  for (const auto& inst : ann.instances) {
    bool found = false;
    for (const auto& b : dec.boxes) {
      if (b.class_id != inst.class_id) continue;
      double err = 0.0;
      for (int k = 0; k < 4; ++k) err = std::max(err, std::abs(b.box[k] - inst.box[k]));
      if (err <= tol) {
        found = true;
        break;
      }
    }
    if (!found) ++rep.detection_box_violations;
  }

  for (const auto& inst : ann.instances) {
    TaskSequence seg = encode_segmentation(inst, codec, vocab);
    std::vector<std::vector<double>> onehot(seg.body.size(),
                                            std::vector<double>(vocab.total_size(), 0.0));
    for (size_t i = 0; i < seg.body.size(); ++i) onehot[i][seg.body[i]] = 1.0;
    SegmentationDecode sd = decode_segmentation(onehot, codec, vocab);
    for (size_t i = 0; i < seg.body.size(); ++i) {
      const bool fg = seg.body[i] == vocab.special(kForeground);
      if (fg != static_cast<bool>(sd.binary.data[i])) ++rep.segmentation_mismatches;
    }

    if (inst.keypoints) {
      TaskSequence kpt = encode_keypoint(inst, codec, vocab, rng);
      auto decoded = decode_keypoint(kpt.body, {}, vocab);
      const auto& gt = *inst.keypoints;
      for (size_t k = 0; k < decoded.size() && k < gt.size(); ++k) {
        if (!gt[k].visible) continue;
        if (std::abs(decoded[k].x - gt[k].x) > tol || std::abs(decoded[k].y - gt[k].y) > tol ||
            decoded[k].visibility < 0.5)
          ++rep.keypoint_mismatches;
      }
    }
  }

  for (const auto& cap : ann.captions) {
    CodecConfig plain = codec;
    plain.caption_augment = false;
    TaskSequence seq = encode_caption(cap, plain, vocab, rng);
    auto words = decode_caption(seq.body, vocab).words;
    const size_t expect = std::min<size_t>(cap.size(), codec.caption_len);
    if (words.size() != expect) {
      ++rep.caption_mismatches;
      continue;
    }
    for (size_t i = 0; i < expect; ++i)
      if (words[i] != cap[i]) ++rep.caption_mismatches;
  }
  return rep;
}

}  // namespace mad
