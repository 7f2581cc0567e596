#pragma once

#include "mad/harness.hpp"
#include "mad/infer.hpp"
#include "mad/masking.hpp"

namespace mad {

struct InferenceConfig {
  RefinementSchedule detection;            // default K=0
  RefinementSchedule keypoint{{0.7}};
  RefinementSchedule captioning{{0.8, 0.6, 0.4}};
  double keep_score = 0.3;  // detection boxes prompting downstream decodes
  int person_class = kStickman;
  uint64_t seed = 0;
};

struct ScenePrediction {
  std::vector<ScoredBox> boxes;
  std::vector<SegmentationDecode> masks;          // parallel to boxes
  std::vector<int> keypoint_box;                  // indices into boxes
  std::vector<std::vector<DecodedKeypoint>> keypoints;
  std::vector<std::string> caption;
  int decoder_passes = 0;
};

// MAD multi-task inference: detection first (its boxes prompt segmentation and
// keypoints), captioning with its own refinement schedule.
ScenePrediction run_inference(const Model& m, const Vocab& vocab, const Image& image,
                              const InferenceConfig& cfg, Rng& rng);

// AR-baseline counterpart (greedy, fixed-length, KV-cached).
ScenePrediction run_inference_ar(const Model& m, const Vocab& vocab, const Image& image,
                                 const InferenceConfig& cfg);

EvalReport evaluate(const Model& m, const Vocab& vocab,
                    const std::vector<DatasetRecord>& records, const InferenceConfig& cfg,
                    bool ar_mode = false);

// Self-evaluation: metrics computed with predictions == ground truth.
EvalReport evaluate_ground_truth(const std::vector<DatasetRecord>& records);

// Round-trip debugging for the tokenize subcommand: encode an annotation to
// task sequences, decode the targets, and count mismatches.
struct RoundTripReport {
  int detection_box_violations = 0;   // coordinate error > 1/(2 bins)
  int segmentation_mismatches = 0;
  int keypoint_mismatches = 0;
  int caption_mismatches = 0;
  bool clean() const {
    return detection_box_violations + segmentation_mismatches + keypoint_mismatches +
               caption_mismatches ==
           0;
  }
};
RoundTripReport tokenize_round_trip(const SceneAnnotation& ann, const CodecConfig& codec,
                                    const Vocab& vocab, Rng& rng);

}  // namespace mad
