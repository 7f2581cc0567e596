#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mad/vocab.hpp"

namespace mad {

using Rng = std::mt19937_64;

struct BitGrid {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> data;  // row-major, 0/1

  uint8_t at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
  void set(int x, int y, uint8_t v) { data[static_cast<size_t>(y) * width + x] = v; }
};

struct KeypointGt {
  double x = 0.0;  // normalized
  double y = 0.0;
  bool visible = false;
};

struct InstanceGt {
  std::array<double, 4> box{};  // (x_min, y_min, x_max, y_max), normalized
  int class_id = 0;
  BitGrid bitmask;  // aligned to the box region
  std::optional<std::vector<KeypointGt>> keypoints;
};

struct SceneAnnotation {
  int width = 0;   // pixels
  int height = 0;
  std::vector<InstanceGt> instances;
  std::vector<std::vector<std::string>> captions;

  void validate(int num_classes) const;  // throws on invariant violation
};

struct CodecConfig {
  int num_slots = 100;     // N
  int mask_side = 16;      // M
  int num_keypoints = 5;   // K_pt
  int caption_len = 20;
  bool caption_augment = true;
};

struct TaskSequence {
  TaskKind task = TaskKind::Detection;
  std::vector<int> prompt;
  std::vector<int> body;
  std::vector<bool> supervise;       // per body position
  std::vector<bool> slot_is_gt;      // detection only, per slot
};

int body_length(TaskKind task, const CodecConfig& cfg);

// N slots of [x_min, y_min, x_max, y_max, class]; noise objects first, then
// ground truth injected at distinct random slots.
TaskSequence encode_detection(const SceneAnnotation& ann, const CodecConfig& cfg,
                              const Vocab& vocab, Rng& rng);

// Prompt [<Segmentation>, qbox, class]; body = M*M foreground/background
// tokens, row-major, bitmask resampled nearest-neighbor to M x M.
TaskSequence encode_segmentation(const InstanceGt& instance, const CodecConfig& cfg,
                                 const Vocab& vocab);

// Prompt [<Keypoint>, qbox, person class]; body = K_pt triplets [qx, qy, vis].
// Invisible keypoints get random in-box coordinates.
TaskSequence encode_keypoint(const InstanceGt& instance, const CodecConfig& cfg,
                             const Vocab& vocab, Rng& rng);

// Prompt [<Caption>]; body padded/truncated to caption_len. With augmentation
// on, caption_augment_input corrupts one input position (target unchanged).
TaskSequence encode_caption(const std::vector<std::string>& caption, const CodecConfig& cfg,
                            const Vocab& vocab, Rng& rng);

// Returns the corrupted input body and the corrupted position (-1 if none).
struct CaptionAugment {
  std::vector<int> input_body;
  int position = -1;
};
CaptionAugment caption_augment_input(const TaskSequence& seq, const CodecConfig& cfg,
                                     const Vocab& vocab, Rng& rng);

struct ScoredBox {
  std::array<double, 4> box{};
  int class_id = 0;
  double score = 0.0;
};

struct DetectionDecode {
  std::vector<ScoredBox> boxes;
  int dropped_slots = 0;  // class position held a token outside the CLASS range
};

// probs: body_len rows x vocab_size cols (row-major). NOISE slots dropped;
// score = probability of the chosen class token.
DetectionDecode decode_detection(const std::vector<int>& body,
                                 const std::vector<std::vector<double>>& probs,
                                 const Vocab& vocab);

struct SegmentationDecode {
  std::vector<double> soft;   // M*M, p(fg) / (p(fg) + p(bg))
  BitGrid binary;             // soft > 0.5
};
SegmentationDecode decode_segmentation(const std::vector<std::vector<double>>& probs,
                                       const CodecConfig& cfg, const Vocab& vocab);

struct DecodedKeypoint {
  double x = 0.0;
  double y = 0.0;
  double visibility = 0.0;  // p(vis) / (p(vis) + p(invis))
};
std::vector<DecodedKeypoint> decode_keypoint(const std::vector<int>& body,
                                             const std::vector<std::vector<double>>& probs,
                                             const Vocab& vocab);

struct CaptionDecode {
  std::vector<std::string> words;
  int skipped_tokens = 0;  // non-word tokens before the first PAD
};
CaptionDecode decode_caption(const std::vector<int>& body, const Vocab& vocab);

}  // namespace mad
