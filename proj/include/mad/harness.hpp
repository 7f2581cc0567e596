#pragma once

#include <string>
#include <vector>

#include "mad/codec.hpp"
#include "mad/matching.hpp"
#include "mad/model.hpp"

namespace mad {

// Shape classes of the synthetic world, in category-id order.
enum ShapeClass { kCircle = 0, kSquare = 1, kTriangle = 2, kBar = 3, kStickman = 4 };

struct ShapesWorldConfig {
  int image_width = 256;
  int image_height = 256;
  int min_shapes = 1;
  int max_shapes = 8;
  int num_keypoints = 5;  // stickman: head, hands, feet
  double invisible_prob = 0.15;
};

struct DatasetRecord {
  Image image;
  SceneAnnotation ann;
  std::string split = "train";
};

const std::vector<std::string>& shapes_world_words();
const std::vector<std::string>& shapes_world_class_names();

DatasetRecord generate_scene(const ShapesWorldConfig& cfg, Rng& rng);
std::vector<DatasetRecord> generate_dataset(const ShapesWorldConfig& cfg, int train_count,
                                            int val_count, uint64_t seed);

// --- on-disk format: PNG images + annotations.json (COCO-like) ---
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

void save_dataset(const std::string& dir, const std::vector<DatasetRecord>& records);

struct LoadReport {
  std::vector<DatasetRecord> records;
  std::vector<std::string> errors;  // itemized schema violations
};
LoadReport load_dataset(const std::string& dir, bool allow_partial = false);

// --- metrics ---
struct DetectionPred {
  int image_id = 0;
  ScoredBox box;
};

struct InstanceRef {
  int image_id = 0;
  const InstanceGt* gt = nullptr;
};

double box_iou(const std::array<double, 4>& a, const std::array<double, 4>& b);

// Score-sorted, all-point-interpolated AP; greedy per-prediction matching to
// the highest-IoU unmatched same-class gt with IoU >= threshold.
double eval_detection_ap(const std::vector<DetectionPred>& preds,
                         const std::vector<std::pair<int, GtObject>>& gts, double iou_thr);
double eval_detection_map(const std::vector<DetectionPred>& preds,
                          const std::vector<std::pair<int, GtObject>>& gts);  // 0.5:0.05:0.95

struct MaskPred {
  int image_id = 0;
  BitGrid mask;  // codec-resolution binary mask
  std::array<double, 4> box{};
  int class_id = 0;
  double score = 0.0;
};
// Mask pasted into its box at image resolution (nearest neighbor); IoU there.
double eval_segmentation_ap(const std::vector<MaskPred>& preds,
                            const std::vector<InstanceRef>& gts, int image_width,
                            int image_height, double iou_thr);

struct KeypointPred {
  int image_id = 0;
  std::array<double, 4> box{};
  std::vector<DecodedKeypoint> keypoints;
};
double eval_pck(const std::vector<KeypointPred>& preds, const std::vector<InstanceRef>& gts,
                double alpha = 0.1);

// Corpus BLEU@4: geometric mean of modified 1..4-gram precisions with brevity
// penalty, no smoothing.
double bleu4(const std::vector<std::vector<std::string>>& hypotheses,
             const std::vector<std::vector<std::vector<std::string>>>& references);
double bleu4_single(const std::vector<std::string>& hyp,
                    const std::vector<std::vector<std::string>>& refs);

struct EvalReport {
  double det_ap50 = 0.0;
  double det_map = 0.0;
  double seg_ap50 = 0.0;
  double kpt_pck = 0.0;
  double caption_bleu4 = 0.0;
  int images = 0;

  std::string to_json() const;
};

}  // namespace mad
