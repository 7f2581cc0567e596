#pragma once

#include <array>
#include <vector>

#include "mad/vocab.hpp"

namespace mad {

struct CostMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;  // row-major

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
};

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (row, col)
  double total_cost = 0.0;
};

// Minimum-cost one-to-one assignment of min(rows, cols) pairs.
// Rectangular matrices are padded to square internally; pad pairs discarded.
Assignment hungarian(const CostMatrix& cost);

struct MatchWeights {
  double lambda_cls = 2.0;
  double lambda_box = 5.0;
};

struct SlotPrediction {
  std::array<double, 4> box;             // dequantized, normalized
  std::vector<double> class_probs;       // over num_classes + 1 (noise last)
};

struct GtObject {
  std::array<double, 4> box;  // normalized (x_min, y_min, x_max, y_max)
  int class_id = 0;
};

// lambda_cls * (1 - p(gt class)) + lambda_box * mean |delta coord|.
double detection_cost(const SlotPrediction& slot, const GtObject& gt,
                      const MatchWeights& w = {});

struct DetectionTargets {
  std::vector<int> target;          // 5N tokens
  std::vector<bool> supervise;      // 5N flags
  std::vector<int> matched_slot;    // per gt, assigned slot index
};

// Hungarian-matched reconstruction targets for a detection sequence.
// Matched slots get the quantized gt box + class, fully supervised; unmatched
// slots get the noise class at the class position only.
DetectionTargets detection_targets(const std::vector<SlotPrediction>& slots,
                                   const std::vector<GtObject>& gts,
                                   const Vocab& vocab,
                                   const MatchWeights& w = {});

// argmin over references of total token NLL under per-position distributions.
// probs: body_len x vocab_size (row-major), ties broken by lowest index.
int caption_target(const std::vector<std::vector<double>>& probs,
                   const std::vector<std::vector<int>>& references);

}  // namespace mad
