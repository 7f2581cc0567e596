#pragma once

#include <map>

#include "mad/masking.hpp"
#include "mad/matching.hpp"
#include "mad/model.hpp"

namespace mad {

struct TrainConfig {
  std::map<TaskKind, double> task_weights = {
      {TaskKind::Detection, 1.5},
      {TaskKind::Segmentation, 2.7},
      {TaskKind::Keypoint, 0.5},
      {TaskKind::Captioning, 0.3},
  };
  double train_mask_ratio = 0.7;
  nn::AdamWConfig opt;          // lr 1e-4, stem lr 1e-5, wd 1e-4, clip 0.1
  double lr_drop_fraction = 0.8;  // x0.1 after this fraction of total steps
  int batch_size = 4;
  int total_steps = 1000;
  uint64_t seed = 0;
  int max_seg_instances = 10;
  int max_kpt_instances = 10;
  bool ar_mode = false;  // train the autoregressive baseline
  MatchWeights match;

  void validate() const;
};

struct LossBreakdown {
  std::map<TaskKind, double> per_task;   // weighted, layer-averaged
  std::vector<double> per_layer;         // summed over tasks/views
  std::map<TaskKind, int> n_masked;
  double total = 0.0;
  bool finite = true;
};

struct SceneExample {
  Image image;
  SceneAnnotation ann;
};

// Builds per-view CE weights: W_t / N_m on supervised masked positions, 0
// elsewhere. N_m counts supervised masked positions; returns 0 node when none.
int masked_ce_node(nn::Tape& tape, int logits, const std::vector<int>& target,
                   const std::vector<int>& mask_positions, const std::vector<bool>& supervise,
                   const std::vector<int>& filter, double task_weight, int body_offset,
                   int* n_masked_out = nullptr);

class Trainer {
 public:
  Trainer(Model& model, const Vocab& vocab, TrainConfig cfg);

  // One optimizer step on a batch of scenes. Returns the loss breakdown; on a
  // non-finite loss the update is skipped and breakdown.finite is false.
  LossBreakdown step(const std::vector<SceneExample>& batch);

  int steps_taken() const { return step_count_; }
  int encoder_passes() const { return encoder_passes_; }
  Rng& rng() { return rng_; }
  const TrainConfig& cfg() const { return cfg_; }

 private:
  Model& model_;
  const Vocab& vocab_;
  TrainConfig cfg_;
  nn::AdamW opt_;
  Rng rng_;
  int step_count_ = 0;
  int encoder_passes_ = 0;

  struct ViewLoss {
    TaskKind task;
    std::vector<int> per_layer_nodes;
    int n_masked = 0;
  };

  void mad_views_for_image(Forward& fwd, int memory, const SceneExample& ex,
                           std::vector<ViewLoss>& out);
  void ar_views_for_image(Forward& fwd, int memory, const SceneExample& ex,
                          std::vector<ViewLoss>& out);
  ViewLoss view_loss(Forward& fwd, int memory, const MaskedView& view,
                     const std::vector<int>& filter, double weight);
  ViewLoss ar_view_loss(Forward& fwd, int memory, const std::vector<int>& prompt,
                        const std::vector<int>& body, const std::vector<bool>& supervise,
                        std::vector<int> filter, double weight);
};

}  // namespace mad
