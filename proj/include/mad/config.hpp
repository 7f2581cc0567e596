#pragma once

#include <string>

#include "mad/bench.hpp"
#include "mad/harness.hpp"
#include "mad/training.hpp"

namespace mad {

// Everything the CLI needs, loadable from a flat key=value file. Keys mirror
// the field names below (e.g. "model.embed_dim=128"); unknown keys are errors.
struct AppConfig {
  ShapesWorldConfig world;
  CodecConfig codec;
  ModelConfig model;
  TrainConfig train;
  InferenceConfig infer;
  BenchConfig bench;
  int num_bins = 500;
  int train_images = 64;
  int val_images = 16;
  std::string data_dir = "data";
  std::string checkpoint = "model.ckpt";

  // Re-derives dependent model fields (vocab_size, max_seq_len, image size)
  // from the world/codec settings.
  void finalize(const Vocab& vocab);
};

VocabSpec default_vocab_spec(int num_bins = 500);

AppConfig load_config(const std::string& path);               // throws with line info
void apply_config_line(AppConfig& cfg, const std::string& line, int lineno);

}  // namespace mad
