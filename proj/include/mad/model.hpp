#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "mad/codec.hpp"
#include "mad/nn.hpp"

namespace mad {

struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> rgb;  // row-major, 3 channels per pixel, values in [0,1]

  double at(int x, int y, int c) const {
    return rgb[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
};

struct ModelConfig {
  int embed_dim = 128;
  int num_heads = 4;
  int ffn_dim = 512;
  int enc_layers = 3;
  int dec_layers = 3;
  int max_seq_len = 502;  // longest task sequence + 1 (AR start token)
  int vocab_size = 546;
  int image_width = 256;
  int image_height = 256;
  int stem_c1 = 32;
  int stem_c2 = 64;
  // Patchify strides; product is the stride-32 contract.
  static constexpr int kStride1 = 4, kStride2 = 4, kStride3 = 2;

  void validate() const;
  // Sized so every task sequence (plus the AR start token) fits.
  static int seq_len_for(const CodecConfig& codec);
};

// Named parameter store for the whole network.
class Model {
 public:
  Model(ModelConfig cfg, const CodecConfig& codec, uint64_t seed);

  const ModelConfig& cfg() const { return cfg_; }
  const CodecConfig& codec() const { return codec_; }

  nn::Param& p(const std::string& name);
  const nn::Param& p(const std::string& name) const;
  std::vector<nn::Param*> param_ptrs();
  const std::vector<std::unique_ptr<nn::Param>>& params() const { return params_; }
  int64_t num_weights() const;

 private:
  ModelConfig cfg_;
  CodecConfig codec_;
  std::vector<std::unique_ptr<nn::Param>> params_;
  std::unordered_map<std::string, int> index_;

  nn::Param& add(const std::string& name, int rows, int cols, Rng& rng, bool stem = false,
                 double sigma = 0.02);
};

// Fixed 2D sinusoidal positional encodings for a gh x gw feature grid.
nn::Mat posenc_2d(int gh, int gw, int dim);

// Tape-based (trainable) forward passes. Parameter tape nodes are cached so a
// shared tensor (e.g. the sequence positional encodings) maps to one node.
class Forward {
 public:
  Forward(Model& model, nn::Tape& tape) : m_(model), tape_(tape) {}

  // image -> memory tokens ((H/32 * W/32) x D), one stem+encoder pass.
  int encode_image(const Image& img);

  // Per-decoder-layer logits (los node per layer, each len x vocab).
  std::vector<int> decode(int memory, const std::vector<int>& tokens, bool causal);

  nn::Tape& tape() { return tape_; }
  int param_node(const std::string& name);

 private:
  Model& m_;
  nn::Tape& tape_;
  std::unordered_map<std::string, int> cache_;

  int attention(int q_in, int k_in, int v_in, const std::string& prefix, bool causal);
  int ffn(int x, const std::string& prefix);
  int layernorm(int x, const std::string& prefix);
};

// Finite-difference gradient verification. Evaluates `loss()` (which must
// recompute forward+loss from current parameter values) against the analytic
// gradients already accumulated in the parameters.
struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
};
GradCheckReport grad_check(Model& model, const std::function<double()>& loss,
                           int coords_per_param, double epsilon, Rng& rng);

}  // namespace mad
