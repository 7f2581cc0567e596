#pragma once

#include "mad/model.hpp"

namespace mad {

// Plain (no-tape) forward passes for inference. Numerically identical to the
// Forward tape path; test_model asserts parity.

nn::Mat infer_encode_image(const Model& m, const Image& img);

// Last-layer logits, len x vocab.
nn::Mat infer_decode_logits(const Model& m, const nn::Mat& memory,
                            const std::vector<int>& tokens, bool causal);

// Per-layer self-attention KV cache; grows one position per fed token.
struct KVCache {
  std::vector<nn::Mat> k, v;  // per decoder layer, capacity x embed_dim
  int len = 0;

  KVCache(const Model& m, int capacity);
};

// Feed `token` at position cache.len; returns the logits row for that position.
Eigen::RowVectorXd infer_ar_step(const Model& m, const nn::Mat& memory, KVCache& cache,
                                 int token);

struct ArResult {
  std::vector<int> body;
  int decoder_passes = 0;
};

// Greedy fixed-length generation of body_len tokens from [start, prompt...].
// argmax restricted to `filter`; no early stop. With the cache, the prompt is
// prefilled in one batched pass, so decoder_passes == body_len either way.
ArResult ar_generate(const Model& m, const nn::Mat& memory, int start_token,
                     const std::vector<int>& prompt, int body_len,
                     const std::vector<int>& filter, bool use_cache = true);

// Full-vocab probability rows with softmax restricted to `filter` ids
// (all other entries zero).
std::vector<std::vector<double>> filtered_probs(const nn::Mat& logits,
                                                const std::vector<int>& filter,
                                                int body_offset = 0);

}  // namespace mad
