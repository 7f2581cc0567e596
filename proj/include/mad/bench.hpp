#pragma once

#include <string>

#include "mad/pipeline.hpp"

namespace mad {

struct BenchConfig {
  int warmup = 1;
  int repeats = 5;
  int refine_stages = 0;          // K for the MAD arm
  double refine_ratio = 0.5;
  uint64_t seed = 0;
};

struct BenchArm {
  std::string name;
  double mean_ms = 0.0;
  double median_ms = 0.0;
  int decoder_passes = 0;
};

struct BenchReport {
  BenchArm mad;
  BenchArm ar;
  double speedup = 0.0;  // ar.mean / mad.mean

  std::string to_csv() const;
};

// Times one detection decode (body length 5N) per repeat, MAD masked inference
// vs KV-cached AR generation, on the same encoded image; warmup excluded.
BenchReport benchmark_decode(const Model& m, const Vocab& vocab, const Image& image,
                             const BenchConfig& cfg);

}  // namespace mad
