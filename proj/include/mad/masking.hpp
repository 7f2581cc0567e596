#pragma once

#include <functional>
#include <vector>

#include "mad/codec.hpp"

namespace mad {

struct MaskedView {
  TaskKind task = TaskKind::Detection;
  std::vector<int> input;            // prompt + body with MASK substitutions
  std::vector<int> target;           // original body
  std::vector<int> mask_positions;   // body positions, sorted
  std::vector<bool> supervise;       // per body position
  int prompt_len = 0;
  int n_masked = 0;
};

// round-half-up of ratio * len, clamped to [1, len].
int masked_count(int body_len, double ratio);

MaskedView mask_fully(const TaskSequence& seq, const Vocab& vocab);

// Exactly masked_count(len, ratio) positions chosen uniformly without
// replacement. forced positions (e.g. the caption augmentation position) are
// always included in the mask set.
MaskedView mask_partial(const TaskSequence& seq, double ratio, const Vocab& vocab, Rng& rng,
                        const std::vector<int>& forced = {});

// Uniform without-replacement mask position sample over a predicted body.
std::vector<int> remask(int body_len, double ratio, Rng& rng);

struct RefinementSchedule {
  std::vector<double> ratios;  // per refinement stage, each in (0, 1]
  int stages() const { return static_cast<int>(ratios.size()); }
};

// Maps a full input sequence (prompt + body) to per-body-position probability
// rows (body_len x vocab_size).
using DecodeFn = std::function<std::vector<std::vector<double>>(const std::vector<int>&)>;

struct RefineResult {
  std::vector<int> tokens;                       // final body tokens
  std::vector<std::vector<double>> probs;        // per-position accumulator
  int forward_passes = 0;                        // always 1 + K
};

// Masked inference: decode the fully masked sequence, then K re-mask/decode
// stages; each position's accumulator is the arithmetic mean of all
// distributions observed at that position while masked; tokens are the
// per-position argmax of the accumulator.
RefineResult ensemble_refine(const DecodeFn& decode, const std::vector<int>& prompt,
                             int body_len, const Vocab& vocab,
                             const RefinementSchedule& schedule, Rng& rng);

}  // namespace mad
