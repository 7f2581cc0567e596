#include "mad/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mad {

int masked_count(int body_len, double ratio) {
  int n = static_cast<int>(std::floor(ratio * body_len + 0.5));
  return std::clamp(n, 1, body_len);
}

namespace {

MaskedView view_from(const TaskSequence& seq, std::vector<int> mask_positions,
                     const Vocab& vocab) {
  MaskedView v;
  v.task = seq.task;
  v.target = seq.body;
  v.supervise = seq.supervise;
  v.prompt_len = static_cast<int>(seq.prompt.size());
  v.input = seq.prompt;
  v.input.insert(v.input.end(), seq.body.begin(), seq.body.end());
  std::sort(mask_positions.begin(), mask_positions.end());
  for (int p : mask_positions) v.input[v.prompt_len + p] = vocab.mask();
  v.mask_positions = std::move(mask_positions);
  v.n_masked = static_cast<int>(v.mask_positions.size());
  return v;
}

}  // namespace

MaskedView mask_fully(const TaskSequence& seq, const Vocab& vocab) {
  std::vector<int> all(seq.body.size());
  std::iota(all.begin(), all.end(), 0);
  return view_from(seq, std::move(all), vocab);
}

std::vector<int> remask(int body_len, double ratio, Rng& rng) {
  const int want = masked_count(body_len, ratio);
  std::vector<int> idx(body_len);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(want);
  std::sort(idx.begin(), idx.end());
  return idx;
}

MaskedView mask_partial(const TaskSequence& seq, double ratio, const Vocab& vocab, Rng& rng,
                        const std::vector<int>& forced) {
  const int len = static_cast<int>(seq.body.size());
  const int want = masked_count(len, ratio);
  std::vector<int> positions = forced;
  std::sort(positions.begin(), positions.end());
  positions.erase(std::unique(positions.begin(), positions.end()), positions.end());
  for (int p : positions)
    if (p < 0 || p >= len) throw std::out_of_range("forced mask position out of range");

  std::vector<int> rest;
  for (int i = 0; i < len; ++i)
    if (!std::binary_search(positions.begin(), positions.end(), i)) rest.push_back(i);
  std::shuffle(rest.begin(), rest.end(), rng);
  for (int i = 0; static_cast<int>(positions.size()) < want && i < static_cast<int>(rest.size());
       ++i)
    positions.push_back(rest[i]);
  return view_from(seq, std::move(positions), vocab);
}

RefineResult ensemble_refine(const DecodeFn& decode, const std::vector<int>& prompt,
                             int body_len, const Vocab& vocab,
                             const RefinementSchedule& schedule, Rng& rng) {
  RefineResult out;
  std::vector<int> input = prompt;
  input.resize(prompt.size() + body_len, vocab.mask());

  // Per-position running mean over the stages where the position was masked.
  std::vector<std::vector<double>> sum(body_len);
  std::vector<int> count(body_len, 0);

  auto argmax = [](const std::vector<double>& row) {
    return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  };

  auto run_stage = [&](const std::vector<int>& masked_positions) {
    std::vector<std::vector<double>> probs = decode(input);
    ++out.forward_passes;
    if (static_cast<int>(probs.size()) != body_len)
      throw std::runtime_error("decode returned wrong row count");
    for (int p : masked_positions) {
      if (sum[p].empty()) sum[p].assign(probs[p].size(), 0.0);
      for (size_t j = 0; j < probs[p].size(); ++j) sum[p][j] += probs[p][j];
      ++count[p];
    }
  };

  std::vector<int> all(body_len);
  std::iota(all.begin(), all.end(), 0);
  run_stage(all);

  out.probs.resize(body_len);
  auto refresh_tokens = [&]() {
    out.tokens.resize(body_len);
    for (int p = 0; p < body_len; ++p) {
      out.probs[p] = sum[p];
      for (double& x : out.probs[p]) x /= count[p];
      out.tokens[p] = argmax(out.probs[p]);
      input[prompt.size() + p] = out.tokens[p];
    }
  };
  refresh_tokens();

  for (double ratio : schedule.ratios) {
    std::vector<int> positions = remask(body_len, ratio, rng);
    for (int p : positions) input[prompt.size() + p] = vocab.mask();
    run_stage(positions);
    refresh_tokens();
  }
  return out;
}

}  // namespace mad
