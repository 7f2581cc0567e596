#include <algorithm>
#include <chrono>
#include <numeric>
#include <sstream>

#include "mad/bench.hpp"

namespace mad {

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

BenchReport benchmark_decode(const Model& m, const Vocab& vocab, const Image& image,
                             const BenchConfig& cfg) {
  using Clock = std::chrono::steady_clock;
  BenchReport rep;
  rep.mad.name = "mad";
  rep.ar.name = "ar";

  const nn::Mat memory = infer_encode_image(m, image);
  const std::vector<int> filter = vocab.task_filter(TaskKind::Detection);
  const std::vector<int> prompt = {vocab.prompt(TaskKind::Detection)};
  const int body_len = body_length(TaskKind::Detection, m.codec());

  RefinementSchedule schedule;
  schedule.ratios.assign(cfg.refine_stages, cfg.refine_ratio);

  Rng rng(cfg.seed);
  auto run_mad = [&](bool record) {
    int passes = 0;
    DecodeFn decode = [&](const std::vector<int>& input) {
      ++passes;
      nn::Mat logits = infer_decode_logits(m, memory, input, false);
      return filtered_probs(logits, filter, 1);
    };
    auto t0 = Clock::now();
    ensemble_refine(decode, prompt, body_len, vocab, schedule, rng);
    auto t1 = Clock::now();
    if (record) rep.mad.decoder_passes = passes;
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
  };
  auto run_ar = [&](bool record) {
    auto t0 = Clock::now();
    ArResult res = ar_generate(m, memory, vocab.mask(), prompt, body_len, filter, true);
    auto t1 = Clock::now();
    if (record) rep.ar.decoder_passes = res.decoder_passes;
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
  };

  for (int i = 0; i < cfg.warmup; ++i) {
    run_mad(false);
    run_ar(false);
  }
  std::vector<double> mad_ms, ar_ms;
  for (int i = 0; i < cfg.repeats; ++i) {
    mad_ms.push_back(run_mad(i == 0));
    ar_ms.push_back(run_ar(i == 0));
  }
  rep.mad.mean_ms = std::accumulate(mad_ms.begin(), mad_ms.end(), 0.0) / mad_ms.size();
  rep.ar.mean_ms = std::accumulate(ar_ms.begin(), ar_ms.end(), 0.0) / ar_ms.size();
  rep.mad.median_ms = median(mad_ms);
  rep.ar.median_ms = median(ar_ms);
  rep.speedup = rep.mad.mean_ms > 0.0 ? rep.ar.mean_ms / rep.mad.mean_ms : 0.0;
  return rep;
}

std::string BenchReport::to_csv() const {
  std::ostringstream os;
  os << "arm,mean_ms,median_ms,decoder_passes\n";
  for (const BenchArm* a : {&mad, &ar})
    os << a->name << "," << a->mean_ms << "," << a->median_ms << "," << a->decoder_passes << "\n";
  os << "speedup," << speedup << ",,\n";
  return os.str();
}

}  // namespace mad
