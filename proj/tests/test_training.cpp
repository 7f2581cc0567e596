#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "mad/harness.hpp"
#include "mad/training.hpp"

using namespace mad;

namespace {

CodecConfig tiny_codec() {
  CodecConfig c;
  c.num_slots = 4;
  c.mask_side = 4;
  c.num_keypoints = 5;  // matches the shapes-world stickman
  c.caption_len = 8;
  return c;
}

ModelConfig tiny_model(const CodecConfig& codec, const Vocab& vocab) {
  ModelConfig m;
  m.embed_dim = 32;
  m.num_heads = 2;
  m.ffn_dim = 64;
  m.enc_layers = 1;
  m.dec_layers = 2;
  m.image_width = 64;
  m.image_height = 64;
  m.stem_c1 = 8;
  m.stem_c2 = 16;
  m.vocab_size = vocab.total_size();
  m.max_seq_len = ModelConfig::seq_len_for(codec);
  return m;
}

SceneExample tiny_scene(uint64_t seed) {
  ShapesWorldConfig w;
  w.image_width = 64;
  w.image_height = 64;
  w.max_shapes = 2;
  Rng rng(seed);
  DatasetRecord rec = generate_scene(w, rng);
  return {rec.image, rec.ann};
}

Vocab world_vocab(int bins = 16) {
  VocabSpec s;
  s.num_bins = bins;
  s.num_classes = static_cast<int>(shapes_world_class_names().size());
  s.words = shapes_world_words();
  return Vocab::build(s);
}

}  // namespace

TEST_CASE("masked_ce_node: weights are W_t / N_m on supervised masked positions") {
  Vocab v = world_vocab();
  nn::Tape tape;
  const int len = 6;
  nn::Mat logits = nn::Mat::Random(len + 1, v.total_size());  // prompt row + body
  std::vector<int> target(len, v.pad());
  std::vector<bool> supervise(len, true);
  supervise[2] = false;
  std::vector<int> positions = {1, 2, 4};  // one unsupervised
  auto filter = v.task_filter(TaskKind::Captioning);

  int n_masked = 0;
  int node = masked_ce_node(tape, tape.input(logits), target, positions, supervise, filter, 0.3,
                            1, &n_masked);
  CHECK(n_masked == 2);

  // oracle: CE over positions 1 and 4 only, weight 0.3 / 2 each
  auto ce = [&](int body_pos) {
    double denom = 0.0;
    for (int id : filter) denom += std::exp(logits(1 + body_pos, id));
    return -std::log(std::exp(logits(1 + body_pos, target[body_pos])) / denom);
  };
  const double expect = 0.3 / 2.0 * (ce(1) + ce(4));
  CHECK(tape.val(node)(0, 0) == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("masked-only gradients: unmasked and unsupervised positions get zero") {
  Vocab v = world_vocab();
  std::mt19937_64 seeds(99);
  for (int batch = 0; batch < 100; ++batch) {
    const int len = 8;
    nn::Tape tape;
    nn::Param logits("l", nn::Mat::Random(len, v.total_size()));
    Rng rng(seeds());
    std::vector<int> target(len);
    auto filter = v.task_filter(TaskKind::Detection);
    for (auto& t : target) t = filter[rng() % filter.size()];
    std::vector<bool> supervise(len, true);
    supervise[rng() % len] = false;
    std::vector<int> positions = remask(len, 0.5, rng);

    int node = masked_ce_node(tape, tape.param(logits), target, positions, supervise, filter,
                              1.5, 0);
    tape.backward(node);

    std::vector<bool> masked(len, false);
    for (int p : positions) masked[p] = true;
    for (int i = 0; i < len; ++i) {
      const double g = logits.grad.row(i).cwiseAbs().maxCoeff();
      if (!masked[i] || !supervise[i])
        CHECK(g == 0.0);  // exactly zero, not just small
      else
        CHECK(g > 0.0);
    }
  }
}

TEST_CASE("masked_ce_node with nothing supervised returns a zero node") {
  Vocab v = world_vocab();
  nn::Tape tape;
  nn::Mat logits = nn::Mat::Random(4, v.total_size());
  std::vector<int> target(4, v.pad());
  std::vector<bool> supervise(4, false);
  int n_masked = -1;
  int node = masked_ce_node(tape, tape.input(logits), target, {0, 1}, supervise,
                            v.task_filter(TaskKind::Captioning), 1.0, 0, &n_masked);
  CHECK(n_masked == 0);
  CHECK(tape.val(node)(0, 0) == 0.0);
}

TEST_CASE("train config validation") {
  TrainConfig good;
  good.validate();
  TrainConfig bad = good;
  bad.train_mask_ratio = 1.5;
  CHECK_THROWS(bad.validate());
  TrainConfig neg = good;
  neg.batch_size = 0;
  CHECK_THROWS(neg.validate());
}

TEST_CASE("trainer: one MAD step updates weights and reports finite losses") {
  Vocab v = world_vocab();
  CodecConfig codec = tiny_codec();
  Model m(tiny_model(codec, v), codec, 21);
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.total_steps = 10;
  cfg.seed = 3;
  Trainer tr(m, v, cfg);

  const nn::Mat before = m.p("out.w").val;
  LossBreakdown lb = tr.step({tiny_scene(1), tiny_scene(2)});
  CHECK(lb.finite);
  CHECK(lb.total > 0.0);
  CHECK(lb.per_layer.size() == 2);
  CHECK(lb.per_task.count(TaskKind::Detection) == 1);
  CHECK(lb.per_task.count(TaskKind::Captioning) == 1);
  CHECK(lb.n_masked.at(TaskKind::Detection) > 0);
  CHECK((m.p("out.w").val - before).cwiseAbs().maxCoeff() > 0.0);
  CHECK(tr.steps_taken() == 1);
  // one encoder pass per image per step
  CHECK(tr.encoder_passes() == 2);
}

TEST_CASE("trainer: AR mode runs and supervises every task") {
  Vocab v = world_vocab();
  CodecConfig codec = tiny_codec();
  Model m(tiny_model(codec, v), codec, 22);
  TrainConfig cfg;
  cfg.batch_size = 1;
  cfg.total_steps = 10;
  cfg.ar_mode = true;
  Trainer tr(m, v, cfg);
  LossBreakdown lb = tr.step({tiny_scene(3)});
  CHECK(lb.finite);
  CHECK(lb.total > 0.0);
  CHECK(lb.per_task.count(TaskKind::Detection) == 1);
  CHECK(lb.per_task.count(TaskKind::Segmentation) == 1);
  CHECK(lb.per_task.count(TaskKind::Captioning) == 1);
}

TEST_CASE("trainer determinism: identical seeds give identical weights") {
  Vocab v = world_vocab();
  CodecConfig codec = tiny_codec();
  auto run = [&](uint64_t seed) {
    Model m(tiny_model(codec, v), codec, seed);
    TrainConfig cfg;
    cfg.batch_size = 1;
    cfg.total_steps = 3;
    cfg.seed = seed;
    Trainer tr(m, v, cfg);
    for (int s = 0; s < 3; ++s) tr.step({tiny_scene(10 + s)});
    return m.p("dec0.cross.wq").val;
  };
  nn::Mat a = run(5), b = run(5), c = run(6);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);  // bit-exact
  CHECK((a - c).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("overfit smoke: loss drops on a single repeated scene") {
  Vocab v = world_vocab();
  CodecConfig codec = tiny_codec();
  Model m(tiny_model(codec, v), codec, 33);
  TrainConfig cfg;
  cfg.batch_size = 1;
  cfg.total_steps = 60;
  cfg.opt.lr = 3e-4;
  cfg.seed = 8;
  Trainer tr(m, v, cfg);
  SceneExample ex = tiny_scene(42);
  double first = 0.0, sum_early = 0.0, sum_late = 0.0;
  for (int s = 0; s < 60; ++s) {
    LossBreakdown lb = tr.step({ex});
    REQUIRE(lb.finite);
    if (s == 0) first = lb.total;
    if (s < 10) sum_early += lb.total;
    if (s >= 50) sum_late += lb.total;
  }
  CHECK(sum_late < sum_early);
  CHECK(sum_late / 10.0 < first);
}
