#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "mad/bench.hpp"
#include "mad/checkpoint.hpp"
#include "mad/config.hpp"
#include "mad/pipeline.hpp"

namespace fs = std::filesystem;
using namespace mad;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out;
  uint64_t seed = 0;
  bool seed_set = false;
  std::string mode = "mad";
  std::string refine_ratios;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "key=value config file");
  cmd->add_option("--out", o.out, "output path");
  cmd->add_option("--seed", o.seed, "rng seed")->each([&o](const std::string&) { o.seed_set = true; });
  cmd->add_option("--mode", o.mode, "mad or ar")->check(CLI::IsMember({"mad", "ar"}));
  cmd->add_option("--refine-ratios", o.refine_ratios,
                  "comma-separated detection refinement ratios, e.g. 0.8,0.6,0.4");
}

AppConfig make_config(const CommonOpts& o) {
  AppConfig cfg = o.config_path.empty() ? AppConfig{} : load_config(o.config_path);
  if (o.seed_set) {
    cfg.train.seed = o.seed;
    cfg.infer.seed = o.seed;
    cfg.bench.seed = o.seed;
  }
  if (!o.refine_ratios.empty())
    apply_config_line(cfg, "infer.detection_ratios=" + o.refine_ratios, 0);
  cfg.train.ar_mode = (o.mode == "ar");
  return cfg;
}

Vocab make_vocab(const AppConfig& cfg) { return Vocab::build(default_vocab_spec(cfg.num_bins)); }

std::vector<SceneExample> to_examples(const std::vector<DatasetRecord>& recs,
                                      const std::string& split) {
  std::vector<SceneExample> out;
  for (const auto& r : recs)
    if (r.split == split) out.push_back({r.image, r.ann});
  return out;
}

int cmd_gen_data(const CommonOpts& o) {
  AppConfig cfg = make_config(o);
  const std::string dir = o.out.empty() ? cfg.data_dir : o.out;
  auto records = generate_dataset(cfg.world, cfg.train_images, cfg.val_images,
                                  o.seed_set ? o.seed : cfg.train.seed);
  save_dataset(dir, records);
  std::cout << "wrote " << records.size() << " scenes (" << cfg.train_images << " train, "
            << cfg.val_images << " val) to " << dir << "\n";
  return 0;
}

int cmd_train(const CommonOpts& o) {
  AppConfig cfg = make_config(o);
  Vocab vocab = make_vocab(cfg);
  cfg.finalize(vocab);

  LoadReport loaded = load_dataset(cfg.data_dir);
  auto train_recs = to_examples(loaded.records, "train");
  if (train_recs.empty()) {
    std::cerr << "error: no training scenes in " << cfg.data_dir << " (run gen-data first)\n";
    return 2;
  }

  Model model(cfg.model, cfg.codec, cfg.train.seed);
  Trainer trainer(model, vocab, cfg.train);
  Rng batch_rng(cfg.train.seed + 1);
  for (int step = 0; step < cfg.train.total_steps; ++step) {
    std::vector<SceneExample> batch;
    for (int b = 0; b < cfg.train.batch_size; ++b)
      batch.push_back(train_recs[batch_rng() % train_recs.size()]);
    LossBreakdown lb = trainer.step(batch);
    if ((step + 1) % 10 == 0 || step == 0)
      std::cout << "step " << (step + 1) << "/" << cfg.train.total_steps << " loss " << lb.total
                << (lb.finite ? "" : " (non-finite, skipped)") << "\n";
  }
  const std::string ckpt = o.out.empty() ? cfg.checkpoint : o.out;
  save_checkpoint(ckpt, model, vocab);
  std::cout << "saved checkpoint to " << ckpt << "\n";
  return 0;
}

int cmd_eval(const CommonOpts& o) {
  AppConfig cfg = make_config(o);
  Vocab vocab = make_vocab(cfg);
  cfg.finalize(vocab);

  LoadReport loaded = load_dataset(cfg.data_dir);
  std::vector<DatasetRecord> val;
  for (auto& r : loaded.records)
    if (r.split == "val") val.push_back(std::move(r));
  if (val.empty()) {
    std::cerr << "error: no val scenes in " << cfg.data_dir << "\n";
    return 2;
  }

  Model model(cfg.model, cfg.codec, cfg.train.seed);
  load_checkpoint(cfg.checkpoint, model, vocab);
  EvalReport rep = evaluate(model, vocab, val, cfg.infer, cfg.train.ar_mode);
  const std::string json = rep.to_json();
  if (!o.out.empty()) {
    std::ofstream(o.out) << json << "\n";
    std::cout << "wrote " << o.out << "\n";
  }
  std::cout << json << "\n";
  return 0;
}

int cmd_bench(const CommonOpts& o) {
  AppConfig cfg = make_config(o);
  Vocab vocab = make_vocab(cfg);
  cfg.finalize(vocab);

  Model model(cfg.model, cfg.codec, cfg.bench.seed);
  Rng rng(cfg.bench.seed);
  DatasetRecord rec = generate_scene(cfg.world, rng);
  if (!o.refine_ratios.empty())
    cfg.bench.refine_stages = static_cast<int>(cfg.infer.detection.ratios.size());
  BenchReport rep = benchmark_decode(model, vocab, rec.image, cfg.bench);
  const std::string csv = rep.to_csv();
  if (!o.out.empty()) {
    std::ofstream(o.out) << csv;
    std::cout << "wrote " << o.out << "\n";
  }
  std::cout << csv;
  std::cout << "speedup (ar mean / mad mean): " << rep.speedup << "x\n";
  return 0;
}

int cmd_tokenize(const CommonOpts& o) {
  AppConfig cfg = make_config(o);
  Vocab vocab = make_vocab(cfg);

  std::vector<DatasetRecord> records;
  if (fs::exists(fs::path(cfg.data_dir) / "annotations.json")) {
    records = load_dataset(cfg.data_dir).records;
  } else {
    Rng rng(o.seed_set ? o.seed : 0);
    for (int i = 0; i < 8; ++i) records.push_back(generate_scene(cfg.world, rng));
  }

  Rng rng(o.seed_set ? o.seed : 0);
  RoundTripReport total;
  for (const auto& rec : records) {
    RoundTripReport r = tokenize_round_trip(rec.ann, cfg.codec, vocab, rng);
    total.detection_box_violations += r.detection_box_violations;
    total.segmentation_mismatches += r.segmentation_mismatches;
    total.keypoint_mismatches += r.keypoint_mismatches;
    total.caption_mismatches += r.caption_mismatches;
  }
  std::cout << "scenes: " << records.size() << "\n"
            << "detection_box_violations: " << total.detection_box_violations << "\n"
            << "segmentation_mismatches: " << total.segmentation_mismatches << "\n"
            << "keypoint_mismatches: " << total.keypoint_mismatches << "\n"
            << "caption_mismatches: " << total.caption_mismatches << "\n"
            << "round_trip: " << (total.clean() ? "clean" : "FAILED") << "\n";
  return total.clean() ? 0 : 1;
}

int cmd_gradcheck(const CommonOpts& o) {
  AppConfig cfg = make_config(o);
  // Tiny model: finite differences over the full forward are slow.
  cfg.world.image_width = cfg.world.image_height = 64;
  cfg.codec.num_slots = 4;
  cfg.codec.mask_side = 4;
  cfg.codec.caption_len = 6;
  cfg.model.embed_dim = 32;
  cfg.model.num_heads = 2;
  cfg.model.ffn_dim = 64;
  cfg.model.enc_layers = 1;
  cfg.model.dec_layers = 1;
  cfg.model.stem_c1 = 8;
  cfg.model.stem_c2 = 16;
  Vocab vocab = make_vocab(cfg);
  cfg.finalize(vocab);

  const uint64_t seed = o.seed_set ? o.seed : 0;
  Model model(cfg.model, cfg.codec, seed);
  Rng rng(seed);
  DatasetRecord rec = generate_scene(cfg.world, rng);

  auto run = [&](bool backward) {
    nn::Tape tape;
    Forward fwd(model, tape);
    int memory = fwd.encode_image(rec.image);
    Rng vrng(seed + 7);
    TaskSequence seq = encode_detection(rec.ann, cfg.codec, vocab, vrng);
    MaskedView view = mask_partial(seq, cfg.train.train_mask_ratio, vocab, vrng);
    auto layers = fwd.decode(memory, view.input, false);
    int node = masked_ce_node(tape, layers.back(), view.target, view.mask_positions,
                              view.supervise, vocab.task_filter(TaskKind::Detection), 1.0,
                              view.prompt_len);
    const double value = tape.val(node)(0, 0);
    if (backward) tape.backward(node);
    return value;
  };

  auto params = model.param_ptrs();
  nn::AdamW::zero_grad(params);
  run(true);  // analytic gradients into the params
  GradCheckReport rep = grad_check(model, [&]() { return run(false); }, 2, 1e-5, rng);
  std::cout << "max_rel_error: " << rep.max_rel_error << " (worst: " << rep.worst_param << ")\n";
  const bool ok = rep.max_rel_error < 1e-4;
  std::cout << (ok ? "gradcheck PASS" : "gradcheck FAIL") << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"masked autodecoding multi-task vision toolkit"};
  app.require_subcommand(1);

  CommonOpts opts;
  int rc = 0;
  auto wire = [&](const char* name, const char* desc, int (*fn)(const CommonOpts&)) {
    CLI::App* cmd = app.add_subcommand(name, desc);
    add_common(cmd, opts);
    cmd->callback([&rc, &opts, fn]() { rc = fn(opts); });
    return cmd;
  };
  wire("gen-data", "generate a synthetic shapes dataset", cmd_gen_data);
  wire("train", "train a model on the dataset", cmd_train);
  wire("eval", "evaluate a checkpoint on the val split", cmd_eval);
  wire("bench", "time masked decoding vs autoregressive decoding", cmd_bench);
  wire("tokenize", "round-trip annotations through the codec", cmd_tokenize);
  wire("gradcheck", "finite-difference check of the training gradients", cmd_gradcheck);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return rc;
}
