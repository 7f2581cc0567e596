#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "mad/harness.hpp"
#include "mad/pipeline.hpp"

using namespace mad;

TEST_CASE("scene generation invariants") {
  ShapesWorldConfig cfg;
  cfg.image_width = 96;
  cfg.image_height = 96;
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    DatasetRecord rec = generate_scene(cfg, rng);
    CHECK(rec.image.width == 96);
    CHECK(rec.image.rgb.size() == 96u * 96u * 3u);
    rec.ann.validate(static_cast<int>(shapes_world_class_names().size()));
    CHECK(rec.ann.instances.size() >= 1);
    CHECK(rec.ann.instances.size() <= 8);
    REQUIRE(rec.ann.captions.size() == 1);
    for (const auto& w : rec.ann.captions[0]) {
      bool known = false;
      for (const auto& vw : shapes_world_words()) known |= (vw == w);
      CHECK(known);
    }
    for (const auto& inst : rec.ann.instances) {
      CHECK(inst.bitmask.width > 0);
      // stickmen carry keypoints, others none
      CHECK((inst.class_id == kStickman) == inst.keypoints.has_value());
      if (inst.keypoints) CHECK(inst.keypoints->size() == 5);
      // mask has at least one foreground bit
      int fg = 0;
      for (uint8_t b : inst.bitmask.data) fg += b;
      CHECK(fg > 0);
    }
  }
}

TEST_CASE("dataset split counts and determinism") {
  ShapesWorldConfig cfg;
  cfg.image_width = 64;
  cfg.image_height = 64;
  auto a = generate_dataset(cfg, 5, 3, 7);
  auto b = generate_dataset(cfg, 5, 3, 7);
  auto c = generate_dataset(cfg, 5, 3, 8);
  REQUIRE(a.size() == 8);
  int train = 0;
  for (const auto& r : a) train += r.split == "train";
  CHECK(train == 5);
  CHECK(a[0].image.rgb == b[0].image.rgb);
  CHECK(a[0].image.rgb != c[0].image.rgb);
}

TEST_CASE("png round trip") {
  ShapesWorldConfig cfg;
  cfg.image_width = 48;
  cfg.image_height = 32;
  Rng rng(3);
  DatasetRecord rec = generate_scene(cfg, rng);
  const std::string path = std::filesystem::temp_directory_path() / "mad_png_test.png";
  write_png(path, rec.image);
  Image back = read_png(path);
  std::remove(path.c_str());
  REQUIRE(back.width == 48);
  REQUIRE(back.height == 32);
  // 8-bit quantization error only
  double worst = 0.0;
  for (size_t i = 0; i < back.rgb.size(); ++i)
    worst = std::max(worst, std::abs(back.rgb[i] - rec.image.rgb[i]));
  CHECK(worst <= 0.5 / 255.0 + 1e-9);
}

TEST_CASE("dataset save/load round trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "mad_ds_test";
  fs::remove_all(dir);
  ShapesWorldConfig cfg;
  cfg.image_width = 64;
  cfg.image_height = 64;
  auto records = generate_dataset(cfg, 2, 1, 11);
  save_dataset(dir.string(), records);
  LoadReport rep = load_dataset(dir.string());
  CHECK(rep.errors.empty());
  REQUIRE(rep.records.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(rep.records[i].split == records[i].split);
    REQUIRE(rep.records[i].ann.instances.size() == records[i].ann.instances.size());
    for (size_t j = 0; j < records[i].ann.instances.size(); ++j) {
      const auto& got = rep.records[i].ann.instances[j];
      const auto& want = records[i].ann.instances[j];
      CHECK(got.class_id == want.class_id);
      for (int k = 0; k < 4; ++k)
        CHECK(got.box[k] == doctest::Approx(want.box[k]).epsilon(1e-6));
      CHECK(got.bitmask.data == want.bitmask.data);
      CHECK(got.keypoints.has_value() == want.keypoints.has_value());
    }
    CHECK(rep.records[i].ann.captions == records[i].ann.captions);
  }
  fs::remove_all(dir);
}

TEST_CASE("corrupt dataset reports itemized errors") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "mad_ds_bad";
  fs::remove_all(dir);
  ShapesWorldConfig cfg;
  cfg.image_width = 64;
  cfg.image_height = 64;
  save_dataset(dir.string(), generate_dataset(cfg, 1, 1, 2));
  // break one referenced image
  fs::remove(dir / "img_000001.png");
  CHECK_THROWS(load_dataset(dir.string(), false));
  LoadReport partial = load_dataset(dir.string(), true);
  CHECK(partial.records.size() == 1);
  CHECK_FALSE(partial.errors.empty());
  bool mentions = false;
  for (const auto& e : partial.errors) mentions |= e.find("img_000001") != std::string::npos;
  CHECK(mentions);
  fs::remove_all(dir);
}

TEST_CASE("box iou") {
  CHECK(box_iou({0, 0, 1, 1}, {0, 0, 1, 1}) == doctest::Approx(1.0));
  CHECK(box_iou({0, 0, 1, 1}, {2, 2, 3, 3}) == 0.0);
  CHECK(box_iou({0, 0, 2, 2}, {1, 1, 3, 3}) == doctest::Approx(1.0 / 7.0));
}

TEST_CASE("detection AP hand-worked oracle") {
  // one image, two gts of class 0; three predictions sorted by score:
  // hit, miss, hit -> precision envelope gives AP = 1*0.5 + (2/3)*0.5
  std::vector<std::pair<int, GtObject>> gts = {
      {0, {{0.0, 0.0, 0.2, 0.2}, 0}},
      {0, {{0.5, 0.5, 0.7, 0.7}, 0}},
  };
  std::vector<DetectionPred> preds = {
      {0, {{0.0, 0.0, 0.2, 0.2}, 0, 0.9}},
      {0, {{0.8, 0.8, 0.9, 0.9}, 0, 0.8}},
      {0, {{0.5, 0.5, 0.7, 0.7}, 0, 0.7}},
  };
  CHECK(eval_detection_ap(preds, gts, 0.5) == doctest::Approx(0.5 + 2.0 / 3.0 * 0.5));
  // perfect predictions
  std::vector<DetectionPred> perfect = {
      {0, {{0.0, 0.0, 0.2, 0.2}, 0, 1.0}},
      {0, {{0.5, 0.5, 0.7, 0.7}, 0, 1.0}},
  };
  CHECK(eval_detection_ap(perfect, gts, 0.5) == doctest::Approx(1.0));
  // wrong classes never match
  std::vector<DetectionPred> wrong = {
      {0, {{0.0, 0.0, 0.2, 0.2}, 1, 1.0}},
  };
  CHECK(eval_detection_ap(wrong, gts, 0.5) == doctest::Approx(0.0));
  CHECK(eval_detection_map(perfect, gts) == doctest::Approx(1.0));
}

TEST_CASE("pck counts visible keypoints within alpha * box size") {
  InstanceGt inst;
  inst.box = {0.0, 0.0, 0.5, 0.5};
  inst.class_id = kStickman;
  inst.bitmask = {1, 1, {1}};
  inst.keypoints = std::vector<KeypointGt>{{0.1, 0.1, true}, {0.4, 0.4, true}, {0.0, 0.0, false}};
  std::vector<InstanceRef> gts = {{0, &inst}};
  KeypointPred pred;
  pred.image_id = 0;
  pred.box = inst.box;
  pred.keypoints = {{0.1, 0.1, 1.0}, {0.3, 0.3, 1.0}, {0.9, 0.9, 0.0}};
  // alpha 0.1 -> threshold 0.05; kp0 exact hit, kp1 off by 0.1*sqrt2 miss,
  // kp2 invisible (ignored)
  CHECK(eval_pck({pred}, gts, 0.1) == doctest::Approx(0.5));
  CHECK(eval_pck({}, gts, 0.1) == doctest::Approx(0.0));
}

TEST_CASE("segmentation AP with pasted masks") {
  InstanceGt inst;
  inst.box = {0.25, 0.25, 0.75, 0.75};
  inst.class_id = 0;
  inst.bitmask.width = 2;
  inst.bitmask.height = 2;
  inst.bitmask.data = {1, 1, 1, 1};
  std::vector<InstanceRef> gts = {{0, &inst}};
  MaskPred good{0, inst.bitmask, inst.box, 0, 0.9};
  CHECK(eval_segmentation_ap({good}, gts, 64, 64, 0.5) == doctest::Approx(1.0));
  MaskPred shifted{0, inst.bitmask, {0.0, 0.0, 0.2, 0.2}, 0, 0.9};
  CHECK(eval_segmentation_ap({shifted}, gts, 64, 64, 0.5) == doctest::Approx(0.0));
}

TEST_CASE("bleu4 pinned oracle: single overlapping 4-gram") {
  // hyp of length 4 with exactly one matching 4-gram ... use identity minus
  // one: classic value 0.2^(1/4) for p=(1, ...) constructed as below.
  // hyp: a b c d ; ref: a b c d e -> p1..p4 = 4/4,3/3,2/2,1/1; BP = e^(1-5/4)
  std::vector<std::string> hyp = {"a", "b", "c", "d"};
  std::vector<std::vector<std::string>> refs = {{"a", "b", "c", "d", "e"}};
  CHECK(bleu4_single(hyp, refs) == doctest::Approx(std::exp(1.0 - 5.0 / 4.0)));

  // hyp "a b c d e", ref "a b c d f": p1=4/5, p2=3/4, p3=2/3, p4=1/2, BP=1
  // -> (4/5 * 3/4 * 2/3 * 1/2)^(1/4) = 0.2^(1/4) ~= 0.6687
  std::vector<std::string> hyp2 = {"a", "b", "c", "d", "e"};
  std::vector<std::vector<std::string>> refs2 = {{"a", "b", "c", "d", "f"}};
  CHECK(bleu4_single(hyp2, refs2) == doctest::Approx(std::pow(0.2, 0.25)).epsilon(1e-9));
  CHECK(std::abs(bleu4_single(hyp2, refs2) - 0.66874) < 1e-4);
}

TEST_CASE("bleu4 corner cases") {
  CHECK(bleu4_single({"a", "b", "c", "d"}, {{"a", "b", "c", "d"}}) == doctest::Approx(1.0));
  CHECK(bleu4_single({"x", "y", "z", "w"}, {{"a", "b", "c", "d"}}) == doctest::Approx(0.0));
  CHECK(bleu4_single({"a", "b"}, {{"a", "b"}}) == doctest::Approx(0.0));  // no 4-grams
  // clipping: repeated unigram cannot exceed its reference count
  std::vector<std::string> rep(8, "a");
  CHECK(bleu4_single(rep, {{"a", "a", "b", "c", "d", "e", "f", "g"}}) < 0.5);
}

TEST_CASE("self-evaluation of ground truth is perfect") {
  ShapesWorldConfig cfg;
  cfg.image_width = 64;
  cfg.image_height = 64;
  auto records = generate_dataset(cfg, 0, 6, 21);
  EvalReport rep = evaluate_ground_truth(records);
  CHECK(rep.images == 6);
  CHECK(rep.det_ap50 == doctest::Approx(1.0));
  CHECK(rep.det_map == doctest::Approx(1.0));
  CHECK(rep.seg_ap50 == doctest::Approx(1.0));
  CHECK(rep.caption_bleu4 == doctest::Approx(1.0));
  // pck of exact keypoints is 1 when any stickman exists, else 0
  bool any_kpt = false;
  for (const auto& r : records)
    for (const auto& i : r.ann.instances) any_kpt |= i.keypoints.has_value();
  if (any_kpt) CHECK(rep.kpt_pck == doctest::Approx(1.0));
}

TEST_CASE("eval report json contains every metric") {
  EvalReport rep;
  rep.det_ap50 = 0.5;
  rep.images = 3;
  const std::string j = rep.to_json();
  CHECK(j.find("det_ap50") != std::string::npos);
  CHECK(j.find("seg_ap50") != std::string::npos);
  CHECK(j.find("kpt_pck") != std::string::npos);
  CHECK(j.find("caption_bleu4") != std::string::npos);
}
