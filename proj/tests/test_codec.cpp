#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "mad/codec.hpp"

using namespace mad;

namespace {

Vocab test_vocab() {
  return Vocab::build({20, 3, {"a", "red", "circle", "square", "left", "of"}});
}

CodecConfig small_codec() {
  CodecConfig c;
  c.num_slots = 6;
  c.mask_side = 4;
  c.num_keypoints = 3;
  c.caption_len = 8;
  return c;
}

InstanceGt make_instance(std::array<double, 4> box, int cls) {
  InstanceGt inst;
  inst.box = box;
  inst.class_id = cls;
  inst.bitmask.width = 2;
  inst.bitmask.height = 2;
  inst.bitmask.data = {1, 0, 0, 1};
  return inst;
}

SceneAnnotation make_scene() {
  SceneAnnotation ann;
  ann.width = 64;
  ann.height = 64;
  ann.instances.push_back(make_instance({0.1, 0.2, 0.4, 0.6}, 0));
  ann.instances.push_back(make_instance({0.5, 0.5, 0.9, 0.8}, 2));
  ann.captions.push_back({"a", "red", "circle"});
  return ann;
}

}  // namespace

TEST_CASE("body lengths") {
  CodecConfig c = small_codec();
  CHECK(body_length(TaskKind::Detection, c) == 30);
  CHECK(body_length(TaskKind::Segmentation, c) == 16);
  CHECK(body_length(TaskKind::Keypoint, c) == 9);
  CHECK(body_length(TaskKind::Captioning, c) == 8);
  CodecConfig paper;  // defaults: N=100, M=16, Kpt=5 (shapes world), len 20
  CHECK(body_length(TaskKind::Detection, paper) == 500);
  CHECK(body_length(TaskKind::Segmentation, paper) == 256);
  CHECK(body_length(TaskKind::Captioning, paper) == 20);
}

TEST_CASE("detection encoding fills every slot and injects gt") {
  Vocab v = test_vocab();
  CodecConfig c = small_codec();
  SceneAnnotation ann = make_scene();
  Rng rng(7);
  TaskSequence seq = encode_detection(ann, c, v, rng);
  REQUIRE(seq.body.size() == 30);
  REQUIRE(seq.slot_is_gt.size() == 6);
  CHECK(seq.prompt == std::vector<int>{v.prompt(TaskKind::Detection)});

  int gt_slots = 0;
  for (int s = 0; s < 6; ++s) {
    for (int k = 0; k < 4; ++k) CHECK(v.is_coord(seq.body[s * 5 + k]));
    CHECK(v.is_class(seq.body[s * 5 + 4]));
    // noise slots carry real (non-noise) class labels too
    CHECK(seq.body[s * 5 + 4] != v.noise_class());
    if (seq.slot_is_gt[s]) ++gt_slots;
  }
  CHECK(gt_slots == 2);

  // each gt instance is present verbatim at its slot
  for (const auto& inst : ann.instances) {
    bool found = false;
    for (int s = 0; s < 6 && !found; ++s) {
      if (!seq.slot_is_gt[s]) continue;
      bool same = seq.body[s * 5 + 4] == v.cls(inst.class_id);
      for (int k = 0; k < 4 && same; ++k)
        same = seq.body[s * 5 + k] == v.coord(quantize_coord(inst.box[k], v.num_bins()));
      found = same;
    }
    CHECK(found);
  }
}

TEST_CASE("detection encoding subsamples when gts exceed slots") {
  Vocab v = test_vocab();
  CodecConfig c = small_codec();
  c.num_slots = 2;
  SceneAnnotation ann = make_scene();
  ann.instances.push_back(make_instance({0.2, 0.2, 0.3, 0.3}, 1));
  Rng rng(9);
  TaskSequence seq = encode_detection(ann, c, v, rng);
  int gt_slots = 0;
  for (bool b : seq.slot_is_gt) gt_slots += b;
  CHECK(gt_slots == 2);
}

TEST_CASE("detection encode/decode round trip recovers gt boxes") {
  Vocab v = test_vocab();
  CodecConfig c = small_codec();
  SceneAnnotation ann = make_scene();
  const double tol = 0.5 / v.num_bins() + 1e-12;
  for (uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    TaskSequence seq = encode_detection(ann, c, v, rng);
    DetectionDecode dec = decode_detection(seq.body, {}, v);
    for (const auto& inst : ann.instances) {
      bool found = false;
      for (const auto& b : dec.boxes) {
        if (b.class_id != inst.class_id) continue;
        double err = 0.0;
        for (int k = 0; k < 4; ++k) err = std::max(err, std::abs(b.box[k] - inst.box[k]));
        if (err <= tol) found = true;
      }
      CHECK(found);
    }
  }
}

TEST_CASE("decode_detection drops noise and malformed slots") {
  Vocab v = test_vocab();
  std::vector<int> body = {
      v.coord(1), v.coord(2), v.coord(3),  v.coord(4),  v.noise_class(),   // noise
      v.coord(1), v.coord(2), v.coord(3),  v.coord(4),  v.cls(1),          // good
      v.pad(),    v.coord(2), v.coord(3),  v.coord(4),  v.cls(0),          // bad coord
      v.coord(5), v.coord(6), v.coord(7),  v.coord(8),  v.pad(),           // bad class
  };
  DetectionDecode dec = decode_detection(body, {}, v);
  REQUIRE(dec.boxes.size() == 1);
  CHECK(dec.boxes[0].class_id == 1);
  CHECK(dec.dropped_slots == 2);  // noise slots are skipped, not "dropped"
  CHECK_THROWS(decode_detection({1, 2, 3}, {}, v));
}

TEST_CASE("decode_detection reorders flipped coordinates") {
  Vocab v = test_vocab();
  std::vector<int> body = {v.coord(10), v.coord(12), v.coord(2), v.coord(3), v.cls(0)};
  DetectionDecode dec = decode_detection(body, {}, v);
  REQUIRE(dec.boxes.size() == 1);
  CHECK(dec.boxes[0].box[0] < dec.boxes[0].box[2]);
  CHECK(dec.boxes[0].box[1] < dec.boxes[0].box[3]);
}

TEST_CASE("segmentation round trip at matching resolution") {
  Vocab v = test_vocab();
  CodecConfig c = small_codec();
  InstanceGt inst = make_instance({0.1, 0.1, 0.5, 0.5}, 1);
  inst.bitmask.width = 4;
  inst.bitmask.height = 4;
  inst.bitmask.data = {1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 1, 1};
  TaskSequence seq = encode_segmentation(inst, c, v);
  REQUIRE(seq.body.size() == 16);
  CHECK(seq.prompt.size() == 6);  // task + 4 coords + class
  for (int i = 0; i < 16; ++i) {
    const bool fg = inst.bitmask.data[i] != 0;
    CHECK(seq.body[i] == v.special(fg ? kForeground : kBackground));
  }
  // decode via one-hot distributions
  std::vector<std::vector<double>> onehot(16, std::vector<double>(v.total_size(), 0.0));
  for (int i = 0; i < 16; ++i) onehot[i][seq.body[i]] = 1.0;
  SegmentationDecode dec = decode_segmentation(onehot, c, v);
  for (int i = 0; i < 16; ++i) CHECK(dec.binary.data[i] == inst.bitmask.data[i]);
}

TEST_CASE("segmentation soft decode ratio") {
  Vocab v = test_vocab();
  CodecConfig c = small_codec();
  c.mask_side = 1;
  std::vector<std::vector<double>> p(1, std::vector<double>(v.total_size(), 0.0));
  p[0][v.special(kForeground)] = 0.2;
  p[0][v.special(kBackground)] = 0.6;
  SegmentationDecode dec = decode_segmentation(p, c, v);
  CHECK(dec.soft[0] == doctest::Approx(0.25));
  CHECK(dec.binary.data[0] == 0);
}

TEST_CASE("keypoint encoding: invisible points get random in-box coords") {
  Vocab v = test_vocab();
  CodecConfig c = small_codec();
  InstanceGt inst = make_instance({0.2, 0.2, 0.6, 0.6}, 2);
  inst.keypoints = std::vector<KeypointGt>{
      {0.3, 0.3, true}, {0.5, 0.4, true}, {0.0, 0.0, false}};
  std::set<int> seen_x;
  for (uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    TaskSequence seq = encode_keypoint(inst, c, v, rng);
    REQUIRE(seq.body.size() == 9);
    CHECK(seq.body[2] == v.special(kVisible));
    CHECK(seq.body[5] == v.special(kVisible));
    CHECK(seq.body[8] == v.special(kInvisible));
    CHECK(seq.body[0] == v.coord(quantize_coord(0.3, v.num_bins())));
    // invisible coords stay inside the quantized box
    const int qx = v.classify(seq.body[6]).index;
    const int qy = v.classify(seq.body[7]).index;
    CHECK(qx >= quantize_coord(0.2, v.num_bins()));
    CHECK(qx <= quantize_coord(0.6, v.num_bins()));
    CHECK(qy >= quantize_coord(0.2, v.num_bins()));
    CHECK(qy <= quantize_coord(0.6, v.num_bins()));
    seen_x.insert(qx);
  }
  CHECK(seen_x.size() > 1);  // actually random
}

TEST_CASE("keypoint decode") {
  Vocab v = test_vocab();
  std::vector<int> body = {v.coord(4), v.coord(6), v.special(kVisible),
                           v.coord(1), v.coord(1), v.special(kInvisible)};
  auto dec = decode_keypoint(body, {}, v);
  REQUIRE(dec.size() == 2);
  CHECK(dec[0].x == doctest::Approx(dequantize_coord(4, 20)));
  CHECK(dec[0].visibility == 1.0);
  CHECK(dec[1].visibility == 0.0);

  std::vector<std::vector<double>> probs(6, std::vector<double>(v.total_size(), 0.0));
  probs[2][v.special(kVisible)] = 0.3;
  probs[2][v.special(kInvisible)] = 0.1;
  probs[5][v.special(kVisible)] = 0.5;
  probs[5][v.special(kInvisible)] = 0.5;
  auto soft = decode_keypoint(body, probs, v);
  CHECK(soft[0].visibility == doctest::Approx(0.75));
  CHECK(soft[1].visibility == doctest::Approx(0.5));
}

TEST_CASE("caption encode pads and truncates") {
  Vocab v = test_vocab();
  CodecConfig c = small_codec();
  Rng rng(1);
  TaskSequence seq = encode_caption({"a", "red", "circle"}, c, v, rng);
  REQUIRE(seq.body.size() == 8);
  CHECK(seq.body[0] == v.word(0));
  CHECK(seq.body[1] == v.word(1));
  CHECK(seq.body[2] == v.word(2));
  for (int i = 3; i < 8; ++i) CHECK(seq.body[i] == v.pad());
  CHECK(decode_caption(seq.body, v).words == std::vector<std::string>{"a", "red", "circle"});

  c.caption_len = 2;
  TaskSequence trunc = encode_caption({"a", "red", "circle"}, c, v, rng);
  CHECK(trunc.body.size() == 2);
  CHECK_THROWS(encode_caption({"zebra"}, c, v, rng));
}

TEST_CASE("caption augmentation corrupts one non-pad input position") {
  Vocab v = test_vocab();
  CodecConfig c = small_codec();
  Rng rng(3);
  TaskSequence seq = encode_caption({"a", "red", "circle"}, c, v, rng);
  std::set<int> positions;
  for (int trial = 0; trial < 40; ++trial) {
    CaptionAugment aug = caption_augment_input(seq, c, v, rng);
    REQUIRE(aug.position >= 0);
    CHECK(aug.position < 3);  // never a pad position
    positions.insert(aug.position);
    CHECK(aug.input_body.size() == seq.body.size());
    int diffs = 0;
    for (size_t i = 0; i < seq.body.size(); ++i)
      if (aug.input_body[i] != seq.body[i]) ++diffs;
    CHECK(diffs == 1);
    CHECK(v.is_word(aug.input_body[aug.position]));
  }
  CHECK(positions.size() == 3);

  c.caption_augment = false;
  CaptionAugment off = caption_augment_input(seq, c, v, rng);
  CHECK(off.position == -1);
  CHECK(off.input_body == seq.body);
}

TEST_CASE("caption decode stops at pad and skips non-words") {
  Vocab v = test_vocab();
  std::vector<int> body = {v.word(0), v.coord(3), v.word(2), v.pad(), v.word(1)};
  CaptionDecode dec = decode_caption(body, v);
  CHECK(dec.words == std::vector<std::string>{"a", "circle"});
  CHECK(dec.skipped_tokens == 1);
}

TEST_CASE("annotation validation") {
  Vocab v = test_vocab();
  CodecConfig c = small_codec();
  Rng rng(1);
  SceneAnnotation bad = make_scene();
  bad.instances[0].box = {0.5, 0.2, 0.5, 0.6};  // zero width
  CHECK_THROWS(encode_detection(bad, c, v, rng));
  SceneAnnotation cls = make_scene();
  cls.instances[0].class_id = 99;
  CHECK_THROWS(encode_detection(cls, c, v, rng));
}
