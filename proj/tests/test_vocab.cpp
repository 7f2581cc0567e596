#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "mad/vocab.hpp"

using namespace mad;

namespace {

VocabSpec spec_with(int bins, int classes, int words) {
  VocabSpec s;
  s.num_bins = bins;
  s.num_classes = classes;
  s.words.clear();
  for (int i = 0; i < words; ++i) s.words.push_back("w" + std::to_string(i));
  return s;
}

}  // namespace

TEST_CASE("layout sizes") {
  // defaults: 1 + 1 + 4 + 500 + 6 + 4 + 30 = 546
  Vocab v = Vocab::build(spec_with(500, 5, 30));
  CHECK(v.total_size() == 546);
  // minimal: 1 + 1 + 4 + 2 + 2 + 4 + 1 = 15
  Vocab tiny = Vocab::build(spec_with(2, 1, 1));
  CHECK(tiny.total_size() == 15);
  // large word list: 1 + 1 + 4 + 500 + 81 + 4 + 11421 = 12012
  Vocab big = Vocab::build(spec_with(500, 80, 11421));
  CHECK(big.total_size() == 12012);
}

TEST_CASE("range order and adjacency") {
  Vocab v = Vocab::build(spec_with(500, 5, 30));
  CHECK(v.pad() == 0);
  CHECK(v.mask() == 1);
  CHECK(v.prompt(TaskKind::Detection) == 2);
  CHECK(v.prompt(TaskKind::Captioning) == 5);
  CHECK(v.coord_begin() == 6);
  CHECK(v.class_begin() == 506);
  CHECK(v.noise_class() == 511);
  CHECK(v.special_begin() == 512);
  CHECK(v.word_begin() == 516);
  CHECK(v.word(29) == 545);
}

TEST_CASE("classify/reindex inverse over the whole vocab") {
  Vocab v = Vocab::build(spec_with(64, 3, 7));
  for (int id = 0; id < v.total_size(); ++id) {
    auto c = v.classify(id);
    CHECK(v.reindex(c.kind, c.index) == id);
  }
  CHECK(v.classify(v.special(kInvisible)).kind == TokenKind::Special);
  CHECK(v.classify(v.special(kInvisible)).index == 3);
}

TEST_CASE("spec validation") {
  CHECK_THROWS(Vocab::build(spec_with(1, 5, 3)));   // needs >= 2 bins
  CHECK_THROWS(Vocab::build(spec_with(10, 0, 3)));  // needs >= 1 class
  VocabSpec dup = spec_with(10, 2, 2);
  dup.words[1] = dup.words[0];
  CHECK_THROWS(Vocab::build(dup));
}

TEST_CASE("quantization") {
  CHECK(quantize_coord(0.0, 500) == 0);
  CHECK(quantize_coord(1.0, 500) == 499);    // clamp at the top
  CHECK(quantize_coord(-0.5, 500) == 0);
  CHECK(quantize_coord(1.5, 500) == 499);
  CHECK(quantize_coord(0.5, 500) == 250);
  CHECK(quantize_coord(0.123, 1000) == 123);
  CHECK(dequantize_coord(0, 500) == doctest::Approx(0.001));
  CHECK(dequantize_coord(499, 500) == doctest::Approx(0.999));
  // round trip within half a bin
  for (int i = 0; i <= 1000; ++i) {
    const double x = i / 1000.0;
    const double back = dequantize_coord(quantize_coord(x, 500), 500);
    CHECK(std::abs(back - x) <= 0.5 / 500 + 1e-12);
  }
}

TEST_CASE("task filters partition correctly") {
  Vocab v = Vocab::build(spec_with(100, 4, 5));
  auto det = v.task_filter(TaskKind::Detection);
  auto seg = v.task_filter(TaskKind::Segmentation);
  auto kpt = v.task_filter(TaskKind::Keypoint);
  auto cap = v.task_filter(TaskKind::Captioning);
  // detection: coords + classes (incl. noise)
  CHECK(static_cast<int>(det.size()) == 100 + 5);
  for (int id : det) CHECK((v.is_coord(id) || v.is_class(id)));
  // segmentation: exactly fg/bg
  REQUIRE(seg.size() == 2);
  CHECK(seg[0] == v.special(kForeground));
  CHECK(seg[1] == v.special(kBackground));
  // keypoints: coords + visibility flags
  CHECK(static_cast<int>(kpt.size()) == 100 + 2);
  // captioning: words + pad
  CHECK(static_cast<int>(cap.size()) == 5 + 1);
  CHECK(cap.back() == v.pad());
}

TEST_CASE("manifest round trip and hash stability") {
  Vocab v = Vocab::build(spec_with(100, 4, 5));
  const std::string m = v.manifest();
  std::istringstream in(m);
  Vocab back = Vocab::from_manifest(in);
  CHECK(back.total_size() == v.total_size());
  CHECK(back.manifest() == m);
  CHECK(back.manifest_hash() == v.manifest_hash());
  Vocab other = Vocab::build(spec_with(101, 4, 5));
  CHECK(other.manifest_hash() != v.manifest_hash());
}
