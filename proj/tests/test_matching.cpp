#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "mad/matching.hpp"

using namespace mad;

namespace {

// Exhaustive permutation minimum; the independent oracle for hungarian().
double brute_force_min(const CostMatrix& c) {
  const int n = std::min(c.rows, c.cols);
  const int m = std::max(c.rows, c.cols);
  std::vector<int> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (int i = 0; i < n; ++i)
      total += c.rows <= c.cols ? c.at(i, perm[i]) : c.at(perm[i], i);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

CostMatrix random_matrix(int rows, int cols, std::mt19937_64& rng) {
  CostMatrix c;
  c.rows = rows;
  c.cols = cols;
  c.data.resize(static_cast<size_t>(rows) * cols);
  std::uniform_real_distribution<double> dist(-10.0, 10.0);
  for (auto& v : c.data) v = dist(rng);
  return c;
}

}  // namespace

TEST_CASE("worked 3x3 example") {
  CostMatrix c{3, 3, {4, 1, 3, 2, 0, 5, 3, 2, 2}};
  Assignment a = hungarian(c);
  CHECK(a.total_cost == doctest::Approx(5.0));
  REQUIRE(a.pairs.size() == 3);
  // optimal: (0,1), (1,0), (2,2)
  std::vector<int> col_of(3, -1);
  for (auto [r, cidx] : a.pairs) col_of[r] = cidx;
  CHECK(col_of[0] == 1);
  CHECK(col_of[1] == 0);
  CHECK(col_of[2] == 2);
}

TEST_CASE("degenerate shapes") {
  Assignment a = hungarian(CostMatrix{0, 0, {}});
  CHECK(a.pairs.empty());
  CHECK(a.total_cost == 0.0);
  Assignment b = hungarian(CostMatrix{1, 1, {7.0}});
  REQUIRE(b.pairs.size() == 1);
  CHECK(b.total_cost == doctest::Approx(7.0));
}

TEST_CASE("1000 random matrices match the brute-force oracle exactly") {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> size_dist(1, 6);
  for (int trial = 0; trial < 1000; ++trial) {
    CostMatrix c = random_matrix(size_dist(rng), size_dist(rng), rng);
    Assignment a = hungarian(c);
    REQUIRE(static_cast<int>(a.pairs.size()) == std::min(c.rows, c.cols));
    // one-to-one
    std::vector<int> rows_used, cols_used;
    double recomputed = 0.0;
    for (auto [r, cc] : a.pairs) {
      rows_used.push_back(r);
      cols_used.push_back(cc);
      recomputed += c.at(r, cc);
    }
    std::sort(rows_used.begin(), rows_used.end());
    std::sort(cols_used.begin(), cols_used.end());
    CHECK(std::adjacent_find(rows_used.begin(), rows_used.end()) == rows_used.end());
    CHECK(std::adjacent_find(cols_used.begin(), cols_used.end()) == cols_used.end());
    CHECK(recomputed == doctest::Approx(a.total_cost).epsilon(1e-12));
    CHECK(a.total_cost == doctest::Approx(brute_force_min(c)).epsilon(1e-12));
  }
}

TEST_CASE("non-finite costs are rejected") {
  CostMatrix c{2, 2, {1.0, std::numeric_limits<double>::infinity(), 0.0, 1.0}};
  CHECK_THROWS(hungarian(c));
}

TEST_CASE("detection cost formula") {
  SlotPrediction slot;
  slot.box = {0.1, 0.1, 0.5, 0.5};
  slot.class_probs = {0.7, 0.1, 0.1, 0.05, 0.05};  // 4 classes + noise
  GtObject gt{{0.1, 0.1, 0.5, 0.5}, 0};
  CHECK(detection_cost(slot, gt) == doctest::Approx(2.0 * 0.3));
  GtObject off{{0.2, 0.1, 0.5, 0.5}, 1};
  // cls: 2 * 0.9, box: 5 * mean(|0.1|, 0, 0, 0)
  CHECK(detection_cost(slot, off) == doctest::Approx(2.0 * 0.9 + 5.0 * 0.025));
}

TEST_CASE("detection targets: matched and unmatched slots") {
  Vocab vocab = Vocab::build({10, 3, {"x"}});
  std::vector<SlotPrediction> slots(3);
  // slot 0 is a confident class-1 box near gt 0; slot 2 near gt 1.
  slots[0].box = {0.1, 0.1, 0.3, 0.3};
  slots[0].class_probs = {0.05, 0.85, 0.05, 0.05};
  slots[1].box = {0.8, 0.8, 0.9, 0.9};
  slots[1].class_probs = {0.25, 0.25, 0.25, 0.25};
  slots[2].box = {0.5, 0.5, 0.7, 0.7};
  slots[2].class_probs = {0.05, 0.05, 0.85, 0.05};
  std::vector<GtObject> gts = {{{0.1, 0.1, 0.3, 0.3}, 1}, {{0.5, 0.5, 0.7, 0.7}, 2}};

  DetectionTargets t = detection_targets(slots, gts, vocab);
  REQUIRE(t.target.size() == 15);
  REQUIRE(t.supervise.size() == 15);
  REQUIRE(t.matched_slot.size() == 2);
  CHECK(t.matched_slot[0] == 0);
  CHECK(t.matched_slot[1] == 2);

  // matched slot 0: quantized gt box + class, all supervised
  for (int k = 0; k < 4; ++k) {
    CHECK(t.target[k] == vocab.coord(quantize_coord(gts[0].box[k], 10)));
    CHECK(t.supervise[k]);
  }
  CHECK(t.target[4] == vocab.cls(1));
  CHECK(t.supervise[4]);

  // unmatched slot 1: only the class position supervised, to noise
  for (int k = 5; k < 9; ++k) CHECK_FALSE(t.supervise[k]);
  CHECK(t.supervise[9]);
  CHECK(t.target[9] == vocab.noise_class());
}

TEST_CASE("more gts than slots still yields a full slot assignment") {
  Vocab vocab = Vocab::build({10, 2, {"x"}});
  std::vector<SlotPrediction> slots(2);
  for (auto& s : slots) {
    s.box = {0.0, 0.0, 0.1, 0.1};
    s.class_probs = {0.4, 0.3, 0.3};
  }
  std::vector<GtObject> gts(5, GtObject{{0.2, 0.2, 0.4, 0.4}, 0});
  DetectionTargets t = detection_targets(slots, gts, vocab);
  // every slot matched to some gt; matched_slot has one entry per gt (-1 if
  // that gt went unmatched)
  int assigned = 0;
  for (int s : t.matched_slot)
    if (s >= 0) ++assigned;
  CHECK(assigned == 2);
}

TEST_CASE("caption target argmin with tie break") {
  // two positions, vocab of 3
  std::vector<std::vector<double>> probs = {{0.6, 0.3, 0.1}, {0.1, 0.8, 0.1}};
  std::vector<std::vector<int>> refs = {{2, 2}, {0, 1}, {0, 1}};
  CHECK(caption_target(probs, refs) == 1);  // ties with 2, lower index wins
  CHECK(caption_target(probs, {{0, 1}}) == 0);
}
