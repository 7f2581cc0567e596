#include <algorithm>
#include <cmath>

#include "mad/harness.hpp"

namespace mad {

namespace {

struct Color {
  double r, g, b;
  const char* name;
};

const Color kPalette[] = {
    {0.85, 0.12, 0.12, "red"},    {0.12, 0.75, 0.20, "green"}, {0.15, 0.30, 0.90, "blue"},
    {0.92, 0.85, 0.15, "yellow"}, {0.85, 0.15, 0.80, "magenta"},
};

constexpr double kBg[3] = {0.08, 0.08, 0.10};

struct Stroke {
  double x0, y0, x1, y1, width;
};

double dist_to_segment(double px, double py, const Stroke& s) {
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double cx = s.x0 + t * dx, cy = s.y0 + t * dy;
  return std::hypot(px - cx, py - cy);
}

// Pixel-coverage predicate for one shape, in absolute pixel coordinates.
struct ShapeGeom {
  int cls = 0;
  double cx = 0, cy = 0, w = 0, h = 0;  // bounding extent
  std::vector<Stroke> strokes;          // stickman
  double head_r = 0;
  double head_cx = 0, head_cy = 0;

  bool covers(double px, double py) const {
    const double dx = px - cx, dy = py - cy;
    switch (cls) {
      case kCircle:
        return dx * dx / (w * w / 4) + dy * dy / (h * h / 4) <= 1.0;
      case kSquare:
      case kBar:
        return std::abs(dx) <= w / 2 && std::abs(dy) <= h / 2;
      case kTriangle: {
        // upward triangle: apex at top, base at bottom
        if (std::abs(dy) > h / 2) return false;
        const double frac = (dy + h / 2) / h;  // 0 at apex, 1 at base
        return std::abs(dx) <= frac * w / 2;
      }
      case kStickman: {
        if (std::hypot(px - head_cx, py - head_cy) <= head_r) return true;
        for (const auto& s : strokes)
          if (dist_to_segment(px, py, s) <= s.width) return true;
        return false;
      }
    }
    return false;
  }
};

}  // namespace

const std::vector<std::string>& shapes_world_words() {
  static const std::vector<std::string> words = {
      "a",      "of",     "left",   "right",    "above", "below",  "red",      "green",
      "blue",   "yellow", "magenta", "circle",  "square", "triangle", "bar",   "stickman"};
  return words;
}

const std::vector<std::string>& shapes_world_class_names() {
  static const std::vector<std::string> names = {"circle", "square", "triangle", "bar",
                                                 "stickman"};
  return names;
}

DatasetRecord generate_scene(const ShapesWorldConfig& cfg, Rng& rng) {
  DatasetRecord rec;
  const int W = cfg.image_width, H = cfg.image_height;
  rec.image.width = W;
  rec.image.height = H;
  rec.image.rgb.assign(static_cast<size_t>(W) * H * 3, 0.0);
  for (int i = 0; i < W * H; ++i)
    for (int c = 0; c < 3; ++c) rec.image.rgb[static_cast<size_t>(i) * 3 + c] = kBg[c];

  rec.ann.width = W;
  rec.ann.height = H;

  std::uniform_int_distribution<int> count_d(cfg.min_shapes, cfg.max_shapes);
  std::uniform_int_distribution<int> cls_d(0, 4);
  std::uniform_int_distribution<int> col_d(0, 4);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  const int n = count_d(rng);
  std::vector<int> colors;
  for (int i = 0; i < n; ++i) {
    ShapeGeom g;
    g.cls = cls_d(rng);
    const int col = col_d(rng);
    colors.push_back(col);

    const double min_size = 0.18 * std::min(W, H);
    const double max_size = 0.45 * std::min(W, H);
    g.w = min_size + u(rng) * (max_size - min_size);
    g.h = g.cls == kBar ? std::max(4.0, g.w * 0.22)
                        : min_size + u(rng) * (max_size - min_size);
    if (g.cls == kCircle || g.cls == kSquare) g.h = g.w;
    if (g.cls == kStickman) {
      g.w = std::max(g.w, 0.22 * std::min(W, H));
      g.h = std::max(g.h, 0.32 * std::min(W, H));
    }
    g.cx = g.w / 2 + 1 + u(rng) * (W - g.w - 2);
    g.cy = g.h / 2 + 1 + u(rng) * (H - g.h - 2);

    InstanceGt inst;
    inst.class_id = g.cls;
    std::vector<KeypointGt> kps;

    if (g.cls == kStickman) {
      const double top = g.cy - g.h / 2, bot = g.cy + g.h / 2;
      g.head_r = 0.16 * g.h;
      g.head_cx = g.cx;
      g.head_cy = top + g.head_r;
      const double neck = g.head_cy + g.head_r;
      const double hip = top + 0.62 * g.h;
      const double stroke_w = std::max(1.5, 0.035 * g.h);
      g.strokes.push_back({g.cx, neck, g.cx, hip, stroke_w});                         // torso
      g.strokes.push_back({g.cx, neck + 0.12 * g.h, g.cx - g.w / 2, neck, stroke_w});  // arms
      g.strokes.push_back({g.cx, neck + 0.12 * g.h, g.cx + g.w / 2, neck, stroke_w});
      g.strokes.push_back({g.cx, hip, g.cx - g.w * 0.35, bot, stroke_w});  // legs
      g.strokes.push_back({g.cx, hip, g.cx + g.w * 0.35, bot, stroke_w});

      auto kp = [&](double x, double y) {
        KeypointGt k;
        k.x = x / W;
        k.y = y / H;
        k.visible = u(rng) >= cfg.invisible_prob;
        return k;
      };
      kps.push_back(kp(g.head_cx, g.head_cy));
      kps.push_back(kp(g.cx - g.w / 2, neck));
      kps.push_back(kp(g.cx + g.w / 2, neck));
      kps.push_back(kp(g.cx - g.w * 0.35, bot));
      kps.push_back(kp(g.cx + g.w * 0.35, bot));
      kps.resize(cfg.num_keypoints);
    }

    const int px0 = static_cast<int>(std::floor(g.cx - g.w / 2));
    const int py0 = static_cast<int>(std::floor(g.cy - g.h / 2));
    const int px1 = static_cast<int>(std::ceil(g.cx + g.w / 2));
    const int py1 = static_cast<int>(std::ceil(g.cy + g.h / 2));
    inst.box = {static_cast<double>(px0) / W, static_cast<double>(py0) / H,
                static_cast<double>(px1) / W, static_cast<double>(py1) / H};

    inst.bitmask.width = px1 - px0;
    inst.bitmask.height = py1 - py0;
    inst.bitmask.data.assign(static_cast<size_t>(inst.bitmask.width) * inst.bitmask.height, 0);

    const Color& color = kPalette[col];
    for (int py = std::max(0, py0); py < std::min(H, py1); ++py) {
      for (int px = std::max(0, px0); px < std::min(W, px1); ++px) {
        if (!g.covers(px + 0.5, py + 0.5)) continue;
        inst.bitmask.set(px - px0, py - py0, 1);
        double* pix = &rec.image.rgb[(static_cast<size_t>(py) * W + px) * 3];
        pix[0] = color.r;
        pix[1] = color.g;
        pix[2] = color.b;
      }
    }
    if (!kps.empty()) inst.keypoints = kps;
    rec.ann.instances.push_back(std::move(inst));
  }

  // Caption from the scene: one shape names itself; two shapes get a spatial
  // relation between their centers.
  auto color_of = [&](int i) { return kPalette[colors[i]].name; };
  auto shape_of = [&](int i) {
    return shapes_world_class_names()[rec.ann.instances[i].class_id];
  };
  std::vector<std::string> cap;
  if (n == 1) {
    cap = {"a", color_of(0), shape_of(0)};
  } else {
    std::uniform_int_distribution<int> pick(0, n - 1);
    int i = pick(rng), j = pick(rng);
    while (j == i) j = pick(rng);
    const auto& bi = rec.ann.instances[i].box;
    const auto& bj = rec.ann.instances[j].box;
    const double dx = (bi[0] + bi[2]) / 2 - (bj[0] + bj[2]) / 2;
    const double dy = (bi[1] + bi[3]) / 2 - (bj[1] + bj[3]) / 2;
    std::vector<std::string> rel;
    if (std::abs(dx) >= std::abs(dy))
      rel = dx < 0 ? std::vector<std::string>{"left", "of"} : std::vector<std::string>{"right", "of"};
    else
      rel = dy < 0 ? std::vector<std::string>{"above"} : std::vector<std::string>{"below"};
    cap = {"a", color_of(i), shape_of(i)};
    cap.insert(cap.end(), rel.begin(), rel.end());
    cap.push_back("a");
    cap.push_back(color_of(j));
    cap.push_back(shape_of(j));
  }
  rec.ann.captions.push_back(std::move(cap));
  return rec;
}

std::vector<DatasetRecord> generate_dataset(const ShapesWorldConfig& cfg, int train_count,
                                            int val_count, uint64_t seed) {
  std::vector<DatasetRecord> out;
  Rng rng(seed);
  for (int i = 0; i < train_count + val_count; ++i) {
    DatasetRecord rec = generate_scene(cfg, rng);
    rec.split = i < train_count ? "train" : "val";
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace mad
