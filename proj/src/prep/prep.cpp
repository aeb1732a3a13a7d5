#include "sfseg/prep.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "sfseg/random.hpp"

namespace sfseg {

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

void PrepConfig::validate() const {
  if (canvas < 1) throw ConfigError("canvas", "must be positive");
  if (resize_min < 1) throw ConfigError("resize_min", "must be positive");
  if (resize_min > resize_max) throw ConfigError("resize_min", "must not exceed resize_max");
  if (resize_max > canvas) throw ConfigError("resize_max", "must not exceed canvas");
  if (stroke_threshold < 1 || stroke_threshold > 255) throw ConfigError("stroke_threshold", "must be in [1, 255]");
}

namespace {

int channel_distance(Rgb a, Rgb b) {
  return std::max({std::abs(a.r - b.r), std::abs(a.g - b.g), std::abs(a.b - b.b)});
}

}  // namespace

Rect bounding_box(const RgbImage& img, Rgb background) {
  Rect r{img.width, img.height, -1, -1};
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (img.at(x, y) == background) continue;
      r.x0 = std::min(r.x0, x);
      r.y0 = std::min(r.y0, y);
      r.x1 = std::max(r.x1, x);
      r.y1 = std::max(r.y1, y);
    }
  }
  if (r.x1 < 0) throw EmptySketchError("sketch has no stroke pixels");
  return r;
}

RgbImage crop(const RgbImage& img, const Rect& r) {
  if (r.x0 < 0 || r.y0 < 0 || r.x1 >= img.width || r.y1 >= img.height || r.x0 > r.x1 || r.y0 > r.y1) {
    throw DimensionError("crop rectangle outside the image");
  }
  RgbImage out(r.width(), r.height());
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) out.at(x, y) = img.at(r.x0 + x, r.y0 + y);
  }
  return out;
}

namespace {

struct Taps {
  int first = 0;
  std::vector<double> w;
};

// Triangle filter taps for each output coordinate along one axis.
std::vector<Taps> triangle_taps(int in, int out) {
  const double scale = static_cast<double>(in) / out;
  const double support = std::max(1.0, scale);
  std::vector<Taps> taps(static_cast<std::size_t>(out));
  for (int o = 0; o < out; ++o) {
    const double centre = (o + 0.5) * scale;
    const int lo = std::max(0, static_cast<int>(std::floor(centre - support)));
    const int hi = std::min(in - 1, static_cast<int>(std::ceil(centre + support)));
    auto& t = taps[static_cast<std::size_t>(o)];
    t.first = lo;
    double total = 0.0;
    for (int i = lo; i <= hi; ++i) {
      const double d = std::abs((i + 0.5 - centre) / support);
      const double w = d < 1.0 ? 1.0 - d : 0.0;
      t.w.push_back(w);
      total += w;
    }
    if (total > 0.0) {
      for (auto& w : t.w) w /= total;
    }
  }
  return taps;
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

RgbImage resize_bilinear(const RgbImage& img, int width, int height) {
  if (width < 1 || height < 1) throw DimensionError("resize target must be at least 1x1");
  const auto tx = triangle_taps(img.width, width);
  const auto ty = triangle_taps(img.height, height);
  // Horizontal pass kept in double, rounded once after the vertical pass.
  std::vector<std::array<double, 3>> mid(static_cast<std::size_t>(width) * static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < width; ++x) {
      const auto& t = tx[static_cast<std::size_t>(x)];
      std::array<double, 3> acc{0, 0, 0};
      for (std::size_t k = 0; k < t.w.size(); ++k) {
        const Rgb p = img.at(t.first + static_cast<int>(k), y);
        acc[0] += t.w[k] * p.r;
        acc[1] += t.w[k] * p.g;
        acc[2] += t.w[k] * p.b;
      }
      mid[static_cast<std::size_t>(y) * width + x] = acc;
    }
  }
  RgbImage out(width, height);
  for (int y = 0; y < height; ++y) {
    const auto& t = ty[static_cast<std::size_t>(y)];
    for (int x = 0; x < width; ++x) {
      std::array<double, 3> acc{0, 0, 0};
      for (std::size_t k = 0; k < t.w.size(); ++k) {
        const auto& m = mid[static_cast<std::size_t>(t.first + static_cast<int>(k)) * width + x];
        for (int c = 0; c < 3; ++c) acc[c] += t.w[k] * m[c];
      }
      out.at(x, y) = {to_byte(acc[0]), to_byte(acc[1]), to_byte(acc[2])};
    }
  }
  return out;
}

RgbImage resize_nearest(const RgbImage& img, int width, int height) {
  if (width < 1 || height < 1) throw DimensionError("resize target must be at least 1x1");
  RgbImage out(width, height);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(img.height - 1, static_cast<int>((2L * y + 1) * img.height / (2L * height)));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(img.width - 1, static_cast<int>((2L * x + 1) * img.width / (2L * width)));
      out.at(x, y) = img.at(sx, sy);
    }
  }
  return out;
}

// Thinning

namespace {

// Neighbours P2..P9 clockwise from north.
std::array<int, 8> ring(const BinaryMask& m, int x, int y) {
  return {m.get(x, y - 1),     m.get(x + 1, y - 1), m.get(x + 1, y), m.get(x + 1, y + 1),
          m.get(x, y + 1),     m.get(x - 1, y + 1), m.get(x - 1, y), m.get(x - 1, y - 1)};
}

int neighbours(const std::array<int, 8>& p) { return p[0] + p[1] + p[2] + p[3] + p[4] + p[5] + p[6] + p[7]; }

int transitions(const std::array<int, 8>& p) {
  int a = 0;
  for (int i = 0; i < 8; ++i) a += (p[i] == 0 && p[(i + 1) % 8] == 1);
  return a;
}

// Yokoi connectivity number for 8-connectivity; 1 means deletable without
// changing the topology.
int yokoi8(const std::array<int, 8>& p) {
  // x1..x8 = E, NE, N, NW, W, SW, S, SE.
  const std::array<int, 8> x{p[2], p[1], p[0], p[7], p[6], p[5], p[4], p[3]};
  int n = 0;
  for (int k = 0; k < 8; k += 2) {
    const int a = 1 - x[k], b = 1 - x[(k + 1) % 8], c = 1 - x[(k + 2) % 8];
    n += a - a * b * c;
  }
  return n;
}

bool zs_condition(const std::array<int, 8>& p, int pass) {
  const int b = neighbours(p);
  if (b < 2 || b > 6 || transitions(p) != 1) return false;
  const int n = p[0], e = p[2], s = p[4], w = p[6];
  if (pass == 0) return n * e * s == 0 && e * s * w == 0;
  return n * e * w == 0 && n * s * w == 0;
}

struct ExtentGuard {
  bool active = false;
  Rect box;

  bool protects(const BinaryMask& m, int x, int y) const {
    if (!active) return false;
    auto row_count = [&](int yy) {
      int c = 0;
      for (int i = 0; i < m.width; ++i) c += m.at(i, yy);
      return c;
    };
    auto col_count = [&](int xx) {
      int c = 0;
      for (int j = 0; j < m.height; ++j) c += m.at(xx, j);
      return c;
    };
    return ((y == box.y0 || y == box.y1) && row_count(y) == 1) || ((x == box.x0 || x == box.x1) && col_count(x) == 1);
  }
};

bool deletable(const BinaryMask& m, int x, int y, const ExtentGuard& guard) {
  const auto p = ring(m, x, y);
  return neighbours(p) >= 2 && yokoi8(p) == 1 && !guard.protects(m, x, y);
}

}  // namespace

BinaryMask thin(const BinaryMask& mask, ThinOptions options) {
  BinaryMask m = mask;
  ExtentGuard guard;
  if (options.preserve_extent && m.count() > 0) {
    guard.active = true;
    guard.box = {m.width, m.height, -1, -1};
    for (int y = 0; y < m.height; ++y) {
      for (int x = 0; x < m.width; ++x) {
        if (!m.at(x, y)) continue;
        guard.box.x0 = std::min(guard.box.x0, x);
        guard.box.y0 = std::min(guard.box.y0, y);
        guard.box.x1 = std::max(guard.box.x1, x);
        guard.box.y1 = std::max(guard.box.y1, y);
      }
    }
  }

  std::vector<std::pair<int, int>> candidates;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      candidates.clear();
      for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
          if (m.at(x, y) && zs_condition(ring(m, x, y), pass)) candidates.emplace_back(x, y);
        }
      }
      for (auto [x, y] : candidates) {
        if (zs_condition(ring(m, x, y), pass) && deletable(m, x, y, guard)) {
          m.at(x, y) = 0;
          changed = true;
        }
      }
    }
    // Zhang-Suen leaves some 2x2 squares (e.g. on diagonal staircases).
    for (int y = 0; y + 1 < m.height; ++y) {
      for (int x = 0; x + 1 < m.width; ++x) {
        if (!(m.at(x, y) && m.at(x + 1, y) && m.at(x, y + 1) && m.at(x + 1, y + 1))) continue;
        for (auto [dx, dy] : {std::pair{0, 0}, {1, 0}, {0, 1}, {1, 1}}) {
          if (deletable(m, x + dx, y + dy, guard)) {
            m.at(x + dx, y + dy) = 0;
            changed = true;
            break;
          }
        }
      }
    }
  }
  return m;
}

LabelMap recolor(const RgbImage& img, std::shared_ptr<const Palette> palette) {
  if (!palette || palette->size() == 0) throw ParameterError("recolor: empty palette");
  LabelMap out(img.width, img.height, palette);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) out.labels[i] = palette->nearest(img.pixels[i]);
  return out;
}

BinaryMask stroke_mask(const RgbImage& img, Rgb background, int threshold) {
  BinaryMask m(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) m.bits[i] = channel_distance(img.pixels[i], background) >= threshold;
  return m;
}

NormalizedSketch normalize(const RgbImage& img, const RgbImage* labels, const PrepConfig& cfg,
                           std::shared_ptr<const Palette> palette) {
  cfg.validate();
  if (!palette) palette = builtin_palette();
  if (labels && (labels->width != img.width || labels->height != img.height)) {
    throw DimensionError("normalize: label raster " + std::to_string(labels->width) + "x" +
                         std::to_string(labels->height) + " vs sketch " + std::to_string(img.width) + "x" +
                         std::to_string(img.height));
  }
  const Rect box = bounding_box(img, cfg.background);

  Rng rng(cfg.seed);
  const int size = static_cast<int>(rng.uniform_int(cfg.resize_min, cfg.resize_max));
  const int longest = std::max(box.width(), box.height());
  auto scaled = [&](int side) {
    return std::max(1, static_cast<int>(std::lround(static_cast<double>(side) * size / longest)));
  };
  const int w = std::min(cfg.canvas, scaled(box.width()));
  const int h = std::min(cfg.canvas, scaled(box.height()));
  const int ox = (cfg.canvas - w) / 2, oy = (cfg.canvas - h) / 2;

  const RgbImage sketch = resize_bilinear(crop(img, box), w, h);
  BinaryMask mask(cfg.canvas, cfg.canvas);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      mask.at(ox + x, oy + y) = channel_distance(sketch.at(x, y), cfg.background) >= cfg.stroke_threshold;
    }
  }
  // Faint edges can vanish in the resize; keep the darkest pixel of each
  // extreme row and column so the extent survives.
  auto force = [&](int x0, int y0, int dx, int dy, int n) {
    int best = -1, bx = 0, by = 0;
    for (int i = 0; i < n; ++i) {
      const int x = x0 + i * dx, y = y0 + i * dy;
      if (mask.at(ox + x, oy + y)) return;
      const int d = channel_distance(sketch.at(x, y), cfg.background);
      if (d > best) {
        best = d;
        bx = x;
        by = y;
      }
    }
    mask.at(ox + bx, oy + by) = 1;
  };
  force(0, 0, 1, 0, w);
  force(0, h - 1, 1, 0, w);
  force(0, 0, 0, 1, h);
  force(w - 1, 0, 0, 1, h);

  mask = thin(mask, {true});

  NormalizedSketch out;
  out.scaled_size = size;
  out.sketch = RgbImage(cfg.canvas, cfg.canvas, kWhite);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (mask.bits[i]) out.sketch.pixels[i] = {0, 0, 0};
  }

  if (labels) {
    const RgbImage lab = resize_nearest(crop(*labels, box), w, h);
    LabelMap lm(cfg.canvas, cfg.canvas, palette);
    static constexpr std::array<std::pair<int, int>, 8> kOrder{
        {{0, -1}, {0, 1}, {-1, 0}, {1, 0}, {-1, -1}, {1, -1}, {-1, 1}, {1, 1}}};
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!mask.at(ox + x, oy + y)) continue;
        ClassIndex k = palette->nearest(lab.at(x, y));
        // A thin stroke can land just off its label; borrow a neighbour's.
        for (std::size_t i = 0; k == Palette::kBackground && i < kOrder.size(); ++i) {
          const int nx = x + kOrder[i].first, ny = y + kOrder[i].second;
          if (nx >= 0 && ny >= 0 && nx < w && ny < h) k = palette->nearest(lab.at(nx, ny));
        }
        lm.at(ox + x, oy + y) = k;
      }
    }
    out.labels = std::move(lm);
  }
  return out;
}

}  // namespace sfseg
