#include "sfseg/fixtures.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "sfseg/random.hpp"

namespace sfseg {

namespace {

class Canvas {
 public:
  Canvas(int size, int thickness) : sketch(size, size), labels(size, size), thickness_(thickness) {}

  void set_part(const std::string& name) {
    const auto idx = builtin_palette()->find(name);
    if (!idx) throw DataError("fixture part '" + name + "' is not in the palette");
    color_ = (*builtin_palette())[*idx].color;
  }

  void line(double x0, double y0, double x1, double y1) {
    const double len = std::hypot(x1 - x0, y1 - y0);
    const int steps = std::max(1, static_cast<int>(std::ceil(len * 4)));
    for (int i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) / steps;
      stamp(x0 + t * (x1 - x0), y0 + t * (y1 - y0));
    }
  }

  void polyline(std::initializer_list<std::pair<double, double>> pts, bool closed) {
    const auto* prev = pts.begin();
    for (const auto* p = pts.begin() + 1; p != pts.end(); ++p) {
      line(prev->first, prev->second, p->first, p->second);
      prev = p;
    }
    if (closed) line(prev->first, prev->second, pts.begin()->first, pts.begin()->second);
  }

  void ellipse(double cx, double cy, double rx, double ry) {
    const int steps = 180;
    for (int i = 0; i < steps; ++i) {
      const double a0 = 2 * std::numbers::pi * i / steps, a1 = 2 * std::numbers::pi * (i + 1) / steps;
      line(cx + rx * std::cos(a0), cy + ry * std::sin(a0), cx + rx * std::cos(a1), cy + ry * std::sin(a1));
    }
  }

  RgbImage sketch;
  RgbImage labels;

 private:
  void stamp(double x, double y) {
    const int x0 = static_cast<int>(std::floor(x - (thickness_ - 1) / 2.0));
    const int y0 = static_cast<int>(std::floor(y - (thickness_ - 1) / 2.0));
    for (int dy = 0; dy < thickness_; ++dy) {
      for (int dx = 0; dx < thickness_; ++dx) {
        const int px = x0 + dx, py = y0 + dy;
        if (px < 0 || py < 0 || px >= sketch.width || py >= sketch.height) continue;
        sketch.at(px, py) = {0, 0, 0};
        labels.at(px, py) = color_;
      }
    }
  }

  int thickness_;
  Rgb color_;
};

void draw_airplane(Canvas& c, Rng& rng, double s) {
  const double cx = 48 * s + rng.uniform(-3, 3) * s, cy = 48 * s + rng.uniform(-3, 3) * s;
  const double rx = rng.uniform(30, 36) * s, ry = rng.uniform(5, 7) * s;
  const double span = rng.uniform(24, 30) * s, sweep = rng.uniform(6, 12) * s;
  c.set_part("body");
  c.ellipse(cx, cy, rx, ry);
  c.set_part("wing");
  for (double side : {-1.0, 1.0}) {
    c.polyline({{cx + 2 * s, cy + side * (ry + 2 * s)},
                {cx - sweep, cy + side * span},
                {cx - sweep - 6 * s, cy + side * span},
                {cx - 10 * s, cy + side * (ry + 2 * s)}},
               false);
  }
  c.set_part("tail");
  const double tx = cx - rx + 3 * s, fin = rng.uniform(10, 14) * s;
  for (double side : {-1.0, 1.0}) {
    c.polyline({{tx + 4 * s, cy + side * (ry + 2 * s)}, {tx - 4 * s, cy + side * fin}, {tx - 8 * s, cy + side * fin}},
               false);
  }
}

void draw_lamp(Canvas& c, Rng& rng, double s) {
  const double cx = 48 * s + rng.uniform(-4, 4) * s;
  const double top = rng.uniform(8, 14) * s, shade_h = rng.uniform(18, 24) * s;
  const double narrow = rng.uniform(8, 12) * s, wide = rng.uniform(20, 26) * s;
  const double foot = rng.uniform(82, 88) * s;
  c.set_part("shade");
  c.polyline({{cx - narrow, top}, {cx + narrow, top}, {cx + wide, top + shade_h}, {cx - wide, top + shade_h}}, true);
  c.set_part("tube");
  c.line(cx, top + shade_h + 3 * s, cx, foot - 8 * s);
  c.set_part("base");
  c.ellipse(cx, foot - 3 * s, rng.uniform(14, 20) * s, rng.uniform(3, 5) * s);
}

void draw_table(Canvas& c, Rng& rng, double s) {
  const double cx = 48 * s + rng.uniform(-3, 3) * s;
  const double half = rng.uniform(34, 40) * s, top = rng.uniform(18, 26) * s, thick = rng.uniform(5, 8) * s;
  const double floor_y = rng.uniform(78, 86) * s, inset = rng.uniform(3, 7) * s;
  c.set_part("top");
  c.polyline({{cx - half, top}, {cx + half, top}, {cx + half, top + thick}, {cx - half, top + thick}}, true);
  c.set_part("base");
  for (double side : {-1.0, 1.0}) {
    const double x = cx + side * (half - inset);
    c.line(x, top + thick + 3 * s, x + side * rng.uniform(0, 4) * s, floor_y);
  }
  c.set_part("handle");
  const double hy = top + thick + rng.uniform(7, 11) * s, hw = rng.uniform(5, 9) * s;
  c.polyline({{cx - hw, hy}, {cx - hw, hy + 3 * s}, {cx + hw, hy + 3 * s}, {cx + hw, hy}}, false);
}

}  // namespace

std::vector<std::string> fixture_categories() { return {"Airplane", "Lamp", "Table"}; }

FixtureSample make_fixture(const std::string& category, int index, std::uint64_t seed, int size) {
  if (size < 32) throw ParameterError("fixture size must be at least 32");
  std::uint64_t stream = static_cast<std::uint64_t>(index);
  for (char ch : category) stream = stream * 131 + static_cast<unsigned char>(ch);
  Rng rng(Rng::derive(seed, stream));
  const double s = size / 96.0;
  Canvas c(size, std::max(2, static_cast<int>(std::lround(2 * s))));
  if (category == "Airplane") {
    draw_airplane(c, rng, s);
  } else if (category == "Lamp") {
    draw_lamp(c, rng, s);
  } else if (category == "Table") {
    draw_table(c, rng, s);
  } else {
    throw ParameterError("no fixture generator for category '" + category + "'");
  }
  char id[64];
  std::snprintf(id, sizeof id, "%s_%03d", category.c_str(), index);
  for (char* p = id; *p; ++p) *p = static_cast<char>(std::tolower(static_cast<unsigned char>(*p)));
  return {category, id, std::move(c.sketch), std::move(c.labels)};
}

std::vector<FixtureSample> make_fixture_set(int per_category, std::uint64_t seed, int size) {
  std::vector<FixtureSample> out;
  for (const auto& cat : fixture_categories()) {
    for (int i = 0; i < per_category; ++i) out.push_back(make_fixture(cat, i, seed, size));
  }
  return out;
}

void write_raw_dataset(const std::filesystem::path& root, const std::vector<FixtureSample>& samples) {
  for (const auto& s : samples) {
    write_png(root / s.category / "sketches" / (s.id + ".png"), s.sketch);
    write_png(root / s.category / "labels" / (s.id + ".png"), s.labels);
  }
}

}  // namespace sfseg
