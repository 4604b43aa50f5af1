#include "consensus/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace consensus {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

struct Placement {
  std::size_t top = 0, left = 0, rows = 0, cols = 0;
  bool ellipse = false;
};

bool covers(const Placement& p, std::size_t i, std::size_t j) {
  if (i < p.top || i >= p.top + p.rows || j < p.left || j >= p.left + p.cols) return false;
  if (!p.ellipse) return true;
  const double cy = static_cast<double>(p.top) + (static_cast<double>(p.rows) - 1) / 2;
  const double cx = static_cast<double>(p.left) + (static_cast<double>(p.cols) - 1) / 2;
  const double ry = static_cast<double>(p.rows) / 2, rx = static_cast<double>(p.cols) / 2;
  const double dy = (static_cast<double>(i) - cy) / ry, dx = (static_cast<double>(j) - cx) / rx;
  return dy * dy + dx * dx <= 1.0;
}

// Visible pixel count and 4-connected component count of one instance id.
std::pair<std::size_t, std::size_t> region_stats(const std::vector<int>& ids, int id, std::size_t h, std::size_t w) {
  std::vector<std::uint8_t> mask(ids.size());
  std::size_t area = 0;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    mask[k] = ids[k] == id;
    area += mask[k];
  }
  return {area, count_components(mask, h, w)};
}

}  // namespace

void DatasetConfig::validate() const {
  if (height < 16 || width < 16) throw std::invalid_argument("dataset: height and width must be >= 16");
  if (classes < 3) throw std::invalid_argument("dataset: need at least 3 categories");
  if (min_extent < 2 || min_extent > max_extent || max_extent > std::min(height, width)) {
    throw std::invalid_argument("dataset: bad shape extent range");
  }
  if (min_instances_per_class > max_instances_per_class) {
    throw std::invalid_argument("dataset: min instances exceeds max");
  }
  if (!instances_per_category.empty() && instances_per_category.size() != classes - 1) {
    throw std::invalid_argument("dataset: explicit instance counts need one entry per object category");
  }
  if (noise < 0 || gradient < 0 || illumination < 0 || color_spread <= 0) throw std::invalid_argument("dataset: negative amplitude");
  double closest = INFINITY;
  for (std::size_t a = 0; a < classes; ++a) {
    for (std::size_t b = a + 1; b < classes; ++b) {
      const Rgb ca = category_color(*this, a), cb = category_color(*this, b);
      double d2 = 0;
      for (int k = 0; k < 3; ++k) d2 += (ca[k] - cb[k]) * (ca[k] - cb[k]);
      closest = std::min(closest, std::sqrt(d2));
    }
  }
  if (!(closest < gradient)) {
    throw std::invalid_argument("dataset: gradient amplitude " + std::to_string(gradient) +
                                " does not exceed the closest category colour distance " + std::to_string(closest));
  }
}

Rgb category_color(const DatasetConfig& cfg, std::size_t category) {
  // Background sits off the plane; object categories on a circle around grey.
  if (category == 0) return {0.5, 0.5, 0.5 + cfg.color_spread};
  const double angle =
      2.0 * std::numbers::pi * static_cast<double>(category - 1) / static_cast<double>(cfg.classes - 1);
  return {0.5 + cfg.color_spread * std::cos(angle), 0.5 + cfg.color_spread * std::sin(angle), 0.5};
}

std::size_t count_components(std::span<const std::uint8_t> mask, std::size_t height, std::size_t width) {
  std::vector<std::uint8_t> seen(mask.size(), 0);
  std::vector<std::size_t> stack;
  std::size_t components = 0;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask[start] || seen[start]) continue;
    ++components;
    seen[start] = 1;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const std::size_t i = p / width, j = p % width;
      auto visit = [&](std::size_t q) {
        if (mask[q] && !seen[q]) {
          seen[q] = 1;
          stack.push_back(q);
        }
      };
      if (i > 0) visit(p - width);
      if (i + 1 < height) visit(p + width);
      if (j > 0) visit(p - 1);
      if (j + 1 < width) visit(p + 1);
    }
  }
  return components;
}

SceneSample generate_scene(const DatasetConfig& cfg, std::uint64_t index) {
  cfg.validate();
  const std::size_t h = cfg.height, w = cfg.width, n = h * w;
  std::mt19937_64 rng(splitmix(splitmix(cfg.seed) ^ index));
  auto uniform_int = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<std::size_t> counts(cfg.classes, 0);
  if (!cfg.instances_per_category.empty()) {
    std::copy(cfg.instances_per_category.begin(), cfg.instances_per_category.end(), counts.begin() + 1);
  } else {
    for (std::size_t c = 1; c < cfg.classes; ++c) {
      counts[c] = uniform_int(cfg.min_instances_per_class, cfg.max_instances_per_class);
    }
    if (cfg.max_instances_per_class >= 2) {
      const std::size_t repeated = uniform_int(1, cfg.classes - 1);
      counts[repeated] = std::max<std::size_t>(counts[repeated], 2);
    }
  }
  std::vector<int> order;
  for (std::size_t c = 1; c < cfg.classes; ++c) order.insert(order.end(), counts[c], static_cast<int>(c));
  std::shuffle(order.begin(), order.end(), rng);

  SceneSample s;
  s.height = h;
  s.width = w;
  s.instances.assign(n, 0);
  s.instance_category.push_back(0);
  std::vector<Placement> placed;

  for (int category : order) {
    const int id = static_cast<int>(s.instance_category.size());
    bool ok = false;
    for (std::size_t attempt = 0; attempt < cfg.max_attempts && !ok; ++attempt) {
      Placement p;
      p.rows = uniform_int(cfg.min_extent, cfg.max_extent);
      p.cols = uniform_int(cfg.min_extent, cfg.max_extent);
      p.top = uniform_int(0, h - p.rows);
      p.left = uniform_int(0, w - p.cols);
      p.ellipse = cfg.shapes == ShapeFamily::kEllipses || (cfg.shapes == ShapeFamily::kMixed && unit(rng) < 0.5);

      std::vector<int> trial = s.instances;
      bool touches_same = false;
      for (std::size_t i = 0; i < h && !touches_same; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
          if (!covers(p, i, j)) continue;
          // Reject if any 8-neighbour (or the pixel itself) belongs to a same-category instance.
          for (int di = -1; di <= 1 && !touches_same; ++di) {
            for (int dj = -1; dj <= 1; ++dj) {
              const auto ni = static_cast<std::ptrdiff_t>(i) + di, nj = static_cast<std::ptrdiff_t>(j) + dj;
              if (ni < 0 || nj < 0 || ni >= static_cast<std::ptrdiff_t>(h) || nj >= static_cast<std::ptrdiff_t>(w)) {
                continue;
              }
              const int other = s.instances[static_cast<std::size_t>(ni) * w + static_cast<std::size_t>(nj)];
              if (other != 0 && s.instance_category[static_cast<std::size_t>(other)] == category) {
                touches_same = true;
                break;
              }
            }
          }
          trial[i * w + j] = id;
        }
      }
      if (touches_same) continue;

      ok = true;
      for (int k = 1; k <= id && ok; ++k) {
        const auto [area, parts] = region_stats(trial, k, h, w);
        ok = area >= cfg.min_visible_area && parts == 1;
      }
      if (ok) {
        s.instances = std::move(trial);
        s.instance_category.push_back(category);
        placed.push_back(p);
      }
    }
    if (!ok) {
      throw UnsatisfiableScene("dataset: could not place instance " + std::to_string(id) + " of " +
                               std::to_string(order.size()) + " on a " + std::to_string(h) + "x" +
                               std::to_string(w) + " canvas");
    }
  }

  s.labels.resize(n);
  for (std::size_t k = 0; k < n; ++k) s.labels[k] = s.instance_category[static_cast<std::size_t>(s.instances[k])];

  // Colour ramps: one for the background over the whole canvas, one per instance over its box.
  struct Ramp {
    double cy, cx, dy, dx, half;
    Rgb direction;
  };
  auto make_ramp = [&](double top, double left, double rows, double cols) {
    const double angle = 2.0 * std::numbers::pi * unit(rng);
    Ramp r{top + (rows - 1) / 2, left + (cols - 1) / 2, std::sin(angle), std::cos(angle), 0.0, {}};
    r.half = std::max(0.5, (std::abs(r.dy) * (rows - 1) + std::abs(r.dx) * (cols - 1)) / 2);
    double norm = 0;
    for (double& v : r.direction) {
      v = unit(rng) * 2 - 1;
      norm += v * v;
    }
    norm = std::sqrt(std::max(norm, 1e-12));
    for (double& v : r.direction) v /= norm;
    return r;
  };
  std::vector<Ramp> ramps;
  ramps.push_back(make_ramp(0, 0, static_cast<double>(h), static_cast<double>(w)));
  for (const Placement& p : placed) {
    ramps.push_back(make_ramp(static_cast<double>(p.top), static_cast<double>(p.left), static_cast<double>(p.rows),
                              static_cast<double>(p.cols)));
  }

  Rgb shift{};
  for (double& v : shift) v = cfg.illumination * (2 * unit(rng) - 1);

  s.image = Tensor({3, h, w});
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const int id = s.instances[i * w + j];
      const Ramp& r = ramps[static_cast<std::size_t>(id)];
      const double t = ((static_cast<double>(i) - r.cy) * r.dy + (static_cast<double>(j) - r.cx) * r.dx) / r.half;
      const Rgb base = category_color(cfg, static_cast<std::size_t>(s.labels[i * w + j]));
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = base[c] + shift[c] + 0.5 * cfg.gradient * t * r.direction[c] + cfg.noise * (2 * unit(rng) - 1);
        s.image.at(c, i, j) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return s;
}

}  // namespace consensus
