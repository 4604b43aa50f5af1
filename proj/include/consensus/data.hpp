#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "consensus/tensor.hpp"

namespace consensus {

class UnsatisfiableScene : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ShapeFamily { kRectangles, kEllipses, kMixed };

/// Synthetic scene description. Category 0 is background; categories
/// 1..classes-1 are drawn as instances.
struct DatasetConfig {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t classes = 4;
  /// Instances per object category, drawn uniformly from [min, max].
  std::size_t min_instances_per_class = 2;
  std::size_t max_instances_per_class = 2;
  /// When non-empty (size classes-1), exact counts for categories 1..K-1.
  std::vector<std::size_t> instances_per_category;
  ShapeFamily shapes = ShapeFamily::kMixed;
  std::size_t min_extent = 6;  // shape bounding box side, pixels
  std::size_t max_extent = 12;
  std::size_t min_visible_area = 8;
  /// Distance of category base colours from the palette centre.
  double color_spread = 0.12;
  /// Peak-to-peak colour ramp across each instance (and the background).
  double gradient = 0.5;
  /// Per-pixel uniform texture noise half-width.
  double noise = 0.08;
  /// Half-width of a per-image RGB offset shared by every pixel.
  double illumination = 0.0;
  std::uint64_t seed = 0;
  std::size_t max_attempts = 400;

  /// Throws std::invalid_argument on impossible geometry or a palette whose
  /// closest category pair is not within the gradient amplitude.
  void validate() const;
};

struct SceneSample {
  std::size_t height = 0;
  std::size_t width = 0;
  Tensor image;                      // 3 x H x W, values in [0, 1]
  std::vector<int> labels;           // H*W category ids
  std::vector<int> instances;        // H*W instance ids, 0 = background
  std::vector<int> instance_category;  // indexed by instance id; [0] = 0
};

using Rgb = std::array<double, 3>;

/// Base colour of a category for a given config.
Rgb category_color(const DatasetConfig& cfg, std::size_t category);

/// Deterministic in (cfg.seed, index). Later instances occlude earlier
/// ones; every instance stays one 4-connected region and instances of the
/// same category never touch (8-neighbourhood).
SceneSample generate_scene(const DatasetConfig& cfg, std::uint64_t index);

/// Number of 4-connected components of pixels where mask is true.
std::size_t count_components(std::span<const std::uint8_t> mask, std::size_t height, std::size_t width);

}  // namespace consensus
