#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

#include "consensus/cct.hpp"
#include "consensus/ict.hpp"
#include "consensus/params.hpp"

namespace consensus {

inline constexpr int kIgnoreLabel = 255;
inline constexpr double kAuxLossWeight = 0.4;

enum class Variant { kBaseline, kIct, kCct, kCfnet, kNonLocal };

std::string_view variant_name(Variant v);
/// Accepts baseline | ict | cct | cfnet | nl.
Variant parse_variant(std::string_view name);

enum class UpsampleMode { kNearest, kBilinear };

struct ModelConfig {
  static constexpr std::size_t kDownsample = 4;

  Variant variant = Variant::kCfnet;
  std::size_t in_channels = 3;
  std::size_t channels = 16;
  std::size_t classes = 4;
  std::size_t height = 32;
  std::size_t width = 32;
  IctConfig ict;
  CctConfig cct;
  UpsampleMode upsample = UpsampleMode::kNearest;
  /// The image enters the stem as (image - input_mean) / input_std.
  double input_mean = 0.5;
  double input_std = 0.25;

  bool has_ict() const { return variant == Variant::kIct || variant == Variant::kCfnet; }
  bool has_cct() const { return variant == Variant::kCct || variant == Variant::kCfnet; }
  bool has_nonlocal() const { return variant == Variant::kNonLocal; }
  std::size_t feature_height() const { return height / kDownsample; }
  std::size_t feature_width() const { return width / kDownsample; }
};

struct ModelOutput {
  Var main_logits;  // K x H x W
  Var aux_logits;   // K x H x W
  std::optional<PhiMap> phi;
};

/// Toy scene parser: two stride-2 3x3 convs, stage A (3x3) with optional
/// ICT, stage B (3x3) with optional CCT, 1x1 classifier, 1x1 auxiliary
/// classifier on stage A, upsampled x4 back to the input size.
class ToyModel {
 public:
  explicit ToyModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  /// Layer names are shared across variants, so equal seeds give equal
  /// backbone weights for baseline and cfnet.
  ParameterStore init_params(std::uint64_t seed) const;

  ModelOutput forward(const Binding& params, Var image) const;

 private:
  ModelConfig config_;
};

/// Mean over non-ignored pixels of -log softmax(logits)[label].
/// logits: K x H x W, labels: H*W ids in [0, K) or kIgnoreLabel.
Var cross_entropy(Var logits, std::span<const int> labels);

/// main + 0.4 * aux
double total_loss(double main, double aux);
Var total_loss(Var main, Var aux);

/// Per-pixel argmax over the class axis of K x H x W logits.
std::vector<int> argmax_labels(const Tensor& logits);

}  // namespace consensus
