#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "consensus/data.hpp"
#include "consensus/network.hpp"
#include "consensus/optim.hpp"

namespace consensus {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One experiment. Parsed from `key = value` lines; `#` starts a comment.
///
/// Keys: model, r, d, reduction, seed, base_lr, total_iter, image_size,
/// classes, instances_per_class (n or lo-hi), extent (n or lo-hi), channels, train_samples,
/// test_samples, eval_every, seeds, noise, gradient, color_spread, illumination,
/// eq6_printed, ln_activation, upsample (nearest|bilinear), checked,
/// head_bias_init, record_timing.
struct RunConfig {
  Variant model = Variant::kCfnet;
  std::size_t r = 5;
  std::size_t d = 8;
  std::size_t reduction = 4;
  std::uint64_t seed = 0;
  double base_lr = 0.01;
  std::size_t total_iter = 2000;
  std::size_t image_size = 32;
  std::size_t classes = 4;
  std::size_t min_instances_per_class = 2;
  std::size_t max_instances_per_class = 2;
  std::size_t min_extent = 6;
  std::size_t max_extent = 12;
  std::size_t channels = 16;
  std::size_t train_samples = 600;
  std::size_t test_samples = 100;
  std::size_t eval_every = 500;
  std::size_t seeds = 5;
  double noise = 0.08;
  double gradient = 0.5;
  double color_spread = 0.12;
  double illumination = 0.0;
  bool eq6_printed = false;
  bool ln_activation = false;
  UpsampleMode upsample = UpsampleMode::kNearest;
  bool checked = false;
  double head_bias_init = 1.0;
  bool record_timing = false;

  ModelConfig model_config() const;
  /// Dataset for this run's seed.
  DatasetConfig dataset_config() const;
  SgdConfig sgd_config() const;

  void validate() const;
};

RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string format_run_config(const RunConfig& cfg);

}  // namespace consensus
