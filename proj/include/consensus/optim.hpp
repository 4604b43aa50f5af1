#pragma once

#include <cstddef>
#include <map>
#include <string>

#include "consensus/params.hpp"

namespace consensus {

struct SgdConfig {
  double base_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double power = 0.9;
  std::size_t total_iter = 1;
};

/// base_lr * (1 - iter / total_iter)^power, for 0 <= iter <= total_iter.
double poly_lr(double base_lr, std::size_t iter, std::size_t total_iter, double power = 0.9);

/// Momentum SGD with L2 weight decay folded into the velocity:
///   v <- momentum * v + grad + weight_decay * param
///   param <- param - lr * v
/// with lr following the poly schedule of the step counter.
class SgdOptimizer {
 public:
  explicit SgdOptimizer(SgdConfig config, bool checked = true);

  /// Applies one update and returns the learning rate used.
  double step(ParameterStore& params, const GradientMap& grads);

  std::size_t iteration() const { return iteration_; }
  double current_lr() const;
  const SgdConfig& config() const { return config_; }
  const Tensor& velocity(const std::string& name) const { return velocity_.at(name); }

 private:
  SgdConfig config_;
  bool checked_;
  std::size_t iteration_ = 0;
  std::map<std::string, Tensor> velocity_;
};

}  // namespace consensus
