#include "consensus/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace consensus {

double poly_lr(double base_lr, std::size_t iter, std::size_t total_iter, double power) {
  if (total_iter == 0) throw std::invalid_argument("poly_lr: total_iter must be positive");
  if (iter > total_iter) {
    throw std::out_of_range("poly_lr: iter " + std::to_string(iter) + " beyond total " + std::to_string(total_iter));
  }
  const double progress = static_cast<double>(iter) / static_cast<double>(total_iter);
  return base_lr * std::pow(1.0 - progress, power);
}

SgdOptimizer::SgdOptimizer(SgdConfig config, bool checked) : config_(config), checked_(checked) {}

double SgdOptimizer::current_lr() const {
  return poly_lr(config_.base_lr, iteration_, config_.total_iter, config_.power);
}

double SgdOptimizer::step(ParameterStore& params, const GradientMap& grads) {
  const double lr = current_lr();
  for (const auto& name : params.names()) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    Tensor& p = params.get(name);
    const Tensor& g = git->second;
    if (g.shape() != p.shape()) {
      throw ShapeError("sgd: gradient " + shape_str(g.shape()) + " for parameter '" + name + "' " +
                       shape_str(p.shape()));
    }
    if (checked_ && !g.all_finite()) throw NumericError("sgd: non-finite gradient for '" + name + "'");
    auto [vit, inserted] = velocity_.try_emplace(name, Tensor::zeros(p.shape()));
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < p.numel(); ++i) {
      v[i] = config_.momentum * v[i] + g[i] + config_.weight_decay * p[i];
      p[i] -= lr * v[i];
    }
  }
  ++iteration_;
  return lr;
}

}  // namespace consensus
