#include "consensus/ict.hpp"

#include <stdexcept>
#include <string>

#include "consensus/ops.hpp"

namespace consensus {

void IctConfig::validate(std::size_t channels) const {
  if (window < 3 || window % 2 == 0) {
    throw std::invalid_argument("ict: window must be odd and >= 3, got " + std::to_string(window));
  }
  if (reduction == 0 || channels % reduction != 0) {
    throw std::invalid_argument("ict: " + std::to_string(channels) + " channels not divisible by reduction " +
                                std::to_string(reduction));
  }
}

void add_ict_params(ParameterStore& store, std::string_view prefix, std::size_t channels, const IctConfig& cfg,
                    std::uint64_t seed) {
  cfg.validate(channels);
  const std::string p(prefix);
  const std::size_t reduced = channels / cfg.reduction;
  add_conv(store, p + ".reduce", channels, reduced, 1, InitScheme::kFanIn, seed);
  add_conv(store, p + ".ln.local", reduced, reduced, cfg.window, InitScheme::kFanIn, seed);
  add_conv(store, p + ".ln.head", reduced, cfg.window * cfg.window, 1, InitScheme::kFanIn, seed);
  store.get(p + ".ln.head.b").fill(cfg.head_bias_init);
  add_conv(store, p + ".expand", reduced, channels, 1, InitScheme::kZero, seed);
}

IctParams bind_ict(const Binding& binding, std::string_view prefix) {
  const std::string p(prefix);
  return IctParams{bind_conv(binding, p + ".reduce"), bind_conv(binding, p + ".ln.local"),
                   bind_conv(binding, p + ".ln.head"), bind_conv(binding, p + ".expand")};
}

Var local_network(Var reduced, const IctParams& params, const IctConfig& cfg) {
  if (params.ln_head.weight.dim(0) != cfg.window * cfg.window) {
    throw ShapeError("ict: head emits " + std::to_string(params.ln_head.weight.dim(0)) + " channels, window " +
                     std::to_string(cfg.window) + " needs r^2");
  }
  Var context = ops::conv2d(reduced, params.ln_local.weight, params.ln_local.bias);
  if (cfg.ln_activation) context = ops::relu(context);
  return ops::conv2d(context, params.ln_head.weight, params.ln_head.bias);
}

Var apply_instance_transform(Var reduced, Var theta, std::size_t window) {
  if (window % 2 == 0) throw ShapeError("ict: window must be odd, got " + std::to_string(window));
  if (reduced.value().rank() != 3 || theta.value().rank() != 3) {
    throw ShapeError("ict: expected rank-3 feature map and theta");
  }
  const std::size_t channels = reduced.dim(0), h = reduced.dim(1), w = reduced.dim(2), rr = window * window;
  if (theta.shape() != Shape{rr, h, w}) {
    throw ShapeError("ict: theta " + shape_str(theta.shape()) + " for map " + shape_str(reduced.shape()) +
                     " and window " + std::to_string(window));
  }
  const std::size_t n = h * w;
  Var patches = ops::unfold(reduced, window);                              // C1 x N x r^2
  // normalising theta first keeps the r^2 delta an exact identity
  Var weights = ops::divide(ops::transpose(ops::reshape(theta, {rr, n})), static_cast<double>(rr));  // N x r^2
  Var q = ops::sum_last_axis(ops::mul_trailing(patches, weights));                                  // C1 x N
  return ops::reshape(q, {channels, h, w});
}

Var ict_forward(Var x, const IctParams& params, const IctConfig& cfg) {
  if (x.value().rank() != 3 || x.dim(0) != params.reduce.weight.dim(1)) {
    throw ShapeError("ict: input " + shape_str(x.shape()) + " does not match reduce " +
                     shape_str(params.reduce.weight.shape()));
  }
  Var reduced = ops::conv2d(x, params.reduce.weight, params.reduce.bias);
  Var theta = local_network(reduced, params, cfg);
  Var transformed = apply_instance_transform(reduced, theta, cfg.window);
  Var expanded = ops::conv2d(transformed, params.expand.weight, params.expand.bias);
  return cfg.residual ? ops::add(x, expanded) : expanded;
}

}  // namespace consensus
