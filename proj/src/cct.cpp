#include "consensus/cct.hpp"

#include <stdexcept>
#include <string>

#include "consensus/ops.hpp"

namespace consensus {

void CctConfig::validate(std::size_t channels) const {
  if (reduction == 0 || channels % reduction != 0) {
    throw std::invalid_argument("cct: " + std::to_string(channels) + " channels not divisible by reduction " +
                                std::to_string(reduction));
  }
  if (hidden == 0) throw std::invalid_argument("cct: hidden size must be positive");
}

void add_cct_params(ParameterStore& store, std::string_view prefix, std::size_t channels, std::size_t height,
                    std::size_t width, const CctConfig& cfg, std::uint64_t seed) {
  cfg.validate(channels);
  const std::string p(prefix);
  const std::size_t reduced = channels / cfg.reduction, d = cfg.hidden;
  add_conv(store, p + ".reduce", channels, reduced, 1, InitScheme::kFanIn, seed);
  add_bilstm(store, p + ".gn.v", reduced, d, seed);
  add_bilstm(store, p + ".gn.h", 2 * d, d, seed);
  add_conv(store, p + ".head", 2 * d, height * width, 1, InitScheme::kFanIn, seed);
  store.get(p + ".head.b").fill(cfg.head_bias_init);
  add_conv(store, p + ".expand", reduced, channels, 1, InitScheme::kZero, seed);
}

CctParams bind_cct(const Binding& binding, std::string_view prefix) {
  const std::string p(prefix);
  return CctParams{bind_conv(binding, p + ".reduce"), bind_bilstm(binding, p + ".gn.v"),
                   bind_bilstm(binding, p + ".gn.h"), bind_conv(binding, p + ".head"),
                   bind_conv(binding, p + ".expand")};
}

PhiMap global_network(Var reduced, const CctParams& params, const CctConfig& cfg) {
  if (reduced.value().rank() != 3) throw ShapeError("cct: expected C1 x H x W, got " + shape_str(reduced.shape()));
  const std::size_t h = reduced.dim(1), w = reduced.dim(2), n = h * w;
  if (params.head.weight.dim(0) != n) {
    throw ShapeError("cct: head was built for N = " + std::to_string(params.head.weight.dim(0)) +
                     " positions, feature map has " + std::to_string(n));
  }
  Var rows = bilstm_vertical(params.vertical, reduced, cfg.lstm);
  Var cols = bilstm_horizontal(params.horizontal, rows, cfg.lstm);
  Var channels = ops::conv2d(cols, params.head.weight, params.head.bias);  // N x H x W
  // Channel k at position p is phi[p, k].
  return PhiMap{ops::transpose(ops::reshape(channels, {n, n})), h, w};
}

Var apply_category_transform(Var reduced, const PhiMap& phi) {
  if (reduced.value().rank() != 3) throw ShapeError("cct: expected C1 x H x W, got " + shape_str(reduced.shape()));
  const std::size_t c = reduced.dim(0), h = reduced.dim(1), w = reduced.dim(2), n = h * w;
  if (phi.weights.shape() != Shape{n, n}) {
    throw ShapeError("cct: phi " + shape_str(phi.weights.shape()) + " for a " + std::to_string(h) + "x" +
                     std::to_string(w) + " map");
  }
  Var flat = ops::reshape(reduced, {c, n});
  Var mixed = ops::matmul(flat, ops::transpose(ops::divide(phi.weights, static_cast<double>(n))));
  return ops::reshape(mixed, {c, h, w});
}

Var cct_forward(Var x, const CctParams& params, const CctConfig& cfg) { return cct_forward(x, params, cfg, nullptr); }

Var cct_forward(Var x, const CctParams& params, const CctConfig& cfg, PhiMap* phi_out) {
  if (x.value().rank() != 3 || x.dim(0) != params.reduce.weight.dim(1)) {
    throw ShapeError("cct: input " + shape_str(x.shape()) + " does not match reduce " +
                     shape_str(params.reduce.weight.shape()));
  }
  Var reduced = ops::conv2d(x, params.reduce.weight, params.reduce.bias);
  PhiMap phi = global_network(reduced, params, cfg);
  Var expanded = ops::conv2d(apply_category_transform(reduced, phi), params.expand.weight, params.expand.bias);
  if (phi_out != nullptr) *phi_out = phi;
  return cfg.residual ? ops::add(x, expanded) : expanded;
}

void add_nonlocal_params(ParameterStore& store, std::string_view prefix, std::size_t channels, std::size_t reduction,
                         std::uint64_t seed) {
  if (reduction == 0 || channels % reduction != 0) throw std::invalid_argument("nonlocal: bad reduction");
  const std::string p(prefix);
  const std::size_t reduced = channels / reduction;
  add_conv(store, p + ".reduce", channels, reduced, 1, InitScheme::kFanIn, seed);
  add_conv(store, p + ".query", reduced, reduced, 1, InitScheme::kFanIn, seed);
  add_conv(store, p + ".key", reduced, reduced, 1, InitScheme::kFanIn, seed);
  add_conv(store, p + ".value", reduced, reduced, 1, InitScheme::kFanIn, seed);
  add_conv(store, p + ".expand", reduced, channels, 1, InitScheme::kZero, seed);
}

NonLocalParams bind_nonlocal(const Binding& binding, std::string_view prefix) {
  const std::string p(prefix);
  return NonLocalParams{bind_conv(binding, p + ".reduce"), bind_conv(binding, p + ".query"),
                        bind_conv(binding, p + ".key"), bind_conv(binding, p + ".value"),
                        bind_conv(binding, p + ".expand")};
}

Var nonlocal_forward(Var x, const NonLocalParams& params) {
  if (x.value().rank() != 3 || x.dim(0) != params.reduce.weight.dim(1)) {
    throw ShapeError("nonlocal: input " + shape_str(x.shape()) + " does not match reduce " +
                     shape_str(params.reduce.weight.shape()));
  }
  const std::size_t h = x.dim(1), w = x.dim(2), n = h * w;
  Var reduced = ops::conv2d(x, params.reduce.weight, params.reduce.bias);
  const std::size_t c = reduced.dim(0);
  auto project = [&](const ConvParams& cp) {
    return ops::reshape(ops::conv2d(reduced, cp.weight, cp.bias), {c, n});
  };
  Var q = project(params.query);
  Var k = project(params.key);
  Var v = project(params.value);
  Var attention = ops::softmax_rows(ops::matmul(ops::transpose(q), k));  // N x N, rows sum to 1
  Var mixed = ops::reshape(ops::matmul(v, ops::transpose(attention)), {c, h, w});
  return ops::add(x, ops::conv2d(mixed, params.expand.weight, params.expand.bias));
}

}  // namespace consensus
