#include "consensus/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "consensus/ops.hpp"

namespace consensus {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kBaseline:
      return "baseline";
    case Variant::kIct:
      return "ict";
    case Variant::kCct:
      return "cct";
    case Variant::kCfnet:
      return "cfnet";
    case Variant::kNonLocal:
      return "nl";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::kBaseline, Variant::kIct, Variant::kCct, Variant::kCfnet, Variant::kNonLocal}) {
    if (variant_name(v) == name) return v;
  }
  throw std::invalid_argument("unknown model variant '" + std::string(name) + "'");
}

ToyModel::ToyModel(ModelConfig config) : config_(config) {
  if (config_.height % ModelConfig::kDownsample != 0 || config_.width % ModelConfig::kDownsample != 0) {
    throw std::invalid_argument("model: input size " + std::to_string(config_.height) + "x" +
                                std::to_string(config_.width) + " not divisible by 4");
  }
  if (config_.height == 0 || config_.width == 0 || config_.classes < 2) {
    throw std::invalid_argument("model: empty input or fewer than 2 classes");
  }
  if (config_.has_ict()) config_.ict.validate(config_.channels);
  if (config_.has_cct()) config_.cct.validate(config_.channels);
}

ParameterStore ToyModel::init_params(std::uint64_t seed) const {
  const ModelConfig& c = config_;
  ParameterStore store;
  add_conv(store, "stem.0", c.in_channels, c.channels, 3, InitScheme::kFanInRelu, seed);
  add_conv(store, "stem.1", c.channels, c.channels, 3, InitScheme::kFanInRelu, seed);
  add_conv(store, "stage_a", c.channels, c.channels, 3, InitScheme::kFanInRelu, seed);
  if (c.has_ict()) add_ict_params(store, "ict", c.channels, c.ict, seed);
  add_conv(store, "stage_b", c.channels, c.channels, 3, InitScheme::kFanInRelu, seed);
  if (c.has_cct()) add_cct_params(store, "cct", c.channels, c.feature_height(), c.feature_width(), c.cct, seed);
  if (c.has_nonlocal()) add_nonlocal_params(store, "nl", c.channels, c.cct.reduction, seed);
  add_conv(store, "classifier", c.channels, c.classes, 1, InitScheme::kFanIn, seed);
  add_conv(store, "aux", c.channels, c.classes, 1, InitScheme::kFanIn, seed);
  return store;
}

ModelOutput ToyModel::forward(const Binding& params, Var image) const {
  const ModelConfig& c = config_;
  if (image.shape() != Shape{c.in_channels, c.height, c.width}) {
    throw ShapeError("model: image " + shape_str(image.shape()) + ", expected " +
                     shape_str({c.in_channels, c.height, c.width}));
  }
  auto conv = [&](Var x, std::string_view name, std::size_t stride = 1) {
    const ConvParams p = bind_conv(params, name);
    return ops::conv2d(x, p.weight, p.bias, {.stride = stride});
  };
  auto upsample = [&](Var x) {
    return c.upsample == UpsampleMode::kNearest ? ops::upsample_nearest(x, ModelConfig::kDownsample)
                                                : ops::upsample_bilinear(x, ModelConfig::kDownsample);
  };

  Var x = ops::scale(ops::add(image, image.tape().constant(Tensor(image.shape(), -c.input_mean))), 1.0 / c.input_std);
  x = ops::relu(conv(x, "stem.0", 2));
  x = ops::relu(conv(x, "stem.1", 2));
  x = ops::relu(conv(x, "stage_a"));
  if (c.has_ict()) x = ict_forward(x, bind_ict(params, "ict"), c.ict);
  Var aux = conv(x, "aux");

  x = ops::relu(conv(x, "stage_b"));
  ModelOutput out;
  if (c.has_cct()) {
    PhiMap phi;
    x = cct_forward(x, bind_cct(params, "cct"), c.cct, &phi);
    out.phi = phi;
  }
  if (c.has_nonlocal()) x = nonlocal_forward(x, bind_nonlocal(params, "nl"));

  out.main_logits = upsample(conv(x, "classifier"));
  out.aux_logits = upsample(aux);
  return out;
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  if (logits.value().rank() != 3) throw ShapeError("cross_entropy: logits must be K x H x W");
  const std::size_t k = logits.dim(0), n = logits.dim(1) * logits.dim(2);
  if (labels.size() != n) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                     " pixels");
  }
  const Tensor& lv = logits.value();
  Tensor probs({k, n});
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t p = 0; p < n; ++p) {
    const int label = labels[p];
    if (label == kIgnoreLabel) continue;
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                              std::to_string(k) + ")");
    }
    double peak = -INFINITY;
    for (std::size_t c = 0; c < k; ++c) peak = std::max(peak, lv[c * n + p]);
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += (probs[c * n + p] = std::exp(lv[c * n + p] - peak));
    for (std::size_t c = 0; c < k; ++c) probs[c * n + p] /= z;
    total += -(lv[static_cast<std::size_t>(label) * n + p] - peak - std::log(z));
    ++counted;
  }
  const double denom = counted == 0 ? 1.0 : static_cast<double>(counted);
  std::vector<int> kept(labels.begin(), labels.end());
  return logits.tape().record(
      Tensor::scalar(total / denom), {logits},
      [logits, probs = std::move(probs), kept = std::move(kept), k, n, denom](Tape& t, const Tensor& g) {
        if (!t.requires_grad(logits)) return;
        Tensor& dl = t.grad_buffer(logits);
        const double s = g[0] / denom;
        for (std::size_t p = 0; p < n; ++p) {
          if (kept[p] == kIgnoreLabel) continue;
          for (std::size_t c = 0; c < k; ++c) dl[c * n + p] += s * probs[c * n + p];
          dl[static_cast<std::size_t>(kept[p]) * n + p] -= s;
        }
      });
}

double total_loss(double main, double aux) { return main + kAuxLossWeight * aux; }

Var total_loss(Var main, Var aux) { return ops::add(main, ops::scale(aux, kAuxLossWeight)); }

std::vector<int> argmax_labels(const Tensor& logits) {
  const std::size_t k = logits.dim(0), n = logits.dim(1) * logits.dim(2);
  std::vector<int> out(n, 0);
  for (std::size_t p = 0; p < n; ++p) {
    double best = logits[p];
    for (std::size_t c = 1; c < k; ++c) {
      if (logits[c * n + p] > best) {
        best = logits[c * n + p];
        out[p] = static_cast<int>(c);
      }
    }
  }
  return out;
}

}  // namespace consensus
