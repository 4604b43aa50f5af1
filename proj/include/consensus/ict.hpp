#pragma once

#include <cstdint>
#include <string_view>

#include "consensus/params.hpp"

namespace consensus {

struct IctConfig {
  std::size_t window = 5;     // r, odd and >= 3
  std::size_t reduction = 4;  // C1 = C / reduction
  bool residual = true;
  /// Insert a ReLU between the local network's r x r and 1 x 1 layers.
  bool ln_activation = false;
  /// Initial value of the ln_head bias. 1 starts theta near the mean filter.
  double head_bias_init = 0.0;

  void validate(std::size_t channels) const;
};

/// Instance consensus transform parameters:
///   reduce   1x1  C  -> C1
///   ln_local rxr  C1 -> C1   (context around each position)
///   ln_head  1x1  C1 -> r^2  (per-position window weights)
///   expand   1x1  C1 -> C
struct IctParams {
  ConvParams reduce;
  ConvParams ln_local;
  ConvParams ln_head;
  ConvParams expand;
};

/// Registers prefix.{reduce,ln.local,ln.head,expand}.{W,b}. expand starts at
/// zero so the residual unit is the identity at initialisation.
void add_ict_params(ParameterStore& store, std::string_view prefix, std::size_t channels, const IctConfig& cfg,
                    std::uint64_t seed);
IctParams bind_ict(const Binding& binding, std::string_view prefix);

/// theta: r^2 x H x W window weights generated from the reduced map.
Var local_network(Var reduced, const IctParams& params, const IctConfig& cfg);

/// Q[c, i, j] = 1/r^2 * sum over offsets (dh, dw) of
///   theta[(dh+R)*r + (dw+R), i, j] * P[c, i+dh, j+dw]
/// with R = (r-1)/2 and zeros outside the map. Computed as
/// unfold -> multiply by theta -> sum over the window axis.
Var apply_instance_transform(Var reduced, Var theta, std::size_t window);

/// Y = X + expand(apply_instance_transform(P, local_network(P))), P = reduce(X).
Var ict_forward(Var x, const IctParams& params, const IctConfig& cfg);

}  // namespace consensus
