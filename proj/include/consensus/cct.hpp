#pragma once

#include <cstdint>
#include <string_view>

#include "consensus/params.hpp"
#include "consensus/recurrent.hpp"

namespace consensus {

struct CctConfig {
  std::size_t reduction = 4;  // C1 = C / reduction
  std::size_t hidden = 8;     // d, shared by both sweeps
  bool residual = true;
  LstmOptions lstm;
  /// Initial value of the phi head bias. 1.0 starts phi as uniform averaging.
  double head_bias_init = 0.0;

  void validate(std::size_t channels) const;
};

/// Category consensus transform parameters for a fixed H x W:
///   reduce 1x1 C -> C1
///   gn.v   BiLSTM over rows,    C1 -> 2d
///   gn.h   BiLSTM over columns, 2d -> 2d
///   head   1x1 2d -> N (N = H*W)
///   expand 1x1 C1 -> C
struct CctParams {
  ConvParams reduce;
  BiLstmParams vertical;
  BiLstmParams horizontal;
  ConvParams head;
  ConvParams expand;
};

/// N x N transform; row i*W + j weighs every position for output (i, j).
struct PhiMap {
  Var weights;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t positions() const { return height * width; }
};

void add_cct_params(ParameterStore& store, std::string_view prefix, std::size_t channels, std::size_t height,
                    std::size_t width, const CctConfig& cfg, std::uint64_t seed);
CctParams bind_cct(const Binding& binding, std::string_view prefix);

PhiMap global_network(Var reduced, const CctParams& params, const CctConfig& cfg);

/// F[:, p] = 1/N * sum_q phi[p, q] * E[:, q]
Var apply_category_transform(Var reduced, const PhiMap& phi);

/// Y = X + expand(apply_category_transform(E, global_network(E))), E = reduce(X).
Var cct_forward(Var x, const CctParams& params, const CctConfig& cfg);

/// Same as cct_forward but also hands back phi for inspection.
Var cct_forward(Var x, const CctParams& params, const CctConfig& cfg, PhiMap* phi_out);

// Non-local comparison unit: pairwise weights softmax(q_p . k_q) from 1x1
// projections of E, aggregation of a 1x1 value projection, expand, residual.
struct NonLocalParams {
  ConvParams reduce;
  ConvParams query;
  ConvParams key;
  ConvParams value;
  ConvParams expand;
};

void add_nonlocal_params(ParameterStore& store, std::string_view prefix, std::size_t channels, std::size_t reduction,
                         std::uint64_t seed);
NonLocalParams bind_nonlocal(const Binding& binding, std::string_view prefix);
Var nonlocal_forward(Var x, const NonLocalParams& params);

}  // namespace consensus
