#pragma once

#include <cstdint>
#include <string_view>

#include "consensus/params.hpp"

namespace consensus {

/// One LSTM cell. weight is 4d x (C + d) acting on [input; hidden], bias is
/// 4d. Gate blocks along the 4d axis: input, forget, output, modulated input.
struct LstmCellParams {
  Var weight;
  Var bias;

  std::size_t hidden() const { return weight.dim(0) / 4; }
  std::size_t input_channels() const { return weight.dim(1) - hidden(); }
};

/// Hidden and cell state, each d x L for L independent lanes.
struct SweepState {
  Var h;
  Var c;
};

struct LstmOptions {
  /// Use h_t = o_t * tanh(c_{t-1}) instead of the standard o_t * tanh(c_t).
  bool previous_cell_output = false;
};

struct BiLstmParams {
  LstmCellParams forward;
  LstmCellParams backward;
};

SweepState zero_state(Tape& tape, std::size_t hidden, std::size_t lanes);

/// Advances every lane by one step with shared weights. input is C x L.
SweepState lstm_step(const LstmCellParams& params, const SweepState& state, Var input,
                     const LstmOptions& options = {});

/// Rows are time steps (top to bottom forward, bottom to top backward) and
/// columns are lanes. x: C x H x W -> 2d x H x W, forward hidden first.
Var bilstm_vertical(const BiLstmParams& params, Var x, const LstmOptions& options = {});

/// Columns are time steps and rows are lanes. x: C x H x W -> 2d x H x W.
Var bilstm_horizontal(const BiLstmParams& params, Var x, const LstmOptions& options = {});

void add_lstm(ParameterStore& store, std::string_view prefix, std::size_t input_channels, std::size_t hidden,
              std::uint64_t seed);
/// Adds prefix.fwd and prefix.bwd cells.
void add_bilstm(ParameterStore& store, std::string_view prefix, std::size_t input_channels, std::size_t hidden,
                std::uint64_t seed);

LstmCellParams bind_lstm(const Binding& binding, std::string_view prefix);
BiLstmParams bind_bilstm(const Binding& binding, std::string_view prefix);

}  // namespace consensus
