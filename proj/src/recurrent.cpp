#include "consensus/recurrent.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "consensus/ops.hpp"

namespace consensus {

SweepState zero_state(Tape& tape, std::size_t hidden, std::size_t lanes) {
  return SweepState{tape.constant(Tensor::zeros({hidden, lanes})), tape.constant(Tensor::zeros({hidden, lanes}))};
}

SweepState lstm_step(const LstmCellParams& params, const SweepState& state, Var input, const LstmOptions& options) {
  const std::size_t d = params.hidden();
  if (input.value().rank() != 2 || input.dim(0) != params.input_channels()) {
    throw ShapeError("lstm_step: input " + shape_str(input.shape()) + " for a cell expecting " +
                     std::to_string(params.input_channels()) + " channels");
  }
  if (state.h.shape() != Shape{d, input.dim(1)} || state.c.shape() != state.h.shape()) {
    throw ShapeError("lstm_step: state " + shape_str(state.h.shape()) + " does not match " +
                     std::to_string(d) + " x " + std::to_string(input.dim(1)));
  }
  Var gates = ops::add_channel_bias(ops::matmul(params.weight, ops::concat({input, state.h}, 0)), params.bias);
  Var in_gate = ops::sigmoid(ops::narrow(gates, 0, 0, d));
  Var forget = ops::sigmoid(ops::narrow(gates, 0, d, d));
  Var out_gate = ops::sigmoid(ops::narrow(gates, 0, 2 * d, d));
  Var modulated = ops::tanh(ops::narrow(gates, 0, 3 * d, d));

  Var cell = ops::add(ops::mul(forget, state.c), ops::mul(in_gate, modulated));
  Var hidden = ops::mul(out_gate, ops::tanh(options.previous_cell_output ? state.c : cell));
  return SweepState{hidden, cell};
}

namespace {

// time_axis 1 sweeps rows, 2 sweeps columns; the other spatial axis holds lanes.
Var bidirectional_sweep(const BiLstmParams& params, Var x, std::size_t time_axis, const LstmOptions& options) {
  if (x.value().rank() != 3) throw ShapeError("bilstm: expected C x H x W, got " + shape_str(x.shape()));
  const std::size_t d = params.forward.hidden();
  if (params.backward.hidden() != d) throw ShapeError("bilstm: directions disagree on hidden size");
  const std::size_t steps = x.dim(time_axis);
  const std::size_t lanes = x.dim(time_axis == 1 ? 2 : 1);

  std::vector<Var> inputs;
  inputs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) inputs.push_back(ops::select(x, time_axis, t));

  Tape& tape = x.tape();
  std::vector<Var> fwd(steps), bwd(steps);
  SweepState state = zero_state(tape, d, lanes);
  for (std::size_t t = 0; t < steps; ++t) {
    state = lstm_step(params.forward, state, inputs[t], options);
    fwd[t] = state.h;
  }
  state = zero_state(tape, d, lanes);
  for (std::size_t t = steps; t-- > 0;) {
    state = lstm_step(params.backward, state, inputs[t], options);
    bwd[t] = state.h;
  }

  std::vector<Var> slices;
  slices.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) slices.push_back(ops::concat({fwd[t], bwd[t]}, 0));
  return ops::stack(slices, time_axis);
}

}  // namespace

Var bilstm_vertical(const BiLstmParams& params, Var x, const LstmOptions& options) {
  return bidirectional_sweep(params, x, 1, options);
}

Var bilstm_horizontal(const BiLstmParams& params, Var x, const LstmOptions& options) {
  return bidirectional_sweep(params, x, 2, options);
}

void add_lstm(ParameterStore& store, std::string_view prefix, std::size_t input_channels, std::size_t hidden,
              std::uint64_t seed) {
  const std::string p(prefix);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  store.add(p + ".W", uniform_tensor({4 * hidden, input_channels + hidden}, bound, seed, p + ".W"));
  store.add(p + ".b", Tensor::zeros({4 * hidden}));
}

void add_bilstm(ParameterStore& store, std::string_view prefix, std::size_t input_channels, std::size_t hidden,
                std::uint64_t seed) {
  const std::string p(prefix);
  add_lstm(store, p + ".fwd", input_channels, hidden, seed);
  add_lstm(store, p + ".bwd", input_channels, hidden, seed);
}

LstmCellParams bind_lstm(const Binding& binding, std::string_view prefix) {
  const std::string p(prefix);
  return LstmCellParams{binding[p + ".W"], binding[p + ".b"]};
}

BiLstmParams bind_bilstm(const Binding& binding, std::string_view prefix) {
  const std::string p(prefix);
  return BiLstmParams{bind_lstm(binding, p + ".fwd"), bind_lstm(binding, p + ".bwd")};
}

}  // namespace consensus
