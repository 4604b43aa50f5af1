#include "consensus/tape.hpp"

#include <stdexcept>

namespace consensus {

const Tensor& Var::value() const { return tape_->value(*this); }
bool Var::requires_grad() const { return tape_->requires_grad(*this); }

Tape::Tape(TapeOptions options) : options_(options) {}

Var Tape::leaf(Tensor value, bool requires_grad) {
  if (options_.checked && !value.all_finite()) throw NumericError("tape: non-finite leaf value");
  entries_.push_back(Entry{std::move(value), Tensor{}, requires_grad && options_.record, false});
  return Var(this, static_cast<int>(entries_.size() - 1));
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record_impl(std::move(value), inputs.begin(), inputs.size(), std::move(backward));
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  return record_impl(std::move(value), inputs.data(), inputs.size(), std::move(backward));
}

Var Tape::record_impl(Tensor value, const Var* first, std::size_t count, BackwardFn backward) {
  if (options_.checked && !value.all_finite()) throw NumericError("tape: op produced a non-finite value");
  bool needs_grad = false;
  for (std::size_t i = 0; i < count; ++i) {
    if (first[i].tape_ != this) throw std::invalid_argument("tape: input recorded on a different tape");
    needs_grad = needs_grad || requires_grad(first[i]);
  }
  needs_grad = needs_grad && options_.record;
  entries_.push_back(Entry{std::move(value), Tensor{}, needs_grad, false});
  const int out = static_cast<int>(entries_.size() - 1);
  if (needs_grad) {
    Node node;
    node.output = out;
    node.inputs.reserve(count);
    for (std::size_t i = 0; i < count; ++i) node.inputs.push_back(first[i].id_);
    node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
  }
  return Var(this, out);
}

Tensor Tape::grad(Var v) const {
  const Entry& e = entries_.at(static_cast<std::size_t>(v.id()));
  if (!e.requires_grad) throw std::logic_error("tape: grad requested for a value that does not require grad");
  return e.has_grad ? e.grad : Tensor::zeros(e.value.shape());
}

Tensor& Tape::grad_buffer(Var v) {
  Entry& e = entries_[static_cast<std::size_t>(v.id())];
  if (!e.has_grad) {
    e.grad = Tensor::zeros(e.value.shape());
    e.has_grad = true;
  }
  return e.grad;
}

void Tape::accumulate(Var v, const Tensor& g) {
  if (!requires_grad(v)) return;
  Tensor& buf = grad_buffer(v);
  if (buf.shape() != g.shape()) {
    throw ShapeError("tape: gradient " + shape_str(g.shape()) + " for value " + shape_str(buf.shape()));
  }
  for (std::size_t i = 0; i < buf.numel(); ++i) buf[i] += g[i];
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw std::invalid_argument("backward: loss lives on a different tape");
  if (value(loss).numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " + shape_str(value(loss).shape()));
  }
  if (!requires_grad(loss)) throw std::logic_error("backward: loss is detached from every gradient leaf");
  if (backward_done_) throw std::logic_error("backward: tape already consumed");
  backward_done_ = true;

  grad_buffer(loss).fill(1.0);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Entry& out = entries_[static_cast<std::size_t>(it->output)];
    if (!out.has_grad) continue;  // output never reached the loss
    // entries_ does not grow during the sweep, so the reference stays valid.
    it->backward(*this, out.grad);
  }
}

}  // namespace consensus
