#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "consensus/tensor.hpp"

namespace consensus {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid as long as
/// the owning tape lives.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

struct TapeOptions {
  /// Reject non-finite op outputs.
  bool checked = true;
  /// When false nothing is recorded for backward (evaluation mode).
  bool record = true;
};

/// Reverse-mode gradient tape. Values are immutable once recorded; nodes
/// are appended in execution order so the list is topologically sorted.
class Tape {
 public:
  /// Receives the gradient of the node's output and accumulates into the
  /// gradients of its inputs via Tape::accumulate.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  explicit Tape(TapeOptions options = {});
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = false);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Records an op output. The backward rule is kept only if some input
  /// requires a gradient and recording is enabled.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return entries_[static_cast<std::size_t>(v.id())].value; }
  bool requires_grad(Var v) const { return entries_[static_cast<std::size_t>(v.id())].requires_grad; }

  /// Gradient of the last backward() loss w.r.t. v; zeros if v did not
  /// influence the loss. Throws if v does not require a gradient.
  Tensor grad(Var v) const;

  /// Adds g into v's gradient buffer; no-op if v does not require grad.
  void accumulate(Var v, const Tensor& g);
  /// Mutable gradient buffer for in-place accumulation; allocated on demand.
  /// Only valid for vars that require grad.
  Tensor& grad_buffer(Var v);

  /// Runs the reverse sweep from a single-element loss.
  void backward(Var loss);

  bool checked() const { return options_.checked; }
  bool recording() const { return options_.record; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t value_count() const { return entries_.size(); }

 private:
  struct Entry {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
  };
  struct Node {
    std::vector<int> inputs;
    int output = -1;
    BackwardFn backward;
  };

  Var record_impl(Tensor value, const Var* first, std::size_t count, BackwardFn backward);

  TapeOptions options_;
  std::vector<Entry> entries_;
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace consensus
