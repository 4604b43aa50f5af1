#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "consensus/tape.hpp"

namespace consensus {

/// Named parameter tensors in insertion order. Names are dotted paths such
/// as "ict.reduce.W".
class ParameterStore {
 public:
  void add(std::string name, Tensor value);
  bool contains(std::string_view name) const;
  Tensor& get(std::string_view name);
  const Tensor& get(std::string_view name) const;

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  std::size_t scalar_count() const;

  /// True if any parameter name starts with prefix.
  bool has_prefix(std::string_view prefix) const;

  bool operator==(const ParameterStore& other) const;

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, Tensor> values_;
};

using GradientMap = std::map<std::string, Tensor>;

/// Parameters registered as leaves on one tape.
class Binding {
 public:
  Binding(Tape& tape, const ParameterStore& store, bool requires_grad = true);

  Var operator[](std::string_view name) const;
  Tape& tape() const { return *tape_; }

  /// Gradients for every parameter after tape.backward().
  GradientMap gradients() const;

 private:
  Tape* tape_;
  std::vector<std::pair<std::string, Var>> vars_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Conv layer handle: weight Cout x Cin x k x k, bias Cout.
struct ConvParams {
  Var weight;
  Var bias;
};

ConvParams bind_conv(const Binding& binding, std::string_view prefix);

enum class InitScheme {
  kZero,        // weight and bias zero
  kFanIn,       // U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero bias
  kFanInRelu,   // U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero bias
};

/// Adds prefix.W / prefix.b. The RNG stream is derived from (seed, name) so
/// the same layer name gets the same values in every model variant.
void add_conv(ParameterStore& store, std::string_view prefix, std::size_t in_channels, std::size_t out_channels,
              std::size_t kernel, InitScheme scheme, std::uint64_t seed);

/// Uniform(-bound, bound) tensor from the (seed, name) stream.
Tensor uniform_tensor(Shape shape, double bound, std::uint64_t seed, std::string_view name);

std::uint64_t stream_seed(std::uint64_t seed, std::string_view name);

}  // namespace consensus
