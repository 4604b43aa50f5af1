#include "consensus/params.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace consensus {

void ParameterStore::add(std::string name, Tensor value) {
  if (values_.contains(name)) throw std::invalid_argument("parameter '" + name + "' already exists");
  names_.push_back(name);
  values_.emplace(std::move(name), std::move(value));
}

bool ParameterStore::contains(std::string_view name) const { return values_.contains(std::string(name)); }

Tensor& ParameterStore::get(std::string_view name) {
  auto it = values_.find(std::string(name));
  if (it == values_.end()) throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

const Tensor& ParameterStore::get(std::string_view name) const {
  auto it = values_.find(std::string(name));
  if (it == values_.end()) throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : values_) n += t.numel();
  return n;
}

bool ParameterStore::has_prefix(std::string_view prefix) const {
  for (const auto& n : names_) {
    if (n.starts_with(prefix)) return true;
  }
  return false;
}

bool ParameterStore::operator==(const ParameterStore& other) const {
  return names_ == other.names_ && values_ == other.values_;
}

Binding::Binding(Tape& tape, const ParameterStore& store, bool requires_grad) : tape_(&tape) {
  for (const auto& name : store.names()) {
    index_.emplace(name, vars_.size());
    vars_.emplace_back(name, tape.leaf(store.get(name), requires_grad));
  }
}

Var Binding::operator[](std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("parameter '" + std::string(name) + "' is not bound");
  return vars_[it->second].second;
}

GradientMap Binding::gradients() const {
  GradientMap out;
  for (const auto& [name, var] : vars_) out.emplace(name, tape_->grad(var));
  return out;
}

ConvParams bind_conv(const Binding& binding, std::string_view prefix) {
  const std::string p(prefix);
  return ConvParams{binding[p + ".W"], binding[p + ".b"]};
}

std::uint64_t stream_seed(std::uint64_t seed, std::string_view name) {
  // FNV-1a over the name, mixed with the run seed.
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h ^ (seed * 0x9E3779B97F4A7C15ULL);
}

Tensor uniform_tensor(Shape shape, double bound, std::uint64_t seed, std::string_view name) {
  std::mt19937_64 rng(stream_seed(seed, name));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

void add_conv(ParameterStore& store, std::string_view prefix, std::size_t in_channels, std::size_t out_channels,
              std::size_t kernel, InitScheme scheme, std::uint64_t seed) {
  const std::string p(prefix);
  const Shape wshape{out_channels, in_channels, kernel, kernel};
  const auto fan_in = static_cast<double>(in_channels * kernel * kernel);
  switch (scheme) {
    case InitScheme::kZero:
      store.add(p + ".W", Tensor::zeros(wshape));
      break;
    case InitScheme::kFanIn:
      store.add(p + ".W", uniform_tensor(wshape, 1.0 / std::sqrt(fan_in), seed, p + ".W"));
      break;
    case InitScheme::kFanInRelu:
      store.add(p + ".W", uniform_tensor(wshape, std::sqrt(6.0 / fan_in), seed, p + ".W"));
      break;
  }
  store.add(p + ".b", Tensor::zeros({out_channels}));
}

}  // namespace consensus
