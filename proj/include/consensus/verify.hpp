#pragma once

// Gradient and oracle-equivalence suites. Used by `consensus gradcheck`
// and by the acceptance tests.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "consensus/config.hpp"
#include "consensus/oracle.hpp"
#include "consensus/params.hpp"

namespace consensus::verify {

struct SuiteOptions {
  bool eq6_printed = false;
  bool ln_activation = false;
  double step = 1e-5;
  double threshold = 1e-5;
  double equivalence_tolerance = 1e-12;
  std::size_t equivalence_instances = 50;
  std::uint64_t seed = 7;
};

SuiteOptions options_from(const RunConfig& cfg);

struct EquivalenceResult {
  std::string name;
  std::size_t instances = 0;
  double max_abs_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;

  std::string to_json() const;
};

/// Builds a scalar loss from bound parameters and a differentiable input.
using LossFn = std::function<Var(const Binding& params, Var input)>;

/// Tape gradients vs central differences for `input` and every parameter.
std::vector<oracle::GradCheckReport> gradcheck(const std::string& label, const ParameterStore& params,
                                               const Tensor& input, const LossFn& loss, double step,
                                               double threshold);

/// Full ICT unit, C=4, C1=2, H=W=6, r=3, all parameters randomised.
std::vector<oracle::GradCheckReport> gradcheck_ict(const SuiteOptions& opts);
/// Full CCT unit through both BiLSTM sweeps, C=4, C1=2, H=W=4, d=2.
std::vector<oracle::GradCheckReport> gradcheck_cct(const SuiteOptions& opts);
/// Main + auxiliary loss of the cfnet toy model on a 16x16 sample.
std::vector<oracle::GradCheckReport> gradcheck_model(const SuiteOptions& opts);

/// Vectorised forwards vs the loop oracles on random instances.
std::vector<EquivalenceResult> equivalence_suite(const SuiteOptions& opts);

struct SuiteResult {
  std::vector<oracle::GradCheckReport> gradients;
  std::vector<EquivalenceResult> equivalences;

  bool passed() const;
};

SuiteResult run_all(const SuiteOptions& opts);

}  // namespace consensus::verify
