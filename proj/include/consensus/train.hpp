#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "consensus/config.hpp"
#include "consensus/metrics.hpp"
#include "consensus/network.hpp"

namespace consensus {

/// Test images come from this index upward so they never overlap training.
inline constexpr std::uint64_t kTestIndexOffset = 1'000'000;

/// One evaluation event. ms_per_step is 0 unless timing is recorded, which
/// keeps CSVs byte-identical across reruns.
struct MetricsRow {
  std::string run_id;
  std::string model;
  std::uint64_t seed = 0;
  std::size_t iteration = 0;
  double lr = 0.0;
  double loss = 0.0;
  double miou = 0.0;
  double intra_instance_purity = 0.0;
  double cross_instance_agreement = 0.0;
  double ms_per_step = 0.0;
};

std::string metrics_csv_header();
std::string to_csv(const MetricsRow& row);

struct EvalResult {
  double miou = 0.0;
  ConsistencyStats consistency;
  double mean_loss = 0.0;
};

/// Held-out metrics on samples [first_index, first_index + count).
EvalResult evaluate(const ToyModel& model, const ParameterStore& params, const DatasetConfig& data,
                    std::uint64_t first_index, std::size_t count);

struct TrainResult {
  ParameterStore params;
  std::vector<MetricsRow> rows;
  EvalResult final_eval;
};

/// Batch-1 SGD for cfg.total_iter steps on cycled training samples, with an
/// evaluation every cfg.eval_every steps and after the last one. Throws
/// NumericError if the loss turns non-finite.
TrainResult train(const RunConfig& cfg, const std::function<void(const MetricsRow&)>& on_row = {});

std::string run_id(const RunConfig& cfg);

struct PhiSemantics {
  std::size_t probes = 0;
  std::size_t favoured = 0;  // probes with more mass on same-category positions
  double fraction() const { return probes == 0 ? 0.0 : static_cast<double>(favoured) / static_cast<double>(probes); }
};

struct PhiProbe {
  double same_mass = 0.0;   // mean min-max normalised phi over same-category positions
  double other_mass = 0.0;  // ... over positions of any other category
};

/// Feature-grid labels: majority category of each 4x4 input block, and the
/// instance id if the whole block lies in one instance (else 0).
struct FeatureLabels {
  std::size_t height = 0, width = 0;
  std::vector<int> category;
  std::vector<int> whole_instance;
};
FeatureLabels feature_labels(const SceneSample& sample, std::size_t factor);

PhiProbe probe_phi_row(std::span<const double> phi_row, const FeatureLabels& labels, std::size_t position);

/// phi rows (N x N) for one image through a trained CCT model.
Tensor phi_for_image(const ToyModel& model, const ParameterStore& params, const Tensor& image);

/// Probes every feature position that lies wholly inside one instance.
PhiSemantics phi_semantics(const ToyModel& model, const ParameterStore& params, const DatasetConfig& data,
                           std::uint64_t first_index, std::size_t images);

}  // namespace consensus
