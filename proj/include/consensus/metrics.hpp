#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "consensus/data.hpp"

namespace consensus {

/// Pixel confusion counts accumulated over one or many images.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes);

  /// Ids must lie in [0, classes); pixels whose truth is 255 are skipped.
  void add(std::span<const int> pred, std::span<const int> truth);

  /// Per-class IoU; classes absent from both pred and truth get -1.
  std::vector<double> class_iou() const;
  /// Mean IoU over classes present in truth or pred (1.0 if none).
  double miou() const;

  std::size_t classes() const { return classes_; }

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;  // [truth * K + pred]
};

double miou(std::span<const int> pred, std::span<const int> truth, std::size_t classes);

struct ConsistencyStats {
  /// Mean over instances of the fraction of its pixels carrying its modal predicted class.
  double intra_instance_purity = 1.0;
  /// Fraction of same-category instance pairs whose modal predictions agree (1.0 if no pairs).
  double cross_instance_agreement = 1.0;
  std::size_t instances = 0;
  std::size_t pairs = 0;
};

ConsistencyStats consistency_stats(std::span<const int> pred, const SceneSample& sample);

/// Pools instances and pairs across images.
class ConsistencyAccumulator {
 public:
  void add(std::span<const int> pred, const SceneSample& sample);
  ConsistencyStats result() const;

 private:
  double purity_sum_ = 0.0;
  std::size_t instances_ = 0;
  std::size_t agreeing_pairs_ = 0;
  std::size_t pairs_ = 0;
};

}  // namespace consensus
