#include "consensus/metrics.hpp"

#include <map>
#include <stdexcept>
#include <string>

namespace consensus {

namespace {

constexpr int kIgnore = 255;

void check_id(int id, std::size_t classes) {
  if (id < 0 || static_cast<std::size_t>(id) >= classes) {
    throw std::out_of_range("metrics: class id " + std::to_string(id) + " outside [0, " + std::to_string(classes) +
                            ")");
  }
}

struct InstanceModes {
  std::vector<int> modal_class;   // per instance id, -1 if absent
  std::vector<double> purity;     // per instance id
  std::vector<std::size_t> area;
};

InstanceModes instance_modes(std::span<const int> pred, const SceneSample& sample) {
  if (pred.size() != sample.instances.size()) {
    throw std::invalid_argument("metrics: prediction size does not match sample");
  }
  const std::size_t ids = sample.instance_category.size();
  std::vector<std::map<int, std::size_t>> votes(ids);
  for (std::size_t p = 0; p < pred.size(); ++p) {
    const int id = sample.instances[p];
    if (id > 0) ++votes[static_cast<std::size_t>(id)][pred[p]];
  }
  InstanceModes m{std::vector<int>(ids, -1), std::vector<double>(ids, 0.0), std::vector<std::size_t>(ids, 0)};
  for (std::size_t id = 1; id < ids; ++id) {
    std::size_t total = 0, best = 0;
    for (const auto& [cls, n] : votes[id]) {
      total += n;
      if (n > best) {  // ties keep the smaller class id
        best = n;
        m.modal_class[id] = cls;
      }
    }
    m.area[id] = total;
    if (total > 0) m.purity[id] = static_cast<double>(best) / static_cast<double>(total);
  }
  return m;
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {}

void ConfusionMatrix::add(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) throw std::invalid_argument("metrics: prediction/truth size mismatch");
  for (std::size_t p = 0; p < pred.size(); ++p) {
    if (truth[p] == kIgnore) continue;
    check_id(truth[p], classes_);
    check_id(pred[p], classes_);
    ++counts_[static_cast<std::size_t>(truth[p]) * classes_ + static_cast<std::size_t>(pred[p])];
  }
}

std::vector<double> ConfusionMatrix::class_iou() const {
  std::vector<double> iou(classes_, -1.0);
  for (std::size_t c = 0; c < classes_; ++c) {
    std::uint64_t truth_total = 0, pred_total = 0;
    for (std::size_t k = 0; k < classes_; ++k) {
      truth_total += counts_[c * classes_ + k];
      pred_total += counts_[k * classes_ + c];
    }
    const std::uint64_t inter = counts_[c * classes_ + c];
    const std::uint64_t uni = truth_total + pred_total - inter;
    if (uni > 0) iou[c] = static_cast<double>(inter) / static_cast<double>(uni);
  }
  return iou;
}

double ConfusionMatrix::miou() const {
  double sum = 0.0;
  std::size_t present = 0;
  for (double v : class_iou()) {
    if (v < 0) continue;
    sum += v;
    ++present;
  }
  return present == 0 ? 1.0 : sum / static_cast<double>(present);
}

double miou(std::span<const int> pred, std::span<const int> truth, std::size_t classes) {
  ConfusionMatrix cm(classes);
  cm.add(pred, truth);
  return cm.miou();
}

ConsistencyStats consistency_stats(std::span<const int> pred, const SceneSample& sample) {
  ConsistencyAccumulator acc;
  acc.add(pred, sample);
  return acc.result();
}

void ConsistencyAccumulator::add(std::span<const int> pred, const SceneSample& sample) {
  const InstanceModes m = instance_modes(pred, sample);
  const std::size_t ids = sample.instance_category.size();
  for (std::size_t a = 1; a < ids; ++a) {
    if (m.area[a] == 0) continue;
    purity_sum_ += m.purity[a];
    ++instances_;
    for (std::size_t b = a + 1; b < ids; ++b) {
      if (m.area[b] == 0 || sample.instance_category[a] != sample.instance_category[b]) continue;
      ++pairs_;
      agreeing_pairs_ += m.modal_class[a] == m.modal_class[b];
    }
  }
}

ConsistencyStats ConsistencyAccumulator::result() const {
  ConsistencyStats s;
  s.instances = instances_;
  s.pairs = pairs_;
  if (instances_ > 0) s.intra_instance_purity = purity_sum_ / static_cast<double>(instances_);
  if (pairs_ > 0) s.cross_instance_agreement = static_cast<double>(agreeing_pairs_) / static_cast<double>(pairs_);
  return s;
}

}  // namespace consensus
