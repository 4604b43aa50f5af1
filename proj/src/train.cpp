#include "consensus/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>

#include "consensus/optim.hpp"

namespace consensus {

std::string metrics_csv_header() {
  return "run_id,model,seed,iteration,lr,loss,miou,intra_instance_purity,cross_instance_agreement,ms_per_step";
}

std::string to_csv(const MetricsRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%s,%s,%llu,%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.4f", r.run_id.c_str(), r.model.c_str(),
                static_cast<unsigned long long>(r.seed), r.iteration, r.lr, r.loss, r.miou, r.intra_instance_purity,
                r.cross_instance_agreement, r.ms_per_step);
  return buf;
}

std::string run_id(const RunConfig& cfg) {
  return std::string(variant_name(cfg.model)) + "-s" + std::to_string(cfg.seed);
}

EvalResult evaluate(const ToyModel& model, const ParameterStore& params, const DatasetConfig& data,
                    std::uint64_t first_index, std::size_t count) {
  ConfusionMatrix confusion(model.config().classes);
  ConsistencyAccumulator consistency;
  double loss_sum = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    const SceneSample s = generate_scene(data, first_index + k);
    Tape tape(TapeOptions{.checked = false, .record = false});
    Binding bound(tape, params, false);
    const ModelOutput out = model.forward(bound, tape.constant(s.image));
    const std::vector<int> pred = argmax_labels(out.main_logits.value());
    confusion.add(pred, s.labels);
    consistency.add(pred, s);
    loss_sum += cross_entropy(out.main_logits, s.labels).value().item();
  }
  return EvalResult{confusion.miou(), consistency.result(), count == 0 ? 0.0 : loss_sum / static_cast<double>(count)};
}

TrainResult train(const RunConfig& cfg, const std::function<void(const MetricsRow&)>& on_row) {
  cfg.validate();
  const ToyModel model(cfg.model_config());
  const DatasetConfig data = cfg.dataset_config();

  std::vector<SceneSample> train_set;
  train_set.reserve(cfg.train_samples);
  for (std::size_t k = 0; k < cfg.train_samples; ++k) train_set.push_back(generate_scene(data, k));

  TrainResult result{model.init_params(cfg.seed), {}, {}};
  SgdOptimizer opt(cfg.sgd_config(), cfg.checked);

  auto emit = [&](std::size_t iteration, double lr, double loss, double ms) {
    const EvalResult ev = evaluate(model, result.params, data, kTestIndexOffset, cfg.test_samples);
    MetricsRow row{run_id(cfg), std::string(variant_name(cfg.model)), cfg.seed, iteration, lr, loss, ev.miou,
                   ev.consistency.intra_instance_purity, ev.consistency.cross_instance_agreement,
                   cfg.record_timing ? ms : 0.0};
    result.rows.push_back(row);
    result.final_eval = ev;
    if (on_row) on_row(row);
  };

  double window_loss = 0.0, window_ms = 0.0;
  std::size_t window_steps = 0;
  if (cfg.total_iter == 0) emit(0, opt.current_lr(), 0.0, 0.0);
  for (std::size_t it = 0; it < cfg.total_iter; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    const SceneSample& s = train_set[it % train_set.size()];
    Tape tape(TapeOptions{.checked = cfg.checked, .record = true});
    Binding bound(tape, result.params);
    const ModelOutput out = model.forward(bound, tape.constant(s.image));
    Var loss = total_loss(cross_entropy(out.main_logits, s.labels), cross_entropy(out.aux_logits, s.labels));
    const double loss_value = loss.value().item();
    if (!std::isfinite(loss_value)) {
      throw NumericError("train: non-finite loss at iteration " + std::to_string(it));
    }
    tape.backward(loss);
    const double lr = opt.step(result.params, bound.gradients());
    window_ms += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    window_loss += loss_value;
    ++window_steps;
    const std::size_t done = it + 1;
    if (done % cfg.eval_every == 0 || done == cfg.total_iter) {
      emit(done, lr, window_loss / static_cast<double>(window_steps), window_ms / static_cast<double>(window_steps));
      window_loss = window_ms = 0.0;
      window_steps = 0;
    }
  }
  return result;
}

FeatureLabels feature_labels(const SceneSample& sample, std::size_t factor) {
  FeatureLabels f{sample.height / factor, sample.width / factor, {}, {}};
  f.category.assign(f.height * f.width, 0);
  f.whole_instance.assign(f.height * f.width, 0);
  for (std::size_t i = 0; i < f.height; ++i) {
    for (std::size_t j = 0; j < f.width; ++j) {
      std::map<int, std::size_t> votes;
      const int first_id = sample.instances[(i * factor) * sample.width + j * factor];
      bool uniform = first_id > 0;
      for (std::size_t a = 0; a < factor; ++a) {
        for (std::size_t b = 0; b < factor; ++b) {
          const std::size_t p = (i * factor + a) * sample.width + j * factor + b;
          ++votes[sample.labels[p]];
          uniform = uniform && sample.instances[p] == first_id;
        }
      }
      const auto best = std::max_element(votes.begin(), votes.end(),
                                         [](const auto& x, const auto& y) { return x.second < y.second; });
      f.category[i * f.width + j] = best->first;
      f.whole_instance[i * f.width + j] = uniform ? first_id : 0;
    }
  }
  return f;
}

PhiProbe probe_phi_row(std::span<const double> phi_row, const FeatureLabels& labels, std::size_t position) {
  const auto [lo_it, hi_it] = std::minmax_element(phi_row.begin(), phi_row.end());
  const double lo = *lo_it, range = *hi_it - *lo_it;
  const int category = labels.category[position];
  double same = 0.0, other = 0.0;
  std::size_t n_same = 0, n_other = 0;
  for (std::size_t q = 0; q < phi_row.size(); ++q) {
    if (q == position) continue;
    const double v = range > 0 ? (phi_row[q] - lo) / range : 0.0;
    if (labels.category[q] == category) {
      same += v;
      ++n_same;
    } else {
      other += v;
      ++n_other;
    }
  }
  return PhiProbe{n_same ? same / static_cast<double>(n_same) : 0.0, n_other ? other / static_cast<double>(n_other) : 0.0};
}

Tensor phi_for_image(const ToyModel& model, const ParameterStore& params, const Tensor& image) {
  if (!model.config().has_cct()) throw std::invalid_argument("phi: model has no CCT unit");
  Tape tape(TapeOptions{.checked = false, .record = false});
  Binding bound(tape, params, false);
  const ModelOutput out = model.forward(bound, tape.constant(image));
  return out.phi->weights.value();
}

PhiSemantics phi_semantics(const ToyModel& model, const ParameterStore& params, const DatasetConfig& data,
                           std::uint64_t first_index, std::size_t images) {
  PhiSemantics result;
  for (std::size_t k = 0; k < images; ++k) {
    const SceneSample s = generate_scene(data, first_index + k);
    const Tensor phi = phi_for_image(model, params, s.image);
    const FeatureLabels labels = feature_labels(s, ModelConfig::kDownsample);
    const std::size_t n = labels.height * labels.width;
    for (std::size_t p = 0; p < n; ++p) {
      if (labels.whole_instance[p] == 0) continue;
      const PhiProbe probe = probe_phi_row(phi.data().subspan(p * n, n), labels, p);
      ++result.probes;
      result.favoured += probe.same_mass > probe.other_mass;
    }
  }
  return result;
}

}  // namespace consensus
