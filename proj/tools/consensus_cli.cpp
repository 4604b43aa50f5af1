// consensus: verification suites, toy training and ablations, evaluation,
// and phi-map visualisation.
//
// Exit codes: 0 ok, 1 test failure, 2 bad config or input, 3 numeric abort.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "consensus/checkpoint.hpp"
#include "consensus/config.hpp"
#include "consensus/image_io.hpp"
#include "consensus/train.hpp"
#include "consensus/verify.hpp"

namespace fs = std::filesystem;
using namespace consensus;
using json = nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

// Models are identified by the unit prefixes present in a checkpoint.
Variant variant_from_checkpoint(const ParameterStore& store) {
  const bool ict = store.has_prefix("ict."), cct = store.has_prefix("cct."), nl = store.has_prefix("nl.");
  if (nl) return Variant::kNonLocal;
  if (ict && cct) return Variant::kCfnet;
  if (ict) return Variant::kIct;
  if (cct) return Variant::kCct;
  return Variant::kBaseline;
}

ParameterStore load_model(const fs::path& checkpoint, RunConfig& cfg) {
  const ParameterStore loaded = load_checkpoint(checkpoint);
  cfg.model = variant_from_checkpoint(loaded);
  ParameterStore params = ToyModel(cfg.model_config()).init_params(cfg.seed);
  assign_checked(params, loaded);
  return params;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ImageIoError("cannot write '" + path.string() + "'");
  f << text;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n == 0) return 0.0;
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int cmd_gradcheck(const std::string& config_path, bool skip_gradients) {
  const RunConfig cfg = load_run_config(config_path);
  const verify::SuiteOptions opts = verify::options_from(cfg);
  bool ok = true;
  for (const auto& r : verify::equivalence_suite(opts)) {
    std::cout << r.to_json() << '\n';
    ok = ok && r.passed;
  }
  if (!skip_gradients) {
    for (auto* suite : {&verify::gradcheck_ict, &verify::gradcheck_cct, &verify::gradcheck_model}) {
      for (const auto& r : suite(opts)) {
        std::cout << r.to_json() << '\n';
        ok = ok && r.passed;
      }
    }
  }
  std::cout << json{{"summary", ok ? "pass" : "fail"}}.dump() << '\n';
  return ok ? kExitOk : kExitFailure;
}

int cmd_train(const std::string& config_path, const std::optional<std::string>& model,
              const std::optional<std::uint64_t>& seed, const fs::path& out) {
  RunConfig cfg = load_run_config(config_path);
  if (model) cfg.model = parse_variant(*model);
  if (seed) cfg.seed = *seed;
  cfg.validate();
  fs::create_directories(out);
  std::ofstream csv(out / "metrics.csv", std::ios::binary);
  if (!csv) throw ImageIoError("cannot write '" + (out / "metrics.csv").string() + "'");
  csv << metrics_csv_header() << '\n';
  const TrainResult result = train(cfg, [&](const MetricsRow& row) {
    csv << to_csv(row) << '\n';
    csv.flush();
    std::cerr << to_csv(row) << '\n';
  });
  save_checkpoint(result.params, out / "model.ckpt");
  write_text(out / "config.txt", format_run_config(cfg));
  return kExitOk;
}

int cmd_eval(const fs::path& checkpoint, const std::string& config_path, std::uint64_t first_index,
             std::optional<std::size_t> samples) {
  RunConfig cfg = load_run_config(config_path);
  const ParameterStore params = load_model(checkpoint, cfg);
  const ToyModel model(cfg.model_config());
  const EvalResult ev = evaluate(model, params, cfg.dataset_config(), first_index, samples.value_or(cfg.test_samples));
  std::cout << json{{"model", variant_name(cfg.model)},
                    {"miou", ev.miou},
                    {"loss", ev.mean_loss},
                    {"intra_instance_purity", ev.consistency.intra_instance_purity},
                    {"cross_instance_agreement", ev.consistency.cross_instance_agreement}}
                   .dump()
            << '\n';
  return kExitOk;
}

int cmd_viz_phi(const fs::path& checkpoint, std::optional<std::string> config_path, std::size_t i, std::size_t j,
                std::uint64_t image, const fs::path& out) {
  const fs::path cfg_path = config_path ? fs::path(*config_path) : checkpoint.parent_path() / "config.txt";
  RunConfig cfg = load_run_config(cfg_path);
  const ParameterStore params = load_model(checkpoint, cfg);
  const ToyModel model(cfg.model_config());
  const std::size_t h = model.config().feature_height(), w = model.config().feature_width();
  if (i >= h || j >= w) {
    throw std::out_of_range("viz-phi: position (" + std::to_string(i) + "," + std::to_string(j) +
                            ") outside the " + std::to_string(h) + "x" + std::to_string(w) + " feature grid");
  }
  const SceneSample sample = generate_scene(cfg.dataset_config(), kTestIndexOffset + image);
  const Tensor phi = phi_for_image(model, params, sample.image);
  const std::size_t n = h * w, pos = i * w + j;
  const auto row = phi.data().subspan(pos * n, n);
  write_pgm(out, normalize_to_gray(row, h, w));

  const FeatureLabels labels = feature_labels(sample, ModelConfig::kDownsample);
  const PhiProbe probe = probe_phi_row(row, labels, pos);
  std::cout << json{{"position", {i, j}},
                    {"category", labels.category[pos]},
                    {"in_instance", labels.whole_instance[pos] != 0},
                    {"same_category_mass", probe.same_mass},
                    {"other_category_mass", probe.other_mass},
                    {"favours_same_category", probe.same_mass > probe.other_mass}}
                   .dump()
            << '\n';
  return kExitOk;
}

int cmd_ablation(const std::string& config_path, std::vector<std::string> models, std::optional<std::size_t> seeds,
                 const std::optional<fs::path>& out) {
  const RunConfig base = load_run_config(config_path);
  const std::size_t n_seeds = seeds.value_or(base.seeds);
  std::optional<std::ofstream> csv;
  if (out) {
    fs::create_directories(*out);
    csv.emplace(*out / "ablation.csv", std::ios::binary);
    *csv << metrics_csv_header() << '\n';
  }
  for (const auto& name : models) {
    std::vector<double> miou, purity, agreement, phi;
    RunConfig cfg = base;
    cfg.model = parse_variant(name);
    for (std::size_t s = 0; s < n_seeds; ++s) {
      cfg.seed = base.seed + s;
      const TrainResult r = train(cfg, [&](const MetricsRow& row) {
        if (csv) *csv << to_csv(row) << '\n';
      });
      miou.push_back(r.final_eval.miou);
      purity.push_back(r.final_eval.consistency.intra_instance_purity);
      agreement.push_back(r.final_eval.consistency.cross_instance_agreement);
      if (cfg.model_config().has_cct()) {
        const ToyModel model(cfg.model_config());
        phi.push_back(phi_semantics(model, r.params, cfg.dataset_config(), kTestIndexOffset, 20).fraction());
      }
    }
    json line{{"model", name},
              {"seeds", n_seeds},
              {"median_miou", median(miou)},
              {"median_intra_instance_purity", median(purity)},
              {"median_cross_instance_agreement", median(agreement)},
              {"miou", miou}};
    if (!phi.empty()) line["median_phi_same_category_fraction"] = median(phi);
    std::cout << line.dump() << std::endl;
  }
  return kExitOk;
}

int cmd_export_samples(const std::string& config_path, std::size_t count, std::uint64_t first, const fs::path& out) {
  const RunConfig cfg = load_run_config(config_path);
  fs::create_directories(out);
  for (std::size_t k = 0; k < count; ++k) {
    const SceneSample s = generate_scene(cfg.dataset_config(), first + k);
    char stem[32];
    std::snprintf(stem, sizeof(stem), "sample_%06zu", static_cast<std::size_t>(first + k));
    export_sample(s, out / stem);
  }
  return kExitOk;
}

std::pair<std::size_t, std::size_t> parse_position(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw CLI::ValidationError("--pos", "expected i,j");
  return {std::stoul(text.substr(0, comma)), std::stoul(text.substr(comma + 1))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Instance and category consensus transforms on synthetic scenes"};
  app.require_subcommand(1);

  std::string config;
  bool skip_gradients = false;
  auto* gradcheck = app.add_subcommand("gradcheck", "run gradient and oracle-equivalence suites (JSON lines)");
  gradcheck->add_option("config", config, "run config file")->required();
  gradcheck->add_flag("--equivalence-only", skip_gradients, "skip the finite-difference checks");

  std::optional<std::string> model;
  std::optional<std::uint64_t> seed;
  std::string out;
  auto* train_cmd = app.add_subcommand("train", "train one model and write metrics.csv, model.ckpt, config.txt");
  train_cmd->add_option("config", config, "run config file")->required();
  train_cmd->add_option("--model", model, "baseline | ict | cct | cfnet | nl");
  train_cmd->add_option("--seed", seed, "overrides the config seed");
  train_cmd->add_option("--out", out, "output directory")->required();

  std::string checkpoint;
  std::uint64_t first_index = kTestIndexOffset;
  std::optional<std::size_t> samples;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a synthetic split");
  eval_cmd->add_option("checkpoint", checkpoint)->required();
  eval_cmd->add_option("config", config)->required();
  eval_cmd->add_option("--first-index", first_index, "first sample index of the split");
  eval_cmd->add_option("--samples", samples, "defaults to test_samples");

  std::string pos = "0,0";
  std::uint64_t image = 0;
  std::optional<std::string> viz_config;
  auto* viz = app.add_subcommand("viz-phi", "write one phi row as a PGM image");
  viz->add_option("checkpoint", checkpoint)->required();
  viz->add_option("--config", viz_config, "defaults to config.txt beside the checkpoint");
  viz->add_option("--pos", pos, "feature-grid position i,j");
  viz->add_option("--image", image, "test image index");
  viz->add_option("--out", out)->required();

  std::vector<std::string> models{"baseline", "ict", "cct", "cfnet"};
  std::optional<std::size_t> seeds;
  std::optional<std::string> ablation_out;
  auto* ablation = app.add_subcommand("ablation", "train every variant over several seeds and report medians");
  ablation->add_option("config", config)->required();
  ablation->add_option("--models", models);
  ablation->add_option("--seeds", seeds, "defaults to the config's seeds");
  ablation->add_option("--out", ablation_out, "directory for ablation.csv");

  std::size_t count = 8;
  std::uint64_t first = 0;
  auto* export_cmd = app.add_subcommand("export-samples", "write synthetic scenes as PPM/PGM");
  export_cmd->add_option("config", config)->required();
  export_cmd->add_option("--count", count);
  export_cmd->add_option("--first", first);
  export_cmd->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*gradcheck) return cmd_gradcheck(config, skip_gradients);
    if (*train_cmd) return cmd_train(config, model, seed, out);
    if (*eval_cmd) return cmd_eval(checkpoint, config, first_index, samples);
    if (*viz) {
      const auto [i, j] = parse_position(pos);
      return cmd_viz_phi(checkpoint, viz_config, i, j, image, out);
    }
    if (*ablation) {
      return cmd_ablation(config, models, seeds, ablation_out ? std::optional<fs::path>(*ablation_out) : std::nullopt);
    }
    if (*export_cmd) return cmd_export_samples(config, count, first, out);
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}
