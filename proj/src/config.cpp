#include "consensus/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace consensus {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config: key '" + std::string(key) + "' has invalid value '" + std::string(value) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError("config: key '" + std::string(key) + "' expects a boolean, got '" + std::string(value) + "'");
}

using Setter = std::function<void(RunConfig&, std::string_view key, std::string_view value)>;

template <class T>
Setter number(T RunConfig::*field) {
  return [field](RunConfig& c, std::string_view k, std::string_view v) { c.*field = parse_number<T>(k, v); };
}

// "n" sets both bounds, "lo-hi" sets them separately.
Setter range(std::size_t RunConfig::*lo, std::size_t RunConfig::*hi) {
  return [lo, hi](RunConfig& c, std::string_view k, std::string_view v) {
    const auto dash = v.find('-');
    if (dash == std::string_view::npos) {
      c.*lo = c.*hi = parse_number<std::size_t>(k, v);
    } else {
      c.*lo = parse_number<std::size_t>(k, trim(v.substr(0, dash)));
      c.*hi = parse_number<std::size_t>(k, trim(v.substr(dash + 1)));
    }
  };
}

Setter flag(bool RunConfig::*field) {
  return [field](RunConfig& c, std::string_view k, std::string_view v) { c.*field = parse_bool(k, v); };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"model",
       [](RunConfig& c, std::string_view k, std::string_view v) {
         try {
           c.model = parse_variant(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError("config: key '" + std::string(k) + "': " + e.what());
         }
       }},
      {"r", number(&RunConfig::r)},
      {"d", number(&RunConfig::d)},
      {"reduction", number(&RunConfig::reduction)},
      {"seed", number(&RunConfig::seed)},
      {"base_lr", number(&RunConfig::base_lr)},
      {"total_iter", number(&RunConfig::total_iter)},
      {"image_size", number(&RunConfig::image_size)},
      {"classes", number(&RunConfig::classes)},
      {"instances_per_class", range(&RunConfig::min_instances_per_class, &RunConfig::max_instances_per_class)},
      {"extent", range(&RunConfig::min_extent, &RunConfig::max_extent)},
      {"channels", number(&RunConfig::channels)},
      {"train_samples", number(&RunConfig::train_samples)},
      {"test_samples", number(&RunConfig::test_samples)},
      {"eval_every", number(&RunConfig::eval_every)},
      {"seeds", number(&RunConfig::seeds)},
      {"noise", number(&RunConfig::noise)},
      {"gradient", number(&RunConfig::gradient)},
      {"color_spread", number(&RunConfig::color_spread)},
      {"illumination", number(&RunConfig::illumination)},
      {"eq6_printed", flag(&RunConfig::eq6_printed)},
      {"ln_activation", flag(&RunConfig::ln_activation)},
      {"upsample",
       [](RunConfig& c, std::string_view k, std::string_view v) {
         if (v == "nearest") {
           c.upsample = UpsampleMode::kNearest;
         } else if (v == "bilinear") {
           c.upsample = UpsampleMode::kBilinear;
         } else {
           throw ConfigError("config: key '" + std::string(k) + "' expects nearest or bilinear");
         }
       }},
      {"checked", flag(&RunConfig::checked)},
      {"head_bias_init", number(&RunConfig::head_bias_init)},
      {"record_timing", flag(&RunConfig::record_timing)},
  };
  return table;
}

}  // namespace

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.variant = model;
  m.channels = channels;
  m.classes = classes;
  m.height = m.width = image_size;
  m.ict.window = r;
  m.ict.reduction = reduction;
  m.ict.ln_activation = ln_activation;
  m.ict.head_bias_init = head_bias_init;
  m.cct.reduction = reduction;
  m.cct.hidden = d;
  m.cct.lstm.previous_cell_output = eq6_printed;
  m.cct.head_bias_init = head_bias_init;
  m.upsample = upsample;
  return m;
}

DatasetConfig RunConfig::dataset_config() const {
  DatasetConfig ds;
  ds.height = ds.width = image_size;
  ds.classes = classes;
  ds.min_instances_per_class = min_instances_per_class;
  ds.max_instances_per_class = max_instances_per_class;
  ds.min_extent = min_extent;
  ds.max_extent = max_extent;
  ds.noise = noise;
  ds.gradient = gradient;
  ds.color_spread = color_spread;
  ds.illumination = illumination;
  ds.seed = seed;
  return ds;
}

SgdConfig RunConfig::sgd_config() const {
  SgdConfig s;
  s.base_lr = base_lr;
  s.total_iter = std::max<std::size_t>(total_iter, 1);
  return s;
}

void RunConfig::validate() const {
  try {
    ToyModel probe(model_config());
    dataset_config().validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (train_samples == 0 || test_samples == 0) throw ConfigError("config: sample counts must be positive");
  if (eval_every == 0) throw ConfigError("config: eval_every must be positive");
  if (!(base_lr > 0)) throw ConfigError("config: base_lr must be positive");
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig cfg;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config: line " + std::to_string(line_no) + " is not 'key = value'");
    }
    const std::string_view key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("config: unknown key '" + std::string(key) + "'");
    it->second(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot read '" + path.string() + "'");
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_run_config(buf.str());
}

std::string format_run_config(const RunConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "model = " << variant_name(c.model) << '\n'
     << "r = " << c.r << '\n'
     << "d = " << c.d << '\n'
     << "reduction = " << c.reduction << '\n'
     << "seed = " << c.seed << '\n'
     << "base_lr = " << c.base_lr << '\n'
     << "total_iter = " << c.total_iter << '\n'
     << "image_size = " << c.image_size << '\n'
     << "classes = " << c.classes << '\n'
     << "instances_per_class = " << c.min_instances_per_class << '-' << c.max_instances_per_class << '\n'
     << "extent = " << c.min_extent << '-' << c.max_extent << '\n'
     << "channels = " << c.channels << '\n'
     << "train_samples = " << c.train_samples << '\n'
     << "test_samples = " << c.test_samples << '\n'
     << "eval_every = " << c.eval_every << '\n'
     << "seeds = " << c.seeds << '\n'
     << "noise = " << c.noise << '\n'
     << "gradient = " << c.gradient << '\n'
     << "color_spread = " << c.color_spread << '\n'
     << "illumination = " << c.illumination << '\n'
     << "eq6_printed = " << (c.eq6_printed ? "true" : "false") << '\n'
     << "ln_activation = " << (c.ln_activation ? "true" : "false") << '\n'
     << "upsample = " << (c.upsample == UpsampleMode::kNearest ? "nearest" : "bilinear") << '\n'
     << "checked = " << (c.checked ? "true" : "false") << '\n'
     << "head_bias_init = " << c.head_bias_init << '\n'
     << "record_timing = " << (c.record_timing ? "true" : "false") << '\n';
  return os.str();
}

}  // namespace consensus
