#include "consensus/verify.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include "consensus/cct.hpp"
#include "consensus/data.hpp"
#include "consensus/ict.hpp"
#include "consensus/network.hpp"
#include "consensus/ops.hpp"
#include "consensus/recurrent.hpp"

namespace consensus::verify {

namespace {

using oracle::GradCheckReport;

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double bound = 1.0) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

void randomize(ParameterStore& store, std::mt19937_64& rng, double bound) {
  for (const auto& name : store.names()) store.get(name) = random_tensor(store.get(name).shape(), rng, bound);
}

double eval_loss(const ParameterStore& params, const Tensor& input, const LossFn& loss) {
  Tape tape(TapeOptions{.checked = true, .record = false});
  Binding bound(tape, params, false);
  return loss(bound, tape.constant(input)).value().item();
}

// sum(Y * R) with a fixed random R, so every output coordinate matters.
LossFn projected(std::function<Var(const Binding&, Var)> forward, Tensor weights) {
  return [forward = std::move(forward), weights = std::move(weights)](const Binding& b, Var x) {
    Var y = forward(b, x);
    return ops::sum(ops::mul(y, b.tape().constant(weights)));
  };
}

struct MaxError {
  double value = 0.0;
  void update(const Tensor& a, const Tensor& b) { value = std::max(value, max_abs_diff(a, b)); }
};

EquivalenceResult finish(std::string name, std::size_t n, const MaxError& e, double tol) {
  return EquivalenceResult{std::move(name), n, e.value, tol, e.value <= tol};
}

}  // namespace

SuiteOptions options_from(const RunConfig& cfg) {
  SuiteOptions o;
  o.eq6_printed = cfg.eq6_printed;
  o.ln_activation = cfg.ln_activation;
  o.seed = cfg.seed + 7;
  return o;
}

std::string EquivalenceResult::to_json() const {
  std::ostringstream os;
  os.precision(6);
  os << std::scientific << "{\"name\":\"" << name << "\",\"instances\":" << instances
     << ",\"max_abs_error\":" << max_abs_error << ",\"tolerance\":" << tolerance
     << ",\"passed\":" << (passed ? "true" : "false") << '}';
  return os.str();
}

std::vector<GradCheckReport> gradcheck(const std::string& label, const ParameterStore& params, const Tensor& input,
                                       const LossFn& loss, double step, double threshold) {
  Tape tape(TapeOptions{.checked = true, .record = true});
  Binding bound(tape, params, true);
  Var x = tape.leaf(input, true);
  tape.backward(loss(bound, x));
  const GradientMap analytic = bound.gradients();

  std::vector<GradCheckReport> reports;
  const Tensor numeric_x =
      oracle::finite_diff_grad([&](const Tensor& probe) { return eval_loss(params, probe, loss); }, input, step);
  reports.push_back(oracle::compare_gradients(label + ".input", tape.grad(x), numeric_x, step, threshold));

  for (const auto& name : params.names()) {
    ParameterStore probe_store = params;
    const Tensor numeric = oracle::finite_diff_grad(
        [&](const Tensor& probe) {
          probe_store.get(name) = probe;
          return eval_loss(probe_store, input, loss);
        },
        params.get(name), step);
    reports.push_back(oracle::compare_gradients(label + "." + name, analytic.at(name), numeric, step, threshold));
  }
  return reports;
}

std::vector<GradCheckReport> gradcheck_ict(const SuiteOptions& opts) {
  std::mt19937_64 rng(opts.seed);
  IctConfig cfg;
  cfg.window = 3;
  cfg.reduction = 2;
  cfg.ln_activation = opts.ln_activation;
  ParameterStore params;
  add_ict_params(params, "ict", 4, cfg, opts.seed);
  randomize(params, rng, 0.5);
  const Tensor x = random_tensor({4, 6, 6}, rng);
  const Tensor proj = random_tensor({4, 6, 6}, rng);
  auto forward = [cfg](const Binding& b, Var in) { return ict_forward(in, bind_ict(b, "ict"), cfg); };
  return gradcheck("ict", params, x, projected(forward, proj), opts.step, opts.threshold);
}

std::vector<GradCheckReport> gradcheck_cct(const SuiteOptions& opts) {
  std::mt19937_64 rng(opts.seed + 1);
  CctConfig cfg;
  cfg.reduction = 2;
  cfg.hidden = 2;
  cfg.lstm.previous_cell_output = opts.eq6_printed;
  ParameterStore params;
  add_cct_params(params, "cct", 4, 4, 4, cfg, opts.seed);
  randomize(params, rng, 0.5);
  const Tensor x = random_tensor({4, 4, 4}, rng);
  const Tensor proj = random_tensor({4, 4, 4}, rng);
  auto forward = [cfg](const Binding& b, Var in) { return cct_forward(in, bind_cct(b, "cct"), cfg); };
  return gradcheck("cct", params, x, projected(forward, proj), opts.step, opts.threshold);
}

std::vector<GradCheckReport> gradcheck_model(const SuiteOptions& opts) {
  ModelConfig mc;
  mc.variant = Variant::kCfnet;
  mc.channels = 8;
  mc.classes = 4;
  mc.height = mc.width = 16;
  mc.ict.window = 3;
  mc.ict.reduction = 4;
  mc.ict.ln_activation = opts.ln_activation;
  mc.cct.reduction = 4;
  mc.cct.hidden = 4;
  mc.cct.lstm.previous_cell_output = opts.eq6_printed;
  const ToyModel model(mc);
  ParameterStore params = model.init_params(opts.seed);
  // Zero-initialised expansions would hide the unit internals from the loss,
  // and small fan-in weights leave their gradients near the rounding floor.
  std::mt19937_64 rng(opts.seed + 2);
  for (const auto& name : params.names()) {
    if (name.starts_with("ict.") || name.starts_with("cct.") || name.ends_with(".b")) {
      params.get(name) = random_tensor(params.get(name).shape(), rng, 0.5);
    }
  }

  DatasetConfig data;
  data.height = data.width = 16;
  data.classes = 4;
  data.min_extent = 4;
  data.max_extent = 7;
  data.min_visible_area = 6;
  data.min_instances_per_class = data.max_instances_per_class = 1;
  data.seed = opts.seed;
  const SceneSample sample = generate_scene(data, 0);
  const std::vector<int> labels = sample.labels;

  LossFn loss = [&model, labels](const Binding& b, Var image) {
    const ModelOutput out = model.forward(b, image);
    return total_loss(cross_entropy(out.main_logits, labels), cross_entropy(out.aux_logits, labels));
  };
  return gradcheck("cfnet", params, sample.image, loss, opts.step, opts.threshold);
}

std::vector<EquivalenceResult> equivalence_suite(const SuiteOptions& opts) {
  std::mt19937_64 rng(opts.seed + 3);
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  const std::size_t n_inst = opts.equivalence_instances;
  const double tol = opts.equivalence_tolerance;
  std::vector<EquivalenceResult> out;

  {
    MaxError e;
    for (std::size_t k = 0; k < n_inst; ++k) {
      const std::size_t c = pick(1, 4), h = pick(1, 6), w = pick(1, 6), r = pick(0, 1) ? 5 : 3;
      const Tensor p = random_tensor({c, h, w}, rng), theta = random_tensor({r * r, h, w}, rng);
      Tape tape(TapeOptions{.checked = true, .record = false});
      e.update(apply_instance_transform(tape.constant(p), tape.constant(theta), r).value(),
               oracle::naive_ict(p, theta, r));
    }
    out.push_back(finish("ict_transform", n_inst, e, tol));
  }
  {
    MaxError e;
    for (std::size_t k = 0; k < n_inst; ++k) {
      const std::size_t c = pick(1, 4), h = pick(1, 6), w = pick(1, 6);
      const Tensor ev = random_tensor({c, h, w}, rng), phi = random_tensor({h * w, h * w}, rng);
      Tape tape(TapeOptions{.checked = true, .record = false});
      e.update(apply_category_transform(tape.constant(ev), PhiMap{tape.constant(phi), h, w}).value(),
               oracle::naive_cct(ev, phi));
    }
    out.push_back(finish("cct_transform", n_inst, e, tol));
  }
  {
    MaxError e;
    for (std::size_t k = 0; k < n_inst; ++k) {
      const std::size_t cin = pick(1, 4), cout = pick(1, 4), h = pick(1, 8), w = pick(1, 8);
      const std::size_t ks = 2 * pick(0, 2) + 1, stride = pick(1, 2), dil = pick(1, 2);
      const Tensor x = random_tensor({cin, h, w}, rng), wt = random_tensor({cout, cin, ks, ks}, rng);
      const Tensor b = random_tensor({cout}, rng);
      Tape tape(TapeOptions{.checked = true, .record = false});
      e.update(ops::conv2d(tape.constant(x), tape.constant(wt), tape.constant(b), {stride, dil}).value(),
               oracle::naive_conv(x, wt, b, stride, dil));
    }
    out.push_back(finish("conv2d", n_inst, e, tol));
  }
  {
    MaxError e;
    for (std::size_t k = 0; k < n_inst; ++k) {
      const std::size_t c = pick(1, 4), h = pick(1, 6), w = pick(1, 6), r = 2 * pick(0, 2) + 1;
      const Tensor x = random_tensor({c, h, w}, rng);
      Tape tape(TapeOptions{.checked = true, .record = false});
      e.update(ops::unfold(tape.constant(x), r).value(), oracle::naive_unfold(x, r));
    }
    out.push_back(finish("unfold", n_inst, e, tol));
  }
  {
    MaxError e;
    for (std::size_t k = 0; k < n_inst; ++k) {
      const std::size_t m = pick(1, 8), kk = pick(1, 8), n = pick(1, 8);
      const Tensor a = random_tensor({m, kk}, rng), b = random_tensor({kk, n}, rng);
      Tape tape(TapeOptions{.checked = true, .record = false});
      e.update(ops::matmul(tape.constant(a), tape.constant(b)).value(), oracle::naive_matmul(a, b));
    }
    out.push_back(finish("matmul", n_inst, e, tol));
  }
  {
    MaxError e;
    for (std::size_t k = 0; k < n_inst; ++k) {
      const std::size_t c = pick(1, 4), d = pick(1, 3), lanes = pick(1, 5);
      const Tensor w = random_tensor({4 * d, c + d}, rng), b = random_tensor({4 * d}, rng);
      const Tensor h = random_tensor({d, lanes}, rng, 0.9), cell = random_tensor({d, lanes}, rng, 2.0);
      const Tensor x = random_tensor({c, lanes}, rng);
      Tape tape(TapeOptions{.checked = true, .record = false});
      const SweepState next = lstm_step(LstmCellParams{tape.constant(w), tape.constant(b)},
                                        SweepState{tape.constant(h), tape.constant(cell)}, tape.constant(x),
                                        LstmOptions{opts.eq6_printed});
      const auto ref = oracle::naive_lstm_step(w, b, h, cell, x, opts.eq6_printed);
      e.update(next.h.value(), ref.h);
      e.update(next.c.value(), ref.c);
    }
    out.push_back(finish("lstm_step", n_inst, e, tol));
  }
  for (std::size_t axis : {1, 2}) {
    MaxError e;
    for (std::size_t k = 0; k < n_inst; ++k) {
      const std::size_t c = pick(1, 3), d = pick(1, 3), h = pick(1, 5), w = pick(1, 5);
      const Tensor wf = random_tensor({4 * d, c + d}, rng), bf = random_tensor({4 * d}, rng);
      const Tensor wb = random_tensor({4 * d, c + d}, rng), bb = random_tensor({4 * d}, rng);
      const Tensor x = random_tensor({c, h, w}, rng);
      Tape tape(TapeOptions{.checked = true, .record = false});
      const BiLstmParams p{{tape.constant(wf), tape.constant(bf)}, {tape.constant(wb), tape.constant(bb)}};
      const LstmOptions lo{opts.eq6_printed};
      Var y = axis == 1 ? bilstm_vertical(p, tape.constant(x), lo) : bilstm_horizontal(p, tape.constant(x), lo);
      e.update(y.value(), oracle::naive_bilstm(wf, bf, wb, bb, x, axis, opts.eq6_printed));
    }
    out.push_back(finish(axis == 1 ? "bilstm_vertical" : "bilstm_horizontal", n_inst, e, tol));
  }
  {
    MaxError e;
    for (std::size_t k = 0; k < n_inst; ++k) {
      const std::size_t classes = pick(2, 5), h = pick(1, 4), w = pick(1, 4);
      const Tensor logits = random_tensor({classes, h, w}, rng, 3.0);
      std::vector<int> labels(h * w);
      for (int& l : labels) l = pick(0, 5) == 5 ? 255 : static_cast<int>(pick(0, classes - 1));
      Tape tape(TapeOptions{.checked = true, .record = false});
      const double got = cross_entropy(tape.constant(logits), labels).value().item();
      e.update(Tensor::scalar(got), Tensor::scalar(oracle::naive_softmax_xent(logits, labels)));
    }
    out.push_back(finish("softmax_xent", n_inst, e, tol));
  }
  {
    MaxError e;
    for (std::size_t k = 0; k < n_inst; ++k) {
      const std::size_t c = 4 * pick(1, 2), h = pick(1, 4), w = pick(1, 4);
      ParameterStore params;
      add_nonlocal_params(params, "nl", c, 4, opts.seed);
      randomize(params, rng, 0.7);
      const Tensor x = random_tensor({c, h, w}, rng);
      Tape tape(TapeOptions{.checked = true, .record = false});
      Binding bound(tape, params, false);
      const Tensor got = nonlocal_forward(tape.constant(x), bind_nonlocal(bound, "nl")).value();

      auto conv = [&](const Tensor& in, const std::string& name) {
        return oracle::naive_conv(in, params.get(name + ".W"), params.get(name + ".b"));
      };
      const Tensor e_map = conv(x, "nl.reduce");
      const std::size_t c1 = e_map.dim(0);
      const Tensor q = conv(e_map, "nl.query").reshaped({c1, h * w});
      const Tensor kk = conv(e_map, "nl.key").reshaped({c1, h * w});
      const Tensor v = conv(e_map, "nl.value").reshaped({c1, h * w});
      const Tensor mixed = oracle::naive_nonlocal_aggregate(q, kk, v).reshaped({c1, h, w});
      Tensor want = conv(mixed, "nl.expand");
      for (std::size_t i = 0; i < want.numel(); ++i) want[i] += x[i];
      e.update(got, want);
    }
    out.push_back(finish("nonlocal_forward", n_inst, e, tol));
  }
  {
    MaxError e;
    for (std::size_t k = 0; k < n_inst; ++k) {
      IctConfig cfg;
      cfg.window = pick(0, 1) ? 5 : 3;
      cfg.reduction = 2;
      const std::size_t c = 2 * pick(1, 2), h = pick(2, 6), w = pick(2, 6);
      ParameterStore params;
      add_ict_params(params, "ict", c, cfg, opts.seed);
      randomize(params, rng, 0.7);
      const Tensor x = random_tensor({c, h, w}, rng);
      Tape tape(TapeOptions{.checked = true, .record = false});
      Binding bound(tape, params, false);
      const Tensor got = ict_forward(tape.constant(x), bind_ict(bound, "ict"), cfg).value();

      auto conv = [&](const Tensor& in, const std::string& name) {
        return oracle::naive_conv(in, params.get(name + ".W"), params.get(name + ".b"));
      };
      const Tensor p = conv(x, "ict.reduce");
      const Tensor theta = conv(conv(p, "ict.ln.local"), "ict.ln.head");
      Tensor want = conv(oracle::naive_ict(p, theta, cfg.window), "ict.expand");
      for (std::size_t i = 0; i < want.numel(); ++i) want[i] += x[i];
      e.update(got, want);
    }
    out.push_back(finish("ict_forward", n_inst, e, tol));
  }
  {
    MaxError e;
    for (std::size_t k = 0; k < n_inst; ++k) {
      CctConfig cfg;
      cfg.reduction = 2;
      cfg.hidden = pick(1, 3);
      cfg.lstm.previous_cell_output = opts.eq6_printed;
      const std::size_t c = 2 * pick(1, 2), h = pick(1, 4), w = pick(1, 4);
      ParameterStore params;
      add_cct_params(params, "cct", c, h, w, cfg, opts.seed);
      randomize(params, rng, 0.7);
      const Tensor x = random_tensor({c, h, w}, rng);
      Tape tape(TapeOptions{.checked = true, .record = false});
      Binding bound(tape, params, false);
      const Tensor got = cct_forward(tape.constant(x), bind_cct(bound, "cct"), cfg).value();

      auto conv = [&](const Tensor& in, const std::string& name) {
        return oracle::naive_conv(in, params.get(name + ".W"), params.get(name + ".b"));
      };
      auto sweep = [&](const Tensor& in, const std::string& name, std::size_t axis) {
        return oracle::naive_bilstm(params.get(name + ".fwd.W"), params.get(name + ".fwd.b"),
                                    params.get(name + ".bwd.W"), params.get(name + ".bwd.b"), in, axis,
                                    opts.eq6_printed);
      };
      const Tensor e_map = conv(x, "cct.reduce");
      const Tensor head = conv(sweep(sweep(e_map, "cct.gn.v", 1), "cct.gn.h", 2), "cct.head");
      const std::size_t n = h * w;
      Tensor phi({n, n});
      for (std::size_t pos = 0; pos < n; ++pos) {
        for (std::size_t ch = 0; ch < n; ++ch) phi[pos * n + ch] = head[ch * n + pos];
      }
      Tensor want = conv(oracle::naive_cct(e_map, phi), "cct.expand");
      for (std::size_t i = 0; i < want.numel(); ++i) want[i] += x[i];
      e.update(got, want);
    }
    out.push_back(finish("cct_forward", n_inst, e, tol));
  }
  return out;
}

bool SuiteResult::passed() const {
  return std::all_of(gradients.begin(), gradients.end(), [](const auto& r) { return r.passed; }) &&
         std::all_of(equivalences.begin(), equivalences.end(), [](const auto& r) { return r.passed; });
}

SuiteResult run_all(const SuiteOptions& opts) {
  SuiteResult r;
  r.equivalences = equivalence_suite(opts);
  for (auto* fn : {&gradcheck_ict, &gradcheck_cct, &gradcheck_model}) {
    auto reports = fn(opts);
    r.gradients.insert(r.gradients.end(), reports.begin(), reports.end());
  }
  return r;
}

}  // namespace consensus::verify
