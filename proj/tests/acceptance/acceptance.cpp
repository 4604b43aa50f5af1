// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. An optional argument names a run config for the
// toy ablation (criteria 8-10); the built-in defaults are used otherwise.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "consensus/cct.hpp"
#include "consensus/config.hpp"
#include "consensus/ict.hpp"
#include "consensus/optim.hpp"
#include "consensus/oracle.hpp"
#include "consensus/recurrent.hpp"
#include "consensus/train.hpp"
#include "consensus/verify.hpp"

using namespace consensus;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, const char* what, bool ok, const std::string& detail) {
  std::printf("%s criterion %d (%s): %s\n", ok ? "PASS" : "FAIL", id, what, detail.c_str());
  std::fflush(stdout);
  failures += ok ? 0 : 1;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(shape);
  for (double& v : t.data()) v = u(rng);
  return t;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

const verify::EquivalenceResult& find(const std::vector<verify::EquivalenceResult>& all, const std::string& name) {
  return *std::find_if(all.begin(), all.end(), [&](const auto& r) { return r.name == name; });
}

void oracle_equivalence() {
  const auto t0 = Clock::now();
  const auto all = verify::equivalence_suite(verify::SuiteOptions{});
  double worst = 0.0;
  bool ok = true;
  for (const char* name : {"ict_transform", "cct_transform", "ict_forward", "cct_forward"}) {
    const auto& r = find(all, name);
    worst = std::max(worst, r.max_abs_error);
    ok = ok && r.passed && r.instances >= 50;
  }
  const double secs = seconds_since(t0);
  report(1, "ICT/CCT forwards vs oracles", ok && worst <= 1e-12 && secs < 10.0,
         fmt("max error %.3g", worst) + fmt(" in %.2f s", secs));
}

void mean_filter() {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (std::size_t r : {3, 5, 7}) {
    const std::size_t c = 3, h = 7, w = 6;
    const Tensor p = random_tensor({c, h, w}, rng);
    Tensor box = Tensor::zeros({c, c, r, r});
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t k = 0; k < r * r; ++k) box[(ch * c + ch) * r * r + k] = 1.0 / static_cast<double>(r * r);
    }
    Tape tape(TapeOptions{.checked = true, .record = false});
    const Tensor got = apply_instance_transform(tape.constant(p), tape.constant(Tensor::ones({r * r, h, w})), r).value();
    worst = std::max(worst, max_abs_diff(got, oracle::naive_conv(p, box, Tensor::zeros({c}))));
  }
  report(2, "theta = 1 is the zero-padded mean filter", worst <= 1e-12, fmt("max error %.3g", worst));
}

void delta_identities() {
  std::mt19937_64 rng(102);
  double worst = 0.0;
  for (std::size_t r : {3, 5, 7}) {
    const std::size_t h = 5, w = 6, n = h * w;
    const Tensor p = random_tensor({3, h, w}, rng);
    Tensor theta = Tensor::zeros({r * r, h, w});
    const std::size_t centre = (r * r - 1) / 2;
    for (std::size_t k = 0; k < n; ++k) theta[centre * n + k] = static_cast<double>(r * r);
    Tape tape(TapeOptions{.checked = true, .record = false});
    worst = std::max(worst, max_abs_diff(apply_instance_transform(tape.constant(p), tape.constant(theta), r).value(), p));
  }
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{1, 1}, {3, 4}, {8, 8}}) {
    const std::size_t n = h * w;
    Tensor phi = Tensor::zeros({n, n});
    for (std::size_t k = 0; k < n; ++k) phi.at(k, k) = static_cast<double>(n);
    const Tensor e = random_tensor({4, h, w}, rng);
    Tape tape(TapeOptions{.checked = true, .record = false});
    worst = std::max(worst, max_abs_diff(apply_category_transform(tape.constant(e), PhiMap{tape.constant(phi), h, w}).value(), e));
  }
  report(3, "delta theta and N*I phi are identities", worst == 0.0, fmt("max deviation %.3g", worst));
}

void identity_at_init() {
  std::mt19937_64 rng(103);
  double worst = 0.0;
  {
    IctConfig cfg;
    ParameterStore store;
    add_ict_params(store, "ict", 8, cfg, 4);
    const Tensor x = random_tensor({8, 6, 6}, rng);
    Tape tape(TapeOptions{.checked = true, .record = false});
    Binding bound(tape, store, false);
    worst = std::max(worst, max_abs_diff(ict_forward(tape.constant(x), bind_ict(bound, "ict"), cfg).value(), x));
  }
  {
    CctConfig cfg;
    ParameterStore store;
    add_cct_params(store, "cct", 8, 4, 4, cfg, 4);
    const Tensor x = random_tensor({8, 4, 4}, rng);
    Tape tape(TapeOptions{.checked = true, .record = false});
    Binding bound(tape, store, false);
    worst = std::max(worst, max_abs_diff(cct_forward(tape.constant(x), bind_cct(bound, "cct"), cfg).value(), x));
  }
  RunConfig run;
  const Tensor image = generate_scene(run.dataset_config(), 3).image;
  auto logits = [&](Variant v) {
    run.model = v;
    const ToyModel model(run.model_config());
    const ParameterStore params = model.init_params(11);
    Tape tape(TapeOptions{.checked = true, .record = false});
    Binding bound(tape, params, false);
    return model.forward(bound, tape.constant(image)).main_logits.value();
  };
  const Tensor base = logits(Variant::kBaseline);
  for (Variant v : {Variant::kIct, Variant::kCct, Variant::kCfnet}) worst = std::max(worst, max_abs_diff(logits(v), base));
  report(4, "zero expansions give identity units and baseline logits", worst == 0.0, fmt("max deviation %.3g", worst));
}

void gradchecks() {
  const auto t0 = Clock::now();
  const verify::SuiteOptions opts;
  double worst = 0.0;
  bool ok = true;
  for (const auto& suite : {verify::gradcheck_ict, verify::gradcheck_cct, verify::gradcheck_model}) {
    for (const auto& r : suite(opts)) {
      worst = std::max(worst, r.max_rel_error);
      ok = ok && r.passed;
    }
  }
  const double secs = seconds_since(t0);
  report(5, "gradchecks for ICT, CCT and the full model", ok && worst < 1e-5 && secs < 300.0,
         fmt("max relative error %.3g", worst) + fmt(" in %.1f s", secs));
}

void lstm() {
  double worst = 0.0;
  bool ok = true;
  for (bool printed : {false, true}) {
    verify::SuiteOptions opts;
    opts.eq6_printed = printed;
    const auto all = verify::equivalence_suite(opts);
    for (const char* name : {"lstm_step", "bilstm_vertical", "bilstm_horizontal"}) {
      worst = std::max(worst, find(all, name).max_abs_error);
      ok = ok && find(all, name).passed;
    }
  }
  std::mt19937_64 rng(104);
  const Tensor w = random_tensor({8, 5}, rng), b = random_tensor({8}, rng), x = random_tensor({3, 4}, rng);
  const Tensor h = random_tensor({2, 4}, rng), c = random_tensor({2, 4}, rng);
  auto step = [&](bool printed) {
    Tape tape(TapeOptions{.checked = true, .record = false});
    return lstm_step(LstmCellParams{tape.constant(w), tape.constant(b)}, SweepState{tape.constant(h), tape.constant(c)},
                     tape.constant(x), LstmOptions{printed})
        .h.value();
  };
  const double change = max_abs_diff(step(false), step(true));
  report(6, "LSTM vs oracle, printed-variant flag", ok && worst <= 1e-12 && change > 1e-6,
         fmt("max error %.3g", worst) + fmt(", flag changes h by %.3g", change));
}

void schedule() {
  const std::size_t t = 2000;
  const double start = poly_lr(0.01, 0, t), end = poly_lr(0.01, t, t), mid = poly_lr(0.01, t / 2, t);
  const double want_mid = 0.01 * std::pow(0.5, 0.9), loss = total_loss(0.0, 1.0);
  const bool ok = start == 0.01 && end == 0.0 && std::abs(mid - want_mid) <= 1e-12 && std::abs(loss - 0.4) <= 1e-12;
  report(7, "poly_lr and total_loss", ok, fmt("mid %.9g", mid) + fmt(", total_loss(0,1) %.9g", loss));
}

struct Summary {
  std::vector<double> miou, purity, agreement, phi;
};

void ablation(const RunConfig& base) {
  const auto t0 = Clock::now();
  std::map<Variant, Summary> runs;
  for (Variant v : {Variant::kBaseline, Variant::kIct, Variant::kCct, Variant::kCfnet}) {
    RunConfig cfg = base;
    cfg.model = v;
    for (std::size_t s = 0; s < base.seeds; ++s) {
      cfg.seed = base.seed + s;
      const TrainResult r = train(cfg);
      Summary& sum = runs[v];
      sum.miou.push_back(r.final_eval.miou);
      sum.purity.push_back(r.final_eval.consistency.intra_instance_purity);
      sum.agreement.push_back(r.final_eval.consistency.cross_instance_agreement);
      if (v == Variant::kCfnet) {
        sum.phi.push_back(
            phi_semantics(ToyModel(cfg.model_config()), r.params, cfg.dataset_config(), kTestIndexOffset, 20).fraction());
      }
      std::printf("  %s seed %llu: miou %.4f purity %.4f agreement %.4f\n", std::string(variant_name(v)).c_str(),
                  static_cast<unsigned long long>(cfg.seed), sum.miou.back(), sum.purity.back(), sum.agreement.back());
      std::fflush(stdout);
    }
  }
  const double secs = seconds_since(t0);
  auto m = [&](Variant v) { return median(runs[v].miou); };
  const double base_m = m(Variant::kBaseline), ict_m = m(Variant::kIct), cct_m = m(Variant::kCct), cf_m = m(Variant::kCfnet);
  const bool order = cf_m >= ict_m && ict_m >= base_m && cf_m >= cct_m && cct_m >= base_m;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "median mIoU baseline %.4f ict %.4f cct %.4f cfnet %.4f, gain %.4f, %.0f s", base_m, ict_m,
                cct_m, cf_m, cf_m - base_m, secs);
  report(8, "toy ablation ordering", order && cf_m - base_m >= 0.02 && secs < 1800.0, buf);

  const double pb = median(runs[Variant::kBaseline].purity), pc = median(runs[Variant::kCfnet].purity);
  const double ab = median(runs[Variant::kBaseline].agreement), ac = median(runs[Variant::kCfnet].agreement);
  std::snprintf(buf, sizeof(buf), "purity %.4f vs %.4f, agreement %.4f vs %.4f (cfnet vs baseline)", pc, pb, ac, ab);
  report(9, "cfnet consistency above baseline", pc > pb && ac > ab, buf);

  const double frac = median(runs[Variant::kCfnet].phi);
  report(10, "phi favours same-category positions", frac >= 0.7,
         fmt("median fraction %.3f over in-instance probes", frac));
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig run;
  if (argc > 1) run = load_run_config(argv[1]);
  oracle_equivalence();
  mean_filter();
  delta_identities();
  identity_at_init();
  gradchecks();
  lstm();
  schedule();
  ablation(run);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
