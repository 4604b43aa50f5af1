#include "consensus/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace consensus::oracle {

namespace {

double sigm(double v) { return 1.0 / (1.0 + std::exp(-v)); }

long as_long(std::size_t v) { return static_cast<long>(v); }

}  // namespace

Tensor naive_conv(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
                  std::size_t dilation) {
  const long cin = as_long(x.dim(0)), h = as_long(x.dim(1)), w = as_long(x.dim(2));
  const long cout = as_long(weight.dim(0)), k = as_long(weight.dim(2));
  if (as_long(weight.dim(1)) != cin) throw ShapeError("naive_conv: channel mismatch");
  const long pad = (k - 1) * as_long(dilation) / 2;
  const long s = as_long(stride), d = as_long(dilation);
  const long oh = (h + 2 * pad - d * (k - 1) - 1) / s + 1;
  const long ow = (w + 2 * pad - d * (k - 1) - 1) / s + 1;
  Tensor y({static_cast<std::size_t>(cout), static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
  for (long o = 0; o < cout; ++o) {
    for (long i = 0; i < oh; ++i) {
      for (long j = 0; j < ow; ++j) {
        double acc = bias.numel() > 0 ? bias[static_cast<std::size_t>(o)] : 0.0;
        for (long c = 0; c < cin; ++c) {
          for (long a = 0; a < k; ++a) {
            for (long b = 0; b < k; ++b) {
              const long si = i * s + a * d - pad, sj = j * s + b * d - pad;
              if (si < 0 || si >= h || sj < 0 || sj >= w) continue;
              acc += weight[static_cast<std::size_t>(((o * cin + c) * k + a) * k + b)] *
                     x[static_cast<std::size_t>((c * h + si) * w + sj)];
            }
          }
        }
        y[static_cast<std::size_t>((o * oh + i) * ow + j)] = acc;
      }
    }
  }
  return y;
}

Tensor naive_unfold(const Tensor& x, std::size_t r) {
  const long c = as_long(x.dim(0)), h = as_long(x.dim(1)), w = as_long(x.dim(2)), rr = as_long(r);
  const long half = (rr - 1) / 2;
  Tensor out({x.dim(0), x.dim(1) * x.dim(2), r * r});
  for (long ch = 0; ch < c; ++ch) {
    for (long i = 0; i < h; ++i) {
      for (long j = 0; j < w; ++j) {
        for (long dh = -half; dh <= half; ++dh) {
          for (long dw = -half; dw <= half; ++dw) {
            const long slot = dh * rr + dw + (rr * rr - 1) / 2;
            const long si = i + dh, sj = j + dw;
            const double v = (si < 0 || si >= h || sj < 0 || sj >= w) ? 0.0
                                                                       : x[static_cast<std::size_t>((ch * h + si) * w + sj)];
            out[static_cast<std::size_t>((ch * h * w + i * w + j) * rr * rr + slot)] = v;
          }
        }
      }
    }
  }
  return out;
}

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw ShapeError("naive_matmul: inner dimension mismatch");
  Tensor y({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      y[i * n + j] = acc;
    }
  }
  return y;
}

Tensor naive_ict(const Tensor& p, const Tensor& theta, std::size_t r) {
  if (r % 2 == 0) throw ShapeError("naive_ict: even window");
  const long c1 = as_long(p.dim(0)), h = as_long(p.dim(1)), w = as_long(p.dim(2)), rr = as_long(r);
  if (theta.shape() != Shape{r * r, p.dim(1), p.dim(2)}) throw ShapeError("naive_ict: theta shape");
  const long half = (rr - 1) / 2;
  Tensor q(p.shape());
  for (long c = 0; c < c1; ++c) {
    for (long i = 0; i < h; ++i) {
      for (long j = 0; j < w; ++j) {
        double acc = 0.0;
        for (long dh = -half; dh <= half; ++dh) {
          for (long dw = -half; dw <= half; ++dw) {
            const long si = i + dh, sj = j + dw;
            if (si < 0 || si >= h || sj < 0 || sj >= w) continue;
            const long slot = dh * rr + dw + (rr * rr - 1) / 2;
            acc += theta[static_cast<std::size_t>((slot * h + i) * w + j)] *
                   p[static_cast<std::size_t>((c * h + si) * w + sj)];
          }
        }
        q[static_cast<std::size_t>((c * h + i) * w + j)] = acc / static_cast<double>(rr * rr);
      }
    }
  }
  return q;
}

Tensor naive_cct(const Tensor& e, const Tensor& phi) {
  const std::size_t c1 = e.dim(0), h = e.dim(1), w = e.dim(2), n = h * w;
  if (phi.shape() != Shape{n, n}) throw ShapeError("naive_cct: phi shape");
  Tensor f(e.shape());
  for (std::size_t c = 0; c < c1; ++c) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        double acc = 0.0;
        for (std::size_t a = 0; a < h; ++a) {
          for (std::size_t b = 0; b < w; ++b) acc += phi[(i * w + j) * n + a * w + b] * e[(c * h + a) * w + b];
        }
        f[(c * h + i) * w + j] = acc / static_cast<double>(h * w);
      }
    }
  }
  return f;
}

LstmStepResult naive_lstm_step(const Tensor& weight, const Tensor& bias, const Tensor& h, const Tensor& c,
                               const Tensor& x, bool previous_cell_output) {
  const std::size_t d = weight.dim(0) / 4, cin = weight.dim(1) - d, lanes = x.dim(1);
  if (x.dim(0) != cin) throw ShapeError("naive_lstm_step: input channels");
  LstmStepResult out{Tensor({d, lanes}), Tensor({d, lanes})};
  for (std::size_t l = 0; l < lanes; ++l) {
    for (std::size_t u = 0; u < d; ++u) {
      double pre[4];
      for (std::size_t gate = 0; gate < 4; ++gate) {
        const std::size_t row = gate * d + u;
        double acc = bias[row];
        for (std::size_t k = 0; k < cin; ++k) acc += weight[row * (cin + d) + k] * x[k * lanes + l];
        for (std::size_t k = 0; k < d; ++k) acc += weight[row * (cin + d) + cin + k] * h[k * lanes + l];
        pre[gate] = acc;
      }
      const double ig = sigm(pre[0]), fg = sigm(pre[1]), og = sigm(pre[2]), mod = std::tanh(pre[3]);
      const double c_prev = c[u * lanes + l];
      const double c_new = fg * c_prev + ig * mod;
      out.c[u * lanes + l] = c_new;
      out.h[u * lanes + l] = og * std::tanh(previous_cell_output ? c_prev : c_new);
    }
  }
  return out;
}

Tensor naive_bilstm(const Tensor& w_fwd, const Tensor& b_fwd, const Tensor& w_bwd, const Tensor& b_bwd,
                    const Tensor& x, std::size_t time_axis, bool previous_cell_output) {
  const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2), d = w_fwd.dim(0) / 4;
  const bool rows_are_time = time_axis == 1;
  const std::size_t steps = rows_are_time ? h : w, lanes = rows_are_time ? w : h;
  Tensor out({2 * d, h, w});
  auto input_at = [&](std::size_t t, std::size_t lane, std::size_t ch) {
    return rows_are_time ? x.at(ch, t, lane) : x.at(ch, lane, t);
  };
  auto store = [&](std::size_t t, std::size_t lane, std::size_t ch, double v) {
    if (rows_are_time) {
      out.at(ch, t, lane) = v;
    } else {
      out.at(ch, lane, t) = v;
    }
  };
  for (std::size_t lane = 0; lane < lanes; ++lane) {
    for (int dir = 0; dir < 2; ++dir) {
      const Tensor& wt = dir == 0 ? w_fwd : w_bwd;
      const Tensor& bt = dir == 0 ? b_fwd : b_bwd;
      Tensor hs({d, 1}), cs({d, 1});
      for (std::size_t step = 0; step < steps; ++step) {
        const std::size_t t = dir == 0 ? step : steps - 1 - step;
        Tensor xin({cin, 1});
        for (std::size_t ch = 0; ch < cin; ++ch) xin[ch] = input_at(t, lane, ch);
        LstmStepResult r = naive_lstm_step(wt, bt, hs, cs, xin, previous_cell_output);
        hs = r.h;
        cs = r.c;
        for (std::size_t u = 0; u < d; ++u) store(t, lane, dir * d + u, hs[u]);
      }
    }
  }
  return out;
}

double naive_softmax_xent(const Tensor& logits, std::span<const int> labels) {
  const std::size_t k = logits.dim(0), n = logits.dim(1) * logits.dim(2);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < n; ++p) {
    if (labels[p] == 255) continue;
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(logits[c * n + p]);
    total += std::log(z) - logits[static_cast<std::size_t>(labels[p]) * n + p];
    ++count;
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

Tensor naive_nonlocal_aggregate(const Tensor& query, const Tensor& key, const Tensor& value) {
  const std::size_t c = value.dim(0), n = value.dim(1), cq = query.dim(0);
  Tensor out({c, n});
  for (std::size_t p = 0; p < n; ++p) {
    std::vector<double> score(n);
    for (std::size_t q = 0; q < n; ++q) {
      double dot = 0.0;
      for (std::size_t k = 0; k < cq; ++k) dot += query[k * n + p] * key[k * n + q];
      score[q] = dot;
    }
    const double peak = *std::max_element(score.begin(), score.end());
    double z = 0.0;
    for (double& s : score) z += (s = std::exp(s - peak));
    for (std::size_t ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (std::size_t q = 0; q < n; ++q) acc += score[q] / z * value[ch * n + q];
      out[ch * n + p] = acc;
    }
  }
  return out;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double step) {
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t k = 0; k < x.numel(); ++k) {
    const double orig = probe[k];
    probe[k] = orig + step;
    const double up = f(probe);
    probe[k] = orig - step;
    const double down = f(probe);
    probe[k] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) throw NumericError("finite_diff_grad: non-finite objective");
    grad[k] = (up - down) / (2.0 * step);
  }
  return grad;
}

std::string GradCheckReport::to_json() const {
  std::ostringstream os;
  os.precision(6);
  os << std::scientific << "{\"name\":\"" << name << "\",\"max_rel_error\":" << max_rel_error
     << ",\"max_abs_error\":" << max_abs_error << ",\"step\":" << step << ",\"threshold\":" << threshold
     << ",\"passed\":" << (passed ? "true" : "false") << '}';
  return os.str();
}

GradCheckReport compare_gradients(std::string name, const Tensor& analytic, const Tensor& numeric, double step,
                                  double threshold) {
  if (analytic.shape() != numeric.shape()) throw ShapeError("compare_gradients: shape mismatch");
  double scale = 1e-8, worst = 0.0;
  for (std::size_t k = 0; k < analytic.numel(); ++k) {
    scale = std::max({scale, std::abs(analytic[k]), std::abs(numeric[k])});
    worst = std::max(worst, std::abs(analytic[k] - numeric[k]));
  }
  GradCheckReport r;
  r.name = std::move(name);
  r.max_abs_error = worst;
  r.max_rel_error = worst / scale;
  r.step = step;
  r.threshold = threshold;
  r.passed = r.max_rel_error < threshold;
  return r;
}

}  // namespace consensus::oracle
