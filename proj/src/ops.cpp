#include "consensus/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "consensus/kernels.hpp"

namespace consensus::ops {

namespace {

void require_same_tape(Var a, Var b, const char* op) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) {
    throw std::invalid_argument(std::string(op) + ": operands must live on the same tape");
  }
}

void require_same_shape(Var a, Var b, const char* op) {
  require_same_tape(a, b, op);
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank(Var x, std::size_t rank, const char* op) {
  if (x.value().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(x.shape()));
  }
}

// Views a shape as (outer, axis length, inner) around `axis`.
struct AxisSplit {
  std::size_t outer = 1, length = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.length = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

template <class F, class DF>
Var unary(Var x, F f, DF df_from_xy) {
  const Tensor& xv = x.value();
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = f(xv[i]);
  return x.tape().record(std::move(y), {x}, [x, df_from_xy](Tape& t, const Tensor& g) {
    if (!t.requires_grad(x)) return;
    Tensor& dx = t.grad_buffer(x);
    const Tensor& xv = t.value(x);
    for (std::size_t i = 0; i < g.numel(); ++i) dx[i] += g[i] * df_from_xy(xv[i]);
  });
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] += bv[i];
  return a.tape().record(std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] -= bv[i];
  return a.tape().record(std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    if (t.requires_grad(b)) {
      Tensor& db = t.grad_buffer(b);
      for (std::size_t i = 0; i < g.numel(); ++i) db[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor y(av.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = av[i] * bv[i];
  return a.tape().record(std::move(y), {a, b}, [a, b](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    if (t.requires_grad(a)) {
      Tensor& da = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i] * bv[i];
    }
    if (t.requires_grad(b)) {
      Tensor& db = t.grad_buffer(b);
      for (std::size_t i = 0; i < g.numel(); ++i) db[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  Tensor y = a.value();
  for (double& v : y.data()) v *= s;
  return a.tape().record(std::move(y), {a}, [a, s](Tape& t, const Tensor& g) {
    if (!t.requires_grad(a)) return;
    Tensor& da = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.numel(); ++i) da[i] += s * g[i];
  });
}

Var divide(Var a, double d) {
  Tensor y = a.value();
  for (double& v : y.data()) v /= d;
  return a.tape().record(std::move(y), {a}, [a, d](Tape& t, const Tensor& g) {
    if (!t.requires_grad(a)) return;
    Tensor& da = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.numel(); ++i) da[i] += g[i] / d;
  });
}

Var sigmoid(Var x) {
  return unary(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double v) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 - s);
      });
}

Var tanh(Var x) {
  return unary(
      x, [](double v) { return std::tanh(v); },
      [](double v) {
        const double th = std::tanh(v);
        return 1.0 - th * th;
      });
}

Var relu(Var x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Var add_channel_bias(Var x, Var bias) {
  require_same_tape(x, bias, "add_channel_bias");
  const Tensor& xv = x.value();
  if (xv.rank() == 0 || bias.value().rank() != 1 || bias.dim(0) != xv.dim(0)) {
    throw ShapeError("add_channel_bias: bias " + shape_str(bias.shape()) + " for " + shape_str(xv.shape()));
  }
  const std::size_t channels = xv.dim(0), inner = xv.numel() / channels;
  Tensor y = xv;
  const Tensor& bv = bias.value();
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t k = 0; k < inner; ++k) y[c * inner + k] += bv[c];
  }
  return x.tape().record(std::move(y), {x, bias}, [x, bias, channels, inner](Tape& t, const Tensor& g) {
    t.accumulate(x, g);
    if (t.requires_grad(bias)) {
      Tensor& db = t.grad_buffer(bias);
      for (std::size_t c = 0; c < channels; ++c) {
        double acc = 0.0;
        for (std::size_t k = 0; k < inner; ++k) acc += g[c * inner + k];
        db[c] += acc;
      }
    }
  });
}

Var mul_trailing(Var a, Var b) {
  require_same_tape(a, b, "mul_trailing");
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (bs.size() > as.size() || !std::equal(bs.rbegin(), bs.rend(), as.rbegin())) {
    throw ShapeError("mul_trailing: " + shape_str(bs) + " is not a trailing shape of " + shape_str(as));
  }
  const std::size_t inner = b.value().numel(), outer = a.value().numel() / inner;
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor y(as);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < inner; ++k) y[o * inner + k] = av[o * inner + k] * bv[k];
  }
  return a.tape().record(std::move(y), {a, b}, [a, b, outer, inner](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(a);
    const Tensor& bv = t.value(b);
    if (t.requires_grad(a)) {
      Tensor& da = t.grad_buffer(a);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t k = 0; k < inner; ++k) da[o * inner + k] += g[o * inner + k] * bv[k];
      }
    }
    if (t.requires_grad(b)) {
      Tensor& db = t.grad_buffer(b);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t k = 0; k < inner; ++k) db[k] += g[o * inner + k] * av[o * inner + k];
      }
    }
  });
}

Var reshape(Var x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(y), {x}, [x](Tape& t, const Tensor& g) {
    if (!t.requires_grad(x)) return;
    Tensor& dx = t.grad_buffer(x);
    for (std::size_t i = 0; i < g.numel(); ++i) dx[i] += g[i];
  });
}

Var transpose(Var x) {
  require_rank(x, 2, "transpose");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  const Tensor& xv = x.value();
  Tensor y({cols, rows});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) y[j * rows + i] = xv[i * cols + j];
  }
  return x.tape().record(std::move(y), {x}, [x, rows, cols](Tape& t, const Tensor& g) {
    if (!t.requires_grad(x)) return;
    Tensor& dx = t.grad_buffer(x);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) dx[i * cols + j] += g[j * rows + i];
    }
  });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  Shape out_shape = parts.front().shape();
  if (axis >= out_shape.size()) throw ShapeError("concat: axis out of range for " + shape_str(out_shape));
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_same_tape(parts.front(), p, "concat");
    Shape s = p.shape();
    if (s.size() != out_shape.size()) throw ShapeError("concat: rank mismatch");
    total += s[axis];
    s[axis] = out_shape[axis];
    if (s != out_shape) throw ShapeError("concat: " + shape_str(p.shape()) + " vs " + shape_str(out_shape));
  }
  out_shape[axis] = total;
  const AxisSplit outer_split = split_at(out_shape, axis);
  Tensor y(out_shape);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    offsets.push_back(offset);
    const Tensor& pv = p.value();
    const std::size_t len = pv.dim(axis);
    for (std::size_t o = 0; o < outer_split.outer; ++o) {
      std::copy_n(pv.raw() + o * len * outer_split.inner, len * outer_split.inner,
                  y.raw() + (o * total + offset) * outer_split.inner);
    }
    offset += len;
  }
  return parts.front().tape().record(
      std::move(y), parts, [parts, offsets, axis, outer_split, total](Tape& t, const Tensor& g) {
        for (std::size_t k = 0; k < parts.size(); ++k) {
          if (!t.requires_grad(parts[k])) continue;
          Tensor& dp = t.grad_buffer(parts[k]);
          const std::size_t len = dp.dim(axis);
          for (std::size_t o = 0; o < outer_split.outer; ++o) {
            const double* src = g.raw() + (o * total + offsets[k]) * outer_split.inner;
            double* dst = dp.raw() + o * len * outer_split.inner;
            for (std::size_t i = 0; i < len * outer_split.inner; ++i) dst[i] += src[i];
          }
        }
      });
}

Var narrow(Var x, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& xs = x.shape();
  if (axis >= xs.size() || start + length > xs[axis]) {
    throw ShapeError("narrow: [" + std::to_string(start) + ", +" + std::to_string(length) + ") on axis " +
                     std::to_string(axis) + " of " + shape_str(xs));
  }
  const AxisSplit sp = split_at(xs, axis);
  Shape out_shape = xs;
  out_shape[axis] = length;
  Tensor y(out_shape);
  const Tensor& xv = x.value();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::copy_n(xv.raw() + (o * sp.length + start) * sp.inner, length * sp.inner, y.raw() + o * length * sp.inner);
  }
  return x.tape().record(std::move(y), {x}, [x, sp, start, length](Tape& t, const Tensor& g) {
    if (!t.requires_grad(x)) return;
    Tensor& dx = t.grad_buffer(x);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      double* dst = dx.raw() + (o * sp.length + start) * sp.inner;
      const double* src = g.raw() + o * length * sp.inner;
      for (std::size_t i = 0; i < length * sp.inner; ++i) dst[i] += src[i];
    }
  });
}

Var select(Var x, std::size_t axis, std::size_t index) {
  const Shape& xs = x.shape();
  if (axis >= xs.size() || index >= xs[axis]) {
    throw ShapeError("select: index " + std::to_string(index) + " on axis " + std::to_string(axis) + " of " +
                     shape_str(xs));
  }
  Shape out_shape = xs;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  return reshape(narrow(x, axis, index, 1), out_shape);
}

Var stack(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("stack: no inputs");
  Shape unit = parts.front().shape();
  if (axis > unit.size()) throw ShapeError("stack: axis out of range");
  unit.insert(unit.begin() + static_cast<std::ptrdiff_t>(axis), 1);
  std::vector<Var> lifted;
  lifted.reserve(parts.size());
  for (const Var& p : parts) {
    if (p.shape() != parts.front().shape()) throw ShapeError("stack: mismatched part " + shape_str(p.shape()));
    lifted.push_back(reshape(p, unit));
  }
  return concat(lifted, axis);
}

Var sum(Var x) {
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  return x.tape().record(Tensor::scalar(acc), {x}, [x](Tape& t, const Tensor& g) {
    if (!t.requires_grad(x)) return;
    Tensor& dx = t.grad_buffer(x);
    const double gv = g[0];
    for (double& v : dx.data()) v += gv;
  });
}

Var mean(Var x) {
  const auto n = static_cast<double>(x.value().numel());
  return scale(sum(x), 1.0 / n);
}

Var sum_last_axis(Var x) {
  const Shape& xs = x.shape();
  if (xs.empty()) throw ShapeError("sum_last_axis: scalar input");
  const std::size_t inner = xs.back(), outer = x.value().numel() / inner;
  Shape out_shape(xs.begin(), xs.end() - 1);
  Tensor y(out_shape);
  const Tensor& xv = x.value();
  for (std::size_t o = 0; o < outer; ++o) {
    double acc = 0.0;
    for (std::size_t k = 0; k < inner; ++k) acc += xv[o * inner + k];
    y[o] = acc;
  }
  return x.tape().record(std::move(y), {x}, [x, outer, inner](Tape& t, const Tensor& g) {
    if (!t.requires_grad(x)) return;
    Tensor& dx = t.grad_buffer(x);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t k = 0; k < inner; ++k) dx[o * inner + k] += g[o];
    }
  });
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw ShapeError("matmul: " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
  Tensor y({m, n});
  kernels::gemm(false, false, m, n, k, 1.0, a.value().data(), b.value().data(), 0.0, y.data());
  return a.tape().record(std::move(y), {a, b}, [a, b, m, n, k](Tape& t, const Tensor& g) {
    if (t.requires_grad(a)) {
      kernels::gemm(false, true, m, k, n, 1.0, g.data(), t.value(b).data(), 1.0, t.grad_buffer(a).data());
    }
    if (t.requires_grad(b)) {
      kernels::gemm(true, false, k, n, m, 1.0, t.value(a).data(), g.data(), 1.0, t.grad_buffer(b).data());
    }
  });
}

Var conv2d(Var x, Var weight, Var bias, Conv2dOptions options) {
  require_same_tape(x, weight, "conv2d");
  require_rank(x, 3, "conv2d");
  require_rank(weight, 4, "conv2d");
  const Shape& ws = weight.shape();
  if (ws[2] != ws[3] || ws[2] % 2 == 0) {
    throw ShapeError("conv2d: kernel must be square with odd size, got " + shape_str(ws));
  }
  if (ws[1] != x.dim(0)) {
    throw ShapeError("conv2d: weight " + shape_str(ws) + " expects " + std::to_string(ws[1]) +
                     " input channels, input is " + shape_str(x.shape()));
  }
  if (options.stride == 0 || options.dilation == 0) throw std::invalid_argument("conv2d: stride/dilation must be > 0");
  const bool has_bias = bias.valid();
  if (has_bias) {
    require_same_tape(x, bias, "conv2d");
    if (bias.value().rank() != 1 || bias.dim(0) != ws[0]) {
      throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " for " + std::to_string(ws[0]) + " outputs");
    }
  }
  kernels::ConvGeometry geo{x.dim(0), x.dim(1), x.dim(2), ws[0], ws[2], options.stride, options.dilation};
  Tensor y({geo.out_channels, geo.out_height(), geo.out_width()});
  kernels::conv2d_forward(geo, x.value().data(), weight.value().data(),
                          has_bias ? bias.value().data() : std::span<const double>{}, y.data());
  std::vector<Var> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return x.tape().record(std::move(y), inputs, [x, weight, bias, has_bias, geo](Tape& t, const Tensor& g) {
    if (t.requires_grad(x)) {
      kernels::conv2d_backward_input(geo, t.value(weight).data(), g.data(), t.grad_buffer(x).data());
    }
    const bool want_bias = has_bias && t.requires_grad(bias);
    if (t.requires_grad(weight) || want_bias) {
      // The weight buffer is accumulated even when only the bias needs it; discard in that case.
      Tensor scratch;
      std::span<double> dw;
      if (t.requires_grad(weight)) {
        dw = t.grad_buffer(weight).data();
      } else {
        scratch = Tensor::zeros(t.value(weight).shape());
        dw = scratch.data();
      }
      kernels::conv2d_backward_weight(geo, t.value(x).data(), g.data(), dw,
                                      want_bias ? t.grad_buffer(bias).data() : std::span<double>{});
    }
  });
}

Var unfold(Var x, std::size_t r) {
  require_rank(x, 3, "unfold");
  if (r % 2 == 0) throw ShapeError("unfold: window size must be odd, got " + std::to_string(r));
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor y({c, h * w, r * r});
  kernels::unfold(c, h, w, r, x.value().data(), y.data());
  return x.tape().record(std::move(y), {x}, [x, c, h, w, r](Tape& t, const Tensor& g) {
    if (t.requires_grad(x)) kernels::fold(c, h, w, r, g.data(), t.grad_buffer(x).data());
  });
}

Var upsample_nearest(Var x, std::size_t factor) {
  require_rank(x, 3, "upsample_nearest");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2), oh = h * factor, ow = w * factor;
  const Tensor& xv = x.value();
  Tensor y({c, oh, ow});
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) y.at(k, i, j) = xv.at(k, i / factor, j / factor);
    }
  }
  return x.tape().record(std::move(y), {x}, [x, c, oh, ow, factor](Tape& t, const Tensor& g) {
    if (!t.requires_grad(x)) return;
    Tensor& dx = t.grad_buffer(x);
    for (std::size_t k = 0; k < c; ++k) {
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) dx.at(k, i / factor, j / factor) += g.at(k, i, j);
      }
    }
  });
}

namespace {

struct Interp {
  std::size_t lo = 0, hi = 0;
  double w_hi = 0.0;
};

std::vector<Interp> bilinear_taps(std::size_t in, std::size_t factor) {
  std::vector<Interp> taps(in * factor);
  for (std::size_t o = 0; o < taps.size(); ++o) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    taps[o] = Interp{lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

Var upsample_bilinear(Var x, std::size_t factor) {
  require_rank(x, 3, "upsample_bilinear");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const auto rows = bilinear_taps(h, factor);
  const auto cols = bilinear_taps(w, factor);
  const Tensor& xv = x.value();
  Tensor y({c, rows.size(), cols.size()});
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Interp& ri = rows[i];
      for (std::size_t j = 0; j < cols.size(); ++j) {
        const Interp& cj = cols[j];
        const double top = (1 - cj.w_hi) * xv.at(k, ri.lo, cj.lo) + cj.w_hi * xv.at(k, ri.lo, cj.hi);
        const double bot = (1 - cj.w_hi) * xv.at(k, ri.hi, cj.lo) + cj.w_hi * xv.at(k, ri.hi, cj.hi);
        y.at(k, i, j) = (1 - ri.w_hi) * top + ri.w_hi * bot;
      }
    }
  }
  return x.tape().record(std::move(y), {x}, [x, c, rows, cols](Tape& t, const Tensor& g) {
    if (!t.requires_grad(x)) return;
    Tensor& dx = t.grad_buffer(x);
    for (std::size_t k = 0; k < c; ++k) {
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const Interp& ri = rows[i];
        for (std::size_t j = 0; j < cols.size(); ++j) {
          const Interp& cj = cols[j];
          const double gv = g.at(k, i, j);
          dx.at(k, ri.lo, cj.lo) += gv * (1 - ri.w_hi) * (1 - cj.w_hi);
          dx.at(k, ri.lo, cj.hi) += gv * (1 - ri.w_hi) * cj.w_hi;
          dx.at(k, ri.hi, cj.lo) += gv * ri.w_hi * (1 - cj.w_hi);
          dx.at(k, ri.hi, cj.hi) += gv * ri.w_hi * cj.w_hi;
        }
      }
    }
  });
}

Var softmax_rows(Var x) {
  require_rank(x, 2, "softmax_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  const Tensor& xv = x.value();
  Tensor y({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    const double* in = xv.raw() + i * cols;
    double* out = y.raw() + i * cols;
    const double peak = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += (out[j] = std::exp(in[j] - peak));
    for (std::size_t j = 0; j < cols; ++j) out[j] /= z;
  }
  Tensor probs = y;
  return x.tape().record(std::move(y), {x}, [x, rows, cols, probs = std::move(probs)](Tape& t, const Tensor& g) {
    if (!t.requires_grad(x)) return;
    Tensor& dx = t.grad_buffer(x);
    for (std::size_t i = 0; i < rows; ++i) {
      const double* p = probs.raw() + i * cols;
      const double* gi = g.raw() + i * cols;
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += p[j] * gi[j];
      for (std::size_t j = 0; j < cols; ++j) dx[i * cols + j] += p[j] * (gi[j] - dot);
    }
  });
}

}  // namespace consensus::ops
