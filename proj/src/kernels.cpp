#include "consensus/kernels.hpp"

#include <algorithm>
#include <cstdint>
#include <vector>

namespace consensus::kernels {

namespace {

// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelWork = 1 << 15;

inline double load(std::span<const double> m, bool trans, std::size_t rows_ld, std::size_t i, std::size_t j,
                   std::size_t cols_ld) {
  // m is logically (i, j); stored row-major either as-is or transposed.
  return trans ? m[j * rows_ld + i] : m[i * cols_ld + j];
}

// Input coordinate for output position o and kernel tap t, or -1 if it falls in the padding.
inline std::ptrdiff_t source_index(std::size_t o, std::size_t t, const ConvGeometry& g, std::size_t extent) {
  const auto pos = static_cast<std::ptrdiff_t>(o * g.stride + t * g.dilation) - static_cast<std::ptrdiff_t>(g.pad());
  return (pos < 0 || pos >= static_cast<std::ptrdiff_t>(extent)) ? -1 : pos;
}

}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          std::span<const double> a, std::span<const double> b, double beta, std::span<double> c) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* crow = c.data() + i * n;
    if (beta == 0.0) {
      std::fill(crow, crow + n, 0.0);
    } else if (beta != 1.0) {
      for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
    }
    if (!trans_b) {
      for (std::size_t p = 0; p < k; ++p) {
        const double av = alpha * (trans_a ? a[p * m + i] : a[i * k + p]);
        if (av == 0.0) continue;
        const double* brow = b.data() + p * n;
#pragma omp simd
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    } else {
      for (std::size_t j = 0; j < n; ++j) {
        const double* brow = b.data() + j * k;
        double acc = 0.0;
        if (!trans_a) {
          const double* arow = a.data() + i * k;
#pragma omp simd reduction(+ : acc)
          for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        } else {
          for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * brow[p];
        }
        crow[j] += alpha * acc;
      }
    }
  }
}

void gemm_reference(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
                    std::span<const double> a, std::span<const double> b, double beta, std::span<double> c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        acc += load(a, trans_a, m, i, p, k) * load(b, trans_b, k, p, j, n);
      }
      c[i * n + j] = alpha * acc + (beta == 0.0 ? 0.0 : beta * c[i * n + j]);
    }
  }
}

void im2col(const ConvGeometry& g, std::span<const double> x, std::span<double> col) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), kk = g.kernel * g.kernel;
  const auto rows = static_cast<std::int64_t>(g.patch_size());
#pragma omp parallel for schedule(static) if (g.patch_size() * oh * ow > kParallelWork)
  for (std::int64_t rr = 0; rr < rows; ++rr) {
    const auto row = static_cast<std::size_t>(rr);
    const std::size_t c = row / kk, ki = (row % kk) / g.kernel, kj = row % g.kernel;
    const double* plane = x.data() + c * g.height * g.width;
    double* out = col.data() + row * oh * ow;
    for (std::size_t oi = 0; oi < oh; ++oi) {
      const auto si = source_index(oi, ki, g, g.height);
      for (std::size_t oj = 0; oj < ow; ++oj) {
        const auto sj = source_index(oj, kj, g, g.width);
        out[oi * ow + oj] = (si < 0 || sj < 0) ? 0.0 : plane[si * g.width + sj];
      }
    }
  }
}

void col2im(const ConvGeometry& g, std::span<const double> col, std::span<double> dx) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), kk = g.kernel * g.kernel;
  // Rows of one channel scatter into the same plane, so parallelize over channels.
  const auto channels = static_cast<std::int64_t>(g.in_channels);
#pragma omp parallel for schedule(static) if (g.patch_size() * oh * ow > kParallelWork)
  for (std::int64_t cc = 0; cc < channels; ++cc) {
    const auto c = static_cast<std::size_t>(cc);
    double* plane = dx.data() + c * g.height * g.width;
    for (std::size_t t = 0; t < kk; ++t) {
      const std::size_t ki = t / g.kernel, kj = t % g.kernel;
      const double* in = col.data() + (c * kk + t) * oh * ow;
      for (std::size_t oi = 0; oi < oh; ++oi) {
        const auto si = source_index(oi, ki, g, g.height);
        if (si < 0) continue;
        for (std::size_t oj = 0; oj < ow; ++oj) {
          const auto sj = source_index(oj, kj, g, g.width);
          if (sj >= 0) plane[si * g.width + sj] += in[oi * ow + oj];
        }
      }
    }
  }
}

namespace {

bool is_pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.stride == 1; }

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> y) {
  const std::size_t positions = g.out_height() * g.out_width();
  std::vector<double> scratch;
  std::span<const double> col = x;
  if (!is_pointwise(g)) {
    scratch.resize(g.patch_size() * positions);
    im2col(g, x, scratch);
    col = scratch;
  }
  gemm(false, false, g.out_channels, positions, g.patch_size(), 1.0, weight, col, 0.0, y);
  if (!bias.empty()) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      double* row = y.data() + o * positions;
      for (std::size_t p = 0; p < positions; ++p) row[p] += bias[o];
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> weight, std::span<const double> dy,
                           std::span<double> dx) {
  const std::size_t positions = g.out_height() * g.out_width();
  if (is_pointwise(g)) {
    gemm(true, false, g.patch_size(), positions, g.out_channels, 1.0, weight, dy, 1.0, dx);
    return;
  }
  std::vector<double> dcol(g.patch_size() * positions);
  gemm(true, false, g.patch_size(), positions, g.out_channels, 1.0, weight, dy, 0.0, dcol);
  col2im(g, dcol, dx);
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> x, std::span<const double> dy,
                            std::span<double> dweight, std::span<double> dbias) {
  const std::size_t positions = g.out_height() * g.out_width();
  std::vector<double> scratch;
  std::span<const double> col = x;
  if (!is_pointwise(g)) {
    scratch.resize(g.patch_size() * positions);
    im2col(g, x, scratch);
    col = scratch;
  }
  gemm(false, true, g.out_channels, g.patch_size(), positions, 1.0, dy, col, 1.0, dweight);
  if (!dbias.empty()) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      const double* row = dy.data() + o * positions;
      double acc = 0.0;
      for (std::size_t p = 0; p < positions; ++p) acc += row[p];
      dbias[o] += acc;
    }
  }
}

void conv2d_forward_reference(const ConvGeometry& g, std::span<const double> x, std::span<const double> weight,
                              std::span<const double> bias, std::span<double> y) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    for (std::size_t oi = 0; oi < oh; ++oi) {
      for (std::size_t oj = 0; oj < ow; ++oj) {
        double acc = bias.empty() ? 0.0 : bias[o];
        for (std::size_t c = 0; c < g.in_channels; ++c) {
          for (std::size_t ki = 0; ki < k; ++ki) {
            const auto si = source_index(oi, ki, g, g.height);
            if (si < 0) continue;
            for (std::size_t kj = 0; kj < k; ++kj) {
              const auto sj = source_index(oj, kj, g, g.width);
              if (sj < 0) continue;
              acc += weight[((o * g.in_channels + c) * k + ki) * k + kj] *
                     x[(c * g.height + static_cast<std::size_t>(si)) * g.width + static_cast<std::size_t>(sj)];
            }
          }
        }
        y[(o * oh + oi) * ow + oj] = acc;
      }
    }
  }
}

void conv2d_backward_input_reference(const ConvGeometry& g, std::span<const double> weight,
                                     std::span<const double> dy, std::span<double> dx) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    for (std::size_t oi = 0; oi < oh; ++oi) {
      for (std::size_t oj = 0; oj < ow; ++oj) {
        const double gy = dy[(o * oh + oi) * ow + oj];
        for (std::size_t c = 0; c < g.in_channels; ++c) {
          for (std::size_t ki = 0; ki < k; ++ki) {
            const auto si = source_index(oi, ki, g, g.height);
            if (si < 0) continue;
            for (std::size_t kj = 0; kj < k; ++kj) {
              const auto sj = source_index(oj, kj, g, g.width);
              if (sj < 0) continue;
              dx[(c * g.height + static_cast<std::size_t>(si)) * g.width + static_cast<std::size_t>(sj)] +=
                  gy * weight[((o * g.in_channels + c) * k + ki) * k + kj];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_weight_reference(const ConvGeometry& g, std::span<const double> x,
                                      std::span<const double> dy, std::span<double> dweight,
                                      std::span<double> dbias) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    for (std::size_t oi = 0; oi < oh; ++oi) {
      for (std::size_t oj = 0; oj < ow; ++oj) {
        const double gy = dy[(o * oh + oi) * ow + oj];
        if (!dbias.empty()) dbias[o] += gy;
        for (std::size_t c = 0; c < g.in_channels; ++c) {
          for (std::size_t ki = 0; ki < k; ++ki) {
            const auto si = source_index(oi, ki, g, g.height);
            if (si < 0) continue;
            for (std::size_t kj = 0; kj < k; ++kj) {
              const auto sj = source_index(oj, kj, g, g.width);
              if (sj < 0) continue;
              dweight[((o * g.in_channels + c) * k + ki) * k + kj] +=
                  gy * x[(c * g.height + static_cast<std::size_t>(si)) * g.width + static_cast<std::size_t>(sj)];
            }
          }
        }
      }
    }
  }
}

void unfold(std::size_t channels, std::size_t height, std::size_t width, std::size_t r, std::span<const double> x,
            std::span<double> out) {
  const auto half = static_cast<std::ptrdiff_t>(r / 2);
  const std::size_t n = height * width, rr = r * r;
  const auto chans = static_cast<std::int64_t>(channels);
#pragma omp parallel for schedule(static) if (channels * n * rr > kParallelWork)
  for (std::int64_t cc = 0; cc < chans; ++cc) {
    const auto c = static_cast<std::size_t>(cc);
    const double* plane = x.data() + c * n;
    double* dst = out.data() + c * n * rr;
    for (std::size_t i = 0; i < height; ++i) {
      for (std::size_t j = 0; j < width; ++j) {
        double* window = dst + (i * width + j) * rr;
        for (std::ptrdiff_t dh = -half; dh <= half; ++dh) {
          const auto si = static_cast<std::ptrdiff_t>(i) + dh;
          const bool row_ok = si >= 0 && si < static_cast<std::ptrdiff_t>(height);
          for (std::ptrdiff_t dw = -half; dw <= half; ++dw) {
            const auto sj = static_cast<std::ptrdiff_t>(j) + dw;
            const bool ok = row_ok && sj >= 0 && sj < static_cast<std::ptrdiff_t>(width);
            window[(dh + half) * static_cast<std::ptrdiff_t>(r) + (dw + half)] =
                ok ? plane[si * static_cast<std::ptrdiff_t>(width) + sj] : 0.0;
          }
        }
      }
    }
  }
}

void fold(std::size_t channels, std::size_t height, std::size_t width, std::size_t r, std::span<const double> cols,
          std::span<double> dx) {
  const auto half = static_cast<std::ptrdiff_t>(r / 2);
  const std::size_t n = height * width, rr = r * r;
  const auto chans = static_cast<std::int64_t>(channels);
#pragma omp parallel for schedule(static) if (channels * n * rr > kParallelWork)
  for (std::int64_t cc = 0; cc < chans; ++cc) {
    const auto c = static_cast<std::size_t>(cc);
    double* plane = dx.data() + c * n;
    const double* src = cols.data() + c * n * rr;
    for (std::size_t i = 0; i < height; ++i) {
      for (std::size_t j = 0; j < width; ++j) {
        const double* window = src + (i * width + j) * rr;
        for (std::ptrdiff_t dh = -half; dh <= half; ++dh) {
          const auto si = static_cast<std::ptrdiff_t>(i) + dh;
          if (si < 0 || si >= static_cast<std::ptrdiff_t>(height)) continue;
          for (std::ptrdiff_t dw = -half; dw <= half; ++dw) {
            const auto sj = static_cast<std::ptrdiff_t>(j) + dw;
            if (sj < 0 || sj >= static_cast<std::ptrdiff_t>(width)) continue;
            plane[si * static_cast<std::ptrdiff_t>(width) + sj] +=
                window[(dh + half) * static_cast<std::ptrdiff_t>(r) + (dw + half)];
          }
        }
      }
    }
  }
}

void unfold_reference(std::size_t channels, std::size_t height, std::size_t width, std::size_t r,
                      std::span<const double> x, std::span<double> out) {
  const std::size_t n = height * width, rr = r * r, half = r / 2;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t p = 0; p < n; ++p) {
      const std::size_t i = p / width, j = p % width;
      for (std::size_t slot = 0; slot < rr; ++slot) {
        // Shift by half so the window's top-left tap sits at (i - half, j - half).
        const std::size_t si = i + slot / r, sj = j + slot % r;
        const bool inside = si >= half && si - half < height && sj >= half && sj - half < width;
        out[(c * n + p) * rr + slot] = inside ? x[c * n + (si - half) * width + (sj - half)] : 0.0;
      }
    }
  }
}

void fold_reference(std::size_t channels, std::size_t height, std::size_t width, std::size_t r,
                    std::span<const double> cols, std::span<double> dx) {
  const std::size_t n = height * width, rr = r * r, half = r / 2;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t p = 0; p < n; ++p) {
      const std::size_t i = p / width, j = p % width;
      for (std::size_t slot = 0; slot < rr; ++slot) {
        const std::size_t si = i + slot / r, sj = j + slot % r;
        if (si >= half && si - half < height && sj >= half && sj - half < width) {
          dx[c * n + (si - half) * width + (sj - half)] += cols[(c * n + p) * rr + slot];
        }
      }
    }
  }
}

}  // namespace consensus::kernels
