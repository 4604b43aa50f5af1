#pragma once

// Raw numeric kernels behind the differentiable ops. Every kernel has an
// OpenMP-parallel version (used by the ops) and a serial `_reference` twin
// written as plain direct loops; tests pin the two against each other and
// bench/ compares their speed.

#include <cstddef>
#include <span>

namespace consensus::kernels {

/// Zero-padded cross-correlation geometry for a single C x H x W image.
/// Padding is (kernel - 1) * dilation / 2 on every side, so stride 1
/// preserves the spatial size.
struct ConvGeometry {
  std::size_t in_channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t dilation = 1;

  std::size_t pad() const { return (kernel - 1) * dilation / 2; }
  std::size_t out_height() const { return (height + 2 * pad() - dilation * (kernel - 1) - 1) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * pad() - dilation * (kernel - 1) - 1) / stride + 1; }
  std::size_t patch_size() const { return in_channels * kernel * kernel; }
};

// C = alpha * op(A) * op(B) + beta * C, with op(A) m x k and op(B) k x n.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          std::span<const double> a, std::span<const double> b, double beta, std::span<double> c);
void gemm_reference(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
                    std::span<const double> a, std::span<const double> b, double beta, std::span<double> c);

// col is (in_channels * k * k) x (out_h * out_w).
void im2col(const ConvGeometry& g, std::span<const double> x, std::span<double> col);
// Adjoint of im2col; accumulates into dx.
void col2im(const ConvGeometry& g, std::span<const double> col, std::span<double> dx);

// bias may be empty.
void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> y);
void conv2d_forward_reference(const ConvGeometry& g, std::span<const double> x, std::span<const double> weight,
                              std::span<const double> bias, std::span<double> y);

// Accumulates into dx.
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> weight, std::span<const double> dy,
                           std::span<double> dx);
void conv2d_backward_input_reference(const ConvGeometry& g, std::span<const double> weight,
                                     std::span<const double> dy, std::span<double> dx);

// Accumulates into dweight and (when non-empty) dbias.
void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> x, std::span<const double> dy,
                            std::span<double> dweight, std::span<double> dbias);
void conv2d_backward_weight_reference(const ConvGeometry& g, std::span<const double> x,
                                      std::span<const double> dy, std::span<double> dweight,
                                      std::span<double> dbias);

// C x H x W -> C x (H*W) x r^2, zero padded; window slot (dh+R)*r + (dw+R)
// holds the neighbour at offset (dh, dw), R = (r-1)/2.
void unfold(std::size_t channels, std::size_t height, std::size_t width, std::size_t r, std::span<const double> x,
            std::span<double> out);
void unfold_reference(std::size_t channels, std::size_t height, std::size_t width, std::size_t r,
                      std::span<const double> x, std::span<double> out);

// Adjoint of unfold; accumulates into dx.
void fold(std::size_t channels, std::size_t height, std::size_t width, std::size_t r, std::span<const double> cols,
          std::span<double> dx);
void fold_reference(std::size_t channels, std::size_t height, std::size_t width, std::size_t r,
                    std::span<const double> cols, std::span<double> dx);

}  // namespace consensus::kernels
