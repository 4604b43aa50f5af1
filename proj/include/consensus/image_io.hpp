#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "consensus/data.hpp"

namespace consensus {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
};

/// Binary P5 with maxval 255.
void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

/// Binary P6 with maxval 255; rgb is interleaved, 3 bytes per pixel.
void write_ppm(const std::filesystem::path& path, std::size_t height, std::size_t width,
               std::span<const std::uint8_t> rgb);

/// Min-max maps values to 0..255; a constant input maps to all zeros.
GrayImage normalize_to_gray(std::span<const double> values, std::size_t height, std::size_t width);

/// Writes <stem>.ppm (image), <stem>_labels.pgm and <stem>_instances.pgm.
void export_sample(const SceneSample& sample, const std::filesystem::path& stem);

}  // namespace consensus
