#include "consensus/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

namespace consensus {

namespace {

void write_pnm(const std::filesystem::path& path, const char* magic, std::size_t height, std::size_t width,
               std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ImageIoError("image: cannot open '" + path.string() + "' for writing");
  f << magic << '\n' << width << ' ' << height << "\n255\n";
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ImageIoError("image: write failed for '" + path.string() + "'");
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  if (image.pixels.size() != image.height * image.width) throw ImageIoError("image: pixel count mismatch");
  write_pnm(path, "P5", image.height, image.width, image.pixels);
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ImageIoError("image: cannot open '" + path.string() + "'");
  std::string magic;
  std::size_t width = 0, height = 0, maxval = 0;
  f >> magic >> width >> height >> maxval;
  if (magic != "P5" || maxval != 255) throw ImageIoError("image: '" + path.string() + "' is not an 8-bit P5 file");
  f.get();  // single whitespace after the header
  GrayImage img{height, width, std::vector<std::uint8_t>(height * width)};
  f.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!f) throw ImageIoError("image: truncated P5 payload in '" + path.string() + "'");
  return img;
}

void write_ppm(const std::filesystem::path& path, std::size_t height, std::size_t width,
               std::span<const std::uint8_t> rgb) {
  if (rgb.size() != 3 * height * width) throw ImageIoError("image: rgb byte count mismatch");
  write_pnm(path, "P6", height, width, rgb);
}

GrayImage normalize_to_gray(std::span<const double> values, std::size_t height, std::size_t width) {
  if (values.size() != height * width) throw ImageIoError("image: value count mismatch");
  GrayImage img{height, width, std::vector<std::uint8_t>(values.size(), 0)};
  if (values.empty()) return img;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (range <= 0.0) return img;
  for (std::size_t k = 0; k < values.size(); ++k) {
    img.pixels[k] = static_cast<std::uint8_t>(std::lround(255.0 * (values[k] - *lo) / range));
  }
  return img;
}

void export_sample(const SceneSample& sample, const std::filesystem::path& stem) {
  const std::size_t h = sample.height, w = sample.width;
  std::vector<std::uint8_t> rgb(3 * h * w);
  for (std::size_t p = 0; p < h * w; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      rgb[3 * p + c] = static_cast<std::uint8_t>(std::lround(255.0 * sample.image[c * h * w + p]));
    }
  }
  write_ppm(stem.string() + ".ppm", h, w, rgb);
  auto to_gray = [&](const std::vector<int>& ids) {
    GrayImage g{h, w, std::vector<std::uint8_t>(h * w)};
    for (std::size_t p = 0; p < h * w; ++p) g.pixels[p] = static_cast<std::uint8_t>(std::clamp(ids[p], 0, 255));
    return g;
  };
  write_pgm(stem.string() + "_labels.pgm", to_gray(sample.labels));
  write_pgm(stem.string() + "_instances.pgm", to_gray(sample.instances));
}

}  // namespace consensus
