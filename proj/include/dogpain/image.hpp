#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dogpain/tensor.hpp"

namespace dogpain::img {

// 8-bit RGB image, row-major, interleaved channels.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // size = 3*width*height

  Image() = default;
  Image(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(3) * w * h, 0) {}

  std::uint8_t* px(int x, int y) { return pixels.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
  const std::uint8_t* px(int x, int y) const {
    return pixels.data() + 3 * (static_cast<std::size_t>(y) * width + x);
  }
};

// Binary PPM (P6); byte-stable writes for deterministic output trees.
void write_ppm(const std::filesystem::path& path, const Image& im);
Image read_ppm(const std::filesystem::path& path);

// [0,1] float planes <-> 8-bit image. to_tensor returns [3,H,W].
template <typename T>
num::Tensor<T> to_tensor(const Image& im) {
  num::Tensor<T> t({3, static_cast<std::size_t>(im.height), static_cast<std::size_t>(im.width)});
  const std::size_t hw = static_cast<std::size_t>(im.height) * im.width;
  for (std::size_t i = 0; i < hw; ++i)
    for (std::size_t c = 0; c < 3; ++c) t[c * hw + i] = static_cast<T>(im.pixels[3 * i + c]) / T(255);
  return t;
}

template <typename T>
Image from_tensor(const num::Tensor<T>& t) {
  Image im(static_cast<int>(t.extent(2)), static_cast<int>(t.extent(1)));
  const std::size_t hw = t.extent(1) * t.extent(2);
  for (std::size_t i = 0; i < hw; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      T v = t[c * hw + i];
      v = v < T(0) ? T(0) : (v > T(1) ? T(1) : v);
      im.pixels[3 * i + c] = static_cast<std::uint8_t>(v * T(255) + T(0.5));
    }
  return im;
}

struct Color {
  double r = 0, g = 0, b = 0;  // [0,1]
};

// Anti-aliased line segment: coverage falls off linearly with distance from
// the segment within `width` pixels.
void draw_line(Image& im, double x0, double y0, double x1, double y1, const Color& c, double width);
void draw_disc(Image& im, double cx, double cy, double radius, const Color& c);

// Smooth per-video background: seeded value noise, bilinearly interpolated.
void fill_value_noise(Image& im, std::uint64_t seed, double lo, double hi, int cells = 6);

// Bilinear interpolation with corner alignment: dst (0,0) and (W-1,H-1) map
// exactly onto the source corners.
template <typename T>
num::Tensor<T> bilinear_resize(const num::Tensor<T>& src, std::size_t out_h, std::size_t out_w);

// Jet-like colormap for saliency overlays.
Color colormap(double v);

extern template num::Tensor<float> bilinear_resize<float>(const num::Tensor<float>&, std::size_t,
                                                          std::size_t);
extern template num::Tensor<double> bilinear_resize<double>(const num::Tensor<double>&, std::size_t,
                                                            std::size_t);

}  // namespace dogpain::img
