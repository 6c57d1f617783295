#include "dogpain/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "dogpain/errors.hpp"
#include "dogpain/rng.hpp"

namespace dogpain::img {

void write_ppm(const std::filesystem::path& path, const Image& im) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write image " + path.string());
  os << "P6\n" << im.width << " " << im.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(im.pixels.data()),
           static_cast<std::streamsize>(im.pixels.size()));
  if (!os) throw IoError("short write on image " + path.string());
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read image " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255 || w <= 0 || h <= 0)
    throw ParseError("unsupported image format in " + path.string());
  is.get();  // single whitespace after the header
  Image im(w, h);
  is.read(reinterpret_cast<char*>(im.pixels.data()), static_cast<std::streamsize>(im.pixels.size()));
  if (is.gcount() != static_cast<std::streamsize>(im.pixels.size()))
    throw ParseError("truncated image data in " + path.string());
  return im;
}

namespace {

void blend_px(Image& im, int x, int y, const Color& c, double alpha) {
  if (x < 0 || y < 0 || x >= im.width || y >= im.height || alpha <= 0.0) return;
  alpha = std::min(1.0, alpha);
  std::uint8_t* p = im.px(x, y);
  const double src[3] = {c.r, c.g, c.b};
  for (int i = 0; i < 3; ++i) {
    const double mixed = (1.0 - alpha) * (p[i] / 255.0) + alpha * src[i];
    p[i] = static_cast<std::uint8_t>(std::clamp(mixed, 0.0, 1.0) * 255.0 + 0.5);
  }
}

}  // namespace

void draw_line(Image& im, double x0, double y0, double x1, double y1, const Color& c, double width) {
  const double minx = std::min(x0, x1) - width - 1, maxx = std::max(x0, x1) + width + 1;
  const double miny = std::min(y0, y1) - width - 1, maxy = std::max(y0, y1) + width + 1;
  const int ix0 = std::max(0, static_cast<int>(std::floor(minx)));
  const int ix1 = std::min(im.width - 1, static_cast<int>(std::ceil(maxx)));
  const int iy0 = std::max(0, static_cast<int>(std::floor(miny)));
  const int iy1 = std::min(im.height - 1, static_cast<int>(std::ceil(maxy)));
  const double dx = x1 - x0, dy = y1 - y0;
  const double len2 = dx * dx + dy * dy;
  for (int y = iy0; y <= iy1; ++y) {
    for (int x = ix0; x <= ix1; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      double t = len2 > 0 ? ((px - x0) * dx + (py - y0) * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double cx = x0 + t * dx, cy = y0 + t * dy;
      const double dist = std::hypot(px - cx, py - cy);
      blend_px(im, x, y, c, width + 0.5 - dist);  // linear falloff over one pixel
    }
  }
}

void draw_disc(Image& im, double cx, double cy, double radius, const Color& c) {
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - radius - 1)));
  const int x1 = std::min(im.width - 1, static_cast<int>(std::ceil(cx + radius + 1)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - radius - 1)));
  const int y1 = std::min(im.height - 1, static_cast<int>(std::ceil(cy + radius + 1)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dist = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
      blend_px(im, x, y, c, radius + 0.5 - dist);
    }
}

void fill_value_noise(Image& im, std::uint64_t seed, double lo, double hi, int cells) {
  RandomStream rs(seed);
  const int gw = cells + 1, gh = cells + 1;
  std::vector<double> grid(static_cast<std::size_t>(gw) * gh);
  for (auto& g : grid) g = rs.uniform(lo, hi);
  for (int y = 0; y < im.height; ++y) {
    for (int x = 0; x < im.width; ++x) {
      const double gx = static_cast<double>(x) / im.width * cells;
      const double gy = static_cast<double>(y) / im.height * cells;
      const int cx = static_cast<int>(gx), cy = static_cast<int>(gy);
      const double fx = gx - cx, fy = gy - cy;
      const double v00 = grid[cy * gw + cx], v01 = grid[cy * gw + cx + 1];
      const double v10 = grid[(cy + 1) * gw + cx], v11 = grid[(cy + 1) * gw + cx + 1];
      const double v = (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
      std::uint8_t* p = im.px(x, y);
      // slight per-channel tint keeps it from looking synthetic-gray
      p[0] = static_cast<std::uint8_t>(std::clamp(v * 255.0, 0.0, 255.0));
      p[1] = static_cast<std::uint8_t>(std::clamp(v * 245.0, 0.0, 255.0));
      p[2] = static_cast<std::uint8_t>(std::clamp(v * 225.0, 0.0, 255.0));
    }
  }
}

template <typename T>
num::Tensor<T> bilinear_resize(const num::Tensor<T>& src, std::size_t out_h, std::size_t out_w) {
  if (src.ndim() == 2) {
    num::Tensor<T> wrapped({1, src.extent(0), src.extent(1)},
                           std::vector<T>(src.data(), src.data() + src.size()));
    num::Tensor<T> r = bilinear_resize(wrapped, out_h, out_w);
    return num::Tensor<T>({out_h, out_w}, std::vector<T>(r.data(), r.data() + r.size()));
  }
  if (src.ndim() != 3) throw DimensionError("bilinear_resize: input must be [C,H,W] or [H,W]");
  const std::size_t c = src.extent(0), h = src.extent(1), w = src.extent(2);
  num::Tensor<T> out({c, out_h, out_w});
  const double sy = out_h > 1 ? static_cast<double>(h - 1) / (out_h - 1) : 0.0;
  const double sx = out_w > 1 ? static_cast<double>(w - 1) / (out_w - 1) : 0.0;
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const double fy = oy * sy;
      const std::size_t y0 = std::min(static_cast<std::size_t>(fy), h - 1);
      const std::size_t y1 = std::min(y0 + 1, h - 1);
      const double wy = fy - y0;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const double fx = ox * sx;
        const std::size_t x0 = std::min(static_cast<std::size_t>(fx), w - 1);
        const std::size_t x1 = std::min(x0 + 1, w - 1);
        const double wx = fx - x0;
        const double v = (1 - wy) * ((1 - wx) * src.at3(ci, y0, x0) + wx * src.at3(ci, y0, x1)) +
                         wy * ((1 - wx) * src.at3(ci, y1, x0) + wx * src.at3(ci, y1, x1));
        out.at3(ci, oy, ox) = static_cast<T>(v);
      }
    }
  }
  return out;
}

Color colormap(double v) {
  v = std::clamp(v, 0.0, 1.0);
  // blue -> cyan -> green -> yellow -> red
  const double r = std::clamp(1.5 - std::abs(4.0 * v - 3.0), 0.0, 1.0);
  const double g = std::clamp(1.5 - std::abs(4.0 * v - 2.0), 0.0, 1.0);
  const double b = std::clamp(1.5 - std::abs(4.0 * v - 1.0), 0.0, 1.0);
  return Color{r, g, b};
}

template num::Tensor<float> bilinear_resize<float>(const num::Tensor<float>&, std::size_t, std::size_t);
template num::Tensor<double> bilinear_resize<double>(const num::Tensor<double>&, std::size_t,
                                                     std::size_t);

}  // namespace dogpain::img
