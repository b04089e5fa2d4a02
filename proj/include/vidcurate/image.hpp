#pragma once

// Minimal planar/interleaved image containers and the resampling helpers
// the pipeline needs (area downscale, separable Gaussian blur, bilinear
// sampling). No external imaging dependency.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <type_traits>
#include <vector>

#include "vidcurate/error.hpp"

namespace vidcurate {

// Row-major image with `C` interleaved channels.
template <typename T, int C = 1>
class Image {
 public:
  static constexpr int kChannels = C;

  Image() = default;
  Image(std::uint32_t width, std::uint32_t height, T fill = T{})
      : width_(width),
        height_(height),
        data_(static_cast<std::size_t>(width) * height * C, fill) {}
  Image(std::uint32_t width, std::uint32_t height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (data_.size() != static_cast<std::size_t>(width) * height * C)
      throw PreconditionError("image buffer size does not match dimensions");
  }

  std::uint32_t width() const noexcept { return width_; }
  std::uint32_t height() const noexcept { return height_; }
  std::uint32_t short_side() const noexcept { return std::min(width_, height_); }
  bool empty() const noexcept { return data_.empty(); }

  T& at(std::uint32_t x, std::uint32_t y, int c = 0) noexcept {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * C + c];
  }
  const T& at(std::uint32_t x, std::uint32_t y, int c = 0) const noexcept {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * C + c];
  }

  // Border-replicating read.
  T clamped(long x, long y, int c = 0) const noexcept {
    x = std::clamp<long>(x, 0, static_cast<long>(width_) - 1);
    y = std::clamp<long>(y, 0, static_cast<long>(height_) - 1);
    return at(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y), c);
  }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& buffer() noexcept { return data_; }
  const std::vector<T>& buffer() const noexcept { return data_; }

  bool operator==(const Image&) const = default;

 private:
  std::uint32_t width_ = 0;
  std::uint32_t height_ = 0;
  std::vector<T> data_;
};

using RgbImage = Image<std::uint8_t, 3>;
using GrayImage = Image<float, 1>;

// Dimensions after scaling so the short side equals `target_short`; the long
// side is rounded to nearest, aspect preserved.
struct Size2 {
  std::uint32_t width;
  std::uint32_t height;
  bool operator==(const Size2&) const = default;
};

inline Size2 fit_short_side(std::uint32_t width, std::uint32_t height,
                            std::uint32_t target_short) {
  if (width <= height) {
    const double h = std::round(static_cast<double>(height) * target_short / width);
    return {target_short, static_cast<std::uint32_t>(std::max(1.0, h))};
  }
  const double w = std::round(static_cast<double>(width) * target_short / height);
  return {static_cast<std::uint32_t>(std::max(1.0, w)), target_short};
}

namespace detail {

// Coverage of source cells by each destination cell along one axis.
struct AreaTap {
  std::uint32_t src;
  double weight;
};

inline std::vector<std::vector<AreaTap>> area_taps(std::uint32_t src_len,
                                                   std::uint32_t dst_len) {
  std::vector<std::vector<AreaTap>> taps(dst_len);
  const double ratio = static_cast<double>(src_len) / dst_len;
  for (std::uint32_t d = 0; d < dst_len; ++d) {
    const double lo = d * ratio;
    const double hi = (d + 1) * ratio;
    auto s = static_cast<std::uint32_t>(std::floor(lo));
    for (; s < src_len && s < hi; ++s) {
      const double w = std::min<double>(hi, s + 1) - std::max<double>(lo, s);
      if (w > 1e-12) taps[d].push_back({s, w / ratio});
    }
  }
  return taps;
}

}  // namespace detail

// Area-average resample (box filter with fractional coverage). Exact block
// means for integer ratios.
template <typename T, int C, typename Acc = double>
Image<T, C> resize_area(const Image<T, C>& src, std::uint32_t dst_w,
                        std::uint32_t dst_h) {
  if (src.width() == dst_w && src.height() == dst_h) return src;
  const auto tx = detail::area_taps(src.width(), dst_w);
  const auto ty = detail::area_taps(src.height(), dst_h);
  Image<T, C> out(dst_w, dst_h);
  for (std::uint32_t y = 0; y < dst_h; ++y) {
    for (std::uint32_t x = 0; x < dst_w; ++x) {
      for (int c = 0; c < C; ++c) {
        Acc acc = 0;
        for (const auto& a : ty[y])
          for (const auto& b : tx[x])
            acc += static_cast<Acc>(src.at(b.src, a.src, c)) * a.weight * b.weight;
        if constexpr (std::is_integral_v<T>) {
          out.at(x, y, c) = static_cast<T>(std::clamp<Acc>(std::round(acc), 0, 255));
        } else {
          out.at(x, y, c) = static_cast<T>(acc);
        }
      }
    }
  }
  return out;
}

// Downscale so the short side is at most `max_short`; smaller images pass through.
template <typename T, int C>
Image<T, C> shrink_to_short_side(const Image<T, C>& src, std::uint32_t max_short) {
  if (max_short == 0 || src.short_side() <= max_short) return src;
  const auto s = fit_short_side(src.width(), src.height(), max_short);
  return resize_area(src, s.width, s.height);
}

// Luma in [0,1] using BT.601 weights.
inline GrayImage to_gray(const RgbImage& rgb) {
  GrayImage g(rgb.width(), rgb.height());
  for (std::uint32_t y = 0; y < rgb.height(); ++y)
    for (std::uint32_t x = 0; x < rgb.width(); ++x)
      g.at(x, y) = static_cast<float>(
          (0.299 * rgb.at(x, y, 0) + 0.587 * rgb.at(x, y, 1) + 0.114 * rgb.at(x, y, 2)) /
          255.0);
  return g;
}

inline std::vector<double> gaussian_kernel(double sigma, int radius) {
  std::vector<double> k(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-(i * i) / (2 * sigma * sigma));
    sum += k[i + radius];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Separable Gaussian blur with border replication.
inline GrayImage gaussian_blur(const GrayImage& src, double sigma) {
  if (sigma <= 0) return src;
  const int radius = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  const auto k = gaussian_kernel(sigma, radius);
  GrayImage tmp(src.width(), src.height());
  GrayImage out(src.width(), src.height());
  for (std::uint32_t y = 0; y < src.height(); ++y)
    for (std::uint32_t x = 0; x < src.width(); ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i)
        acc += k[i + radius] * src.clamped(static_cast<long>(x) + i, y);
      tmp.at(x, y) = static_cast<float>(acc);
    }
  for (std::uint32_t y = 0; y < src.height(); ++y)
    for (std::uint32_t x = 0; x < src.width(); ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i)
        acc += k[i + radius] * tmp.clamped(x, static_cast<long>(y) + i);
      out.at(x, y) = static_cast<float>(acc);
    }
  return out;
}

// Bilinear sample at a real-valued position, border replicated.
template <int C>
inline float sample_bilinear(const Image<float, C>& img, double x, double y, int c = 0) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const double ax = x - fx;
  const double ay = y - fy;
  const auto ix = static_cast<long>(fx);
  const auto iy = static_cast<long>(fy);
  const double v00 = img.clamped(ix, iy, c);
  const double v10 = img.clamped(ix + 1, iy, c);
  const double v01 = img.clamped(ix, iy + 1, c);
  const double v11 = img.clamped(ix + 1, iy + 1, c);
  return static_cast<float>((v00 * (1 - ax) + v10 * ax) * (1 - ay) +
                            (v01 * (1 - ax) + v11 * ax) * ay);
}

// Bilinear resize to an arbitrary size (pixel-center aligned).
template <int C>
Image<float, C> resize_bilinear(const Image<float, C>& src, std::uint32_t dst_w,
                                std::uint32_t dst_h) {
  Image<float, C> out(dst_w, dst_h);
  const double sx = static_cast<double>(src.width()) / dst_w;
  const double sy = static_cast<double>(src.height()) / dst_h;
  for (std::uint32_t y = 0; y < dst_h; ++y)
    for (std::uint32_t x = 0; x < dst_w; ++x)
      for (int c = 0; c < C; ++c)
        out.at(x, y, c) = sample_bilinear(src, (x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5, c);
  return out;
}

}  // namespace vidcurate
