#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "vidcurate/hash.hpp"
#include "vidcurate/image.hpp"
#include "vidcurate/ingest.hpp"
#include "vidcurate/manifest.hpp"
#include "vidcurate/synth.hpp"

namespace fixture {

using namespace vidcurate;

inline RgbImage solid(std::uint32_t w, std::uint32_t h, double r, double g, double b) {
  RgbImage img(w, h);
  const std::uint8_t c[3] = {static_cast<std::uint8_t>(std::lround(r * 255)),
                             static_cast<std::uint8_t>(std::lround(g * 255)),
                             static_cast<std::uint8_t>(std::lround(b * 255))};
  for (std::uint32_t y = 0; y < h; ++y)
    for (std::uint32_t x = 0; x < w; ++x)
      for (int k = 0; k < 3; ++k) img.at(x, y, k) = c[k];
  return img;
}

// 24 fps, 10 s: green for 3 s, hard cut to white, white until 6 s, a 1 s
// linear fade to dark red (0.2, 0, 0), then dark red.
struct FadeFixture {
  static constexpr double kFps = 24;
  static constexpr double kHardCut = 3.0;
  static constexpr double kFadeStart = 6.0;
  static constexpr double kFadeEnd = 7.0;
  static constexpr double kDuration = 10.0;

  static std::vector<RgbImage> frames(std::uint32_t w = 64, std::uint32_t h = 48) {
    std::vector<RgbImage> out;
    const int n = static_cast<int>(kDuration * kFps);
    for (int i = 0; i < n; ++i) {
      const double t = i / kFps;
      if (t < kHardCut) {
        out.push_back(solid(w, h, 0, 0.6, 0));
      } else {
        const double a = std::clamp((t - kFadeStart) / (kFadeEnd - kFadeStart), 0.0, 1.0);
        out.push_back(solid(w, h, 1 - 0.8 * a, 1 - a, 1 - a));
      }
    }
    return out;
  }
};

// Smooth texture frame shifted by (dx, dy) pixels.
inline GrayImage textured(std::uint64_t seed, std::uint32_t w, std::uint32_t h, double dx, double dy) {
  return SmoothTexture(seed).render_gray(w, h, dx, dy);
}

// RGB clip: `n` frames of a texture translating by (vx, vy) px per frame.
inline std::vector<RgbImage> moving_clip(std::uint64_t seed, std::uint32_t w, std::uint32_t h, int n, double vx,
                                         double vy) {
  const SmoothTexture tex(seed);
  std::vector<RgbImage> out;
  for (int f = 0; f < n; ++f) {
    RgbImage img(w, h);
    for (std::uint32_t y = 0; y < h; ++y)
      for (std::uint32_t x = 0; x < w; ++x) {
        const auto v = static_cast<std::uint8_t>(std::lround(40 + 180 * tex(x - vx * f, y - vy * f)));
        img.at(x, y, 0) = v;
        img.at(x, y, 1) = static_cast<std::uint8_t>(v * 3 / 4);
        img.at(x, y, 2) = static_cast<std::uint8_t>(v / 2);
      }
    out.push_back(std::move(img));
  }
  return out;
}

inline ClipRecord clip(std::string id, double start, double end) {
  ClipRecord c;
  c.clip_id = std::move(id);
  c.video_id = "v";
  c.start_s = start;
  c.end_s = end;
  return c;
}

inline std::filesystem::path temp_dir(const std::string& tag) {
  const auto p = std::filesystem::temp_directory_path() /
                 ("vidcurate-" + tag + "-" + hex64(fnv1a64(tag, splitmix64(static_cast<std::uint64_t>(::getpid())))));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace fixture
