#pragma once

// Deterministic synthetic footage: smooth band-limited textures that translate
// at a known velocity, hard cuts between differently colored shots, optional
// burned-in "text" boxes in the stub detector's yellow, and a keyframe sidecar
// with a fixed GOP. Used as the bundled test corpus and by `vidcurate synth`.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "vidcurate/frame_scoring.hpp"
#include "vidcurate/hash.hpp"
#include "vidcurate/image.hpp"
#include "vidcurate/ingest.hpp"

namespace vidcurate {

// Sum of a few random plane waves with periods between 12 and 40 px; values
// in [0, 1]. Smooth enough that sub-pixel translation is well defined.
class SmoothTexture {
 public:
  explicit SmoothTexture(std::uint64_t seed, int waves = 6) {
    Rng rng(splitmix64(seed));
    for (int k = 0; k < waves; ++k) {
      const double angle = rng.uniform() * 2 * std::numbers::pi;
      const double period = 12.0 + 28.0 * rng.uniform();
      waves_.push_back({std::cos(angle) / period, std::sin(angle) / period, rng.uniform() * 2 * std::numbers::pi,
                        0.5 + 0.5 * rng.uniform()});
      norm_ += waves_.back().amp;
    }
  }

  double operator()(double x, double y) const {
    double s = 0;
    for (const auto& w : waves_) s += w.amp * std::sin(2 * std::numbers::pi * (w.fx * x + w.fy * y) + w.phase);
    return 0.5 + 0.5 * s / norm_;
  }

  // Content shifted by (dx, dy): pixel (x, y) shows texture(x - dx, y - dy).
  GrayImage render_gray(std::uint32_t w, std::uint32_t h, double dx = 0, double dy = 0) const {
    GrayImage img(w, h);
    for (std::uint32_t y = 0; y < h; ++y)
      for (std::uint32_t x = 0; x < w; ++x) img.at(x, y) = static_cast<float>((*this)(x - dx, y - dy));
    return img;
  }

 private:
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::vector<Wave> waves_;
  double norm_ = 0;
};

struct SynthShot {
  double duration_s = 4.0;
  std::array<std::uint8_t, 3> base{200, 60, 40};
  double vx = 0, vy = 0;  // px per native frame
  std::optional<TextBox> text;
  std::uint64_t texture_seed = 0;
};

struct SynthVideo {
  std::string video_id;
  std::uint32_t width = 128, height = 96;
  std::uint32_t fps = 12;
  double keyframe_interval_s = 1.0;
  std::vector<SynthShot> shots;

  std::uint64_t frame_count() const {
    double t = 0;
    for (const auto& s : shots) t += s.duration_s;
    return static_cast<std::uint64_t>(std::llround(t * fps));
  }

  // Shot starts after the first, in seconds, snapped to frame times.
  std::vector<double> cut_times() const {
    std::vector<double> out;
    double t = 0;
    for (std::size_t i = 0; i + 1 < shots.size(); ++i) {
      t += shots[i].duration_s;
      out.push_back(static_cast<double>(std::llround(t * fps)) / fps);
    }
    return out;
  }
};

inline constexpr std::array<std::uint8_t, 3> kSynthTextColor = {255, 230, 40};

// Texture scales the base color between 70% and 100%, so hue and saturation
// stay fixed within a shot and only brightness carries the motion.
inline RgbImage render_shot_frame(const SynthShot& shot, std::uint64_t frame_in_shot, std::uint32_t w,
                                  std::uint32_t h) {
  const SmoothTexture tex(shot.texture_seed);
  const double dx = shot.vx * static_cast<double>(frame_in_shot);
  const double dy = shot.vy * static_cast<double>(frame_in_shot);
  RgbImage img(w, h);
  for (std::uint32_t y = 0; y < h; ++y)
    for (std::uint32_t x = 0; x < w; ++x) {
      const double m = 0.7 + 0.3 * tex(x - dx, y - dy);
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<std::uint8_t>(std::lround(shot.base[c] * m));
    }
  if (shot.text) {
    const auto& b = *shot.text;
    for (std::int32_t y = std::max(0, b.y); y < std::min<std::int32_t>(h, b.y + b.h); ++y)
      for (std::int32_t x = std::max(0, b.x); x < std::min<std::int32_t>(w, b.x + b.w); ++x)
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = kSynthTextColor[c];
  }
  return img;
}

inline std::vector<RgbImage> render_video(const SynthVideo& v) {
  std::vector<RgbImage> frames;
  const auto cuts = v.cut_times();
  std::size_t shot = 0;
  std::uint64_t shot_start = 0;
  const std::uint64_t n = v.frame_count();
  for (std::uint64_t i = 0; i < n; ++i) {
    while (shot < cuts.size() && i >= static_cast<std::uint64_t>(std::llround(cuts[shot] * v.fps))) {
      ++shot;
      shot_start = i;
    }
    frames.push_back(render_shot_frame(v.shots[shot], i - shot_start, v.width, v.height));
  }
  return frames;
}

inline std::vector<double> synth_keyframes(const SynthVideo& v) {
  std::vector<double> kf;
  const double dur = static_cast<double>(v.frame_count()) / v.fps;
  for (double t = 0; t < dur - 1e-9; t += v.keyframe_interval_s) kf.push_back(t);
  return kf;
}

inline void write_synth_video(const SynthVideo& v, const std::filesystem::path& y4m) {
  Y4mWriter w(y4m, v.width, v.height, v.fps);
  for (const auto& f : render_video(v)) w.write(f);
  write_keyframe_index(synth_keyframes(v), keyframe_sidecar_path(y4m));
}

// Palette with one dominant hue per shot; no entry passes the stub text
// detector's yellow test even at full brightness.
inline constexpr std::array<std::array<std::uint8_t, 3>, 6> kSynthPalette = {{
    {210, 60, 50}, {230, 140, 30}, {50, 170, 70}, {40, 160, 170}, {60, 80, 210}, {170, 60, 190},
}};
inline constexpr std::array<double, 6> kSynthPaletteHue = {3, 31, 129, 182, 229, 290};

struct SynthCorpusSpec {
  std::size_t videos = 5;
  std::size_t shots_per_video = 4;
  std::uint32_t width = 128, height = 96, fps = 12;
  std::uint64_t seed = 1;
};

// Every fourth shot is static; roughly a third carry a text box, alternating
// between one under and one over 7% of the frame.
inline std::vector<SynthVideo> make_corpus(const SynthCorpusSpec& spec) {
  Rng rng(splitmix64(spec.seed));
  std::vector<SynthVideo> out;
  std::size_t shot_no = 0;
  for (std::size_t v = 0; v < spec.videos; ++v) {
    SynthVideo vid;
    char id[32];
    std::snprintf(id, sizeof id, "synth%02zu", v);
    vid.video_id = id;
    vid.width = spec.width;
    vid.height = spec.height;
    vid.fps = spec.fps;
    std::size_t prev_color = kSynthPalette.size();
    for (std::size_t s = 0; s < spec.shots_per_video; ++s, ++shot_no) {
      SynthShot shot;
      shot.duration_s = std::round((3.3 + 1.4 * rng.uniform()) * spec.fps) / spec.fps;
      // Consecutive shots differ by >= 108 degrees of (unwrapped) hue and
      // alternate full and 60% brightness, so every cut is a hard one.
      std::size_t color;
      do color = static_cast<std::size_t>(rng.below(kSynthPalette.size()));
      while (prev_color < kSynthPalette.size() &&
             std::fabs(kSynthPaletteHue[color] - kSynthPaletteHue[prev_color]) < 108);
      prev_color = color;
      const double level = s % 2 == 0 ? 1.0 : 0.6;
      for (int c = 0; c < 3; ++c)
        shot.base[c] = static_cast<std::uint8_t>(std::lround(kSynthPalette[color][c] * level));
      shot.texture_seed = rng.next_u64();
      if (shot_no % 4 != 3) {
        const double speed = 0.25 + 0.6 * rng.uniform();
        const double angle = rng.uniform() * 2 * std::numbers::pi;
        shot.vx = speed * std::cos(angle);
        shot.vy = speed * std::sin(angle);
      }
      if (shot_no % 3 == 1) {
        // Even coordinates keep 4:2:0 chroma blocks entirely inside or outside.
        const bool big = (shot_no / 3) % 2 == 1;
        const std::int32_t bw = big ? 48 : 36, bh = big ? 24 : 20;
        shot.text = TextBox{8, static_cast<std::int32_t>(spec.height) - bh - 8, bw, bh};
      }
      vid.shots.push_back(shot);
    }
    out.push_back(std::move(vid));
  }
  return out;
}

inline std::vector<std::filesystem::path> write_corpus(const std::vector<SynthVideo>& videos,
                                                       const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  for (const auto& v : videos) {
    paths.push_back(dir / (v.video_id + ".y4m"));
    write_synth_video(v, paths.back());
  }
  return paths;
}

}  // namespace vidcurate
