#pragma once

// Shot-boundary detection with a cascade of content detectors running at
// different sampling rates, and keyframe-aware clip planning.
//
// The per-pair metric is the mean absolute HSV difference (H, S, V each
// normalized to [0,1], averaged over channels and pixels). Slow transitions
// produce small per-frame deltas at native rate but large per-step deltas
// once the same video is sampled at a low rate, which is what the lower
// cascade levels exploit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vidcurate/error.hpp"
#include "vidcurate/image.hpp"
#include "vidcurate/ingest.hpp"

namespace vidcurate {

using HsvImage = Image<float, 3>;

inline HsvImage to_hsv(const RgbImage& rgb) {
  HsvImage out(rgb.width(), rgb.height());
  const auto& src = rgb.buffer();
  auto& dst = out.buffer();
  for (std::size_t i = 0; i < src.size(); i += 3) {
    const int r = src[i], g = src[i + 1], b = src[i + 2];
    const int mx = std::max({r, g, b});
    const int mn = std::min({r, g, b});
    const int d = mx - mn;
    double h = 0;
    if (d > 0) {
      if (mx == r)
        h = static_cast<double>(g - b) / d;
      else if (mx == g)
        h = 2.0 + static_cast<double>(b - r) / d;
      else
        h = 4.0 + static_cast<double>(r - g) / d;
      h /= 6.0;
      if (h < 0) h += 1.0;
    }
    dst[i] = static_cast<float>(h);
    dst[i + 1] = mx == 0 ? 0.f : static_cast<float>(static_cast<double>(d) / mx);
    dst[i + 2] = static_cast<float>(mx / 255.0);
  }
  return out;
}

// Mean over pixels of the mean absolute per-channel HSV difference, in [0,1].
inline double frame_delta(const HsvImage& a, const HsvImage& b) {
  if (a.width() != b.width() || a.height() != b.height())
    throw PreconditionError("frame_delta: dimension mismatch");
  const auto& x = a.buffer();
  const auto& y = b.buffer();
  if (x.empty()) return 0.0;
  double acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += std::fabs(static_cast<double>(x[i]) - y[i]);
  return acc / static_cast<double>(x.size());
}

inline double frame_delta(const Frame& a, const Frame& b) {
  return frame_delta(to_hsv(a.pixels), to_hsv(b.pixels));
}

enum class DetectorLevel { native, mid, low };

inline std::string_view to_string(DetectorLevel l) {
  switch (l) {
    case DetectorLevel::native: return "native";
    case DetectorLevel::mid: return "mid";
    case DetectorLevel::low: return "low";
  }
  return "?";
}

inline std::optional<DetectorLevel> parse_detector_level(std::string_view s) {
  for (auto l : {DetectorLevel::native, DetectorLevel::mid, DetectorLevel::low})
    if (to_string(l) == s) return l;
  return std::nullopt;
}

struct Cut {
  double t_s = 0;
  DetectorLevel level = DetectorLevel::native;
  bool operator==(const Cut&) const = default;
};

struct CutList {
  std::string video_id;
  std::vector<Cut> cuts;

  std::vector<double> times() const {
    std::vector<double> t;
    t.reserve(cuts.size());
    for (const auto& c : cuts) t.push_back(c.t_s);
    return t;
  }
  bool operator==(const CutList&) const = default;
};

// Streaming content detector: feed frames in time order, get cut times.
// A cut is emitted at frame b when delta(prev, b) > threshold and at least
// min_scene_s has passed since the previous cut (or the first frame).
class ContentDetector {
 public:
  ContentDetector(double threshold, double min_scene_s, std::uint32_t analysis_short_side = 0)
      : threshold_(threshold), min_scene_s_(min_scene_s), short_side_(analysis_short_side) {
    if (!(threshold > 0 && threshold < 1)) throw PreconditionError("threshold must lie in (0,1)");
  }

  std::optional<double> push(const Frame& f) {
    HsvImage cur = to_hsv(shrink_to_short_side(f.pixels, short_side_));
    std::optional<double> cut;
    if (prev_) {
      if (frame_delta(*prev_, cur) > threshold_ && f.t_s - last_cut_ >= min_scene_s_ - 1e-9) {
        cut = f.t_s;
        last_cut_ = f.t_s;
      }
    } else {
      last_cut_ = f.t_s;
    }
    prev_ = std::move(cur);
    return cut;
  }

 private:
  double threshold_;
  double min_scene_s_;
  std::uint32_t short_side_;
  std::optional<HsvImage> prev_;
  double last_cut_ = 0;
};

inline std::vector<double> detect_single(const std::vector<Frame>& frames, double threshold,
                                         double min_scene_s, std::uint32_t analysis_short_side = 0) {
  ContentDetector det(threshold, min_scene_s, analysis_short_side);
  std::vector<double> cuts;
  for (const auto& f : frames)
    if (auto c = det.push(f)) cuts.push_back(*c);
  return cuts;
}

struct CascadeLevel {
  double fps = 0;  // 0 means the source's native rate
  double threshold = 0.11;

  bool operator==(const CascadeLevel&) const = default;
};

struct CascadeConfig {
  std::vector<CascadeLevel> levels = {{0.0, 0.11}, {8.0, 0.14}, {2.0, 0.18}};
  double min_scene_s = 1.0;
  double merge_window_s = 0.5;
  std::uint32_t analysis_short_side = 128;
};

// Runs one detector per level over its own sampled stream, then merges:
// each level's cut is dropped if an already accepted cut from a
// higher-rate level lies within merge_window_s.
inline CutList detect_cascade(FrameSource& source, const CascadeConfig& cfg,
                              std::string video_id = {}) {
  if (cfg.levels.empty() || cfg.levels.size() > 3)
    throw PreconditionError("cascade needs 1 to 3 levels");
  std::vector<double> rates;
  for (const auto& l : cfg.levels) {
    const double r = l.fps > 0 ? l.fps : source.fps();
    if (r > source.fps() + 1e-9) throw PreconditionError("cascade level fps above native");
    if (!rates.empty() && r > rates.back() + 1e-9)
      throw PreconditionError("cascade levels must be ordered by descending fps");
    rates.push_back(r);
  }

  CutList out{std::move(video_id), {}};
  const double duration = source.duration_s();
  for (std::size_t li = 0; li < cfg.levels.size(); ++li) {
    ContentDetector det(cfg.levels[li].threshold, cfg.min_scene_s, cfg.analysis_short_side);
    FpsSampler sampler(source, rates[li]);
    const auto level = static_cast<DetectorLevel>(li);
    std::vector<Cut> found;
    while (auto f = sampler.next())
      if (auto c = det.push(*f)) found.push_back({*c, level});
    for (const auto& c : found) {
      if (!(c.t_s > 0 && c.t_s < duration)) continue;
      const bool dup = std::any_of(out.cuts.begin(), out.cuts.end(), [&](const Cut& a) {
        return std::fabs(a.t_s - c.t_s) <= cfg.merge_window_s + 1e-9;
      });
      if (!dup) out.cuts.push_back(c);
    }
  }
  std::sort(out.cuts.begin(), out.cuts.end(),
            [](const Cut& a, const Cut& b) { return a.t_s < b.t_s; });
  return out;
}

// `video_id<TAB>t_s<TAB>level` per line.
inline void write_cuts(const std::vector<CutList>& lists, std::ostream& out) {
  out << std::setprecision(17);
  for (const auto& l : lists)
    for (const auto& c : l.cuts) out << l.video_id << '\t' << c.t_s << '\t' << to_string(c.level) << '\n';
}

// Groups lines by video_id; videos listed in `video_ids` but absent from the
// file get an empty CutList.
inline std::vector<CutList> read_cuts(std::istream& in, const std::vector<std::string>& video_ids) {
  std::vector<CutList> lists;
  for (const auto& id : video_ids) lists.push_back({id, {}});
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string id, t, lvl;
    if (!std::getline(ls, id, '\t') || !std::getline(ls, t, '\t') || !std::getline(ls, lvl))
      throw FormatError("cuts line " + std::to_string(line_no) + ": expected 3 fields");
    auto level = parse_detector_level(lvl);
    if (!level) throw FormatError("cuts line " + std::to_string(line_no) + ": bad level");
    auto it = std::find_if(lists.begin(), lists.end(), [&](const CutList& l) { return l.video_id == id; });
    if (it == lists.end()) {
      lists.push_back({id, {}});
      it = lists.end() - 1;
    }
    it->cuts.push_back({std::stod(t), *level});
  }
  return lists;
}

struct Span {
  double start_s = 0;
  double end_s = 0;
  double length() const noexcept { return end_s - start_s; }
  bool operator==(const Span&) const = default;
};

struct ClipPlan {
  std::vector<Span> spans;
  bool operator==(const ClipPlan&) const = default;
};

// Clip k spans [first keyframe >= c_k, c_{k+1}) with c_0 = 0 and the video
// end as the final boundary. Starting on a keyframe at or after the cut lets
// an extractor seek without pulling in frames from the previous shot.
inline ClipPlan plan_clips(const std::vector<double>& cuts_s, const std::vector<double>& keyframes_s,
                           double duration_s, double min_clip_s) {
  if (keyframes_s.empty() || keyframes_s.front() != 0.0)
    throw PreconditionError("keyframes must start at 0");
  if (!std::is_sorted(keyframes_s.begin(), keyframes_s.end()))
    throw PreconditionError("keyframes must be sorted");

  std::vector<double> bounds{0.0};
  for (double c : cuts_s)
    if (c > 0 && c < duration_s) bounds.push_back(c);
  std::sort(bounds.begin(), bounds.end());
  bounds.erase(std::unique(bounds.begin(), bounds.end()), bounds.end());
  bounds.push_back(duration_s);

  ClipPlan plan;
  for (std::size_t k = 0; k + 1 < bounds.size(); ++k) {
    const auto it = std::lower_bound(keyframes_s.begin(), keyframes_s.end(), bounds[k]);
    if (it == keyframes_s.end()) continue;
    const Span s{*it, bounds[k + 1]};
    if (s.start_s >= s.end_s || s.length() < min_clip_s - 1e-12) continue;
    plan.spans.push_back(s);
  }
  return plan;
}

// Clips produced per raw video, reported as a pipeline statistic.
inline double clip_multiplier(std::uint64_t videos_before, std::uint64_t clips_after) {
  if (videos_before == 0) throw PreconditionError("clip_multiplier: no raw videos");
  return static_cast<double>(clips_after) / static_cast<double>(videos_before);
}

}  // namespace vidcurate
