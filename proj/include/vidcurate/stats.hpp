#pragma once

// Dataset-level statistics in the style of a dataset summary table.

#include <algorithm>
#include <array>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "vidcurate/manifest.hpp"

namespace vidcurate {

// Upper edges of the motion-score histogram bins; a final open bin catches
// the rest and one extra bin counts unscored clips.
inline constexpr std::array<double, 7> kMotionBinEdges = {0.0025, 0.005, 0.01, 0.02,
                                                          0.04,   0.08,  0.16};

struct MotionHistogram {
  // kMotionBinEdges.size() + 1 scored bins.
  std::array<std::uint64_t, kMotionBinEdges.size() + 1> scored{};
  std::uint64_t unscored = 0;

  std::uint64_t total() const noexcept {
    std::uint64_t n = unscored;
    for (auto c : scored) n += c;
    return n;
  }
  bool operator==(const MotionHistogram&) const = default;
};

struct DatasetStats {
  std::uint64_t clip_count = 0;
  double total_duration_s = 0;
  double total_duration_years = 0;
  double mean_clip_duration_s = 0;
  MotionHistogram motion_histogram;
  double caption_coverage = 0;

  bool operator==(const DatasetStats&) const = default;
};

inline std::size_t motion_bin(double score) {
  const auto it = std::upper_bound(kMotionBinEdges.begin(), kMotionBinEdges.end(), score);
  return static_cast<std::size_t>(it - kMotionBinEdges.begin());
}

// Order-independent: durations are summed in sorted order so the result is
// bit-identical for any permutation of the input.
inline DatasetStats compute_stats(const std::vector<ClipRecord>& records) {
  DatasetStats s;
  s.clip_count = records.size();
  if (records.empty()) return s;

  std::vector<double> durations;
  durations.reserve(records.size());
  std::uint64_t fully_captioned = 0;
  for (const auto& r : records) {
    durations.push_back(r.end_s - r.start_s);
    if (r.motion_score)
      ++s.motion_histogram.scored[motion_bin(*r.motion_score)];
    else
      ++s.motion_histogram.unscored;
    bool all = true;
    for (auto src : kCaptionSources) all = all && r.caption(src) != nullptr;
    if (all) ++fully_captioned;
  }
  std::sort(durations.begin(), durations.end());
  for (double d : durations) s.total_duration_s += d;
  s.total_duration_years = s.total_duration_s / kSecondsPerYear;
  s.mean_clip_duration_s = s.total_duration_s / static_cast<double>(records.size());
  s.caption_coverage = static_cast<double>(fully_captioned) / static_cast<double>(records.size());
  return s;
}

inline std::string format_stats(const DatasetStats& s, std::string_view name = "dataset") {
  std::ostringstream o;
  o << std::setprecision(6);
  o << "name                  " << name << '\n'
    << "clips                 " << s.clip_count << '\n'
    << "total duration (s)    " << s.total_duration_s << '\n'
    << "total duration (yrs)  " << s.total_duration_years << '\n'
    << "mean clip length (s)  " << s.mean_clip_duration_s << '\n'
    << "caption coverage      " << s.caption_coverage << '\n'
    << "motion histogram\n";
  double lo = 0;
  for (std::size_t i = 0; i < s.motion_histogram.scored.size(); ++i) {
    o << "  [" << lo << ", ";
    if (i < kMotionBinEdges.size()) {
      o << kMotionBinEdges[i] << ")";
      lo = kMotionBinEdges[i];
    } else {
      o << "inf)";
    }
    o << "  " << s.motion_histogram.scored[i] << '\n';
  }
  o << "  unscored  " << s.motion_histogram.unscored << '\n';
  return o.str();
}

}  // namespace vidcurate
