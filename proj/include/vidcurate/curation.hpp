#pragma once

// Percentile filtering over one annotation axis, the calibration subsets
// built from it, and the ordered filter chain that produces the curated set.
//
// Removal counts use floor(fraction * N) over the records that carry a score;
// ranking is ascending by score with clip_id as tie-break, so the kept set
// does not depend on input order. Records without a score are always removed
// and tagged `unscored`. Survivors keep their input order.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "vidcurate/captioning.hpp"
#include "vidcurate/config.hpp"
#include "vidcurate/error.hpp"
#include "vidcurate/hash.hpp"
#include "vidcurate/manifest.hpp"

namespace vidcurate {

enum class Axis { motion, aesthetics, clip_similarity, text_area };
enum class FilterMode { remove_bottom_fraction, remove_top_fraction, absolute_max };

inline constexpr std::array<Axis, 4> kAxes = {Axis::motion, Axis::aesthetics, Axis::clip_similarity,
                                              Axis::text_area};
inline constexpr std::array<double, 3> kCalibrationFractions = {0.125, 0.25, 0.5};

inline std::string_view to_string(Axis a) {
  switch (a) {
    case Axis::motion: return "motion";
    case Axis::aesthetics: return "aesthetics";
    case Axis::clip_similarity: return "clip_similarity";
    case Axis::text_area: return "text_area";
  }
  return "?";
}

inline std::string_view to_string(FilterMode m) {
  switch (m) {
    case FilterMode::remove_bottom_fraction: return "remove_bottom_fraction";
    case FilterMode::remove_top_fraction: return "remove_top_fraction";
    case FilterMode::absolute_max: return "absolute_max";
  }
  return "?";
}

inline std::optional<Axis> parse_axis(std::string_view s) {
  for (auto a : kAxes)
    if (to_string(a) == s) return a;
  return std::nullopt;
}

inline std::optional<FilterMode> parse_filter_mode(std::string_view s) {
  for (auto m : {FilterMode::remove_bottom_fraction, FilterMode::remove_top_fraction, FilterMode::absolute_max})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

struct FilterSpec {
  Axis axis = Axis::motion;
  FilterMode mode = FilterMode::remove_bottom_fraction;
  double parameter = 0;

  bool is_fraction() const noexcept { return mode != FilterMode::absolute_max; }
  bool operator==(const FilterSpec&) const = default;
};

inline bool is_calibration_fraction(double f) {
  return std::find(kCalibrationFractions.begin(), kCalibrationFractions.end(), f) != kCalibrationFractions.end();
}

// `calibration` additionally restricts fractions to 12.5, 25 or 50 percent.
inline void validate(const FilterSpec& s, bool calibration = false) {
  if (!std::isfinite(s.parameter)) throw InvariantError("filter parameter must be finite");
  if (s.mode == FilterMode::absolute_max) {
    if (s.axis != Axis::text_area) throw InvariantError("absolute_max is only valid for text_area");
    return;
  }
  if (s.parameter < 0 || s.parameter > 1) throw InvariantError("filter fraction must lie in [0, 1]");
  if (calibration && !is_calibration_fraction(s.parameter))
    throw InvariantError("calibration fraction must be 0.125, 0.25 or 0.5");
}

struct CurationProfile {
  std::vector<FilterSpec> filters;
  CaptionWeights caption_weights;

  bool operator==(const CurationProfile&) const = default;
};

inline void validate(const CurationProfile& p) {
  std::set<Axis> seen;
  for (const auto& f : p.filters) {
    validate(f);
    if (!seen.insert(f.axis).second) throw InvariantError("profile has two filters on axis " + std::string(to_string(f.axis)));
  }
  const auto& w = p.caption_weights;
  for (double x : {w.coca, w.vblip, w.llm_summary})
    if (!(x >= 0) || !std::isfinite(x)) throw InvariantError("caption weights must be finite and non-negative");
  if (!(w.coca + w.vblip + w.llm_summary > 0)) throw InvariantError("caption weights sum to zero");
}

// Motion bottom 25%, aesthetics bottom 25%, similarity bottom 50%, and the
// absolute 7% text-coverage cutoff.
inline CurationProfile default_profile() {
  return {{{Axis::motion, FilterMode::remove_bottom_fraction, 0.25},
           {Axis::aesthetics, FilterMode::remove_bottom_fraction, 0.25},
           {Axis::clip_similarity, FilterMode::remove_bottom_fraction, 0.5},
           {Axis::text_area, FilterMode::absolute_max, 0.07}},
          {}};
}

// ---------------------------------------------------------------------------
// Axis scores

// Seed for the clip's caption draw; stable across runs and platforms.
inline std::uint64_t caption_seed(const ClipRecord& c) { return fnv1a64(c.clip_id); }

// Mean over the three annotated frames; null if any frame lacks the value.
inline std::optional<double> axis_score(const ClipRecord& c, Axis axis, const CaptionWeights& w = {}) {
  switch (axis) {
    case Axis::motion: return c.motion_score;
    case Axis::text_area: return c.text_area_ratio;
    case Axis::aesthetics: {
      double sum = 0;
      for (const auto& f : c.frame_scores) {
        if (!f.aesthetics) return std::nullopt;
        sum += *f.aesthetics;
      }
      return sum / 3.0;
    }
    case Axis::clip_similarity: {
      if (c.captions.empty()) return std::nullopt;
      double total = 0;
      for (const auto& cap : c.captions) total += w.of(cap.source);
      if (!(total > 0)) return std::nullopt;
      const std::size_t k = sample_caption_index(c.captions, caption_seed(c), w);
      double sum = 0;
      for (const auto& f : c.frame_scores) {
        if (f.clip_similarity.size() != c.captions.size()) return std::nullopt;
        sum += f.clip_similarity[k];
      }
      return sum / 3.0;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Filtering

struct Rejection {
  std::string clip_id;
  Axis axis = Axis::motion;
  std::optional<double> score;

  bool operator==(const Rejection&) const = default;
};

struct FilterResult {
  std::vector<ClipRecord> kept;
  std::vector<ClipRecord> removed;
  std::vector<Rejection> rejections;  // parallel to `removed`
};

namespace curation_detail {

inline void require_unique_ids(const std::vector<ClipRecord>& records) {
  std::unordered_set<std::string_view> ids;
  ids.reserve(records.size());
  for (const auto& r : records)
    if (!ids.insert(r.clip_id).second) throw PreconditionError("duplicate clip_id " + r.clip_id);
}

}  // namespace curation_detail

inline FilterResult apply_filter(const std::vector<ClipRecord>& records, const FilterSpec& spec,
                                 const CaptionWeights& w = {}) {
  validate(spec);
  curation_detail::require_unique_ids(records);

  const std::size_t n = records.size();
  std::vector<std::optional<double>> score(n);
  std::vector<std::size_t> ranked;
  for (std::size_t i = 0; i < n; ++i) {
    score[i] = axis_score(records[i], spec.axis, w);
    if (score[i] && !std::isfinite(*score[i])) score[i].reset();
    if (score[i]) ranked.push_back(i);
  }

  std::vector<char> drop(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    if (!score[i]) drop[i] = 1;

  if (spec.mode == FilterMode::absolute_max) {
    for (std::size_t i : ranked)
      if (*score[i] > spec.parameter) drop[i] = 1;
  } else {
    std::sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
      if (*score[a] != *score[b]) return *score[a] < *score[b];
      return records[a].clip_id < records[b].clip_id;
    });
    const auto k = static_cast<std::size_t>(std::floor(spec.parameter * static_cast<double>(ranked.size())));
    if (spec.mode == FilterMode::remove_bottom_fraction)
      for (std::size_t j = 0; j < k; ++j) drop[ranked[j]] = 1;
    else
      for (std::size_t j = ranked.size() - k; j < ranked.size(); ++j) drop[ranked[j]] = 1;
  }

  FilterResult out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!drop[i]) {
      out.kept.push_back(records[i]);
      continue;
    }
    ClipRecord r = records[i];
    if (!score[i]) r.flags.insert("unscored");
    out.rejections.push_back({r.clip_id, spec.axis, score[i]});
    out.removed.push_back(std::move(r));
  }
  return out;
}

enum class Direction { bottom, top };

inline FilterResult percentile_filter(const std::vector<ClipRecord>& records, Axis axis, double fraction,
                                      Direction dir = Direction::bottom, const CaptionWeights& w = {}) {
  return apply_filter(records,
                      {axis, dir == Direction::bottom ? FilterMode::remove_bottom_fraction : FilterMode::remove_top_fraction,
                       fraction},
                      w);
}

// Subsets after removing the bottom 0, 12.5, 25 and 50 percent on one axis.
inline std::array<std::vector<ClipRecord>, 4> build_calibration_subsets(const std::vector<ClipRecord>& records,
                                                                        Axis axis, const CaptionWeights& w = {}) {
  std::array<std::vector<ClipRecord>, 4> out;
  out[0] = percentile_filter(records, axis, 0.0, Direction::bottom, w).kept;
  for (std::size_t i = 0; i < kCalibrationFractions.size(); ++i)
    out[i + 1] = percentile_filter(records, axis, kCalibrationFractions[i], Direction::bottom, w).kept;
  return out;
}

struct CurationResult {
  std::vector<ClipRecord> kept;
  std::vector<Rejection> rejections;
  std::map<Axis, std::size_t> removed_per_axis;
};

inline CurationResult apply_profile(const std::vector<ClipRecord>& records, const CurationProfile& profile) {
  validate(profile);
  curation_detail::require_unique_ids(records);
  CurationResult out;
  out.kept = records;
  for (const auto& spec : profile.filters) {
    auto r = apply_filter(out.kept, spec, profile.caption_weights);
    out.removed_per_axis[spec.axis] += r.removed.size();
    out.rejections.insert(out.rejections.end(), r.rejections.begin(), r.rejections.end());
    out.kept = std::move(r.kept);
  }
  return out;
}

// One line per rejected clip: clip_id, axis, score ("null" when unscored).
inline void write_rejection_report(const std::vector<Rejection>& rejections, std::ostream& out) {
  char buf[32];
  for (const auto& r : rejections) {
    out << r.clip_id << '\t' << to_string(r.axis) << '\t';
    if (r.score) {
      std::snprintf(buf, sizeof buf, "%.17g", *r.score);
      out << buf;
    } else {
      out << "null";
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Profile files
//
//   [caption]            optional; sampling weights
//   coca = 0.5
//   vblip = 0.25
//   llm_summary = 0.25
//
//   [filter]             repeated, applied in file order
//   axis = motion
//   mode = remove_bottom_fraction
//   parameter = 0.25

inline CurationProfile profile_from_config(const Config& cfg) {
  CurationProfile p;
  const auto caps = cfg.all("caption");
  if (caps.size() > 1) throw ConfigError(cfg.origin() + ": more than one [caption] section");
  if (!caps.empty()) {
    for (const auto& [k, v] : caps[0]->entries) {
      const auto src = parse_caption_source(k);
      if (!src) throw ConfigError(cfg.origin() + ": unknown caption source '" + k + "'");
      const double x = cfg.to_double(v, "caption", k);
      switch (*src) {
        case CaptionSource::coca: p.caption_weights.coca = x; break;
        case CaptionSource::vblip: p.caption_weights.vblip = x; break;
        case CaptionSource::llm_summary: p.caption_weights.llm_summary = x; break;
      }
    }
  }
  for (const auto* sec : cfg.all("filter")) {
    const auto where = cfg.origin() + ":" + std::to_string(sec->line);
    for (const auto& [k, v] : sec->entries)
      if (k != "axis" && k != "mode" && k != "parameter") throw ConfigError(where + ": unknown filter key '" + k + "'");
    const auto* axis = sec->find("axis");
    const auto* mode = sec->find("mode");
    const auto* param = sec->find("parameter");
    if (!axis || !mode || !param) throw ConfigError(where + ": [filter] needs axis, mode and parameter");
    FilterSpec f;
    const auto a = parse_axis(*axis);
    const auto m = parse_filter_mode(*mode);
    if (!a) throw ConfigError(where + ": unknown axis '" + *axis + "'");
    if (!m) throw ConfigError(where + ": unknown mode '" + *mode + "'");
    f.axis = *a;
    f.mode = *m;
    f.parameter = cfg.to_double(*param, "filter", "parameter");
    p.filters.push_back(f);
  }
  try {
    validate(p);
  } catch (const InvariantError& e) {
    throw ConfigError(cfg.origin() + ": " + e.what());
  }
  return p;
}

inline std::string profile_to_string(const CurationProfile& p) {
  std::ostringstream o;
  o.precision(17);
  o << "[caption]\ncoca = " << p.caption_weights.coca << "\nvblip = " << p.caption_weights.vblip
    << "\nllm_summary = " << p.caption_weights.llm_summary << "\n";
  for (const auto& f : p.filters)
    o << "\n[filter]\naxis = " << to_string(f.axis) << "\nmode = " << to_string(f.mode)
      << "\nparameter = " << f.parameter << "\n";
  return o.str();
}

}  // namespace vidcurate
