#pragma once

// Dataset data model and the line-delimited manifest format.
//
// One clip per line, each line a JSON object with exactly these keys:
//
//   video_id, clip_id, start_s, end_s, motion_score, text_area_ratio,
//   frame_scores, captions, flags
//
// Annotation values that a stage has not produced yet are JSON null.
// Numbers are written in shortest round-trip form, so write -> read is the
// identity on every field.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vidcurate/error.hpp"

namespace vidcurate {

// Insertion-ordered so records serialize with keys in documented order.
using json = nlohmann::ordered_json;

// Julian year in seconds.
constexpr double kSecondsPerYear = 31'557'600.0;

struct VideoRecord {
  std::string video_id;
  std::string uri;
  double duration_s = 0;
  double fps = 0;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<double> keyframes_s;

  bool operator==(const VideoRecord&) const = default;
};

enum class FramePosition { first, middle, last };
enum class CaptionSource { coca, vblip, llm_summary };

inline constexpr std::array<FramePosition, 3> kFramePositions = {
    FramePosition::first, FramePosition::middle, FramePosition::last};
inline constexpr std::array<CaptionSource, 3> kCaptionSources = {
    CaptionSource::coca, CaptionSource::vblip, CaptionSource::llm_summary};

inline std::string_view to_string(FramePosition p) {
  switch (p) {
    case FramePosition::first: return "first";
    case FramePosition::middle: return "middle";
    case FramePosition::last: return "last";
  }
  return "?";
}

inline std::string_view to_string(CaptionSource s) {
  switch (s) {
    case CaptionSource::coca: return "coca";
    case CaptionSource::vblip: return "vblip";
    case CaptionSource::llm_summary: return "llm_summary";
  }
  return "?";
}

inline std::optional<FramePosition> parse_frame_position(std::string_view s) {
  for (auto p : kFramePositions)
    if (to_string(p) == s) return p;
  return std::nullopt;
}

inline std::optional<CaptionSource> parse_caption_source(std::string_view s) {
  for (auto c : kCaptionSources)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

struct FrameScore {
  FramePosition position = FramePosition::first;
  std::optional<double> aesthetics;
  // One entry per caption of the owning clip, same order.
  std::vector<double> clip_similarity;

  bool operator==(const FrameScore&) const = default;
};

struct Caption {
  CaptionSource source = CaptionSource::coca;
  std::string text;

  bool operator==(const Caption&) const = default;
};

struct ClipRecord {
  std::string clip_id;
  std::string video_id;
  double start_s = 0;
  double end_s = 0;
  std::optional<double> motion_score;
  std::optional<double> text_area_ratio;
  std::array<FrameScore, 3> frame_scores{
      FrameScore{FramePosition::first, {}, {}},
      FrameScore{FramePosition::middle, {}, {}},
      FrameScore{FramePosition::last, {}, {}}};
  std::vector<Caption> captions;
  std::set<std::string> flags;

  double duration_s() const noexcept { return end_s - start_s; }
  const Caption* caption(CaptionSource s) const noexcept {
    for (const auto& c : captions)
      if (c.source == s) return &c;
    return nullptr;
  }

  bool operator==(const ClipRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Invariants

inline void validate(const VideoRecord& v) {
  auto fail = [&](const std::string& m) { throw InvariantError("video " + v.video_id + ": " + m); };
  if (!(v.duration_s > 0)) fail("duration_s must be > 0");
  if (!(v.fps > 0)) fail("fps must be > 0");
  if (v.width < 16 || v.height < 16) fail("width and height must be >= 16");
  if (v.keyframes_s.empty() || v.keyframes_s.front() != 0.0)
    fail("keyframes_s must start at 0.0");
  for (std::size_t i = 0; i < v.keyframes_s.size(); ++i) {
    if (i > 0 && !(v.keyframes_s[i] > v.keyframes_s[i - 1]))
      fail("keyframes_s must be strictly increasing");
    if (!(v.keyframes_s[i] < v.duration_s)) fail("keyframe beyond duration");
  }
}

inline void validate(const ClipRecord& c) {
  auto fail = [&](const std::string& m) { throw InvariantError("clip " + c.clip_id + ": " + m); };
  if (c.clip_id.empty()) fail("empty clip_id");
  if (c.video_id.empty()) fail("empty video_id");
  if (!std::isfinite(c.start_s) || !std::isfinite(c.end_s)) fail("non-finite span");
  if (!(c.start_s >= 0)) fail("start_s must be >= 0");
  if (!(c.start_s < c.end_s)) fail("start_s must be < end_s");
  if (c.motion_score && !(*c.motion_score >= 0)) fail("motion_score must be >= 0");
  if (c.text_area_ratio && !(*c.text_area_ratio >= 0 && *c.text_area_ratio <= 1))
    fail("text_area_ratio must lie in [0,1]");
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& fs = c.frame_scores[i];
    if (fs.position != kFramePositions[i]) fail("frame_scores out of order");
    if (!fs.clip_similarity.empty() && fs.clip_similarity.size() != c.captions.size())
      fail("clip_similarity not aligned with captions");
    for (double s : fs.clip_similarity)
      if (!(s >= -1 && s <= 1)) fail("clip_similarity outside [-1,1]");
    if (fs.aesthetics && !std::isfinite(*fs.aesthetics)) fail("non-finite aesthetics");
  }
  std::set<CaptionSource> seen;
  for (const auto& cap : c.captions) {
    if (cap.text.empty()) fail("empty caption text");
    if (!seen.insert(cap.source).second) fail("duplicate caption source");
  }
}

// Parent-aware check: the clip must lie inside the video.
inline void validate(const ClipRecord& c, const VideoRecord& parent) {
  validate(c);
  if (c.video_id != parent.video_id) throw InvariantError("clip " + c.clip_id + ": wrong parent");
  if (c.end_s > parent.duration_s + 1e-9)
    throw InvariantError("clip " + c.clip_id + ": end_s beyond parent duration");
}

// ---------------------------------------------------------------------------
// JSON mapping

namespace detail {

inline json opt_to_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

inline std::optional<double> opt_from_json(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  if (!v.is_number()) throw FormatError(std::string(key) + " must be a number or null");
  return v.get<double>();
}

inline const json& require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw FormatError(std::string("missing required field '") + key + "'");
  return *it;
}

inline double require_number(const json& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_number()) throw FormatError(std::string(key) + " must be a number");
  return v.get<double>();
}

inline std::string require_string(const json& j, const char* key) {
  const auto& v = require(j, key);
  if (!v.is_string()) throw FormatError(std::string(key) + " must be a string");
  return v.get<std::string>();
}

}  // namespace detail

inline json to_json(const ClipRecord& c) {
  json fs = json::array();
  for (const auto& f : c.frame_scores)
    fs.push_back(json{{"position", to_string(f.position)},
                      {"aesthetics", detail::opt_to_json(f.aesthetics)},
                      {"clip_similarity", f.clip_similarity}});
  json caps = json::array();
  for (const auto& cap : c.captions)
    caps.push_back(json{{"source", to_string(cap.source)}, {"text", cap.text}});
  return json{{"video_id", c.video_id},
              {"clip_id", c.clip_id},
              {"start_s", c.start_s},
              {"end_s", c.end_s},
              {"motion_score", detail::opt_to_json(c.motion_score)},
              {"text_area_ratio", detail::opt_to_json(c.text_area_ratio)},
              {"frame_scores", std::move(fs)},
              {"captions", std::move(caps)},
              {"flags", c.flags}};
}

inline ClipRecord clip_from_json(const json& j) {
  using namespace detail;
  if (!j.is_object()) throw FormatError("record is not an object");
  ClipRecord c;
  c.video_id = require_string(j, "video_id");
  c.clip_id = require_string(j, "clip_id");
  c.start_s = require_number(j, "start_s");
  c.end_s = require_number(j, "end_s");
  require(j, "motion_score");
  c.motion_score = opt_from_json(j, "motion_score");
  require(j, "text_area_ratio");
  c.text_area_ratio = opt_from_json(j, "text_area_ratio");

  const auto& fs = require(j, "frame_scores");
  if (!fs.is_array() || fs.size() != 3) throw FormatError("frame_scores must have 3 entries");
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& e = fs[i];
    auto pos = parse_frame_position(require_string(e, "position"));
    if (!pos) throw FormatError("bad frame position");
    c.frame_scores[i].position = *pos;
    require(e, "aesthetics");
    c.frame_scores[i].aesthetics = opt_from_json(e, "aesthetics");
    const auto& sims = require(e, "clip_similarity");
    if (!sims.is_array()) throw FormatError("clip_similarity must be an array");
    for (const auto& s : sims) {
      if (!s.is_number()) throw FormatError("clip_similarity entries must be numbers");
      c.frame_scores[i].clip_similarity.push_back(s.get<double>());
    }
  }

  const auto& caps = require(j, "captions");
  if (!caps.is_array()) throw FormatError("captions must be an array");
  for (const auto& e : caps) {
    auto src = parse_caption_source(require_string(e, "source"));
    if (!src) throw FormatError("bad caption source");
    c.captions.push_back({*src, require_string(e, "text")});
  }

  const auto& flags = require(j, "flags");
  if (!flags.is_array()) throw FormatError("flags must be an array");
  for (const auto& f : flags) {
    if (!f.is_string()) throw FormatError("flags must be strings");
    c.flags.insert(f.get<std::string>());
  }
  return c;
}

inline json to_json(const VideoRecord& v) {
  return json{{"video_id", v.video_id},   {"uri", v.uri},
              {"duration_s", v.duration_s}, {"fps", v.fps},
              {"width", v.width},         {"height", v.height},
              {"keyframes_s", v.keyframes_s}};
}

inline VideoRecord video_from_json(const json& j) {
  using namespace detail;
  if (!j.is_object()) throw FormatError("record is not an object");
  VideoRecord v;
  v.video_id = require_string(j, "video_id");
  v.uri = require_string(j, "uri");
  v.duration_s = require_number(j, "duration_s");
  v.fps = require_number(j, "fps");
  v.width = static_cast<std::uint32_t>(require_number(j, "width"));
  v.height = static_cast<std::uint32_t>(require_number(j, "height"));
  const auto& kf = require(j, "keyframes_s");
  if (!kf.is_array()) throw FormatError("keyframes_s must be an array");
  for (const auto& k : kf) v.keyframes_s.push_back(k.get<double>());
  return v;
}

inline std::string to_line(const ClipRecord& c) { return to_json(c).dump(); }

// ---------------------------------------------------------------------------
// Reading

enum class ParseMode { lenient, strict };

// Streaming reader. In lenient mode malformed lines are collected as
// ManifestError values and skipped; in strict mode the first one is thrown.
// Blank lines are ignored.
template <typename Record, Record (*FromJson)(const json&)>
class LineReader {
 public:
  explicit LineReader(const std::filesystem::path& path, ParseMode mode = ParseMode::lenient)
      : in_(path), mode_(mode) {
    if (!in_) throw Error("cannot open " + path.string());
  }

  std::optional<Record> next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        Record r = FromJson(json::parse(line));
        validate(r);
        return r;
      } catch (const json::exception& e) {
        fail(std::string("malformed record: ") + e.what());
      } catch (const FormatError& e) {
        fail(std::string("schema violation: ") + e.what());
      } catch (const InvariantError& e) {
        fail(std::string("invariant violation: ") + e.what());
      }
    }
    return std::nullopt;
  }

  const std::vector<ManifestError>& errors() const noexcept { return errors_; }

 private:
  void fail(const std::string& what) {
    ManifestError err(line_no_, what);
    if (mode_ == ParseMode::strict) throw err;
    errors_.push_back(std::move(err));
  }

  std::ifstream in_;
  ParseMode mode_;
  std::size_t line_no_ = 0;
  std::vector<ManifestError> errors_;
};

using ManifestReader = LineReader<ClipRecord, &clip_from_json>;
using VideoListReader = LineReader<VideoRecord, &video_from_json>;

template <typename Record>
struct ReadResult {
  std::vector<Record> records;
  std::vector<ManifestError> errors;
};

inline ReadResult<ClipRecord> read_manifest(const std::filesystem::path& path,
                                            ParseMode mode = ParseMode::lenient) {
  if (!std::filesystem::exists(path)) throw Error("manifest not found: " + path.string());
  ManifestReader reader(path, mode);
  ReadResult<ClipRecord> out;
  while (auto r = reader.next()) out.records.push_back(std::move(*r));
  out.errors = reader.errors();
  return out;
}

inline ReadResult<VideoRecord> read_videos(const std::filesystem::path& path,
                                           ParseMode mode = ParseMode::lenient) {
  if (!std::filesystem::exists(path)) throw Error("video list not found: " + path.string());
  VideoListReader reader(path, mode);
  ReadResult<VideoRecord> out;
  while (auto r = reader.next()) out.records.push_back(std::move(*r));
  out.errors = reader.errors();
  return out;
}

// ---------------------------------------------------------------------------
// Writing

namespace detail {

template <typename Range>
std::size_t write_lines_atomically(const Range& records, const std::filesystem::path& path) {
  // Validate everything before touching the file.
  for (const auto& r : records) validate(r);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    for (const auto& r : records) out << to_json(r).dump() << '\n';
    if (!out.flush()) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
  return std::size(records);
}

}  // namespace detail

inline std::size_t write_manifest(const std::vector<ClipRecord>& records,
                                  const std::filesystem::path& path) {
  return detail::write_lines_atomically(records, path);
}

inline std::size_t write_videos(const std::vector<VideoRecord>& records,
                                const std::filesystem::path& path) {
  return detail::write_lines_atomically(records, path);
}

// `<dataset>.<5-digit index>.manifest`
inline std::string shard_name(std::string_view dataset, std::uint32_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, ".%05u.manifest", index);
  return std::string(dataset) + buf;
}

// Single-owner, append-only writer that rolls to a new shard every
// `records_per_shard` records.
class ShardWriter {
 public:
  ShardWriter(std::filesystem::path dir, std::string dataset, std::size_t records_per_shard)
      : dir_(std::move(dir)), dataset_(std::move(dataset)), per_shard_(records_per_shard) {
    if (per_shard_ == 0) throw PreconditionError("records_per_shard must be > 0");
    std::filesystem::create_directories(dir_);
  }

  void append(const ClipRecord& r) {
    validate(r);
    if (!out_.is_open() || in_shard_ == per_shard_) roll();
    out_ << to_line(r) << '\n';
    ++in_shard_;
    ++total_;
  }

  void close() {
    if (out_.is_open()) out_.close();
  }

  std::size_t total() const noexcept { return total_; }
  const std::vector<std::filesystem::path>& shards() const noexcept { return shards_; }

 private:
  void roll() {
    close();
    shards_.push_back(dir_ / shard_name(dataset_, static_cast<std::uint32_t>(shards_.size())));
    out_.open(shards_.back(), std::ios::binary | std::ios::trunc);
    if (!out_) throw Error("cannot write " + shards_.back().string());
    in_shard_ = 0;
  }

  std::filesystem::path dir_;
  std::string dataset_;
  std::size_t per_shard_;
  std::ofstream out_;
  std::size_t in_shard_ = 0;
  std::size_t total_ = 0;
  std::vector<std::filesystem::path> shards_;
};

}  // namespace vidcurate
