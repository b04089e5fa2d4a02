#pragma once

// Pipeline stages behind the CLI. Each stage maps an input list to an output
// list in input order, so the worker count never changes output bytes.
//
// Per-item stages are resumable: every finished item is appended to
// `<output>.journal` keyed by a hash of the stage fingerprint (stage name and
// the settings that affect it) and the item's input. A rerun takes journaled
// results for unchanged inputs instead of recomputing them.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "vidcurate/captioning.hpp"
#include "vidcurate/config.hpp"
#include "vidcurate/cut_detect.hpp"
#include "vidcurate/frame_scoring.hpp"
#include "vidcurate/http_providers.hpp"
#include "vidcurate/ingest.hpp"
#include "vidcurate/manifest.hpp"
#include "vidcurate/optical_flow.hpp"
#include "vidcurate/parallel.hpp"

namespace vidcurate {

// ---------------------------------------------------------------------------
// Settings

struct ProviderSettings {
  std::string embedding = "stub";  // stub | http
  std::string embedding_url;
  std::size_t embedding_dim = StubEmbeddingProvider::kDim;
  std::string aesthetic_head;  // weights file; empty = stub head
  std::string text_detector = "stub";
  std::string text_detector_url;
  std::string captioner = "stub";
  std::string coca_url, vblip_url, llm_url;
  double caption_video_fps = 2.0;
  RetryPolicy retry;
};

struct PipelineSettings {
  std::string dataset = "vidcurate";
  std::vector<std::string> ingest_extensions{".y4m"};
  std::string transcoder;      // {in} {out}
  std::string keyframe_probe;  // {in} {out}
  CascadeConfig cascade;
  double min_clip_s = 1.0;
  std::string extract_command = "ffmpeg -v error -ss {start} -i {in} -t {duration} -c copy {out}";
  std::string extract_ext = ".mp4";
  MotionConfig motion;
  FarnebackParams farneback;
  bool store_flow_maps = true;
  ProviderSettings providers;
};

inline PipelineSettings settings_from_config(const Config& c) {
  PipelineSettings s;
  s.dataset = c.get_string("pipeline", "dataset", s.dataset);

  if (auto ext = c.get("ingest", "extensions")) {
    s.ingest_extensions.clear();
    std::istringstream in(*ext);
    std::string e;
    while (std::getline(in, e, ',')) {
      e = config_detail::trim(e);
      if (!e.empty()) s.ingest_extensions.push_back(e[0] == '.' ? e : "." + e);
    }
  }
  s.transcoder = c.get_string("ingest", "transcoder", "");
  s.keyframe_probe = c.get_string("ingest", "keyframe_probe", "");

  auto& cc = s.cascade;
  cc.levels = {{0.0, c.get_double("cut_detect", "native_threshold", 0.11)},
               {c.get_double("cut_detect", "mid_fps", 8.0), c.get_double("cut_detect", "mid_threshold", 0.14)},
               {c.get_double("cut_detect", "low_fps", 2.0), c.get_double("cut_detect", "low_threshold", 0.18)}};
  cc.min_scene_s = c.get_double("cut_detect", "min_scene_s", cc.min_scene_s);
  cc.merge_window_s = c.get_double("cut_detect", "merge_window_s", cc.merge_window_s);
  cc.analysis_short_side =
      static_cast<std::uint32_t>(c.get_int("cut_detect", "analysis_short_side", cc.analysis_short_side));
  for (const auto& l : cc.levels)
    if (!(l.threshold > 0 && l.threshold < 1)) throw ConfigError("cut_detect thresholds must lie in (0, 1)");
  if (!(cc.levels[1].fps > 0 && cc.levels[2].fps > 0 && cc.levels[2].fps <= cc.levels[1].fps))
    throw ConfigError("cut_detect: need mid_fps >= low_fps > 0");

  s.min_clip_s = c.get_double("clip", "min_clip_s", s.min_clip_s);
  s.extract_command = c.get_string("clip", "extract_command", s.extract_command);
  s.extract_ext = c.get_string("clip", "extract_ext", s.extract_ext);

  s.motion.sample_fps = c.get_double("optical_flow", "sample_fps", s.motion.sample_fps);
  s.motion.compute_short_side =
      static_cast<std::uint32_t>(c.get_int("optical_flow", "compute_short_side", s.motion.compute_short_side));
  s.motion.store_short_side =
      static_cast<std::uint32_t>(c.get_int("optical_flow", "store_short_side", s.motion.store_short_side));
  s.store_flow_maps = c.get_bool("optical_flow", "store_maps", s.store_flow_maps);
  auto& fb = s.farneback;
  fb.levels = static_cast<int>(c.get_int("optical_flow", "pyramid_levels", fb.levels));
  fb.pyr_scale = c.get_double("optical_flow", "pyramid_scale", fb.pyr_scale);
  fb.window_sigma = c.get_double("optical_flow", "window_sigma", fb.window_sigma);
  fb.iterations = static_cast<int>(c.get_int("optical_flow", "iterations", fb.iterations));
  fb.poly_n = static_cast<int>(c.get_int("optical_flow", "poly_n", fb.poly_n));
  fb.poly_sigma = c.get_double("optical_flow", "poly_sigma", fb.poly_sigma);
  if (!(s.motion.sample_fps > 0)) throw ConfigError("optical_flow.sample_fps must be > 0");
  if (fb.levels < 1 || fb.iterations < 1 || !(fb.pyr_scale > 0 && fb.pyr_scale < 1))
    throw ConfigError("optical_flow: bad pyramid settings");

  auto& p = s.providers;
  p.embedding = c.get_string("frame_scoring", "embedding_provider", p.embedding);
  p.embedding_url = c.get_string("frame_scoring", "embedding_url", "");
  p.embedding_dim = static_cast<std::size_t>(c.get_int("frame_scoring", "embedding_dim", p.embedding_dim));
  p.aesthetic_head = c.get_string("frame_scoring", "aesthetic_head", "");
  p.text_detector = c.get_string("frame_scoring", "text_detector", p.text_detector);
  p.text_detector_url = c.get_string("frame_scoring", "text_detector_url", "");
  p.captioner = c.get_string("captioning", "backend", p.captioner);
  p.coca_url = c.get_string("captioning", "coca_url", "");
  p.vblip_url = c.get_string("captioning", "vblip_url", "");
  p.llm_url = c.get_string("captioning", "llm_url", "");
  p.caption_video_fps = c.get_double("captioning", "video_fps", p.caption_video_fps);
  p.retry.attempts = static_cast<int>(c.get_int("providers", "retry_attempts", p.retry.attempts));
  p.retry.backoff = std::chrono::milliseconds(c.get_int("providers", "retry_backoff_ms", p.retry.backoff.count()));
  p.retry.timeout = std::chrono::seconds(c.get_int("providers", "timeout_s", p.retry.timeout.count()));
  for (const auto* b : {&p.embedding, &p.text_detector, &p.captioner})
    if (*b != "stub" && *b != "http") throw ConfigError("provider backend must be 'stub' or 'http', got '" + *b + "'");
  if (p.embedding == "http" && p.embedding_url.empty()) throw ConfigError("frame_scoring.embedding_url is required");
  if (p.text_detector == "http" && p.text_detector_url.empty())
    throw ConfigError("frame_scoring.text_detector_url is required");
  if (p.captioner == "http" && (p.coca_url.empty() || p.vblip_url.empty() || p.llm_url.empty()))
    throw ConfigError("captioning: coca_url, vblip_url and llm_url are required for the http backend");
  return s;
}

// ---------------------------------------------------------------------------
// Journal

class Journal {
 public:
  Journal() = default;
  explicit Journal(std::filesystem::path path) : path_(std::move(path)) {
    std::string data;
    if (std::ifstream in{path_, std::ios::binary}) data.assign(std::istreambuf_iterator<char>(in), {});
    const auto end = data.rfind('\n');
    const std::size_t keep = end == std::string::npos ? 0 : end + 1;
    if (keep != data.size()) std::filesystem::resize_file(path_, keep);
    std::size_t pos = 0;
    while (pos < keep) {
      const auto nl = data.find('\n', pos);
      const auto tab = data.find('\t', pos);
      if (tab != std::string::npos && tab < nl) entries_[data.substr(pos, tab - pos)] = data.substr(tab + 1, nl - tab - 1);
      pos = nl + 1;
    }
    out_.open(path_, std::ios::binary | std::ios::app);
    if (!out_) throw Error("cannot open journal " + path_.string());
  }

  std::optional<std::string> find(const std::string& key) const {
    std::lock_guard lk(mu_);
    const auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void put(const std::string& key, const std::string& payload) {
    if (!out_.is_open()) return;
    std::lock_guard lk(mu_);
    out_ << key << '\t' << payload << '\n';
    out_.flush();
    entries_[key] = payload;
  }

  std::size_t size() const {
    std::lock_guard lk(mu_);
    return entries_.size();
  }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::string> entries_;
  std::ofstream out_;
};

inline std::filesystem::path journal_path(const std::filesystem::path& output) {
  auto p = output;
  p += ".journal";
  return p;
}

struct StageStats {
  std::size_t computed = 0;
  std::size_t resumed = 0;
};

// Runs fn over the records with journal lookups keyed on (fingerprint, input line).
template <typename Fn>
std::vector<ClipRecord> run_clip_stage(const std::vector<ClipRecord>& in, const std::string& fingerprint,
                                       Journal& journal, unsigned jobs, Fn&& fn, StageStats* stats = nullptr) {
  std::vector<ClipRecord> out(in.size());
  std::atomic<std::size_t> resumed{0};
  parallel_for(in.size(), jobs, [&](std::size_t i) {
    const std::string key = hex64(fnv1a64(to_line(in[i]), fnv1a64(fingerprint)));
    if (auto hit = journal.find(key)) {
      out[i] = clip_from_json(json::parse(*hit));
      ++resumed;
      return;
    }
    out[i] = fn(in[i]);
    validate(out[i]);
    journal.put(key, to_line(out[i]));
  });
  if (stats) {
    stats->resumed = resumed;
    stats->computed = in.size() - resumed;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Helpers

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out += c;
  }
  return out + "'";
}

// Replaces {key} placeholders; values are shell-quoted.
inline std::string render_command(std::string tmpl, const std::map<std::string, std::string>& vars) {
  for (const auto& [k, v] : vars) {
    const std::string ph = "{" + k + "}";
    for (std::size_t at = tmpl.find(ph); at != std::string::npos; at = tmpl.find(ph, at)) {
      const std::string q = shell_quote(v);
      tmpl.replace(at, ph.size(), q);
      at += q.size();
    }
  }
  return tmpl;
}

inline std::string fmt_seconds(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", t);
  return buf;
}

using VideoIndex = std::unordered_map<std::string, VideoRecord>;

inline VideoIndex index_videos(const std::vector<VideoRecord>& videos) {
  VideoIndex idx;
  for (const auto& v : videos)
    if (!idx.emplace(v.video_id, v).second) throw PreconditionError("duplicate video_id " + v.video_id);
  return idx;
}

inline const VideoRecord& video_of(const VideoIndex& idx, const ClipRecord& c) {
  const auto it = idx.find(c.video_id);
  if (it == idx.end()) throw PreconditionError("clip " + c.clip_id + " references unknown video " + c.video_id);
  return it->second;
}

// ---------------------------------------------------------------------------
// ingest

// Scans `dir` (sorted, recursive) for sources. Y4M files are read directly;
// other configured extensions go through the transcoder into
// `<work>/decoded/`. Keyframes come from `<video>.kf.txt`, the probe command,
// or, failing both, every frame (raw Y4M frames are all self-decodable).
inline std::vector<VideoRecord> ingest_dir(const std::filesystem::path& dir, const PipelineSettings& s,
                                           const std::filesystem::path& work, std::ostream& log = std::cerr) {
  if (!std::filesystem::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension().string();
    if (std::find(s.ingest_extensions.begin(), s.ingest_extensions.end(), ext) != s.ingest_extensions.end())
      files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<VideoRecord> out;
  std::set<std::string> ids;
  for (const auto& f : files) {
    std::filesystem::path y4m = f;
    std::filesystem::path sidecar = keyframe_sidecar_path(f);
    if (f.extension() != ".y4m") {
      if (s.transcoder.empty()) {
        log << "ingest: skipping " << f.string() << " (no transcoder configured)\n";
        continue;
      }
      std::filesystem::create_directories(work / "decoded");
      y4m = work / "decoded" / (f.stem().string() + ".y4m");
      const auto cmd = render_command(s.transcoder, {{"in", f.string()}, {"out", y4m.string()}});
      if (std::system(cmd.c_str()) != 0) throw Error("transcoder failed: " + cmd);
      if (!s.keyframe_probe.empty()) {
        sidecar = keyframe_sidecar_path(y4m);
        const auto probe = render_command(s.keyframe_probe, {{"in", f.string()}, {"out", sidecar.string()}});
        if (std::system(probe.c_str()) != 0) throw Error("keyframe probe failed: " + probe);
      }
    }
    Y4mSource src(y4m);
    VideoRecord v;
    v.video_id = f.stem().string();
    if (!ids.insert(v.video_id).second) throw Error("duplicate video id " + v.video_id + " at " + f.string());
    v.uri = y4m.string();
    v.fps = src.fps();
    v.width = src.width();
    v.height = src.height();
    v.duration_s = src.duration_s();
    if (std::filesystem::exists(sidecar)) {
      for (double t : load_keyframe_index(sidecar))
        if (t < v.duration_s) v.keyframes_s.push_back(t);
    } else {
      for (std::uint64_t i = 0; i < src.frame_count(); ++i) v.keyframes_s.push_back(static_cast<double>(i) / v.fps);
    }
    validate(v);
    std::filesystem::create_directories(work / "keyframes");
    write_keyframe_index(v.keyframes_s, work / "keyframes" / (v.video_id + ".kf.txt"));
    out.push_back(std::move(v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// cuts

inline std::string cascade_fingerprint(const CascadeConfig& c) {
  std::ostringstream o;
  o.precision(17);
  o << "cuts";
  for (const auto& l : c.levels) o << ' ' << l.fps << ':' << l.threshold;
  o << ' ' << c.min_scene_s << ' ' << c.merge_window_s << ' ' << c.analysis_short_side;
  return o.str();
}

inline std::vector<CutList> run_cuts(const std::vector<VideoRecord>& videos, const PipelineSettings& s, unsigned jobs,
                                     Journal& journal, StageStats* stats = nullptr) {
  const std::string fp = cascade_fingerprint(s.cascade);
  std::vector<CutList> out(videos.size());
  std::atomic<std::size_t> resumed{0};
  parallel_for(videos.size(), jobs, [&](std::size_t i) {
    const std::string key = hex64(fnv1a64(to_json(videos[i]).dump(), fnv1a64(fp)));
    out[i].video_id = videos[i].video_id;
    if (auto hit = journal.find(key)) {
      for (const auto& c : json::parse(*hit))
        out[i].cuts.push_back({c.at(0).get<double>(), *parse_detector_level(c.at(1).get<std::string>())});
      ++resumed;
      return;
    }
    Y4mSource src(videos[i].uri);
    out[i] = detect_cascade(src, s.cascade, videos[i].video_id);
    json j = json::array();
    for (const auto& c : out[i].cuts) j.push_back({c.t_s, std::string(to_string(c.level))});
    journal.put(key, j.dump());
  });
  if (stats) {
    stats->resumed = resumed;
    stats->computed = videos.size() - resumed;
  }
  return out;
}

// ---------------------------------------------------------------------------
// clip

inline std::string clip_id_for(const std::string& video_id, std::size_t k) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "-%03zu", k);
  return video_id + buf;
}

struct ClipStageResult {
  std::vector<ClipRecord> clips;
  std::string extract_script;
};

inline ClipStageResult run_clip(const std::vector<VideoRecord>& videos, const std::vector<CutList>& cuts,
                                const PipelineSettings& s, const std::filesystem::path& clip_dir = "clips") {
  std::unordered_map<std::string, const CutList*> by_video;
  for (const auto& c : cuts) by_video[c.video_id] = &c;
  ClipStageResult out;
  out.extract_script = "#!/bin/sh\nset -e\nmkdir -p " + shell_quote(clip_dir.string()) + "\n";
  for (const auto& v : videos) {
    std::vector<double> times;
    if (const auto it = by_video.find(v.video_id); it != by_video.end()) times = it->second->times();
    const auto plan = plan_clips(times, v.keyframes_s, v.duration_s, s.min_clip_s);
    for (std::size_t k = 0; k < plan.spans.size(); ++k) {
      ClipRecord c;
      c.clip_id = clip_id_for(v.video_id, k);
      c.video_id = v.video_id;
      c.start_s = plan.spans[k].start_s;
      c.end_s = plan.spans[k].end_s;
      validate(c, v);
      out.extract_script += render_command(s.extract_command, {{"in", v.uri},
                                                               {"out", (clip_dir / (c.clip_id + s.extract_ext)).string()},
                                                               {"start", fmt_seconds(c.start_s)},
                                                               {"end", fmt_seconds(c.end_s)},
                                                               {"duration", fmt_seconds(c.end_s - c.start_s)}}) +
                            "\n";
      out.clips.push_back(std::move(c));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// flow

inline std::string flow_fingerprint(const PipelineSettings& s) {
  std::ostringstream o;
  o.precision(17);
  const auto& f = s.farneback;
  o << "flow " << s.motion.sample_fps << ' ' << s.motion.compute_short_side << ' ' << s.motion.store_short_side << ' '
    << f.levels << ' ' << f.pyr_scale << ' ' << f.window_sigma << ' ' << f.iterations << ' ' << f.poly_n << ' '
    << f.poly_sigma << ' ' << s.store_flow_maps;
  return o.str();
}

inline std::vector<ClipRecord> run_flow(const std::vector<ClipRecord>& clips, const std::vector<VideoRecord>& videos,
                                        const PipelineSettings& s, unsigned jobs, Journal& journal,
                                        const std::filesystem::path& flow_dir, StageStats* stats = nullptr) {
  const auto vidx = index_videos(videos);
  if (s.store_flow_maps) std::filesystem::create_directories(flow_dir);
  return run_clip_stage(
      clips, flow_fingerprint(s), journal, jobs,
      [&](const ClipRecord& in) {
        ClipRecord c = in;
        Y4mSource src(video_of(vidx, c).uri);
        FarnebackBackend backend(s.farneback);
        const auto m = clip_motion(src, c.start_s, c.end_s, backend, s.motion, c.clip_id);
        c.motion_score = m.score;
        if (m.too_short)
          c.flags.insert("too_short");
        else
          c.flags.erase("too_short");
        if (s.store_flow_maps)
          for (const auto& f : m.flows) {
            char name[32];
            std::snprintf(name, sizeof name, ".%04u.flow", f.pair_index);
            save_flow(f.map, flow_dir / (c.clip_id + name));
          }
        return c;
      },
      stats);
}

// ---------------------------------------------------------------------------
// caption

struct CaptionBackends {
  std::unique_ptr<CaptionClient> coca, vblip;
  std::unique_ptr<SummaryClient> llm;

  CaptionClients clients() const { return {coca.get(), vblip.get(), llm.get()}; }
};

inline CaptionBackends make_caption_backends(const ProviderSettings& p) {
  CaptionBackends b;
  if (p.captioner == "http") {
    b.coca = std::make_unique<HttpCaptioner>(p.coca_url, p.retry);
    b.vblip = std::make_unique<HttpCaptioner>(p.vblip_url, p.retry);
    b.llm = std::make_unique<HttpSummarizer>(p.llm_url, p.retry);
  } else {
    b.coca = std::make_unique<StubImageCaptioner>();
    b.vblip = std::make_unique<StubVideoCaptioner>();
    b.llm = std::make_unique<StubSummarizer>();
  }
  return b;
}

inline std::string caption_fingerprint(const ProviderSettings& p) {
  std::ostringstream o;
  o.precision(17);
  o << "caption " << p.captioner << ' ' << p.coca_url << ' ' << p.vblip_url << ' ' << p.llm_url << ' '
    << p.caption_video_fps;
  return o.str();
}

inline const std::set<std::string> kCaptionFlags = {"coca_failed", "vblip_failed", "llm_failed", "llm_skipped"};

// Captions the clip: CoCa on the middle frame, the video captioner on the
// span sampled at caption_video_fps, then the summary. Replaces earlier captions.
inline ClipRecord caption_record(const ClipRecord& in, FrameSource& src, const CaptionClients& clients,
                                 double video_fps) {
  ClipRecord c = in;
  const auto idx = annotated_frame_indices(c.start_s, c.end_s, src.fps(), src.frame_count());
  const Frame mid = read_frame(src, idx[1]);
  FpsSampler sampler(src, std::min(video_fps, src.fps()), c.start_s, c.end_s);
  const auto frames = collect(sampler);
  auto r = caption_clip(mid, frames, clients);
  c.captions = std::move(r.captions);
  for (const auto& f : kCaptionFlags) c.flags.erase(f);
  c.flags.insert(r.flags.begin(), r.flags.end());
  // Similarities are aligned with the caption list; stale ones go.
  for (auto& fs : c.frame_scores) fs.clip_similarity.clear();
  return c;
}

inline std::vector<ClipRecord> run_caption(const std::vector<ClipRecord>& clips, const std::vector<VideoRecord>& videos,
                                           const PipelineSettings& s, unsigned jobs, Journal& journal,
                                           StageStats* stats = nullptr) {
  const auto vidx = index_videos(videos);
  const auto backends = make_caption_backends(s.providers);
  const auto clients = backends.clients();
  return run_clip_stage(
      clips, caption_fingerprint(s.providers), journal, jobs,
      [&](const ClipRecord& in) {
        Y4mSource src(video_of(vidx, in).uri);
        return caption_record(in, src, clients, s.providers.caption_video_fps);
      },
      stats);
}

// ---------------------------------------------------------------------------
// score

struct ScoringBackends {
  std::unique_ptr<EmbeddingProvider> embedder;
  std::unique_ptr<TextDetector> ocr;
  AestheticHead head;
};

inline ScoringBackends make_scoring_backends(const ProviderSettings& p) {
  ScoringBackends b;
  if (p.embedding == "http")
    b.embedder = std::make_unique<HttpEmbeddingProvider>(p.embedding_url, p.embedding_dim, p.retry);
  else
    b.embedder = std::make_unique<StubEmbeddingProvider>();
  if (p.text_detector == "http")
    b.ocr = std::make_unique<HttpTextDetector>(p.text_detector_url, p.retry);
  else
    b.ocr = std::make_unique<StubTextDetector>();
  b.head = p.aesthetic_head.empty() ? stub_aesthetic_head() : AestheticHead::load(p.aesthetic_head);
  if (b.head.dim() != b.embedder->dim())
    throw ConfigError("aesthetic head dimension " + std::to_string(b.head.dim()) + " does not match embedding dimension " +
                      std::to_string(b.embedder->dim()));
  return b;
}

inline std::string score_fingerprint(const ProviderSettings& p) {
  std::ostringstream o;
  o << "score " << p.embedding << ' ' << p.embedding_url << ' ' << p.embedding_dim << ' ' << p.text_detector << ' '
    << p.text_detector_url << ' ';
  if (!p.aesthetic_head.empty()) {
    std::ifstream in(p.aesthetic_head, std::ios::binary);
    o << hex64(fnv1a64(std::string(std::istreambuf_iterator<char>(in), {})));
  }
  return o.str();
}

inline std::vector<ClipRecord> run_score(const std::vector<ClipRecord>& clips, const std::vector<VideoRecord>& videos,
                                         const PipelineSettings& s, unsigned jobs, Journal& journal,
                                         StageStats* stats = nullptr) {
  const auto vidx = index_videos(videos);
  auto b = make_scoring_backends(s.providers);
  return run_clip_stage(
      clips, score_fingerprint(s.providers), journal, jobs,
      [&](const ClipRecord& in) {
        ClipRecord c = in;
        Y4mSource src(video_of(vidx, c).uri);
        annotate_scores(c, src, *b.embedder, b.head, *b.ocr);
        return c;
      },
      stats);
}

}  // namespace vidcurate
