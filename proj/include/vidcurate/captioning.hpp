#pragma once

// Three synthetic captions per clip (an image captioner on the mid frame, a
// video captioner on the clip, and an LLM summary of the two) and the
// weighted caption-sampling distribution used downstream.

#include <array>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "vidcurate/error.hpp"
#include "vidcurate/hash.hpp"
#include "vidcurate/http_providers.hpp"
#include "vidcurate/ingest.hpp"
#include "vidcurate/manifest.hpp"

namespace vidcurate {

class CaptionClient {
 public:
  virtual ~CaptionClient() = default;
  virtual std::string caption(std::span<const Frame> frames) = 0;
};

class SummaryClient {
 public:
  virtual ~SummaryClient() = default;
  virtual std::string summarize(const std::string& image_caption, const std::string& video_caption,
                                const std::string& prompt) = 0;
};

// Prompt handed to the summarizer. {image_caption} and {video_caption} are
// replaced verbatim.
inline constexpr std::string_view kSummaryPromptTemplate =
    "You are given two descriptions of the same short video clip.\n"
    "Image description (middle frame): {image_caption}\n"
    "Video description (whole clip): {video_caption}\n"
    "Write a single fluent caption of at most 40 words that combines the "
    "objects and scene from the image description with the actions and "
    "motion from the video description. Do not mention the descriptions "
    "themselves.";

inline std::string render_summary_prompt(const std::string& image_caption, const std::string& video_caption) {
  std::string out(kSummaryPromptTemplate);
  auto replace = [&](std::string_view key, const std::string& val) {
    const auto at = out.find(key);
    if (at != std::string::npos) out.replace(at, key.size(), val);
  };
  replace("{image_caption}", image_caption);
  replace("{video_caption}", video_caption);
  return out;
}

// Removes ASCII control characters; everything else is kept verbatim.
inline std::string sanitize_caption(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 0x20 || u == 0x7f) continue;
    out.push_back(c);
  }
  return out;
}

struct CaptionClients {
  CaptionClient* coca = nullptr;
  CaptionClient* vblip = nullptr;
  SummaryClient* llm = nullptr;
};

struct CaptionResult {
  std::vector<Caption> captions;
  std::set<std::string> flags;
};

// Captions in source order (coca, vblip, llm_summary). A failing client
// (exception or empty text after sanitizing) sets `<source>_failed`; the
// summary is skipped with `llm_skipped` unless both inputs exist.
inline CaptionResult caption_clip(const Frame& mid_frame, std::span<const Frame> clip_frames,
                                  const CaptionClients& clients) {
  CaptionResult out;
  auto attempt = [&](CaptionSource src, const char* fail_tag, auto&& call) -> bool {
    try {
      std::string text = sanitize_caption(call());
      if (!text.empty()) {
        out.captions.push_back({src, std::move(text)});
        return true;
      }
    } catch (const std::exception&) {
    }
    out.flags.insert(fail_tag);
    return false;
  };

  bool have_coca = false, have_vblip = false;
  if (clients.coca)
    have_coca = attempt(CaptionSource::coca, "coca_failed",
                        [&] { return clients.coca->caption(std::span<const Frame>(&mid_frame, 1)); });
  else
    out.flags.insert("coca_failed");
  if (clients.vblip)
    have_vblip = attempt(CaptionSource::vblip, "vblip_failed", [&] { return clients.vblip->caption(clip_frames); });
  else
    out.flags.insert("vblip_failed");

  if (have_coca && have_vblip && clients.llm) {
    const std::string a = out.captions[0].text;
    const std::string b = out.captions[1].text;
    attempt(CaptionSource::llm_summary, "llm_failed",
            [&] { return clients.llm->summarize(a, b, render_summary_prompt(a, b)); });
  } else {
    out.flags.insert("llm_skipped");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Caption sampling

struct CaptionWeights {
  double coca = 0.5;
  double vblip = 0.25;
  double llm_summary = 0.25;

  double of(CaptionSource s) const noexcept {
    switch (s) {
      case CaptionSource::coca: return coca;
      case CaptionSource::vblip: return vblip;
      case CaptionSource::llm_summary: return llm_summary;
    }
    return 0;
  }
  bool operator==(const CaptionWeights&) const = default;
};

// Index into `captions` drawn with probability proportional to the source
// weights, renormalized over the sources present. Pure in (captions, seed).
inline std::size_t sample_caption_index(std::span<const Caption> captions, std::uint64_t seed,
                                        const CaptionWeights& w = {}) {
  if (captions.empty()) throw PreconditionError("sample_caption: no captions");
  double total = 0;
  for (const auto& c : captions) total += w.of(c.source);
  if (!(total > 0)) throw PreconditionError("sample_caption: all present sources have zero weight");
  const double u = Rng(splitmix64(seed)).uniform() * total;
  double acc = 0;
  for (std::size_t i = 0; i < captions.size(); ++i) {
    acc += w.of(captions[i].source);
    if (u < acc) return i;
  }
  // Rounding at the top end: last caption with nonzero weight.
  for (std::size_t i = captions.size(); i-- > 0;)
    if (w.of(captions[i].source) > 0) return i;
  return captions.size() - 1;
}

inline const Caption& sample_caption(std::span<const Caption> captions, std::uint64_t seed,
                                     const CaptionWeights& w = {}) {
  return captions[sample_caption_index(captions, seed, w)];
}

// ---------------------------------------------------------------------------
// Stub clients

namespace detail {

inline std::string color_name(double r, double g, double b) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  if (mx - mn < 24) return mx < 60 ? "dark" : (mx > 200 ? "white" : "gray");
  if (mx == r) return g > 0.7 * r ? "yellow" : (b > 0.7 * r ? "purple" : "red");
  if (mx == g) return b > 0.7 * g ? "teal" : "green";
  return r > 0.7 * b ? "violet" : "blue";
}

inline std::array<double, 3> mean_rgb(const RgbImage& img) {
  std::array<double, 3> m{};
  const auto& px = img.buffer();
  const std::size_t n = px.size() / 3;
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) m[c] += px[3 * i + c];
  for (auto& v : m) v /= std::max<std::size_t>(n, 1);
  return m;
}

}  // namespace detail

// Describes the dominant color and brightness of the first frame.
class StubImageCaptioner final : public CaptionClient {
 public:
  std::string caption(std::span<const Frame> frames) override {
    if (frames.empty()) throw ProviderError("no frame");
    const auto m = detail::mean_rgb(frames.front().pixels);
    const double luma = 0.299 * m[0] + 0.587 * m[1] + 0.114 * m[2];
    const char* light = luma < 70 ? "dim" : (luma > 170 ? "bright" : "softly lit");
    return std::string("a ") + light + " scene dominated by " + detail::color_name(m[0], m[1], m[2]) + " tones";
  }
};

// Describes how brightness evolves across the frames.
class StubVideoCaptioner final : public CaptionClient {
 public:
  std::string caption(std::span<const Frame> frames) override {
    if (frames.empty()) throw ProviderError("no frames");
    const auto a = detail::mean_rgb(frames.front().pixels);
    const auto b = detail::mean_rgb(frames.back().pixels);
    const double la = 0.299 * a[0] + 0.587 * a[1] + 0.114 * a[2];
    const double lb = 0.299 * b[0] + 0.587 * b[1] + 0.114 * b[2];
    const char* trend = lb > la + 8 ? "grows brighter" : (lb < la - 8 ? "grows darker" : "keeps a steady exposure");
    return std::string("a video of ") + detail::color_name(a[0], a[1], a[2]) + " surfaces that " + trend +
           " over " + std::to_string(frames.size()) + " sampled frames";
  }
};

class StubSummarizer final : public SummaryClient {
 public:
  std::string summarize(const std::string& image_caption, const std::string& video_caption,
                        const std::string&) override {
    return image_caption + ", shown in " + video_caption;
  }
};

// ---------------------------------------------------------------------------
// HTTP clients

class HttpCaptioner final : public CaptionClient {
 public:
  explicit HttpCaptioner(std::string base_url, RetryPolicy policy = {}) : http_(std::move(base_url), policy) {}

  std::string caption(std::span<const Frame> frames) override {
    if (frames.empty()) throw ProviderError("no frames");
    if (frames.size() == 1) return detail::parse_text(http_.post("/caption", encode_png(frames[0].pixels), "image/png"));
    nlohmann::json body{{"frames", nlohmann::json::array()}};
    for (const auto& f : frames) body["frames"].push_back(base64_encode(encode_png(f.pixels)));
    return detail::parse_text(http_.post("/caption", body.dump(), "application/json"));
  }

 private:
  HttpCaller http_;
};

class HttpSummarizer final : public SummaryClient {
 public:
  explicit HttpSummarizer(std::string base_url, RetryPolicy policy = {}) : http_(std::move(base_url), policy) {}

  std::string summarize(const std::string& a, const std::string& b, const std::string& prompt) override {
    const nlohmann::json body{{"captions", {a, b}}, {"prompt", prompt}};
    return detail::parse_text(http_.post("/summarize", body.dump(), "application/json"));
  }

 private:
  HttpCaller http_;
};

}  // namespace vidcurate
