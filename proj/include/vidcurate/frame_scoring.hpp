#pragma once

// Per-frame embedding scores (text-image similarity, aesthetics) and OCR
// text coverage, behind provider contracts so any embedding model or text
// detector can be attached.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "vidcurate/error.hpp"
#include "vidcurate/hash.hpp"
#include "vidcurate/image.hpp"
#include "vidcurate/ingest.hpp"
#include "vidcurate/manifest.hpp"

namespace vidcurate {

using Embedding = std::vector<float>;

inline double l2_norm(std::span<const float> v) {
  double s = 0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

inline void normalize_in_place(Embedding& v) {
  const double n = l2_norm(v);
  if (n == 0) throw PreconditionError("cannot normalize a zero vector");
  for (auto& x : v) x = static_cast<float>(x / n);
}

inline double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw PreconditionError("cosine_similarity: dimension mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0 || nb == 0) throw PreconditionError("cosine_similarity: zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

// Linear aesthetics head over an image embedding: score = w . e + bias.
// File format: u32 LE dim, then dim f32 LE weights, then f32 LE bias.
struct AestheticHead {
  std::vector<float> weights;
  float bias = 0;

  std::size_t dim() const noexcept { return weights.size(); }

  static AestheticHead load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    auto get = [&](void* dst) {
      unsigned char b[4];
      if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated aesthetic head file");
      const std::uint32_t u = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
      std::memcpy(dst, &u, 4);
    };
    std::uint32_t dim;
    get(&dim);
    if (dim == 0 || dim > (1u << 20)) throw FormatError("bad aesthetic head dimension");
    AestheticHead h;
    h.weights.resize(dim);
    for (auto& w : h.weights) get(&w);
    get(&h.bias);
    return h;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    auto put = [&](const void* src) {
      std::uint32_t u;
      std::memcpy(&u, src, 4);
      const unsigned char b[4] = {static_cast<unsigned char>(u), static_cast<unsigned char>(u >> 8),
                                  static_cast<unsigned char>(u >> 16), static_cast<unsigned char>(u >> 24)};
      out.write(reinterpret_cast<const char*>(b), 4);
    };
    const auto dim = static_cast<std::uint32_t>(weights.size());
    put(&dim);
    for (const auto& w : weights) put(&w);
    put(&bias);
  }
};

inline double aesthetics(std::span<const float> embedding, const AestheticHead& head) {
  if (embedding.size() != head.dim()) throw PreconditionError("aesthetics: dimension mismatch");
  double s = head.bias;
  for (std::size_t i = 0; i < embedding.size(); ++i) s += static_cast<double>(head.weights[i]) * embedding[i];
  return s;
}

// ---------------------------------------------------------------------------
// Text coverage

struct TextBox {
  std::int32_t x = 0, y = 0, w = 0, h = 0;
  bool operator==(const TextBox&) const = default;
};

// Area of the union of the boxes (clipped to the frame) over the frame area.
// Overlaps count once. Computed with a sweep over x-slabs and merged
// y-intervals in exact integer arithmetic.
inline double text_area_ratio(std::span<const TextBox> boxes, std::uint32_t frame_w, std::uint32_t frame_h) {
  if (frame_w == 0 || frame_h == 0) throw PreconditionError("text_area_ratio: empty frame");
  struct R {
    std::int64_t x0, x1, y0, y1;
  };
  std::vector<R> rs;
  for (const auto& b : boxes) {
    const std::int64_t x0 = std::max<std::int64_t>(b.x, 0);
    const std::int64_t y0 = std::max<std::int64_t>(b.y, 0);
    const std::int64_t x1 = std::min<std::int64_t>(static_cast<std::int64_t>(b.x) + b.w, frame_w);
    const std::int64_t y1 = std::min<std::int64_t>(static_cast<std::int64_t>(b.y) + b.h, frame_h);
    if (x1 > x0 && y1 > y0) rs.push_back({x0, x1, y0, y1});
  }
  if (rs.empty()) return 0.0;
  std::vector<std::int64_t> xs;
  for (const auto& r : rs) {
    xs.push_back(r.x0);
    xs.push_back(r.x1);
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

  std::int64_t area = 0;
  std::vector<std::pair<std::int64_t, std::int64_t>> ys;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    const std::int64_t lo = xs[i], hi = xs[i + 1];
    ys.clear();
    for (const auto& r : rs)
      if (r.x0 <= lo && r.x1 >= hi) ys.emplace_back(r.y0, r.y1);
    if (ys.empty()) continue;
    std::sort(ys.begin(), ys.end());
    std::int64_t covered = 0, cur0 = ys[0].first, cur1 = ys[0].second;
    for (std::size_t k = 1; k < ys.size(); ++k) {
      if (ys[k].first > cur1) {
        covered += cur1 - cur0;
        cur0 = ys[k].first;
        cur1 = ys[k].second;
      } else {
        cur1 = std::max(cur1, ys[k].second);
      }
    }
    covered += cur1 - cur0;
    area += covered * (hi - lo);
  }
  return static_cast<double>(area) / (static_cast<double>(frame_w) * frame_h);
}

// ---------------------------------------------------------------------------
// Provider contracts

// Image/text embedder. Returned vectors are unit-norm and deterministic for
// a fixed input. Implementations must tolerate concurrent calls.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dim() const = 0;
  virtual Embedding embed_image(const RgbImage& img) = 0;
  virtual Embedding embed_text(const std::string& text) = 0;
};

class TextDetector {
 public:
  virtual ~TextDetector() = default;
  virtual std::vector<TextBox> detect(const RgbImage& img) = 0;
};

// Deterministic stand-in for an image-text embedding model.
// Image: 32-bin luma histogram (fractions) followed by mean R, G, B in
// [0,1], L2-normalized. Text: unit vector drawn from a generator seeded with
// the FNV-1a hash of the text.
class StubEmbeddingProvider final : public EmbeddingProvider {
 public:
  static constexpr std::size_t kDim = 35;

  std::size_t dim() const override { return kDim; }

  Embedding embed_image(const RgbImage& img) override {
    Embedding e(kDim, 0.f);
    const auto& px = img.buffer();
    const std::size_t n = px.size() / 3;
    if (n == 0) throw PreconditionError("embed_image: empty image");
    std::array<double, 3> mean{};
    std::array<std::uint64_t, 32> hist{};
    for (std::size_t i = 0; i < n; ++i) {
      const int r = px[3 * i], g = px[3 * i + 1], b = px[3 * i + 2];
      const int luma = (77 * r + 150 * g + 29 * b) >> 8;
      ++hist[static_cast<std::size_t>(luma) >> 3];
      mean[0] += r;
      mean[1] += g;
      mean[2] += b;
    }
    for (std::size_t i = 0; i < 32; ++i) e[i] = static_cast<float>(static_cast<double>(hist[i]) / n);
    for (std::size_t c = 0; c < 3; ++c) e[32 + c] = static_cast<float>(mean[c] / n / 255.0);
    normalize_in_place(e);
    return e;
  }

  Embedding embed_text(const std::string& text) override {
    Rng rng(fnv1a64(text));
    Embedding e(kDim);
    do {
      for (auto& x : e) x = static_cast<float>(rng.uniform() * 2.0 - 1.0);
    } while (l2_norm(e) < 1e-6);
    normalize_in_place(e);
    return e;
  }
};

// Stand-in detector: bounding boxes of 4-connected regions of saturated
// yellow pixels (R,G > 200, B < 80), the color the synthetic corpus uses
// for burned-in text. Regions under 4 pixels are ignored.
class StubTextDetector final : public TextDetector {
 public:
  std::vector<TextBox> detect(const RgbImage& img) override {
    const std::uint32_t W = img.width(), H = img.height();
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(W) * H), seen(mask.size());
    for (std::uint32_t y = 0; y < H; ++y)
      for (std::uint32_t x = 0; x < W; ++x)
        mask[static_cast<std::size_t>(y) * W + x] =
            img.at(x, y, 0) > 200 && img.at(x, y, 1) > 200 && img.at(x, y, 2) < 80;
    std::vector<TextBox> boxes;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> stack;
    for (std::uint32_t y = 0; y < H; ++y)
      for (std::uint32_t x = 0; x < W; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * W + x;
        if (!mask[i] || seen[i]) continue;
        std::uint32_t x0 = x, x1 = x, y0 = y, y1 = y, count = 0;
        stack.assign(1, {x, y});
        seen[i] = 1;
        while (!stack.empty()) {
          auto [cx, cy] = stack.back();
          stack.pop_back();
          ++count;
          x0 = std::min(x0, cx);
          x1 = std::max(x1, cx);
          y0 = std::min(y0, cy);
          y1 = std::max(y1, cy);
          const std::array<std::pair<long, long>, 4> nb = {{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
          for (auto [dx, dy] : nb) {
            const long nx = static_cast<long>(cx) + dx, ny = static_cast<long>(cy) + dy;
            if (nx < 0 || ny < 0 || nx >= static_cast<long>(W) || ny >= static_cast<long>(H)) continue;
            const std::size_t j = static_cast<std::size_t>(ny) * W + static_cast<std::size_t>(nx);
            if (mask[j] && !seen[j]) {
              seen[j] = 1;
              stack.emplace_back(static_cast<std::uint32_t>(nx), static_cast<std::uint32_t>(ny));
            }
          }
        }
        if (count >= 4)
          boxes.push_back({static_cast<std::int32_t>(x0), static_cast<std::int32_t>(y0),
                           static_cast<std::int32_t>(x1 - x0 + 1), static_cast<std::int32_t>(y1 - y0 + 1)});
      }
    return boxes;
  }
};

// Head used with the stub embedder: rewards mid-tone histogram mass and
// penalizes crushed blacks and blown highlights.
inline AestheticHead stub_aesthetic_head() {
  AestheticHead h;
  h.weights.assign(StubEmbeddingProvider::kDim, 0.f);
  for (int i = 0; i < 32; ++i) h.weights[i] = static_cast<float>(1.0 - std::fabs(i - 15.5) / 8.0);
  h.bias = 5.0f;
  return h;
}

// ---------------------------------------------------------------------------
// Per-clip scoring

struct ClipFrameScores {
  std::array<FrameScore, 3> frames;
  double text_area_ratio = 0;
};

// Frame indices annotated for a clip: first frame at/after start, the frame
// nearest the midpoint, and the last frame before end.
inline std::array<std::uint64_t, 3> annotated_frame_indices(double start_s, double end_s, double fps,
                                                            std::uint64_t frame_count) {
  if (frame_count == 0) throw PreconditionError("source has no frames");
  const auto first = static_cast<std::uint64_t>(std::max(0.0, std::ceil(start_s * fps - 1e-9)));
  auto last_excl = static_cast<std::uint64_t>(std::max(0.0, std::ceil(end_s * fps - 1e-9)));
  last_excl = std::min(last_excl, frame_count);
  if (last_excl <= first) throw PreconditionError("clip span contains no frames");
  const std::uint64_t last = last_excl - 1;
  const std::uint64_t mid = std::clamp(nearest_frame_index(0.5 * (start_s + end_s), fps), first, last);
  return {first, mid, last};
}

// Scores the first, middle and last frames of a clip: aesthetics, cosine
// similarity against every caption (in caption order), and text coverage.
// The clip's text_area_ratio is the max over the three frames.
inline ClipFrameScores score_clip_frames(const ClipRecord& clip, FrameSource& source, EmbeddingProvider& provider,
                                         const AestheticHead& head, TextDetector& ocr) {
  const auto idx = annotated_frame_indices(clip.start_s, clip.end_s, source.fps(), source.frame_count());
  std::vector<Embedding> text_emb;
  for (const auto& c : clip.captions) text_emb.push_back(provider.embed_text(c.text));

  ClipFrameScores out;
  for (std::size_t k = 0; k < 3; ++k) {
    const Frame f = read_frame(source, idx[k]);
    const Embedding e = provider.embed_image(f.pixels);
    if (e.size() != provider.dim()) throw ProviderError("embedding has wrong dimension");
    FrameScore& fs = out.frames[k];
    fs.position = kFramePositions[k];
    fs.aesthetics = aesthetics(e, head);
    for (const auto& t : text_emb) fs.clip_similarity.push_back(cosine_similarity(e, t));
    const auto boxes = ocr.detect(f.pixels);
    out.text_area_ratio = std::max(out.text_area_ratio, text_area_ratio(boxes, f.pixels.width(), f.pixels.height()));
  }
  return out;
}

// Applies score_clip_frames to a record. Provider or OCR failures are soft:
// the clip keeps its previous scores and gains the `score_failed` flag.
inline void annotate_scores(ClipRecord& clip, FrameSource& source, EmbeddingProvider& provider,
                            const AestheticHead& head, TextDetector& ocr) {
  try {
    auto s = score_clip_frames(clip, source, provider, head, ocr);
    clip.frame_scores = s.frames;
    clip.text_area_ratio = s.text_area_ratio;
    clip.flags.erase("score_failed");
  } catch (const ProviderError&) {
    clip.flags.insert("score_failed");
  }
}

}  // namespace vidcurate
