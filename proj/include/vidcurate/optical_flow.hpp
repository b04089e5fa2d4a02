#pragma once

// Dense optical flow (Farnebäck two-frame motion estimation), flow-map
// storage at reduced resolution, and the per-clip global motion score.
//
// Farnebäck in brief: around every pixel the image is approximated by a
// quadratic polynomial f(x) ~ x^T A x + b^T x + c, fitted by weighted least
// squares with a Gaussian applicability over a small neighborhood. If the
// second image is the first shifted by d, then b2 = b1 - 2 A d, so
//
//   A(x) d = -1/2 (b2(x + d~) - b1(x)) + A(x) d~ =: db(x)
//
// where d~ is the current estimate. d is solved per pixel in the least
// squares sense over a Gaussian window (sum w A^T A) d = sum w A^T db,
// iterated a few times per pyramid level, coarse to fine.
//
// Flow convention: a(x) ~ b(x + flow(x)), i.e. content at x in the first
// frame moved to x + flow in the second.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vidcurate/error.hpp"
#include "vidcurate/image.hpp"
#include "vidcurate/ingest.hpp"

namespace vidcurate {

struct FlowMap {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<float> u;
  std::vector<float> v;
  double interval_s = 0;

  FlowMap() = default;
  FlowMap(std::uint32_t w, std::uint32_t h, double interval = 0)
      : width(w), height(h), u(static_cast<std::size_t>(w) * h), v(static_cast<std::size_t>(w) * h),
        interval_s(interval) {}

  std::uint32_t short_side() const noexcept { return std::min(width, height); }
  float& u_at(std::uint32_t x, std::uint32_t y) { return u[static_cast<std::size_t>(y) * width + x]; }
  float& v_at(std::uint32_t x, std::uint32_t y) { return v[static_cast<std::size_t>(y) * width + x]; }
  float u_at(std::uint32_t x, std::uint32_t y) const { return u[static_cast<std::size_t>(y) * width + x]; }
  float v_at(std::uint32_t x, std::uint32_t y) const { return v[static_cast<std::size_t>(y) * width + x]; }

  bool operator==(const FlowMap&) const = default;
};

struct FarnebackParams {
  int levels = 3;
  double pyr_scale = 0.5;
  double window_sigma = 1.5;
  int iterations = 3;
  int poly_n = 5;
  double poly_sigma = 1.1;
};

namespace farneback_detail {

// Per-pixel polynomial coefficients: b = (bx, by), A = [[axx, axy], [axy, ayy]].
struct PolyPlanes {
  std::uint32_t width = 0, height = 0;
  std::vector<float> bx, by, axx, ayy, axy;
};

using Mat6 = std::array<std::array<double, 6>, 6>;

inline Mat6 invert6(Mat6 m) {
  Mat6 inv{};
  for (int i = 0; i < 6; ++i) inv[i][i] = 1;
  for (int col = 0; col < 6; ++col) {
    int piv = col;
    for (int r = col + 1; r < 6; ++r)
      if (std::fabs(m[r][col]) > std::fabs(m[piv][col])) piv = r;
    std::swap(m[col], m[piv]);
    std::swap(inv[col], inv[piv]);
    const double d = m[col][col];
    if (std::fabs(d) < 1e-15) throw Error("polynomial expansion basis is singular");
    for (int c = 0; c < 6; ++c) {
      m[col][c] /= d;
      inv[col][c] /= d;
    }
    for (int r = 0; r < 6; ++r) {
      if (r == col) continue;
      const double f = m[r][col];
      if (f == 0) continue;
      for (int c = 0; c < 6; ++c) {
        m[r][c] -= f * m[col][c];
        inv[r][c] -= f * inv[col][c];
      }
    }
  }
  return inv;
}

// Weighted least-squares fit of {1, x, y, x^2, y^2, xy} at every pixel.
// The projections onto the basis are separable correlations.
inline PolyPlanes poly_expand(const GrayImage& img, int radius, double sigma) {
  const std::uint32_t W = img.width(), H = img.height();
  std::vector<double> g(2 * radius + 1);
  for (int t = -radius; t <= radius; ++t) g[t + radius] = std::exp(-(t * t) / (2 * sigma * sigma));

  // Gram matrix of the weighted basis.
  Mat6 gram{};
  for (int y = -radius; y <= radius; ++y)
    for (int x = -radius; x <= radius; ++x) {
      const double w = g[x + radius] * g[y + radius];
      const std::array<double, 6> phi = {1.0, double(x), double(y), double(x * x), double(y * y), double(x * y)};
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) gram[i][j] += w * phi[i] * phi[j];
    }
  const Mat6 ginv = invert6(gram);

  const std::size_t N = static_cast<std::size_t>(W) * H;
  // Row pass: moments of order 0,1,2 along x.
  std::array<std::vector<double>, 3> row;
  for (auto& r : row) r.assign(N, 0.0);
  for (std::uint32_t y = 0; y < H; ++y)
    for (std::uint32_t x = 0; x < W; ++x) {
      double m0 = 0, m1 = 0, m2 = 0;
      for (int t = -radius; t <= radius; ++t) {
        const double v = g[t + radius] * img.clamped(static_cast<long>(x) + t, y);
        m0 += v;
        m1 += v * t;
        m2 += v * t * t;
      }
      const std::size_t i = static_cast<std::size_t>(y) * W + x;
      row[0][i] = m0;
      row[1][i] = m1;
      row[2][i] = m2;
    }

  auto clamped = [&](const std::vector<double>& p, std::uint32_t x, long y) {
    y = std::clamp<long>(y, 0, static_cast<long>(H) - 1);
    return p[static_cast<std::size_t>(y) * W + x];
  };

  PolyPlanes out;
  out.width = W;
  out.height = H;
  for (auto* p : {&out.bx, &out.by, &out.axx, &out.ayy, &out.axy}) p->resize(N);
  for (std::uint32_t y = 0; y < H; ++y)
    for (std::uint32_t x = 0; x < W; ++x) {
      // Projections in basis order: 1, x, y, x^2, y^2, xy.
      std::array<double, 6> h{};
      for (int t = -radius; t <= radius; ++t) {
        const double gy = g[t + radius];
        const long yy = static_cast<long>(y) + t;
        const double r0 = clamped(row[0], x, yy);
        const double r1 = clamped(row[1], x, yy);
        const double r2 = clamped(row[2], x, yy);
        h[0] += gy * r0;
        h[1] += gy * r1;
        h[2] += gy * t * r0;
        h[3] += gy * r2;
        h[4] += gy * t * t * r0;
        h[5] += gy * t * r1;
      }
      std::array<double, 6> c{};
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) c[i] += ginv[i][j] * h[j];
      const std::size_t i = static_cast<std::size_t>(y) * W + x;
      out.bx[i] = static_cast<float>(c[1]);
      out.by[i] = static_cast<float>(c[2]);
      out.axx[i] = static_cast<float>(c[3]);
      out.ayy[i] = static_cast<float>(c[4]);
      out.axy[i] = static_cast<float>(c[5] / 2);
    }
  return out;
}

inline float bilinear(const std::vector<float>& p, std::uint32_t W, std::uint32_t H, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(W - 1));
  y = std::clamp(y, 0.0, static_cast<double>(H - 1));
  const auto x0 = static_cast<std::uint32_t>(x);
  const auto y0 = static_cast<std::uint32_t>(y);
  const std::uint32_t x1 = std::min(x0 + 1, W - 1);
  const std::uint32_t y1 = std::min(y0 + 1, H - 1);
  const double ax = x - x0, ay = y - y0;
  auto at = [&](std::uint32_t xx, std::uint32_t yy) { return static_cast<double>(p[static_cast<std::size_t>(yy) * W + xx]); };
  return static_cast<float>((at(x0, y0) * (1 - ax) + at(x1, y0) * ax) * (1 - ay) +
                            (at(x0, y1) * (1 - ax) + at(x1, y1) * ax) * ay);
}

// Separable Gaussian blur of a double plane, border replicated.
inline void blur_plane(std::vector<double>& p, std::uint32_t W, std::uint32_t H, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  const auto k = gaussian_kernel(sigma, radius);
  std::vector<double> tmp(p.size());
  for (std::uint32_t y = 0; y < H; ++y)
    for (std::uint32_t x = 0; x < W; ++x) {
      double acc = 0;
      for (int t = -radius; t <= radius; ++t) {
        const long xx = std::clamp<long>(static_cast<long>(x) + t, 0, static_cast<long>(W) - 1);
        acc += k[t + radius] * p[static_cast<std::size_t>(y) * W + xx];
      }
      tmp[static_cast<std::size_t>(y) * W + x] = acc;
    }
  for (std::uint32_t y = 0; y < H; ++y)
    for (std::uint32_t x = 0; x < W; ++x) {
      double acc = 0;
      for (int t = -radius; t <= radius; ++t) {
        const long yy = std::clamp<long>(static_cast<long>(y) + t, 0, static_cast<long>(H) - 1);
        acc += k[t + radius] * tmp[static_cast<std::size_t>(yy) * W + x];
      }
      p[static_cast<std::size_t>(y) * W + x] = acc;
    }
}

// One refinement step; overwrites `flow` with the new total displacement.
inline void refine(const PolyPlanes& r1, const PolyPlanes& r2, FlowMap& flow, double window_sigma) {
  const std::uint32_t W = r1.width, H = r1.height;
  const std::size_t N = static_cast<std::size_t>(W) * H;
  std::vector<double> g11(N), g12(N), g22(N), h1(N), h2(N);
  for (std::uint32_t y = 0; y < H; ++y)
    for (std::uint32_t x = 0; x < W; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * W + x;
      const double dx = flow.u[i], dy = flow.v[i];
      const double sx = x + dx, sy = y + dy;
      const double bx2 = bilinear(r2.bx, W, H, sx, sy);
      const double by2 = bilinear(r2.by, W, H, sx, sy);
      const double axx = 0.5 * (r1.axx[i] + bilinear(r2.axx, W, H, sx, sy));
      const double ayy = 0.5 * (r1.ayy[i] + bilinear(r2.ayy, W, H, sx, sy));
      const double axy = 0.5 * (r1.axy[i] + bilinear(r2.axy, W, H, sx, sy));
      const double db1 = -0.5 * (bx2 - r1.bx[i]) + axx * dx + axy * dy;
      const double db2 = -0.5 * (by2 - r1.by[i]) + axy * dx + ayy * dy;
      // A is symmetric, so A^T A = A^2 and A^T db = A db.
      g11[i] = axx * axx + axy * axy;
      g12[i] = axy * (axx + ayy);
      g22[i] = axy * axy + ayy * ayy;
      h1[i] = axx * db1 + axy * db2;
      h2[i] = axy * db1 + ayy * db2;
    }
  for (auto* p : {&g11, &g12, &g22, &h1, &h2}) blur_plane(*p, W, H, window_sigma);
  for (std::size_t i = 0; i < N; ++i) {
    const double det = g11[i] * g22[i] - g12[i] * g12[i] + 1e-3;
    flow.u[i] = static_cast<float>((g22[i] * h1[i] - g12[i] * h2[i]) / det);
    flow.v[i] = static_cast<float>((g11[i] * h2[i] - g12[i] * h1[i]) / det);
  }
}

inline GrayImage pyramid_level(const GrayImage& img, double scale) {
  if (scale >= 1.0) return img;
  const double sigma = (1.0 / scale - 1.0) * 0.5;
  const GrayImage smooth = gaussian_blur(img, sigma);
  const auto w = static_cast<std::uint32_t>(std::lround(img.width() * scale));
  const auto h = static_cast<std::uint32_t>(std::lround(img.height() * scale));
  return resize_bilinear(smooth, std::max<std::uint32_t>(w, 1), std::max<std::uint32_t>(h, 1));
}

inline FlowMap upscale_flow(const FlowMap& f, std::uint32_t w, std::uint32_t h) {
  FlowMap out(w, h, f.interval_s);
  const double sx = static_cast<double>(w) / f.width;
  const double sy = static_cast<double>(h) / f.height;
  for (std::uint32_t y = 0; y < h; ++y)
    for (std::uint32_t x = 0; x < w; ++x) {
      const double fx = (x + 0.5) / sx - 0.5;
      const double fy = (y + 0.5) / sy - 0.5;
      out.u_at(x, y) = static_cast<float>(bilinear(f.u, f.width, f.height, fx, fy) * sx);
      out.v_at(x, y) = static_cast<float>(bilinear(f.v, f.width, f.height, fx, fy) * sy);
    }
  return out;
}

}  // namespace farneback_detail

// Two-frame dense flow. Inputs are grayscale in [0,1] of equal size.
inline FlowMap farneback_flow(const GrayImage& a, const GrayImage& b, const FarnebackParams& p = {},
                              double interval_s = 0) {
  using namespace farneback_detail;
  if (a.width() != b.width() || a.height() != b.height())
    throw PreconditionError("farneback_flow: dimension mismatch");
  const int radius = p.poly_n / 2;
  const auto min_side = static_cast<std::uint32_t>(2 * radius + 1);
  if (a.short_side() < min_side) throw PreconditionError("farneback_flow: image smaller than window support");

  // Work in 8-bit intensity units so the solver's regularizer has the same
  // scale as in the reference implementation.
  auto to_units = [](const GrayImage& g) {
    GrayImage o = g;
    for (auto& v : o.buffer()) v *= 255.f;
    return o;
  };
  const GrayImage A = to_units(a), B = to_units(b);

  int levels = std::max(1, p.levels);
  while (levels > 1) {
    const double s = std::pow(p.pyr_scale, levels - 1);
    if (std::lround(a.short_side() * s) >= static_cast<long>(2 * min_side)) break;
    --levels;
  }

  FlowMap flow;
  for (int lvl = levels - 1; lvl >= 0; --lvl) {
    const double s = std::pow(p.pyr_scale, lvl);
    const GrayImage la = pyramid_level(A, s);
    const GrayImage lb = pyramid_level(B, s);
    if (flow.width == 0)
      flow = FlowMap(la.width(), la.height());
    else
      flow = upscale_flow(flow, la.width(), la.height());
    const PolyPlanes r1 = poly_expand(la, radius, p.poly_sigma);
    const PolyPlanes r2 = poly_expand(lb, radius, p.poly_sigma);
    for (int it = 0; it < p.iterations; ++it) refine(r1, r2, flow, p.window_sigma);
  }
  flow.interval_s = interval_s;
  for (std::size_t i = 0; i < flow.u.size(); ++i) {
    if (!std::isfinite(flow.u[i]) || !std::isfinite(flow.v[i])) flow.u[i] = flow.v[i] = 0.f;
  }
  return flow;
}

// Pluggable flow estimator; a learned estimator can implement the same
// contract.
class FlowBackend {
 public:
  virtual ~FlowBackend() = default;
  virtual FlowMap compute(const GrayImage& a, const GrayImage& b, double interval_s) = 0;
};

class FarnebackBackend final : public FlowBackend {
 public:
  explicit FarnebackBackend(FarnebackParams p = {}) : params_(p) {}
  FlowMap compute(const GrayImage& a, const GrayImage& b, double interval_s) override {
    return farneback_flow(a, b, params_, interval_s);
  }

 private:
  FarnebackParams params_;
};

// ---------------------------------------------------------------------------
// Storage

struct StoredFlow {
  FlowMap map;
  std::string clip_id;
  std::uint32_t pair_index = 0;
  // Source was already smaller than the storage resolution.
  bool below_target = false;

  bool operator==(const StoredFlow&) const = default;
};

// Block-mean of u and v so the short side becomes `target_short`. Vectors
// keep their source-grid pixel units; they are not rescaled.
inline StoredFlow downscale_flow(const FlowMap& f, std::uint32_t target_short = 16) {
  StoredFlow out;
  if (f.short_side() < target_short) {
    out.map = f;
    out.below_target = true;
    return out;
  }
  const auto s = fit_short_side(f.width, f.height, target_short);
  const GrayImage u(f.width, f.height, std::vector<float>(f.u));
  const GrayImage v(f.width, f.height, std::vector<float>(f.v));
  const GrayImage du = resize_area(u, s.width, s.height);
  const GrayImage dv = resize_area(v, s.width, s.height);
  out.map = FlowMap(s.width, s.height, f.interval_s);
  out.map.u = du.buffer();
  out.map.v = dv.buffer();
  return out;
}

// Mean flow magnitude over all maps and pixels, divided by the short side of
// the grid the flow was computed on. Magnitudes below 1e-6 count as zero.
inline double motion_score(const std::vector<StoredFlow>& flows, std::uint32_t compute_short_side) {
  if (flows.empty()) throw PreconditionError("motion_score: no flow maps");
  if (compute_short_side == 0) throw PreconditionError("motion_score: zero grid size");
  // Per-map partial sums, combined in sorted order so the result does not
  // depend on the order of `flows`.
  std::vector<std::pair<double, std::size_t>> parts;
  parts.reserve(flows.size());
  for (const auto& sf : flows) {
    double acc = 0;
    for (std::size_t i = 0; i < sf.map.u.size(); ++i) {
      const double m = std::hypot(static_cast<double>(sf.map.u[i]), static_cast<double>(sf.map.v[i]));
      if (m >= 1e-6) acc += m;
    }
    parts.emplace_back(acc, sf.map.u.size());
  }
  std::sort(parts.begin(), parts.end());
  double total = 0;
  std::size_t count = 0;
  for (const auto& [s, n] : parts) {
    total += s;
    count += n;
  }
  if (count == 0) return 0.0;
  return total / static_cast<double>(count) / compute_short_side;
}

// `.flow` file: 16-byte header then little-endian f32 planes (u, then v).
//   bytes 0-3   magic "VCFL"
//   bytes 4-7   width  (u32 LE)
//   bytes 8-11  height (u32 LE)
//   bytes 12-15 interval in milliseconds (u32 LE, rounded)
inline constexpr char kFlowMagic[4] = {'V', 'C', 'F', 'L'};

namespace detail {

inline void put_u32(std::ostream& o, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  o.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated flow file");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

inline void write_flow(const FlowMap& f, std::ostream& o) {
  o.write(kFlowMagic, 4);
  detail::put_u32(o, f.width);
  detail::put_u32(o, f.height);
  detail::put_u32(o, static_cast<std::uint32_t>(std::lround(f.interval_s * 1000.0)));
  for (const auto* plane : {&f.u, &f.v})
    for (float x : *plane) detail::put_u32(o, std::bit_cast<std::uint32_t>(x));
}

inline FlowMap read_flow(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kFlowMagic, 4) != 0) throw FormatError("bad flow magic");
  const std::uint32_t w = detail::get_u32(in);
  const std::uint32_t h = detail::get_u32(in);
  const std::uint32_t ms = detail::get_u32(in);
  if (w == 0 || h == 0 || static_cast<std::uint64_t>(w) * h > (1u << 28)) throw FormatError("bad flow dimensions");
  FlowMap f(w, h, ms / 1000.0);
  for (auto* plane : {&f.u, &f.v})
    for (auto& x : *plane) x = std::bit_cast<float>(detail::get_u32(in));
  return f;
}

inline void save_flow(const FlowMap& f, const std::filesystem::path& path) {
  std::ofstream o(path, std::ios::binary | std::ios::trunc);
  if (!o) throw Error("cannot write " + path.string());
  write_flow(f, o);
}

inline FlowMap load_flow(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_flow(in);
}

// ---------------------------------------------------------------------------
// Per-clip motion

struct MotionConfig {
  double sample_fps = 2.0;
  std::uint32_t compute_short_side = 128;
  std::uint32_t store_short_side = 16;
};

struct ClipMotion {
  double score = 0;
  bool too_short = false;
  std::uint32_t compute_short_side = 0;
  std::vector<StoredFlow> flows;
};

// Samples the span at cfg.sample_fps, computes flow between consecutive
// samples on frames shrunk to cfg.compute_short_side, stores downscaled maps
// and reduces them to the clip's motion score. Fewer than two samples give
// score 0 with too_short set.
inline ClipMotion clip_motion(FrameSource& source, double start_s, double end_s, FlowBackend& backend,
                              const MotionConfig& cfg = {}, const std::string& clip_id = {}) {
  const double rate = std::min(cfg.sample_fps, source.fps());
  FpsSampler sampler(source, rate, start_s, end_s);
  ClipMotion out;
  std::optional<Frame> prev;
  std::optional<GrayImage> prev_gray;
  std::uint32_t pair = 0;
  while (auto f = sampler.next()) {
    GrayImage g = to_gray(shrink_to_short_side(f->pixels, cfg.compute_short_side));
    if (prev_gray) {
      FlowMap fm = backend.compute(*prev_gray, g, f->t_s - prev->t_s);
      out.compute_short_side = fm.short_side();
      StoredFlow sf = downscale_flow(fm, cfg.store_short_side);
      sf.clip_id = clip_id;
      sf.pair_index = pair++;
      out.flows.push_back(std::move(sf));
    }
    prev_gray = std::move(g);
    prev = std::move(f);
  }
  if (out.flows.empty()) {
    out.too_short = true;
    out.score = 0.0;
    return out;
  }
  out.score = motion_score(out.flows, out.compute_short_side);
  return out;
}

}  // namespace vidcurate
