#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "vidcurate/optical_flow.hpp"

using namespace vidcurate;

namespace {

// Mean endpoint error against a constant true flow, skipping a border where
// content enters the frame.
double mean_error(const FlowMap& f, double tx, double ty, std::uint32_t border = 8) {
  double acc = 0;
  std::size_t n = 0;
  for (std::uint32_t y = border; y + border < f.height; ++y)
    for (std::uint32_t x = border; x + border < f.width; ++x) {
      acc += std::hypot(f.u_at(x, y) - tx, f.v_at(x, y) - ty);
      ++n;
    }
  return acc / static_cast<double>(n);
}

}  // namespace

TEST(Farneback, RecoversIntegerTranslation) {
  const auto a = fixture::textured(1, 96, 72, 0, 0);
  const auto b = fixture::textured(1, 96, 72, 2, 0);
  EXPECT_LE(mean_error(farneback_flow(a, b), 2, 0), 0.25);
}

TEST(Farneback, RecoversSubpixelDiagonal) {
  const auto a = fixture::textured(2, 96, 72, 0, 0);
  const auto b = fixture::textured(2, 96, 72, 1.3, -0.7);
  EXPECT_LE(mean_error(farneback_flow(a, b), 1.3, -0.7), 0.3);
}

TEST(Farneback, IdenticalFramesGiveZeroFlow) {
  const auto a = fixture::textured(3, 64, 48, 0, 0);
  const auto f = farneback_flow(a, a);
  for (float u : f.u) EXPECT_EQ(u, 0.f);
  for (float v : f.v) EXPECT_EQ(v, 0.f);
  EXPECT_DOUBLE_EQ(motion_score({downscale_flow(f)}, 48), 0.0);
}

TEST(Farneback, AgreesWithBlockMatching) {
  const auto a = fixture::textured(4, 80, 64, 0, 0);
  const auto b = fixture::textured(4, 80, 64, -1.5, 2.25);
  const auto f = farneback_flow(a, b);
  std::vector<double> d;
  for (int y = 12; y < 52; y += 6)
    for (int x = 12; x < 68; x += 6) {
      const auto m = oracle::block_match(a, b, x, y);
      d.push_back(std::hypot(m.x - f.u_at(x, y), m.y - f.v_at(x, y)));
    }
  std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
  EXPECT_LE(d[d.size() / 2], 0.5);
}

TEST(Storage, DownscaleKeepsPixelUnitsAndShape) {
  FlowMap f(128, 96);
  std::fill(f.u.begin(), f.u.end(), 3.f);
  std::fill(f.v.begin(), f.v.end(), -1.f);
  const auto s = downscale_flow(f, 16);
  EXPECT_EQ(s.map.height, 16u);
  EXPECT_EQ(s.map.width, 21u);
  EXPECT_FLOAT_EQ(s.map.u[5], 3.f);
  EXPECT_FLOAT_EQ(s.map.v[5], -1.f);
  EXPECT_FALSE(s.below_target);
  EXPECT_TRUE(downscale_flow(FlowMap(10, 8), 16).below_target);
}

TEST(Storage, FlowFileRoundTrip) {
  FlowMap f(5, 4, 0.5);
  for (std::size_t i = 0; i < f.u.size(); ++i) {
    f.u[i] = static_cast<float>(i) * 0.25f;
    f.v[i] = -static_cast<float>(i);
  }
  std::stringstream s;
  write_flow(f, s);
  EXPECT_EQ(read_flow(s), f);
  std::stringstream bad("VCFX0000");
  EXPECT_THROW(read_flow(bad), FormatError);
}

TEST(MotionScore, NormalizedByComputeGrid) {
  FlowMap f(20, 16);
  std::fill(f.u.begin(), f.u.end(), 3.f);
  std::fill(f.v.begin(), f.v.end(), 4.f);
  StoredFlow s{f, "c", 0, false};
  EXPECT_DOUBLE_EQ(motion_score({s}, 100), 0.05);
  EXPECT_THROW(motion_score({}, 100), PreconditionError);
}

TEST(ClipMotion, StaticVersusMovingAndTooShort) {
  FarnebackBackend backend;
  MemorySource still(12, fixture::moving_clip(5, 64, 48, 24, 0, 0));
  const auto s = clip_motion(still, 0, 2, backend);
  EXPECT_FALSE(s.too_short);
  EXPECT_EQ(s.flows.size(), 3u);
  EXPECT_DOUBLE_EQ(s.score, 0.0);

  MemorySource moving(12, fixture::moving_clip(5, 64, 48, 24, 0.5, 0));
  const auto m = clip_motion(moving, 0, 2, backend);
  // 0.5 px/frame at 12 fps sampled at 2 fps is 3 px per pair on a 48 px grid.
  EXPECT_NEAR(m.score, 3.0 / 48, 0.015);

  MemorySource tiny(12, fixture::moving_clip(5, 64, 48, 4, 0.5, 0));
  const auto t = clip_motion(tiny, 0, 0.3, backend);
  EXPECT_TRUE(t.too_short);
  EXPECT_DOUBLE_EQ(t.score, 0.0);
}
