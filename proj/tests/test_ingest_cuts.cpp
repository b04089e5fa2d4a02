#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "vidcurate/cut_detect.hpp"
#include "vidcurate/ingest.hpp"
#include "vidcurate/synth.hpp"

using namespace vidcurate;

TEST(Y4m, RoundTripWithinChromaRounding) {
  const auto dir = fixture::temp_dir("y4m");
  const auto frames = fixture::moving_clip(3, 32, 24, 5, 1, 0);
  for (auto chroma : {ChromaFormat::c444, ChromaFormat::c420}) {
    const auto p = dir / (chroma == ChromaFormat::c444 ? "a.y4m" : "b.y4m");
    {
      Y4mWriter w(p, 32, 24, 25, 1, chroma);
      for (const auto& f : frames) w.write(f);
    }
    Y4mSource src(p);
    EXPECT_EQ(src.frame_count(), 5u);
    EXPECT_DOUBLE_EQ(src.fps(), 25.0);
    const auto back = read_frame(src, 3);
    EXPECT_EQ(back.index, 3u);
    int worst = 0;
    for (std::size_t i = 0; i < back.pixels.buffer().size(); ++i)
      worst = std::max(worst, std::abs(back.pixels.buffer()[i] - frames[3].buffer()[i]));
    EXPECT_LE(worst, chroma == ChromaFormat::c444 ? 2 : 40);
  }
  std::filesystem::remove_all(dir);
}

TEST(Y4m, TruncatedFileIsAFormatError) {
  const auto dir = fixture::temp_dir("y4mtrunc");
  const auto p = dir / "t.y4m";
  {
    Y4mWriter w(p, 16, 16, 10);
    w.write(fixture::solid(16, 16, 0.5, 0.5, 0.5));
  }
  std::filesystem::resize_file(p, std::filesystem::file_size(p) - 7);
  Y4mSource src(p);
  EXPECT_TRUE(src.truncated());
  EXPECT_EQ(src.frame_count(), 0u);
  EXPECT_THROW(src.next(), FormatError);
  EXPECT_THROW(parse_y4m_header("YUV4MPEG2 W16 F25:1"), FormatError);
  std::filesystem::remove_all(dir);
}

TEST(Keyframes, SidecarParsing) {
  std::istringstream in("1.0\n2.5\n\n");
  EXPECT_EQ(parse_keyframe_index(in), (std::vector<double>{0.0, 1.0, 2.5}));
  std::istringstream bad("2\n1\n");
  EXPECT_THROW(parse_keyframe_index(bad), FormatError);
}

TEST(Sampling, IndicesAtTargetRate) {
  EXPECT_EQ(sample_indices(24, 48, 2, 0, 2), (std::vector<std::uint64_t>{0, 12, 24, 36}));
  EXPECT_EQ(sample_indices(24, 48, 24, 0.5, 0.6).size(), 3u);
  EXPECT_THROW(sample_indices(24, 48, 30, 0, 2), PreconditionError);
  // Rounding to the nearest native frame never duplicates an index.
  const auto idx = sample_indices(10, 100, 7, 0, 10);
  for (std::size_t i = 1; i < idx.size(); ++i) EXPECT_LT(idx[i - 1], idx[i]);
}

TEST(CutDetect, IdenticalFramesHaveZeroDelta) {
  const auto a = fixture::solid(16, 16, 0.2, 0.4, 0.6);
  EXPECT_DOUBLE_EQ(frame_delta(to_hsv(a), to_hsv(a)), 0.0);
  const auto b = fixture::solid(16, 16, 1, 1, 1);
  EXPECT_GT(frame_delta(to_hsv(a), to_hsv(b)), 0.11);
}

TEST(CutDetect, NativeMissesFadeCascadeFindsIt) {
  const auto frames = fixture::FadeFixture::frames();
  MemorySource src(fixture::FadeFixture::kFps, frames);
  std::vector<Frame> all = collect(sample_at_fps(src, fixture::FadeFixture::kFps));
  const auto native = detect_single(all, 0.11, 1.0);
  ASSERT_EQ(native.size(), 1u);
  EXPECT_NEAR(native[0], fixture::FadeFixture::kHardCut, 1.0 / 24);

  MemorySource src2(fixture::FadeFixture::kFps, frames);
  const auto cl = detect_cascade(src2, CascadeConfig{});
  ASSERT_EQ(cl.cuts.size(), 2u);
  EXPECT_EQ(cl.cuts[0].level, DetectorLevel::native);
  EXPECT_NEAR(cl.cuts[0].t_s, fixture::FadeFixture::kHardCut, 1.0 / 24);
  EXPECT_NE(cl.cuts[1].level, DetectorLevel::native);
  const double mid = 0.5 * (fixture::FadeFixture::kFadeStart + fixture::FadeFixture::kFadeEnd);
  EXPECT_NEAR(cl.cuts[1].t_s, mid, 0.5);
}

TEST(CutDetect, MinSceneSuppressesFlicker) {
  std::vector<RgbImage> f;
  for (int i = 0; i < 40; ++i) f.push_back(i % 2 ? fixture::solid(16, 16, 1, 0, 0) : fixture::solid(16, 16, 0, 0, 1));
  MemorySource src(10, f);
  const auto frames = collect(sample_at_fps(src, 10));
  const auto cuts = detect_single(frames, 0.11, 1.0);
  for (std::size_t i = 1; i < cuts.size(); ++i) EXPECT_GE(cuts[i] - cuts[i - 1], 1.0 - 1e-9);
}

TEST(CutDetect, SyntheticCorpusCutsAllFound) {
  SynthCorpusSpec spec;
  spec.videos = 2;
  for (const auto& v : make_corpus(spec)) {
    MemorySource src(v.fps, render_video(v));
    const auto cl = detect_cascade(src, CascadeConfig{}, v.video_id);
    const auto want = v.cut_times();
    ASSERT_EQ(cl.cuts.size(), want.size()) << v.video_id;
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(cl.cuts[i].t_s, want[i], 1.0 / v.fps);
  }
}

TEST(CutsTsv, RoundTrip) {
  std::vector<CutList> lists{{"a", {{1.25, DetectorLevel::native}, {3.5, DetectorLevel::low}}}, {"b", {}}};
  std::stringstream s;
  write_cuts(lists, s);
  EXPECT_EQ(read_cuts(s, {"a", "b"}), lists);
  std::istringstream bad("a\t1.0\n");
  EXPECT_THROW(read_cuts(bad, {"a"}), FormatError);
}

TEST(PlanClips, StartsSnapForwardToKeyframes) {
  const auto p = plan_clips({2.2, 5.0}, {0, 1, 2, 3, 4, 5, 6, 7}, 8.0, 1.0);
  ASSERT_EQ(p.spans.size(), 3u);
  EXPECT_EQ(p.spans[0], (Span{0, 2.2}));
  EXPECT_EQ(p.spans[1], (Span{3, 5}));
  EXPECT_EQ(p.spans[2], (Span{5, 8}));
}

TEST(PlanClips, ShortSpansDropped) {
  const auto p = plan_clips({2.6}, {0, 2, 3}, 3.5, 1.0);
  ASSERT_EQ(p.spans.size(), 1u);
  EXPECT_EQ(p.spans[0], (Span{0, 2.6}));
  EXPECT_THROW(plan_clips({}, {0.5}, 3, 1), PreconditionError);
}

TEST(PlanClips, MatchesBruteForceOracle) {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const double dur = 5 + rng.uniform() * 30;
    std::vector<double> kf{0};
    for (double t = 0;;) {
      t += 0.2 + rng.uniform() * 2.5;
      if (t >= dur) break;
      kf.push_back(std::round(t * 24) / 24);
    }
    kf.erase(std::unique(kf.begin(), kf.end()), kf.end());
    std::vector<double> cuts;
    const auto nc = rng.below(8);
    for (std::uint64_t i = 0; i < nc; ++i) cuts.push_back(std::round(rng.uniform() * dur * 24) / 24);
    if (rng.coin() && kf.size() > 2) cuts.push_back(kf[1 + rng.below(kf.size() - 1)]);  // cut on a keyframe
    std::sort(cuts.begin(), cuts.end());
    const double min_len = rng.coin() ? 1.0 : 0.0;
    const auto got = plan_clips(cuts, kf, dur, min_len);
    EXPECT_EQ(got.spans, oracle::plan_clips_brute(cuts, kf, dur, min_len)) << "trial " << trial;
  }
}

TEST(ClipMultiplier, Ratio) {
  EXPECT_DOUBLE_EQ(clip_multiplier(4, 10), 2.5);
  EXPECT_THROW(clip_multiplier(0, 3), PreconditionError);
}
