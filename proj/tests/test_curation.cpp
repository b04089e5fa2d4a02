#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "vidcurate/curation.hpp"

using namespace vidcurate;

namespace {

std::vector<ClipRecord> motion_set(const std::vector<std::optional<double>>& scores) {
  std::vector<ClipRecord> out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    auto c = fixture::clip("c" + std::to_string(1000 + i), 0, 2);
    c.motion_score = scores[i];
    out.push_back(c);
  }
  return out;
}

std::set<std::string> ids(const std::vector<ClipRecord>& v) {
  std::set<std::string> s;
  for (const auto& c : v) s.insert(c.clip_id);
  return s;
}

ClipRecord with_frames(std::string id, std::array<std::optional<double>, 3> aes,
                       std::vector<std::vector<double>> sims = {}) {
  auto c = fixture::clip(std::move(id), 0, 2);
  for (std::size_t k = 0; k < 3; ++k) {
    c.frame_scores[k].aesthetics = aes[k];
    if (!sims.empty()) c.frame_scores[k].clip_similarity = sims[k];
  }
  return c;
}

}  // namespace

TEST(AxisScore, AestheticsIsMeanOfFramesOrNull) {
  EXPECT_DOUBLE_EQ(*axis_score(with_frames("a", {4.0, 5.0, 6.0}), Axis::aesthetics), 5.0);
  EXPECT_FALSE(axis_score(with_frames("b", {4.0, std::nullopt, 6.0}), Axis::aesthetics));
}

TEST(AxisScore, ClipSimilarityUsesTheSampledCaption) {
  auto c = with_frames("sim", {1.0, 1.0, 1.0}, {{0.1, 0.2, 0.3}, {0.4, 0.5, 0.6}, {0.7, 0.8, 0.9}});
  c.captions = {{CaptionSource::coca, "x"}, {CaptionSource::vblip, "y"}, {CaptionSource::llm_summary, "z"}};
  const auto k = sample_caption_index(c.captions, caption_seed(c));
  const double want = (c.frame_scores[0].clip_similarity[k] + c.frame_scores[1].clip_similarity[k] +
                       c.frame_scores[2].clip_similarity[k]) / 3;
  EXPECT_NEAR(*axis_score(c, Axis::clip_similarity), want, 1e-15);
  c.captions.clear();
  EXPECT_FALSE(axis_score(c, Axis::clip_similarity));
}

TEST(FilterSpecs, Validation) {
  EXPECT_THROW(validate(FilterSpec{Axis::motion, FilterMode::remove_bottom_fraction, 1.5}), InvariantError);
  EXPECT_THROW(validate(FilterSpec{Axis::motion, FilterMode::remove_bottom_fraction, -0.1}), InvariantError);
  EXPECT_THROW(validate(FilterSpec{Axis::motion, FilterMode::absolute_max, 0.1}), InvariantError);
  EXPECT_NO_THROW(validate(FilterSpec{Axis::text_area, FilterMode::absolute_max, 0.07}));
  EXPECT_THROW(validate(FilterSpec{Axis::motion, FilterMode::remove_bottom_fraction, 0.3}, true), InvariantError);
  CurationProfile p;
  p.filters = {{Axis::motion, FilterMode::remove_bottom_fraction, 0.25},
               {Axis::motion, FilterMode::remove_top_fraction, 0.1}};
  EXPECT_THROW(validate(p), InvariantError);
}

TEST(PercentileFilter, MatchesSortOracleWithTiesAndNulls) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::optional<double>> scores;
    const auto n = 1 + rng.below(60);
    for (std::uint64_t i = 0; i < n; ++i) {
      const auto r = rng.below(10);
      if (r == 0)
        scores.push_back(std::nullopt);
      else
        scores.push_back(static_cast<double>(rng.below(8)) / 8);  // heavy ties
    }
    const auto recs = motion_set(scores);
    std::vector<std::pair<std::string, std::optional<double>>> flat;
    for (const auto& r : recs) flat.push_back({r.clip_id, r.motion_score});
    for (double f : {0.0, 0.125, 0.25, 0.5, 0.9}) {
      for (auto dir : {Direction::bottom, Direction::top}) {
        const auto r = percentile_filter(recs, Axis::motion, f, dir);
        EXPECT_EQ(ids(r.removed), oracle::fraction_filter_removed(flat, f, dir == Direction::bottom));
        EXPECT_EQ(r.kept.size() + r.removed.size(), recs.size());
      }
    }
  }
}

TEST(PercentileFilter, KeptStaysInInputOrderAndUnscoredIsFlagged) {
  const auto recs = motion_set({0.5, std::nullopt, 0.1, 0.9, 0.3});
  const auto r = percentile_filter(recs, Axis::motion, 0.25);
  ASSERT_EQ(r.kept.size(), 3u);
  EXPECT_EQ(r.kept[0].clip_id, "c1000");
  EXPECT_EQ(r.kept[1].clip_id, "c1003");
  EXPECT_EQ(r.kept[2].clip_id, "c1004");
  ASSERT_EQ(r.removed.size(), 2u);
  EXPECT_TRUE(r.removed[0].flags.count("unscored"));
  EXPECT_FALSE(r.rejections[0].score);
  EXPECT_DOUBLE_EQ(*r.rejections[1].score, 0.1);
}

TEST(PercentileFilter, NonFiniteCountsAsUnscored) {
  const auto recs = motion_set({std::numeric_limits<double>::quiet_NaN(), 0.2, 0.3, 0.4});
  const auto r = percentile_filter(recs, Axis::motion, 0.0);
  ASSERT_EQ(r.removed.size(), 1u);
  EXPECT_EQ(r.removed[0].clip_id, "c1000");
}

TEST(PercentileFilter, DuplicateIdsRejected) {
  auto recs = motion_set({0.1, 0.2});
  recs[1].clip_id = recs[0].clip_id;
  EXPECT_THROW(percentile_filter(recs, Axis::motion, 0.5), PreconditionError);
}

TEST(AbsoluteMax, StrictGreaterThan) {
  std::vector<ClipRecord> recs;
  for (double v : {0.0, 0.069, 0.07, 0.0701, 0.5}) {
    auto c = fixture::clip("t" + std::to_string(recs.size()), 0, 2);
    c.text_area_ratio = v;
    recs.push_back(c);
  }
  const auto r = apply_filter(recs, {Axis::text_area, FilterMode::absolute_max, 0.07});
  EXPECT_EQ(ids(r.removed), (std::set<std::string>{"t3", "t4"}));
}

TEST(Calibration, SizesAndNesting) {
  std::vector<std::optional<double>> s;
  for (int i = 0; i < 80; ++i) s.push_back(std::fmod(i * 37.0, 80.0));
  const auto sub = build_calibration_subsets(motion_set(s), Axis::motion);
  EXPECT_EQ(sub[0].size(), 80u);
  EXPECT_EQ(sub[1].size(), 70u);
  EXPECT_EQ(sub[2].size(), 60u);
  EXPECT_EQ(sub[3].size(), 40u);
  for (std::size_t i = 1; i < 4; ++i) {
    const auto a = ids(sub[i]), b = ids(sub[i - 1]);
    EXPECT_TRUE(std::includes(b.begin(), b.end(), a.begin(), a.end()));
  }
}

TEST(Profile, EmptyProfileKeepsEverything) {
  const auto recs = motion_set({std::nullopt, 0.1});
  CurationProfile p;
  const auto r = apply_profile(recs, p);
  EXPECT_EQ(r.kept, recs);
  EXPECT_TRUE(r.rejections.empty());
}

TEST(Profile, KeptSetDoesNotDependOnInputOrder) {
  Rng rng(8);
  std::vector<ClipRecord> recs;
  for (int i = 0; i < 60; ++i) {
    auto c = with_frames("p" + std::to_string(i), {rng.uniform(), rng.uniform(), rng.uniform()});
    c.motion_score = rng.uniform();
    c.text_area_ratio = rng.uniform() * 0.14;
    recs.push_back(c);
  }
  CurationProfile p;
  p.filters = {{Axis::motion, FilterMode::remove_bottom_fraction, 0.25},
               {Axis::aesthetics, FilterMode::remove_bottom_fraction, 0.25},
               {Axis::text_area, FilterMode::absolute_max, 0.07}};
  const auto a = apply_profile(recs, p);
  auto shuffled = recs;
  rng.shuffle(shuffled);
  const auto b = apply_profile(shuffled, p);
  EXPECT_EQ(ids(a.kept), ids(b.kept));
  EXPECT_EQ(a.removed_per_axis, b.removed_per_axis);
  EXPECT_EQ(a.kept.size() + a.rejections.size(), recs.size());
}

TEST(Profile, ConfigParsingAndErrors) {
  const auto p = profile_from_config(Config::parse_string(
      "[caption]\ncoca=1\nvblip=0\nllm_summary=0\n[filter]\naxis=motion\nmode=remove_bottom_fraction\nparameter=0.25\n"));
  ASSERT_EQ(p.filters.size(), 1u);
  EXPECT_DOUBLE_EQ(p.caption_weights.coca, 1.0);
  EXPECT_EQ(profile_from_config(Config::parse_string(profile_to_string(default_profile()))).filters,
            default_profile().filters);
  EXPECT_THROW(profile_from_config(Config::parse_string("[filter]\naxis=motion\n")), ConfigError);
  EXPECT_THROW(profile_from_config(Config::parse_string("[filter]\naxis=speed\nmode=absolute_max\nparameter=1\n")),
               ConfigError);
  EXPECT_THROW(profile_from_config(Config::parse_string("[caption]\ncoca=0\nvblip=0\nllm_summary=0\n")), ConfigError);
}

TEST(Report, NullForUnscored) {
  std::ostringstream o;
  write_rejection_report({{"a", Axis::motion, 0.5}, {"b", Axis::aesthetics, std::nullopt}}, o);
  EXPECT_EQ(o.str(), "a\tmotion\t0.5\nb\taesthetics\tnull\n");
}
