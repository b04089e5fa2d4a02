#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "vidcurate/curation.hpp"
#include "vidcurate/pipeline.hpp"
#include "vidcurate/synth.hpp"

using namespace vidcurate;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Journal, ResumesAndDropsTornTail) {
  const auto dir = fixture::temp_dir("journal");
  const auto p = dir / "j";
  {
    Journal j(p);
    j.put("k1", "one");
    j.put("k2", "two\tstill two");
  }
  {
    std::ofstream out(p, std::ios::app | std::ios::binary);
    out << "k3\tpart";
  }
  Journal j(p);
  EXPECT_EQ(j.size(), 2u);
  EXPECT_EQ(*j.find("k2"), "two\tstill two");
  EXPECT_FALSE(j.find("k3"));
  j.put("k3", "whole");
  EXPECT_EQ(Journal(p).find("k3"), "whole");
  Journal none;
  none.put("x", "y");
  EXPECT_FALSE(none.find("x"));
  std::filesystem::remove_all(dir);
}

TEST(Commands, PlaceholdersAreShellQuoted) {
  EXPECT_EQ(render_command("cp {in} {out}", {{"in", "a b"}, {"out", "it's"}}), "cp 'a b' 'it'\\''s'");
  EXPECT_EQ(render_command("{x}{x}", {{"x", "1"}}), "'1''1'");
  EXPECT_EQ(render_command("keep {y}", {}), "keep {y}");
  EXPECT_EQ(clip_id_for("vid", 7), "vid-007");
}

TEST(Settings, DefaultsAndErrors) {
  const auto d = settings_from_config(Config::parse_string(""));
  EXPECT_DOUBLE_EQ(d.cascade.levels[0].threshold, 0.11);
  EXPECT_DOUBLE_EQ(d.cascade.levels[1].fps, 8.0);
  EXPECT_DOUBLE_EQ(d.cascade.levels[2].threshold, 0.18);
  EXPECT_DOUBLE_EQ(d.motion.sample_fps, 2.0);
  EXPECT_EQ(d.motion.store_short_side, 16u);
  const auto e = settings_from_config(Config::parse_string("[ingest]\nextensions = y4m, .mkv\n"));
  EXPECT_EQ(e.ingest_extensions, (std::vector<std::string>{".y4m", ".mkv"}));
  for (const char* bad : {"[cut_detect]\nnative_threshold = 1.5\n", "[cut_detect]\nlow_fps = 10\n",
                          "[optical_flow]\nsample_fps = 0\n", "[frame_scoring]\nembedding_provider = magic\n",
                          "[frame_scoring]\nembedding_provider = http\n", "[captioning]\nbackend = http\n",
                          "[optical_flow]\niterations = many\n"})
    EXPECT_THROW(settings_from_config(Config::parse_string(bad)), ConfigError) << bad;
}

TEST(Settings, ShippedDefaultConfigLoads) {
  const auto c = Config::load(std::filesystem::path(VIDCURATE_SOURCE_DIR) / "config" / "default.ini");
  const auto s = settings_from_config(c);
  const auto d = settings_from_config(Config::parse_string(""));
  EXPECT_EQ(s.cascade.levels, d.cascade.levels);
  EXPECT_EQ(profile_from_config(c).filters, default_profile().filters);
}

TEST(Pipeline, EndToEndOnSyntheticCorpusAndResume) {
  const auto dir = fixture::temp_dir("pipeline");
  SynthCorpusSpec spec;
  spec.videos = 2;
  spec.shots_per_video = 3;
  const auto corpus = make_corpus(spec);
  write_corpus(corpus, dir / "in");

  PipelineSettings s;
  std::ostringstream log;
  const auto videos = ingest_dir(dir / "in", s, dir / "work", log);
  ASSERT_EQ(videos.size(), 2u);
  EXPECT_TRUE(std::filesystem::exists(dir / "work" / "keyframes" / (videos[0].video_id + ".kf.txt")));

  Journal none;
  const auto cuts = run_cuts(videos, s, 2, none);
  std::size_t ncuts = 0;
  for (const auto& c : cuts) ncuts += c.cuts.size();
  EXPECT_EQ(ncuts, 4u);
  const auto clips = run_clip(videos, cuts, s, dir / "clips");
  ASSERT_EQ(clips.clips.size(), 6u);
  EXPECT_EQ(clips.clips[0].clip_id, videos[0].video_id + "-000");
  EXPECT_NE(clips.extract_script.find("ffmpeg"), std::string::npos);

  StageStats st;
  const auto flow_journal = dir / "flow.journal";
  std::vector<ClipRecord> flowed;
  {
    Journal j(flow_journal);
    flowed = run_flow(clips.clips, videos, s, 2, j, dir / "flow", &st);
  }
  EXPECT_EQ(st.computed, 6u);
  for (const auto& c : flowed) EXPECT_TRUE(c.motion_score);
  {
    Journal j(flow_journal);
    EXPECT_EQ(run_flow(clips.clips, videos, s, 2, j, dir / "flow", &st), flowed);
  }
  EXPECT_EQ(st.resumed, 6u);

  Journal j2;
  const auto captioned = run_caption(flowed, videos, s, 2, j2);
  for (const auto& c : captioned) EXPECT_EQ(c.captions.size(), 3u);
  const auto scored = run_score(captioned, videos, s, 2, j2);
  for (const auto& c : scored) {
    EXPECT_TRUE(c.text_area_ratio);
    EXPECT_TRUE(axis_score(c, Axis::aesthetics));
    EXPECT_TRUE(axis_score(c, Axis::clip_similarity));
  }

  // An empty profile is the identity, byte for byte.
  write_manifest(scored, dir / "scored.manifest");
  const auto back = read_manifest(dir / "scored.manifest", ParseMode::strict).records;
  const auto r = apply_profile(back, CurationProfile{});
  write_manifest(r.kept, dir / "kept.manifest");
  EXPECT_EQ(slurp(dir / "kept.manifest"), slurp(dir / "scored.manifest"));
  std::filesystem::remove_all(dir);
}
