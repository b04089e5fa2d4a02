// vidcurate: pipeline driver and study administration.
//
// Work directory layout (all stage outputs are line-delimited):
//   videos.jsonl  keyframes/  cuts.tsv  clips.manifest  extract.sh
//   flow.manifest  flow/  captioned.manifest  scored.manifest
//   curated.manifest  rejections.tsv  calibration/

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "vidcurate/curation.hpp"
#include "vidcurate/pipeline.hpp"
#include "vidcurate/stats.hpp"
#include "vidcurate/study_service.hpp"
#include "vidcurate/synth.hpp"

namespace fs = std::filesystem;
using namespace vidcurate;

namespace {

struct Globals {
  std::string config_path;
  std::string work_dir;
  int jobs = -1;
  Config config;
  PipelineSettings settings;

  fs::path work() const { return work_dir; }
  unsigned worker_count() const {
    long long j = jobs >= 0 ? jobs : config.get_int("pipeline", "jobs", 0);
    if (j < 0) throw ConfigError("jobs must be >= 0");
    if (j == 0) j = std::max(1u, std::thread::hardware_concurrency());
    return static_cast<unsigned>(j);
  }
};

void log_line(const std::string& s) { std::cerr << "vidcurate: " << s << '\n'; }

fs::path or_default(const std::string& flag, const fs::path& def) { return flag.empty() ? def : fs::path(flag); }

std::vector<ClipRecord> load_clips(const fs::path& p) {
  auto r = read_manifest(p);
  for (const auto& e : r.errors) log_line(p.string() + ": skipped " + e.what());
  return std::move(r.records);
}

std::vector<VideoRecord> load_videos(const fs::path& p) {
  auto r = read_videos(p, ParseMode::strict);
  return std::move(r.records);
}

void log_stage(const std::string& stage, std::size_t n, const StageStats& st, const fs::path& out) {
  log_line(stage + ": " + std::to_string(n) + " items (" + std::to_string(st.computed) + " computed, " +
           std::to_string(st.resumed) + " resumed) -> " + out.string());
}

// ---------------------------------------------------------------------------
// stages

void cmd_ingest(const Globals& g, const fs::path& dir) {
  fs::create_directories(g.work());
  const auto videos = ingest_dir(dir, g.settings, g.work());
  const auto out = g.work() / "videos.jsonl";
  write_videos(videos, out);
  log_line("ingest: " + std::to_string(videos.size()) + " videos -> " + out.string());
}

void cmd_cuts(const Globals& g, const std::string& in_flag, const std::string& out_flag) {
  const auto in = or_default(in_flag, g.work() / "videos.jsonl");
  const auto out = or_default(out_flag, g.work() / "cuts.tsv");
  const auto videos = load_videos(in);
  Journal journal(journal_path(out));
  StageStats st;
  const auto cuts = run_cuts(videos, g.settings, g.worker_count(), journal, &st);
  std::ostringstream buf;
  write_cuts(cuts, buf);
  {
    std::ofstream o(out.string() + ".tmp", std::ios::binary | std::ios::trunc);
    o << buf.str();
    if (!o.flush()) throw Error("cannot write " + out.string());
  }
  fs::rename(out.string() + ".tmp", out);
  std::size_t n = 0;
  for (const auto& c : cuts) n += c.cuts.size();
  log_stage("cuts", videos.size(), st, out);
  log_line("cuts: " + std::to_string(n) + " cuts");
}

void cmd_clip(const Globals& g, const std::string& videos_flag, const std::string& cuts_flag,
              const std::string& out_flag) {
  const auto videos = load_videos(or_default(videos_flag, g.work() / "videos.jsonl"));
  const auto cuts_path = or_default(cuts_flag, g.work() / "cuts.tsv");
  std::ifstream cin_(cuts_path);
  if (!cin_) throw Error("cannot open " + cuts_path.string());
  std::vector<std::string> ids;
  for (const auto& v : videos) ids.push_back(v.video_id);
  const auto cuts = read_cuts(cin_, ids);
  const auto out = or_default(out_flag, g.work() / "clips.manifest");
  const auto r = run_clip(videos, cuts, g.settings, g.work() / "clips");
  write_manifest(r.clips, out);
  const auto script = out.parent_path() / "extract.sh";
  {
    std::ofstream o(script, std::ios::binary | std::ios::trunc);
    o << r.extract_script;
    if (!o.flush()) throw Error("cannot write " + script.string());
  }
  fs::permissions(script, fs::perms::owner_exec | fs::perms::group_exec | fs::perms::others_exec,
                  fs::perm_options::add);
  char mult[32];
  std::snprintf(mult, sizeof mult, "%.3f", videos.empty() ? 0.0 : clip_multiplier(videos.size(), r.clips.size()));
  log_line("clip: " + std::to_string(r.clips.size()) + " clips from " + std::to_string(videos.size()) +
           " videos (clip multiplier " + mult + ") -> " + out.string());
}

void cmd_clip_stage(const Globals& g, const std::string& name, const std::string& in_flag,
                    const std::string& out_flag, const fs::path& def_in, const fs::path& def_out,
                    const std::function<std::vector<ClipRecord>(const std::vector<ClipRecord>&,
                                                                const std::vector<VideoRecord>&, Journal&,
                                                                StageStats*)>& run) {
  const auto in = or_default(in_flag, def_in);
  const auto out = or_default(out_flag, def_out);
  const auto clips = load_clips(in);
  const auto videos = load_videos(g.work() / "videos.jsonl");
  Journal journal(journal_path(out));
  StageStats st;
  const auto result = run(clips, videos, journal, &st);
  write_manifest(result, out);
  log_stage(name, result.size(), st, out);
}

void cmd_flow(const Globals& g, const std::string& in, const std::string& out) {
  cmd_clip_stage(g, "flow", in, out, g.work() / "clips.manifest", g.work() / "flow.manifest",
                 [&](const auto& clips, const auto& videos, Journal& j, StageStats* st) {
                   return run_flow(clips, videos, g.settings, g.worker_count(), j, g.work() / "flow", st);
                 });
}

void cmd_caption(const Globals& g, const std::string& in, const std::string& out) {
  cmd_clip_stage(g, "caption", in, out, g.work() / "flow.manifest", g.work() / "captioned.manifest",
                 [&](const auto& clips, const auto& videos, Journal& j, StageStats* st) {
                   return run_caption(clips, videos, g.settings, g.worker_count(), j, st);
                 });
}

void cmd_score(const Globals& g, const std::string& in, const std::string& out) {
  cmd_clip_stage(g, "score", in, out, g.work() / "captioned.manifest", g.work() / "scored.manifest",
                 [&](const auto& clips, const auto& videos, Journal& j, StageStats* st) {
                   return run_score(clips, videos, g.settings, g.worker_count(), j, st);
                 });
}

CurationProfile resolve_profile(const Globals& g, const std::string& profile_flag) {
  if (!profile_flag.empty()) return profile_from_config(Config::load(profile_flag));
  if (!g.config.all("filter").empty() || !g.config.all("caption").empty()) return profile_from_config(g.config);
  return default_profile();
}

void cmd_filter(const Globals& g, const std::string& profile_flag, const std::string& in_flag,
                const std::string& out_flag, const std::string& report_flag) {
  const auto profile = resolve_profile(g, profile_flag);
  const auto in = or_default(in_flag, g.work() / "scored.manifest");
  const auto out = or_default(out_flag, g.work() / "curated.manifest");
  const auto report = or_default(report_flag, out.parent_path() / "rejections.tsv");
  const auto clips = load_clips(in);
  const auto r = apply_profile(clips, profile);
  write_manifest(r.kept, out);
  {
    std::ofstream o(report, std::ios::binary | std::ios::trunc);
    write_rejection_report(r.rejections, o);
    if (!o.flush()) throw Error("cannot write " + report.string());
  }
  for (const auto& f : profile.filters) {
    const auto it = r.removed_per_axis.find(f.axis);
    log_line("filter: " + std::string(to_string(f.axis)) + " " + std::string(to_string(f.mode)) + " " +
             std::to_string(f.parameter) + " removed " + std::to_string(it == r.removed_per_axis.end() ? 0 : it->second));
  }
  log_line("filter: kept " + std::to_string(r.kept.size()) + "/" + std::to_string(clips.size()) + " -> " + out.string());
}

void cmd_calibrate(const Globals& g, const std::string& axis_name, const std::string& in_flag,
                   const std::string& out_flag) {
  const auto axis = parse_axis(axis_name);
  if (!axis) throw ConfigError("unknown axis '" + axis_name + "'");
  const auto in = or_default(in_flag, g.work() / "scored.manifest");
  const auto dir = or_default(out_flag, g.work() / "calibration");
  fs::create_directories(dir);
  const auto clips = load_clips(in);
  const auto profile = resolve_profile(g, "");
  const auto subsets = build_calibration_subsets(clips, *axis, profile.caption_weights);
  static constexpr const char* kSuffix[4] = {"p000", "p125", "p250", "p500"};
  for (std::size_t i = 0; i < subsets.size(); ++i) {
    const auto p = dir / (std::string(to_string(*axis)) + "." + kSuffix[i] + ".manifest");
    write_manifest(subsets[i], p);
    log_line("calibrate: " + p.filename().string() + " " + std::to_string(subsets[i].size()) + " clips");
  }
}

void cmd_stats(const Globals& g, const std::string& in_flag, bool as_json) {
  const auto in = or_default(in_flag, g.work() / "curated.manifest");
  const auto s = compute_stats(load_clips(in));
  if (as_json) {
    nlohmann::ordered_json j{{"clip_count", s.clip_count},
                             {"total_duration_s", s.total_duration_s},
                             {"total_duration_years", s.total_duration_years},
                             {"mean_clip_duration_s", s.mean_clip_duration_s},
                             {"caption_coverage", s.caption_coverage},
                             {"motion_bin_edges", kMotionBinEdges},
                             {"motion_histogram", s.motion_histogram.scored},
                             {"motion_unscored", s.motion_histogram.unscored}};
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << format_stats(s, g.settings.dataset);
  }
}

void cmd_run(const Globals& g, const fs::path& dir) {
  cmd_ingest(g, dir);
  cmd_cuts(g, "", "");
  cmd_clip(g, "", "", "");
  cmd_flow(g, "", "");
  cmd_caption(g, "", "");
  cmd_score(g, "", "");
  cmd_filter(g, "", "", "", "");
  std::cerr << format_stats(compute_stats(load_clips(g.work() / "curated.manifest")), g.settings.dataset);
}

// ---------------------------------------------------------------------------
// study

struct StudyOpts {
  std::string data_dir, bind, media_root;
  std::size_t n_boot = 0;
  std::string port_file;
};

std::string env_or(const char* name, const std::string& flag, const std::string& fallback) {
  if (!flag.empty()) return flag;
  if (const char* v = std::getenv(name); v && *v) return v;
  return fallback;
}

fs::path study_data_dir(const Globals& g, const StudyOpts& o) {
  return env_or("STUDY_DATA_DIR", o.data_dir, g.config.get_string("study", "data_dir", "studies"));
}

std::size_t study_n_boot(const Globals& g, const StudyOpts& o) {
  const long long n = o.n_boot ? static_cast<long long>(o.n_boot) : g.config.get_int("study", "n_boot", 1000);
  if (n < 1) throw ConfigError("study.n_boot must be >= 1");
  return static_cast<std::size_t>(n);
}

std::atomic<httplib::Server*> g_server{nullptr};

extern "C" void on_signal(int) {
  if (auto* s = g_server.load()) s->stop();
}

void cmd_study_serve(const Globals& g, const StudyOpts& o) {
  const auto bind = env_or("STUDY_BIND_ADDR", o.bind, g.config.get_string("study", "bind_addr", "127.0.0.1:8080"));
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw ConfigError("bind address must be host:port, got '" + bind + "'");
  const std::string host = bind.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(bind.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError("bad port in bind address '" + bind + "'");
  }
  const long long lease_min = g.config.get_int("study", "lease_minutes", 10);
  if (lease_min < 1) throw ConfigError("study.lease_minutes must be >= 1");
  const fs::path media = o.media_root.empty() ? fs::path(g.config.get_string("study", "media_root", "media"))
                                              : fs::path(o.media_root);

  StudyStore store(study_data_dir(g, o), system_now_ms, study_n_boot(g, o), lease_min * 60 * 1000);
  httplib::Server svr;
  install_routes(svr, store, media);
  if (port == 0) {
    port = svr.bind_to_any_port(host);
  } else if (!svr.bind_to_port(host, port)) {
    port = -1;
  }
  if (port < 0) throw Error("cannot bind " + bind);
  if (!o.port_file.empty()) {
    std::ofstream pf(o.port_file + ".tmp");
    pf << port << '\n';
    pf.close();
    fs::rename(o.port_file + ".tmp", o.port_file);
  }
  g_server = &svr;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  log_line("study: serving " + std::to_string(store.study_ids().size()) + " studies from " +
           store.data_dir().string() + " on " + host + ":" + std::to_string(port));
  svr.listen_after_bind();
  g_server = nullptr;
}

void cmd_study_create(const Globals& g, const StudyOpts& o, const std::string& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot open " + file);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(file + ": " + e.what());
  }
  StudyStore store(study_data_dir(g, o), system_now_ms, study_n_boot(g, o));
  try {
    const auto n = store.create(j);
    log_line("study: created " + j.at("study_id").get<std::string>() + " with " + std::to_string(n) + " tasks");
  } catch (const StudyError& e) {
    if (e.status() == 422) throw ConfigError(e.what());
    throw;
  }
}

void cmd_study_rank(const Globals& g, const StudyOpts& o, const std::string& id, bool as_json) {
  StudyStore store(study_data_dir(g, o), system_now_ms, study_n_boot(g, o));
  const auto t = store.ranking(id);
  if (as_json)
    std::cout << to_json(t).dump(2) << '\n';
  else
    std::cout << format_ranking(t);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vidcurate: video clip curation pipeline and pairwise study service"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-c,--config", g.config_path, "Config file (INI-style)");
  app.add_option("-w,--work-dir", g.work_dir, "Work directory (overrides [pipeline] work_dir)");
  app.add_option("-j,--jobs", g.jobs, "Worker threads; 0 = all cores")->check(CLI::NonNegativeNumber);

  std::string in, out, aux, report, profile, axis;
  bool as_json = false;

  auto* ingest = app.add_subcommand("ingest", "Scan a directory of sources into videos.jsonl");
  std::string src_dir;
  ingest->add_option("dir", src_dir, "Source directory")->required();

  auto* cuts = app.add_subcommand("cuts", "Cascaded cut detection per video");
  cuts->add_option("--in", in, "Video list");
  cuts->add_option("--out", out, "Cut list (TSV)");

  auto* clip = app.add_subcommand("clip", "Plan keyframe-aligned clips and write extract.sh");
  clip->add_option("--videos", in, "Video list");
  clip->add_option("--cuts", aux, "Cut list");
  clip->add_option("--out", out, "Clip manifest");

  CLI::App* stage_cmds[3];
  const char* stage_names[3] = {"flow", "caption", "score"};
  const char* stage_help[3] = {"Optical flow and motion scores", "Caption clips (image, video, summary)",
                               "Embeddings, aesthetics, caption similarity and text area"};
  for (int i = 0; i < 3; ++i) {
    stage_cmds[i] = app.add_subcommand(stage_names[i], stage_help[i]);
    stage_cmds[i]->add_option("--in", in, "Input manifest");
    stage_cmds[i]->add_option("--out", out, "Output manifest");
  }

  auto* calibrate = app.add_subcommand("calibrate", "Write the 0/12.5/25/50% calibration subsets for one axis");
  calibrate->add_option("--axis", axis, "motion | aesthetics | clip_similarity | text_area")->required();
  calibrate->add_option("--in", in, "Scored manifest");
  calibrate->add_option("--out-dir", out, "Output directory");

  auto* filter = app.add_subcommand("filter", "Apply a curation profile");
  filter->add_option("--profile", profile, "Profile file ([caption] and [filter] sections)");
  filter->add_option("--in", in, "Scored manifest");
  filter->add_option("--out", out, "Curated manifest");
  filter->add_option("--report", report, "Rejection report (TSV)");

  auto* stats = app.add_subcommand("stats", "Dataset summary for a manifest");
  stats->add_option("--in", in, "Manifest");
  stats->add_flag("--json", as_json, "Machine-readable output");

  auto* run = app.add_subcommand("run", "ingest, cuts, clip, flow, caption, score and filter in sequence");
  run->add_option("dir", src_dir, "Source directory")->required();

  auto* synth = app.add_subcommand("synth", "Write the synthetic test corpus");
  std::string synth_dir;
  SynthCorpusSpec spec;
  synth->add_option("dir", synth_dir, "Output directory")->required();
  synth->add_option("--videos", spec.videos, "Number of videos");
  synth->add_option("--shots", spec.shots_per_video, "Shots per video");
  synth->add_option("--seed", spec.seed, "Corpus seed");

  auto* study = app.add_subcommand("study", "Pairwise preference studies");
  study->require_subcommand(1);
  StudyOpts so;
  study->add_option("--data-dir", so.data_dir, "Study data directory (env STUDY_DATA_DIR)");
  study->add_option("--n-boot", so.n_boot, "Bootstrap replays for rankings");
  auto* serve = study->add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--bind", so.bind, "host:port (env STUDY_BIND_ADDR); port 0 picks a free port");
  serve->add_option("--media-root", so.media_root, "Directory served under /media");
  serve->add_option("--port-file", so.port_file, "Write the bound port here once listening");
  auto* create = study->add_subcommand("create", "Create a study from a JSON config");
  std::string study_file;
  create->add_option("config", study_file, "Study JSON")->required();
  auto* rank = study->add_subcommand("rank", "Bootstrap Elo ranking from a study's ledger");
  std::string study_id;
  rank->add_option("study_id", study_id, "Study id")->required();
  rank->add_flag("--json", as_json, "JSON output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (!g.config_path.empty()) g.config = Config::load(g.config_path);
    g.settings = settings_from_config(g.config);
    if (g.work_dir.empty()) g.work_dir = g.config.get_string("pipeline", "work_dir", "work");

    if (*ingest) cmd_ingest(g, src_dir);
    else if (*cuts) cmd_cuts(g, in, out);
    else if (*clip) cmd_clip(g, in, aux, out);
    else if (*stage_cmds[0]) cmd_flow(g, in, out);
    else if (*stage_cmds[1]) cmd_caption(g, in, out);
    else if (*stage_cmds[2]) cmd_score(g, in, out);
    else if (*calibrate) cmd_calibrate(g, axis, in, out);
    else if (*filter) cmd_filter(g, profile, in, out, report);
    else if (*stats) cmd_stats(g, in, as_json);
    else if (*run) cmd_run(g, src_dir);
    else if (*synth) {
      const auto videos = make_corpus(spec);
      write_corpus(videos, synth_dir);
      log_line("synth: " + std::to_string(videos.size()) + " videos -> " + synth_dir);
    } else if (*study) {
      if (*serve) cmd_study_serve(g, so);
      else if (*create) cmd_study_create(g, so, study_file);
      else if (*rank) cmd_study_rank(g, so, study_id, as_json);
    }
  } catch (const ConfigError& e) {
    log_line(std::string("config error: ") + e.what());
    return 2;
  } catch (const std::exception& e) {
    log_line(std::string("error: ") + e.what());
    return 1;
  }
  return 0;
}
