// Prints one PASS/FAIL line per acceptance criterion and exits nonzero if any
// fails. Tolerances are fixed here; VIDCURATE_CLI points at the built CLI.

#include <algorithm>
#include <array>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <httplib.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "study_fixtures.hpp"
#include "vidcurate/captioning.hpp"
#include "vidcurate/curation.hpp"
#include "vidcurate/cut_detect.hpp"
#include "vidcurate/elo.hpp"
#include "vidcurate/frame_scoring.hpp"
#include "vidcurate/optical_flow.hpp"
#include "vidcurate/pipeline.hpp"
#include "vidcurate/stats.hpp"

using namespace vidcurate;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

// Collects failures without stopping so the detail names every miss.
struct Check {
  Outcome out;
  void expect(bool cond, const std::string& what) {
    if (cond) return;
    out.ok = false;
    if (!out.detail.empty()) out.detail += "; ";
    out.detail += what;
  }
};

std::string num(double v) {
  std::ostringstream o;
  o.precision(6);
  o << v;
  return o.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string l; std::getline(in, l);) ++n;
  return n;
}

// ---------------------------------------------------------------------------

Outcome elo_math() {
  Check c;
  const auto even = expected_score(1000, 1000);
  c.expect(even.e1 == 0.5 && even.e2 == 0.5, "equal ratings not 0.5/0.5");
  const auto gap = expected_score(1400, 1000);
  c.expect(std::fabs(gap.e1 - 10.0 / 11) <= 1e-12, "400-point favourite expects " + num(gap.e1));
  c.expect(std::fabs(gap.e2 - 1.0 / 11) <= 1e-12, "400-point underdog expects " + num(gap.e2));
  Rng rng(17);
  std::vector<double> r(8, kEloInit);
  for (int i = 0; i < 10000; ++i) {
    const auto a = rng.below(8);
    auto b = rng.below(7);
    if (b >= a) ++b;
    const auto u = elo_update(r[a], r[b], rng.coin() ? 1.0 : 0.0);
    r[a] = u.r1;
    r[b] = u.r2;
  }
  double sum = 0;
  for (double x : r) sum += x;
  c.expect(std::fabs(sum - 8 * kEloInit) <= 1e-9, "rating sum drifted by " + num(sum - 8 * kEloInit));
  return c.out;
}

Outcome bootstrap_recovery() {
  Check c;
  int top = 0;
  for (std::uint64_t rerun = 0; rerun < 20; ++rerun) {
    // Shuffled competitor order so "A" is not favoured by position.
    const auto s = fixture::make_study("boot" + std::to_string(rerun), {"C", "A", "B"}, 50, 1000 + rerun);
    const auto tasks = schedule_tasks(s);
    std::size_t regular = 0;
    for (const auto& t : tasks) regular += !t.is_attention_check;
    if (rerun == 0) c.expect(regular == 300, "expected 300 comparisons, got " + std::to_string(regular));
    const auto votes = fixture::simulate_votes(tasks, {"A", "B", "C"}, 0.8, 7000 + rerun);
    const auto t = bootstrap_ranking(votes, tasks, s, 1000, 90000 + rerun);
    top += t.competitors[t.ranking()[0]] == "A";
  }
  c.expect(top == 20, "A ranked first in " + std::to_string(top) + "/20 reruns");
  return c.out;
}

Outcome cascade_fade() {
  Check c;
  using F = fixture::FadeFixture;
  const auto frames = F::frames();
  MemorySource native_src(F::kFps, frames);
  const auto all = collect(sample_at_fps(native_src, F::kFps));
  CascadeConfig cfg;
  const auto native = detect_single(all, cfg.levels[0].threshold, cfg.min_scene_s);
  c.expect(native.size() == 1, "native level found " + std::to_string(native.size()) + " cuts");
  if (!native.empty())
    c.expect(std::fabs(native[0] - F::kHardCut) <= 1.0 / F::kFps, "native cut at " + num(native[0]));
  MemorySource src(F::kFps, frames);
  const auto cl = detect_cascade(src, cfg);
  c.expect(cl.cuts.size() == 2, "cascade found " + std::to_string(cl.cuts.size()) + " cuts");
  if (cl.cuts.size() == 2) {
    c.expect(std::fabs(cl.cuts[0].t_s - F::kHardCut) <= 1.0 / F::kFps, "hard cut at " + num(cl.cuts[0].t_s));
    // One sampling interval of the low-rate detector.
    const double tol = 1.0 / cfg.levels[2].fps;
    const double mid = 0.5 * (F::kFadeStart + F::kFadeEnd);
    c.expect(std::fabs(cl.cuts[1].t_s - mid) <= tol, "fade cut at " + num(cl.cuts[1].t_s));
  }
  return c.out;
}

Outcome keyframe_snapping() {
  Check c;
  Rng rng(4242);
  int mismatches = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const double dur = 10 + rng.uniform() * 50;
    std::vector<double> kf{0};
    for (double t = 0;;) {
      t += 0.5 + rng.uniform() * 3;
      if (t >= dur) break;
      kf.push_back(std::round(t * 30) / 30);
    }
    kf.erase(std::unique(kf.begin(), kf.end()), kf.end());
    std::vector<double> cuts;
    const auto n = 1 + rng.below(10);
    for (std::uint64_t i = 0; i < n; ++i) cuts.push_back(std::round((0.1 + rng.uniform() * (dur - 0.2)) * 30) / 30);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    const auto got = plan_clips(cuts, kf, dur, 1.0);
    if (got.spans != oracle::plan_clips_brute(cuts, kf, dur, 1.0)) ++mismatches;
    for (const auto& s : got.spans) {
      c.expect(std::binary_search(kf.begin(), kf.end(), s.start_s), "span starts off-keyframe at " + num(s.start_s));
      for (double cut : cuts)
        c.expect(!(cut > s.start_s && cut < s.end_s), "cut " + num(cut) + " inside a span");
      c.expect(s.end_s - s.start_s >= 1.0, "span shorter than the minimum");
    }
  }
  c.expect(mismatches == 0, std::to_string(mismatches) + "/50 differ from the brute-force planner");
  return c.out;
}

Outcome optical_flow() {
  Check c;
  const auto a = fixture::textured(1, 96, 72, 0, 0);
  const auto b = fixture::textured(1, 96, 72, 2, 0);
  const auto f = farneback_flow(a, b);
  double err = 0;
  std::size_t n = 0;
  for (std::uint32_t y = 8; y + 8 < f.height; ++y)
    for (std::uint32_t x = 8; x + 8 < f.width; ++x) {
      err += std::hypot(f.u_at(x, y) - 2, f.v_at(x, y));
      ++n;
    }
  err /= static_cast<double>(n);
  c.expect(err <= 0.25, "translation endpoint error " + num(err));
  const auto z = farneback_flow(a, a);
  bool zero = true;
  for (std::size_t i = 0; i < z.u.size(); ++i) zero = zero && z.u[i] == 0 && z.v[i] == 0;
  c.expect(zero, "identical frames gave nonzero flow");

  Rng rng(99);
  std::vector<double> d;
  for (int pair = 0; pair < 20; ++pair) {
    const double dx = rng.uniform() * 6 - 3, dy = rng.uniform() * 6 - 3;
    const auto p = fixture::textured(100 + static_cast<std::uint64_t>(pair), 80, 64, 0, 0);
    const auto q = fixture::textured(100 + static_cast<std::uint64_t>(pair), 80, 64, dx, dy);
    const auto fl = farneback_flow(p, q);
    for (int y = 12; y < 52; y += 8)
      for (int x = 12; x < 68; x += 8) {
        const auto m = oracle::block_match(p, q, x, y);
        d.push_back(std::hypot(m.x - fl.u_at(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y)),
                               m.y - fl.v_at(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y))));
      }
  }
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
  c.expect(d[d.size() / 2] <= 0.5, "median disagreement with block matching " + num(d[d.size() / 2]));
  return c.out;
}

Outcome static_filter() {
  Check c;
  FarnebackBackend backend;
  Rng rng(123);
  std::vector<ClipRecord> recs;
  std::set<std::string> static_ids;
  for (int i = 0; i < 100; ++i) {
    const bool still = i % 4 == 1;
    const double speed = still ? 0.0 : 0.3 + rng.uniform() * 1.2;
    const double angle = rng.uniform() * 6.283185307179586;
    MemorySource src(12, fixture::moving_clip(500 + static_cast<std::uint64_t>(i), 64, 48, 24, speed * std::cos(angle),
                                              speed * std::sin(angle)));
    auto rec = fixture::clip("m" + std::to_string(100 + i), 0, 2);
    rec.motion_score = clip_motion(src, 0, 2, backend).score;
    if (still) static_ids.insert(rec.clip_id);
    recs.push_back(rec);
  }
  const auto r = percentile_filter(recs, Axis::motion, 0.25);
  std::set<std::string> removed;
  for (const auto& x : r.removed) removed.insert(x.clip_id);
  c.expect(static_ids.size() == 25, "fixture has " + std::to_string(static_ids.size()) + " static clips");
  c.expect(removed == static_ids, "removed " + std::to_string(removed.size()) + " clips, not exactly the static ones");
  return c.out;
}

Outcome text_area() {
  Check c;
  Rng rng(31);
  int mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto w = static_cast<std::uint32_t>(32 + rng.below(200)), h = static_cast<std::uint32_t>(32 + rng.below(150));
    std::vector<TextBox> boxes;
    const auto n = rng.below(9);
    for (std::uint64_t i = 0; i < n; ++i)
      boxes.push_back({static_cast<std::int32_t>(rng.below(w + 20)) - 10, static_cast<std::int32_t>(rng.below(h + 20)) - 10,
                       static_cast<std::int32_t>(1 + rng.below(w / 2)), static_cast<std::int32_t>(1 + rng.below(h / 2))});
    mismatches += text_area_ratio(boxes, w, h) != oracle::raster_text_area(boxes, w, h);
  }
  c.expect(mismatches == 0, std::to_string(mismatches) + "/100 differ from the raster oracle");
  c.expect(text_area_ratio(std::vector<TextBox>{{0, 0, 50, 100}}, 100, 100) == 0.5, "half-frame box is not 0.5");

  // Overlaid yellow captions of known coverage on a 100x100 frame; the
  // stub detector reads them back.
  const std::vector<std::uint32_t> widths{0, 3, 6, 7, 8, 12, 30, 50};
  std::vector<ClipRecord> recs;
  std::set<std::string> want;
  StubEmbeddingProvider emb;
  StubTextDetector ocr;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    auto frames = fixture::moving_clip(40 + i, 100, 100, 12, 0, 0);
    for (auto& f : frames)
      for (std::uint32_t y = 0; y < 100; ++y)
        for (std::uint32_t x = 20; x < 20 + widths[i]; ++x) {
          f.at(x, y, 0) = 255;
          f.at(x, y, 1) = 235;
          f.at(x, y, 2) = 0;
        }
    MemorySource src(12, frames);
    auto rec = fixture::clip("t" + std::to_string(i), 0, 1);
    annotate_scores(rec, src, emb, stub_aesthetic_head(), ocr);
    if (widths[i] > 7) want.insert(rec.clip_id);
    recs.push_back(rec);
  }
  const auto r = apply_filter(recs, {Axis::text_area, FilterMode::absolute_max, 0.07});
  std::set<std::string> got;
  for (const auto& x : r.removed) got.insert(x.clip_id);
  c.expect(got == want, "7% cutoff flagged " + std::to_string(got.size()) + " clips, expected " +
                            std::to_string(want.size()));
  return c.out;
}

Outcome calibration() {
  Check c;
  Rng rng(8);
  std::vector<ClipRecord> recs;
  for (int i = 0; i < 80; ++i) {
    auto r = fixture::clip("k" + std::to_string(i), 0, 2);
    r.motion_score = rng.uniform();
    recs.push_back(r);
  }
  const auto sub = build_calibration_subsets(recs, Axis::motion);
  const std::array<std::size_t, 4> want{80, 70, 60, 40};
  for (std::size_t i = 0; i < 4; ++i)
    c.expect(sub[i].size() == want[i], "subset " + std::to_string(i) + " has " + std::to_string(sub[i].size()));
  for (std::size_t i = 1; i < 4; ++i) {
    std::set<std::string> outer, inner;
    for (const auto& r : sub[i - 1]) outer.insert(r.clip_id);
    for (const auto& r : sub[i]) inner.insert(r.clip_id);
    c.expect(std::includes(outer.begin(), outer.end(), inner.begin(), inner.end()),
             "subset " + std::to_string(i) + " not nested");
  }
  return c.out;
}

Outcome caption_sampling() {
  Check c;
  const std::vector<Caption> caps{{CaptionSource::coca, "a"}, {CaptionSource::vblip, "b"}, {CaptionSource::llm_summary, "c"}};
  std::array<double, 3> n{};
  const std::size_t draws = 100000;
  for (std::uint64_t s = 0; s < draws; ++s) ++n[sample_caption_index(caps, splitmix64(s))];
  const std::array<double, 3> p{0.5, 0.25, 0.25};
  std::vector<double> obs, exp;
  for (std::size_t k = 0; k < 3; ++k) {
    c.expect(std::fabs(n[k] / draws - p[k]) <= 0.01, "source " + std::to_string(k) + " frequency " + num(n[k] / draws));
    obs.push_back(n[k]);
    exp.push_back(p[k] * draws);
  }
  const double pv = oracle::chi_square_p(obs, exp);
  c.expect(pv > 0.01, "chi-square p = " + num(pv));
  return c.out;
}

Outcome stats_scale() {
  Check c;
  // Lengths spread over [2, 21] s with mean 11.5 s.
  std::vector<ClipRecord> recs;
  Rng rng(5);
  for (int i = 0; i < 20000; ++i) {
    const double d = 2 + rng.uniform() * 19;
    recs.push_back(fixture::clip("s" + std::to_string(i), 0, d));
    recs.push_back(fixture::clip("s" + std::to_string(i) + "b", 0, 23 - d));
  }
  const auto s = compute_stats(recs);
  c.expect(std::fabs(s.mean_clip_duration_s - 11.5) < 1e-9, "mean length " + num(s.mean_clip_duration_s));
  const double years = s.total_duration_years / static_cast<double>(s.clip_count) * 580e6;
  c.expect(std::fabs(years / 212.0 - 1) <= 0.02, "580M clips give " + num(years) + " years");
  return c.out;
}

// --- subprocess helpers ----------------------------------------------------

int run_cli(const std::vector<std::string>& args) {
  std::string cmd = shell_quote(VIDCURATE_CLI);
  for (const auto& a : args) cmd += " " + shell_quote(a);
  cmd += " >/dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

struct Server {
  pid_t pid = -1;
  int port = 0;

  static Server start(const fs::path& data, const fs::path& port_file) {
    fs::remove(port_file);
    Server s;
    s.pid = fork();
    if (s.pid == 0) {
      const int devnull = ::open("/dev/null", O_WRONLY);
      dup2(devnull, 1);
      dup2(devnull, 2);
      execl(VIDCURATE_CLI, VIDCURATE_CLI, "study", "--data-dir", data.c_str(), "--n-boot", "200", "serve", "--bind",
            "127.0.0.1:0", "--port-file", port_file.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    const auto deadline = Clock::now() + std::chrono::seconds(10);
    while (Clock::now() < deadline) {
      if (fs::exists(port_file)) {
        std::ifstream(port_file) >> s.port;
        if (s.port > 0) return s;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    s.kill9();
    throw Error("study server did not start");
  }

  void kill9() {
    if (pid <= 0) return;
    ::kill(pid, SIGKILL);
    waitpid(pid, nullptr, 0);
    pid = -1;
  }
};

Outcome durability() {
  Check c;
  const auto dir = fixture::temp_dir("accept_study");
  const auto data = dir / "data";
  const auto port_file = dir / "port";
  auto srv = Server::start(data, port_file);
  std::string before;
  std::size_t accepted = 0;
  try {
    httplib::Client cli("127.0.0.1", srv.port);
    const auto study = fixture::make_study("durable", {"A", "B", "C"}, 6, 3, 2);
    auto r = cli.Post("/studies", to_json(study).dump(), "application/json");
    c.expect(r && r->status == 201, "study creation failed");
    const std::vector<std::string> order{"A", "B", "C"};
    Rng rng(1);
    for (int round = 0; round < 40; ++round) {
      const std::string who = "ann" + std::to_string(round % 4);
      r = cli.Get("/studies/durable/tasks/next", {{"X-Annotator-Id", who}});
      if (!r || r->status != 200) continue;
      const auto t = nlohmann::json::parse(r->body);
      const nlohmann::json vote{{"task_id", t["task_id"]}, {"choice", rng.coin() ? "left" : "right"}, {"latency_ms", 500}};
      for (int dup = 0; dup < 3; ++dup) {
        r = cli.Post("/studies/durable/votes", {{"X-Annotator-Id", who}}, vote.dump(), "application/json");
        c.expect(r && r->status == 200, "vote rejected");
        if (r && r->status == 200 && !nlohmann::json::parse(r->body)["duplicate"].get<bool>()) ++accepted;
      }
    }
    r = cli.Get("/studies/durable/ranking");
    c.expect(r && r->status == 200, "ranking unavailable");
    if (r) before = r->body;
  } catch (const std::exception& e) {
    c.expect(false, e.what());
  }
  srv.kill9();
  const auto ledger = data / "durable" / "votes.ledger";
  c.expect(accepted > 0 && line_count(ledger) == accepted,
           "ledger has " + std::to_string(line_count(ledger)) + " lines for " + std::to_string(accepted) + " votes");
  {
    std::ofstream torn(ledger, std::ios::app | std::ios::binary);
    torn << R"({"task_id":"dura)";
  }
  auto again = Server::start(data, port_file);
  try {
    httplib::Client cli("127.0.0.1", again.port);
    const auto r = cli.Get("/studies/durable/ranking");
    c.expect(r && r->status == 200 && r->body == before, "ranking changed across kill -9 and restart");
  } catch (const std::exception& e) {
    c.expect(false, e.what());
  }
  again.kill9();
  c.expect(line_count(ledger) == accepted, "torn tail survived restart");
  fs::remove_all(dir);
  return c.out;
}

Outcome determinism() {
  Check c;
  const auto dir = fixture::temp_dir("accept_det");
  c.expect(run_cli({"synth", (dir / "in").string()}) == 0, "synth failed");
  c.expect(run_cli({"-j", "1", "-w", (dir / "w1").string(), "run", (dir / "in").string()}) == 0, "run -j 1 failed");
  c.expect(run_cli({"-j", "8", "-w", (dir / "w8").string(), "run", (dir / "in").string()}) == 0, "run -j 8 failed");
  std::size_t compared = 0;
  for (const char* f : {"videos.jsonl", "cuts.tsv", "clips.manifest", "flow.manifest", "captioned.manifest",
                        "scored.manifest", "curated.manifest", "rejections.tsv"}) {
    const auto a = dir / "w1" / f, b = dir / "w8" / f;
    c.expect(fs::exists(a) && fs::exists(b), std::string(f) + " missing");
    if (!fs::exists(a) || !fs::exists(b)) continue;
    c.expect(slurp(a) == slurp(b), std::string(f) + " differs between -j 1 and -j 8");
    ++compared;
  }
  c.expect(compared == 8, "compared " + std::to_string(compared) + "/8 outputs");
  fs::remove_all(dir);
  return c.out;
}

struct Criterion {
  const char* name;
  double budget_s;
  std::function<Outcome()> fn;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"elo-expected-score-and-update", 1, elo_math},
      {"bootstrap-elo-recovers-order", 10, bootstrap_recovery},
      {"cascade-catches-fade", 30, cascade_fade},
      {"keyframe-snapped-clips", 5, keyframe_snapping},
      {"optical-flow-accuracy", 60, optical_flow},
      {"motion-filter-removes-static", 60, static_filter},
      {"text-area-union-and-cutoff", 10, text_area},
      {"calibration-subsets", 5, calibration},
      {"caption-source-sampling", 10, caption_sampling},
      {"dataset-stats-scale", 5, stats_scale},
      {"study-service-durability", 60, durability},
      {"pipeline-determinism", 60, determinism},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = cr.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (o.ok && secs > cr.budget_s) o = {false, "took " + num(secs) + " s, budget " + num(cr.budget_s) + " s"};
    std::cout << (o.ok ? "PASS " : "FAIL ") << cr.name << " (" << num(secs) << " s)";
    if (!o.ok) std::cout << ": " << o.detail;
    std::cout << std::endl;
    failed += !o.ok;
  }
  return failed ? 1 : 0;
}
