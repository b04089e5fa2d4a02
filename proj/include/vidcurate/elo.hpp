#pragma once

// Pairwise preference studies: task scheduling with covert attention checks,
// Elo rating math, and bootstrap aggregation over shuffled game orders.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "vidcurate/error.hpp"
#include "vidcurate/hash.hpp"

namespace vidcurate {

inline constexpr double kEloInit = 1000.0;
inline constexpr double kEloK = 1.0;
inline constexpr std::size_t kAttentionCheckEvery = 20;
inline constexpr double kAttentionThreshold = 0.8;
inline constexpr std::string_view kDegradedSuffix = "@degraded";

struct ExpectedScore {
  double e1, e2;
};

inline ExpectedScore expected_score(double r1, double r2) noexcept {
  const double e1 = 1.0 / (1.0 + std::pow(10.0, (r2 - r1) / 400.0));
  return {e1, 1.0 - e1};
}

struct RatingPair {
  double r1, r2;
};

// s1 is 1 when player one wins, 0 otherwise. The second rating moves by the
// negated delta so the pair sum is conserved.
inline RatingPair elo_update(double r1, double r2, double s1, double k = kEloK) noexcept {
  const double d = k * (s1 - expected_score(r1, r2).e1);
  return {r1 + d, r2 - d};
}

// ---------------------------------------------------------------------------
// Study configuration

enum class Choice { left, right };

inline std::string_view to_string(Choice c) { return c == Choice::left ? "left" : "right"; }
inline std::optional<Choice> parse_choice(std::string_view s) {
  if (s == "left") return Choice::left;
  if (s == "right") return Choice::right;
  return std::nullopt;
}

inline bool is_study_axis(std::string_view a) { return a == "quality" || a == "prompt_following"; }

struct Study {
  std::string study_id;
  std::vector<std::string> competitors;
  std::vector<std::string> prompts;
  std::vector<std::string> axes{"quality", "prompt_following"};
  int votes_per_task = 3;
  std::uint64_t seed = 0;
  // competitor -> one media path per prompt. Degraded copies back attention checks.
  std::map<std::string, std::vector<std::string>> media;
  std::map<std::string, std::vector<std::string>> degraded_media;

  bool operator==(const Study&) const = default;
};

inline std::size_t regular_task_count(const Study& s) {
  const std::size_t m = s.competitors.size();
  return m * (m - 1) / 2 * s.prompts.size() * s.axes.size() * static_cast<std::size_t>(s.votes_per_task);
}

inline std::size_t attention_check_count(std::size_t regular) { return regular / kAttentionCheckEvery; }

inline void validate(const Study& s) {
  if (s.study_id.empty()) throw InvariantError("study_id is empty");
  for (char c : s.study_id)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_'))
      throw InvariantError("study_id may only contain [A-Za-z0-9_-]");
  if (s.competitors.size() < 2) throw InvariantError("a study needs at least two competitors");
  std::set<std::string> ids;
  for (const auto& c : s.competitors) {
    if (c.empty()) throw InvariantError("empty competitor id");
    if (c.find('@') != std::string::npos) throw InvariantError("competitor ids may not contain '@'");
    if (!ids.insert(c).second) throw InvariantError("duplicate competitor " + c);
  }
  if (s.prompts.empty()) throw InvariantError("a study needs at least one prompt");
  if (s.axes.empty()) throw InvariantError("a study needs at least one axis");
  std::set<std::string> axes;
  for (const auto& a : s.axes) {
    if (!is_study_axis(a)) throw InvariantError("unknown axis " + a);
    if (!axes.insert(a).second) throw InvariantError("duplicate axis " + a);
  }
  if (s.votes_per_task < 1) throw InvariantError("votes_per_task must be >= 1");
}

// Every (competitor, prompt) has a media file, and a degraded copy if the
// schedule will contain attention checks.
inline void validate_media(const Study& s) {
  auto check = [&](const std::map<std::string, std::vector<std::string>>& m, const char* what) {
    for (const auto& c : s.competitors) {
      const auto it = m.find(c);
      if (it == m.end()) throw InvariantError(std::string(what) + " missing for competitor " + c);
      if (it->second.size() != s.prompts.size())
        throw InvariantError(std::string(what) + " for " + c + " must list one file per prompt");
      for (const auto& p : it->second)
        if (p.empty() || p.front() == '/' || p.find("..") != std::string::npos)
          throw InvariantError(std::string(what) + " path must be relative without '..': " + p);
    }
  };
  check(s.media, "media");
  if (attention_check_count(regular_task_count(s)) > 0) check(s.degraded_media, "degraded_media");
}

inline nlohmann::json to_json(const Study& s) {
  nlohmann::json j{{"study_id", s.study_id}, {"competitors", s.competitors}, {"prompts", s.prompts},
                   {"axes", s.axes},         {"votes_per_task", s.votes_per_task}, {"seed", s.seed},
                   {"media", s.media},       {"degraded_media", s.degraded_media}};
  return j;
}

// Malformed documents raise InvariantError so callers treat them like any
// other invalid configuration.
inline Study study_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvariantError("study config must be an object");
  Study s;
  try {
    s.study_id = j.at("study_id").get<std::string>();
    s.competitors = j.at("competitors").get<std::vector<std::string>>();
    s.prompts = j.at("prompts").get<std::vector<std::string>>();
    if (j.contains("axes")) s.axes = j["axes"].get<std::vector<std::string>>();
    if (j.contains("votes_per_task")) s.votes_per_task = j["votes_per_task"].get<int>();
    if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("media")) s.media = j["media"].get<std::map<std::string, std::vector<std::string>>>();
    if (j.contains("degraded_media"))
      s.degraded_media = j["degraded_media"].get<std::map<std::string, std::vector<std::string>>>();
  } catch (const nlohmann::json::exception& e) {
    throw InvariantError(std::string("bad study config: ") + e.what());
  }
  validate(s);
  return s;
}

// ---------------------------------------------------------------------------
// Scheduling

struct Task {
  std::string task_id;
  // Replicates of one comparison share a group; annotators see at most one.
  std::string group;
  std::size_t prompt_index = 0;
  std::string prompt;
  std::string left, right;
  std::string axis;
  int replicate = 0;
  bool is_attention_check = false;
  std::optional<std::string> expected_winner;

  bool operator==(const Task&) const = default;
};

inline std::string base_competitor(const std::string& id) {
  const auto at = id.find('@');
  return at == std::string::npos ? id : id.substr(0, at);
}

inline bool is_degraded(const std::string& id) { return id.find('@') != std::string::npos; }

namespace elo_detail {

inline std::string comparison_key(const std::string& study, std::size_t prompt, const std::string& a,
                                  const std::string& b, const std::string& axis) {
  std::string k = study;
  k += '\x1f';
  k += std::to_string(prompt);
  k += '\x1f';
  k += a;
  k += '\x1f';
  k += b;
  k += '\x1f';
  k += axis;
  return k;
}

}  // namespace elo_detail

// Regular tasks for every prompt x pair x axis x replicate, each with a
// seeded left/right orientation, in shuffled order. One attention check
// (clean vs degraded copy of the same competitor) is hidden at a random slot
// in every block of 20 regular tasks.
inline std::vector<Task> schedule_tasks(const Study& s) {
  validate(s);
  Rng rng(splitmix64(s.seed));
  std::vector<Task> regular;
  regular.reserve(regular_task_count(s));
  const auto& C = s.competitors;
  for (std::size_t p = 0; p < s.prompts.size(); ++p)
    for (std::size_t i = 0; i < C.size(); ++i)
      for (std::size_t j = i + 1; j < C.size(); ++j)
        for (const auto& axis : s.axes) {
          const std::string key = elo_detail::comparison_key(s.study_id, p, C[i], C[j], axis);
          const std::string group = hex64(fnv1a64(key));
          for (int r = 0; r < s.votes_per_task; ++r) {
            Task t;
            t.task_id = hex64(fnv1a64(key + '\x1f' + std::to_string(r)));
            t.group = group;
            t.prompt_index = p;
            t.prompt = s.prompts[p];
            t.axis = axis;
            t.replicate = r;
            const bool flip = rng.coin();
            t.left = flip ? C[j] : C[i];
            t.right = flip ? C[i] : C[j];
            regular.push_back(std::move(t));
          }
        }
  rng.shuffle(regular);

  const std::size_t checks = attention_check_count(regular.size());
  std::vector<Task> out;
  out.reserve(regular.size() + checks);
  std::size_t next = 0;
  for (std::size_t k = 0; k < checks; ++k) {
    Task t;
    const auto& c = C[rng.below(C.size())];
    t.prompt_index = static_cast<std::size_t>(rng.below(s.prompts.size()));
    t.prompt = s.prompts[t.prompt_index];
    t.axis = s.axes[rng.below(s.axes.size())];
    t.is_attention_check = true;
    t.expected_winner = c;
    const std::string degraded = c + std::string(kDegradedSuffix);
    const bool flip = rng.coin();
    t.left = flip ? degraded : c;
    t.right = flip ? c : degraded;
    t.task_id = hex64(fnv1a64(s.study_id + "\x1f" "check" "\x1f" + std::to_string(k)));
    t.group = t.task_id;
    const std::size_t slot = static_cast<std::size_t>(rng.below(kAttentionCheckEvery));
    for (std::size_t q = 0; q < kAttentionCheckEvery; ++q) {
      if (q == slot) out.push_back(t);
      out.push_back(regular[next++]);
    }
  }
  while (next < regular.size()) out.push_back(regular[next++]);
  return out;
}

// ---------------------------------------------------------------------------
// Votes and annotator quality

struct VoteRecord {
  std::string task_id;
  std::string annotator_id;
  Choice choice = Choice::left;
  std::int64_t submitted_at = 0;  // unix milliseconds
  std::int64_t latency_ms = 0;

  bool operator==(const VoteRecord&) const = default;
};

inline nlohmann::json to_json(const VoteRecord& v) {
  return {{"task_id", v.task_id},
          {"annotator_id", v.annotator_id},
          {"choice", std::string(to_string(v.choice))},
          {"submitted_at", v.submitted_at},
          {"latency_ms", v.latency_ms}};
}

inline VoteRecord vote_from_json(const nlohmann::json& j) {
  VoteRecord v;
  try {
    v.task_id = j.at("task_id").get<std::string>();
    v.annotator_id = j.at("annotator_id").get<std::string>();
    const auto c = parse_choice(j.at("choice").get<std::string>());
    if (!c) throw InvariantError("choice must be 'left' or 'right'");
    v.choice = *c;
    if (j.contains("submitted_at")) v.submitted_at = j["submitted_at"].get<std::int64_t>();
    if (j.contains("latency_ms")) v.latency_ms = j["latency_ms"].get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw InvariantError(std::string("bad vote: ") + e.what());
  }
  if (v.task_id.empty() || v.annotator_id.empty()) throw InvariantError("vote needs task_id and annotator_id");
  return v;
}

inline const std::string& chosen(const Task& t, Choice c) { return c == Choice::left ? t.left : t.right; }

struct AnnotatorQuality {
  std::size_t checks = 0;
  std::size_t correct = 0;
  std::optional<double> accuracy;  // null without check exposure
  bool flagged = false;
};

using TaskIndex = std::unordered_map<std::string, const Task*>;

inline TaskIndex index_tasks(const std::vector<Task>& tasks) {
  TaskIndex idx;
  idx.reserve(tasks.size());
  for (const auto& t : tasks) idx.emplace(t.task_id, &t);
  return idx;
}

// Keeps the first vote per (task, annotator); later ones are dropped.
inline std::vector<VoteRecord> dedupe_votes(const std::vector<VoteRecord>& votes) {
  std::unordered_set<std::string> seen;
  std::vector<VoteRecord> out;
  for (const auto& v : votes)
    if (seen.insert(v.task_id + '\x1f' + v.annotator_id).second) out.push_back(v);
  return out;
}

inline std::map<std::string, AnnotatorQuality> annotator_quality(const std::vector<VoteRecord>& votes,
                                                                 const std::vector<Task>& tasks) {
  const auto idx = index_tasks(tasks);
  std::map<std::string, AnnotatorQuality> out;
  for (const auto& v : dedupe_votes(votes)) {
    auto& q = out[v.annotator_id];
    const auto it = idx.find(v.task_id);
    if (it == idx.end() || !it->second->is_attention_check) continue;
    ++q.checks;
    if (chosen(*it->second, v.choice) == *it->second->expected_winner) ++q.correct;
  }
  for (auto& [id, q] : out) {
    if (q.checks == 0) continue;
    q.accuracy = static_cast<double>(q.correct) / static_cast<double>(q.checks);
    q.flagged = *q.accuracy < kAttentionThreshold;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bootstrap ranking

struct EloEntry {
  double mean = kEloInit;
  double std = 0;
  std::size_t games = 0;

  bool operator==(const EloEntry&) const = default;
};

struct EloTable {
  std::vector<std::string> competitors;
  std::vector<std::string> axes;
  std::vector<std::vector<EloEntry>> per_axis;  // [axis][competitor]
  std::vector<EloEntry> aggregated;             // mean of per-axis ratings, per replay
  std::size_t votes_total = 0;
  std::size_t votes_used = 0;
  std::vector<std::string> flagged_annotators;

  // Competitor indices, best aggregated mean first; ties by id.
  std::vector<std::size_t> ranking() const {
    std::vector<std::size_t> r(competitors.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = i;
    std::stable_sort(r.begin(), r.end(), [&](std::size_t a, std::size_t b) {
      if (aggregated[a].mean != aggregated[b].mean) return aggregated[a].mean > aggregated[b].mean;
      return competitors[a] < competitors[b];
    });
    return r;
  }

  bool operator==(const EloTable&) const = default;
};

struct Game {
  std::size_t winner, loser;
};

// Replays `games` in the given order from R_init and returns final ratings.
inline std::vector<double> replay(std::size_t competitors, const std::vector<Game>& games, double k = kEloK) {
  std::vector<double> r(competitors, kEloInit);
  for (const auto& g : games) {
    const auto [w, l] = elo_update(r[g.winner], r[g.loser], 1.0, k);
    r[g.winner] = w;
    r[g.loser] = l;
  }
  return r;
}

// Drops attention checks, votes from flagged annotators and repeated
// (task, annotator) votes, then for each of n_boot seeded shuffles replays
// every axis from R_init. Mean and population std are taken over replays.
inline EloTable bootstrap_ranking(const std::vector<VoteRecord>& votes, const std::vector<Task>& tasks,
                                  const Study& study, std::size_t n_boot = 1000, std::uint64_t seed = 0) {
  if (n_boot == 0) throw PreconditionError("n_boot must be positive");
  const auto idx = index_tasks(tasks);
  const auto quality = annotator_quality(votes, tasks);

  EloTable t;
  t.competitors = study.competitors;
  t.axes = study.axes;
  t.votes_total = votes.size();
  for (const auto& [id, q] : quality)
    if (q.flagged) t.flagged_annotators.push_back(id);

  std::unordered_map<std::string, std::size_t> comp;
  for (std::size_t i = 0; i < study.competitors.size(); ++i) comp[study.competitors[i]] = i;
  std::unordered_map<std::string, std::size_t> axis_of;
  for (std::size_t a = 0; a < study.axes.size(); ++a) axis_of[study.axes[a]] = a;

  const std::size_t m = t.competitors.size(), A = t.axes.size();
  std::vector<std::vector<Game>> games(A);
  t.per_axis.assign(A, std::vector<EloEntry>(m));
  t.aggregated.assign(m, EloEntry{});

  for (const auto& v : dedupe_votes(votes)) {
    const auto it = idx.find(v.task_id);
    if (it == idx.end()) throw PreconditionError("vote references unknown task " + v.task_id);
    const Task& task = *it->second;
    if (task.is_attention_check) continue;
    if (quality.at(v.annotator_id).flagged) continue;
    const auto ai = axis_of.find(task.axis);
    const auto li = comp.find(task.left), ri = comp.find(task.right);
    if (ai == axis_of.end() || li == comp.end() || ri == comp.end())
      throw PreconditionError("task " + task.task_id + " does not belong to this study");
    const std::size_t w = v.choice == Choice::left ? li->second : ri->second;
    const std::size_t l = v.choice == Choice::left ? ri->second : li->second;
    games[ai->second].push_back({w, l});
    ++t.per_axis[ai->second][w].games;
    ++t.per_axis[ai->second][l].games;
    ++t.votes_used;
  }
  for (std::size_t c = 0; c < m; ++c)
    for (std::size_t a = 0; a < A; ++a) t.aggregated[c].games += t.per_axis[a][c].games;

  // samples[a][b * m + c]: rating of c on axis a after replay b.
  std::vector<std::vector<double>> samples(A, std::vector<double>(n_boot * m, kEloInit));
  Rng rng(splitmix64(seed));
  for (std::size_t b = 0; b < n_boot; ++b)
    for (std::size_t a = 0; a < A; ++a) {
      if (games[a].empty()) continue;
      std::vector<Game> order = games[a];
      rng.shuffle(order);
      const auto r = replay(m, order);
      std::copy(r.begin(), r.end(), samples[a].begin() + static_cast<std::ptrdiff_t>(b * m));
    }

  auto summarize = [&](auto&& value, EloEntry& e) {
    double sum = 0;
    for (std::size_t b = 0; b < n_boot; ++b) sum += value(b);
    e.mean = sum / static_cast<double>(n_boot);
    double ss = 0;
    for (std::size_t b = 0; b < n_boot; ++b) ss += (value(b) - e.mean) * (value(b) - e.mean);
    e.std = std::sqrt(ss / static_cast<double>(n_boot));
  };
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t a = 0; a < A; ++a) summarize([&](std::size_t b) { return samples[a][b * m + c]; }, t.per_axis[a][c]);
    summarize(
        [&](std::size_t b) {
          double s = 0;
          for (std::size_t a = 0; a < A; ++a) s += samples[a][b * m + c];
          return s / static_cast<double>(A);
        },
        t.aggregated[c]);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Reports

inline nlohmann::json to_json(const EloTable& t) {
  nlohmann::json comps = nlohmann::json::array();
  for (std::size_t c = 0; c < t.competitors.size(); ++c) {
    nlohmann::json axes = nlohmann::json::object();
    for (std::size_t a = 0; a < t.axes.size(); ++a) {
      const auto& e = t.per_axis[a][c];
      axes[t.axes[a]] = {{"mean", e.mean}, {"std", e.std}, {"games", e.games}};
    }
    const auto& g = t.aggregated[c];
    comps.push_back({{"id", t.competitors[c]},
                     {"aggregated", {{"mean", g.mean}, {"std", g.std}, {"games", g.games}}},
                     {"axes", axes}});
  }
  nlohmann::json ranking = nlohmann::json::array();
  for (auto i : t.ranking()) ranking.push_back(t.competitors[i]);
  return {{"competitors", comps},
          {"ranking", ranking},
          {"vote_count", t.votes_total},
          {"votes_used", t.votes_used},
          {"flagged_annotators", t.flagged_annotators}};
}

// Aligned table followed by one tab-separated line per competitor and axis:
// competitor, axis, mean, std, games. The aggregated score uses axis name
// "aggregated".
inline std::string format_ranking(const EloTable& t) {
  std::ostringstream o;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-4s %-24s", "rank", "competitor");
  o << buf;
  for (const auto& a : t.axes) {
    std::snprintf(buf, sizeof buf, " %20s", a.c_str());
    o << buf;
  }
  o << "           aggregated\n";
  std::size_t rank = 1;
  for (auto c : t.ranking()) {
    std::snprintf(buf, sizeof buf, "%-4zu %-24s", rank++, t.competitors[c].c_str());
    o << buf;
    for (std::size_t a = 0; a < t.axes.size(); ++a) {
      std::snprintf(buf, sizeof buf, " %10.2f +- %6.2f", t.per_axis[a][c].mean, t.per_axis[a][c].std);
      o << buf;
    }
    std::snprintf(buf, sizeof buf, " %10.2f +- %6.2f\n", t.aggregated[c].mean, t.aggregated[c].std);
    o << buf;
  }
  o << "votes " << t.votes_used << "/" << t.votes_total << " used";
  if (!t.flagged_annotators.empty()) {
    o << "; flagged:";
    for (const auto& f : t.flagged_annotators) o << ' ' << f;
  }
  o << "\n\n";
  for (auto c : t.ranking()) {
    for (std::size_t a = 0; a <= t.axes.size(); ++a) {
      const bool agg = a == t.axes.size();
      const auto& e = agg ? t.aggregated[c] : t.per_axis[a][c];
      std::snprintf(buf, sizeof buf, "%s\t%s\t%.6f\t%.6f\t%zu\n", t.competitors[c].c_str(),
                    agg ? "aggregated" : t.axes[a].c_str(), e.mean, e.std, e.games);
      o << buf;
    }
  }
  return o.str();
}

}  // namespace vidcurate
