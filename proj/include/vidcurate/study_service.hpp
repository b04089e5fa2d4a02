#pragma once

// Study persistence and the HTTP service annotators talk to.
//
// On disk, one directory per study under the data dir:
//   <data>/<study_id>/study.json     configuration, written once
//   <data>/<study_id>/votes.ledger   one VoteRecord JSON object per line, append-only
//
// Opening a store replays every ledger. A torn final line (no trailing
// newline, left by a crash mid-write) is cut off before new votes are
// appended; a malformed complete line is treated as corruption.
//
// Leases only steer which task an annotator is offered next. They live in
// memory and are not persisted; the (task, annotator) uniqueness of votes is
// the hard guarantee.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "vidcurate/elo.hpp"
#include "vidcurate/error.hpp"

namespace vidcurate {

using ClockFn = std::function<std::int64_t()>;

inline std::int64_t system_now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

inline constexpr std::int64_t kLeaseMs = 10 * 60 * 1000;

// Thrown by the store and mapped 1:1 onto HTTP statuses by the server.
class StudyError : public Error {
 public:
  StudyError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

struct Lease {
  std::string task_id;
  std::string annotator_id;
  std::int64_t expires_at = 0;
};

struct VoteAck {
  bool duplicate = false;
};

class StudyStore {
 public:
  explicit StudyStore(std::filesystem::path data_dir, ClockFn clock = system_now_ms, std::size_t n_boot = 1000,
                      std::int64_t lease_ms = kLeaseMs)
      : dir_(std::move(data_dir)), clock_(std::move(clock)), n_boot_(n_boot), lease_ms_(lease_ms) {
    std::filesystem::create_directories(dir_);
    std::vector<std::filesystem::path> subdirs;
    for (const auto& e : std::filesystem::directory_iterator(dir_))
      if (e.is_directory() && std::filesystem::exists(e.path() / "study.json")) subdirs.push_back(e.path());
    std::sort(subdirs.begin(), subdirs.end());
    for (const auto& d : subdirs) load(d);
  }

  // Validates, schedules and persists a new study. Returns the task count.
  std::size_t create(const nlohmann::json& config) {
    Study s;
    try {
      s = study_from_json(config);
      validate_media(s);
    } catch (const InvariantError& e) {
      throw StudyError(422, e.what());
    }
    std::lock_guard lk(mu_);
    if (studies_.count(s.study_id) || std::filesystem::exists(dir_ / s.study_id))
      throw StudyError(409, "study " + s.study_id + " already exists");
    const auto sdir = dir_ / s.study_id;
    std::filesystem::create_directories(sdir);
    {
      std::ofstream out(sdir / "study.json.tmp", std::ios::binary | std::ios::trunc);
      out << to_json(s).dump(2) << '\n';
      if (!out) throw Error("cannot write study config in " + sdir.string());
    }
    std::filesystem::rename(sdir / "study.json.tmp", sdir / "study.json");
    auto st = open_state(std::move(s), sdir);
    const std::size_t n = st->tasks.size();
    studies_.emplace(st->study.study_id, std::move(st));
    return n;
  }

  bool contains(const std::string& id) const {
    std::lock_guard lk(mu_);
    return studies_.count(id) != 0;
  }

  std::vector<std::string> study_ids() const {
    std::lock_guard lk(mu_);
    std::vector<std::string> out;
    for (const auto& [id, st] : studies_) out.push_back(id);
    return out;
  }

  Study study(const std::string& id) const {
    std::lock_guard lk(mu_);
    return get(id).study;
  }

  std::vector<Task> tasks(const std::string& id) const {
    std::lock_guard lk(mu_);
    return get(id).tasks;
  }

  std::vector<VoteRecord> votes(const std::string& id) const {
    std::lock_guard lk(mu_);
    return get(id).votes;
  }

  // The annotator's live lease if any, otherwise the first task in schedule
  // order that nobody has voted on or currently leases and whose comparison
  // the annotator has not seen. nullopt when nothing is left for them.
  std::optional<std::pair<Task, Lease>> next_task(const std::string& id, const std::string& annotator) {
    std::lock_guard lk(mu_);
    State& st = get(id);
    const std::int64_t now = clock_();
    if (auto it = st.lease_by_annotator.find(annotator); it != st.lease_by_annotator.end()) {
      const Lease& l = st.leases.at(it->second);
      if (l.expires_at > now && !st.vote_count.count(l.task_id))
        return std::make_pair(*st.index.at(l.task_id), l);
      st.leases.erase(it->second);
      st.lease_by_annotator.erase(it);
    }
    const auto& seen = st.groups_seen[annotator];
    for (const Task& t : st.tasks) {
      if (st.vote_count.count(t.task_id) || seen.count(t.group)) continue;
      if (auto l = st.leases.find(t.task_id); l != st.leases.end()) {
        if (l->second.expires_at > now) continue;
        st.lease_by_annotator.erase(l->second.annotator_id);
        st.leases.erase(l);
      }
      Lease lease{t.task_id, annotator, now + lease_ms_};
      st.leases[t.task_id] = lease;
      st.lease_by_annotator[annotator] = t.task_id;
      return std::make_pair(t, lease);
    }
    return std::nullopt;
  }

  // Appends the vote unless (task, annotator) already voted. Leases are not
  // checked: a vote on an expired or foreign lease is still accepted.
  VoteAck submit_vote(const std::string& id, VoteRecord v) {
    std::lock_guard lk(mu_);
    State& st = get(id);
    const auto t = st.index.find(v.task_id);
    if (t == st.index.end()) throw StudyError(404, "unknown task " + v.task_id);
    if (st.voted.count(key(v.task_id, v.annotator_id))) return {true};
    if (v.submitted_at == 0) v.submitted_at = clock_();
    const std::string line = to_json(v).dump() + "\n";
    st.ledger.write(line.data(), static_cast<std::streamsize>(line.size()));
    st.ledger.flush();
    if (!st.ledger) throw Error("ledger write failed for study " + id);
    apply(st, v);
    if (auto it = st.lease_by_annotator.find(v.annotator_id); it != st.lease_by_annotator.end() && it->second == v.task_id) {
      st.leases.erase(it->second);
      st.lease_by_annotator.erase(it);
    }
    return {false};
  }

  // Pure function of the ledger snapshot; seeded by the study seed.
  EloTable ranking(const std::string& id) const {
    std::vector<VoteRecord> snapshot;
    Study study;
    std::shared_ptr<const std::vector<Task>> tasks;
    {
      std::lock_guard lk(mu_);
      const State& st = get(id);
      snapshot = st.votes;
      study = st.study;
      tasks = st.tasks_ptr;
    }
    return bootstrap_ranking(snapshot, *tasks, study, n_boot_, study.seed);
  }

  std::string media_path(const std::string& id, const Task& t, bool left) const {
    std::lock_guard lk(mu_);
    const Study& s = get(id).study;
    const std::string& who = left ? t.left : t.right;
    const auto& table = is_degraded(who) ? s.degraded_media : s.media;
    return table.at(base_competitor(who)).at(t.prompt_index);
  }

  const std::filesystem::path& data_dir() const noexcept { return dir_; }

 private:
  struct State {
    Study study;
    std::shared_ptr<const std::vector<Task>> tasks_ptr;
    const std::vector<Task>& tasks;
    TaskIndex index;
    std::vector<VoteRecord> votes;
    std::unordered_set<std::string> voted;
    std::unordered_map<std::string, std::size_t> vote_count;
    std::unordered_map<std::string, std::set<std::string>> groups_seen;
    std::unordered_map<std::string, Lease> leases;                     // by task
    std::unordered_map<std::string, std::string> lease_by_annotator;  // annotator -> task
    std::ofstream ledger;

    State(Study s, std::shared_ptr<const std::vector<Task>> t)
        : study(std::move(s)), tasks_ptr(std::move(t)), tasks(*tasks_ptr), index(index_tasks(tasks)) {}
  };

  static std::string key(const std::string& task, const std::string& annotator) { return task + '\x1f' + annotator; }

  static void apply(State& st, const VoteRecord& v) {
    st.votes.push_back(v);
    st.voted.insert(key(v.task_id, v.annotator_id));
    ++st.vote_count[v.task_id];
    st.groups_seen[v.annotator_id].insert(st.index.at(v.task_id)->group);
  }

  std::unique_ptr<State> open_state(Study s, const std::filesystem::path& sdir) {
    auto tasks = std::make_shared<const std::vector<Task>>(schedule_tasks(s));
    auto st = std::make_unique<State>(std::move(s), std::move(tasks));
    const auto ledger = sdir / "votes.ledger";
    if (std::filesystem::exists(ledger)) replay(*st, ledger);
    st->ledger.open(ledger, std::ios::binary | std::ios::app);
    if (!st->ledger) throw Error("cannot open ledger " + ledger.string());
    return st;
  }

  static void replay(State& st, const std::filesystem::path& ledger) {
    std::string data;
    {
      std::ifstream in(ledger, std::ios::binary);
      data.assign(std::istreambuf_iterator<char>(in), {});
    }
    const auto complete = data.rfind('\n');
    const std::size_t keep = complete == std::string::npos ? 0 : complete + 1;
    if (keep != data.size()) std::filesystem::resize_file(ledger, keep);
    std::size_t pos = 0, lineno = 0;
    while (pos < keep) {
      const auto nl = data.find('\n', pos);
      const std::string line = data.substr(pos, nl - pos);
      pos = nl + 1;
      ++lineno;
      if (line.empty()) continue;
      VoteRecord v;
      try {
        v = vote_from_json(nlohmann::json::parse(line));
      } catch (const std::exception& e) {
        throw FormatError(ledger.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
      if (!st.index.count(v.task_id))
        throw FormatError(ledger.string() + ":" + std::to_string(lineno) + ": unknown task " + v.task_id);
      if (st.voted.count(key(v.task_id, v.annotator_id))) continue;
      apply(st, v);
    }
  }

  void load(const std::filesystem::path& sdir) {
    std::ifstream in(sdir / "study.json");
    Study s;
    try {
      s = study_from_json(nlohmann::json::parse(in));
    } catch (const std::exception& e) {
      throw FormatError((sdir / "study.json").string() + ": " + e.what());
    }
    if (s.study_id != sdir.filename().string())
      throw FormatError((sdir / "study.json").string() + ": study_id does not match directory");
    auto st = open_state(std::move(s), sdir);
    studies_.emplace(st->study.study_id, std::move(st));
  }

  State& get(const std::string& id) {
    const auto it = studies_.find(id);
    if (it == studies_.end()) throw StudyError(404, "unknown study " + id);
    return *it->second;
  }
  const State& get(const std::string& id) const {
    const auto it = studies_.find(id);
    if (it == studies_.end()) throw StudyError(404, "unknown study " + id);
    return *it->second;
  }

  std::filesystem::path dir_;
  ClockFn clock_;
  std::size_t n_boot_;
  std::int64_t lease_ms_;
  mutable std::mutex mu_;
  std::map<std::string, std::unique_ptr<State>> studies_;
};

// ---------------------------------------------------------------------------
// HTTP

inline void install_routes(httplib::Server& svr, StudyStore& store, const std::filesystem::path& media_root) {
  auto send_json = [](httplib::Response& res, int status, const nlohmann::json& j) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  };
  auto guard = [send_json](auto&& fn) {
    return [fn, send_json](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const StudyError& e) {
        send_json(res, e.status(), {{"error", e.what()}});
      } catch (const nlohmann::json::exception& e) {
        send_json(res, 422, {{"error", std::string("bad JSON: ") + e.what()}});
      } catch (const InvariantError& e) {
        send_json(res, 422, {{"error", e.what()}});
      } catch (const std::exception& e) {
        send_json(res, 500, {{"error", e.what()}});
      }
    };
  };
  auto annotator_of = [](const httplib::Request& req, const nlohmann::json* body) {
    std::string a = req.get_header_value("X-Annotator-Id");
    if (a.empty() && body && body->contains("annotator_id") && (*body)["annotator_id"].is_string())
      a = (*body)["annotator_id"].get<std::string>();
    if (a.empty()) throw StudyError(400, "missing X-Annotator-Id header");
    return a;
  };

  svr.Get("/healthz", [](const httplib::Request&, httplib::Response& res) { res.set_content("ok", "text/plain"); });

  svr.Post("/studies", guard([&store, send_json](const httplib::Request& req, httplib::Response& res) {
             const auto cfg = nlohmann::json::parse(req.body);
             const std::size_t n = store.create(cfg);
             send_json(res, 201, {{"study_id", cfg.at("study_id")}, {"task_count", n}});
           }));

  svr.Get(R"(/studies/([A-Za-z0-9_-]+)/tasks/next)",
          guard([&store, send_json, annotator_of](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            if (!store.contains(id)) throw StudyError(404, "unknown study " + id);
            const auto annotator = annotator_of(req, nullptr);
            const auto next = store.next_task(id, annotator);
            if (!next) {
              res.status = 204;
              return;
            }
            const auto& [t, lease] = *next;
            send_json(res, 200,
                      {{"task_id", t.task_id},
                       {"prompt", t.prompt},
                       {"axis", t.axis},
                       {"left", {{"media_url", "/media/" + store.media_path(id, t, true)}}},
                       {"right", {{"media_url", "/media/" + store.media_path(id, t, false)}}},
                       {"lease_expires_at", lease.expires_at}});
          }));

  svr.Post(R"(/studies/([A-Za-z0-9_-]+)/votes)",
           guard([&store, send_json, annotator_of](const httplib::Request& req, httplib::Response& res) {
             const std::string id = req.matches[1];
             if (!store.contains(id)) throw StudyError(404, "unknown study " + id);
             auto body = nlohmann::json::parse(req.body);
             if (!body.is_object()) throw StudyError(422, "vote must be a JSON object");
             body["annotator_id"] = annotator_of(req, &body);
             body.erase("submitted_at");
             const VoteRecord v = vote_from_json(body);
             const auto ack = store.submit_vote(id, v);
             send_json(res, 200, {{"ok", true}, {"duplicate", ack.duplicate}});
           }));

  svr.Get(R"(/studies/([A-Za-z0-9_-]+)/ranking)",
          guard([&store, send_json](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, to_json(store.ranking(req.matches[1])));
          }));

  if (!media_root.empty() && std::filesystem::is_directory(media_root))
    svr.set_mount_point("/media", media_root.string());
}

}  // namespace vidcurate
