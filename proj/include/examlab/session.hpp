#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "examlab/backup.hpp"
#include "examlab/directory.hpp"
#include "examlab/pricing.hpp"
#include "examlab/provider.hpp"
#include "examlab/scheduler.hpp"
#include "examlab/time.hpp"

namespace examlab {

enum class SessionState { Planned, Provisioning, Ready, Open, Closing, BackedUp, Released, Failed };

std::string_view to_string(SessionState state);
SessionState parse_session_state(std::string_view text);

// Planned -> Provisioning -> Ready -> Open -> Closing -> BackedUp -> Released,
// any non-terminal state -> Failed, Failed -> Released.
bool is_legal_transition(SessionState from, SessionState to);

struct Schedule {
  Timestamp open_at;
  Duration duration{0};
};

struct SessionConfig {
  std::string session_id;
  std::string base_url;
  ClusterSpec cluster;
  Resources pod_template = Resources::from(1.0, 3.75);
  BackupPolicy backup;
  Schedule schedule;
  AutoscalePolicy autoscale;
  SimConfig sim;
  std::filesystem::path catalog_path;
  std::filesystem::path roster_path;
  // Window priced at plan time; the exam duration unless set.
  std::optional<Duration> estimate_window;
  std::string exam_link_path = "/hub/login?session=";

  Duration priced_window() const { return estimate_window.value_or(schedule.duration); }
};

// Relative paths in the file resolve against `base_dir`. Throws
// ValidationError listing every bad field.
SessionConfig parse_session_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
SessionConfig load_session_config(const std::filesystem::path& path);
nlohmann::json to_json(const SessionConfig& config);

struct AllowlistManifest {
  std::vector<std::string> urls;
  std::string exam_link;

  friend bool operator==(const AllowlistManifest&, const AllowlistManifest&) = default;
};

void to_json(nlohmann::json& j, const AllowlistManifest& m);

// scheme://host[:port] of an absolute URL; nullopt if it has none.
std::optional<std::string> url_origin(std::string_view url);

// Throws Errc::base_url_unset, or Errc::invalid_argument for a URL without origin.
AllowlistManifest make_allowlist(std::string_view base_url, std::string_view session_id,
                                 std::string_view link_path = "/hub/login?session=");

struct JournalEntry {
  Timestamp t;
  std::string kind;
  nlohmann::json detail;
};

void to_json(nlohmann::json& j, const JournalEntry& e);
void from_json(const nlohmann::json& j, JournalEntry& e);

// Where backups read student files from: the cluster's workspace storage.
class WorkspaceSource {
 public:
  virtual ~WorkspaceSource() = default;
  virtual Workspace fetch(std::string_view student_uid, Timestamp now) = 0;
};

// Students typing into a notebook and a few answer files. Content depends only
// on (seed, uid, now).
class SimulatedWorkspaces final : public WorkspaceSource {
 public:
  explicit SimulatedWorkspaces(std::uint64_t seed = 0) : seed_(seed) {}

  Workspace fetch(std::string_view student_uid, Timestamp now) override;

  // The next `times` fetches for this student fail as unreachable storage.
  void fail_next(std::string_view student_uid, int times = 1);

 private:
  std::uint64_t seed_;
  std::map<std::string, int, std::less<>> failures_;
};

struct SessionDeps {
  const PriceCatalog& catalog;
  Directory& directory;
  SnapshotStore& store;
  ClusterProvider& provider;
  WorkspaceSource& workspaces;
};

struct SessionStatus {
  std::string session_id;
  SessionState state = SessionState::Planned;
  Timestamp now;
  std::optional<ClusterPhase> cluster_phase;
  int node_count = 0;
  int healthy_count = 0;
  std::size_t students = 0;
  std::size_t pods_placed = 0;
  std::vector<std::string> unplaced;
  CostEstimate cost_so_far;
  std::optional<Timestamp> opened_at;
  std::optional<Timestamp> closes_at;
  std::optional<Timestamp> next_backup_at;
  std::map<std::string, std::size_t> snapshot_counts;
};

nlohmann::json to_json(const SessionStatus& s);

// One exam window: owns the lifecycle and everything journaled about it.
// Every operation takes the current virtual time, which must never go
// backwards. Rejected calls leave state and journal untouched.
class ExamSession {
 public:
  // Validates the config against the catalog and roster. Throws
  // ValidationError.
  static ExamSession plan(SessionConfig config, SessionDeps deps);
  static ExamSession restore(const nlohmann::json& saved, SessionConfig config, SessionDeps deps);
  nlohmann::json save() const;

  void provision(Timestamp now);
  // Pulls provider events up to `now` and applies them.
  void sync(Timestamp now);
  AllowlistManifest open_exam(Timestamp now, bool allow_early = false);
  std::vector<JournalEntry> tick(Timestamp now);
  void resize(int target, Timestamp now);
  std::vector<Snapshot> backup_now(Timestamp now);
  void close_exam(Timestamp now, bool force = false);
  CostEstimate release(Timestamp now, bool force = false);

  AuthSession login(std::string_view uid, std::string_view secret, Timestamp now);
  AuthSession impersonate(const AuthSession& teacher, std::string_view student_uid, Timestamp now);
  void inject_demand(std::vector<PodSpec> pods, Timestamp now);

  AllowlistManifest allowlist_manifest() const;
  SessionStatus status() const;
  CostEstimate cost_so_far() const;

  const std::string& id() const { return config_.session_id; }
  SessionState state() const { return state_; }
  const SessionConfig& config() const { return config_; }
  const CostEstimate& planned_estimate() const { return planned_estimate_; }
  const std::vector<JournalEntry>& journal() const { return journal_; }
  const UsageTimeline& usage() const { return usage_; }
  bool usage_started() const { return !usage_.points.empty(); }
  const Placement& placement() const { return placement_; }
  const std::vector<std::string>& students() const { return students_; }
  std::optional<ClusterHandle> cluster() const { return handle_; }
  Timestamp last_time() const { return now_; }
  std::optional<Timestamp> opened_at() const { return opened_at_; }
  std::optional<Timestamp> closes_at() const { return closes_at_; }
  std::optional<Timestamp> next_backup_at() const;

 private:
  ExamSession(SessionConfig config, SessionDeps deps);

  void enter(Timestamp now);
  void transition(SessionState to, Timestamp now, std::string note = {});
  void journal(Timestamp t, std::string kind, nlohmann::json detail);
  void apply(const ProviderEvent& event);
  void refresh_placement(Timestamp now);
  std::vector<PodSpec> active_pods() const;
  std::vector<std::string> capture_all(SnapshotKind kind, Timestamp now, const std::vector<std::string>& who);
  std::vector<std::string> missing_finals() const;
  void finish_release(Timestamp now);

  SessionConfig config_;
  SessionDeps deps_;
  SessionState state_ = SessionState::Planned;
  Timestamp now_{};
  CostEstimate planned_estimate_;
  std::vector<std::string> students_;
  std::vector<PodSpec> extra_pods_;
  std::vector<JournalEntry> journal_;
  UsageTimeline usage_;
  bool usage_closed_ = false;
  std::optional<ClusterHandle> handle_;
  bool pods_active_ = false;
  Placement placement_;
  std::map<std::string, Timestamp> idle_since_;
  std::optional<Timestamp> opened_at_;
  std::optional<Timestamp> closes_at_;
  std::vector<Timestamp> periodic_ticks_;
  std::size_t next_tick_ = 0;
  std::set<std::string> retry_;
};

}  // namespace examlab
