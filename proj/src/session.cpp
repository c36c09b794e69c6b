#include "examlab/session.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "examlab/error.hpp"

namespace examlab {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr SessionState kStates[] = {SessionState::Planned, SessionState::Provisioning, SessionState::Ready,
                                    SessionState::Open,    SessionState::Closing,      SessionState::BackedUp,
                                    SessionState::Released, SessionState::Failed};

bool is_path_segment(std::string_view s) {
  if (s.empty() || s == "." || s == "..") return false;
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isalnum(c) || c == '-' || c == '_' || c == '.'; });
}

json cost_to_json(const CostEstimate& c) {
  return json{{"node_hours", to_string(c.node_hours)},
              {"node_cost", c.node_cost.to_string()},
              {"mgmt_cost", c.mgmt_cost.to_string()},
              {"overhead_cost", c.overhead_cost.to_string()},
              {"total", c.total.to_string()},
              {"total_cents", c.total.value}};
}

}  // namespace

std::string_view to_string(SessionState state) {
  switch (state) {
    case SessionState::Planned: return "Planned";
    case SessionState::Provisioning: return "Provisioning";
    case SessionState::Ready: return "Ready";
    case SessionState::Open: return "Open";
    case SessionState::Closing: return "Closing";
    case SessionState::BackedUp: return "BackedUp";
    case SessionState::Released: return "Released";
    case SessionState::Failed: return "Failed";
  }
  return "?";
}

SessionState parse_session_state(std::string_view text) {
  for (auto s : kStates)
    if (to_string(s) == text) return s;
  throw Error(Errc::parse_error, "unknown session state: " + std::string(text));
}

bool is_legal_transition(SessionState from, SessionState to) {
  using S = SessionState;
  if (to == S::Failed) return from != S::Released && from != S::Failed;
  switch (from) {
    case S::Planned: return to == S::Provisioning;
    case S::Provisioning: return to == S::Ready;
    case S::Ready: return to == S::Open;
    case S::Open: return to == S::Closing;
    case S::Closing: return to == S::BackedUp;
    case S::BackedUp: return to == S::Released;
    case S::Failed: return to == S::Released;
    case S::Released: return false;
  }
  return false;
}

// Config

namespace {

class FieldReader {
 public:
  explicit FieldReader(const json& doc) : doc_(doc) {}

  template <typename T>
  std::optional<T> get(const std::string& dotted, bool required = true) {
    const json* node = &doc_;
    std::size_t start = 0;
    while (start <= dotted.size()) {
      const auto end = std::min(dotted.find('.', start), dotted.size());
      const std::string key = dotted.substr(start, end - start);
      if (!node->is_object() || !node->contains(key)) {
        if (required) problems.push_back(dotted + ": required");
        return std::nullopt;
      }
      node = &node->at(key);
      start = end + 1;
    }
    try {
      return node->get<T>();
    } catch (const json::exception&) {
      problems.push_back(dotted + ": wrong type");
      return std::nullopt;
    }
  }

  std::vector<std::string> problems;

 private:
  const json& doc_;
};

}  // namespace

SessionConfig parse_session_config(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ValidationError({"config: top level must be an object"});
  FieldReader r(doc);
  SessionConfig c;

  if (auto v = r.get<std::string>("session_id")) {
    c.session_id = *v;
    if (!is_path_segment(c.session_id)) r.problems.push_back("session_id: must be letters, digits, '-', '_' or '.'");
  }
  if (auto v = r.get<std::string>("base_url")) {
    c.base_url = *v;
    if (c.base_url.empty()) {
      r.problems.push_back("base_url: must not be empty");
    } else if (!url_origin(c.base_url)) {
      r.problems.push_back("base_url: must be an absolute http(s) URL");
    }
  }

  c.cluster.cluster_name = r.get<std::string>("cluster.cluster_name").value_or("");
  c.cluster.region = r.get<std::string>("cluster.region").value_or("");
  c.cluster.node_type_name = r.get<std::string>("cluster.node_type_name").value_or("");
  c.cluster.initial_node_count = r.get<int>("cluster.initial_node_count").value_or(0);
  c.cluster.autoscaling.enabled = r.get<bool>("cluster.autoscaling.enabled", false).value_or(false);
  c.cluster.autoscaling.min_nodes = r.get<int>("cluster.autoscaling.min_nodes", false).value_or(0);
  c.cluster.autoscaling.max_nodes = r.get<int>("cluster.autoscaling.max_nodes", false).value_or(0);
  c.cluster.auto_repair = r.get<bool>("cluster.auto_repair", false).value_or(false);
  c.cluster.auto_upgrade = r.get<bool>("cluster.auto_upgrade", false).value_or(false);
  if (doc.contains("cluster"))
    for (const auto& v : c.cluster.violations()) r.problems.push_back("cluster." + v);

  const double cpu = r.get<double>("pod_template.cpu", false).value_or(1.0);
  const double ram = r.get<double>("pod_template.ram_gb", false).value_or(3.75);
  if (!(cpu > 0) || !(ram > 0)) r.problems.push_back("pod_template: cpu and ram_gb must be > 0");
  c.pod_template = Resources::from(cpu, ram);

  c.backup.interval = Duration{r.get<std::int64_t>("backup.interval_s", false).value_or(900)};
  c.backup.final_on_close = r.get<bool>("backup.final_on_close", false).value_or(true);
  if (c.backup.interval.count() <= 0) r.problems.push_back("backup.interval_s: must be > 0");

  c.schedule.open_at = at_second(r.get<std::int64_t>("schedule.open_at").value_or(0));
  c.schedule.duration = Duration{r.get<std::int64_t>("schedule.duration_s").value_or(0)};
  if (doc.contains("schedule") && c.schedule.duration.count() <= 0)
    r.problems.push_back("schedule.duration_s: must be > 0");
  if (seconds_of(c.schedule.open_at) < 0) r.problems.push_back("schedule.open_at: must be >= 0");

  c.autoscale.enabled = c.cluster.autoscaling.enabled;
  c.autoscale.min_nodes = c.cluster.autoscaling.min_nodes;
  c.autoscale.max_nodes = c.cluster.autoscaling.max_nodes;
  c.autoscale.scale_down_idle = Duration{r.get<std::int64_t>("autoscale.scale_down_idle_s", false).value_or(600)};
  c.autoscale.headroom_pods = r.get<int>("autoscale.headroom_pods", false).value_or(0);
  if (c.autoscale.scale_down_idle.count() < 0) r.problems.push_back("autoscale.scale_down_idle_s: must be >= 0");
  if (c.autoscale.headroom_pods < 0) r.problems.push_back("autoscale.headroom_pods: must be >= 0");

  c.sim.provision_delay = Duration{r.get<std::int64_t>("sim.provision_delay_s", false).value_or(300)};
  c.sim.resize_delay_per_node = Duration{r.get<std::int64_t>("sim.resize_delay_per_node_s", false).value_or(20)};
  c.sim.repair_delay = Duration{r.get<std::int64_t>("sim.repair_delay_s", false).value_or(120)};
  c.sim.random_seed = r.get<std::uint64_t>("sim.random_seed", false).value_or(0);
  if (c.sim.provision_delay.count() < 0 || c.sim.resize_delay_per_node.count() < 0 || c.sim.repair_delay.count() < 0)
    r.problems.push_back("sim: delays must be >= 0");

  const auto resolve = [&](const std::string& field) -> fs::path {
    auto v = r.get<std::string>(field);
    if (!v) return {};
    fs::path p = *v;
    if (p.is_relative()) p = base_dir / p;
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) r.problems.push_back(field + ": file not found: " + p.string());
    return p;
  };
  c.catalog_path = resolve("catalog_path");
  c.roster_path = resolve("roster_path");

  if (auto w = r.get<std::int64_t>("estimate_window_s", false)) {
    if (*w < 0) r.problems.push_back("estimate_window_s: must be >= 0");
    c.estimate_window = Duration{*w};
  }
  if (auto p = r.get<std::string>("exam_link_path", false)) c.exam_link_path = *p;

  if (!r.problems.empty()) throw ValidationError(std::move(r.problems));
  return c;
}

SessionConfig load_session_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open config: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(Errc::parse_error, "config " + path.string() + ": " + e.what());
  }
  return parse_session_config(doc, fs::absolute(path).parent_path());
}

json to_json(const SessionConfig& c) {
  json doc{{"session_id", c.session_id},
           {"base_url", c.base_url},
           {"cluster", c.cluster},
           {"pod_template", {{"cpu", c.pod_template.cores()}, {"ram_gb", c.pod_template.ram_gb()}}},
           {"backup", {{"interval_s", c.backup.interval.count()}, {"final_on_close", c.backup.final_on_close}}},
           {"schedule", {{"open_at", seconds_of(c.schedule.open_at)}, {"duration_s", c.schedule.duration.count()}}},
           {"autoscale",
            {{"scale_down_idle_s", c.autoscale.scale_down_idle.count()}, {"headroom_pods", c.autoscale.headroom_pods}}},
           {"sim",
            {{"provision_delay_s", c.sim.provision_delay.count()},
             {"resize_delay_per_node_s", c.sim.resize_delay_per_node.count()},
             {"repair_delay_s", c.sim.repair_delay.count()},
             {"random_seed", c.sim.random_seed}}},
           {"catalog_path", c.catalog_path.string()},
           {"roster_path", c.roster_path.string()},
           {"exam_link_path", c.exam_link_path}};
  if (c.estimate_window) doc["estimate_window_s"] = c.estimate_window->count();
  return doc;
}

// Allowlist

std::optional<std::string> url_origin(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos || scheme_end == 0) return std::nullopt;
  std::string scheme(url.substr(0, scheme_end));
  std::transform(scheme.begin(), scheme.end(), scheme.begin(), [](unsigned char c) { return std::tolower(c); });
  if (scheme != "http" && scheme != "https") return std::nullopt;
  const auto host_start = scheme_end + 3;
  const auto host_end = std::min(url.find_first_of("/?#", host_start), url.size());
  std::string host(url.substr(host_start, host_end - host_start));
  if (host.empty() || host.find('@') != std::string::npos) return std::nullopt;
  std::transform(host.begin(), host.end(), host.begin(), [](unsigned char c) { return std::tolower(c); });
  return scheme + "://" + host;
}

AllowlistManifest make_allowlist(std::string_view base_url, std::string_view session_id, std::string_view link_path) {
  if (base_url.empty()) throw Error(Errc::base_url_unset, "base_url is not set");
  auto origin = url_origin(base_url);
  if (!origin) throw Error(Errc::invalid_argument, "base_url has no origin: " + std::string(base_url));
  std::string base(base_url);
  while (!base.empty() && base.back() == '/') base.pop_back();
  return AllowlistManifest{{*origin}, base + std::string(link_path) + std::string(session_id)};
}

void to_json(json& j, const AllowlistManifest& m) { j = json{{"urls", m.urls}, {"exam_link", m.exam_link}}; }

void to_json(json& j, const JournalEntry& e) {
  j = json{{"t", seconds_of(e.t)}, {"kind", e.kind}, {"detail", e.detail}};
}

void from_json(const json& j, JournalEntry& e) {
  e.t = at_second(j.at("t").get<std::int64_t>());
  e.kind = j.at("kind").get<std::string>();
  e.detail = j.at("detail");
}

// Simulated workspace storage

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Workspace SimulatedWorkspaces::fetch(std::string_view student_uid, Timestamp now) {
  if (auto it = failures_.find(student_uid); it != failures_.end() && it->second > 0) {
    if (--it->second == 0) failures_.erase(it);
    throw Error(Errc::storage_failure, "workspace storage unreachable for " + std::string(student_uid));
  }
  const std::uint64_t student = mix(seed_ ^ fnv1a(student_uid));
  const std::int64_t minute = std::max<std::int64_t>(0, seconds_of(now) / 60);

  Workspace ws;
  ws.student_uid = std::string(student_uid);
  ws.files["README.md"] = "# Exam workspace\n\nSave your answers under answers/.\n";

  // Each student edits on roughly two minutes out of three.
  std::int64_t edits = 0;
  for (std::int64_t m = 0; m <= minute; ++m)
    if (mix(student + static_cast<std::uint64_t>(m)) % 3 != 0) ++edits;

  std::ostringstream notebook;
  notebook << "{\"cells\": [";
  for (std::int64_t i = 0; i < edits; ++i) {
    if (i) notebook << ", ";
    notebook << "{\"source\": \"x_" << i << " = " << (mix(student ^ static_cast<std::uint64_t>(i)) % 1000) << "\"}";
  }
  notebook << "]}\n";
  ws.files["exam.ipynb"] = notebook.str();

  const std::int64_t answered = minute / 20;
  for (std::int64_t q = 1; q <= answered && q <= 6; ++q) {
    ws.files["answers/q" + std::to_string(q) + ".py"] =
        "def solve():\n    return " + std::to_string(mix(student + 1000 + static_cast<std::uint64_t>(q)) % 97) + "\n";
  }
  return ws;
}

void SimulatedWorkspaces::fail_next(std::string_view student_uid, int times) {
  failures_[std::string(student_uid)] += times;
}

json to_json(const SessionStatus& s) {
  json doc{{"session_id", s.session_id},
           {"state", to_string(s.state)},
           {"now", seconds_of(s.now)},
           {"cluster_phase", s.cluster_phase ? json(to_string(*s.cluster_phase)) : json(nullptr)},
           {"node_count", s.node_count},
           {"healthy_count", s.healthy_count},
           {"students", s.students},
           {"pods_placed", s.pods_placed},
           {"unplaced", s.unplaced},
           {"cost_so_far", cost_to_json(s.cost_so_far)},
           {"opened_at", s.opened_at ? json(seconds_of(*s.opened_at)) : json(nullptr)},
           {"closes_at", s.closes_at ? json(seconds_of(*s.closes_at)) : json(nullptr)},
           {"next_backup_at", s.next_backup_at ? json(seconds_of(*s.next_backup_at)) : json(nullptr)},
           {"snapshot_counts", s.snapshot_counts}};
  return doc;
}

// ExamSession

ExamSession::ExamSession(SessionConfig config, SessionDeps deps) : config_(std::move(config)), deps_(deps) {}

ExamSession ExamSession::plan(SessionConfig config, SessionDeps deps) {
  std::vector<std::string> problems;
  if (!is_path_segment(config.session_id)) problems.push_back("session_id: invalid");
  if (config.base_url.empty()) {
    problems.push_back("base_url: must not be empty");
  } else if (!url_origin(config.base_url)) {
    problems.push_back("base_url: must be an absolute http(s) URL");
  }
  for (const auto& v : config.cluster.violations()) problems.push_back("cluster." + v);
  const NodeType* type = deps.catalog.find(config.cluster.node_type_name);
  if (!type) {
    problems.push_back("cluster.node_type_name: unknown node type '" + config.cluster.node_type_name + "'");
  } else if (!config.pod_template.fits_in(capacity_of(*type))) {
    problems.push_back("pod_template: does not fit on a single " + type->name + " node");
  }
  if (config.backup.interval.count() <= 0) problems.push_back("backup.interval_s: must be > 0");
  if (config.schedule.duration.count() <= 0) problems.push_back("schedule.duration_s: must be > 0");
  if (config.autoscale.enabled) {
    try {
      config.autoscale.validate();
    } catch (const Error& e) {
      problems.push_back(std::string("autoscale: ") + e.what());
    }
  }
  std::vector<std::string> students;
  for (const auto& u : deps.directory.users(Role::Student)) students.push_back(u.uid);
  if (students.empty()) problems.push_back("roster: no students");
  if (!problems.empty()) throw ValidationError(std::move(problems));

  ExamSession s(std::move(config), deps);
  s.students_ = std::move(students);
  s.planned_estimate_ = estimate_fixed(deps.catalog, s.config_.cluster.node_type_name,
                                       s.config_.cluster.initial_node_count,
                                       Rational(s.config_.priced_window().count()) / 3600);
  s.journal(s.now_, "planned",
            json{{"estimate", cost_to_json(s.planned_estimate_)},
                 {"window_s", s.config_.priced_window().count()},
                 {"students", s.students_.size()}});
  return s;
}

void ExamSession::journal(Timestamp t, std::string kind, json detail) {
  journal_.push_back(JournalEntry{t, std::move(kind), std::move(detail)});
}

void ExamSession::transition(SessionState to, Timestamp now, std::string note) {
  if (!is_legal_transition(state_, to))
    throw Error(Errc::illegal_transition,
                "illegal transition " + std::string(to_string(state_)) + " -> " + std::string(to_string(to)));
  json detail{{"from", to_string(state_)}, {"to", to_string(to)}};
  if (!note.empty()) detail["note"] = std::move(note);
  state_ = to;
  journal(now, "state", std::move(detail));
}

void ExamSession::enter(Timestamp now) {
  if (now < now_)
    throw Error(Errc::invalid_argument, "time went backwards: t=" + std::to_string(seconds_of(now)) + " < t=" +
                                            std::to_string(seconds_of(now_)));
  sync(now);
}

void ExamSession::sync(Timestamp now) {
  if (now < now_)
    throw Error(Errc::invalid_argument, "time went backwards: t=" + std::to_string(seconds_of(now)) + " < t=" +
                                            std::to_string(seconds_of(now_)));
  now_ = now;
  for (const auto& e : deps_.provider.poll(now)) apply(e);
  refresh_placement(now);
}

void ExamSession::apply(const ProviderEvent& e) {
  if (e.cluster != config_.cluster.cluster_name) return;
  journal(e.t, "provider", json(e));
  switch (e.kind) {
    case EventKind::ClusterRunning:
      if (!usage_closed_) usage_.record(e.t, e.node_count);
      if (state_ == SessionState::Provisioning) transition(SessionState::Ready, e.t);
      break;
    case EventKind::NodeAdded:
    case EventKind::NodeRemoved:
    case EventKind::NodeReplaced:
      if (usage_started() && !usage_closed_) usage_.record(e.t, e.node_count);
      break;
    case EventKind::ClusterDeleted:
      if (usage_started() && !usage_closed_) {
        usage_.end = std::max(usage_.end, e.t);
        usage_closed_ = true;
      }
      break;
    default:
      break;
  }
}

std::vector<PodSpec> ExamSession::active_pods() const {
  std::vector<PodSpec> pods;
  if (!pods_active_) return pods;
  pods.reserve(students_.size() + extra_pods_.size());
  for (const auto& uid : students_) pods.push_back(PodSpec{uid, config_.pod_template});
  pods.insert(pods.end(), extra_pods_.begin(), extra_pods_.end());
  return pods;
}

void ExamSession::refresh_placement(Timestamp now) {
  std::vector<NodeCapacity> nodes;
  if (handle_) {
    const auto cluster = deps_.provider.state(*handle_);
    const auto capacity = capacity_of(deps_.catalog.at(config_.cluster.node_type_name));
    for (const auto& n : cluster.nodes)
      if (n.health == NodeHealth::Healthy) nodes.push_back(NodeCapacity{n.node_id, capacity});
  }
  const auto pods = active_pods();
  placement_ = place(pods, nodes);

  std::map<std::string, Timestamp> idle;
  for (const auto& n : placement_.nodes) {
    if (n.pod_count != 0) continue;
    auto it = idle_since_.find(n.node_id);
    idle.emplace(n.node_id, it == idle_since_.end() ? now : it->second);
  }
  idle_since_ = std::move(idle);
}

void ExamSession::provision(Timestamp now) {
  enter(now);
  transition(SessionState::Provisioning, now);
  try {
    handle_ = deps_.provider.create_cluster(config_.cluster);
  } catch (const Error& e) {
    journal(now, "provider-error", json{{"code", to_string(e.code())}, {"message", e.what()}});
    transition(SessionState::Failed, now, "provider error");
    throw;
  }
  journal(now, "create-cluster", json{{"cluster", config_.cluster.cluster_name}, {"handle", handle_->id}});
  sync(now);
}

AllowlistManifest ExamSession::open_exam(Timestamp now, bool allow_early) {
  enter(now);
  if (state_ != SessionState::Ready)
    throw Error(Errc::illegal_transition, "cannot open from " + std::string(to_string(state_)));
  if (now < config_.schedule.open_at && !allow_early)
    throw Error(Errc::too_early,
                "exam opens at t=" + std::to_string(seconds_of(config_.schedule.open_at)) + "; use early open to override");
  const auto manifest = allowlist_manifest();

  pods_active_ = true;
  refresh_placement(now);
  if (!placement_.unplaced.empty() && !config_.autoscale.enabled) {
    const auto unplaced = placement_.unplaced.size();
    pods_active_ = false;
    refresh_placement(now);
    throw Error(Errc::capacity, std::to_string(unplaced) + " of " + std::to_string(students_.size() + extra_pods_.size()) +
                                    " workspaces do not fit and autoscaling is disabled");
  }

  transition(SessionState::Open, now);
  opened_at_ = now;
  closes_at_ = now + config_.schedule.duration;
  periodic_ticks_.clear();
  for (const auto& tick : due_ticks(config_.backup, *opened_at_, *closes_at_))
    if (tick.kind == SnapshotKind::Periodic) periodic_ticks_.push_back(tick.at);
  next_tick_ = 0;
  journal(now, "open",
          json{{"manifest", manifest},
               {"closes_at", seconds_of(*closes_at_)},
               {"placed", placement_.assignments.size()},
               {"unplaced", placement_.unplaced.size()}});
  return manifest;
}

std::vector<std::string> ExamSession::capture_all(SnapshotKind kind, Timestamp now,
                                                  const std::vector<std::string>& who) {
  std::vector<std::string> failed;
  for (const auto& uid : who) {
    try {
      const auto ws = deps_.workspaces.fetch(uid, now);
      const auto snap = deps_.store.capture(ws, config_.session_id, now, kind);
      journal(now, "snapshot",
              json{{"student", uid},
                   {"seq", snap.seq},
                   {"kind", to_string(kind)},
                   {"snapshot_id", snap.snapshot_id},
                   {"files", snap.manifest.size()}});
    } catch (const Error& e) {
      journal(now, "snapshot-failed",
              json{{"student", uid}, {"kind", to_string(kind)}, {"code", to_string(e.code())}, {"message", e.what()}});
      failed.push_back(uid);
    }
  }
  return failed;
}

std::vector<JournalEntry> ExamSession::tick(Timestamp now) {
  enter(now);
  if (state_ != SessionState::Open)
    throw Error(Errc::illegal_transition, "tick requires Open, session is " + std::string(to_string(state_)));
  const std::size_t before = journal_.size();

  bool due = false;
  while (next_tick_ < periodic_ticks_.size() && periodic_ticks_[next_tick_] <= now) {
    journal(now, "backup-tick", json{{"scheduled_at", seconds_of(periodic_ticks_[next_tick_])}});
    ++next_tick_;
    due = true;
  }
  if (due) {
    retry_.clear();
    for (auto& uid : capture_all(SnapshotKind::Periodic, now, students_)) retry_.insert(std::move(uid));
  } else if (!retry_.empty()) {
    std::vector<std::string> who(retry_.begin(), retry_.end());
    retry_.clear();
    for (auto& uid : capture_all(SnapshotKind::Periodic, now, who)) retry_.insert(std::move(uid));
  }

  if (config_.autoscale.enabled && handle_) {
    const auto cluster = deps_.provider.state(*handle_);
    if (cluster.phase == ClusterPhase::Running) {
      std::vector<IdleNode> idle;
      for (const auto& [node, since] : idle_since_) idle.push_back(IdleNode{node, now - since});
      const auto capacity = capacity_of(deps_.catalog.at(config_.cluster.node_type_name));
      const int current = static_cast<int>(cluster.nodes.size());
      const auto decision = autoscale_decision(current, placement_, capacity, config_.autoscale, idle);
      if (const auto* resize = std::get_if<ResizeTo>(&decision)) {
        deps_.provider.resize_cluster(*handle_, resize->target);
        journal(now, "resize",
                json{{"from", current},
                     {"target", resize->target},
                     {"reason", "autoscale"},
                     {"unplaced", placement_.unplaced.size()}});
        sync(now);
      }
    }
  }
  return {journal_.begin() + static_cast<std::ptrdiff_t>(before), journal_.end()};
}

void ExamSession::resize(int target, Timestamp now) {
  enter(now);
  if (state_ != SessionState::Ready && state_ != SessionState::Open)
    throw Error(Errc::illegal_transition, "cannot resize while " + std::string(to_string(state_)));
  const int current = static_cast<int>(deps_.provider.state(*handle_).nodes.size());
  const auto ack = deps_.provider.resize_cluster(*handle_, target);
  journal(now, "resize",
          json{{"from", current},
               {"target", target},
               {"reason", "manual"},
               {"no_op", ack.no_op},
               {"completes_at", seconds_of(ack.completes_at)}});
  sync(now);
}

std::vector<Snapshot> ExamSession::backup_now(Timestamp now) {
  enter(now);
  if (state_ != SessionState::Open && state_ != SessionState::Closing && state_ != SessionState::BackedUp)
    throw Error(Errc::illegal_transition, "no workspaces to back up while " + std::string(to_string(state_)));
  const auto failed = capture_all(SnapshotKind::Manual, now, students_);
  std::vector<Snapshot> out;
  for (const auto& uid : students_) {
    if (std::find(failed.begin(), failed.end(), uid) != failed.end()) continue;
    auto timeline = deps_.store.timeline(config_.session_id, uid);
    if (!timeline.empty()) out.push_back(timeline.back());
  }
  return out;
}

std::vector<std::string> ExamSession::missing_finals() const {
  std::vector<std::string> missing;
  for (const auto& uid : students_) {
    const auto timeline = deps_.store.timeline(config_.session_id, uid);
    const bool has_final = std::any_of(timeline.begin(), timeline.end(), [&](const Snapshot& s) {
      return s.kind == SnapshotKind::Final && closes_at_ && s.captured_at >= std::min(*closes_at_, now_) &&
             opened_at_ && s.captured_at >= *opened_at_;
    });
    if (!has_final) missing.push_back(uid);
  }
  return missing;
}

void ExamSession::close_exam(Timestamp now, bool force) {
  enter(now);
  if (state_ == SessionState::Open) {
    if (now < *closes_at_ && !force)
      throw Error(Errc::not_expired,
                  "exam runs until t=" + std::to_string(seconds_of(*closes_at_)) + "; use force to close early");
    if (now < *closes_at_) journal(now, "warning", json{{"action", "force-close"}, {"closes_at", seconds_of(*closes_at_)}});
    // Periodic ticks that came due before the close still run.
    bool due = false;
    while (next_tick_ < periodic_ticks_.size() && periodic_ticks_[next_tick_] <= now) {
      journal(now, "backup-tick", json{{"scheduled_at", seconds_of(periodic_ticks_[next_tick_])}});
      ++next_tick_;
      due = true;
    }
    if (due) capture_all(SnapshotKind::Periodic, now, students_);
    retry_.clear();
    transition(SessionState::Closing, now);
  } else if (state_ != SessionState::Closing) {
    throw Error(Errc::illegal_transition, "cannot close from " + std::string(to_string(state_)));
  }

  if (config_.backup.final_on_close) {
    const auto missing = missing_finals();
    if (!missing.empty()) capture_all(SnapshotKind::Final, now, missing);
    const auto still_missing = missing_finals();
    if (!still_missing.empty()) {
      if (!force) {
        std::string list;
        for (const auto& uid : still_missing) list += (list.empty() ? "" : ", ") + uid;
        throw Error(Errc::missing_final, "final snapshot missing for: " + list);
      }
      journal(now, "warning", json{{"action", "force-backed-up"}, {"missing_final", still_missing}});
    }
  }
  transition(SessionState::BackedUp, now);
}

void ExamSession::finish_release(Timestamp now) {
  if (handle_ && deps_.provider.state(*handle_).phase != ClusterPhase::Deleted) {
    deps_.provider.delete_cluster(*handle_);
    journal(now, "delete-cluster", json{{"cluster", config_.cluster.cluster_name}});
  }
  pods_active_ = false;
  sync(now);
  if (usage_started() && !usage_closed_) {
    usage_.end = std::max(usage_.end, now);
    usage_closed_ = true;
  }
  const auto cost = cost_so_far();
  journal(now, "cost",
          json{{"estimate", cost_to_json(cost)},
               {"running_window_s", usage_.span().count()},
               {"planned", cost_to_json(planned_estimate_)}});
}

CostEstimate ExamSession::release(Timestamp now, bool force) {
  enter(now);
  switch (state_) {
    case SessionState::BackedUp:
      break;
    case SessionState::Open:
    case SessionState::Closing:
      if (!force)
        throw Error(Errc::backup_guard, "refusing to release while " + std::string(to_string(state_)) +
                                            ": final backups are not complete (use force to override)");
      [[fallthrough]];
    case SessionState::Planned:
    case SessionState::Provisioning:
    case SessionState::Ready:
      if (!force)
        throw Error(Errc::illegal_transition, "cannot release from " + std::string(to_string(state_)));
      journal(now, "warning", json{{"action", "force-release"}, {"from", to_string(state_)}});
      transition(SessionState::Failed, now, "forced release");
      break;
    case SessionState::Failed:
      if (!force) throw Error(Errc::illegal_transition, "release from Failed requires force");
      journal(now, "warning", json{{"action", "force-release"}, {"from", to_string(state_)}});
      break;
    case SessionState::Released:
      throw Error(Errc::illegal_transition, "session already released");
  }
  finish_release(now);
  transition(SessionState::Released, now);
  return cost_so_far();
}

AuthSession ExamSession::login(std::string_view uid, std::string_view secret, Timestamp now) {
  enter(now);
  AuthSession session;
  try {
    session = deps_.directory.authenticate(uid, secret, now);
  } catch (const Error& e) {
    journal(now, "login-denied", json{{"uid", uid}, {"code", to_string(e.code())}});
    throw;
  }
  if (session.role == Role::Student && state_ != SessionState::Open) {
    journal(now, "login-denied", json{{"uid", uid}, {"code", to_string(Errc::login_closed)}});
    throw Error(Errc::login_closed, "logins are closed while " + std::string(to_string(state_)));
  }
  journal(now, "login", json{{"uid", uid}, {"role", to_string(session.role)}});
  return session;
}

AuthSession ExamSession::impersonate(const AuthSession& teacher, std::string_view student_uid, Timestamp now) {
  enter(now);
  auto session = deps_.directory.impersonate(teacher, student_uid, now);
  journal(now, "impersonate", json{{"actor", teacher.uid}, {"target", student_uid}});
  return session;
}

void ExamSession::inject_demand(std::vector<PodSpec> pods, Timestamp now) {
  enter(now);
  if (state_ != SessionState::Open)
    throw Error(Errc::illegal_transition, "extra workspaces need an Open session");
  json uids = json::array();
  for (const auto& p : pods) uids.push_back(p.student_uid);
  extra_pods_.insert(extra_pods_.end(), std::make_move_iterator(pods.begin()), std::make_move_iterator(pods.end()));
  journal(now, "demand", json{{"pods", std::move(uids)}});
  refresh_placement(now);
}

AllowlistManifest ExamSession::allowlist_manifest() const {
  return make_allowlist(config_.base_url, config_.session_id, config_.exam_link_path);
}

CostEstimate ExamSession::cost_so_far() const {
  if (!usage_started()) return estimate_fixed(deps_.catalog, config_.cluster.node_type_name, 0, 0);
  UsageTimeline so_far = usage_;
  if (!usage_closed_) so_far.end = std::max(so_far.end, now_);
  return estimate_timeline(deps_.catalog, config_.cluster.node_type_name, so_far);
}

std::optional<Timestamp> ExamSession::next_backup_at() const {
  if (state_ != SessionState::Open) return std::nullopt;
  if (next_tick_ < periodic_ticks_.size()) return periodic_ticks_[next_tick_];
  return closes_at_;
}

SessionStatus ExamSession::status() const {
  SessionStatus s;
  s.session_id = config_.session_id;
  s.state = state_;
  s.now = now_;
  if (handle_) {
    const auto cluster = deps_.provider.state(*handle_);
    s.cluster_phase = cluster.phase;
    s.node_count = static_cast<int>(cluster.nodes.size());
    s.healthy_count = cluster.healthy_count();
  }
  s.students = students_.size();
  s.pods_placed = placement_.assignments.size();
  for (const auto& p : placement_.unplaced) s.unplaced.push_back(p.student_uid);
  s.cost_so_far = cost_so_far();
  s.opened_at = opened_at_;
  s.closes_at = closes_at_;
  s.next_backup_at = next_backup_at();
  for (const auto& uid : students_) s.snapshot_counts[uid] = deps_.store.timeline(config_.session_id, uid).size();
  return s;
}

json ExamSession::save() const {
  json usage_points = json::array();
  for (const auto& p : usage_.points) usage_points.push_back(json{{"t", seconds_of(p.at)}, {"nodes", p.node_count}});
  json extra = json::array();
  for (const auto& p : extra_pods_)
    extra.push_back(json{{"uid", p.student_uid}, {"milli_cpu", p.request.milli_cpu}, {"ram_mib", p.request.ram_mib}});
  json idle = json::object();
  for (const auto& [node, since] : idle_since_) idle[node] = seconds_of(since);
  json ticks = json::array();
  for (auto t : periodic_ticks_) ticks.push_back(seconds_of(t));
  const auto opt_time = [](const std::optional<Timestamp>& t) { return t ? json(seconds_of(*t)) : json(nullptr); };
  return json{{"state", to_string(state_)},
              {"now", seconds_of(now_)},
              {"students", students_},
              {"extra_pods", std::move(extra)},
              {"journal", journal_},
              {"usage", {{"points", std::move(usage_points)}, {"end", seconds_of(usage_.end)}, {"closed", usage_closed_}}},
              {"handle", handle_ ? json(handle_->id) : json(nullptr)},
              {"pods_active", pods_active_},
              {"idle_since", std::move(idle)},
              {"opened_at", opt_time(opened_at_)},
              {"closes_at", opt_time(closes_at_)},
              {"periodic_ticks", std::move(ticks)},
              {"next_tick", next_tick_},
              {"retry", retry_}};
}

ExamSession ExamSession::restore(const json& saved, SessionConfig config, SessionDeps deps) {
  ExamSession s(std::move(config), deps);
  try {
    s.state_ = parse_session_state(saved.at("state").get<std::string>());
    s.now_ = at_second(saved.at("now").get<std::int64_t>());
    s.students_ = saved.at("students").get<std::vector<std::string>>();
    for (const auto& p : saved.at("extra_pods"))
      s.extra_pods_.push_back(PodSpec{p.at("uid").get<std::string>(),
                                      {p.at("milli_cpu").get<std::int64_t>(), p.at("ram_mib").get<std::int64_t>()}});
    s.journal_ = saved.at("journal").get<std::vector<JournalEntry>>();
    const auto& usage = saved.at("usage");
    for (const auto& p : usage.at("points"))
      s.usage_.points.push_back({at_second(p.at("t").get<std::int64_t>()), p.at("nodes").get<std::int64_t>()});
    s.usage_.end = at_second(usage.at("end").get<std::int64_t>());
    s.usage_closed_ = usage.at("closed").get<bool>();
    if (!saved.at("handle").is_null()) s.handle_ = ClusterHandle{saved.at("handle").get<std::uint64_t>()};
    s.pods_active_ = saved.at("pods_active").get<bool>();
    for (const auto& [node, since] : saved.at("idle_since").items())
      s.idle_since_.emplace(node, at_second(since.get<std::int64_t>()));
    const auto opt_time = [](const json& j) -> std::optional<Timestamp> {
      if (j.is_null()) return std::nullopt;
      return at_second(j.get<std::int64_t>());
    };
    s.opened_at_ = opt_time(saved.at("opened_at"));
    s.closes_at_ = opt_time(saved.at("closes_at"));
    for (const auto& t : saved.at("periodic_ticks")) s.periodic_ticks_.push_back(at_second(t.get<std::int64_t>()));
    s.next_tick_ = saved.at("next_tick").get<std::size_t>();
    s.retry_ = saved.at("retry").get<std::set<std::string>>();
  } catch (const json::exception& e) {
    throw Error(Errc::parse_error, std::string("saved session: ") + e.what());
  }
  s.planned_estimate_ =
      estimate_fixed(deps.catalog, s.config_.cluster.node_type_name, s.config_.cluster.initial_node_count,
                     Rational(s.config_.priced_window().count()) / 3600);
  s.refresh_placement(s.now_);
  return s;
}

}  // namespace examlab
