#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "examlab/control.hpp"
#include "examlab/digest.hpp"

namespace examlab {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::int64_t epoch_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(Errc::parse_error, path.string() + ": " + e.what());
  }
}

void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw Error(Errc::io_error, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(Errc::io_error, "cannot replace " + path.string() + ": " + ec.message());
}

}  // namespace

int http_status_for(Errc code) {
  switch (code) {
    case Errc::invalid_credentials:
    case Errc::session_expired:
    case Errc::unauthenticated:
      return 401;
    case Errc::not_teacher:
      return 403;
    case Errc::unknown_session:
    case Errc::unknown_student:
    case Errc::unknown_snapshot:
    case Errc::not_found:
      return 404;
    case Errc::illegal_transition:
    case Errc::backup_guard:
    case Errc::capacity:
    case Errc::missing_final:
    case Errc::not_expired:
    case Errc::too_early:
    case Errc::login_closed:
    case Errc::not_running:
    case Errc::duplicate_cluster:
      return 409;
    case Errc::validation:
    case Errc::invalid_argument:
    case Errc::parse_error:
    case Errc::pod_too_large:
    case Errc::invalid_spec:
    case Errc::invalid_path:
    case Errc::unknown_node_type:
      return 422;
    default:
      return 500;
  }
}

ApiError to_api_error(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e))
    return ApiError{http_status_for(err->code()), std::string(to_string(err->code())), err->what()};
  if (dynamic_cast<const json::exception*>(&e)) return ApiError{422, "invalid-body", e.what()};
  return ApiError{500, "internal", e.what()};
}

fs::path data_home() {
  if (const char* home = std::getenv("EXAMLAB_HOME"); home && *home) return home;
  return fs::current_path() / "examlab-data";
}

// SessionHost

SessionHost::SessionHost(SessionConfig config, PriceCatalog catalog, const fs::path& home)
    : home_(home),
      config_(std::move(config)),
      catalog_(std::move(catalog)),
      directory_(std::make_unique<Directory>()),
      provider_(config_.sim),
      workspaces_(config_.sim.random_seed) {
  directory_->import_roster(config_.roster_path);
  store_ = std::make_unique<SnapshotStore>(home_ / "store");
}

SessionDeps SessionHost::deps() { return SessionDeps{catalog_, *directory_, *store_, provider_, workspaces_}; }

fs::path SessionHost::dir() const { return home_ / "sessions" / config_.session_id; }

std::unique_ptr<SessionHost> SessionHost::plan(const fs::path& config_path, const fs::path& home,
                                               std::optional<fs::path> catalog_override) {
  auto config = load_session_config(config_path);
  if (catalog_override) config.catalog_path = fs::absolute(*catalog_override);
  auto catalog = load_catalog(config.catalog_path);
  std::unique_ptr<SessionHost> host(new SessionHost(std::move(config), std::move(catalog), home));
  host->session_.emplace(ExamSession::plan(host->config_, host->deps()));
  return host;
}

std::unique_ptr<SessionHost> SessionHost::load(const fs::path& home, std::string_view session_id) {
  const fs::path state = home / "sessions" / std::string(session_id) / "state.json";
  std::error_code ec;
  if (session_id.empty() || !fs::is_regular_file(state, ec))
    throw Error(Errc::unknown_session, "no session '" + std::string(session_id) + "' under " + home.string());
  const json doc = read_json(state);
  auto config = parse_session_config(doc.at("config"), home);
  auto catalog = load_catalog(config.catalog_path);
  std::unique_ptr<SessionHost> host(new SessionHost(std::move(config), std::move(catalog), home));
  host->provider_ = SimulatedProvider::load(doc.at("provider"));
  host->session_.emplace(ExamSession::restore(doc.at("session"), host->config_, host->deps()));
  host->wall_origin_ = doc.at("wall_origin").get<std::int64_t>();
  host->auto_open_failed_ = doc.value("auto_open_failed", false);
  host->directory_->set_audit_log(host->dir() / "audit.jsonl");
  return host;
}

std::vector<std::string> SessionHost::list(const fs::path& home) {
  std::vector<std::string> ids;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(home / "sessions", ec))
    if (fs::is_regular_file(entry.path() / "state.json")) ids.push_back(entry.path().filename().string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

void SessionHost::create_on_disk() {
  std::error_code ec;
  if (fs::exists(dir() / "state.json", ec))
    throw Error(Errc::invalid_argument, "session '" + config_.session_id + "' already exists in " + home_.string());
  fs::create_directories(dir(), ec);
  if (ec) throw Error(Errc::io_error, "cannot create " + dir().string() + ": " + ec.message());
  wall_origin_ = epoch_seconds();
  directory_->set_audit_log(dir() / "audit.jsonl");
  persist();
}

void SessionHost::persist() const {
  const json doc{{"config", to_json(config_)},
                 {"session", session_->save()},
                 {"provider", provider_.save()},
                 {"wall_origin", wall_origin_},
                 {"auto_open_failed", auto_open_failed_}};
  write_atomic(dir() / "state.json", doc.dump(2) + "\n");

  std::ostringstream journal;
  for (const auto& e : session_->journal()) journal << json(e).dump() << '\n';
  write_atomic(dir() / "journal.jsonl", journal.str());

  std::ostringstream events;
  write_event_log(events, provider_.log());
  write_atomic(dir() / "events.jsonl", events.str());
}

Timestamp SessionHost::wall_now() const {
  return std::max(session_->last_time(), at_second(std::max<std::int64_t>(0, epoch_seconds() - wall_origin_)));
}

void SessionHost::advance_to(Timestamp t, const DriverOptions& options) {
  ExamSession& s = *session_;
  if (t < s.last_time())
    throw Error(Errc::invalid_argument, "time went backwards: t=" + std::to_string(seconds_of(t)) + " < t=" +
                                            std::to_string(seconds_of(s.last_time())));
  for (;;) {
    std::optional<Timestamp> step;
    const auto consider = [&](std::optional<Timestamp> at) {
      if (!at) return;
      const Timestamp clamped = std::max(*at, s.last_time());
      if (clamped <= t && (!step || clamped < *step)) step = clamped;
    };
    if (s.cluster()) consider(provider_.next_event_time());
    if (s.state() == SessionState::Ready && options.auto_open && !auto_open_failed_) consider(config_.schedule.open_at);
    if (s.state() == SessionState::Open) {
      if (auto next = s.next_backup_at(); next && s.closes_at() && *next < *s.closes_at()) consider(next);
      if (options.auto_close) consider(s.closes_at());
    }
    if (!step) break;

    const Timestamp now = *step;
    s.sync(now);
    if (s.state() == SessionState::Ready && options.auto_open && !auto_open_failed_ && config_.schedule.open_at <= now) {
      try {
        s.open_exam(now);
      } catch (const Error& e) {
        if (e.code() != Errc::capacity) throw;
        // Stays Ready; an operator has to resize or open by hand.
        auto_open_failed_ = true;
      }
    }
    if (s.state() == SessionState::Open) s.tick(now);
    if (s.state() == SessionState::Open && options.auto_close && s.closes_at() && *s.closes_at() <= now) {
      try {
        s.close_exam(now);
      } catch (const Error& e) {
        if (e.code() != Errc::missing_final) throw;
      }
    }
  }
  s.sync(t);
  if (s.state() == SessionState::Open) s.tick(t);
}

// Simulation

namespace {

struct ScratchDir {
  fs::path path;
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::optional<std::int64_t> first_state_time(const ExamSession& s, std::string_view to) {
  for (const auto& e : s.journal())
    if (e.kind == "state" && e.detail.value("to", "") == to) return seconds_of(e.t);
  return std::nullopt;
}

json cost_json(const CostEstimate& c) {
  return json{{"node_hours", to_string(c.node_hours)},
              {"node_cost", c.node_cost.to_string()},
              {"mgmt_cost", c.mgmt_cost.to_string()},
              {"overhead_cost", c.overhead_cost.to_string()},
              {"total", c.total.to_string()}};
}

}  // namespace

json simulate(const fs::path& config_path, const SimulationOptions& options) {
  auto config = load_session_config(config_path);
  if (options.seed) config.sim.random_seed = *options.seed;

  ScratchDir scratch{fs::temp_directory_path() / ("examlab-sim-" + random_hex(8))};
  fs::create_directories(scratch.path);
  {
    std::ofstream out(scratch.path / "config.json");
    out << to_json(config).dump(2);
  }
  auto host = SessionHost::plan(scratch.path / "config.json", scratch.path / "home");
  host->create_on_disk();
  ExamSession& s = host->session();

  const auto go = [&](Timestamp target, const DriverOptions& drv) {
    if (!options.real_time) {
      host->advance_to(target, drv);
      return;
    }
    while (s.last_time() < target) {
      std::this_thread::sleep_for(std::chrono::seconds(1));
      host->advance_to(std::min(target, s.last_time() + Duration{1}), drv);
    }
  };

  const DriverOptions drv{true, true};
  s.provision(at_second(0));
  go(std::max(config.schedule.open_at, s.last_time()), drv);
  while (s.state() == SessionState::Provisioning || (s.state() == SessionState::Ready && config.schedule.open_at > s.last_time())) {
    auto next = host->provider().next_event_time();
    if (!next) break;
    go(*next, drv);
  }
  if (s.state() == SessionState::Ready && config.schedule.open_at <= s.last_time()) s.open_exam(s.last_time());

  json summary;
  summary["session_id"] = config.session_id;
  summary["seed"] = config.sim.random_seed;
  summary["students"] = s.students().size();
  summary["node_type"] = config.cluster.node_type_name;
  summary["initial_nodes"] = config.cluster.initial_node_count;

  // An early release attempt must bounce off the backup guard.
  std::string refusal = "not-attempted";
  if (s.state() == SessionState::Open) {
    try {
      s.release(s.last_time(), false);
      refusal = "accepted";
    } catch (const Error& e) {
      refusal = std::string(to_string(e.code()));
    }
  }
  summary["release_before_backup"] = refusal;

  if (s.state() == SessionState::Open) go(*s.closes_at(), drv);
  if (s.state() == SessionState::BackedUp) s.release(s.last_time(), false);

  summary["final_state"] = std::string(to_string(s.state()));
  const auto opt = [](std::optional<std::int64_t> v) { return v ? json(*v) : json(nullptr); };
  summary["provisioned_at"] = opt(first_state_time(s, "Ready"));
  summary["opened_at"] = opt(first_state_time(s, "Open"));
  summary["backed_up_at"] = opt(first_state_time(s, "BackedUp"));
  summary["released_at"] = opt(first_state_time(s, "Released"));

  json per_student = json::object();
  for (const auto& uid : s.students()) {
    std::map<std::string, int> counts{{"Periodic", 0}, {"Manual", 0}, {"Final", 0}};
    const auto timeline = host->store().timeline(config.session_id, uid);
    for (const auto& snap : timeline) ++counts[std::string(to_string(snap.kind))];
    per_student[uid] = json{{"periodic", counts["Periodic"]},
                            {"manual", counts["Manual"]},
                            {"final", counts["Final"]},
                            {"last", timeline.empty() ? json(nullptr) : json(std::string(to_string(timeline.back().kind)))}};
  }
  summary["snapshots"] = std::move(per_student);

  const auto& usage = s.usage();
  json usage_json{{"change_points", usage.points.size()}};
  if (!usage.points.empty()) {
    usage_json["running_at"] = seconds_of(usage.points.front().at);
    usage_json["deleted_at"] = seconds_of(usage.end);
    usage_json["window_s"] = usage.span().count();
    usage_json["node_hours"] = to_string(usage.node_hours());
    if (usage.points.size() == 1) {
      const Rational flat = Rational(usage.points.front().node_count) * usage.span().count() / 3600;
      usage_json["nodes_times_window"] = to_string(flat);
    }
  }
  summary["usage"] = std::move(usage_json);
  summary["cost"] = cost_json(s.cost_so_far());
  summary["planned"] = cost_json(s.planned_estimate());
  std::size_t resizes = 0;
  for (const auto& e : s.journal())
    if (e.kind == "resize") ++resizes;
  summary["resizes"] = resizes;
  summary["journal_entries"] = s.journal().size();
  return summary;
}

std::string format_simulation(const json& summary) {
  std::ostringstream out;
  const auto time = [](const json& v) { return v.is_null() ? std::string("-") : "t=" + std::to_string(v.get<std::int64_t>()) + "s"; };
  out << "session      " << summary["session_id"].get<std::string>() << " (seed " << summary["seed"] << ")\n";
  out << "cluster      " << summary["initial_nodes"] << " x " << summary["node_type"].get<std::string>() << "\n";
  out << "provisioned  " << time(summary["provisioned_at"]) << "\n";
  out << "opened       " << time(summary["opened_at"]) << "\n";
  out << "backed up    " << time(summary["backed_up_at"]) << "\n";
  out << "released     " << time(summary["released_at"]) << "\n";
  out << "early release " << summary["release_before_backup"].get<std::string>() << "\n";
  out << "final state  " << summary["final_state"].get<std::string>() << "\n\n";

  const auto lpad = [](std::string text, std::size_t width) {
    return std::string(width > text.size() ? width - text.size() : 0, ' ') + text;
  };
  out << "student            periodic  manual  final\n";
  for (const auto& [uid, row] : summary["snapshots"].items()) {
    std::string name = uid;
    if (name.size() < 18) name.resize(18, ' ');
    out << name << ' ' << lpad(row["periodic"].dump(), 8) << lpad(row["manual"].dump(), 8)
        << lpad(row["final"].dump(), 7) << "\n";
  }
  const auto& usage = summary["usage"];
  out << "\nnode-hours   " << usage.value("node_hours", std::string("0"));
  if (usage.contains("window_s")) out << " over " << usage["window_s"] << " s";
  out << "\nresizes      " << summary["resizes"] << "\n";
  const auto& cost = summary["cost"];
  out << "node cost    " << cost["node_cost"].get<std::string>() << "\n";
  out << "mgmt fee     " << cost["mgmt_cost"].get<std::string>() << "\n";
  out << "overhead     " << cost["overhead_cost"].get<std::string>() << "\n";
  out << "total        " << cost["total"].get<std::string>() << "\n";
  return out.str();
}

}  // namespace examlab
