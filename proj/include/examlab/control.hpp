#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <future>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "examlab/backup.hpp"
#include "examlab/directory.hpp"
#include "examlab/error.hpp"
#include "examlab/pricing.hpp"
#include "examlab/provider.hpp"
#include "examlab/session.hpp"

namespace examlab {

struct CommandResult {
  int exit_code = 0;
  std::string human_text;
  std::optional<nlohmann::json> machine_payload;
};

struct ApiError {
  int http_status = 500;
  std::string code;
  std::string message;
};

ApiError to_api_error(const std::exception& e);
int http_status_for(Errc code);

// $EXAMLAB_HOME, or ./examlab-data when unset.
std::filesystem::path data_home();

struct DriverOptions {
  // Open the exam by itself once the schedule says so.
  bool auto_open = true;
  // Close the exam by itself at expiry. Operators normally close by hand.
  bool auto_close = false;
};

// One session plus everything it depends on, loaded from and saved to
// <home>/sessions/<id>/. The snapshot store is shared at <home>/store.
class SessionHost {
 public:
  static std::unique_ptr<SessionHost> plan(const std::filesystem::path& config_path, const std::filesystem::path& home,
                                           std::optional<std::filesystem::path> catalog_override = std::nullopt);
  // Throws Errc::unknown_session.
  static std::unique_ptr<SessionHost> load(const std::filesystem::path& home, std::string_view session_id);
  static std::vector<std::string> list(const std::filesystem::path& home);

  SessionHost(const SessionHost&) = delete;
  SessionHost& operator=(const SessionHost&) = delete;

  // Throws Errc::invalid_argument when a session with this id was already
  // brought up.
  void create_on_disk();
  void persist() const;

  // Steps virtual time to `t`, stopping at every provider timer, scheduled
  // open and backup tick on the way so nothing is skipped.
  void advance_to(Timestamp t, const DriverOptions& options = {});

  // Virtual time the current wall clock maps to.
  Timestamp wall_now() const;

  ExamSession& session() { return *session_; }
  const ExamSession& session() const { return *session_; }
  SimulatedProvider& provider() { return provider_; }
  Directory& directory() { return *directory_; }
  SnapshotStore& store() { return *store_; }
  SimulatedWorkspaces& workspaces() { return workspaces_; }
  const PriceCatalog& catalog() const { return catalog_; }
  const SessionConfig& config() const { return config_; }
  std::filesystem::path dir() const;

 private:
  SessionHost(SessionConfig config, PriceCatalog catalog, const std::filesystem::path& home);
  SessionDeps deps();

  std::filesystem::path home_;
  SessionConfig config_;
  PriceCatalog catalog_;
  std::unique_ptr<Directory> directory_;
  std::unique_ptr<SnapshotStore> store_;
  SimulatedProvider provider_;
  SimulatedWorkspaces workspaces_;
  std::optional<ExamSession> session_;
  std::int64_t wall_origin_ = 0;
  bool auto_open_failed_ = false;
};

// Runs `argv` (without the program name). Never throws.
CommandResult cli_dispatch(const std::vector<std::string>& args);

// Full exam flow on the virtual clock in a scratch data directory.
struct SimulationOptions {
  std::optional<std::uint64_t> seed;
  bool real_time = false;
};
nlohmann::json simulate(const std::filesystem::path& config_path, const SimulationOptions& options);
std::string format_simulation(const nlohmann::json& summary);

// Owns one session and applies every mutation on a single worker thread, in
// arrival order. Readers get the last published status without waiting.
class SessionRunner {
 public:
  using Clock = std::function<Timestamp(const SessionHost&)>;

  SessionRunner(std::unique_ptr<SessionHost> host, Clock clock, DriverOptions driver = {});
  ~SessionRunner();

  SessionRunner(const SessionRunner&) = delete;
  SessionRunner& operator=(const SessionRunner&) = delete;

  // Runs `fn` on the worker after advancing to the clock's current time, then
  // persists and republishes status. Exceptions propagate to the caller.
  nlohmann::json submit(std::function<nlohmann::json(SessionHost&, Timestamp)> fn);

  // Advances to the clock's current time.
  void pump();

  std::shared_ptr<const nlohmann::json> status() const;
  const std::string& id() const { return id_; }

 private:
  struct Command {
    std::function<nlohmann::json(SessionHost&, Timestamp)> fn;
    std::promise<nlohmann::json> done;
  };

  void run();
  void publish();

  std::string id_;
  std::unique_ptr<SessionHost> host_;
  Clock clock_;
  DriverOptions driver_;
  std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::vector<std::unique_ptr<Command>> queue_;
  bool stopping_ = false;
  mutable std::mutex status_mu_;
  std::shared_ptr<const nlohmann::json> status_;
  std::thread worker_;
};

class SessionRegistry {
 public:
  void add(std::unique_ptr<SessionRunner> runner);
  SessionRunner* find(std::string_view id) const;
  std::vector<SessionRunner*> all() const;

  // Loads every session under <home>/sessions.
  static std::unique_ptr<SessionRegistry> load_all(const std::filesystem::path& home, SessionRunner::Clock clock,
                                                   DriverOptions driver = {});

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::unique_ptr<SessionRunner>, std::less<>> runners_;
};

class ApiServer {
 public:
  ApiServer(SessionRegistry& registry, std::string host, int port);
  ~ApiServer();

  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  // Starts listening on a background thread. Throws Errc::io_error when the
  // address is taken. Returns the bound port.
  int start();
  // Serves on the calling thread until stop().
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace examlab
