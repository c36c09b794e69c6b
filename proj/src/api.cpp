#include <httplib.h>

#include "examlab/control.hpp"

namespace examlab {

namespace fs = std::filesystem;
using json = nlohmann::json;

// SessionRunner

SessionRunner::SessionRunner(std::unique_ptr<SessionHost> host, Clock clock, DriverOptions driver)
    : id_(host->config().session_id), host_(std::move(host)), clock_(std::move(clock)), driver_(driver) {
  publish();
  worker_ = std::thread([this] { run(); });
}

SessionRunner::~SessionRunner() {
  {
    std::lock_guard lock(queue_mu_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  if (worker_.joinable()) worker_.join();
}

json SessionRunner::submit(std::function<json(SessionHost&, Timestamp)> fn) {
  auto command = std::make_unique<Command>();
  command->fn = std::move(fn);
  auto done = command->done.get_future();
  {
    std::lock_guard lock(queue_mu_);
    if (stopping_) throw Error(Errc::unknown_session, "session " + id_ + " is shutting down");
    queue_.push_back(std::move(command));
  }
  queue_cv_.notify_one();
  return done.get();
}

void SessionRunner::pump() {
  submit([](SessionHost&, Timestamp) { return json(); });
}

std::shared_ptr<const json> SessionRunner::status() const {
  std::lock_guard lock(status_mu_);
  return status_;
}

void SessionRunner::publish() {
  json doc = to_json(host_->session().status());
  doc["planned"] = json{{"total", host_->session().planned_estimate().total.to_string()},
                        {"node_hours", to_string(host_->session().planned_estimate().node_hours)}};
  doc["journal_entries"] = host_->session().journal().size();
  auto snapshot = std::make_shared<const json>(std::move(doc));
  std::lock_guard lock(status_mu_);
  status_ = std::move(snapshot);
}

void SessionRunner::run() {
  for (;;) {
    std::vector<std::unique_ptr<Command>> batch;
    {
      std::unique_lock lock(queue_mu_);
      queue_cv_.wait_for(lock, std::chrono::seconds(1), [this] { return stopping_ || !queue_.empty(); });
      if (stopping_ && queue_.empty()) return;
      batch.swap(queue_);
    }
    if (batch.empty()) {
      // Idle wakeup: keep backups and provider timers moving.
      try {
        host_->advance_to(clock_(*host_), driver_);
        host_->persist();
      } catch (const std::exception&) {
      }
      publish();
      continue;
    }
    for (auto& command : batch) {
      try {
        const Timestamp now = std::max(clock_(*host_), host_->session().last_time());
        host_->advance_to(now, driver_);
        auto result = command->fn(*host_, now);
        host_->persist();
        publish();
        command->done.set_value(std::move(result));
      } catch (...) {
        try {
          host_->persist();
        } catch (...) {
        }
        publish();
        command->done.set_exception(std::current_exception());
      }
    }
  }
}

// SessionRegistry

void SessionRegistry::add(std::unique_ptr<SessionRunner> runner) {
  std::lock_guard lock(mu_);
  const std::string id = runner->id();
  if (runners_.count(id)) throw Error(Errc::invalid_argument, "session " + id + " registered twice");
  runners_.emplace(id, std::move(runner));
}

SessionRunner* SessionRegistry::find(std::string_view id) const {
  std::lock_guard lock(mu_);
  auto it = runners_.find(id);
  return it == runners_.end() ? nullptr : it->second.get();
}

std::vector<SessionRunner*> SessionRegistry::all() const {
  std::lock_guard lock(mu_);
  std::vector<SessionRunner*> out;
  for (const auto& [id, runner] : runners_) out.push_back(runner.get());
  return out;
}

std::unique_ptr<SessionRegistry> SessionRegistry::load_all(const fs::path& home, SessionRunner::Clock clock,
                                                           DriverOptions driver) {
  auto registry = std::make_unique<SessionRegistry>();
  for (const auto& id : SessionHost::list(home))
    registry->add(std::make_unique<SessionRunner>(SessionHost::load(home, id), clock, driver));
  return registry;
}

// ApiServer

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const ApiError& e) {
  send_json(res, e.http_status, json{{"code", e.code}, {"message", e.message}});
}

std::string bearer_token(const httplib::Request& req) {
  const auto header = req.get_header_value("Authorization");
  constexpr std::string_view prefix = "Bearer ";
  if (header.size() <= prefix.size() || header.compare(0, prefix.size(), prefix) != 0) return {};
  return header.substr(prefix.size());
}

// Resolves the caller. Impersonation tokens act as the student they view.
AuthSession require_session(SessionHost& host, const std::string& token, Timestamp now) {
  if (token.empty()) throw Error(Errc::unauthenticated, "missing bearer token");
  auto session = host.directory().resolve(token);
  if (!session) throw Error(Errc::unauthenticated, "unknown bearer token");
  if (session->expired(now)) throw Error(Errc::session_expired, "token expired");
  return *session;
}

AuthSession require_teacher(SessionHost& host, const std::string& token, Timestamp now) {
  auto session = require_session(host, token, now);
  if (session.role != Role::Teacher || session.acting_as)
    throw Error(Errc::not_teacher, "this action needs a teacher token");
  return session;
}

json body_of(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json body;
  try {
    body = json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw Error(Errc::parse_error, std::string("request body is not JSON: ") + e.what());
  }
  if (!body.is_object()) throw Error(Errc::parse_error, "request body must be a JSON object");
  return body;
}

bool force_flag(const json& body) {
  if (!body.contains("force")) return false;
  if (!body.at("force").is_boolean()) throw Error(Errc::invalid_argument, "force must be a boolean");
  return body.at("force").get<bool>();
}

}  // namespace

struct ApiServer::Impl {
  SessionRegistry& registry;
  std::string host;
  int port;
  httplib::Server server;
  std::thread thread;
  bool bound = false;

  SessionRunner& runner(const httplib::Request& req) {
    const std::string id = req.matches[1];
    auto* r = registry.find(id);
    if (!r) throw Error(Errc::unknown_session, "unknown session: " + id);
    return *r;
  }

  template <typename Handler>
  httplib::Server::Handler guard(int ok_status, Handler handler) {
    return [this, ok_status, handler](const httplib::Request& req, httplib::Response& res) {
      try {
        send_json(res, ok_status, handler(req));
      } catch (const std::exception& e) {
        send_error(res, to_api_error(e));
      }
    };
  }

  void routes() {
    const std::string id = "/v1/sessions/([A-Za-z0-9._-]+)";

    server.Get("/v1/sessions", guard(200, [this](const httplib::Request&) {
                 json list = json::array();
                 for (auto* r : registry.all()) list.push_back(*r->status());
                 return json{{"sessions", std::move(list)}};
               }));

    server.Get(id, guard(200, [this](const httplib::Request& req) { return *runner(req).status(); }));

    server.Get(id + "/allowlist", guard(200, [this](const httplib::Request& req) {
                 return runner(req).submit(
                     [](SessionHost& host, Timestamp) { return json(host.session().allowlist_manifest()); });
               }));

    server.Get(id + "/timeline/([A-Za-z0-9._-]+)", guard(200, [this](const httplib::Request& req) {
                 const std::string token = bearer_token(req);
                 const std::string student = req.matches[2];
                 return runner(req).submit([&](SessionHost& host, Timestamp now) {
                   const auto caller = require_session(host, token, now);
                   const auto decision = authorize(caller, student, now);
                   if (const auto* deny = std::get_if<Deny>(&decision)) {
                     if (deny->reason == DenyReason::Expired) throw Error(Errc::session_expired, "token expired");
                     throw Error(Errc::not_teacher, "students may only read their own timeline");
                   }
                   const auto user = host.directory().find(student);
                   if (!user || user->role != Role::Student) throw Error(Errc::unknown_student, "unknown student: " + student);
                   json snaps = json::array();
                   for (const auto& s : host.store().timeline(host.config().session_id, student)) snaps.push_back(s);
                   return json{{"student", student}, {"snapshots", std::move(snaps)}};
                 });
               }));

    server.Post(id + "/login", guard(200, [this](const httplib::Request& req) {
                  const json body = body_of(req);
                  if (!body.contains("uid") || !body.at("uid").is_string() || !body.contains("secret") ||
                      !body.at("secret").is_string())
                    throw Error(Errc::invalid_argument, "body needs string fields uid and secret");
                  const auto uid = body.at("uid").get<std::string>();
                  const auto secret = body.at("secret").get<std::string>();
                  return runner(req).submit([&](SessionHost& host, Timestamp now) {
                    const auto s = host.session().login(uid, secret, now);
                    return json{{"token", s.token},
                                {"uid", s.uid},
                                {"role", to_string(s.role)},
                                {"expires_at", seconds_of(s.expires_at)}};
                  });
                }));

    server.Post(id + "/impersonate", guard(200, [this](const httplib::Request& req) {
                  const std::string token = bearer_token(req);
                  const json body = body_of(req);
                  if (!body.contains("student") || !body.at("student").is_string())
                    throw Error(Errc::invalid_argument, "body needs a string field student");
                  const auto student = body.at("student").get<std::string>();
                  return runner(req).submit([&](SessionHost& host, Timestamp now) {
                    const auto teacher = require_teacher(host, token, now);
                    const auto s = host.session().impersonate(teacher, student, now);
                    return json{{"token", s.token},
                                {"uid", s.uid},
                                {"acting_as", *s.acting_as},
                                {"expires_at", seconds_of(s.expires_at)}};
                  });
                }));

    server.Post(id + "/backup", guard(202, [this](const httplib::Request& req) {
                  const std::string token = bearer_token(req);
                  return runner(req).submit([&](SessionHost& host, Timestamp now) {
                    require_teacher(host, token, now);
                    const auto snaps = host.session().backup_now(now);
                    json list = json::array();
                    for (const auto& s : snaps) list.push_back(s);
                    return json{{"captured", snaps.size()}, {"snapshots", std::move(list)}};
                  });
                }));

    server.Post(id + "/resize", guard(202, [this](const httplib::Request& req) {
                  const std::string token = bearer_token(req);
                  const json body = body_of(req);
                  return runner(req).submit([&](SessionHost& host, Timestamp now) {
                    require_teacher(host, token, now);
                    if (!body.contains("target") || !body.at("target").is_number_integer())
                      throw Error(Errc::invalid_argument, "body needs an integer field target");
                    host.session().resize(body.at("target").get<int>(), now);
                    return to_json(host.session().status());
                  });
                }));

    server.Post(id + "/close", guard(200, [this](const httplib::Request& req) {
                  const std::string token = bearer_token(req);
                  const json body = body_of(req);
                  return runner(req).submit([&](SessionHost& host, Timestamp now) {
                    require_teacher(host, token, now);
                    host.session().close_exam(now, force_flag(body));
                    return to_json(host.session().status());
                  });
                }));

    server.Post(id + "/release", guard(200, [this](const httplib::Request& req) {
                  const std::string token = bearer_token(req);
                  const json body = body_of(req);
                  return runner(req).submit([&](SessionHost& host, Timestamp now) {
                    require_teacher(host, token, now);
                    const auto cost = host.session().release(now, force_flag(body));
                    auto status = to_json(host.session().status());
                    status["final_cost"] = json{{"node_hours", to_string(cost.node_hours)}, {"total", cost.total.to_string()}};
                    return status;
                  });
                }));

    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return;
      const int status = res.status;
      send_json(res, status, json{{"code", status == 404 ? "not-found" : "http-" + std::to_string(status)},
                                  {"message", status == 404 ? "no such route" : "request failed"}});
    });
  }
};

ApiServer::ApiServer(SessionRegistry& registry, std::string host, int port)
    : impl_(new Impl{registry, std::move(host), port, {}, {}, false}) {
  impl_->routes();
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::start() {
  int port = impl_->port;
  if (port == 0) {
    port = impl_->server.bind_to_any_port(impl_->host);
  } else if (!impl_->server.bind_to_port(impl_->host, port)) {
    port = -1;
  }
  if (port < 0) throw Error(Errc::io_error, "cannot bind " + impl_->host + ":" + std::to_string(impl_->port));
  impl_->port = port;
  impl_->bound = true;
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void ApiServer::run() {
  if (!impl_->server.bind_to_port(impl_->host, impl_->port))
    throw Error(Errc::io_error, "cannot bind " + impl_->host + ":" + std::to_string(impl_->port));
  impl_->bound = true;
  impl_->server.listen_after_bind();
}

void ApiServer::stop() {
  if (!impl_) return;
  if (impl_->bound) impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
  impl_->bound = false;
}

}  // namespace examlab
