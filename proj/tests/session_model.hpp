#pragma once

// Reference model of the session lifecycle for random command sequences.
// It predicts the outcome of each command from its own bookkeeping and the
// test compares that prediction against ExamSession.

#include <optional>
#include <random>
#include <sstream>
#include <string>

#include "examlab/backup.hpp"
#include "examlab/directory.hpp"
#include "examlab/error.hpp"
#include "examlab/pricing.hpp"
#include "examlab/provider.hpp"
#include "examlab/session.hpp"
#include "support.hpp"

namespace examlab::testing {

inline PriceCatalog model_catalog() {
  PriceCatalog c;
  NodeType t;
  t.name = "box-8";
  t.cpus = 8;
  t.ram_gb = 30;
  t.price_cents_numerator = 38;
  c.add(t);
  return c;
}

inline SessionConfig model_config(const std::filesystem::path& dir) {
  SessionConfig cfg;
  cfg.session_id = "model";
  cfg.base_url = "https://lab.example.edu";
  cfg.cluster.cluster_name = "exam-model";
  cfg.cluster.region = "us-central1";
  cfg.cluster.node_type_name = "box-8";
  cfg.cluster.initial_node_count = 3;
  cfg.backup.interval = Duration{900};
  cfg.schedule.open_at = at_second(300);
  cfg.schedule.duration = Duration{3600};
  cfg.catalog_path = dir / "catalog.json";
  cfg.roster_path = dir / "roster.csv";
  return cfg;
}

struct ModelOutcome {
  std::uint64_t seed = 0;
  bool ok = true;
  std::string trace;
  std::string failure;
  // From the session journal after the run.
  std::vector<std::pair<std::string, std::string>> transitions;
  bool force_journaled = false;
};

// Runs `steps` random commands against a fresh session and the model.
inline ModelOutcome run_session_model(std::uint64_t seed, int steps, const std::filesystem::path& scratch) {
  constexpr int kStudents = 3;
  constexpr std::int64_t kProvisionDelay = 300;
  constexpr std::int64_t kPerNode = 20;
  const std::string victim = "u1";

  ModelOutcome out;
  out.seed = seed;
  std::mt19937_64 rng(seed);
  std::ostringstream trace;

  const PriceCatalog catalog = model_catalog();
  Directory::Options dopt;
  dopt.kdf_iterations = 1;
  Directory directory(dopt);
  for (int i = 0; i < kStudents; ++i)
    directory.add_user("u" + std::to_string(i), "U", Role::Student, "pw" + std::to_string(i));
  directory.add_user("t0", "T", Role::Teacher, "tpw");
  std::filesystem::remove_all(scratch);
  SnapshotStore store(scratch);
  SimConfig sim;
  sim.provision_delay = Duration{kProvisionDelay};
  sim.resize_delay_per_node = Duration{kPerNode};
  SimulatedProvider provider(sim);
  SimulatedWorkspaces workspaces(seed);
  auto session = ExamSession::plan(model_config(scratch), SessionDeps{catalog, directory, store, provider, workspaces});

  // Model state.
  SessionState st = SessionState::Planned;
  std::optional<std::int64_t> ready_at;
  int nodes = 3;
  std::int64_t resize_until = 0;
  std::optional<std::int64_t> opened, closes;
  std::vector<std::int64_t> periodic;
  std::size_t next = 0;
  bool retry = false;
  int pending = 0;
  std::optional<std::int64_t> victim_final;
  std::int64_t now = 0;

  const auto due_any = [&](std::int64_t t) { return next < periodic.size() && periodic[next] <= t; };
  const auto consume_next = [&](std::int64_t t) {
    while (next < periodic.size() && periodic[next] <= t) ++next;
  };
  // One capture attempt for the victim; true when it succeeds.
  const auto capture_victim = [&] {
    if (pending > 0) {
      --pending;
      return false;
    }
    return true;
  };
  const auto victim_has_final = [&](std::int64_t t) {
    return victim_final && *victim_final >= std::min(*closes, t) && *victim_final >= *opened;
  };

  for (int step = 0; step < steps && out.ok; ++step) {
    now += static_cast<std::int64_t>(rng() % 5 == 0 ? 0 : rng() % 1500);
    const Timestamp t = at_second(now);
    if (st == SessionState::Provisioning && ready_at && now >= *ready_at) st = SessionState::Ready;

    const int op = static_cast<int>(rng() % 10);
    const bool flag = rng() % 3 == 0;
    std::optional<Errc> expect;
    SessionState expect_state = st;
    std::string name;
    std::optional<Errc> got;

    const auto run = [&](auto&& fn) {
      try {
        fn();
      } catch (const Error& e) {
        got = e.code();
      }
    };

    switch (op) {
      case 0: {
        name = "provision";
        if (st == SessionState::Planned) {
          expect_state = SessionState::Provisioning;
          ready_at = now + kProvisionDelay;
        } else {
          expect = Errc::illegal_transition;
        }
        run([&] { session.provision(t); });
        break;
      }
      case 1: {
        name = flag ? "open-early" : "open";
        if (st != SessionState::Ready) {
          expect = Errc::illegal_transition;
        } else if (now < 300 && !flag) {
          expect = Errc::too_early;
        } else {
          expect_state = SessionState::Open;
          opened = now;
          closes = now + 3600;
          periodic.clear();
          for (const auto& tick : due_ticks(BackupPolicy{Duration{900}, true}, t, at_second(*closes)))
            if (tick.kind == SnapshotKind::Periodic) periodic.push_back(seconds_of(tick.at));
          next = 0;
          retry = false;
        }
        run([&] { session.open_exam(t, flag); });
        break;
      }
      case 2: {
        name = "tick";
        if (st != SessionState::Open) {
          expect = Errc::illegal_transition;
        } else if (due_any(now)) {
          consume_next(now);
          retry = !capture_victim();
        } else if (retry) {
          retry = !capture_victim();
        }
        run([&] { session.tick(t); });
        break;
      }
      case 3: {
        const int target = 3 + static_cast<int>(rng() % 4);
        name = "resize " + std::to_string(target);
        if (st != SessionState::Ready && st != SessionState::Open) {
          expect = Errc::illegal_transition;
        } else if (now < resize_until) {
          expect = Errc::not_running;
        } else if (target != nodes) {
          resize_until = now + kPerNode * std::abs(target - nodes);
          nodes = target;
        }
        run([&] { session.resize(target, t); });
        break;
      }
      case 4: {
        name = "backup";
        if (st != SessionState::Open && st != SessionState::Closing && st != SessionState::BackedUp)
          expect = Errc::illegal_transition;
        else
          capture_victim();
        run([&] { session.backup_now(t); });
        break;
      }
      case 5:
      case 6: {
        name = flag ? "close-force" : "close";
        bool attempt = true;
        if (st == SessionState::Open) {
          if (now < *closes && !flag) {
            expect = Errc::not_expired;
            attempt = false;
          } else {
            if (due_any(now)) {
              consume_next(now);
              capture_victim();
            }
            retry = false;
          }
        } else if (st != SessionState::Closing) {
          expect = Errc::illegal_transition;
          attempt = false;
        }
        if (attempt) {
          if (!victim_has_final(now)) {
            if (capture_victim()) victim_final = now;
          }
          if (!victim_has_final(now) && !flag) {
            expect = Errc::missing_final;
            expect_state = SessionState::Closing;
          } else {
            expect_state = SessionState::BackedUp;
          }
        }
        run([&] { session.close_exam(t, flag); });
        break;
      }
      case 7: {
        name = flag ? "release-force" : "release";
        switch (st) {
          case SessionState::BackedUp:
            expect_state = SessionState::Released;
            break;
          case SessionState::Open:
          case SessionState::Closing:
            if (flag) expect_state = SessionState::Released;
            else expect = Errc::backup_guard;
            break;
          case SessionState::Released:
            expect = Errc::illegal_transition;
            break;
          default:
            if (flag) expect_state = SessionState::Released;
            else expect = Errc::illegal_transition;
        }
        run([&] { session.release(t, flag); });
        break;
      }
      case 8: {
        name = "fail-next";
        ++pending;
        workspaces.fail_next(victim);
        run([&] { session.sync(t); });
        break;
      }
      case 9: {
        const int who = static_cast<int>(rng() % kStudents);
        name = "login u" + std::to_string(who);
        if (st != SessionState::Open) expect = Errc::login_closed;
        run([&] { session.login("u" + std::to_string(who), "pw" + std::to_string(who), t); });
        break;
      }
    }
    st = expect_state;
    trace << "t=" << now << " " << name << " -> " << (got ? std::string(to_string(*got)) : "ok") << " ["
          << to_string(session.state()) << "]\n";

    if (got != expect) {
      out.ok = false;
      out.failure = "step " + std::to_string(step) + " " + name + ": expected " +
                    (expect ? std::string(to_string(*expect)) : "ok") + ", got " +
                    (got ? std::string(to_string(*got)) : "ok");
    } else if (session.state() != st) {
      out.ok = false;
      out.failure = "step " + std::to_string(step) + " " + name + ": expected state " + std::string(to_string(st)) +
                    ", got " + std::string(to_string(session.state()));
    }
    // Journal timestamps never go backwards.
    const auto& j = session.journal();
    for (std::size_t i = 1; i < j.size() && out.ok; ++i)
      if (j[i].t < j[i - 1].t) {
        out.ok = false;
        out.failure = "journal goes backwards at entry " + std::to_string(i);
      }
  }
  out.trace = trace.str();
  for (const auto& e : session.journal()) {
    if (e.kind == "state") out.transitions.emplace_back(e.detail.at("from"), e.detail.at("to"));
    if (e.kind == "warning" && e.detail.value("action", "") == "force-release") out.force_journaled = true;
  }
  return out;
}

}  // namespace examlab::testing
