#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "examlab/control.hpp"
#include "examlab/digest.hpp"

namespace examlab {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Output {
  std::string human;
  json payload;
};

// Throwaway data home for dry runs.
struct ScratchHome {
  fs::path path = fs::temp_directory_path() / ("examlab-plan-" + random_hex(8));
  ~ScratchHome() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

json cost_payload(const CostEstimate& c) {
  return json{{"node_hours", to_string(c.node_hours)},
              {"node_cost", c.node_cost.to_string()},
              {"mgmt_cost", c.mgmt_cost.to_string()},
              {"overhead_cost", c.overhead_cost.to_string()},
              {"total", c.total.to_string()},
              {"total_cents", c.total.value}};
}

std::string cost_lines(const CostEstimate& c) {
  std::ostringstream out;
  out << "node-hours  " << to_string(c.node_hours) << "\n"
      << "node cost   " << c.node_cost.to_string() << "\n"
      << "mgmt fee    " << c.mgmt_cost.to_string() << "\n"
      << "overhead    " << c.overhead_cost.to_string() << "\n"
      << "total       " << c.total.to_string() << "\n";
  return out.str();
}

std::string hours_text(Duration d) { return to_string(Rational(d.count()) / 3600) + " h"; }

std::string time_text(const std::optional<Timestamp>& t) {
  return t ? "t=" + std::to_string(seconds_of(*t)) + "s" : std::string("-");
}

Output status_output(const ExamSession& s) {
  const auto st = s.status();
  std::ostringstream out;
  out << "session     " << st.session_id << "\n"
      << "state       " << to_string(st.state) << "\n"
      << "time        " << time_text(st.now) << "\n";
  if (st.cluster_phase)
    out << "cluster     " << to_string(*st.cluster_phase) << ", " << st.node_count << " nodes (" << st.healthy_count
        << " healthy)\n";
  else
    out << "cluster     -\n";
  out << "students    " << st.students << " (placed " << st.pods_placed << ", unplaced " << st.unplaced.size() << ")\n"
      << "cost so far " << st.cost_so_far.total.to_string() << " over " << to_string(st.cost_so_far.node_hours)
      << " node-hours\n"
      << "opened      " << time_text(st.opened_at) << "\n"
      << "closes      " << time_text(st.closes_at) << "\n"
      << "next backup " << time_text(st.next_backup_at) << "\n";
  return {out.str(), to_json(st)};
}

class Runner {
 public:
  fs::path home() const { return home_override.empty() ? data_home() : fs::path(home_override); }

  // Loads a session, steps it to the requested time, runs `op`, and saves
  // whatever happened even when `op` throws.
  template <typename Op>
  Output with_session(const std::string& id, bool auto_open, Op op) {
    auto host = SessionHost::load(home(), id);
    const Timestamp now = at ? at_second(*at) : host->wall_now();
    try {
      host->advance_to(now, DriverOptions{auto_open, false});
      auto out = op(*host, now);
      host->persist();
      return out;
    } catch (...) {
      host->persist();
      throw;
    }
  }

  std::string home_override;
  std::optional<std::int64_t> at;
};

CommandResult failure(int code, const std::string& text, json payload) {
  return CommandResult{code, text, std::move(payload)};
}

}  // namespace

CommandResult cli_dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Exam-environment orchestrator: pricing, simulated clusters, backups and exam lifecycle.", "examlab"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  bool as_json = false;
  Runner runner;
  app.add_flag("--json", as_json, "Print a JSON document instead of text");
  app.add_option("--home", runner.home_override, "Data directory (default $EXAMLAB_HOME or ./examlab-data)");
  app.add_option("--at", runner.at, "Virtual time in seconds since the session came up (default: wall clock)");

  std::function<Output()> action;

  // plan
  std::string config_path;
  std::string catalog_override;
  auto* plan = app.add_subcommand("plan", "Validate a session config and print its cost estimate");
  plan->add_option("config", config_path, "Session config (JSON)")->required();
  plan->add_option("--catalog", catalog_override, "Price catalog to use instead of the config's");
  plan->callback([&] {
    action = [&] {
      std::optional<fs::path> cat;
      if (!catalog_override.empty()) cat = catalog_override;
      ScratchHome scratch;
      auto host = SessionHost::plan(config_path, scratch.path, cat);
      const auto& s = host->session();
      const auto& c = s.config();
      std::ostringstream out;
      out << "session     " << c.session_id << " (Planned)\n"
          << "cluster     " << c.cluster.initial_node_count << " x " << c.cluster.node_type_name << " in "
          << c.cluster.region << "\n"
          << "window      " << hours_text(c.priced_window()) << "\n"
          << "students    " << s.students().size() << "\n"
          << cost_lines(s.planned_estimate());
      return Output{out.str(), json{{"session_id", c.session_id},
                                    {"state", "Planned"},
                                    {"students", s.students().size()},
                                    {"window_s", c.priced_window().count()},
                                    {"estimate", cost_payload(s.planned_estimate())}}};
    };
  });

  // estimate
  std::string hours_text_arg;
  std::string node_type_arg;
  std::optional<std::int64_t> nodes_arg;
  auto* estimate = app.add_subcommand("estimate", "Price a configuration for a fixed number of hours");
  estimate->add_option("config", config_path, "Session config (JSON)")->required();
  estimate->add_option("--hours", hours_text_arg, "Hours to price (decimal, default: the config's window)");
  estimate->add_option("--node-type", node_type_arg, "Override the node type");
  estimate->add_option("--nodes", nodes_arg, "Override the node count");
  estimate->add_option("--catalog", catalog_override, "Price catalog to use instead of the config's");
  estimate->callback([&] {
    action = [&] {
      const auto config = load_session_config(config_path);
      const auto catalog = load_catalog(catalog_override.empty() ? config.catalog_path : fs::path(catalog_override));
      const std::string type = node_type_arg.empty() ? config.cluster.node_type_name : node_type_arg;
      const std::int64_t nodes = nodes_arg.value_or(config.cluster.initial_node_count);
      const Rational hours = hours_text_arg.empty() ? Rational(config.priced_window().count()) / 3600
                                                    : parse_decimal(hours_text_arg);
      const auto est = estimate_fixed(catalog, type, nodes, hours);
      std::ostringstream out;
      out << "cluster     " << nodes << " x " << type << "\n"
          << "hours       " << to_string(hours) << "\n"
          << cost_lines(est);
      return Output{out.str(), json{{"node_type", type},
                                    {"nodes", nodes},
                                    {"hours", to_string(hours)},
                                    {"estimate", cost_payload(est)}}};
    };
  });

  // up
  auto* up = app.add_subcommand("up", "Plan a session and start provisioning its cluster");
  up->add_option("config", config_path, "Session config (JSON)")->required();
  up->callback([&] {
    action = [&] {
      auto host = SessionHost::plan(config_path, runner.home());
      host->create_on_disk();
      const Timestamp now = at_second(runner.at.value_or(0));
      try {
        host->session().provision(now);
      } catch (...) {
        host->persist();
        throw;
      }
      host->persist();
      auto out = status_output(host->session());
      out.human = "provisioning " + host->config().cluster.cluster_name + "; data in " + host->dir().string() + "\n" +
                  out.human;
      return out;
    };
  });

  std::string session_id;
  bool force = false;
  bool early = false;

  auto* open = app.add_subcommand("open", "Open the exam and print the proctoring allowlist");
  open->add_option("session", session_id, "Session id")->required();
  open->add_flag("--early", early, "Open before the scheduled time");
  open->callback([&] {
    action = [&] {
      return runner.with_session(session_id, false, [&](SessionHost& host, Timestamp now) {
        const auto manifest = host.session().open_exam(now, early);
        return Output{json(manifest).dump(2) + "\n", json(manifest)};
      });
    };
  });

  auto* status = app.add_subcommand("status", "Show a session's state, cluster and cost so far");
  status->add_option("session", session_id, "Session id")->required();
  status->callback([&] {
    action = [&] {
      return runner.with_session(session_id, true,
                                 [&](SessionHost& host, Timestamp) { return status_output(host.session()); });
    };
  });

  int target = 0;
  auto* scale = app.add_subcommand("scale", "Resize the session's cluster");
  scale->add_option("session", session_id, "Session id")->required();
  scale->add_option("nodes", target, "Target node count")->required();
  scale->callback([&] {
    action = [&] {
      return runner.with_session(session_id, true, [&](SessionHost& host, Timestamp now) {
        host.session().resize(target, now);
        return status_output(host.session());
      });
    };
  });

  auto* backup = app.add_subcommand("backup", "Snapshot every student's workspace now");
  backup->add_option("session", session_id, "Session id")->required();
  backup->callback([&] {
    action = [&] {
      return runner.with_session(session_id, true, [&](SessionHost& host, Timestamp now) {
        const auto snaps = host.session().backup_now(now);
        json list = json::array();
        for (const auto& s : snaps) list.push_back(s);
        return Output{std::to_string(snaps.size()) + " snapshots captured\n",
                      json{{"captured", snaps.size()}, {"snapshots", std::move(list)}}};
      });
    };
  });

  auto* close = app.add_subcommand("close", "Close the exam and take the final backups");
  close->add_option("session", session_id, "Session id")->required();
  close->add_flag("--force", force, "Close before expiry, or accept missing final backups");
  close->callback([&] {
    action = [&] {
      return runner.with_session(session_id, true, [&](SessionHost& host, Timestamp now) {
        host.session().close_exam(now, force);
        return status_output(host.session());
      });
    };
  });

  auto* down = app.add_subcommand("down", "Release the cluster and report the final cost");
  down->add_option("session", session_id, "Session id")->required();
  down->add_flag("--force", force, "Release without completed final backups");
  down->callback([&] {
    action = [&] {
      return runner.with_session(session_id, true, [&](SessionHost& host, Timestamp now) {
        const auto cost = host.session().release(now, force);
        return Output{"released " + host.config().cluster.cluster_name + "\n" + cost_lines(cost),
                      json{{"session_id", host.config().session_id}, {"state", "Released"}, {"cost", cost_payload(cost)}}};
      });
    };
  });

  auto* allowlist = app.add_subcommand("allowlist", "Print the proctoring allowlist manifest for a config");
  allowlist->add_option("config", config_path, "Session config (JSON)")->required();
  allowlist->callback([&] {
    action = [&] {
      const auto config = load_session_config(config_path);
      const auto manifest = make_allowlist(config.base_url, config.session_id, config.exam_link_path);
      return Output{json(manifest).dump(2) + "\n", json(manifest)};
    };
  });

  std::string out_dir;
  bool batch_wrapper = false;
  auto* render = app.add_subcommand("render-scripts", "Write the create / scale / release command scripts");
  render->add_option("config", config_path, "Session config (JSON)")->required();
  render->add_option("--out", out_dir, "Output directory")->required();
  render->add_flag("--batch-wrapper", batch_wrapper, "Wrap each command in Windows batch boilerplate");
  render->callback([&] {
    action = [&] {
      const auto config = load_session_config(config_path);
      const auto& spec = config.cluster;
      const int up_to = spec.autoscaling.enabled ? spec.autoscaling.max_nodes : spec.initial_node_count;
      const int down_to = spec.autoscaling.enabled ? spec.autoscaling.min_nodes : spec.initial_node_count;
      const std::vector<std::pair<std::string, ScriptAction>> files{
          {"01-create.txt", ScriptAction::create()},
          {"02-scale-up.txt", ScriptAction::scale_to(up_to)},
          {"03-scale-down.txt", ScriptAction::scale_to(down_to)},
          {"04-release.txt", ScriptAction::remove()}};
      std::error_code ec;
      fs::create_directories(out_dir, ec);
      if (ec) throw Error(Errc::io_error, "cannot create " + out_dir + ": " + ec.message());
      json written = json::array();
      std::string human;
      for (const auto& [name, act] : files) {
        const fs::path path = fs::path(out_dir) / name;
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f << render_script(spec, act, RenderOptions{batch_wrapper});
        if (!f.flush()) throw Error(Errc::io_error, "cannot write " + path.string());
        written.push_back(path.string());
        human += path.string() + "\n";
      }
      return Output{human, json{{"files", std::move(written)}}};
    };
  });

  std::optional<std::uint64_t> seed;
  std::string speed = "virtual";
  auto* sim = app.add_subcommand("simulate", "Run a whole exam on the virtual clock and summarize it");
  sim->add_option("config", config_path, "Session config (JSON)")->required();
  sim->add_option("--seed", seed, "Random seed for the simulated provider and workspaces");
  sim->add_option("--speed", speed, "virtual (as fast as possible) or real (one virtual second per second)")
      ->check(CLI::IsMember({"real", "virtual"}));
  sim->callback([&] {
    action = [&] {
      const auto summary = simulate(config_path, SimulationOptions{seed, speed == "real"});
      return Output{format_simulation(summary), summary};
    };
  });

  std::string bind = "127.0.0.1:8750";
  auto* serve = app.add_subcommand("serve", "Serve the HTTP control API for every session in the data directory");
  serve->add_option("--bind", bind, "host:port to listen on");
  serve->callback([&] {
    action = [&]() -> Output {
      const auto colon = bind.rfind(':');
      if (colon == std::string::npos) throw Error(Errc::invalid_argument, "--bind expects host:port");
      int port = 0;
      try {
        port = std::stoi(bind.substr(colon + 1));
      } catch (const std::exception&) {
        throw Error(Errc::invalid_argument, "--bind expects host:port");
      }
      auto registry = SessionRegistry::load_all(runner.home(), [](const SessionHost& h) { return h.wall_now(); });
      ApiServer server(*registry, bind.substr(0, colon), port);
      std::cerr << "serving " << registry->all().size() << " session(s) on http://" << bind << "\n";
      server.run();
      return Output{"stopped\n", json{{"stopped", true}}};
    };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    return CommandResult{0, app.help(), std::nullopt};
  } catch (const CLI::CallForAllHelp&) {
    return CommandResult{0, app.help("", CLI::AppFormatMode::All), std::nullopt};
  } catch (const CLI::ParseError& e) {
    return failure(2, std::string("usage error: ") + e.what() + "\n", json{{"code", "usage"}, {"message", e.what()}});
  }

  try {
    auto out = action();
    if (as_json) return CommandResult{0, out.payload.dump(2) + "\n", out.payload};
    return CommandResult{0, out.human, out.payload};
  } catch (const ValidationError& e) {
    json payload{{"code", to_string(e.code())}, {"message", e.what()}, {"problems", e.problems()}};
    std::string text = "error: " + std::string(to_string(e.code())) + "\n";
    for (const auto& p : e.problems()) text += "  " + p + "\n";
    return failure(1, as_json ? payload.dump(2) + "\n" : text, payload);
  } catch (const Error& e) {
    json payload{{"code", to_string(e.code())}, {"message", e.what()}};
    return failure(1, as_json ? payload.dump(2) + "\n" : "error: " + std::string(to_string(e.code())) + ": " + e.what() + "\n",
                   payload);
  } catch (const std::exception& e) {
    json payload{{"code", "internal"}, {"message", e.what()}};
    return failure(1, as_json ? payload.dump(2) + "\n" : std::string("error: internal: ") + e.what() + "\n", payload);
  }
}

}  // namespace examlab
