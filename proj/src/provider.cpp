#include "examlab/provider.hpp"

#include <algorithm>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "examlab/error.hpp"

namespace examlab {

using json = nlohmann::json;

namespace {

bool is_dns_label(std::string_view name) {
  if (name.empty() || name.size() > 63) return false;
  if (name.front() == '-' || name.back() == '-') return false;
  return std::all_of(name.begin(), name.end(),
                     [](char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-'; });
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::vector<std::string> ClusterSpec::violations() const {
  std::vector<std::string> out;
  if (!is_dns_label(cluster_name))
    out.push_back("cluster_name: must be a nonempty DNS label (lowercase alphanumerics and hyphens)");
  if (region.empty()) out.push_back("region: must not be empty");
  if (node_type_name.empty()) out.push_back("node_type_name: must not be empty");
  if (initial_node_count < kMinClusterNodes)
    out.push_back("initial_node_count: must be >= " + std::to_string(kMinClusterNodes));
  if (autoscaling.enabled) {
    if (autoscaling.min_nodes < kMinClusterNodes)
      out.push_back("autoscaling.min_nodes: must be >= " + std::to_string(kMinClusterNodes));
    if (autoscaling.min_nodes > initial_node_count)
      out.push_back("autoscaling.min_nodes: must be <= initial_node_count");
    if (initial_node_count > autoscaling.max_nodes)
      out.push_back("autoscaling.max_nodes: must be >= initial_node_count");
  }
  return out;
}

void ClusterSpec::validate() const {
  auto problems = violations();
  if (problems.empty()) return;
  std::string msg = "invalid cluster spec";
  for (const auto& p : problems) msg += "; " + p;
  throw Error(Errc::invalid_spec, msg);
}

std::string_view to_string(NodeHealth h) {
  switch (h) {
    case NodeHealth::Healthy: return "Healthy";
    case NodeHealth::Failed: return "Failed";
    case NodeHealth::Repairing: return "Repairing";
  }
  return "?";
}

std::string_view to_string(ClusterPhase p) {
  switch (p) {
    case ClusterPhase::Provisioning: return "Provisioning";
    case ClusterPhase::Running: return "Running";
    case ClusterPhase::Resizing: return "Resizing";
    case ClusterPhase::Deleting: return "Deleting";
    case ClusterPhase::Deleted: return "Deleted";
  }
  return "?";
}

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::ClusterCreating: return "ClusterCreating";
    case EventKind::ClusterRunning: return "ClusterRunning";
    case EventKind::AutoUpgradeNoop: return "AutoUpgradeNoop";
    case EventKind::ResizeStarted: return "ResizeStarted";
    case EventKind::NodeAdded: return "NodeAdded";
    case EventKind::NodeRemoved: return "NodeRemoved";
    case EventKind::ResizeCompleted: return "ResizeCompleted";
    case EventKind::NodeFailed: return "NodeFailed";
    case EventKind::NodeRepairing: return "NodeRepairing";
    case EventKind::NodeReplaced: return "NodeReplaced";
    case EventKind::ClusterDeleting: return "ClusterDeleting";
    case EventKind::ClusterDeleted: return "ClusterDeleted";
  }
  return "?";
}

namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view text, const Enum (&values)[N], const char* what) {
  for (Enum v : values)
    if (to_string(v) == text) return v;
  throw Error(Errc::parse_error, std::string("unknown ") + what + ": " + std::string(text));
}

constexpr EventKind kEventKinds[] = {
    EventKind::ClusterCreating, EventKind::ClusterRunning,  EventKind::AutoUpgradeNoop, EventKind::ResizeStarted,
    EventKind::NodeAdded,       EventKind::NodeRemoved,     EventKind::ResizeCompleted, EventKind::NodeFailed,
    EventKind::NodeRepairing,   EventKind::NodeReplaced,    EventKind::ClusterDeleting, EventKind::ClusterDeleted};
constexpr ClusterPhase kPhases[] = {ClusterPhase::Provisioning, ClusterPhase::Running, ClusterPhase::Resizing,
                                    ClusterPhase::Deleting, ClusterPhase::Deleted};
constexpr NodeHealth kHealth[] = {NodeHealth::Healthy, NodeHealth::Failed, NodeHealth::Repairing};

}  // namespace

int ClusterState::healthy_count() const {
  return static_cast<int>(
      std::count_if(nodes.begin(), nodes.end(), [](const NodeInstance& n) { return n.health == NodeHealth::Healthy; }));
}

void to_json(json& j, const ClusterSpec& spec) {
  j = json{{"cluster_name", spec.cluster_name},
           {"region", spec.region},
           {"node_type_name", spec.node_type_name},
           {"initial_node_count", spec.initial_node_count},
           {"autoscaling",
            {{"enabled", spec.autoscaling.enabled},
             {"min_nodes", spec.autoscaling.min_nodes},
             {"max_nodes", spec.autoscaling.max_nodes}}},
           {"auto_repair", spec.auto_repair},
           {"auto_upgrade", spec.auto_upgrade}};
}

void from_json(const json& j, ClusterSpec& spec) {
  spec.cluster_name = j.at("cluster_name").get<std::string>();
  spec.region = j.at("region").get<std::string>();
  spec.node_type_name = j.at("node_type_name").get<std::string>();
  spec.initial_node_count = j.at("initial_node_count").get<int>();
  spec.autoscaling = {};
  if (j.contains("autoscaling")) {
    const auto& a = j.at("autoscaling");
    spec.autoscaling.enabled = a.value("enabled", false);
    spec.autoscaling.min_nodes = a.value("min_nodes", 0);
    spec.autoscaling.max_nodes = a.value("max_nodes", 0);
  }
  spec.auto_repair = j.value("auto_repair", false);
  spec.auto_upgrade = j.value("auto_upgrade", false);
}

void to_json(json& j, const ProviderEvent& e) {
  json detail{{"node_count", e.node_count}};
  if (e.node_id) detail["node_id"] = *e.node_id;
  if (e.replaced_node_id) detail["replaced_node_id"] = *e.replaced_node_id;
  if (e.target) detail["target"] = *e.target;
  j = json{{"t", seconds_of(e.t)}, {"kind", to_string(e.kind)}, {"cluster", e.cluster}, {"detail", std::move(detail)}};
}

void from_json(const json& j, ProviderEvent& e) {
  e.t = at_second(j.at("t").get<std::int64_t>());
  e.kind = parse_enum(j.at("kind").get<std::string>(), kEventKinds, "event kind");
  e.cluster = j.at("cluster").get<std::string>();
  const auto& d = j.at("detail");
  e.node_count = d.at("node_count").get<int>();
  e.node_id = d.contains("node_id") ? std::optional(d.at("node_id").get<std::string>()) : std::nullopt;
  e.replaced_node_id =
      d.contains("replaced_node_id") ? std::optional(d.at("replaced_node_id").get<std::string>()) : std::nullopt;
  e.target = d.contains("target") ? std::optional(d.at("target").get<int>()) : std::nullopt;
}

void write_event_log(std::ostream& out, std::span<const ProviderEvent> events) {
  for (const auto& e : events) out << json(e).dump() << '\n';
}

void SimConfig::validate() const {
  if (provision_delay.count() < 0 || resize_delay_per_node.count() < 0 || repair_delay.count() < 0)
    throw Error(Errc::invalid_argument, "simulation delays must be >= 0");
}

SimulatedProvider::SimulatedProvider(SimConfig config) : config_(config), rng_state_(config.random_seed) {
  config_.validate();
}

SimulatedProvider::Cluster& SimulatedProvider::live(ClusterHandle handle) {
  auto it = clusters_.find(handle.id);
  if (it == clusters_.end() || it->second.phase == ClusterPhase::Deleted)
    throw Error(Errc::unknown_handle, "unknown cluster handle " + std::to_string(handle.id));
  return it->second;
}

const SimulatedProvider::Cluster& SimulatedProvider::any(ClusterHandle handle) const {
  auto it = clusters_.find(handle.id);
  if (it == clusters_.end()) throw Error(Errc::unknown_handle, "unknown cluster handle " + std::to_string(handle.id));
  return it->second;
}

std::optional<ClusterHandle> SimulatedProvider::find(std::string_view cluster_name) const {
  for (const auto& [id, c] : clusters_)
    if (c.phase != ClusterPhase::Deleted && c.spec.cluster_name == cluster_name) return ClusterHandle{id};
  return std::nullopt;
}

NodeInstance SimulatedProvider::make_node(Cluster& c) {
  char index[16];
  std::snprintf(index, sizeof index, "%05llu", static_cast<unsigned long long>(c.next_node_index++));
  NodeInstance node;
  node.node_id = "gke-" + c.spec.cluster_name + "-default-pool-" + c.pool_suffix + "-" + index;
  node.node_type_name = c.spec.node_type_name;
  node.health = NodeHealth::Healthy;
  node.created_at = now_;
  return node;
}

void SimulatedProvider::emit(EventKind kind, const Cluster& c, std::optional<std::string> node,
                             std::optional<std::string> replaced, std::optional<int> target) {
  ProviderEvent e;
  e.t = now_;
  e.kind = kind;
  e.cluster = c.spec.cluster_name;
  e.node_count = static_cast<int>(c.nodes.size());
  e.node_id = std::move(node);
  e.replaced_node_id = std::move(replaced);
  e.target = target;
  log_.push_back(std::move(e));
}

void SimulatedProvider::schedule(Timestamp at, TimerKind kind, std::uint64_t cluster, std::string node_id) {
  Timer t;
  t.at = at;
  t.seq = next_timer_seq_++;
  t.kind = kind;
  t.cluster = cluster;
  t.epoch = clusters_.at(cluster).epoch;
  t.node_id = std::move(node_id);
  timers_.emplace(std::pair{t.at, t.seq}, std::move(t));
}

void SimulatedProvider::fail_next_create(std::string reason) { fail_next_create_ = std::move(reason); }

ClusterHandle SimulatedProvider::create_cluster(const ClusterSpec& spec) {
  spec.validate();
  if (fail_next_create_) {
    auto reason = std::move(*fail_next_create_);
    fail_next_create_.reset();
    throw Error(Errc::provider_failure, "cluster creation failed: " + reason);
  }
  if (find(spec.cluster_name))
    throw Error(Errc::duplicate_cluster, "cluster already exists: " + spec.cluster_name);

  const std::uint64_t id = next_handle_++;
  Cluster c;
  c.spec = spec;
  c.phase = ClusterPhase::Provisioning;
  c.target = spec.initial_node_count;
  char suffix[16];
  std::snprintf(suffix, sizeof suffix, "%08llx",
                static_cast<unsigned long long>(splitmix64(rng_state_) & 0xffffffffULL));
  c.pool_suffix = suffix;
  auto& stored = clusters_.emplace(id, std::move(c)).first->second;
  emit(EventKind::ClusterCreating, stored, std::nullopt, std::nullopt, spec.initial_node_count);
  schedule(now_ + config_.provision_delay, TimerKind::BecomeRunning, id);
  return ClusterHandle{id};
}

ResizeAck SimulatedProvider::resize_cluster(ClusterHandle handle, int target) {
  auto& c = live(handle);
  if (c.phase != ClusterPhase::Running)
    throw Error(Errc::not_running, "cluster " + c.spec.cluster_name + " is " + std::string(to_string(c.phase)));
  if (target < kMinClusterNodes)
    throw Error(Errc::invalid_argument, "resize target must be >= " + std::to_string(kMinClusterNodes));

  const int current = static_cast<int>(c.nodes.size());
  if (target == current) return ResizeAck{true, now_};

  c.phase = ClusterPhase::Resizing;
  c.target = target;
  emit(EventKind::ResizeStarted, c, std::nullopt, std::nullopt, target);
  const int steps = target > current ? target - current : current - target;
  const TimerKind step_kind = target > current ? TimerKind::AddNode : TimerKind::RemoveNode;
  for (int k = 1; k <= steps; ++k) schedule(now_ + k * config_.resize_delay_per_node, step_kind, handle.id);
  const Timestamp done = now_ + steps * config_.resize_delay_per_node;
  schedule(done, TimerKind::FinishResize, handle.id);
  return ResizeAck{false, done};
}

void SimulatedProvider::delete_cluster(ClusterHandle handle) {
  auto& c = live(handle);
  c.phase = ClusterPhase::Deleting;
  c.epoch++;
  emit(EventKind::ClusterDeleting, c);
  c.nodes.clear();
  c.target = 0;
  c.phase = ClusterPhase::Deleted;
  emit(EventKind::ClusterDeleted, c);
}

ClusterState SimulatedProvider::state(ClusterHandle handle) const {
  const auto& c = any(handle);
  return ClusterState{c.phase, c.nodes, c.spec};
}

void SimulatedProvider::inject_node_failure(ClusterHandle handle, std::string_view node_id) {
  auto& c = live(handle);
  if (c.phase != ClusterPhase::Running)
    throw Error(Errc::not_running, "cluster " + c.spec.cluster_name + " is " + std::string(to_string(c.phase)));
  auto it = std::find_if(c.nodes.begin(), c.nodes.end(), [&](const NodeInstance& n) { return n.node_id == node_id; });
  if (it == c.nodes.end()) throw Error(Errc::unknown_node, "unknown node: " + std::string(node_id));
  if (it->health != NodeHealth::Healthy)
    throw Error(Errc::node_not_healthy, "node is " + std::string(to_string(it->health)) + ": " + it->node_id);
  const int healthy = ClusterState{c.phase, c.nodes, c.spec}.healthy_count();
  if (healthy - 1 < kMinClusterNodes)
    throw Error(Errc::node_not_healthy, "failing " + it->node_id + " would leave a running cluster below " +
                                            std::to_string(kMinClusterNodes) + " healthy nodes");

  it->health = NodeHealth::Failed;
  const std::string id = it->node_id;
  emit(EventKind::NodeFailed, c, id);
  if (c.spec.auto_repair) {
    it->health = NodeHealth::Repairing;
    emit(EventKind::NodeRepairing, c, id);
    schedule(now_ + config_.repair_delay, TimerKind::FinishRepair, handle.id, id);
  }
}

void SimulatedProvider::fire(const Timer& timer) {
  auto it = clusters_.find(timer.cluster);
  if (it == clusters_.end() || it->second.epoch != timer.epoch) return;
  auto& c = it->second;

  switch (timer.kind) {
    case TimerKind::BecomeRunning: {
      if (c.phase != ClusterPhase::Provisioning) return;
      for (int i = 0; i < c.spec.initial_node_count; ++i) c.nodes.push_back(make_node(c));
      c.phase = ClusterPhase::Running;
      emit(EventKind::ClusterRunning, c);
      if (c.spec.auto_upgrade) emit(EventKind::AutoUpgradeNoop, c);
      return;
    }
    case TimerKind::AddNode: {
      c.nodes.push_back(make_node(c));
      emit(EventKind::NodeAdded, c, c.nodes.back().node_id);
      return;
    }
    case TimerKind::RemoveNode: {
      if (c.nodes.empty()) return;
      // Newest first, but a broken node goes before any healthy one.
      auto victim = std::find_if(c.nodes.rbegin(), c.nodes.rend(),
                                 [](const NodeInstance& n) { return n.health != NodeHealth::Healthy; });
      if (victim == c.nodes.rend()) victim = c.nodes.rbegin();
      const std::string id = victim->node_id;
      c.nodes.erase(std::next(victim).base());
      emit(EventKind::NodeRemoved, c, id);
      return;
    }
    case TimerKind::FinishResize: {
      if (c.phase != ClusterPhase::Resizing) return;
      c.phase = ClusterPhase::Running;
      emit(EventKind::ResizeCompleted, c, std::nullopt, std::nullopt, c.target);
      return;
    }
    case TimerKind::FinishRepair: {
      auto node = std::find_if(c.nodes.begin(), c.nodes.end(),
                               [&](const NodeInstance& n) { return n.node_id == timer.node_id; });
      if (node == c.nodes.end()) return;
      c.nodes.erase(node);
      c.nodes.push_back(make_node(c));
      emit(EventKind::NodeReplaced, c, c.nodes.back().node_id, timer.node_id);
      return;
    }
  }
}

std::vector<ProviderEvent> SimulatedProvider::advance(Duration dt) {
  if (dt.count() < 0) throw Error(Errc::invalid_argument, "cannot advance the clock backwards");
  const Timestamp until = now_ + dt;
  while (!timers_.empty() && timers_.begin()->first.first <= until) {
    auto node = timers_.extract(timers_.begin());
    now_ = node.mapped().at;
    fire(node.mapped());
  }
  now_ = until;
  std::vector<ProviderEvent> out(log_.begin() + static_cast<std::ptrdiff_t>(reported_), log_.end());
  reported_ = log_.size();
  return out;
}

std::vector<ProviderEvent> SimulatedProvider::poll(Timestamp now) {
  if (now < now_)
    throw Error(Errc::invalid_argument, "poll at t=" + std::to_string(seconds_of(now)) +
                                            " is before provider time t=" + std::to_string(seconds_of(now_)));
  return advance(now - now_);
}

std::optional<Timestamp> SimulatedProvider::next_event_time() const {
  if (timers_.empty()) return std::nullopt;
  return timers_.begin()->first.first;
}

namespace {

json node_to_json(const NodeInstance& n) {
  return json{{"node_id", n.node_id},
              {"node_type_name", n.node_type_name},
              {"health", to_string(n.health)},
              {"created_at", seconds_of(n.created_at)}};
}

NodeInstance node_from_json(const json& j) {
  NodeInstance n;
  n.node_id = j.at("node_id").get<std::string>();
  n.node_type_name = j.at("node_type_name").get<std::string>();
  n.health = parse_enum(j.at("health").get<std::string>(), kHealth, "node health");
  n.created_at = at_second(j.at("created_at").get<std::int64_t>());
  return n;
}

}  // namespace

json SimulatedProvider::save() const {
  json clusters = json::array();
  for (const auto& [id, c] : clusters_) {
    json nodes = json::array();
    for (const auto& n : c.nodes) nodes.push_back(node_to_json(n));
    clusters.push_back(json{{"id", id},
                            {"spec", c.spec},
                            {"phase", to_string(c.phase)},
                            {"nodes", std::move(nodes)},
                            {"next_node_index", c.next_node_index},
                            {"pool_suffix", c.pool_suffix},
                            {"epoch", c.epoch},
                            {"target", c.target}});
  }
  json timers = json::array();
  for (const auto& [key, t] : timers_) {
    timers.push_back(json{{"at", seconds_of(t.at)},
                          {"seq", t.seq},
                          {"kind", static_cast<int>(t.kind)},
                          {"cluster", t.cluster},
                          {"epoch", t.epoch},
                          {"node_id", t.node_id}});
  }
  json doc{{"config",
            {{"provision_delay_s", config_.provision_delay.count()},
             {"resize_delay_per_node_s", config_.resize_delay_per_node.count()},
             {"repair_delay_s", config_.repair_delay.count()},
             {"random_seed", config_.random_seed}}},
           {"now", seconds_of(now_)},
           {"next_handle", next_handle_},
           {"next_timer_seq", next_timer_seq_},
           {"rng_state", rng_state_},
           {"clusters", std::move(clusters)},
           {"timers", std::move(timers)},
           {"log", log_},
           {"reported", reported_}};
  if (fail_next_create_) doc["fail_next_create"] = *fail_next_create_;
  return doc;
}

SimulatedProvider SimulatedProvider::load(const json& doc) {
  try {
    const auto& cfg = doc.at("config");
    SimConfig config;
    config.provision_delay = Duration{cfg.at("provision_delay_s").get<std::int64_t>()};
    config.resize_delay_per_node = Duration{cfg.at("resize_delay_per_node_s").get<std::int64_t>()};
    config.repair_delay = Duration{cfg.at("repair_delay_s").get<std::int64_t>()};
    config.random_seed = cfg.at("random_seed").get<std::uint64_t>();

    SimulatedProvider p(config);
    p.now_ = at_second(doc.at("now").get<std::int64_t>());
    p.next_handle_ = doc.at("next_handle").get<std::uint64_t>();
    p.next_timer_seq_ = doc.at("next_timer_seq").get<std::uint64_t>();
    p.rng_state_ = doc.at("rng_state").get<std::uint64_t>();
    for (const auto& jc : doc.at("clusters")) {
      Cluster c;
      c.spec = jc.at("spec").get<ClusterSpec>();
      c.phase = parse_enum(jc.at("phase").get<std::string>(), kPhases, "cluster phase");
      for (const auto& jn : jc.at("nodes")) c.nodes.push_back(node_from_json(jn));
      c.next_node_index = jc.at("next_node_index").get<std::uint64_t>();
      c.pool_suffix = jc.at("pool_suffix").get<std::string>();
      c.epoch = jc.at("epoch").get<std::uint64_t>();
      c.target = jc.at("target").get<int>();
      p.clusters_.emplace(jc.at("id").get<std::uint64_t>(), std::move(c));
    }
    for (const auto& jt : doc.at("timers")) {
      Timer t;
      t.at = at_second(jt.at("at").get<std::int64_t>());
      t.seq = jt.at("seq").get<std::uint64_t>();
      t.kind = static_cast<TimerKind>(jt.at("kind").get<int>());
      t.cluster = jt.at("cluster").get<std::uint64_t>();
      t.epoch = jt.at("epoch").get<std::uint64_t>();
      t.node_id = jt.at("node_id").get<std::string>();
      p.timers_.emplace(std::pair{t.at, t.seq}, std::move(t));
    }
    p.log_ = doc.at("log").get<std::vector<ProviderEvent>>();
    p.reported_ = doc.at("reported").get<std::size_t>();
    if (doc.contains("fail_next_create")) p.fail_next_create_ = doc.at("fail_next_create").get<std::string>();
    return p;
  } catch (const json::exception& e) {
    throw Error(Errc::parse_error, std::string("provider state: ") + e.what());
  }
}

// Scripts

namespace {

constexpr std::string_view kContinuation = " ^\n  ";

std::string command_block(const ClusterSpec& spec, const ScriptAction& action) {
  switch (action.kind) {
    case ScriptAction::Kind::Create: {
      std::vector<std::string> parts;
      parts.push_back("gcloud container clusters create " + spec.cluster_name);
      parts.push_back("--region " + spec.region);
      parts.push_back("--num-nodes=" + std::to_string(spec.initial_node_count));
      parts.push_back("--machine-type=" + spec.node_type_name);
      if (spec.auto_repair) parts.push_back("--enable-autorepair");
      if (spec.auto_upgrade) parts.push_back("--enable-autoupgrade");
      if (spec.autoscaling.enabled) {
        parts.push_back("--enable-autoscaling");
        parts.push_back("--max-nodes=" + std::to_string(spec.autoscaling.max_nodes));
        parts.push_back("--min-nodes=" + std::to_string(spec.autoscaling.min_nodes));
      }
      std::string out = parts.front();
      for (std::size_t i = 1; i < parts.size(); ++i) {
        out += kContinuation;
        out += parts[i];
      }
      return out + "\n";
    }
    case ScriptAction::Kind::ScaleTo:
      if (action.node_count < kMinClusterNodes)
        throw Error(Errc::invalid_argument, "scale target must be >= " + std::to_string(kMinClusterNodes));
      return "gcloud container clusters resize " + spec.cluster_name + std::string(kContinuation) +
             "--node-pool default-pool --num-nodes " + std::to_string(action.node_count) + " --quiet\n";
    case ScriptAction::Kind::Delete:
      return "gcloud container clusters delete " + spec.cluster_name + "\n";
  }
  return {};
}

}  // namespace

std::string render_script(const ClusterSpec& spec, const ScriptAction& action, const RenderOptions& options) {
  spec.validate();
  std::string block = command_block(spec, action);
  if (!options.batch_wrapper) return block;

  std::string out = "ECHO OFF\nCLS\nSET PATH=\ncd C:\\Users\\admin\\AppData\\Local\\Google\\Cloud SDK\n";
  switch (action.kind) {
    case ScriptAction::Kind::Create:
      out += "ECHO Create Kubernetes Cluster\nset REGION=" + spec.region + "\n" + block + "ECHO ---\n";
      break;
    case ScriptAction::Kind::ScaleTo:
      out += action.node_count >= spec.initial_node_count ? "ECHO Add nodes cluster Kubernetes\n"
                                                          : "ECHO Remove nodes cluster Kubernetes\n";
      out += block + "ECHO Done\n";
      break;
    case ScriptAction::Kind::Delete:
      out += "ECHO Delete Kubernetes Cluster\nset REGION=" + spec.region + "\n" + block + "ECHO ---\n";
      break;
  }
  return out + "ECHO ON\n";
}

}  // namespace examlab
