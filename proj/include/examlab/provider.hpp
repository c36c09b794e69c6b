#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "examlab/time.hpp"

namespace examlab {

struct AutoscalingConfig {
  bool enabled = false;
  int min_nodes = 0;
  int max_nodes = 0;
};

// Desired cluster configuration, one default node pool.
struct ClusterSpec {
  std::string cluster_name;
  std::string region;
  std::string node_type_name;
  int initial_node_count = 3;
  AutoscalingConfig autoscaling;
  bool auto_repair = false;
  bool auto_upgrade = false;

  // Every broken invariant, one message each; empty when valid.
  std::vector<std::string> violations() const;
  // Throws Errc::invalid_spec listing the violations.
  void validate() const;
};

inline constexpr int kMinClusterNodes = 3;

enum class NodeHealth { Healthy, Failed, Repairing };
enum class ClusterPhase { Provisioning, Running, Resizing, Deleting, Deleted };

std::string_view to_string(NodeHealth h);
std::string_view to_string(ClusterPhase p);

struct NodeInstance {
  std::string node_id;
  std::string node_type_name;
  NodeHealth health = NodeHealth::Healthy;
  Timestamp created_at;
};

struct ClusterState {
  ClusterPhase phase = ClusterPhase::Provisioning;
  std::vector<NodeInstance> nodes;  // node_id order
  ClusterSpec spec;

  int healthy_count() const;
};

struct ClusterHandle {
  std::uint64_t id = 0;
  friend auto operator<=>(const ClusterHandle&, const ClusterHandle&) = default;
};

enum class EventKind {
  ClusterCreating,
  ClusterRunning,
  AutoUpgradeNoop,
  ResizeStarted,
  NodeAdded,
  NodeRemoved,
  ResizeCompleted,
  NodeFailed,
  NodeRepairing,
  NodeReplaced,
  ClusterDeleting,
  ClusterDeleted,
};

std::string_view to_string(EventKind k);

struct ProviderEvent {
  Timestamp t;
  EventKind kind = EventKind::ClusterCreating;
  std::string cluster;
  // Node count of the cluster after the event.
  int node_count = 0;
  std::optional<std::string> node_id;
  std::optional<std::string> replaced_node_id;
  std::optional<int> target;

  friend bool operator==(const ProviderEvent&, const ProviderEvent&) = default;
};

void to_json(nlohmann::json& j, const ClusterSpec& spec);
void from_json(const nlohmann::json& j, ClusterSpec& spec);

// {t, kind, cluster, detail}
void to_json(nlohmann::json& j, const ProviderEvent& e);
void from_json(const nlohmann::json& j, ProviderEvent& e);
// One JSON object per line.
void write_event_log(std::ostream& out, std::span<const ProviderEvent> events);

struct ResizeAck {
  bool no_op = false;
  Timestamp completes_at;
};

// Cluster lifecycle contract. Implementations report what happened through
// poll(); callers own the clock.
class ClusterProvider {
 public:
  virtual ~ClusterProvider() = default;

  virtual ClusterHandle create_cluster(const ClusterSpec& spec) = 0;
  virtual ResizeAck resize_cluster(ClusterHandle handle, int target) = 0;
  virtual void delete_cluster(ClusterHandle handle) = 0;
  virtual ClusterState state(ClusterHandle handle) const = 0;

  // Brings the provider up to `now` and returns every event not yet reported,
  // in order.
  virtual std::vector<ProviderEvent> poll(Timestamp now) = 0;
};

struct SimConfig {
  Duration provision_delay{300};
  Duration resize_delay_per_node{20};
  Duration repair_delay{120};
  std::uint64_t random_seed = 0;

  void validate() const;
};

// Discrete-event provider on a virtual clock. Same config and same call
// sequence give the same event log, byte for byte.
class SimulatedProvider final : public ClusterProvider {
 public:
  explicit SimulatedProvider(SimConfig config = {});

  ClusterHandle create_cluster(const ClusterSpec& spec) override;
  ResizeAck resize_cluster(ClusterHandle handle, int target) override;
  void delete_cluster(ClusterHandle handle) override;
  ClusterState state(ClusterHandle handle) const override;
  std::vector<ProviderEvent> poll(Timestamp now) override;

  void inject_node_failure(ClusterHandle handle, std::string_view node_id);
  // The next create_cluster call fails with Errc::provider_failure.
  void fail_next_create(std::string reason);

  // Fires every transition due in (now, now + dt] and returns all events not
  // yet reported, including those logged by synchronous operations.
  std::vector<ProviderEvent> advance(Duration dt);

  Timestamp now() const { return now_; }
  std::optional<Timestamp> next_event_time() const;
  bool quiescent() const { return timers_.empty(); }
  const std::vector<ProviderEvent>& log() const { return log_; }
  const SimConfig& config() const { return config_; }
  std::optional<ClusterHandle> find(std::string_view cluster_name) const;

  nlohmann::json save() const;
  static SimulatedProvider load(const nlohmann::json& doc);

 private:
  enum class TimerKind { BecomeRunning, AddNode, RemoveNode, FinishResize, FinishRepair };

  struct Timer {
    Timestamp at;
    std::uint64_t seq = 0;
    TimerKind kind = TimerKind::BecomeRunning;
    std::uint64_t cluster = 0;
    std::uint64_t epoch = 0;
    std::string node_id;
  };

  struct Cluster {
    ClusterSpec spec;
    ClusterPhase phase = ClusterPhase::Provisioning;
    std::vector<NodeInstance> nodes;
    std::uint64_t next_node_index = 1;
    std::string pool_suffix;
    std::uint64_t epoch = 0;
    int target = 0;
  };

  Cluster& live(ClusterHandle handle);
  const Cluster& any(ClusterHandle handle) const;
  NodeInstance make_node(Cluster& c);
  void emit(EventKind kind, const Cluster& c, std::optional<std::string> node = std::nullopt,
            std::optional<std::string> replaced = std::nullopt, std::optional<int> target = std::nullopt);
  void schedule(Timestamp at, TimerKind kind, std::uint64_t cluster, std::string node_id = {});
  void fire(const Timer& timer);

  SimConfig config_;
  Timestamp now_{};
  std::uint64_t next_handle_ = 1;
  std::uint64_t next_timer_seq_ = 0;
  std::uint64_t rng_state_ = 0;
  std::map<std::uint64_t, Cluster> clusters_;
  // Ordered by (at, seq): ties fire in insertion order.
  std::map<std::pair<Timestamp, std::uint64_t>, Timer> timers_;
  std::vector<ProviderEvent> log_;
  std::size_t reported_ = 0;
  std::optional<std::string> fail_next_create_;
};

// Provider-CLI rendering of the lifecycle commands.
struct ScriptAction {
  enum class Kind { Create, ScaleTo, Delete } kind = Kind::Create;
  int node_count = 0;

  static ScriptAction create() { return {Kind::Create, 0}; }
  static ScriptAction scale_to(int n) { return {Kind::ScaleTo, n}; }
  static ScriptAction remove() { return {Kind::Delete, 0}; }
};

struct RenderOptions {
  // Wraps the command block in the Windows batch boilerplate operators ran it with.
  bool batch_wrapper = false;
};

// Pure; throws Errc::invalid_spec.
std::string render_script(const ClusterSpec& spec, const ScriptAction& action, const RenderOptions& options = {});

}  // namespace examlab
