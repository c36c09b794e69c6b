#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "examlab/time.hpp"

namespace examlab {

struct NodeType;

// CPU in millicores and memory in MiB, so that 0.5 CPU or 3.75 GiB compare
// exactly.
struct Resources {
  std::int64_t milli_cpu = 0;
  std::int64_t ram_mib = 0;

  static Resources from(double cores, double ram_gb);

  double cores() const { return static_cast<double>(milli_cpu) / 1000.0; }
  double ram_gb() const { return static_cast<double>(ram_mib) / 1024.0; }
  bool fits_in(const Resources& capacity) const {
    return milli_cpu <= capacity.milli_cpu && ram_mib <= capacity.ram_mib;
  }

  friend Resources operator+(Resources a, const Resources& b) {
    return {a.milli_cpu + b.milli_cpu, a.ram_mib + b.ram_mib};
  }
  friend Resources operator-(Resources a, const Resources& b) {
    return {a.milli_cpu - b.milli_cpu, a.ram_mib - b.ram_mib};
  }
  friend bool operator==(const Resources&, const Resources&) = default;
};

Resources capacity_of(const NodeType& type);

// One student's workspace.
struct PodSpec {
  std::string student_uid;
  Resources request;
};

struct NodeCapacity {
  std::string node_id;
  Resources capacity;
};

struct Assignment {
  PodSpec pod;
  std::string node_id;
};

struct NodeLoad {
  std::string node_id;
  Resources capacity;
  Resources used;
  int pod_count = 0;

  Resources residual() const { return capacity - used; }
};

struct Placement {
  std::vector<Assignment> assignments;  // in placement order
  std::vector<PodSpec> unplaced;
  std::vector<NodeLoad> nodes;  // node_id order

  std::size_t pod_count() const { return assignments.size() + unplaced.size(); }
  std::vector<PodSpec> all_pods() const;
};

void to_json(nlohmann::json& j, const Placement& p);

// First-fit-decreasing. Pods are sorted by (cpu desc, ram desc, uid asc),
// nodes are scanned in node_id order. Pods that fit nowhere end up in
// `unplaced`.
Placement place(std::span<const PodSpec> pods, std::span<const NodeCapacity> nodes);

// FFD node count over an unlimited supply of identical nodes. Throws
// Errc::pod_too_large if a pod fits no node at all.
std::int64_t required_nodes(std::span<const PodSpec> pods, const Resources& node_capacity);

struct AutoscalePolicy {
  bool enabled = false;
  int min_nodes = 3;
  int max_nodes = 3;
  Duration scale_down_idle{600};
  int headroom_pods = 0;

  void validate() const;
  int floor() const;
};

struct IdleNode {
  std::string node_id;
  Duration idle_for{0};
};

struct NoChange {
  friend bool operator==(const NoChange&, const NoChange&) = default;
};
struct ResizeTo {
  int target = 0;
  friend bool operator==(const ResizeTo&, const ResizeTo&) = default;
};
using AutoscaleDecision = std::variant<NoChange, ResizeTo>;

// Never proposes a size outside [max(3, min_nodes), max_nodes].
AutoscaleDecision autoscale_decision(int current_nodes, const Placement& placement, const Resources& node_capacity,
                                     const AutoscalePolicy& policy, std::span<const IdleNode> idle_nodes);

}  // namespace examlab
