#include "examlab/scheduler.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "examlab/error.hpp"
#include "examlab/pricing.hpp"
#include "examlab/provider.hpp"

namespace examlab {

using json = nlohmann::json;

Resources Resources::from(double cores, double ram_gb) {
  return {static_cast<std::int64_t>(std::llround(cores * 1000.0)),
          static_cast<std::int64_t>(std::llround(ram_gb * 1024.0))};
}

Resources capacity_of(const NodeType& type) { return Resources::from(type.cpus, type.ram_gb); }

std::vector<PodSpec> Placement::all_pods() const {
  std::vector<PodSpec> out;
  out.reserve(pod_count());
  for (const auto& a : assignments) out.push_back(a.pod);
  out.insert(out.end(), unplaced.begin(), unplaced.end());
  return out;
}

void to_json(json& j, const Placement& p) {
  json nodes = json::array();
  for (const auto& n : p.nodes) {
    nodes.push_back(json{{"node_id", n.node_id},
                         {"pods", n.pod_count},
                         {"cpu_used", n.used.cores()},
                         {"cpu_capacity", n.capacity.cores()},
                         {"ram_used_gb", n.used.ram_gb()},
                         {"ram_capacity_gb", n.capacity.ram_gb()}});
  }
  json unplaced = json::array();
  for (const auto& pod : p.unplaced) unplaced.push_back(pod.student_uid);
  j = json{{"placed", p.assignments.size()}, {"unplaced", std::move(unplaced)}, {"nodes", std::move(nodes)}};
}

namespace {

std::vector<PodSpec> ffd_order(std::span<const PodSpec> pods) {
  std::vector<PodSpec> sorted(pods.begin(), pods.end());
  std::sort(sorted.begin(), sorted.end(), [](const PodSpec& a, const PodSpec& b) {
    if (a.request.milli_cpu != b.request.milli_cpu) return a.request.milli_cpu > b.request.milli_cpu;
    if (a.request.ram_mib != b.request.ram_mib) return a.request.ram_mib > b.request.ram_mib;
    return a.student_uid < b.student_uid;
  });
  return sorted;
}

}  // namespace

Placement place(std::span<const PodSpec> pods, std::span<const NodeCapacity> nodes) {
  Placement out;
  out.nodes.reserve(nodes.size());
  for (const auto& n : nodes) out.nodes.push_back(NodeLoad{n.node_id, n.capacity, {}, 0});
  std::sort(out.nodes.begin(), out.nodes.end(),
            [](const NodeLoad& a, const NodeLoad& b) { return a.node_id < b.node_id; });

  for (auto& pod : ffd_order(pods)) {
    auto slot = std::find_if(out.nodes.begin(), out.nodes.end(),
                             [&](const NodeLoad& n) { return pod.request.fits_in(n.residual()); });
    if (slot == out.nodes.end()) {
      out.unplaced.push_back(std::move(pod));
      continue;
    }
    slot->used = slot->used + pod.request;
    slot->pod_count++;
    out.assignments.push_back(Assignment{std::move(pod), slot->node_id});
  }
  return out;
}

std::int64_t required_nodes(std::span<const PodSpec> pods, const Resources& node_capacity) {
  std::vector<Resources> bins;
  for (const auto& pod : ffd_order(pods)) {
    if (!pod.request.fits_in(node_capacity))
      throw Error(Errc::pod_too_large, "pod " + pod.student_uid + " does not fit on a single node");
    auto slot = std::find_if(bins.begin(), bins.end(),
                             [&](const Resources& used) { return pod.request.fits_in(node_capacity - used); });
    if (slot == bins.end()) {
      bins.push_back(pod.request);
    } else {
      *slot = *slot + pod.request;
    }
  }
  return static_cast<std::int64_t>(bins.size());
}

void AutoscalePolicy::validate() const {
  if (!enabled) return;
  if (min_nodes < kMinClusterNodes || min_nodes > max_nodes)
    throw Error(Errc::invalid_argument, "autoscale policy needs 3 <= min_nodes <= max_nodes");
  if (scale_down_idle.count() < 0 || headroom_pods < 0)
    throw Error(Errc::invalid_argument, "autoscale idle threshold and headroom must be >= 0");
}

int AutoscalePolicy::floor() const { return std::max(kMinClusterNodes, min_nodes); }

AutoscaleDecision autoscale_decision(int current_nodes, const Placement& placement, const Resources& node_capacity,
                                     const AutoscalePolicy& policy, std::span<const IdleNode> idle_nodes) {
  if (!policy.enabled) return NoChange{};
  policy.validate();
  const int lo = policy.floor();
  const int hi = policy.max_nodes;

  auto pods = placement.all_pods();
  if (!pods.empty() && policy.headroom_pods > 0) {
    const auto largest = ffd_order(pods).front();
    for (int i = 0; i < policy.headroom_pods; ++i)
      pods.push_back(PodSpec{"~headroom-" + std::to_string(i), largest.request});
  }
  // Pods that fit no node at all can never be placed; they do not drive scaling.
  std::erase_if(pods, [&](const PodSpec& p) { return !p.request.fits_in(node_capacity); });
  const auto needed = required_nodes(pods, node_capacity);
  const auto clamp = [&](std::int64_t n) { return static_cast<int>(std::clamp<std::int64_t>(n, lo, hi)); };

  if (!placement.unplaced.empty()) {
    const int target = clamp(needed);
    if (target > current_nodes) return ResizeTo{target};
    return NoChange{};
  }

  const bool any_idle = std::any_of(idle_nodes.begin(), idle_nodes.end(),
                                    [&](const IdleNode& n) { return n.idle_for >= policy.scale_down_idle; });
  if (any_idle) {
    const int target = clamp(needed);
    if (target < current_nodes) return ResizeTo{target};
  }
  return NoChange{};
}

}  // namespace examlab
