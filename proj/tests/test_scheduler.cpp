#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "examlab/error.hpp"
#include "examlab/pricing.hpp"
#include "examlab/provider.hpp"
#include "examlab/scheduler.hpp"
#include "support.hpp"

using namespace examlab;
using namespace examlab::testing;

namespace {

const Resources kN1Standard1 = Resources::from(1, 3.75);
const Resources kN1Standard8 = Resources::from(8, 30);
const Resources kE2Standard2 = Resources::from(2, 8);

std::map<std::string, int> pods_per_node(const Placement& p) {
  std::map<std::string, int> out;
  for (const auto& a : p.assignments) ++out[a.node_id];
  return out;
}

void expect_capacity_safe(const Placement& p, std::size_t pod_total) {
  std::map<std::string, Resources> used;
  for (const auto& a : p.assignments) used[a.node_id] = used[a.node_id] + a.pod.request;
  for (const auto& n : p.nodes) {
    EXPECT_TRUE(used[n.node_id].fits_in(n.capacity)) << n.node_id;
    EXPECT_EQ(used[n.node_id], n.used);
  }
  std::set<std::string> seen;
  for (const auto& a : p.assignments) EXPECT_TRUE(seen.insert(a.pod.student_uid).second);
  for (const auto& u : p.unplaced) EXPECT_TRUE(seen.insert(u.student_uid).second);
  EXPECT_EQ(seen.size(), pod_total);
}

std::vector<PodSpec> random_pods(std::mt19937_64& rng, int n, const Resources& cap) {
  std::vector<PodSpec> pods;
  for (int i = 0; i < n; ++i) {
    const auto cpu = 1 + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(cap.milli_cpu));
    const auto ram = 1 + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(cap.ram_mib));
    pods.push_back(PodSpec{"p" + std::to_string(i), Resources{cpu, ram}});
  }
  return pods;
}

}  // namespace

TEST(Place, ConservativeIsOnePodPerNode) {
  const auto pods = uniform_pods(30, 1, 3.75);
  const auto nodes = identical_nodes(30, kN1Standard1);
  const auto p = place(pods, nodes);
  EXPECT_TRUE(p.unplaced.empty());
  const auto per = pods_per_node(p);
  EXPECT_EQ(per.size(), 30u);
  for (const auto& [node, n] : per) EXPECT_EQ(n, 1) << node;
  expect_capacity_safe(p, 30);
}

TEST(Place, BalancedFillsThreeNodesAndPartOfFourth) {
  const auto pods = uniform_pods(30, 1, 3.75);
  const auto p = place(pods, identical_nodes(4, kN1Standard8));
  EXPECT_TRUE(p.unplaced.empty());
  const auto per = pods_per_node(p);
  EXPECT_EQ(per.at("node-01"), 8);
  EXPECT_EQ(per.at("node-02"), 8);
  EXPECT_EQ(per.at("node-03"), 8);
  EXPECT_EQ(per.at("node-04"), 6);
  EXPECT_EQ(exhaustive_min_nodes(uniform_pods(8, 1, 3.75), kN1Standard8), 1);
  expect_capacity_safe(p, 30);
}

TEST(Place, CheapestPutsTwoStudentsPerCpu) {
  const auto pods = uniform_pods(30, 0.5, 2);
  const auto p = place(pods, identical_nodes(8, kE2Standard2));
  EXPECT_TRUE(p.unplaced.empty());
  int total = 0;
  for (const auto& [node, n] : pods_per_node(p)) {
    EXPECT_LE(n, 4);
    total += n;
  }
  EXPECT_EQ(total, 30);
  EXPECT_EQ(required_nodes(pods, kE2Standard2), 8);
  expect_capacity_safe(p, 30);
}

TEST(Place, OverflowIsReportedNotHidden) {
  const auto pods = uniform_pods(40, 1, 3.75);
  const auto p = place(pods, identical_nodes(4, kN1Standard8));
  EXPECT_EQ(p.assignments.size(), 32u);
  EXPECT_EQ(p.unplaced.size(), 8u);
  expect_capacity_safe(p, 40);
}

TEST(Place, OrderAndDeterminism) {
  std::vector<PodSpec> pods{{"b", Resources{500, 100}}, {"a", Resources{500, 100}}, {"c", Resources{2000, 50}}};
  const auto p = place(pods, identical_nodes(2, Resources{2000, 1000}));
  ASSERT_EQ(p.assignments.size(), 3u);
  EXPECT_EQ(p.assignments[0].pod.student_uid, "c");
  EXPECT_EQ(p.assignments[1].pod.student_uid, "a");
  EXPECT_EQ(p.assignments[2].pod.student_uid, "b");
  EXPECT_EQ(p.assignments[0].node_id, "node-01");
  EXPECT_EQ(p.assignments[1].node_id, "node-02");
  std::reverse(pods.begin(), pods.end());
  EXPECT_EQ(nlohmann::json(place(pods, identical_nodes(2, Resources{2000, 1000}))), nlohmann::json(p));
}

TEST(RequiredNodes, MatchesStandardConfigurations) {
  EXPECT_EQ(required_nodes(uniform_pods(30, 1, 3.75), kN1Standard1), 30);
  EXPECT_EQ(required_nodes(uniform_pods(30, 1, 3.75), kN1Standard8), 4);
  EXPECT_EQ(required_nodes({}, kN1Standard8), 0);
}

TEST(RequiredNodes, RejectsPodLargerThanNode) {
  try {
    required_nodes(uniform_pods(1, 2, 1), kN1Standard1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::pod_too_large);
  }
}

TEST(RequiredNodes, OptimalityBracketAgainstExhaustiveSearch) {
  std::mt19937_64 rng(2024);
  const Resources cap{4000, 16384};
  for (int trial = 0; trial < 500; ++trial) {
    const auto pods = random_pods(rng, 1 + static_cast<int>(rng() % 8), cap);
    const auto opt = exhaustive_min_nodes(pods, cap);
    const auto ffd = required_nodes(pods, cap);
    EXPECT_LE(opt, ffd);
    EXPECT_LE(ffd, 2 * opt);
  }
}

TEST(RequiredNodes, UniformPodsAreExact) {
  for (int n = 0; n <= 40; ++n) {
    for (const auto& [cpu, ram, per_node] : {std::tuple{1.0, 3.75, 8}, std::tuple{0.5, 2.0, 15}, std::tuple{2.0, 7.0, 4}}) {
      const auto pods = uniform_pods(n, cpu, ram);
      EXPECT_EQ(required_nodes(pods, kN1Standard8), (n + per_node - 1) / per_node) << n << " " << cpu;
      if (n <= 8) EXPECT_EQ(required_nodes(pods, kN1Standard8), exhaustive_min_nodes(pods, kN1Standard8));
    }
  }
}

TEST(RequiredNodes, AddingAPodNeverHelps) {
  std::mt19937_64 rng(8);
  const Resources cap{8000, 30720};
  for (int trial = 0; trial < 300; ++trial) {
    auto pods = random_pods(rng, static_cast<int>(rng() % 20), cap);
    const auto before = required_nodes(pods, cap);
    pods.push_back(random_pods(rng, 1, cap).front());
    pods.back().student_uid = "extra";
    EXPECT_GE(required_nodes(pods, cap), before);
  }
}

TEST(Place, RandomInstancesAreCapacitySafe) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const Resources cap{1000 * (1 + static_cast<std::int64_t>(rng() % 8)), 1024 * (1 + static_cast<std::int64_t>(rng() % 32))};
    const auto pods = random_pods(rng, static_cast<int>(rng() % 40), Resources{cap.milli_cpu + 500, cap.ram_mib});
    const auto p = place(pods, identical_nodes(static_cast<int>(rng() % 10), cap));
    expect_capacity_safe(p, pods.size());
  }
}

namespace {

AutoscalePolicy autoscaling_policy() {
  AutoscalePolicy policy;
  policy.enabled = true;
  policy.min_nodes = 10;
  policy.max_nodes = 60;
  return policy;
}

}  // namespace

TEST(Autoscale, ScalesUpToFitEveryPod) {
  // 10 nodes of 8 pods each are full; 5 more pods need 2 more nodes.
  const auto pods = uniform_pods(85, 1, 3.75);
  const auto p = place(pods, identical_nodes(10, kN1Standard8));
  ASSERT_EQ(p.unplaced.size(), 5u);
  EXPECT_EQ(required_nodes(pods, kN1Standard8), 11);
  const auto more = uniform_pods(93, 1, 3.75);
  const auto p2 = place(more, identical_nodes(10, kN1Standard8));
  ASSERT_EQ(p2.unplaced.size(), 13u);
  EXPECT_EQ(autoscale_decision(10, p2, kN1Standard8, autoscaling_policy(), {}), AutoscaleDecision{ResizeTo{12}});
}

TEST(Autoscale, ClampsToMaxAndKeepsOverflowVisible) {
  const auto pods = uniform_pods(70, 1, 3.75);
  const auto p = place(pods, identical_nodes(10, kN1Standard1));
  EXPECT_EQ(autoscale_decision(10, p, kN1Standard1, autoscaling_policy(), {}), AutoscaleDecision{ResizeTo{60}});
  const auto after = place(pods, identical_nodes(60, kN1Standard1));
  EXPECT_EQ(after.unplaced.size(), 10u);
}

TEST(Autoscale, NeverBelowMinimum) {
  const auto p = place({}, identical_nodes(30, kN1Standard1));
  std::vector<IdleNode> idle;
  for (const auto& n : p.nodes) idle.push_back(IdleNode{n.node_id, Duration{900}});
  EXPECT_EQ(autoscale_decision(30, p, kN1Standard1, autoscaling_policy(), idle), AutoscaleDecision{ResizeTo{10}});
}

TEST(Autoscale, WaitsForIdleThreshold) {
  const auto p = place({}, identical_nodes(30, kN1Standard1));
  std::vector<IdleNode> idle;
  for (const auto& n : p.nodes) idle.push_back(IdleNode{n.node_id, Duration{599}});
  EXPECT_EQ(autoscale_decision(30, p, kN1Standard1, autoscaling_policy(), idle), AutoscaleDecision{NoChange{}});
}

TEST(Autoscale, DisabledPolicyNeverActs) {
  AutoscalePolicy off;
  const auto p = place(uniform_pods(50, 1, 3.75), identical_nodes(3, kN1Standard1));
  EXPECT_EQ(autoscale_decision(3, p, kN1Standard1, off, {}), AutoscaleDecision{NoChange{}});
}

TEST(Autoscale, HeadroomAddsSpareCapacity) {
  auto policy = autoscaling_policy();
  policy.headroom_pods = 8;
  const auto pods = uniform_pods(81, 1, 3.75);
  const auto p = place(pods, identical_nodes(10, kN1Standard8));
  // 81 pods plus 8 spare need ceil(89 / 8) = 12 nodes.
  EXPECT_EQ(autoscale_decision(10, p, kN1Standard8, policy, {}), AutoscaleDecision{ResizeTo{12}});
}

TEST(Autoscale, OutputAlwaysWithinBounds) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 2000; ++trial) {
    AutoscalePolicy policy;
    policy.enabled = true;
    policy.min_nodes = static_cast<int>(rng() % 12);
    policy.max_nodes = policy.min_nodes + static_cast<int>(rng() % 50);
    policy.headroom_pods = static_cast<int>(rng() % 4);
    if (policy.min_nodes < kMinClusterNodes) policy.min_nodes = kMinClusterNodes;
    if (policy.max_nodes < policy.min_nodes) policy.max_nodes = policy.min_nodes;
    const Resources cap{1000 * (1 + static_cast<std::int64_t>(rng() % 8)), 1024 * (1 + static_cast<std::int64_t>(rng() % 32))};
    const int current = static_cast<int>(rng() % 80);
    const auto pods = random_pods(rng, static_cast<int>(rng() % 120), Resources{cap.milli_cpu + 200, cap.ram_mib});
    const auto p = place(pods, identical_nodes(current, cap));
    std::vector<IdleNode> idle;
    for (const auto& n : p.nodes)
      if (n.pod_count == 0) idle.push_back(IdleNode{n.node_id, Duration{static_cast<std::int64_t>(rng() % 1200)}});
    const auto d = autoscale_decision(current, p, cap, policy, idle);
    if (const auto* r = std::get_if<ResizeTo>(&d)) {
      EXPECT_GE(r->target, std::max(kMinClusterNodes, policy.min_nodes));
      EXPECT_LE(r->target, policy.max_nodes);
    }
  }
}
