#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "examlab/error.hpp"
#include "examlab/provider.hpp"
#include "support.hpp"

using namespace examlab;
using nlohmann::json;

namespace {

ClusterSpec autoscaling_spec() {
  ClusterSpec s;
  s.cluster_name = "icai-jupyter";
  s.region = "us-central1";
  s.node_type_name = "n1-standard-4";
  s.initial_node_count = 20;
  s.autoscaling = {true, 10, 60};
  s.auto_repair = true;
  s.auto_upgrade = true;
  return s;
}

ClusterSpec small_spec(std::string name, int nodes = 5, bool repair = true) {
  ClusterSpec s;
  s.cluster_name = std::move(name);
  s.region = "us-central1";
  s.node_type_name = "n1-standard-1";
  s.initial_node_count = nodes;
  s.auto_repair = repair;
  return s;
}

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an examlab::Error";
  return Errc::invalid_argument;
}

std::size_t count(const std::vector<ProviderEvent>& events, EventKind kind) {
  return static_cast<std::size_t>(
      std::count_if(events.begin(), events.end(), [&](const ProviderEvent& e) { return e.kind == kind; }));
}

}  // namespace

TEST(ClusterSpec, AutoscalingSpecIsValid) { EXPECT_TRUE(autoscaling_spec().violations().empty()); }

TEST(ClusterSpec, EnforcesNodeMinimumsAndNames) {
  auto s = autoscaling_spec();
  s.autoscaling.min_nodes = 2;
  EXPECT_EQ(code_of([&] { s.validate(); }), Errc::invalid_spec);

  s = autoscaling_spec();
  s.initial_node_count = 2;
  s.autoscaling.enabled = false;
  EXPECT_EQ(code_of([&] { s.validate(); }), Errc::invalid_spec);

  s = autoscaling_spec();
  s.initial_node_count = 70;
  EXPECT_FALSE(s.violations().empty());

  for (const char* bad : {"", "ICAI", "icai_jupyter", "-icai", "icai-"}) {
    s = autoscaling_spec();
    s.cluster_name = bad;
    EXPECT_FALSE(s.violations().empty()) << bad;
  }
}

TEST(ClusterSpec, JsonRoundTrip) {
  const auto s = autoscaling_spec();
  const auto back = json(s).get<ClusterSpec>();
  EXPECT_EQ(json(back), json(s));
}

TEST(SimulatedProvider, ProvisionsAutoscalingClusterAtFiveMinutes) {
  SimulatedProvider p;
  const auto h = p.create_cluster(autoscaling_spec());
  EXPECT_EQ(p.state(h).phase, ClusterPhase::Provisioning);
  EXPECT_TRUE(p.advance(Duration{0}).size() == 1);  // ClusterCreating, logged at t=0
  EXPECT_TRUE(p.advance(Duration{299}).empty());
  EXPECT_EQ(p.state(h).phase, ClusterPhase::Provisioning);
  const auto events = p.advance(Duration{1});
  EXPECT_EQ(count(events, EventKind::ClusterRunning), 1u);
  EXPECT_EQ(events.front().t, at_second(300));
  const auto st = p.state(h);
  EXPECT_EQ(st.phase, ClusterPhase::Running);
  EXPECT_EQ(st.nodes.size(), 20u);
  EXPECT_EQ(st.healthy_count(), 20);
}

TEST(SimulatedProvider, AdvanceZeroHasNoEvents) {
  SimulatedProvider p;
  EXPECT_TRUE(p.advance(Duration{0}).empty());
  p.create_cluster(small_spec("a"));
  p.advance(Duration{0});
  EXPECT_TRUE(p.advance(Duration{0}).empty());
}

TEST(SimulatedProvider, RejectsDuplicateNames) {
  SimulatedProvider p;
  p.create_cluster(autoscaling_spec());
  EXPECT_EQ(code_of([&] { p.create_cluster(autoscaling_spec()); }), Errc::duplicate_cluster);
}

TEST(SimulatedProvider, ResizeUpFollowsDelayFormula) {
  SimulatedProvider p;
  const auto h = p.create_cluster(autoscaling_spec());
  p.advance(Duration{300});
  const auto ack = p.resize_cluster(h, 60);
  EXPECT_FALSE(ack.no_op);
  EXPECT_EQ(ack.completes_at, at_second(300 + 40 * 20));
  EXPECT_EQ(p.state(h).phase, ClusterPhase::Resizing);
  p.advance(Duration{799});
  EXPECT_EQ(p.state(h).phase, ClusterPhase::Resizing);
  EXPECT_EQ(p.state(h).nodes.size(), 59u);
  const auto events = p.advance(Duration{1});
  EXPECT_EQ(count(events, EventKind::ResizeCompleted), 1u);
  EXPECT_EQ(p.state(h).phase, ClusterPhase::Running);
  EXPECT_EQ(p.state(h).nodes.size(), 60u);
}

TEST(SimulatedProvider, ResizeDownRemovesNewestFirst) {
  SimulatedProvider p;
  const auto h = p.create_cluster(autoscaling_spec());
  p.advance(Duration{300});
  p.resize_cluster(h, 60);
  p.advance(Duration{800});
  const auto before = p.state(h).nodes;
  p.resize_cluster(h, 10);
  const auto events = p.advance(Duration{50 * 20});
  const auto after = p.state(h).nodes;
  ASSERT_EQ(after.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(after[i].node_id, before[i].node_id);
  std::vector<std::string> removed;
  for (const auto& e : events)
    if (e.kind == EventKind::NodeRemoved) removed.push_back(*e.node_id);
  ASSERT_EQ(removed.size(), 50u);
  for (std::size_t i = 0; i < removed.size(); ++i) EXPECT_EQ(removed[i], before[before.size() - 1 - i].node_id);
}

TEST(SimulatedProvider, ResizeToCurrentSizeIsImmediateNoOp) {
  SimulatedProvider p;
  const auto h = p.create_cluster(small_spec("a"));
  p.advance(Duration{300});
  const auto ack = p.resize_cluster(h, 5);
  EXPECT_TRUE(ack.no_op);
  EXPECT_EQ(ack.completes_at, at_second(300));
  EXPECT_EQ(p.state(h).phase, ClusterPhase::Running);
  EXPECT_TRUE(p.advance(Duration{0}).empty());
}

TEST(SimulatedProvider, ResizeRequiresRunningAndThreeNodes) {
  SimulatedProvider p;
  const auto h = p.create_cluster(small_spec("a"));
  EXPECT_EQ(code_of([&] { p.resize_cluster(h, 6); }), Errc::not_running);
  p.advance(Duration{300});
  EXPECT_EQ(code_of([&] { p.resize_cluster(h, 2); }), Errc::invalid_argument);
}

TEST(SimulatedProvider, DeleteIsFinal) {
  SimulatedProvider p;
  const auto h = p.create_cluster(small_spec("a"));
  p.advance(Duration{400});
  p.delete_cluster(h);
  const auto events = p.advance(Duration{0});
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[0].kind, EventKind::ClusterDeleting);
  EXPECT_EQ(events[1].kind, EventKind::ClusterDeleted);
  EXPECT_EQ(events[1].t, at_second(400));
  EXPECT_EQ(p.state(h).phase, ClusterPhase::Deleted);
  EXPECT_TRUE(p.state(h).nodes.empty());
  EXPECT_EQ(code_of([&] { p.delete_cluster(h); }), Errc::unknown_handle);
  EXPECT_EQ(code_of([&] { p.resize_cluster(h, 4); }), Errc::unknown_handle);
  EXPECT_EQ(code_of([&] { p.delete_cluster(ClusterHandle{999}); }), Errc::unknown_handle);
}

TEST(SimulatedProvider, DeleteDuringProvisioningNeverRuns) {
  SimulatedProvider p;
  const auto h = p.create_cluster(small_spec("a"));
  p.advance(Duration{100});
  p.delete_cluster(h);
  const auto events = p.advance(Duration{1000});
  EXPECT_EQ(count(events, EventKind::ClusterRunning), 0u);
  EXPECT_EQ(count(p.log(), EventKind::ClusterRunning), 0u);
  EXPECT_EQ(p.state(h).phase, ClusterPhase::Deleted);
}

TEST(SimulatedProvider, AutoRepairReplacesFailedNodeAfterDelay) {
  SimulatedProvider p;
  const auto h = p.create_cluster(autoscaling_spec());
  p.advance(Duration{300});
  const auto victim = p.state(h).nodes[3].node_id;
  p.inject_node_failure(h, victim);
  EXPECT_EQ(p.state(h).healthy_count(), 19);
  p.advance(Duration{119});
  EXPECT_EQ(p.state(h).healthy_count(), 19);
  const auto events = p.advance(Duration{1});
  ASSERT_EQ(count(events, EventKind::NodeReplaced), 1u);
  EXPECT_EQ(*events.back().replaced_node_id, victim);
  EXPECT_EQ(p.state(h).healthy_count(), 20);
  EXPECT_EQ(p.state(h).nodes.size(), 20u);

  // Replay of the event log reaches the same healthy count.
  int healthy = 0;
  for (const auto& e : p.log()) {
    if (e.kind == EventKind::ClusterRunning) healthy = e.node_count;
    if (e.kind == EventKind::NodeFailed) --healthy;
    if (e.kind == EventKind::NodeReplaced) ++healthy;
  }
  EXPECT_EQ(healthy, 20);
}

TEST(SimulatedProvider, WithoutAutoRepairFailedNodeStaysFailed) {
  SimulatedProvider p;
  const auto h = p.create_cluster(small_spec("a", 20, false));
  p.advance(Duration{300});
  const auto victim = p.state(h).nodes[0].node_id;
  p.inject_node_failure(h, victim);
  p.advance(Duration{100000});
  EXPECT_EQ(p.state(h).healthy_count(), 19);
  EXPECT_EQ(code_of([&] { p.inject_node_failure(h, victim); }), Errc::node_not_healthy);
  EXPECT_EQ(code_of([&] { p.inject_node_failure(h, "no-such-node"); }), Errc::unknown_node);
}

TEST(SimulatedProvider, FailureNeedsRunningCluster) {
  SimulatedProvider p;
  const auto h = p.create_cluster(small_spec("a"));
  EXPECT_EQ(code_of([&] { p.inject_node_failure(h, "x"); }), Errc::not_running);
}

TEST(SimulatedProvider, FailureInjection) {
  SimulatedProvider p;
  p.fail_next_create("quota exceeded");
  EXPECT_EQ(code_of([&] { p.create_cluster(small_spec("a")); }), Errc::provider_failure);
  EXPECT_NO_THROW(p.create_cluster(small_spec("a")));
}

TEST(SimulatedProvider, EventsSerializeAsJsonLines) {
  SimulatedProvider p;
  const auto h = p.create_cluster(autoscaling_spec());
  p.advance(Duration{300});
  p.resize_cluster(h, 22);
  p.advance(Duration{100});
  std::ostringstream out;
  write_event_log(out, p.log());
  std::istringstream in(out.str());
  std::string line;
  std::size_t i = 0;
  while (std::getline(in, line)) {
    const auto j = json::parse(line);
    for (const char* key : {"t", "kind", "cluster", "detail"}) EXPECT_TRUE(j.contains(key)) << line;
    EXPECT_EQ(j.get<ProviderEvent>(), p.log()[i]) << line;
    ++i;
  }
  EXPECT_EQ(i, p.log().size());
}

namespace {

// Runs a random operation sequence, returning the event log as text. Checks
// phase legality and node-count conservation along the way.
std::string random_run(std::uint64_t seed, bool check) {
  std::mt19937_64 rng(seed);
  SimulatedProvider p(SimConfig{Duration{300}, Duration{20}, Duration{120}, seed});
  const auto h = p.create_cluster(small_spec("prop", 4 + static_cast<int>(rng() % 10)));
  ClusterPhase last = p.state(h).phase;
  int target = p.state(h).spec.initial_node_count;
  static const std::set<std::pair<ClusterPhase, ClusterPhase>> legal{
      {ClusterPhase::Provisioning, ClusterPhase::Running}, {ClusterPhase::Running, ClusterPhase::Resizing},
      {ClusterPhase::Resizing, ClusterPhase::Running},     {ClusterPhase::Provisioning, ClusterPhase::Deleting},
      {ClusterPhase::Running, ClusterPhase::Deleting},     {ClusterPhase::Resizing, ClusterPhase::Deleting},
      {ClusterPhase::Deleting, ClusterPhase::Deleted}};

  for (int step = 0; step < 40; ++step) {
    const auto op = rng() % 10;
    try {
      if (op < 4) {
        p.advance(Duration{static_cast<std::int64_t>(rng() % 400)});
      } else if (op < 7) {
        const int t = 3 + static_cast<int>(rng() % 20);
        p.resize_cluster(h, t);
        target = t;
      } else if (op < 9) {
        const auto st = p.state(h);
        if (!st.nodes.empty()) p.inject_node_failure(h, st.nodes[rng() % st.nodes.size()].node_id);
      } else if (step > 30) {
        p.delete_cluster(h);
        target = 0;
      }
    } catch (const Error&) {
    }
    if (!check) continue;
    const auto st = p.state(h);
    if (st.phase != last) {
      // Deleting and Deleted are both observed only through the log.
      const bool ok = legal.count({last, st.phase}) ||
                      (st.phase == ClusterPhase::Deleted && last != ClusterPhase::Deleted);
      EXPECT_TRUE(ok) << to_string(last) << " -> " << to_string(st.phase);
      last = st.phase;
    }
    if (st.phase == ClusterPhase::Running) EXPECT_GE(st.healthy_count(), kMinClusterNodes);
    if (p.quiescent() && st.phase == ClusterPhase::Running) {
      EXPECT_EQ(static_cast<int>(st.nodes.size()), target);
      EXPECT_GE(st.healthy_count(), kMinClusterNodes);
    }
    if (st.phase == ClusterPhase::Deleted) EXPECT_TRUE(st.nodes.empty());
  }
  std::ostringstream out;
  write_event_log(out, p.log());
  return out.str();
}

}  // namespace

TEST(SimulatedProvider, RandomSequencesKeepInvariants) {
  for (std::uint64_t seed = 1; seed <= 300; ++seed) random_run(seed, true);
}

TEST(SimulatedProvider, DeterministicForEqualSeedsAndCalls) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) EXPECT_EQ(random_run(seed, false), random_run(seed, false));
}

TEST(SimulatedProvider, AutoRepairLiveness) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    SimulatedProvider p;
    const auto h = p.create_cluster(small_spec("live", 6 + static_cast<int>(rng() % 10)));
    p.advance(Duration{300});
    const int target = static_cast<int>(p.state(h).nodes.size());
    const int failures = 1 + static_cast<int>(rng() % 3);
    for (int i = 0; i < failures; ++i) {
      const auto nodes = p.state(h).nodes;
      for (const auto& n : nodes)
        if (n.health == NodeHealth::Healthy) {
          p.inject_node_failure(h, n.node_id);
          break;
        }
      p.advance(Duration{static_cast<std::int64_t>(rng() % 60)});
    }
    p.advance(p.config().repair_delay);
    EXPECT_EQ(p.state(h).healthy_count(), target);
  }
}

TEST(SimulatedProvider, SaveLoadPreservesFuture) {
  SimulatedProvider a(SimConfig{Duration{300}, Duration{20}, Duration{120}, 42});
  const auto h = a.create_cluster(autoscaling_spec());
  a.advance(Duration{300});
  a.resize_cluster(h, 30);
  a.advance(Duration{50});
  auto b = SimulatedProvider::load(a.save());
  const auto ea = a.advance(Duration{1000});
  const auto eb = b.advance(Duration{1000});
  EXPECT_EQ(ea, eb);
  EXPECT_EQ(json(a.save()), json(b.save()));
}

TEST(RenderScript, MatchesGoldenFiles) {
  const auto spec = autoscaling_spec();
  const auto golden = examlab::testing::source_dir() / "golden" / "scripts";
  EXPECT_EQ(render_script(spec, ScriptAction::create()), examlab::testing::slurp(golden / "01-create.txt"));
  EXPECT_EQ(render_script(spec, ScriptAction::scale_to(60)), examlab::testing::slurp(golden / "02-scale-up.txt"));
  EXPECT_EQ(render_script(spec, ScriptAction::scale_to(10)), examlab::testing::slurp(golden / "03-scale-down.txt"));
  EXPECT_EQ(render_script(spec, ScriptAction::remove()), examlab::testing::slurp(golden / "04-release.txt"));
}

TEST(RenderScript, ContainsTheOperativeFlags) {
  const auto spec = autoscaling_spec();
  const auto create = render_script(spec, ScriptAction::create());
  EXPECT_NE(create.find("--machine-type=n1-standard-4"), std::string::npos);
  EXPECT_NE(create.find("--min-nodes=10"), std::string::npos);
  EXPECT_LT(create.find("--region"), create.find("--num-nodes=20"));
  EXPECT_LT(create.find("--enable-autoscaling"), create.find("--max-nodes=60"));
  EXPECT_NE(render_script(spec, ScriptAction::scale_to(60)).find("--num-nodes 60 --quiet"), std::string::npos);
  EXPECT_NE(render_script(spec, ScriptAction::remove()).find("clusters delete icai-jupyter"), std::string::npos);
  EXPECT_EQ(render_script(spec, ScriptAction::create()), render_script(autoscaling_spec(), ScriptAction::create()));
}

TEST(RenderScript, BatchWrapperKeepsCommandBlock) {
  const auto spec = autoscaling_spec();
  const auto plain = render_script(spec, ScriptAction::remove());
  const auto wrapped = render_script(spec, ScriptAction::remove(), RenderOptions{true});
  EXPECT_NE(wrapped.find("ECHO OFF"), std::string::npos);
  EXPECT_NE(wrapped.find(plain), std::string::npos);
}

TEST(RenderScript, RejectsInvalidSpec) {
  auto spec = autoscaling_spec();
  spec.autoscaling.min_nodes = 2;
  EXPECT_EQ(code_of([&] { render_script(spec, ScriptAction::create()); }), Errc::invalid_spec);
}
