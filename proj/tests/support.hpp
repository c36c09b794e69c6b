#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_dec_float.hpp>

#include "examlab/pricing.hpp"
#include "examlab/scheduler.hpp"

namespace examlab::testing {

inline std::filesystem::path source_dir() { return EXAMLAB_SOURCE_DIR; }
inline std::filesystem::path data_file(const std::string& name) { return source_dir() / "data" / name; }
inline std::filesystem::path config_file(const std::string& name) { return source_dir() / "configs" / name; }

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("examlab-test-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& child) const { return path_ / child; }

 private:
  std::filesystem::path path_;
};

// Node-hours by walking the timeline one minute at a time. Only valid when
// every change point and the end fall on whole minutes.
inline Rational per_minute_node_hours(const UsageTimeline& t) {
  if (t.points.empty()) return 0;
  std::int64_t node_minutes = 0;
  const auto start = seconds_of(t.points.front().at) / 60;
  const auto end = seconds_of(t.end) / 60;
  std::size_t i = 0;
  for (std::int64_t minute = start; minute < end; ++minute) {
    while (i + 1 < t.points.size() && seconds_of(t.points[i + 1].at) / 60 <= minute) ++i;
    node_minutes += t.points[i].node_count;
  }
  return Rational(node_minutes, 60);
}

// Same idea at one-second resolution, for arbitrary integer timestamps.
inline Rational per_second_node_hours(const UsageTimeline& t) {
  if (t.points.empty()) return 0;
  std::int64_t node_seconds = 0;
  std::size_t i = 0;
  for (auto s = seconds_of(t.points.front().at); s < seconds_of(t.end); ++s) {
    while (i + 1 < t.points.size() && seconds_of(t.points[i + 1].at) <= s) ++i;
    node_seconds += t.points[i].node_count;
  }
  return Rational(node_seconds, 3600);
}

// Rounds p/q cents half-even by way of a 100-digit decimal expansion.
inline std::int64_t decimal_round_half_even(const Rational& cents) {
  using Dec = boost::multiprecision::cpp_dec_float_100;
  const Dec value = Dec(boost::multiprecision::numerator(cents)) / Dec(boost::multiprecision::denominator(cents));
  const Dec lower = floor(value);
  const Dec frac = value - lower;
  const auto base = lower.convert_to<std::int64_t>();
  if (frac < Dec("0.5")) return base;
  if (frac > Dec("0.5")) return base + 1;
  return base % 2 == 0 ? base : base + 1;
}

// Fewest identical bins holding every pod, by trying every assignment.
inline int exhaustive_min_nodes(const std::vector<PodSpec>& pods, const Resources& capacity) {
  const int n = static_cast<int>(pods.size());
  if (n == 0) return 0;
  int best = n;
  std::vector<Resources> bins;
  const auto search = [&](auto&& self, int i) -> void {
    if (static_cast<int>(bins.size()) >= best) return;
    if (i == n) {
      best = static_cast<int>(bins.size());
      return;
    }
    // Indexed on purpose: the recursion grows bins.
    for (std::size_t b = 0; b < bins.size(); ++b) {
      const Resources next = bins[b] + pods[i].request;
      if (!next.fits_in(capacity)) continue;
      const Resources saved = bins[b];
      bins[b] = next;
      self(self, i + 1);
      bins[b] = saved;
    }
    bins.push_back(pods[i].request);
    self(self, i + 1);
    bins.pop_back();
  };
  search(search, 0);
  return best;
}

inline std::vector<PodSpec> uniform_pods(int n, double cpu, double ram_gb) {
  std::vector<PodSpec> pods;
  for (int i = 0; i < n; ++i) {
    char uid[16];
    std::snprintf(uid, sizeof uid, "s%03d", i + 1);
    pods.push_back(PodSpec{uid, Resources::from(cpu, ram_gb)});
  }
  return pods;
}

inline std::vector<NodeCapacity> identical_nodes(int n, const Resources& capacity) {
  std::vector<NodeCapacity> nodes;
  for (int i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "node-%02d", i + 1);
    nodes.push_back(NodeCapacity{id, capacity});
  }
  return nodes;
}

}  // namespace examlab::testing
