#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "examlab/time.hpp"

namespace examlab {

using Rational = boost::multiprecision::cpp_rational;

// Whole cents, the only money unit ever displayed.
struct Cents {
  std::int64_t value = 0;

  friend auto operator<=>(const Cents&, const Cents&) = default;
  friend Cents operator+(Cents a, Cents b) { return Cents{a.value + b.value}; }

  // "$4.27", "-$0.05"
  std::string to_string() const;
};

// Rounds an exact amount of cents to whole cents, ties to even.
Cents round_half_even(const Rational& cents);

// Parses a plain decimal literal ("3", "2.5", "0.125") without going through
// binary floating point.
Rational parse_decimal(std::string_view text);

// "80", "427/90"
std::string to_string(const Rational& r);

struct NodeType {
  std::string name;
  int cpus = 0;
  double ram_gb = 0.0;
  // Price per node-hour as integer cents over node-hours, kept as written in
  // the catalog so a table total divides back exactly.
  std::int64_t price_cents_numerator = 0;
  std::int64_t price_node_hours_denominator = 1;
  std::optional<std::string> assumption;

  Rational hourly_price_cents() const;
};

// Extra per-node-hour cost not itemized by the provider's node prices
// (boot disks, egress). Zero unless the catalog says otherwise.
struct OverheadAllowance {
  Rational cents_per_node_hour = 0;
  std::string note;
};

class PriceCatalog {
 public:
  // Throws Errc::duplicate_name, or Errc::invalid_argument when an invariant
  // on the node type is broken.
  void add(NodeType type);

  // Throws Errc::unknown_node_type.
  const NodeType& at(std::string_view name) const;
  const NodeType* find(std::string_view name) const;

  const std::map<std::string, NodeType, std::less<>>& node_types() const { return node_types_; }
  bool empty() const { return node_types_.empty(); }

  Rational mgmt_fee_cents_per_hour = 0;
  OverheadAllowance overhead;

 private:
  std::map<std::string, NodeType, std::less<>> node_types_;
};

PriceCatalog load_catalog(const std::filesystem::path& path);
PriceCatalog parse_catalog(std::string_view json_text);

struct CostEstimate {
  Rational node_hours = 0;
  Rational node_cost_exact = 0;
  Rational mgmt_cost_exact = 0;
  Rational overhead_cost_exact = 0;

  Cents node_cost;
  Cents mgmt_cost;
  Cents overhead_cost;
  // Sum of the rounded fields above, so the displayed lines always add up.
  Cents total;
};

// Piecewise-constant node count over time.
struct UsageTimeline {
  struct Point {
    Timestamp at;
    std::int64_t node_count = 0;
  };

  std::vector<Point> points;
  Timestamp end;

  // Throws Errc::malformed_timeline.
  void validate() const;

  // Appends a change point, coalescing with the last one when the timestamp
  // repeats. Moves `end` forward to `at`.
  void record(Timestamp at, std::int64_t node_count);

  // Sum of node_count x segment length, in exact node-hours.
  Rational node_hours() const;
  Duration span() const;
};

// Cost of node_count nodes for `hours`. Throws Errc::unknown_node_type or
// Errc::invalid_argument for negative inputs.
CostEstimate estimate_fixed(const PriceCatalog& catalog, std::string_view node_type, std::int64_t node_count,
                            const Rational& hours);

CostEstimate estimate_timeline(const PriceCatalog& catalog, std::string_view node_type, const UsageTimeline& timeline);

}  // namespace examlab
