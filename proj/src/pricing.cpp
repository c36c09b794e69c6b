#include "examlab/pricing.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "examlab/error.hpp"

namespace examlab {

namespace mp = boost::multiprecision;
using json = nlohmann::json;

std::string Cents::to_string() const {
  const std::int64_t magnitude = value < 0 ? -value : value;
  std::string frac = std::to_string(magnitude % 100);
  if (frac.size() < 2) frac.insert(0, "0");
  return std::string(value < 0 ? "-$" : "$") + std::to_string(magnitude / 100) + "." + frac;
}

Cents round_half_even(const Rational& cents) {
  const mp::cpp_int num = mp::numerator(cents);
  const mp::cpp_int den = mp::denominator(cents);
  mp::cpp_int q = num / den;
  mp::cpp_int rem = num - q * den;
  if (rem < 0) {
    q -= 1;
    rem += den;
  }
  const mp::cpp_int twice = rem * 2;
  if (twice > den || (twice == den && (q & 1) != 0)) q += 1;
  return Cents{q.convert_to<std::int64_t>()};
}

Rational parse_decimal(std::string_view text) {
  std::string_view s = text;
  bool negative = false;
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
    negative = s.front() == '-';
    s.remove_prefix(1);
  }
  mp::cpp_int whole = 0;
  mp::cpp_int scale = 1;
  bool seen_digit = false;
  bool seen_point = false;
  for (char c : s) {
    if (c == '.' && !seen_point) {
      seen_point = true;
      continue;
    }
    if (c < '0' || c > '9') throw Error(Errc::invalid_argument, "not a decimal number: '" + std::string(text) + "'");
    seen_digit = true;
    whole = whole * 10 + (c - '0');
    if (seen_point) scale *= 10;
  }
  if (!seen_digit) throw Error(Errc::invalid_argument, "not a decimal number: '" + std::string(text) + "'");
  Rational r(whole, scale);
  return negative ? Rational(-r) : r;
}

std::string to_string(const Rational& r) {
  const mp::cpp_int den = mp::denominator(r);
  if (den == 1) return mp::numerator(r).str();
  return mp::numerator(r).str() + "/" + den.str();
}

Rational NodeType::hourly_price_cents() const {
  return Rational(price_cents_numerator, price_node_hours_denominator);
}

void PriceCatalog::add(NodeType type) {
  if (type.name.empty()) throw Error(Errc::invalid_argument, "node type with empty name");
  if (type.cpus < 1) throw Error(Errc::invalid_argument, "node type " + type.name + ": cpus must be >= 1");
  if (!(type.ram_gb > 0.0)) throw Error(Errc::invalid_argument, "node type " + type.name + ": ram_gb must be > 0");
  if (type.price_cents_numerator < 0)
    throw Error(Errc::invalid_argument, "node type " + type.name + ": negative price");
  if (type.price_node_hours_denominator <= 0)
    throw Error(Errc::invalid_argument, "node type " + type.name + ": price denominator must be > 0");
  if (node_types_.contains(type.name)) throw Error(Errc::duplicate_name, "duplicate node type: " + type.name);
  auto name = type.name;
  node_types_.emplace(std::move(name), std::move(type));
}

const NodeType* PriceCatalog::find(std::string_view name) const {
  auto it = node_types_.find(name);
  return it == node_types_.end() ? nullptr : &it->second;
}

const NodeType& PriceCatalog::at(std::string_view name) const {
  if (const auto* t = find(name)) return *t;
  throw Error(Errc::unknown_node_type, "unknown node type: " + std::string(name));
}

namespace {

template <typename T>
T required(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key))
    throw Error(Errc::parse_error, where + ": missing field '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(Errc::parse_error, where + ": field '" + key + "': " + e.what());
  }
}

}  // namespace

PriceCatalog parse_catalog(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::parse_error, std::string("catalog: ") + e.what());
  }
  if (!doc.is_object()) throw Error(Errc::parse_error, "catalog: top level must be an object");

  PriceCatalog catalog;
  const auto types = required<json>(doc, "node_types", "catalog");
  if (!types.is_array()) throw Error(Errc::parse_error, "catalog: node_types must be an array");
  for (std::size_t i = 0; i < types.size(); ++i) {
    const auto& row = types[i];
    const std::string where = "catalog.node_types[" + std::to_string(i) + "]";
    NodeType t;
    t.name = required<std::string>(row, "name", where);
    t.cpus = required<int>(row, "cpus", where);
    t.ram_gb = required<double>(row, "ram_gb", where);
    t.price_cents_numerator = required<std::int64_t>(row, "price_cents_numerator", where);
    t.price_node_hours_denominator = required<std::int64_t>(row, "price_node_hours_denominator", where);
    if (row.contains("assumption")) t.assumption = required<std::string>(row, "assumption", where);
    catalog.add(std::move(t));
  }

  if (doc.contains("mgmt_fee_cents_per_hour")) {
    const auto fee = required<std::int64_t>(doc, "mgmt_fee_cents_per_hour", "catalog");
    if (fee < 0) throw Error(Errc::invalid_argument, "catalog: negative mgmt_fee_cents_per_hour");
    catalog.mgmt_fee_cents_per_hour = fee;
  }
  if (doc.contains("overhead_allowance")) {
    const auto& oa = doc.at("overhead_allowance");
    const auto num = required<std::int64_t>(oa, "cents_numerator", "catalog.overhead_allowance");
    const auto den = required<std::int64_t>(oa, "node_hours_denominator", "catalog.overhead_allowance");
    if (num < 0 || den <= 0) throw Error(Errc::invalid_argument, "catalog: invalid overhead_allowance");
    catalog.overhead.cents_per_node_hour = Rational(num, den);
    if (oa.contains("note")) catalog.overhead.note = required<std::string>(oa, "note", "catalog.overhead_allowance");
  }
  return catalog;
}

PriceCatalog load_catalog(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open catalog: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_catalog(buf.str());
}

void UsageTimeline::validate() const {
  if (points.empty()) throw Error(Errc::malformed_timeline, "timeline has no change points");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].node_count < 0) throw Error(Errc::malformed_timeline, "negative node count in timeline");
    if (i > 0 && points[i].at <= points[i - 1].at)
      throw Error(Errc::malformed_timeline, "timeline timestamps must be strictly increasing");
  }
  if (end < points.back().at) throw Error(Errc::malformed_timeline, "timeline ends before its last change point");
}

void UsageTimeline::record(Timestamp at, std::int64_t node_count) {
  if (!points.empty() && at < points.back().at)
    throw Error(Errc::malformed_timeline, "timeline change point out of order");
  if (!points.empty() && at == points.back().at) {
    points.back().node_count = node_count;
  } else {
    points.push_back({at, node_count});
  }
  if (end < at) end = at;
}

Rational UsageTimeline::node_hours() const {
  Rational node_seconds = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Timestamp seg_end = i + 1 < points.size() ? points[i + 1].at : end;
    node_seconds += Rational(points[i].node_count) * Rational((seg_end - points[i].at).count());
  }
  return node_seconds / 3600;
}

Duration UsageTimeline::span() const {
  if (points.empty()) return Duration{0};
  return end - points.front().at;
}

namespace {

CostEstimate finish(const PriceCatalog& catalog, const NodeType& type, Rational node_hours, const Rational& hours) {
  CostEstimate est;
  est.node_cost_exact = node_hours * type.hourly_price_cents();
  est.mgmt_cost_exact = catalog.mgmt_fee_cents_per_hour * hours;
  est.overhead_cost_exact = catalog.overhead.cents_per_node_hour * node_hours;
  est.node_hours = std::move(node_hours);
  est.node_cost = round_half_even(est.node_cost_exact);
  est.mgmt_cost = round_half_even(est.mgmt_cost_exact);
  est.overhead_cost = round_half_even(est.overhead_cost_exact);
  est.total = est.node_cost + est.mgmt_cost + est.overhead_cost;
  return est;
}

}  // namespace

CostEstimate estimate_fixed(const PriceCatalog& catalog, std::string_view node_type, std::int64_t node_count,
                            const Rational& hours) {
  const auto& type = catalog.at(node_type);
  if (node_count < 0) throw Error(Errc::invalid_argument, "node count must be >= 0");
  if (hours < 0) throw Error(Errc::invalid_argument, "hours must be >= 0");
  return finish(catalog, type, Rational(node_count) * hours, hours);
}

CostEstimate estimate_timeline(const PriceCatalog& catalog, std::string_view node_type,
                               const UsageTimeline& timeline) {
  const auto& type = catalog.at(node_type);
  timeline.validate();
  return finish(catalog, type, timeline.node_hours(), Rational(timeline.span().count()) / 3600);
}

}  // namespace examlab
