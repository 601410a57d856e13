#include "xlight/scenario.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace xlight {

using nlohmann::json;

int ScenarioSpec::node_index(const std::string& id) const {
  for (size_t i = 0; i < intersections.size(); ++i)
    if (intersections[i].id == id) return static_cast<int>(i);
  return -1;
}

std::vector<int> ScenarioSpec::controlled_nodes() const {
  std::vector<int> out;
  for (size_t i = 0; i < intersections.size(); ++i)
    if (intersections[i].controlled) out.push_back(static_cast<int>(i));
  return out;
}

const std::array<PhaseDef, 8>& phase_table() {
  static const std::array<PhaseDef, 8> table = {{
      {{0, 2}, {Turn::Through, Turn::Through}},  // 0: N/S through
      {{0, 2}, {Turn::Left, Turn::Left}},        // 1: N/S left
      {{1, 3}, {Turn::Through, Turn::Through}},  // 2: E/W through
      {{1, 3}, {Turn::Left, Turn::Left}},        // 3: E/W left
      {{0, 0}, {Turn::Through, Turn::Left}},     // 4: N through+left
      {{2, 2}, {Turn::Through, Turn::Left}},     // 5: S through+left
      {{1, 1}, {Turn::Through, Turn::Left}},     // 6: E through+left
      {{3, 3}, {Turn::Through, Turn::Left}},     // 7: W through+left
  }};
  return table;
}

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ScenarioError(where + ": " + what);
}

double require_number(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_number())
    fail(where, std::string("missing or non-numeric field '") + key + "'");
  return j[key].get<double>();
}

std::string require_string(const json& j, const char* key,
                           const std::string& where) {
  if (!j.contains(key) || !j[key].is_string())
    fail(where, std::string("missing or non-string field '") + key + "'");
  return j[key].get<std::string>();
}

}  // namespace

ScenarioSpec parse_scenario(const std::string& json_text,
                            const std::string& origin_name) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(origin_name, std::string("parse error: ") + e.what());
  }

  ScenarioSpec spec;
  spec.name = require_string(root, "name", origin_name);
  spec.horizon_s = root.value("horizon_s", 3600.0);
  if (spec.horizon_s <= 0) fail(origin_name, "horizon_s must be positive");

  if (!root.contains("nodes") || !root["nodes"].is_array())
    fail(origin_name, "missing nodes[]");
  if (!root.contains("links") || !root["links"].is_array())
    fail(origin_name, "missing links[]");

  std::map<std::string, int> node_idx;
  for (const auto& jn : root["nodes"]) {
    RawIntersection node;
    node.id = require_string(jn, "id", origin_name + " node");
    const std::string where = origin_name + " node '" + node.id + "'";
    if (node_idx.count(node.id)) fail(where, "duplicate node id");
    node.x = require_number(jn, "x", where);
    node.y = require_number(jn, "y", where);
    node.controlled = jn.value("controlled", false);
    node_idx[node.id] = static_cast<int>(spec.intersections.size());
    spec.intersections.push_back(std::move(node));
  }

  std::map<std::string, int> link_idx;
  for (const auto& jl : root["links"]) {
    Link link;
    link.id = require_string(jl, "id", origin_name + " link");
    const std::string where = origin_name + " link '" + link.id + "'";
    if (link_idx.count(link.id)) fail(where, "duplicate link id");
    link.from_id = require_string(jl, "from", where);
    link.to_id = require_string(jl, "to", where);
    if (!node_idx.count(link.from_id))
      fail(where, "from references undeclared node '" + link.from_id + "'");
    if (!node_idx.count(link.to_id))
      fail(where, "to references undeclared node '" + link.to_id + "'");
    link.from_node = node_idx[link.from_id];
    link.to_node = node_idx[link.to_id];
    link.length_m = require_number(jl, "length_m", where);
    link.speed_mps = require_number(jl, "speed_mps", where);
    link.lanes = jl.value("lanes", 1);
    if (link.length_m <= 0) fail(where, "length_m must be positive");
    if (link.speed_mps <= 0) fail(where, "speed_mps must be positive");
    if (link.lanes < 1) fail(where, "lane count must be >= 1");
    link_idx[link.id] = static_cast<int>(spec.links.size());
    spec.links.push_back(std::move(link));
  }

  // approaches are resolved after links so they can reference them by id
  size_t node_pos = 0;
  for (const auto& jn : root["nodes"]) {
    RawIntersection& node = spec.intersections[node_pos++];
    const std::string where = origin_name + " node '" + node.id + "'";
    if (jn.contains("approaches")) {
      for (const auto& ja : jn["approaches"]) {
        Approach ap;
        ap.angle_deg = require_number(ja, "angle", where);
        if (ap.angle_deg < 0.0 || ap.angle_deg >= 360.0)
          fail(where, "approach angle out of [0, 360)");
        auto resolve = [&](const char* key) -> std::optional<int> {
          if (!ja.contains(key) || ja[key].is_null()) return std::nullopt;
          const std::string lid = ja[key].get<std::string>();
          auto it = link_idx.find(lid);
          if (it == link_idx.end())
            fail(where, std::string("approach references undeclared link '") +
                            lid + "'");
          return it->second;
        };
        ap.in_link = resolve("in");
        ap.out_link = resolve("out");
        if (ap.in_link && spec.links[*ap.in_link].to_id != node.id)
          fail(where, "in-link does not end at this node");
        if (ap.out_link && spec.links[*ap.out_link].from_id != node.id)
          fail(where, "out-link does not start at this node");
        node.approaches.push_back(ap);
      }
    }
    if (node.controlled &&
        (node.approaches.size() < 2 || node.approaches.size() > 5))
      fail(where, "controlled intersection must have 2-5 approaches");
  }

  if (root.contains("flows")) {
    for (const auto& jf : root["flows"]) {
      FlowSpec flow;
      const std::string where = origin_name + " flow";
      flow.origin = require_string(jf, "origin", where);
      flow.destination = require_string(jf, "destination", where);
      if (!node_idx.count(flow.origin))
        fail(where, "origin references undeclared node '" + flow.origin + "'");
      if (!node_idx.count(flow.destination))
        fail(where,
             "destination references undeclared node '" + flow.destination + "'");
      flow.rate_veh_h = require_number(jf, "rate_veh_h", where);
      if (flow.rate_veh_h < 0) fail(where, "flow rate negative");
      flow.start_s = jf.value("start_s", 0.0);
      flow.end_s = jf.value("end_s", spec.horizon_s);
      spec.flows.push_back(std::move(flow));
    }
  }

  return spec;
}

ScenarioSpec load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path);
}

}  // namespace xlight
