#pragma once

// Mission instances, the depot-indexed distance matrix and the MTSP
// feasibility validator.

#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uavwm/geometry.hpp"

namespace uavwm {

struct City {
  int id = 0;  // 1..N, 0 is the depot
  Vec2 position;
};

struct Obstacle {
  Vec2 center;
  double radius = 0.0;

  /// Signed distance to the disk surface (negative inside).
  double surface_distance(Vec2 p) const { return distance(p, center) - radius; }
};

struct Area {
  double width = 1000.0;
  double height = 1000.0;
  bool contains(Vec2 p) const { return p.x >= 0.0 && p.x <= width && p.y >= 0.0 && p.y <= height; }
};

struct MissionInstance {
  std::vector<City> cities;
  Vec2 depot;
  std::vector<Obstacle> obstacles;
  int uav_count = 1;
  Area area;
  std::uint64_t seed = 0;
  double altitude = 200.0;  // metadata only; planning is planar

  int city_count() const { return static_cast<int>(cities.size()); }

  /// Position of node `id` (0 = depot). Cities are stored in id order.
  Vec2 node(int id) const { return id == 0 ? depot : cities.at(static_cast<std::size_t>(id - 1)).position; }
};

/// Per-UAV city subsets and per-UAV node routes. Routes include the depot
/// (node 0) at both ends, e.g. {0, 3, 1, 0}; an idle UAV has {0, 0} or {}.
using Allocation = std::vector<std::vector<int>>;
using Routes = std::vector<std::vector<int>>;

struct ObstacleOptions {
  double min_radius_frac = 0.02;   // of the shorter area side
  double max_radius_frac = 0.06;
  double depot_clearance_frac = 0.1;
  double city_clearance = 30.0;    // meters kept free around each obstacle for cities
  int max_attempts_per_item = 1000;
};

inline void check_instance(const MissionInstance &inst) {
  if (inst.uav_count < 1) throw DomainError("uav_count must be >= 1");
  for (std::size_t i = 0; i < inst.cities.size(); ++i) {
    if (inst.cities[i].id != static_cast<int>(i) + 1)
      throw DomainError("city ids must be contiguous 1..N in order");
    if (!inst.area.contains(inst.cities[i].position))
      throw DomainError("city " + std::to_string(inst.cities[i].id) + " lies outside the area");
  }
  for (const auto &o : inst.obstacles)
    if (o.surface_distance(inst.depot) <= 0.0) throw DomainError("obstacle contains the depot");
}

/// Uniformly samples cities outside obstacle disks; depot sits at the area center.
inline MissionInstance generate_instance(std::uint64_t seed, int n_cities, int uav_count, Area area,
                                         int n_obstacles, const ObstacleOptions &opt = {}) {
  if (n_cities < 1) throw DomainError("n_cities must be >= 1");
  if (uav_count < 1) throw DomainError("uav_count must be >= 1");
  if (!(area.width > 0.0 && area.height > 0.0)) throw DomainError("area must be positive");
  if (n_obstacles < 0) throw DomainError("n_obstacles must be >= 0");

  MissionInstance inst;
  inst.seed = seed;
  inst.area = area;
  inst.uav_count = uav_count;
  inst.depot = {area.width / 2.0, area.height / 2.0};

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(0.0, area.width);
  std::uniform_real_distribution<double> uy(0.0, area.height);
  const double side = std::min(area.width, area.height);
  std::uniform_real_distribution<double> ur(opt.min_radius_frac * side, opt.max_radius_frac * side);

  for (int k = 0; k < n_obstacles; ++k) {
    bool placed = false;
    for (int a = 0; a < opt.max_attempts_per_item && !placed; ++a) {
      Obstacle o{{ux(rng), uy(rng)}, ur(rng)};
      if (o.surface_distance(inst.depot) < opt.depot_clearance_frac * side) continue;
      inst.obstacles.push_back(o);
      placed = true;
    }
    if (!placed) throw DomainError("could not place obstacle " + std::to_string(k) + " away from the depot");
  }

  for (int i = 1; i <= n_cities; ++i) {
    bool placed = false;
    for (int a = 0; a < opt.max_attempts_per_item && !placed; ++a) {
      Vec2 p{ux(rng), uy(rng)};
      bool free = true;
      for (const auto &o : inst.obstacles)
        if (o.surface_distance(p) < opt.city_clearance) free = false;
      if (!free) continue;
      inst.cities.push_back({i, p});
      placed = true;
    }
    if (!placed)
      throw DomainError("area too small to place " + std::to_string(n_cities) + " cities outside obstacles");
  }
  return inst;
}

class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(std::size_t n) : n_(n), d_(n * n, 0.0) {}

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }
  double &operator()(std::size_t i, std::size_t j) { return d_[i * n_ + j]; }

 private:
  std::size_t n_ = 0;
  std::vector<double> d_;
};

inline DistanceMatrix distance_matrix(const MissionInstance &inst) {
  const std::size_t n = inst.cities.size() + 1;
  DistanceMatrix d(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = distance(inst.node(static_cast<int>(i)), inst.node(static_cast<int>(j)));
      d(i, j) = v;
      d(j, i) = v;
    }
  return d;
}

enum class Constraint { visit, flow, subtour, outgoing, depot_out, depot_in, depot_balance };

inline std::string to_string(Constraint c) {
  switch (c) {
    case Constraint::visit: return "visit";
    case Constraint::flow: return "flow";
    case Constraint::subtour: return "subtour";
    case Constraint::outgoing: return "outgoing";
    case Constraint::depot_out: return "depot_out";
    case Constraint::depot_in: return "depot_in";
    case Constraint::depot_balance: return "depot_balance";
  }
  return "unknown";
}

struct Violation {
  Constraint constraint;
  std::string detail;
};

struct FeasibilityReport {
  bool ok = true;
  std::vector<Violation> violations;

  bool has(Constraint c) const {
    for (const auto &v : violations)
      if (v.constraint == c) return true;
    return false;
  }
  void add(Constraint c, std::string detail) {
    ok = false;
    violations.push_back({c, std::move(detail)});
  }
};

/// Checks the MTSP constraints on the edge sets X^q implied by `routes`.
/// Subtours are detected per UAV by depot connectivity of its edge set.
inline FeasibilityReport validate_solution(const MissionInstance &inst, const Allocation &allocation,
                                           const Routes &routes) {
  FeasibilityReport rep;
  const int n = inst.city_count();
  std::vector<int> entered(static_cast<std::size_t>(n + 1), 0), departed(static_cast<std::size_t>(n + 1), 0);

  for (std::size_t q = 0; q < routes.size(); ++q) {
    const auto &r = routes[q];
    const std::string uav = "uav " + std::to_string(q + 1);
    for (int id : r)
      if (id < 0 || id > n) {
        rep.add(Constraint::visit, uav + " references unknown node " + std::to_string(id));
        return rep;
      }
    std::vector<int> in(static_cast<std::size_t>(n + 1), 0), out(static_cast<std::size_t>(n + 1), 0);
    std::map<int, std::vector<int>> adj;
    for (std::size_t k = 0; k + 1 < r.size(); ++k) {
      const int a = r[k], b = r[k + 1];
      if (a == b) continue;  // {0,0} idle marker carries no edge
      ++out[static_cast<std::size_t>(a)];
      ++in[static_cast<std::size_t>(b)];
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
    for (int c = 1; c <= n; ++c) {
      entered[static_cast<std::size_t>(c)] += in[static_cast<std::size_t>(c)];
      departed[static_cast<std::size_t>(c)] += out[static_cast<std::size_t>(c)];
      if (in[static_cast<std::size_t>(c)] != out[static_cast<std::size_t>(c)])
        rep.add(Constraint::flow, uav + " city " + std::to_string(c) + " in/out edges differ");
    }
    if (out[0] > 1) rep.add(Constraint::depot_out, uav + " departs the depot more than once");
    if (in[0] > 1) rep.add(Constraint::depot_in, uav + " returns to the depot more than once");
    if (out[0] != in[0]) rep.add(Constraint::depot_balance, uav + " departures and returns differ");

    // Every node touched by this UAV's edges must be connected to the depot.
    if (!adj.empty()) {
      std::set<int> seen;
      std::vector<int> stack;
      if (adj.count(0)) {
        stack.push_back(0);
        seen.insert(0);
      }
      while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        for (int w : adj[v])
          if (seen.insert(w).second) stack.push_back(w);
      }
      for (const auto &[v, _] : adj)
        if (!seen.count(v)) {
          rep.add(Constraint::subtour, uav + " node " + std::to_string(v) + " is disconnected from the depot");
          break;
        }
    }
  }

  for (int c = 1; c <= n; ++c) {
    if (entered[static_cast<std::size_t>(c)] != 1)
      rep.add(Constraint::visit, "city " + std::to_string(c) + " entered " +
                                     std::to_string(entered[static_cast<std::size_t>(c)]) + " times");
    if (departed[static_cast<std::size_t>(c)] != 1)
      rep.add(Constraint::outgoing, "city " + std::to_string(c) + " departed " +
                                        std::to_string(departed[static_cast<std::size_t>(c)]) + " times");
  }

  // The allocation must be a disjoint cover matching the route contents.
  std::vector<int> owner(static_cast<std::size_t>(n + 1), -1);
  for (std::size_t q = 0; q < allocation.size(); ++q)
    for (int c : allocation[q]) {
      if (c < 1 || c > n) {
        rep.add(Constraint::visit, "allocation references unknown city " + std::to_string(c));
        continue;
      }
      if (owner[static_cast<std::size_t>(c)] != -1)
        rep.add(Constraint::visit, "city " + std::to_string(c) + " allocated to more than one UAV");
      owner[static_cast<std::size_t>(c)] = static_cast<int>(q);
    }
  for (int c = 1; c <= n; ++c)
    if (owner[static_cast<std::size_t>(c)] == -1)
      rep.add(Constraint::visit, "city " + std::to_string(c) + " not allocated");
  for (std::size_t q = 0; q < routes.size(); ++q)
    for (int id : routes[q])
      if (id != 0 && owner[static_cast<std::size_t>(id)] != static_cast<int>(q))
        rep.add(Constraint::visit, "city " + std::to_string(id) + " routed by uav " + std::to_string(q + 1) +
                                       " but allocated elsewhere");
  return rep;
}

/// Builds the allocation implied by depot-delimited routes.
inline Allocation allocation_from_routes(const Routes &routes) {
  Allocation a(routes.size());
  for (std::size_t q = 0; q < routes.size(); ++q)
    for (int id : routes[q])
      if (id != 0) a[q].push_back(id);
  return a;
}

// ---- JSON (instance file) ----

inline nlohmann::json to_json(const MissionInstance &inst) {
  nlohmann::json j;
  j["seed"] = inst.seed;
  j["area"] = {{"width", inst.area.width}, {"height", inst.area.height}};
  j["depot"] = {{"x", inst.depot.x}, {"y", inst.depot.y}};
  j["cities"] = nlohmann::json::array();
  for (const auto &c : inst.cities) j["cities"].push_back({{"id", c.id}, {"x", c.position.x}, {"y", c.position.y}});
  j["obstacles"] = nlohmann::json::array();
  for (const auto &o : inst.obstacles)
    j["obstacles"].push_back({{"x", o.center.x}, {"y", o.center.y}, {"r", o.radius}});
  j["uav_count"] = inst.uav_count;
  j["altitude"] = inst.altitude;
  return j;
}

/// Reads a required field, naming it in the error when absent.
inline const nlohmann::json &require(const nlohmann::json &j, const char *field) {
  if (!j.is_object() || !j.contains(field)) throw DomainError(std::string("missing field '") + field + "'");
  return j.at(field);
}

inline MissionInstance instance_from_json(const nlohmann::json &j) {
  MissionInstance inst;
  try {
    inst.seed = require(j, "seed").get<std::uint64_t>();
    const auto &a = require(j, "area");
    inst.area = {require(a, "width").get<double>(), require(a, "height").get<double>()};
    const auto &d = require(j, "depot");
    inst.depot = {require(d, "x").get<double>(), require(d, "y").get<double>()};
    for (const auto &c : require(j, "cities"))
      inst.cities.push_back({require(c, "id").get<int>(), {require(c, "x").get<double>(), require(c, "y").get<double>()}});
    for (const auto &o : require(j, "obstacles"))
      inst.obstacles.push_back({{require(o, "x").get<double>(), require(o, "y").get<double>()}, require(o, "r").get<double>()});
    inst.uav_count = require(j, "uav_count").get<int>();
    if (j.contains("altitude")) inst.altitude = j.at("altitude").get<double>();
  } catch (const nlohmann::json::exception &e) {
    throw DomainError(std::string("malformed instance: ") + e.what());
  }
  std::sort(inst.cities.begin(), inst.cities.end(), [](const City &a, const City &b) { return a.id < b.id; });
  check_instance(inst);
  return inst;
}

}  // namespace uavwm
