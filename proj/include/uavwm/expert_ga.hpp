#pragma once

// Offline expert planner: a genetic algorithm over (grand tour, break points)
// chromosomes whose elite is rendered into potential-field trajectories.

#include <algorithm>
#include <atomic>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uavwm/potential_field.hpp"
#include "uavwm/scenario.hpp"

namespace uavwm {

/// Counts calls into the GA; the online loop asserts this never moves.
inline std::atomic<long> &ga_invocation_counter() {
  static std::atomic<long> counter{0};
  return counter;
}

struct Chromosome {
  std::vector<int> tour;    // permutation of city ids 1..N
  std::vector<int> breaks;  // Q-1 cut indices into `tour`
  friend bool operator==(const Chromosome &, const Chromosome &) = default;
};

struct GAConfig {
  int population = 200;
  int generations = 500;
  int tournament_k = 3;
  double crossover_rate = 0.9;
  double mutation_rate = 0.2;
  int elitism = 2;
  double mu_bal = 0.1;
  double mu_obs = 1000.0;
  double mu_uav = 1000.0;
  std::uint64_t seed = 0;
  bool allow_idle = false;
  double proxy_dt = 1.0;  // sampling step of straight-line safety proxies (s)

  void validate() const {
    if (population < 2) throw DomainError("population must be >= 2");
    if (generations < 0 || tournament_k < 1 || elitism < 0 || elitism > population)
      throw DomainError("invalid GA sizes");
    if (crossover_rate < 0 || crossover_rate > 1 || mutation_rate < 0 || mutation_rate > 1)
      throw DomainError("GA rates must lie in [0,1]");
    if (mu_bal < 0 || mu_obs < 0 || mu_uav < 0) throw DomainError("GA weights must be nonnegative");
    if (!(proxy_dt > 0)) throw DomainError("proxy_dt must be positive");
  }
};

struct CostBreakdown {
  double dist = 0.0;
  double bal = 0.0;
  double obs = 0.0;
  double uav = 0.0;
  double total = 0.0;
};

struct ExpertDemonstration {
  std::string instance_ref;
  MissionInstance instance;
  Allocation allocation;
  Routes routes;
  std::vector<Trajectory> trajectories;
  CostBreakdown cost;              // exact penalties on synthesized trajectories
  double search_fitness = 0.0;     // proxy fitness the GA optimized
  std::vector<double> best_history;
};

// ---- cost terms ----

inline double route_length(const std::vector<int> &route, const DistanceMatrix &d) {
  double len = 0.0;
  for (std::size_t k = 0; k + 1 < route.size(); ++k)
    len += d(static_cast<std::size_t>(route[k]), static_cast<std::size_t>(route[k + 1]));
  return len;
}

inline std::vector<double> route_lengths(const Routes &routes, const DistanceMatrix &d) {
  std::vector<double> out;
  out.reserve(routes.size());
  for (const auto &r : routes) out.push_back(route_length(r, d));
  return out;
}

/// Sum of closed-tour polyline lengths.
inline double distance_cost(const Routes &routes, const DistanceMatrix &d) {
  double s = 0.0;
  for (const auto &r : routes) s += route_length(r, d);
  return s;
}

inline double balance_cost(std::span<const double> lengths) {
  if (lengths.empty()) return 0.0;
  const double mean = std::accumulate(lengths.begin(), lengths.end(), 0.0) / static_cast<double>(lengths.size());
  double s = 0.0;
  for (double l : lengths) s += (l - mean) * (l - mean);
  return s;
}

inline double balance_cost(const Routes &routes, const DistanceMatrix &d) {
  const auto l = route_lengths(routes, d);
  return balance_cost(l);
}

struct SafetyPenalties {
  double obs = 0.0;
  double uav = 0.0;
};

/// Squared-hinge separation deficits integrated by trapezoid over each UAV's
/// own samples. Pairs count only while both UAVs are airborne; ordered pairs
/// are both counted.
inline SafetyPenalties safety_penalties(std::span<const Trajectory> trajs, std::span<const Obstacle> obstacles,
                                        const FieldConfig &cfg) {
  SafetyPenalties p;
  auto hinge2 = [](double deficit) { return deficit > 0.0 ? deficit * deficit : 0.0; };
  for (std::size_t q = 0; q < trajs.size(); ++q) {
    const auto &s = trajs[q].samples;
    for (std::size_t i = 1; i < s.size(); ++i) {
      const double h = s[i].t - s[i - 1].t;
      for (const auto &o : obstacles)
        p.obs += 0.5 * h *
                 (hinge2(cfg.d_min_obs - o.surface_distance(s[i].position)) +
                  hinge2(cfg.d_min_obs - o.surface_distance(s[i - 1].position)));
      for (std::size_t r = 0; r < trajs.size(); ++r) {
        if (r == q) continue;
        const auto &other = trajs[r];
        if (!other.active_at(s[i - 1].t) || !other.active_at(s[i].t)) continue;
        p.uav += 0.5 * h *
                 (hinge2(cfg.d_min - distance(s[i].position, other.position_at(s[i].t))) +
                  hinge2(cfg.d_min - distance(s[i - 1].position, other.position_at(s[i - 1].t))));
      }
    }
  }
  return p;
}

/// Constant-speed straight-line rendering of a route, sampled every `dt`.
inline Trajectory straight_line_trajectory(std::span<const Vec2> route, double speed, double dt, double start_time) {
  Trajectory tr;
  if (route.empty()) return tr;
  tr.samples.push_back({start_time, route.front(), {}});
  double t = start_time;
  for (std::size_t k = 1; k < route.size(); ++k) {
    const Vec2 a = route[k - 1], b = route[k];
    const double len = distance(a, b);
    if (len <= 0.0) {
      tr.waypoint_marks.push_back(tr.samples.size() - 1);
      continue;
    }
    const Vec2 v = (b - a) * (speed / len);
    const double leg_time = len / speed;
    double tau = dt;
    while (tau < leg_time) {
      tr.samples.push_back({t + tau, a + v * tau, v});
      tau += dt;
    }
    t += leg_time;
    tr.samples.push_back({t, b, v});
    tr.waypoint_marks.push_back(tr.samples.size() - 1);
  }
  return tr;
}

// ---- chromosome handling ----

inline int segment_count(const Chromosome &c) { return static_cast<int>(c.breaks.size()) + 1; }

/// Decodes a chromosome into depot-delimited routes for `q` UAVs.
inline Routes decode(const Chromosome &c, int q) {
  Routes routes(static_cast<std::size_t>(q));
  std::size_t begin = 0;
  for (int u = 0; u < q; ++u) {
    const std::size_t end = u + 1 < q ? static_cast<std::size_t>(c.breaks[static_cast<std::size_t>(u)]) : c.tour.size();
    auto &r = routes[static_cast<std::size_t>(u)];
    r.push_back(0);
    for (std::size_t i = begin; i < end; ++i) r.push_back(c.tour[i]);
    r.push_back(0);
    begin = end;
  }
  return routes;
}

inline bool chromosome_valid(const Chromosome &c, int n, int q, bool allow_idle) {
  if (static_cast<int>(c.tour.size()) != n || static_cast<int>(c.breaks.size()) != q - 1) return false;
  std::vector<int> sorted = c.tour;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < n; ++i)
    if (sorted[static_cast<std::size_t>(i)] != i + 1) return false;
  int prev = 0;
  for (std::size_t k = 0; k < c.breaks.size(); ++k) {
    const int b = c.breaks[k];
    if (allow_idle ? (b < prev || b > n) : (b <= prev || b >= n)) return false;
    prev = b;
  }
  return true;
}

namespace detail {

inline void repair_breaks(std::vector<int> &b, int n, bool allow_idle) {
  std::sort(b.begin(), b.end());
  const int m = static_cast<int>(b.size());
  if (allow_idle) {
    for (int &v : b) v = std::clamp(v, 0, n);
    return;
  }
  for (int k = 0; k < m; ++k) {
    const int lo = k == 0 ? 1 : b[static_cast<std::size_t>(k - 1)] + 1;
    b[static_cast<std::size_t>(k)] = std::max(b[static_cast<std::size_t>(k)], lo);
  }
  for (int k = m - 1; k >= 0; --k) {
    const int hi = n - (m - k);
    b[static_cast<std::size_t>(k)] = std::min(b[static_cast<std::size_t>(k)], hi);
  }
}

inline Chromosome random_chromosome(int n, int q, bool allow_idle, std::mt19937_64 &rng) {
  Chromosome c;
  c.tour.resize(static_cast<std::size_t>(n));
  std::iota(c.tour.begin(), c.tour.end(), 1);
  std::shuffle(c.tour.begin(), c.tour.end(), rng);
  if (allow_idle) {
    std::uniform_int_distribution<int> u(0, n);
    for (int k = 0; k + 1 < q; ++k) c.breaks.push_back(u(rng));
    std::sort(c.breaks.begin(), c.breaks.end());
  } else {
    std::vector<int> cuts(static_cast<std::size_t>(n - 1));
    std::iota(cuts.begin(), cuts.end(), 1);
    std::shuffle(cuts.begin(), cuts.end(), rng);
    c.breaks.assign(cuts.begin(), cuts.begin() + (q - 1));
    std::sort(c.breaks.begin(), c.breaks.end());
  }
  return c;
}

/// Ordered crossover (OX) on the grand tour.
inline std::vector<int> order_crossover(const std::vector<int> &p1, const std::vector<int> &p2, std::mt19937_64 &rng) {
  const std::size_t n = p1.size();
  if (n < 2) return p1;
  std::uniform_int_distribution<std::size_t> u(0, n - 1);
  std::size_t i = u(rng), j = u(rng);
  if (i > j) std::swap(i, j);
  std::vector<int> child(n, 0);
  std::vector<char> used(n + 1, 0);
  for (std::size_t k = i; k <= j; ++k) {
    child[k] = p1[k];
    used[static_cast<std::size_t>(p1[k])] = 1;
  }
  std::size_t pos = (j + 1) % n;
  for (std::size_t k = 0; k < n; ++k) {
    const int g = p2[(j + 1 + k) % n];
    if (used[static_cast<std::size_t>(g)]) continue;
    child[pos] = g;
    pos = (pos + 1) % n;
  }
  return child;
}

}  // namespace detail

/// Nearest-neighbor grand tour from the depot with evenly spaced breaks.
inline Chromosome nearest_neighbor_chromosome(const MissionInstance &inst, const DistanceMatrix &d, bool allow_idle) {
  const int n = inst.city_count();
  const int q = inst.uav_count;
  Chromosome c;
  std::vector<char> seen(static_cast<std::size_t>(n + 1), 0);
  int cur = 0;
  for (int k = 0; k < n; ++k) {
    int best = -1;
    for (int j = 1; j <= n; ++j)
      if (!seen[static_cast<std::size_t>(j)] &&
          (best < 0 || d(static_cast<std::size_t>(cur), static_cast<std::size_t>(j)) <
                           d(static_cast<std::size_t>(cur), static_cast<std::size_t>(best))))
        best = j;
    seen[static_cast<std::size_t>(best)] = 1;
    c.tour.push_back(best);
    cur = best;
  }
  for (int k = 1; k < q; ++k) c.breaks.push_back(static_cast<int>(std::lround(static_cast<double>(k) * n / q)));
  detail::repair_breaks(c.breaks, n, allow_idle);
  return c;
}

inline std::vector<Vec2> route_positions(const MissionInstance &inst, const std::vector<int> &route) {
  std::vector<Vec2> p;
  p.reserve(route.size());
  for (int id : route) p.push_back(inst.node(id));
  return p;
}

inline double launch_time(std::size_t uav_index, const FieldConfig &field) {
  return static_cast<double>(uav_index) * field.launch_interval;
}

/// Objective minimized during evolution; safety terms use straight-line proxies.
inline CostBreakdown evaluate_routes_proxy(const Routes &routes, const MissionInstance &inst, const DistanceMatrix &d,
                                           const GAConfig &cfg, const FieldConfig &field) {
  CostBreakdown c;
  const auto lengths = route_lengths(routes, d);
  c.dist = std::accumulate(lengths.begin(), lengths.end(), 0.0);
  c.bal = balance_cost(lengths);
  if ((cfg.mu_obs > 0.0 && !inst.obstacles.empty()) || (cfg.mu_uav > 0.0 && routes.size() > 1)) {
    std::vector<Trajectory> proxies;
    proxies.reserve(routes.size());
    for (std::size_t q = 0; q < routes.size(); ++q) {
      const auto pts = route_positions(inst, routes[q]);
      proxies.push_back(straight_line_trajectory(pts, field.v_max, cfg.proxy_dt, launch_time(q, field)));
    }
    const auto s = safety_penalties(proxies, inst.obstacles, field);
    c.obs = s.obs;
    c.uav = s.uav;
  }
  c.total = c.dist + cfg.mu_bal * c.bal + cfg.mu_obs * c.obs + cfg.mu_uav * c.uav;
  return c;
}

inline double fitness(const Chromosome &chrom, const MissionInstance &inst, const DistanceMatrix &d,
                      const GAConfig &cfg, const FieldConfig &field) {
  return evaluate_routes_proxy(decode(chrom, inst.uav_count), inst, d, cfg, field).total;
}

/// Renders routes into potential-field trajectories, UAV by UAV.
inline std::vector<Trajectory> synthesize_routes(const MissionInstance &inst, const Routes &routes,
                                                 const FieldConfig &field) {
  std::vector<Trajectory> trajs;
  for (std::size_t q = 0; q < routes.size(); ++q) {
    const auto pts = route_positions(inst, routes[q]);
    trajs.push_back(synthesize_trajectory(pts, inst.obstacles, trajs, field, launch_time(q, field)));
  }
  return trajs;
}

inline ExpertDemonstration evolve(const MissionInstance &inst, const GAConfig &cfg_in, const FieldConfig &field) {
  ++ga_invocation_counter();
  cfg_in.validate();
  field.validate();
  check_instance(inst);
  GAConfig cfg = cfg_in;
  const int n = inst.city_count();
  const int q = inst.uav_count;
  if (n < q) cfg.allow_idle = true;
  const auto d = distance_matrix(inst);
  std::mt19937_64 rng(cfg.seed);

  struct Individual {
    Chromosome c;
    double f;
  };
  auto make = [&](Chromosome c) { return Individual{c, fitness(c, inst, d, cfg, field)}; };

  std::vector<Individual> pop;
  pop.reserve(static_cast<std::size_t>(cfg.population));
  pop.push_back(make(nearest_neighbor_chromosome(inst, d, cfg.allow_idle)));
  while (static_cast<int>(pop.size()) < cfg.population)
    pop.push_back(make(detail::random_chromosome(n, q, cfg.allow_idle, rng)));

  auto by_fitness = [](const Individual &a, const Individual &b) { return a.f < b.f; };
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, static_cast<std::size_t>(cfg.population - 1));

  auto tournament = [&]() -> const Individual & {
    std::size_t best = pick(rng);
    for (int k = 1; k < cfg.tournament_k; ++k) {
      const std::size_t c = pick(rng);
      if (pop[c].f < pop[best].f) best = c;
    }
    return pop[best];
  };

  auto mutate = [&](Chromosome &c) {
    if (n >= 2) {
      std::uniform_int_distribution<std::size_t> pos(0, static_cast<std::size_t>(n - 1));
      if (u01(rng) < cfg.mutation_rate) std::swap(c.tour[pos(rng)], c.tour[pos(rng)]);
      if (u01(rng) < cfg.mutation_rate) {
        std::size_t i = pos(rng), j = pos(rng);
        if (i > j) std::swap(i, j);
        std::reverse(c.tour.begin() + static_cast<std::ptrdiff_t>(i), c.tour.begin() + static_cast<std::ptrdiff_t>(j) + 1);
      }
    }
    if (!c.breaks.empty() && u01(rng) < cfg.mutation_rate) {
      std::uniform_int_distribution<std::size_t> which(0, c.breaks.size() - 1);
      std::uniform_int_distribution<int> shift(-3, 3);
      c.breaks[which(rng)] += shift(rng);
      detail::repair_breaks(c.breaks, n, cfg.allow_idle);
    }
  };

  std::stable_sort(pop.begin(), pop.end(), by_fitness);
  std::vector<double> history{pop.front().f};
  for (int g = 0; g < cfg.generations; ++g) {
    std::vector<Individual> next(pop.begin(), pop.begin() + cfg.elitism);
    while (static_cast<int>(next.size()) < cfg.population) {
      const auto &a = tournament();
      const auto &b = tournament();
      Chromosome child = a.c;
      if (u01(rng) < cfg.crossover_rate) {
        child.tour = detail::order_crossover(a.c.tour, b.c.tour, rng);
        for (std::size_t k = 0; k < child.breaks.size(); ++k)
          if (u01(rng) < 0.5) child.breaks[k] = b.c.breaks[k];
        detail::repair_breaks(child.breaks, n, cfg.allow_idle);
      }
      mutate(child);
      next.push_back(make(std::move(child)));
    }
    pop = std::move(next);
    std::stable_sort(pop.begin(), pop.end(), by_fitness);
    history.push_back(pop.front().f);
  }

  ExpertDemonstration demo;
  demo.instance = inst;
  demo.routes = decode(pop.front().c, q);
  demo.allocation = allocation_from_routes(demo.routes);
  demo.search_fitness = pop.front().f;
  demo.best_history = std::move(history);

  try {
    demo.trajectories = synthesize_routes(inst, demo.routes, field);
  } catch (const NonConvergenceError &) {
    FieldConfig retry = field;
    retry.step_budget *= 2;
    demo.trajectories = synthesize_routes(inst, demo.routes, retry);
  }
  const auto lengths = route_lengths(demo.routes, d);
  demo.cost.dist = std::accumulate(lengths.begin(), lengths.end(), 0.0);
  demo.cost.bal = balance_cost(lengths);
  const auto pen = safety_penalties(demo.trajectories, inst.obstacles, field);
  demo.cost.obs = pen.obs;
  demo.cost.uav = pen.uav;
  demo.cost.total = demo.cost.dist + cfg.mu_bal * demo.cost.bal + cfg.mu_obs * demo.cost.obs + cfg.mu_uav * demo.cost.uav;
  return demo;
}

// ---- demonstration file ----

inline nlohmann::json to_json(const ExpertDemonstration &demo) {
  nlohmann::json j;
  j["instance_ref"] = demo.instance_ref;
  j["allocation"] = demo.allocation;
  j["routes"] = demo.routes;
  j["cost_breakdown"] = {{"J_dist", demo.cost.dist},
                         {"J_bal", demo.cost.bal},
                         {"J_obs", demo.cost.obs},
                         {"J_uav", demo.cost.uav},
                         {"total", demo.cost.total}};
  j["search_fitness"] = demo.search_fitness;
  nlohmann::json marks = nlohmann::json::array();
  for (const auto &t : demo.trajectories) marks.push_back(t.waypoint_marks);
  j["waypoint_marks"] = marks;
  return j;
}

/// Restores a demonstration from its JSON record, instance and trajectory CSV contents.
inline ExpertDemonstration demonstration_from_json(const nlohmann::json &j, MissionInstance inst,
                                                   std::vector<Trajectory> trajs) {
  ExpertDemonstration demo;
  try {
    demo.instance_ref = require(j, "instance_ref").get<std::string>();
    demo.allocation = require(j, "allocation").get<Allocation>();
    demo.routes = require(j, "routes").get<Routes>();
    const auto &c = require(j, "cost_breakdown");
    demo.cost = {require(c, "J_dist").get<double>(), require(c, "J_bal").get<double>(),
                 require(c, "J_obs").get<double>(), require(c, "J_uav").get<double>(),
                 require(c, "total").get<double>()};
    if (j.contains("search_fitness")) demo.search_fitness = j["search_fitness"].get<double>();
    const auto marks = require(j, "waypoint_marks").get<std::vector<std::vector<std::size_t>>>();
    trajs.resize(demo.routes.size());
    if (marks.size() != trajs.size()) throw DomainError("waypoint_marks do not match trajectory count");
    for (std::size_t q = 0; q < trajs.size(); ++q) trajs[q].waypoint_marks = marks[q];
  } catch (const nlohmann::json::exception &e) {
    throw DomainError(std::string("malformed demonstration: ") + e.what());
  }
  demo.instance = std::move(inst);
  demo.trajectories = std::move(trajs);
  return demo;
}

}  // namespace uavwm
