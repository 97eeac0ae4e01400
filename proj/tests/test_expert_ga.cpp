#include <algorithm>
#include <functional>
#include <numeric>

#include <gtest/gtest.h>

#include "uavwm/expert_ga.hpp"

using namespace uavwm;

namespace {

MissionInstance manual(Vec2 depot, std::vector<Vec2> pts, int q) {
  MissionInstance inst;
  inst.depot = depot;
  inst.area = {1000.0, 1000.0};
  inst.uav_count = q;
  for (std::size_t i = 0; i < pts.size(); ++i) inst.cities.push_back({static_cast<int>(i) + 1, pts[i]});
  return inst;
}

// Corners of a 200 m square around a depot at the square's center.
MissionInstance four_corners() {
  return manual({500, 500}, {{400, 400}, {600, 400}, {600, 600}, {400, 600}}, 1);
}

constexpr double kFourCornerOptimum = 2.0 * 141.4213562373095 + 3.0 * 200.0;

// Exhaustive oracle: every labeled assignment of cities to UAVs, every order
// inside each UAV. Returns the minimum proxy objective.
double exhaustive_optimum(const MissionInstance &inst, const GAConfig &cfg, const FieldConfig &field) {
  const int n = inst.city_count();
  const int q = inst.uav_count;
  const auto d = distance_matrix(inst);
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> owner(static_cast<std::size_t>(n), 0);
  std::function<void(int)> assign = [&](int i) {
    if (i == n) {
      std::vector<std::vector<int>> parts(static_cast<std::size_t>(q));
      for (int c = 0; c < n; ++c) parts[static_cast<std::size_t>(owner[static_cast<std::size_t>(c)])].push_back(c + 1);
      if (!cfg.allow_idle)
        for (const auto &p : parts)
          if (p.empty()) return;
      std::function<void(int, Routes &)> orders = [&](int u, Routes &routes) {
        if (u == q) {
          best = std::min(best, evaluate_routes_proxy(routes, inst, d, cfg, field).total);
          return;
        }
        auto p = parts[static_cast<std::size_t>(u)];
        std::sort(p.begin(), p.end());
        do {
          std::vector<int> r{0};
          r.insert(r.end(), p.begin(), p.end());
          r.push_back(0);
          routes.push_back(r);
          orders(u + 1, routes);
          routes.pop_back();
        } while (std::next_permutation(p.begin(), p.end()));
      };
      Routes routes;
      orders(0, routes);
      return;
    }
    for (int u = 0; u < q; ++u) {
      owner[static_cast<std::size_t>(i)] = u;
      assign(i + 1);
    }
  };
  assign(0);
  return best;
}

}  // namespace

TEST(DistanceCost, OutAndBack) {
  const auto inst = manual({0, 0}, {{3, 4}}, 1);
  EXPECT_DOUBLE_EQ(distance_cost({{0, 1, 0}}, distance_matrix(inst)), 10.0);
}

TEST(DistanceCost, SquarePerimeterAndLabelSymmetry) {
  const auto inst = four_corners();
  const auto d = distance_matrix(inst);
  EXPECT_NEAR(distance_cost({{0, 1, 2, 3, 4, 0}}, d), 882.84, 0.01);
  const auto two = manual({500, 500}, {{400, 400}, {600, 400}, {600, 600}, {400, 600}}, 2);
  const auto d2 = distance_matrix(two);
  EXPECT_DOUBLE_EQ(distance_cost({{0, 1, 2, 0}, {0, 3, 4, 0}}, d2), distance_cost({{0, 3, 4, 0}, {0, 1, 2, 0}}, d2));
}

TEST(BalanceCost, Values) {
  const std::vector<double> eq{10, 10}, uneq{10, 20}, one{42};
  EXPECT_EQ(balance_cost(std::span<const double>(eq)), 0.0);
  EXPECT_DOUBLE_EQ(balance_cost(std::span<const double>(uneq)), 50.0);
  EXPECT_EQ(balance_cost(std::span<const double>(one)), 0.0);
}

TEST(SafetyPenalties, InactiveHinge) {
  FieldConfig cfg;
  Trajectory a, b;
  for (int i = 0; i <= 10; ++i) {
    a.samples.push_back({0.1 * i, {0, 0}, {}});
    b.samples.push_back({0.1 * i, {100, 0}, {}});
  }
  const std::vector<Obstacle> obs{{{0, 300}, 10}};
  const std::vector<Trajectory> t{a, b};
  const auto p = safety_penalties(t, obs, cfg);
  EXPECT_EQ(p.obs, 0.0);
  EXPECT_EQ(p.uav, 0.0);
}

TEST(SafetyPenalties, StationaryPairAtHalfMinimumSeparation) {
  FieldConfig cfg;
  cfg.d_min = 10.0;
  Trajectory a, b;
  for (int i = 0; i <= 10; ++i) {
    a.samples.push_back({0.1 * i, {0, 0}, {}});
    b.samples.push_back({0.1 * i, {cfg.d_min / 2, 0}, {}});
  }
  const std::vector<Trajectory> t{a, b};
  const auto p = safety_penalties(t, {}, cfg);
  EXPECT_NEAR(p.uav, 2.0 * 25.0 * 1.0, 1e-9);
  const std::vector<Trajectory> single{a};
  EXPECT_EQ(safety_penalties(single, {}, cfg).uav, 0.0);
}

TEST(SafetyPenalties, ObstacleHingeHandEvaluated) {
  FieldConfig cfg;
  cfg.d_min_obs = 20.0;
  Trajectory a;
  for (int i = 0; i <= 20; ++i) a.samples.push_back({0.1 * i, {0, 0}, {}});
  const std::vector<Obstacle> obs{{{15, 0}, 5}};  // surface at 10 m: deficit 10 for 2 s
  const std::vector<Trajectory> t{a};
  EXPECT_NEAR(safety_penalties(t, obs, cfg).obs, 100.0 * 2.0, 1e-9);
}

TEST(Fitness, ZeroWeightsReduceToDistance) {
  const auto inst = manual({500, 500}, {{100, 100}, {200, 900}, {800, 800}, {900, 100}, {450, 520}}, 2);
  GAConfig cfg;
  cfg.mu_bal = cfg.mu_obs = cfg.mu_uav = 0.0;
  const Chromosome c{{3, 1, 5, 2, 4}, {2}};
  const auto d = distance_matrix(inst);
  EXPECT_DOUBLE_EQ(fitness(c, inst, d, cfg, {}), distance_cost(decode(c, 2), d));
}

TEST(Fitness, ReversedSegmentKeepsDistance) {
  const auto inst = manual({500, 500}, {{100, 100}, {200, 900}, {800, 800}, {900, 100}}, 2);
  const auto d = distance_matrix(inst);
  const Chromosome a{{1, 2, 3, 4}, {2}}, b{{2, 1, 3, 4}, {2}};
  EXPECT_DOUBLE_EQ(distance_cost(decode(a, 2), d), distance_cost(decode(b, 2), d));
}

TEST(Fitness, FourCornerBruteForceOptimum) {
  const auto inst = four_corners();
  const auto d = distance_matrix(inst);
  GAConfig cfg;
  std::vector<int> perm{1, 2, 3, 4};
  double best = 1e18;
  do {
    best = std::min(best, fitness({perm, {}}, inst, d, cfg, {}));
  } while (std::next_permutation(perm.begin(), perm.end()));
  EXPECT_NEAR(best, 882.84, 0.01);
  EXPECT_NEAR(exhaustive_optimum(inst, cfg, {}), best, 1e-9);
}

TEST(Decode, AlwaysDisjointCover) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 20);
    const int q = 1 + static_cast<int>(rng() % 4);
    const bool idle = n < q || (rng() % 2 == 0);
    const auto c = detail::random_chromosome(n, q, idle, rng);
    ASSERT_TRUE(chromosome_valid(c, n, q, idle));
    const auto routes = decode(c, q);
    std::vector<int> seen;
    for (const auto &r : routes) {
      ASSERT_EQ(r.front(), 0);
      ASSERT_EQ(r.back(), 0);
      for (std::size_t k = 1; k + 1 < r.size(); ++k) seen.push_back(r[k]);
      if (!idle) {
        ASSERT_GT(r.size(), 2u);
      }
    }
    std::sort(seen.begin(), seen.end());
    std::vector<int> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 1);
    ASSERT_EQ(seen, all);
  }
}

TEST(Evolve, FourCornerReachesOptimumInMostSeeds) {
  const auto inst = four_corners();
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GAConfig cfg;
    cfg.seed = seed;
    const auto demo = evolve(inst, cfg, {});
    if (std::abs(demo.search_fitness - kFourCornerOptimum) <= 0.005 * kFourCornerOptimum) ++hits;
    EXPECT_TRUE(validate_solution(inst, demo.allocation, demo.routes).ok);
  }
  EXPECT_GE(hits, 9);
}

TEST(Evolve, SixCitiesTwoUavsNearExhaustiveOptimum) {
  const auto inst = generate_instance(42, 6, 2, {1000.0, 1000.0}, 0);
  GAConfig cfg;
  cfg.seed = 42;
  FieldConfig field;
  const auto demo = evolve(inst, cfg, field);
  const double oracle = exhaustive_optimum(inst, cfg, field);
  EXPECT_LE(demo.search_fitness, oracle * 1.02);
  EXPECT_GE(demo.search_fitness, oracle - 1e-6);
}

TEST(Evolve, SingleCityRoute) {
  const auto inst = generate_instance(3, 1, 1, {1000.0, 1000.0}, 0);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    GAConfig cfg;
    cfg.seed = seed;
    cfg.generations = 5;
    const auto demo = evolve(inst, cfg, {});
    ASSERT_EQ(demo.routes.size(), 1u);
    EXPECT_EQ(demo.routes[0], (std::vector<int>{0, 1, 0}));
  }
}

TEST(Evolve, DeterministicMonotoneAndFeasible) {
  const auto inst = generate_instance(9, 12, 3, {1000.0, 1000.0}, 2);
  GAConfig cfg;
  cfg.seed = 4;
  cfg.population = 60;
  cfg.generations = 80;
  const auto a = evolve(inst, cfg, {});
  const auto b = evolve(inst, cfg, {});
  EXPECT_EQ(a.routes, b.routes);
  EXPECT_EQ(a.cost.total, b.cost.total);
  for (std::size_t g = 1; g < a.best_history.size(); ++g) EXPECT_LE(a.best_history[g], a.best_history[g - 1]);
  EXPECT_TRUE(validate_solution(inst, a.allocation, a.routes).ok);
  ASSERT_EQ(a.trajectories.size(), 3u);
  for (std::size_t q = 0; q < 3; ++q) EXPECT_EQ(a.trajectories[q].waypoint_marks.size(), a.routes[q].size() - 1);
}

TEST(Evolve, NeverWorseThanNearestNeighbor) {
  GAConfig cfg;
  cfg.population = 30;
  cfg.generations = 20;
  FieldConfig field;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto inst = generate_instance(seed, 10, 1 + static_cast<int>(seed % 3), {1000.0, 1000.0}, 0);
    cfg.seed = seed;
    const auto d = distance_matrix(inst);
    const double nn = fitness(nearest_neighbor_chromosome(inst, d, false), inst, d, cfg, field);
    const auto demo = evolve(inst, cfg, field);
    ASSERT_LE(demo.search_fitness, nn + 1e-9);
    ASSERT_TRUE(validate_solution(inst, demo.allocation, demo.routes).ok);
  }
}

TEST(Evolve, IncrementsInvocationCounter) {
  const long before = ga_invocation_counter().load();
  GAConfig cfg;
  cfg.generations = 1;
  evolve(four_corners(), cfg, {});
  EXPECT_EQ(ga_invocation_counter().load(), before + 1);
}
