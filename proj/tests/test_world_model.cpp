#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "uavwm/world_model.hpp"

using namespace uavwm;

namespace {

UavSymbols symbols(int m, int r, int o) {
  const MissionWord mw{m % 5, m, 0};
  return {mw, {MissionWord{}, r % 2 ? Orientation::cw : Orientation::ccw, r / 2}, {{o, o + 1}}};
}

SymbolicTriplet triplet(int n_cities, int q, std::vector<UavSymbols> uavs) {
  return {n_cities, q, std::move(uavs)};
}

// 3 mission, 3 route, 3 motion symbols with uneven co-occurrence.
std::vector<SymbolicTriplet> toy_corpus() {
  std::vector<SymbolicTriplet> ts;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 40; ++i) {
    const int m = static_cast<int>(rng() % 3);
    const int r = (m + static_cast<int>(rng() % 2)) % 3;
    const int o = (r * 2 + static_cast<int>(rng() % 3)) % 3;
    ts.push_back(triplet(10 + static_cast<int>(rng() % 30), 1 + static_cast<int>(rng() % 3), {symbols(m, r, o)}));
  }
  return ts;
}

WorldModel toy_model(double alpha = 1.0) {
  const auto ts = toy_corpus();
  return train_world_model(ts, build_dictionaries(ts), alpha);
}

double row_sum(const std::vector<double> &r) {
  double s = 0.0;
  for (double v : r) s += v;
  return s;
}

}  // namespace

TEST(Reference, SmoothedCounts) {
  const std::vector<long> c{3, 1};
  const auto r = estimate_reference(c, 1.0);
  EXPECT_NEAR(r[0], 4.0 / 6.0, 1e-12);
  EXPECT_NEAR(r[1], 2.0 / 6.0, 1e-12);
}

TEST(Reference, ZeroCountsUniform) {
  const std::vector<long> c{0, 0};
  const auto r = estimate_reference(c, 1.0);
  EXPECT_DOUBLE_EQ(r[0], 0.5);
  EXPECT_DOUBLE_EQ(r[1], 0.5);
}

TEST(Reference, UnsmoothedFrequencies) {
  const std::vector<long> c{2, 2};
  EXPECT_DOUBLE_EQ(estimate_reference(c, 0.0)[0], 0.5);
}

TEST(Reference, ZeroAlphaZeroCountsRejected) {
  const std::vector<long> c{0, 0};
  EXPECT_THROW(estimate_reference(c, 0.0), DomainError);
}

TEST(Reference, ScaleInvarianceWithoutSmoothing) {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 100; ++k) {
    std::vector<long> c(1 + rng() % 10), c2;
    for (auto &v : c) v = static_cast<long>(rng() % 20) + 1;
    for (long v : c) c2.push_back(2 * v);
    const auto a = estimate_reference(c, 0.0), b = estimate_reference(c2, 0.0);
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
    const auto s = estimate_reference(c, 0.7);
    EXPECT_NEAR(row_sum(s.probs), 1.0, 1e-12);
    for (double p : s.probs) EXPECT_GT(p, 0.0);
  }
}

TEST(Transition, SmoothedRows) {
  const auto t = estimate_transition({{2, 0}, {0, 2}}, 1.0);
  EXPECT_NEAR(t(0, 0), 0.75, 1e-12);
  EXPECT_NEAR(t(0, 1), 0.25, 1e-12);
  EXPECT_NEAR(t(1, 0), 0.25, 1e-12);
  EXPECT_NEAR(t(1, 1), 0.75, 1e-12);
}

TEST(Transition, ZeroRowUniform) {
  const auto t = estimate_transition({{0, 0, 0}, {1, 2, 3}}, 1.0);
  for (double p : t.row(0)) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
  const auto u = estimate_transition({{0, 0}, {1, 3}}, 0.0);
  EXPECT_DOUBLE_EQ(u(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(u(1, 1), 0.75);
}

TEST(Transition, RowsNormalizedAndPositive) {
  const auto w = toy_model();
  for (const auto *t : {&w.msn_to_rte, &w.rte_to_mot})
    for (const auto &r : t->rows) {
      EXPECT_NEAR(row_sum(r), 1.0, 1e-12);
      for (double p : r) EXPECT_GT(p, 0.0);
    }
  EXPECT_EQ(w.msn_to_rte.from_size(), w.dictionaries.k_m());
  EXPECT_EQ(w.msn_to_rte.to_size(), w.dictionaries.k_r());
  EXPECT_EQ(w.rte_to_mot.from_size(), w.dictionaries.k_r());
  EXPECT_EQ(w.rte_to_mot.to_size(), w.dictionaries.k_o());
}

TEST(Joint, SumsToOneAndMatchesEnumeration) {
  const auto w = toy_model();
  ASSERT_EQ(w.dictionaries.k_m(), 3u);
  ASSERT_EQ(w.dictionaries.k_r(), 3u);
  ASSERT_EQ(w.dictionaries.k_o(), 3u);
  // brute force from raw counts
  const auto &cm = w.mission_ref.counts;
  const double nm = static_cast<double>(cm[0] + cm[1] + cm[2]) + 3.0;
  double total = 0.0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 3; ++k) {
        const auto &r1 = w.msn_to_rte.counts[i];
        const auto &r2 = w.rte_to_mot.counts[j];
        const double expect = (cm[i] + 1.0) / nm * (r1[j] + 1.0) / (r1[0] + r1[1] + r1[2] + 3.0) * (r2[k] + 1.0) /
                              (r2[0] + r2[1] + r2[2] + 3.0);
        const double p = joint_probability(w, i, j, k);
        EXPECT_NEAR(p, expect, 1e-14);
        total += p;
      }
  EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(Joint, SingleSymbolModelIsCertain) {
  std::vector<SymbolicTriplet> ts{triplet(10, 1, {symbols(1, 1, 1)})};
  const auto w = train_world_model(ts, build_dictionaries(ts), 1.0);
  EXPECT_DOUBLE_EQ(joint_probability(w, 0, 0, 0), 1.0);
  const auto s = symbols(1, 1, 1);
  EXPECT_DOUBLE_EQ(joint_probability(w, s.mission, s.route, s.motion), 1.0);
}

TEST(Joint, UnknownSymbolNamesLevel) {
  const auto w = toy_model();
  const auto s = symbols(0, 0, 0);
  try {
    joint_probability(w, s.mission, s.route, MotionWord{{7, 7, 7}});
    FAIL();
  } catch (const DomainError &e) {
    EXPECT_NE(std::string(e.what()).find("motion"), std::string::npos);
  }
  try {
    joint_probability(w, MissionWord{4, 7, 3}, s.route, s.motion);
    FAIL();
  } catch (const DomainError &e) {
    EXPECT_NE(std::string(e.what()).find("mission"), std::string::npos);
  }
}

TEST(Training, InvariantToDemonstrationOrder) {
  auto ts = toy_corpus();
  const auto a = train_world_model(ts, build_dictionaries(ts), 1.0);
  std::mt19937_64 rng(1);
  std::shuffle(ts.begin(), ts.end(), rng);
  const auto b = train_world_model(ts, build_dictionaries(ts), 1.0);
  EXPECT_EQ(to_json(a), to_json(b));
}

TEST(SwarmSize, SingleObservedPair) {
  std::vector<SymbolicTriplet> ts{triplet(50, 2, {symbols(0, 0, 0), symbols(1, 1, 1)})};
  const auto w = train_world_model(ts, build_dictionaries(ts), 1.0);
  const auto r = infer_swarm_size(w.swarm, 50);
  EXPECT_EQ(r.q, 2);
  EXPECT_FALSE(r.fallback);
}

TEST(SwarmSize, MonotoneTrainingGivesMonotoneInference) {
  SwarmSizeTable t;
  std::mt19937_64 rng(12);
  for (int n = 5; n <= 95; ++n) {
    const int q = 1 + n / 20;
    t.add(n, q, 5);
    t.add(n, std::max(1, q - 1), static_cast<long>(rng() % 3));  // minority noise
  }
  int prev = 0;
  for (const auto &[bin, _] : t.counts) {
    const int q = infer_swarm_size(t, bin * t.bin_width).q;
    EXPECT_GE(q, prev);
    prev = q;
  }
}

TEST(SwarmSize, TiesGoToSmallerQ) {
  SwarmSizeTable t;
  t.add(20, 3, 4);
  t.add(20, 2, 4);
  EXPECT_EQ(infer_swarm_size(t, 25).q, 2);
}

TEST(SwarmSize, UnobservedBinFallsBackAndIsFlagged) {
  SwarmSizeTable t;
  t.add(12, 1);
  t.add(55, 3);
  const auto r = infer_swarm_size(t, 41);
  EXPECT_TRUE(r.fallback);
  EXPECT_EQ(r.bin, 4);
  EXPECT_EQ(r.used_bin, 5);
  EXPECT_EQ(r.q, 3);
}

TEST(Persistence, SaveLoadRoundTrip) {
  const auto w = toy_model(0.5);
  const auto path = (std::filesystem::temp_directory_path() / "uavwm_wm_roundtrip.json").string();
  save_world_model(w, path);
  const auto back = load_world_model(path);
  EXPECT_EQ(to_json(back), to_json(w));
  EXPECT_EQ(back.msn_to_rte.rows, w.msn_to_rte.rows);
  EXPECT_EQ(back.mission_ref.probs, w.mission_ref.probs);
  std::filesystem::remove(path);
}

TEST(Persistence, CorruptFileRejected) {
  const auto path = (std::filesystem::temp_directory_path() / "uavwm_wm_corrupt.json").string();
  std::ofstream(path) << "{\"format\": \"uavwm-world-model\", \"vers";
  EXPECT_THROW(load_world_model(path), DomainError);
  std::filesystem::remove(path);
}

TEST(Persistence, VersionAndMissingFieldErrors) {
  auto j = to_json(toy_model());
  auto v = j;
  v["version"] = 99;
  EXPECT_THROW(world_model_from_json(v), DomainError);
  j.erase("rte_to_mot_counts");
  try {
    world_model_from_json(j);
    FAIL();
  } catch (const DomainError &e) {
    EXPECT_NE(std::string(e.what()).find("rte_to_mot_counts"), std::string::npos);
  }
}
