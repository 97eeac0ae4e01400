#pragma once

// Online abnormality evaluation and the mission -> route -> motion decision
// cascade.
//
// Every candidate action a carries a task cost J_a and induces a word w_a.
// Costs are normalized over the candidate set, Jn_a = (J_a - min) / (mean - min),
// and the likelihood over the level's dictionary is
//   p(w | a) ~ exp(-beta * kappa * (1 + c * Jn_a) * mismatch(w, w_a)),
// i.e. costlier actions concentrate the belief harder on their own word. The
// posterior is likelihood x reference and the abnormality is KL(posterior || reference).
// For a fixed word the abnormality grows monotonically with Jn_a.

#include <algorithm>
#include <array>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uavwm/expert_ga.hpp"
#include "uavwm/potential_field.hpp"
#include "uavwm/world_model.hpp"

namespace uavwm {

enum class Level { mission = 0, route = 1, motion = 2 };

inline std::string to_string(Level l) {
  switch (l) {
    case Level::mission: return "mission";
    case Level::route: return "route";
    case Level::motion: return "motion";
  }
  return "mission";
}

struct InferenceConfig {
  std::array<double, 3> beta{1.0, 1.0, 1.0};
  std::array<double, 3> lambda{1.0, 1.0, 1.0};
  double w_d = 1.0, w_b = 0.5, w_s = 1.0;  // mission: distance, balance, hull overlaps
  double w_L = 1.0, w_T = 1.0, w_C = 1.0;  // route: length, sharp turns, crossings
  double w_x = 1.0, w_o = 1.0, w_u = 1.0;  // motion: tracking, obstacle, neighbor
  double mismatch_scale = 4.0;             // kappa
  double cost_emphasis = 4.0;              // c
  double motion_rep_gain = 1.0;            // extra repulsion of the most avoidance-heavy word
  int max_mission_candidates = 30;
  int max_route_candidates = 50;
  int exhaustive_route_limit = 8;
  std::size_t trace_candidate_limit = 200;
  std::uint64_t seed = 0;

  void validate() const {
    for (double b : beta)
      if (!(b > 0.0)) throw DomainError("beta must be > 0");
    for (double l : lambda)
      if (l < 0.0) throw DomainError("lambda must be >= 0");
    for (double w : {w_d, w_b, w_s, w_L, w_T, w_C, w_x, w_o, w_u, mismatch_scale, cost_emphasis, motion_rep_gain})
      if (w < 0.0) throw DomainError("cost weights must be >= 0");
    if (max_mission_candidates < 1 || max_route_candidates < 1 || exhaustive_route_limit < 1)
      throw DomainError("candidate limits must be >= 1");
  }
};

// ---- belief arithmetic ----

/// Softmax of -beta * J with max-subtraction.
inline std::vector<double> likelihood(std::span<const double> costs, double beta) {
  if (costs.empty()) throw DomainError("likelihood needs at least one candidate");
  const double lo = *std::min_element(costs.begin(), costs.end());
  std::vector<double> p(costs.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < costs.size(); ++i) sum += (p[i] = std::exp(-beta * (costs[i] - lo)));
  for (auto &v : p) v /= sum;
  return p;
}

inline std::vector<double> posterior(std::span<const double> lik, std::span<const double> reference) {
  if (lik.size() != reference.size()) throw DomainError("likelihood and reference have different supports");
  std::vector<double> q(lik.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < lik.size(); ++i) sum += (q[i] = lik[i] * reference[i]);
  if (!(sum > 0.0)) throw DomainError("likelihood and reference have disjoint support");
  for (auto &v : q) v /= sum;
  return q;
}

/// KL(q || p) in nats with 0 log 0 = 0.
inline double abnormality(std::span<const double> q, std::span<const double> p) {
  if (q.size() != p.size()) throw DomainError("belief and reference have different supports");
  double kl = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] <= 0.0) continue;
    if (p[i] <= 0.0) throw DomainError("reference assigns zero probability to a believed symbol");
    kl += q[i] * std::log(q[i] / p[i]);
  }
  return std::max(0.0, kl);
}

inline double total_abnormality(double d_msn, double d_rte, double d_mot, const InferenceConfig &cfg) {
  return cfg.lambda[0] * d_msn + cfg.lambda[1] * d_rte + cfg.lambda[2] * d_mot;
}

/// (J - min) / (mean - min); all zeros when the candidates cost the same.
inline std::vector<double> normalize_costs(std::span<const double> costs) {
  std::vector<double> out(costs.size(), 0.0);
  if (costs.empty()) return out;
  const double lo = *std::min_element(costs.begin(), costs.end());
  const double mean = std::accumulate(costs.begin(), costs.end(), 0.0) / static_cast<double>(costs.size());
  const double spread = mean - lo;
  if (!(spread > 1e-12 * std::max(1.0, std::abs(mean)))) return out;
  for (std::size_t i = 0; i < costs.size(); ++i) out[i] = (costs[i] - lo) / spread;
  return out;
}

/// Abnormality of a candidate from the mismatch between each dictionary word
/// and the candidate's word(s).
inline double candidate_abnormality(std::span<const double> mismatch, std::span<const double> reference, double jn,
                                    double beta, const InferenceConfig &cfg) {
  const double scale = cfg.mismatch_scale * (1.0 + cfg.cost_emphasis * jn);
  std::vector<double> costs(mismatch.size());
  for (std::size_t i = 0; i < mismatch.size(); ++i) costs[i] = scale * mismatch[i];
  return abnormality(posterior(likelihood(costs, beta), reference), reference);
}

namespace detail {

/// Lowest abnormality, then lowest cost, then lowest key.
template <class Key>
std::size_t select_argmin(std::span<const double> delta, std::span<const double> cost, std::span<const Key> keys) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < delta.size(); ++i) {
    const double tol = 1e-12 * std::max(1.0, std::abs(delta[best]));
    if (delta[i] < delta[best] - tol) {
      best = i;
    } else if (std::abs(delta[i] - delta[best]) <= tol) {
      if (cost[i] < cost[best] || (cost[i] == cost[best] && keys[i] < keys[best])) best = i;
    }
  }
  return best;
}

template <class Word, class Mismatch>
std::vector<double> mismatch_row(const std::vector<DictEntry<Word>> &dict, const Word &w, Mismatch m) {
  std::vector<double> row(dict.size());
  for (std::size_t i = 0; i < dict.size(); ++i) row[i] = m(dict[i].word, w);
  return row;
}

template <class Word, class Mismatch>
std::size_t nearest_entry(const std::vector<DictEntry<Word>> &dict, const Word &w, Mismatch m) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < dict.size(); ++i) {
    const double d = m(dict[i].word, w);
    if (d < bd) {
      bd = d;
      best = i;
    }
  }
  return best;
}

}  // namespace detail

struct ScoredCandidate {
  nlohmann::json action;
  double cost = 0.0;
  double delta = 0.0;
};

/// One decision at one level, as written to the decision trace.
struct DecisionRecord {
  double t = 0.0;
  Level level = Level::mission;
  int uav = -1;
  std::vector<ScoredCandidate> candidates;  // possibly truncated to the lowest-abnormality ones
  std::size_t chosen = 0;
  std::size_t evaluated = 0;  // candidates actually scored
};

inline nlohmann::json to_json(const DecisionRecord &r) {
  nlohmann::json c = nlohmann::json::array();
  for (const auto &s : r.candidates) c.push_back({{"action", s.action}, {"J", s.cost}, {"delta", s.delta}});
  nlohmann::json j{{"t", r.t}, {"level", to_string(r.level)}, {"candidates", c}, {"chosen", r.chosen},
                   {"evaluated", r.evaluated}};
  if (r.uav >= 0) j["uav"] = r.uav;
  return j;
}

namespace detail {
template <class Action>
DecisionRecord make_record(Level level, int uav, const std::vector<Action> &actions, std::span<const double> cost,
                           std::span<const double> delta, std::size_t chosen, std::size_t limit,
                           const std::function<nlohmann::json(const Action &)> &to_action) {
  DecisionRecord r;
  r.level = level;
  r.uav = uav;
  r.evaluated = actions.size();
  std::vector<std::size_t> keep(actions.size());
  std::iota(keep.begin(), keep.end(), 0);
  if (keep.size() > limit) {
    std::stable_sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) { return delta[a] < delta[b]; });
    if (std::find(keep.begin(), keep.begin() + static_cast<long>(limit), chosen) == keep.begin() + static_cast<long>(limit))
      keep[limit - 1] = chosen;
    keep.resize(limit);
    std::sort(keep.begin(), keep.end());
  }
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const auto i = keep[k];
    r.candidates.push_back({to_action(actions[i]), cost[i], delta[i]});
    if (i == chosen) r.chosen = k;
  }
  return r;
}
}  // namespace detail

// ---- mission level ----

/// Nearest-neighbor visiting order of `subset` starting from `start`.
inline std::vector<int> nn_order(const MissionInstance &inst, std::span<const int> subset, Vec2 start) {
  std::vector<int> left(subset.begin(), subset.end()), order;
  std::sort(left.begin(), left.end());
  Vec2 cur = start;
  while (!left.empty()) {
    auto it = std::min_element(left.begin(), left.end(), [&](int a, int b) {
      return distance(cur, inst.node(a)) < distance(cur, inst.node(b));
    });
    order.push_back(*it);
    cur = inst.node(*it);
    left.erase(it);
  }
  return order;
}

inline double nn_tour_length(const MissionInstance &inst, std::span<const int> subset) {
  double len = 0.0;
  Vec2 cur = inst.depot;
  for (int c : nn_order(inst, subset, inst.depot)) {
    len += distance(cur, inst.node(c));
    cur = inst.node(c);
  }
  return len + distance(cur, inst.depot);
}

/// Convex hull (counter-clockwise, no collinear points) by monotone chain.
inline std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) { return a.x == b.x && a.y == b.y; }), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Vec2> h(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(h[k - 1] - h[k - 2], pts[i] - h[k - 2]) <= 0) --k;
    h[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross(h[k - 1] - h[k - 2], pts[i - 1] - h[k - 2]) <= 0) --k;
    h[k++] = pts[i - 1];
  }
  h.resize(k - 1);
  return h;
}

namespace detail {
inline bool strictly_inside(Vec2 p, std::span<const Vec2> hull) {
  if (hull.size() < 3) return false;
  for (std::size_t i = 0; i < hull.size(); ++i)
    if (cross(hull[(i + 1) % hull.size()] - hull[i], p - hull[i]) <= 0.0) return false;
  return true;
}

inline std::vector<std::pair<Vec2, Vec2>> hull_edges(std::span<const Vec2> h) {
  std::vector<std::pair<Vec2, Vec2>> e;
  if (h.size() == 2) e.emplace_back(h[0], h[1]);
  if (h.size() >= 3)
    for (std::size_t i = 0; i < h.size(); ++i) e.emplace_back(h[i], h[(i + 1) % h.size()]);
  return e;
}
}  // namespace detail

/// Whether the interiors/edges of two convex hulls properly intersect.
inline bool hulls_overlap(std::span<const Vec2> a, std::span<const Vec2> b) {
  for (const auto &[p1, p2] : detail::hull_edges(a))
    for (const auto &[q1, q2] : detail::hull_edges(b))
      if (segments_cross(p1, p2, q1, q2)) return true;
  for (Vec2 p : a)
    if (detail::strictly_inside(p, b)) return true;
  for (Vec2 p : b)
    if (detail::strictly_inside(p, a)) return true;
  return false;
}

struct MissionCost {
  double dist = 0.0;
  double bal = 0.0;
  double safe = 0.0;
  double total = 0.0;
};

/// J_Msn: nearest-neighbor tour estimates, spread between the longest and
/// shortest estimate, and the number of overlapping subset hulls.
inline MissionCost mission_cost(const MissionInstance &inst, const Allocation &alloc, const InferenceConfig &cfg) {
  MissionCost c;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  std::vector<std::vector<Vec2>> hulls;
  for (const auto &s : alloc) {
    const double l = nn_tour_length(inst, s);
    c.dist += l;
    lo = std::min(lo, l);
    hi = std::max(hi, l);
    std::vector<Vec2> pts;
    for (int id : s) pts.push_back(inst.node(id));
    hulls.push_back(convex_hull(pts));
  }
  c.bal = alloc.empty() ? 0.0 : hi - lo;
  for (std::size_t i = 0; i < hulls.size(); ++i)
    for (std::size_t j = i + 1; j < hulls.size(); ++j) c.safe += hulls_overlap(hulls[i], hulls[j]) ? 1.0 : 0.0;
  c.total = cfg.w_d * c.dist + cfg.w_b * c.bal + cfg.w_s * c.safe;
  return c;
}

/// Subsets sorted, non-empty subsets ordered by their smallest city, empty ones last.
inline Allocation canonical_allocation(Allocation a) {
  for (auto &s : a) std::sort(s.begin(), s.end());
  std::sort(a.begin(), a.end(), [](const std::vector<int> &x, const std::vector<int> &y) {
    if (x.empty() != y.empty()) return y.empty();
    return x < y;
  });
  return a;
}

namespace detail {

inline std::vector<int> kmeans_labels(std::span<const Vec2> pts, int k, std::mt19937_64 &rng) {
  const std::size_t n = pts.size();
  std::vector<Vec2> c;
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  c.push_back(pts[first(rng)]);
  std::vector<double> d2(n);
  while (static_cast<int>(c.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::numeric_limits<double>::infinity();
      for (Vec2 cc : c) d2[i] = std::min(d2[i], norm_sq(pts[i] - cc));
      total += d2[i];
    }
    if (total <= 0.0) break;
    std::uniform_real_distribution<double> u(0.0, total);
    double x = u(rng), acc = 0.0;
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      acc += d2[i];
      if (acc >= x && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
    c.push_back(pts[pick]);
  }
  std::vector<int> label(n, 0);
  for (int it = 0; it < 50; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int bl = 0;
      for (int j = 1; j < static_cast<int>(c.size()); ++j)
        if (norm_sq(pts[i] - c[static_cast<std::size_t>(j)]) < norm_sq(pts[i] - c[static_cast<std::size_t>(bl)])) bl = j;
      changed = changed || bl != label[i];
      label[i] = bl;
    }
    std::vector<Vec2> sum(c.size());
    std::vector<int> cnt(c.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[static_cast<std::size_t>(label[i])] += pts[i];
      ++cnt[static_cast<std::size_t>(label[i])];
    }
    for (std::size_t j = 0; j < c.size(); ++j)
      if (cnt[j]) c[j] = sum[j] / static_cast<double>(cnt[j]);
    if (!changed && it > 0) break;
  }
  return label;
}

}  // namespace detail

/// Restricted candidate set: the current plan and single-city moves out of
/// it, seeded k-means splits, balanced angular sweeps around the depot and a
/// balanced nearest-centroid greedy split. Deduplicated, at most
/// cfg.max_mission_candidates, in generation order.
inline std::vector<Allocation> mission_candidates(const MissionInstance &inst, int q, const Allocation *current,
                                                  const InferenceConfig &cfg) {
  const int n = inst.city_count();
  if (q < 1) throw DomainError("swarm size must be >= 1");
  std::vector<int> ids;
  for (const auto &c : inst.cities) ids.push_back(c.id);
  std::vector<Allocation> out;
  std::set<Allocation> seen;
  const auto limit = static_cast<std::size_t>(cfg.max_mission_candidates);
  auto add = [&](Allocation a) {
    if (out.size() >= limit) return;
    a.resize(static_cast<std::size_t>(q));
    if (n >= q)
      for (const auto &s : a)
        if (s.empty()) return;
    a = canonical_allocation(std::move(a));
    if (seen.insert(a).second) out.push_back(std::move(a));
  };
  if (q == 1 || n == 0) {
    add(Allocation{ids});
    return out;
  }
  if (current) add(*current);

  std::vector<Vec2> pts;
  for (int id : ids) pts.push_back(inst.node(id));
  const int k = std::min(q, n);
  std::mt19937_64 rng(cfg.seed);
  for (int r = 0; r < 8; ++r) {
    const auto label = detail::kmeans_labels(pts, k, rng);
    Allocation a(static_cast<std::size_t>(q));
    for (std::size_t i = 0; i < ids.size(); ++i) a[static_cast<std::size_t>(label[i])].push_back(ids[i]);
    add(a);
  }

  std::vector<int> by_bearing = ids;
  std::sort(by_bearing.begin(), by_bearing.end(), [&](int a, int b) {
    const double ba = bearing(inst.node(a) - inst.depot), bb = bearing(inst.node(b) - inst.depot);
    return ba < bb || (ba == bb && a < b);
  });
  const int starts = std::min(n, 10);
  for (int s = 0; s < starts; ++s) {
    const int offset = s * n / starts;
    Allocation a(static_cast<std::size_t>(q));
    for (int i = 0; i < n; ++i) {
      const int chunk = std::min(k - 1, i * k / n);
      a[static_cast<std::size_t>(chunk)].push_back(by_bearing[static_cast<std::size_t>((i + offset) % n)]);
    }
    add(a);
  }

  {
    // farthest-from-depot cities seed the subsets; the rest join the nearest
    // subset centroid that still has room
    std::vector<int> order = ids;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const double da = distance(inst.node(a), inst.depot), db = distance(inst.node(b), inst.depot);
      return da > db || (da == db && a < b);
    });
    const std::size_t cap = static_cast<std::size_t>((n + k - 1) / k);
    Allocation a(static_cast<std::size_t>(q));
    std::vector<Vec2> centroid;
    for (int c : order) {
      if (static_cast<int>(centroid.size()) < k) {
        bool far_enough = true;
        for (Vec2 cc : centroid)
          if (distance(cc, inst.node(c)) < 1e-9) far_enough = false;
        if (far_enough || centroid.empty()) {
          a[centroid.size()].push_back(c);
          centroid.push_back(inst.node(c));
          continue;
        }
      }
      std::size_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < centroid.size(); ++j) {
        if (a[j].size() >= cap) continue;
        const double d = distance(centroid[j], inst.node(c));
        if (d < bd) {
          bd = d;
          best = j;
        }
      }
      a[best].push_back(c);
      Vec2 sum;
      for (int id : a[best]) sum += inst.node(id);
      centroid[best] = sum / static_cast<double>(a[best].size());
    }
    add(a);
  }

  {
    // hill-climb the cheapest candidate with single-city moves and pairwise swaps
    auto cost = [&](const Allocation &a) { return mission_cost(inst, a, cfg).total; };
    Allocation best = *std::min_element(out.begin(), out.end(), [&](const Allocation &a, const Allocation &b) {
      return cost(a) < cost(b);
    });
    double best_j = cost(best);
    for (bool improved = true; improved;) {
      improved = false;
      Allocation step_best;
      double step_j = best_j;
      auto consider = [&](Allocation a) {
        if (n >= q)
          for (const auto &s : a)
            if (s.empty()) return;
        const double j = cost(a);
        if (j < step_j - 1e-9) {
          step_j = j;
          step_best = std::move(a);
        }
      };
      for (std::size_t from = 0; from < best.size(); ++from)
        for (std::size_t i = 0; i < best[from].size(); ++i)
          for (std::size_t to = 0; to < best.size(); ++to) {
            if (to == from) continue;
            Allocation a = best;
            a[to].push_back(a[from][i]);
            a[from].erase(a[from].begin() + static_cast<long>(i));
            consider(std::move(a));
            if (n > 20 || to < from) continue;
            for (std::size_t j = 0; j < best[to].size(); ++j) {
              Allocation b = best;
              std::swap(b[from][i], b[to][j]);
              consider(std::move(b));
            }
          }
      if (!step_best.empty()) {
        best = canonical_allocation(std::move(step_best));
        best_j = step_j;
        improved = true;
      }
    }
    if (out.size() >= limit) out.pop_back();
    add(best);
  }

  if (current) {
    // move single cities of the current plan to the subset with the nearest centroid
    for (std::size_t from = 0; from < current->size(); ++from)
      for (int c : (*current)[from]) {
        std::size_t best = from;
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t to = 0; to < current->size(); ++to) {
          if (to == from || (*current)[to].empty()) continue;
          Vec2 sum;
          for (int id : (*current)[to]) sum += inst.node(id);
          const double d = distance(sum / static_cast<double>((*current)[to].size()), inst.node(c));
          if (d < bd) {
            bd = d;
            best = to;
          }
        }
        if (best == from) continue;
        Allocation a = *current;
        a[from].erase(std::find(a[from].begin(), a[from].end(), c));
        a[best].push_back(c);
        add(a);
      }
  }
  return out;
}

inline std::vector<MissionWord> induced_mission_words(const MissionInstance &inst, const Allocation &a,
                                                      const QuantizerConfig &qc) {
  std::vector<MissionWord> w;
  for (const auto &s : a)
    if (!s.empty()) w.push_back(mission_word(inst, s, qc));
  return w;
}

struct MissionDecision {
  Allocation allocation;
  std::vector<Allocation> candidates;
  std::vector<double> cost;
  std::vector<double> delta;
  std::size_t chosen = 0;
  int assigned_uav = -1;  // set by assign_new_city

  double chosen_delta() const { return delta.at(chosen); }
  DecisionRecord record(std::size_t limit) const {
    return detail::make_record<Allocation>(Level::mission, -1, candidates, cost, delta, chosen, limit,
                                           [](const Allocation &a) { return nlohmann::json(a); });
  }
};

/// Abnormality of each allocation given its cost. Multi-UAV candidates match a
/// dictionary word through the closest of their per-UAV words.
inline std::vector<double> mission_abnormalities(const MissionInstance &inst, const WorldModel &model,
                                                 const std::vector<Allocation> &cands, std::span<const double> cost,
                                                 const InferenceConfig &cfg) {
  const auto &dict = model.dictionaries;
  const auto &ref = model.mission_reference_for(inst.city_count()).probs;
  const auto jn = normalize_costs(cost);
  std::map<MissionWord, std::vector<double>> cache;
  auto row = [&](const MissionWord &w) -> const std::vector<double> & {
    auto it = cache.find(w);
    if (it == cache.end())
      it = cache
               .emplace(w, detail::mismatch_row(dict.mission, w,
                                                [&](const MissionWord &a, const MissionWord &b) {
                                                  return mission_mismatch(a, b, dict.quantizer);
                                                }))
               .first;
    return it->second;
  };
  std::vector<double> delta;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    std::vector<double> m(dict.k_m(), 1.0);
    for (const auto &w : induced_mission_words(inst, cands[i], dict.quantizer)) {
      const auto &r = row(w);
      for (std::size_t k = 0; k < m.size(); ++k) m[k] = std::min(m[k], r[k]);
    }
    delta.push_back(candidate_abnormality(m, ref, jn[i], cfg.beta[0], cfg));
  }
  return delta;
}

inline MissionDecision decide_mission(const MissionInstance &inst, const WorldModel &model, int q,
                                      const InferenceConfig &cfg, const Allocation *current = nullptr) {
  MissionDecision d;
  d.candidates = mission_candidates(inst, q, current, cfg);
  if (d.candidates.empty()) throw DomainError("no candidate allocation");
  for (const auto &a : d.candidates) d.cost.push_back(mission_cost(inst, a, cfg).total);
  d.delta = mission_abnormalities(inst, model, d.candidates, d.cost, cfg);
  d.chosen = detail::select_argmin<Allocation>(d.delta, d.cost, d.candidates);
  d.allocation = d.candidates[d.chosen];
  return d;
}

/// Q add-candidates for a new city; the chosen candidate index is the UAV.
inline MissionDecision assign_new_city(const MissionInstance &inst, const WorldModel &model, const Allocation &current,
                                       int c_star, const InferenceConfig &cfg) {
  for (const auto &s : current)
    if (std::find(s.begin(), s.end(), c_star) != s.end()) throw DomainError("city is already assigned");
  MissionDecision d;
  for (std::size_t u = 0; u < current.size(); ++u) {
    Allocation a = current;
    a[u].push_back(c_star);
    d.candidates.push_back(std::move(a));
  }
  if (d.candidates.empty()) throw DomainError("no UAV to assign the city to");
  for (const auto &a : d.candidates) d.cost.push_back(mission_cost(inst, a, cfg).total);
  d.delta = mission_abnormalities(inst, model, d.candidates, d.cost, cfg);
  std::vector<int> key(d.candidates.size());
  std::iota(key.begin(), key.end(), 0);
  d.chosen = detail::select_argmin<int>(d.delta, d.cost, key);
  d.allocation = d.candidates[d.chosen];
  d.assigned_uav = static_cast<int>(d.chosen);
  return d;
}

// ---- route level ----

/// Sum over cities of the heading change beyond 90 degrees (radians).
inline double turn_excess(const MissionInstance &inst, std::span<const int> route) {
  double s = 0.0;
  for (std::size_t i = 1; i + 1 < route.size(); ++i) {
    if (route[i] == 0) continue;
    const Vec2 a = inst.node(route[i]) - inst.node(route[i - 1]);
    const Vec2 b = inst.node(route[i + 1]) - inst.node(route[i]);
    if (norm(a) < 1e-12 || norm(b) < 1e-12) continue;
    const double theta = std::abs(wrap_angle(std::atan2(b.y, b.x) - std::atan2(a.y, a.x)));
    s += std::max(0.0, theta - std::numbers::pi / 2.0);
  }
  return s;
}

inline int route_crossings(const MissionInstance &inst, std::span<const int> route, const Routes &others) {
  int n = 0;
  for (std::size_t i = 0; i + 1 < route.size(); ++i)
    for (const auto &o : others)
      for (std::size_t j = 0; j + 1 < o.size(); ++j)
        n += segments_cross(inst.node(route[i]), inst.node(route[i + 1]), inst.node(o[j]), inst.node(o[j + 1])) ? 1 : 0;
  return n;
}

struct RouteCost {
  double length = 0.0;
  double turn = 0.0;
  double cross = 0.0;
  double total = 0.0;
};

inline RouteCost route_cost(const MissionInstance &inst, std::span<const int> route, const Routes &others,
                            const InferenceConfig &cfg) {
  RouteCost c;
  for (std::size_t i = 0; i + 1 < route.size(); ++i) c.length += distance(inst.node(route[i]), inst.node(route[i + 1]));
  c.turn = turn_excess(inst, route);
  c.cross = route_crossings(inst, route, others);
  c.total = cfg.w_L * c.length + cfg.w_T * c.turn + cfg.w_C * c.cross;
  return c;
}

namespace detail {
inline double closed_length(const MissionInstance &inst, const std::vector<int> &r) {
  double l = 0.0;
  for (std::size_t i = 0; i + 1 < r.size(); ++i) l += distance(inst.node(r[i]), inst.node(r[i + 1]));
  return l;
}

inline void two_opt(const MissionInstance &inst, std::vector<int> &r) {
  bool improved = true;
  while (improved) {
    improved = false;
    for (std::size_t i = 1; i + 2 < r.size(); ++i)
      for (std::size_t j = i + 1; j + 1 < r.size(); ++j) {
        const double before = distance(inst.node(r[i - 1]), inst.node(r[i])) + distance(inst.node(r[j]), inst.node(r[j + 1]));
        const double after = distance(inst.node(r[i - 1]), inst.node(r[j])) + distance(inst.node(r[i]), inst.node(r[j + 1]));
        if (after < before - 1e-9) {
          std::reverse(r.begin() + static_cast<long>(i), r.begin() + static_cast<long>(j) + 1);
          improved = true;
        }
      }
  }
}
}  // namespace detail

/// Every order when the subset is small, otherwise 2-opt-improved
/// nearest-neighbor tours from each first city plus their reversals.
inline std::vector<std::vector<int>> route_candidates(const MissionInstance &inst, std::span<const int> subset,
                                                      const InferenceConfig &cfg) {
  std::vector<int> cities(subset.begin(), subset.end());
  std::sort(cities.begin(), cities.end());
  std::vector<std::vector<int>> out;
  auto wrap = [](const std::vector<int> &order) {
    std::vector<int> r{0};
    r.insert(r.end(), order.begin(), order.end());
    r.push_back(0);
    return r;
  };
  if (static_cast<int>(cities.size()) <= cfg.exhaustive_route_limit) {
    do out.push_back(wrap(cities));
    while (std::next_permutation(cities.begin(), cities.end()));
    return out;
  }
  std::set<std::vector<int>> seen;
  auto add = [&](std::vector<int> r) {
    if (out.size() < static_cast<std::size_t>(cfg.max_route_candidates) && seen.insert(r).second) out.push_back(std::move(r));
  };
  std::vector<std::vector<int>> base;
  base.push_back(wrap(nn_order(inst, cities, inst.depot)));
  for (int first : cities) {
    std::vector<int> rest;
    for (int c : cities)
      if (c != first) rest.push_back(c);
    std::vector<int> order{first};
    const auto tail = nn_order(inst, rest, inst.node(first));
    order.insert(order.end(), tail.begin(), tail.end());
    base.push_back(wrap(order));
  }
  for (auto &r : base) {
    detail::two_opt(inst, r);
    add(r);
    std::vector<int> rev(r.rbegin(), r.rend());
    add(rev);
  }
  return out;
}

inline const std::vector<double> &route_reference(const WorldModel &model, const MissionWord &mw) {
  const auto &dict = model.dictionaries;
  const auto i = detail::nearest_entry(dict.mission, mw, [&](const MissionWord &a, const MissionWord &b) {
    return mission_mismatch(a, b, dict.quantizer);
  });
  return model.msn_to_rte.row(i);
}

struct RouteDecision {
  std::vector<int> route;
  std::vector<std::vector<int>> candidates;
  std::vector<double> cost;
  std::vector<double> delta;
  std::size_t chosen = 0;
  int insert_index = -1;  // set by insert_city: position of the new city in `route`
  int uav = -1;

  double chosen_delta() const { return delta.at(chosen); }
  DecisionRecord record(std::size_t limit) const {
    return detail::make_record<std::vector<int>>(Level::route, uav, candidates, cost, delta, chosen, limit,
                                                 [](const std::vector<int> &r) { return nlohmann::json(r); });
  }
};

namespace detail {
inline std::vector<double> route_abnormalities(const MissionInstance &inst, const WorldModel &model,
                                               const std::vector<std::vector<int>> &cands,
                                               std::span<const double> cost, const MissionWord &mw,
                                               const InferenceConfig &cfg) {
  const auto &dict = model.dictionaries;
  const auto &ref = route_reference(model, mw);
  const auto jn = normalize_costs(cost);
  std::map<RouteWord, std::vector<double>> cache;
  std::vector<double> delta;
  delta.reserve(cands.size());
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const auto w = route_word(inst, cands[i], mw, dict.quantizer);
    auto it = cache.find(w);
    if (it == cache.end())
      it = cache
               .emplace(w, mismatch_row(dict.route, w,
                                        [&](const RouteWord &a, const RouteWord &b) {
                                          return route_mismatch(a, b, dict.quantizer);
                                        }))
               .first;
    delta.push_back(candidate_abnormality(it->second, ref, jn[i], cfg.beta[1], cfg));
  }
  return delta;
}
}  // namespace detail

inline RouteDecision decide_route(const MissionInstance &inst, const WorldModel &model, std::span<const int> subset,
                                  const Routes &others, const InferenceConfig &cfg) {
  RouteDecision d;
  d.candidates = route_candidates(inst, subset, cfg);
  if (d.candidates.empty()) throw DomainError("no candidate route");
  for (const auto &r : d.candidates) d.cost.push_back(route_cost(inst, r, others, cfg).total);
  const auto mw = mission_word(inst, subset, model.dictionaries.quantizer);
  d.delta = detail::route_abnormalities(inst, model, d.candidates, d.cost, mw, cfg);
  d.chosen = detail::select_argmin<std::vector<int>>(d.delta, d.cost, d.candidates);
  d.route = d.candidates[d.chosen];
  return d;
}

/// Evaluates every insertion slot at or after `first_slot` (slot j puts the
/// city before route[j]); slot count is route.size() - first_slot.
inline RouteDecision insert_city(const MissionInstance &inst, const WorldModel &model, const std::vector<int> &route,
                                 int c_star, std::size_t first_slot, const Routes &others, const InferenceConfig &cfg) {
  if (route.size() < 2) throw DomainError("route must start and end at the depot");
  first_slot = std::clamp<std::size_t>(first_slot, 1, route.size() - 1);
  RouteDecision d;
  std::vector<int> slots;
  for (std::size_t j = first_slot; j < route.size(); ++j) {
    auto r = route;
    r.insert(r.begin() + static_cast<long>(j), c_star);
    d.candidates.push_back(std::move(r));
    slots.push_back(static_cast<int>(j));
  }
  std::vector<int> subset;
  for (int id : d.candidates.front())
    if (id != 0) subset.push_back(id);
  for (const auto &r : d.candidates) d.cost.push_back(route_cost(inst, r, others, cfg).total);
  const auto mw = mission_word(inst, subset, model.dictionaries.quantizer);
  d.delta = detail::route_abnormalities(inst, model, d.candidates, d.cost, mw, cfg);
  d.chosen = detail::select_argmin<int>(d.delta, d.cost, slots);
  d.route = d.candidates[d.chosen];
  d.insert_index = slots[d.chosen];
  return d;
}

// ---- motion level ----

struct MotionContext {
  Vec2 estimate;            // filtered position
  Vec2 nominal_prediction;  // filter prediction under the nominal field control
  Vec2 target;
  std::vector<Obstacle> obstacles;
  std::vector<Vec2> others;  // predicted positions of the other airborne UAVs
  double dt = 0.1;
};

/// Where a word's letters sit between the most target-seeking (0) and the
/// most avoidance-heavy (1) letter of the codebook, by repulsive ratio.
inline double motion_emphasis(const MotionWord &w, const LetterCodebook &cb) {
  if (w.letters.empty() || cb.size() == 0) return 0.0;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (int k = 0; k < cb.size(); ++k) {
    const double r = cb.centroid_features(k).rho;
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  if (!(hi - lo > 1e-12)) return 0.0;
  double mean = 0.0;
  for (int l : w.letters) mean += cb.centroid_features(l).rho;
  mean /= static_cast<double>(w.letters.size());
  return std::clamp((mean - lo) / (hi - lo), 0.0, 1.0);
}

/// Commanded velocity of a word: attraction is scaled down and repulsion up
/// with the word's avoidance emphasis.
inline Vec2 motion_velocity(double emphasis, const MotionContext &ctx, const FieldConfig &field,
                            const InferenceConfig &cfg) {
  const Vec2 v_att = clamp_norm(attractive_gradient(ctx.estimate, ctx.target, field.k_att) * -field.gain, field.v_max);
  const Vec2 v_rep = repulsive_gradient(ctx.estimate, ctx.obstacles, ctx.others, field) * -field.gain;
  const double a = std::max(0.25, 1.0 - 0.5 * emphasis);
  return clamp_norm(v_att * a + v_rep * (1.0 + cfg.motion_rep_gain * emphasis), field.v_max);
}

/// J_Mot: tracking error between the filter's prediction and the word's
/// reference point, plus squared safety deficits at that point.
inline double motion_cost(Vec2 velocity, const MotionContext &ctx, const FieldConfig &field,
                          const InferenceConfig &cfg) {
  const Vec2 x_ref = ctx.estimate + velocity * ctx.dt;
  auto hinge2 = [](double deficit) { return deficit > 0.0 ? deficit * deficit : 0.0; };
  double j_obs = 0.0, j_uav = 0.0;
  for (const auto &o : ctx.obstacles) j_obs += hinge2(field.d_min_obs - o.surface_distance(x_ref));
  for (Vec2 p : ctx.others) j_uav += hinge2(field.d_min - distance(x_ref, p));
  return cfg.w_x * norm_sq(ctx.nominal_prediction - x_ref) + cfg.w_o * j_obs + cfg.w_u * j_uav;
}

inline std::size_t nearest_route_entry(const WorldModel &model, const RouteWord &rw) {
  const auto &dict = model.dictionaries;
  return detail::nearest_entry(dict.route, rw,
                               [&](const RouteWord &a, const RouteWord &b) { return route_mismatch(a, b, dict.quantizer); });
}

/// Motion dictionary indices seen with the route word (nearest stored one);
/// the whole dictionary when it never co-occurred with anything.
inline std::vector<std::size_t> motion_candidates(const WorldModel &model, const RouteWord &rw) {
  const auto r = nearest_route_entry(model, rw);
  std::vector<std::size_t> out;
  const auto &counts = model.rte_to_mot.counts.at(r);
  for (std::size_t o = 0; o < counts.size(); ++o)
    if (counts[o] > 0) out.push_back(o);
  if (out.empty()) {
    out.resize(model.dictionaries.k_o());
    std::iota(out.begin(), out.end(), 0);
  }
  return out;
}

struct MotionDecision {
  MotionWord word;
  std::size_t word_index = 0;
  Vec2 velocity;
  std::vector<std::size_t> candidates;  // motion dictionary indices
  std::vector<double> cost;
  std::vector<double> delta;
  std::size_t chosen = 0;
  int uav = -1;

  double chosen_delta() const { return delta.at(chosen); }
};

inline DecisionRecord motion_record(const MotionDecision &d, const WorldModel &model, std::size_t limit) {
  return detail::make_record<std::size_t>(Level::motion, d.uav, d.candidates, d.cost, d.delta, d.chosen, limit,
                                          [&](const std::size_t &i) {
                                            return nlohmann::json(model.dictionaries.motion[i].word.letters);
                                          });
}

inline MotionDecision decide_motion(const WorldModel &model, const RouteWord &rw, const MotionContext &ctx,
                                    const FieldConfig &field, const InferenceConfig &cfg) {
  const auto &dict = model.dictionaries;
  if (dict.k_o() == 0) throw DomainError("motion dictionary is empty");
  MotionDecision d;
  d.candidates = motion_candidates(model, rw);
  std::vector<Vec2> vel;
  for (std::size_t i : d.candidates) {
    const Vec2 v = motion_velocity(motion_emphasis(dict.motion[i].word, dict.codebook), ctx, field, cfg);
    vel.push_back(v);
    d.cost.push_back(motion_cost(v, ctx, field, cfg));
  }
  const auto &ref = model.rte_to_mot.row(nearest_route_entry(model, rw));
  const auto jn = normalize_costs(d.cost);
  for (std::size_t k = 0; k < d.candidates.size(); ++k) {
    const auto m = detail::mismatch_row(dict.motion, dict.motion[d.candidates[k]].word,
                                        [](const MotionWord &a, const MotionWord &b) { return motion_mismatch(a, b); });
    d.delta.push_back(candidate_abnormality(m, ref, jn[k], cfg.beta[2], cfg));
  }
  d.chosen = detail::select_argmin<std::size_t>(d.delta, d.cost, d.candidates);
  d.word_index = d.candidates[d.chosen];
  d.word = dict.motion[d.word_index].word;
  d.velocity = vel[d.chosen];
  return d;
}

// ---- the cascade ----

struct PlanState {
  bool initialized = false;
  Allocation allocation;
  Routes routes;
  std::vector<std::size_t> next;  // index in routes[q] of the node being flown to; == size when home
  std::vector<RouteWord> route_words;
  double mission_delta = 0.0;
  std::vector<double> route_delta;

  bool finished(std::size_t q) const { return next.at(q) >= routes.at(q).size(); }
};

struct Observation {
  double t = 0.0;
  const MissionInstance *instance = nullptr;  // known cities and obstacles at t
  std::vector<int> new_cities;                // revealed since the previous step
  std::vector<Vec2> estimates;                // filtered positions, one per UAV
  std::vector<Vec2> predicted;                // filter predictions under the current control
  std::vector<bool> airborne;
  // filter prediction for UAV q under a candidate control
  std::function<Vec2(std::size_t q, Vec2 control)> predict;
};

struct EvaluationCounts {
  std::size_t mission = 0;
  std::size_t route = 0;
  std::size_t motion = 0;
  std::size_t total() const { return mission + route + motion; }
};

struct HierarchicalAction {
  Allocation allocation;
  Routes routes;
  std::vector<std::optional<MotionWord>> motion;  // empty for UAVs that are not flying
  std::vector<Vec2> velocity;
  double delta_mission = 0.0;
  double delta_route = 0.0;
  double delta_motion = 0.0;
  double delta_total = 0.0;
  EvaluationCounts counts;
  std::vector<DecisionRecord> records;
};

/// Landing priority: when `v` and `u` both fly home, `v` does not repel `u`
/// if `u` is nearer the depot (ties to the lower index). Symmetric repulsion
/// around a shared depot otherwise holds both UAVs in a standoff.
inline bool yields_landing(const PlanState &plan, const Observation &obs, const MissionInstance &inst, std::size_t v,
                           std::size_t u) {
  auto homing = [&](std::size_t w) { return !plan.finished(w) && plan.routes[w][plan.next[w]] == 0; };
  if (!homing(u) || !homing(v)) return false;
  const double du = distance(obs.estimates.at(u), inst.depot), dv = distance(obs.estimates.at(v), inst.depot);
  return du < dv || (du == dv && u < v);
}

/// One pass of the cascade. Mission and route decisions are made on the first
/// call and on new-city events only; otherwise the cached plan stands and
/// only motion words are chosen.
inline HierarchicalAction step(const Observation &obs, const WorldModel &model, PlanState &plan, int q,
                               const InferenceConfig &cfg, const FieldConfig &field) {
  if (!obs.instance) throw DomainError("observation carries no instance");
  const auto &inst = *obs.instance;
  const auto uq = static_cast<std::size_t>(q);
  HierarchicalAction act;
  auto stamp = [&](DecisionRecord r) {
    r.t = obs.t;
    act.records.push_back(std::move(r));
  };

  if (!plan.initialized) {
    const auto md = decide_mission(inst, model, q, cfg);
    act.counts.mission += md.candidates.size();
    stamp(md.record(cfg.trace_candidate_limit));
    plan.allocation = md.allocation;
    plan.mission_delta = md.chosen_delta();
    plan.routes.assign(uq, {0, 0});
    plan.route_delta.assign(uq, 0.0);
    plan.route_words.assign(uq, RouteWord{});
    plan.next.assign(uq, 1);
    for (std::size_t u = 0; u < uq; ++u) {
      Routes others(plan.routes.begin(), plan.routes.begin() + static_cast<long>(u));
      if (plan.allocation[u].empty()) continue;
      auto rd = decide_route(inst, model, plan.allocation[u], others, cfg);
      rd.uav = static_cast<int>(u);
      act.counts.route += rd.candidates.size();
      stamp(rd.record(cfg.trace_candidate_limit));
      plan.routes[u] = rd.route;
      plan.route_delta[u] = rd.chosen_delta();
    }
    plan.initialized = true;
  } else {
    for (int c : obs.new_cities) {
      const auto md = assign_new_city(inst, model, plan.allocation, c, cfg);
      act.counts.mission += md.candidates.size();
      stamp(md.record(cfg.trace_candidate_limit));
      plan.allocation = md.allocation;
      plan.mission_delta = md.chosen_delta();
      const auto u = static_cast<std::size_t>(md.assigned_uav);
      Routes others;
      for (std::size_t v = 0; v < uq; ++v)
        if (v != u) others.push_back(plan.routes[v]);
      const std::size_t first = std::min(plan.next[u], plan.routes[u].size() - 1);
      auto rd = insert_city(inst, model, plan.routes[u], c, first, others, cfg);
      rd.uav = static_cast<int>(u);
      act.counts.route += rd.candidates.size();
      stamp(rd.record(cfg.trace_candidate_limit));
      plan.routes[u] = rd.route;
      plan.route_delta[u] = rd.chosen_delta();
      if (plan.next[u] >= plan.routes[u].size() - 1) plan.next[u] = static_cast<std::size_t>(rd.insert_index);
    }
  }
  for (std::size_t u = 0; u < uq; ++u) {
    std::vector<int> subset = plan.allocation[u];
    plan.route_words[u] = route_word(inst, plan.routes[u], mission_word(inst, subset, model.dictionaries.quantizer),
                                     model.dictionaries.quantizer);
  }

  act.motion.assign(uq, std::nullopt);
  act.velocity.assign(uq, Vec2{});
  for (std::size_t u = 0; u < uq; ++u) {
    if (!obs.airborne.at(u) || plan.finished(u)) continue;
    MotionContext ctx;
    ctx.estimate = obs.estimates.at(u);
    ctx.target = inst.node(plan.routes[u][plan.next[u]]);
    ctx.obstacles = inst.obstacles;
    for (std::size_t v = 0; v < uq; ++v)
      if (v != u && obs.airborne.at(v) && !yields_landing(plan, obs, inst, v, u)) ctx.others.push_back(obs.predicted.at(v));
    ctx.dt = field.dt;
    const Vec2 nominal = field_velocity(ctx.estimate, ctx.target, ctx.obstacles, ctx.others, field);
    ctx.nominal_prediction = obs.predict ? obs.predict(u, nominal) : ctx.estimate + nominal * field.dt;
    auto md = decide_motion(model, plan.route_words[u], ctx, field, cfg);
    md.uav = static_cast<int>(u);
    act.counts.motion += md.candidates.size();
    stamp(motion_record(md, model, cfg.trace_candidate_limit));
    act.motion[u] = md.word;
    act.velocity[u] = md.velocity;
    act.delta_motion += md.chosen_delta();
  }
  act.allocation = plan.allocation;
  act.routes = plan.routes;
  act.delta_mission = plan.mission_delta;
  for (double d : plan.route_delta) act.delta_route += d;
  act.delta_total = total_abnormality(act.delta_mission, act.delta_route, act.delta_motion, cfg);
  return act;
}

inline void write_decision_trace(std::ostream &os, std::span<const DecisionRecord> records) {
  for (const auto &r : records) os << to_json(r).dump() << '\n';
}

}  // namespace uavwm
