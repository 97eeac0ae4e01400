#pragma once

// Symbolic abstraction of demonstrations into Mission/Route/Motion words.
//
// Mission and route words are depot-relative, scale-normalized quantized
// signatures so that unseen city layouts land on symbols already present in
// the dictionaries. Motion words are run-length-compressed sequences of
// motion letters, the letters being k-means clusters of per-leg features.

#include <array>
#include <compare>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uavwm/expert_ga.hpp"
#include "uavwm/potential_field.hpp"
#include "uavwm/scenario.hpp"

namespace uavwm {

struct QuantizerConfig {
  int share_bins = 5;
  int sector_bins = 8;
  int ring_bins = 4;
  int nn_bins = 4;
  double orientation_threshold = 0.5;  // |signed area| / |unsigned fan area| needed for cw/ccw
};

struct MissionWord {
  int share_bin = 0;
  int sector_bin = 0;
  int ring_bin = 0;
  auto operator<=>(const MissionWord &) const = default;
};

enum class Orientation { cw, ccw, mixed };

inline std::string to_string(Orientation o) {
  switch (o) {
    case Orientation::cw: return "cw";
    case Orientation::ccw: return "ccw";
    case Orientation::mixed: return "mixed";
  }
  return "mixed";
}

inline Orientation orientation_from_string(const std::string &s) {
  if (s == "cw") return Orientation::cw;
  if (s == "ccw") return Orientation::ccw;
  if (s == "mixed") return Orientation::mixed;
  throw DomainError("unknown orientation '" + s + "'");
}

struct RouteWord {
  MissionWord parent;
  Orientation orientation = Orientation::mixed;
  int nn_bin = 0;
  auto operator<=>(const RouteWord &) const = default;
};

struct MotionWord {
  std::vector<int> letters;
  auto operator<=>(const MotionWord &) const = default;
};

constexpr std::size_t kFeatureDims = 6;
using FeatureArray = std::array<double, kFeatureDims>;

struct FeatureVector {
  double speed = 0.0;         // m/s
  double heading_rate = 0.0;  // rad/s, signed
  double curvature = 0.0;     // 1/m, unsigned
  double rho = 0.0;           // repulsive-energy ratio
  double d_obs = 0.0;         // m
  double d_uav = 0.0;         // m

  FeatureArray as_array() const { return {speed, heading_rate, curvature, rho, d_obs, d_uav}; }
  static FeatureVector from_array(const FeatureArray &a) { return {a[0], a[1], a[2], a[3], a[4], a[5]}; }
};

// ---- mission / route signatures ----

inline MissionWord mission_word(const MissionInstance &inst, std::span<const int> subset, const QuantizerConfig &qc = {}) {
  MissionWord w;
  const int n = std::max(1, inst.city_count());
  const double share = static_cast<double>(subset.size()) / n;
  w.share_bin = std::min(qc.share_bins - 1, static_cast<int>(share * qc.share_bins));
  if (subset.empty()) return w;
  Vec2 centroid;
  for (int c : subset) centroid += inst.node(c);
  centroid = centroid / static_cast<double>(subset.size());
  const Vec2 rel = centroid - inst.depot;
  const double sector = 2.0 * std::numbers::pi / qc.sector_bins;
  w.sector_bin = norm(rel) < 1e-9 ? 0 : static_cast<int>(bearing(rel) / sector) % qc.sector_bins;
  const double scale = 0.5 * std::min(inst.area.width, inst.area.height);
  w.ring_bin = std::min(qc.ring_bins - 1, static_cast<int>(norm(rel) / scale * qc.ring_bins));
  return w;
}

/// Fraction of moves (depot first, return excluded) that go to the nearest
/// still-unvisited city. Vacuously 1 for routes without cities.
inline double nn_fraction(const MissionInstance &inst, std::span<const int> route) {
  std::vector<int> cities;
  for (int id : route)
    if (id != 0) cities.push_back(id);
  if (cities.empty()) return 1.0;
  std::set<int> unvisited(cities.begin(), cities.end());
  Vec2 cur = inst.depot;
  int hits = 0;
  for (int c : cities) {
    double best = std::numeric_limits<double>::infinity();
    for (int u : unvisited) best = std::min(best, distance(cur, inst.node(u)));
    if (distance(cur, inst.node(c)) <= best + 1e-9) ++hits;
    unvisited.erase(c);
    cur = inst.node(c);
  }
  return static_cast<double>(hits) / static_cast<double>(cities.size());
}

/// Winding of the closed tour as seen from the depot, from the ratio of the
/// signed to the unsigned triangle-fan area.
inline Orientation tour_orientation(std::span<const Vec2> closed_tour, Vec2 depot, double threshold) {
  double signed_area = 0.0, abs_area = 0.0;
  for (std::size_t i = 0; i + 1 < closed_tour.size(); ++i) {
    const double a = 0.5 * cross(closed_tour[i] - depot, closed_tour[i + 1] - depot);
    signed_area += a;
    abs_area += std::abs(a);
  }
  if (abs_area <= 1e-9) return Orientation::mixed;
  const double r = signed_area / abs_area;
  if (r > threshold) return Orientation::ccw;
  if (r < -threshold) return Orientation::cw;
  return Orientation::mixed;
}

inline RouteWord route_word(const MissionInstance &inst, std::span<const int> route, const MissionWord &parent,
                            const QuantizerConfig &qc = {}) {
  RouteWord w;
  w.parent = parent;
  std::vector<Vec2> pts{inst.depot};
  for (int id : route)
    if (id != 0) pts.push_back(inst.node(id));
  pts.push_back(inst.depot);
  w.orientation = tour_orientation(pts, inst.depot, qc.orientation_threshold);
  w.nn_bin = std::min(qc.nn_bins - 1, static_cast<int>(nn_fraction(inst, route) * qc.nn_bins));
  return w;
}

// ---- symbol mismatch in [0, 1] ----

inline double mission_mismatch(const MissionWord &a, const MissionWord &b, const QuantizerConfig &qc = {}) {
  const double share = std::abs(a.share_bin - b.share_bin) / std::max(1.0, qc.share_bins - 1.0);
  const int ds = std::abs(a.sector_bin - b.sector_bin) % qc.sector_bins;
  const double sector = std::min(ds, qc.sector_bins - ds) / std::max(1.0, qc.sector_bins / 2.0);
  const double ring = std::abs(a.ring_bin - b.ring_bin) / std::max(1.0, qc.ring_bins - 1.0);
  return (share + sector + ring) / 3.0;
}

inline double route_mismatch(const RouteWord &a, const RouteWord &b, const QuantizerConfig &qc = {}) {
  const double orient = a.orientation == b.orientation ? 0.0 : 1.0;
  const double nn = std::abs(a.nn_bin - b.nn_bin) / std::max(1.0, qc.nn_bins - 1.0);
  return (mission_mismatch(a.parent, b.parent, qc) + orient + nn) / 3.0;
}

/// Normalized Levenshtein distance between letter sequences.
inline double motion_mismatch(const MotionWord &a, const MotionWord &b) {
  const auto &x = a.letters;
  const auto &y = b.letters;
  if (x.empty() && y.empty()) return 0.0;
  std::vector<std::size_t> prev(y.size() + 1), cur(y.size() + 1);
  for (std::size_t j = 0; j <= y.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= x.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= y.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x[i - 1] == y[j - 1] ? 0u : 1u)});
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[y.size()]) / static_cast<double>(std::max(x.size(), y.size()));
}

// ---- motion features ----

/// Features of one leg. `others` are the remaining UAVs' trajectories.
inline FeatureVector motion_features(const Trajectory &segment, Vec2 target, std::span<const Obstacle> obstacles,
                                     std::span<const Trajectory> others, const FieldConfig &cfg) {
  const auto &s = segment.samples;
  if (s.size() < 2 || !(s.back().t > s.front().t)) throw DomainError("motion_features needs a segment of >= 2 samples");
  FeatureVector f;
  const double sentinel = 10.0 * cfg.d0;

  double speed_sum = 0.0;
  for (std::size_t i = 1; i < s.size(); ++i) speed_sum += distance(s[i].position, s[i - 1].position) / (s[i].t - s[i - 1].t);
  f.speed = speed_sum / static_cast<double>(s.size() - 1);

  double rate_sum = 0.0;
  int rate_n = 0;
  double curv_sum = 0.0;
  int curv_n = 0;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    const Vec2 a = s[i].position - s[i - 1].position;
    const Vec2 b = s[i + 1].position - s[i].position;
    if (norm(a) < 1e-12 || norm(b) < 1e-12) continue;
    const double h = 0.5 * (s[i + 1].t - s[i - 1].t);
    rate_sum += wrap_angle(std::atan2(b.y, b.x) - std::atan2(a.y, a.x)) / h;
    ++rate_n;
    // Menger curvature of the three consecutive points
    const double c = distance(s[i + 1].position, s[i - 1].position);
    curv_sum += c > 1e-12 ? 2.0 * std::abs(cross(a, b)) / (norm(a) * norm(b) * c) : 0.0;
    ++curv_n;
  }
  f.heading_rate = rate_n ? rate_sum / rate_n : 0.0;
  f.curvature = curv_n ? curv_sum / curv_n : 0.0;
  f.rho = repulsive_ratio(segment, target, obstacles, others, cfg);

  f.d_obs = obstacles.empty() ? sentinel : std::numeric_limits<double>::infinity();
  f.d_uav = std::numeric_limits<double>::infinity();
  for (const auto &p : s) {
    for (const auto &o : obstacles) f.d_obs = std::min(f.d_obs, std::max(0.0, o.surface_distance(p.position)));
    for (const auto &r : others)
      if (r.active_at(p.t)) f.d_uav = std::min(f.d_uav, distance(p.position, r.position_at(p.t)));
  }
  if (!std::isfinite(f.d_uav)) f.d_uav = sentinel;
  return f;
}

struct Leg {
  std::size_t first = 0;
  std::size_t last = 0;
  int target_node = 0;
};

/// Splits a trajectory at its waypoint marks; legs with fewer than two samples are dropped.
inline std::vector<Leg> route_legs(const Trajectory &tr, std::span<const int> route) {
  std::vector<Leg> legs;
  std::size_t begin = 0;
  for (std::size_t k = 0; k < tr.waypoint_marks.size() && k + 1 < route.size(); ++k) {
    const std::size_t end = tr.waypoint_marks[k];
    if (end > begin) legs.push_back({begin, end, route[k + 1]});
    begin = end;
  }
  return legs;
}

/// Per-UAV per-leg feature vectors of a demonstration.
inline std::vector<std::vector<FeatureVector>> demonstration_features(const ExpertDemonstration &demo,
                                                                      const FieldConfig &cfg) {
  std::vector<std::vector<FeatureVector>> out(demo.routes.size());
  for (std::size_t q = 0; q < demo.routes.size() && q < demo.trajectories.size(); ++q) {
    std::vector<Trajectory> others;
    for (std::size_t r = 0; r < demo.trajectories.size(); ++r)
      if (r != q) others.push_back(demo.trajectories[r]);
    const auto &tr = demo.trajectories[q];
    for (const auto &leg : route_legs(tr, demo.routes[q]))
      out[q].push_back(motion_features(tr.slice(leg.first, leg.last), demo.instance.node(leg.target_node),
                                       demo.instance.obstacles, others, cfg));
  }
  return out;
}

// ---- motion letters ----

struct LetterCodebook {
  FeatureArray means{};
  FeatureArray stds{};
  std::vector<FeatureArray> centroids;  // standardized space

  int size() const { return static_cast<int>(centroids.size()); }

  FeatureArray standardize(const FeatureVector &f) const {
    auto a = f.as_array();
    for (std::size_t d = 0; d < kFeatureDims; ++d) a[d] = (a[d] - means[d]) / stds[d];
    return a;
  }

  /// Centroid `k` in original feature units.
  FeatureVector centroid_features(int k) const {
    FeatureArray a = centroids.at(static_cast<std::size_t>(k));
    for (std::size_t d = 0; d < kFeatureDims; ++d) a[d] = a[d] * stds[d] + means[d];
    return FeatureVector::from_array(a);
  }

  /// Nearest centroid; ties go to the lowest letter id.
  int assign(const FeatureVector &f) const {
    const auto z = standardize(f);
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < size(); ++k) {
      double d = 0.0;
      for (std::size_t i = 0; i < kFeatureDims; ++i) d += std::pow(z[i] - centroids[static_cast<std::size_t>(k)][i], 2);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    return best;
  }
};

namespace detail {
inline double sq_dist(const FeatureArray &a, const FeatureArray &b) {
  double s = 0.0;
  for (std::size_t i = 0; i < kFeatureDims; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}
}  // namespace detail

/// z-score standardization followed by seeded k-means++ with `restarts`
/// restarts; the lowest-inertia solution wins. Letters are renumbered by
/// ascending repulsive ratio so letter 0 is the most target-seeking.
inline LetterCodebook fit_letter_codebook(std::span<const FeatureVector> features, int k, std::uint64_t seed,
                                          int restarts = 50) {
  if (k < 1) throw DomainError("K_L must be >= 1");
  const std::size_t n = features.size();
  LetterCodebook cb;
  for (std::size_t d = 0; d < kFeatureDims; ++d) {
    double m = 0.0;
    for (const auto &f : features) m += f.as_array()[d];
    m = n ? m / static_cast<double>(n) : 0.0;
    double v = 0.0;
    for (const auto &f : features) v += std::pow(f.as_array()[d] - m, 2);
    const double sd = n ? std::sqrt(v / static_cast<double>(n)) : 0.0;
    cb.means[d] = m;
    cb.stds[d] = sd > 1e-12 ? sd : 1.0;
  }
  std::vector<FeatureArray> z;
  z.reserve(n);
  for (const auto &f : features) z.push_back(cb.standardize(f));
  std::set<FeatureArray> distinct(z.begin(), z.end());
  if (static_cast<int>(distinct.size()) < k)
    throw DomainError("only " + std::to_string(distinct.size()) + " distinct feature vectors for K_L=" +
                      std::to_string(k) + "; use a smaller K_L");

  std::mt19937_64 rng(seed);
  double best_inertia = std::numeric_limits<double>::infinity();
  std::vector<FeatureArray> best;
  for (int r = 0; r < restarts; ++r) {
    std::vector<FeatureArray> c;
    std::uniform_int_distribution<std::size_t> first(0, n - 1);
    c.push_back(z[first(rng)]);
    std::vector<double> d2(n);
    while (static_cast<int>(c.size()) < k) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        d2[i] = std::numeric_limits<double>::infinity();
        for (const auto &cc : c) d2[i] = std::min(d2[i], detail::sq_dist(z[i], cc));
        total += d2[i];
      }
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
      c.push_back(z[pick]);
    }
    std::vector<int> label(n, -1);
    double inertia = 0.0;
    for (int it = 0; it < 100; ++it) {
      bool changed = false;
      inertia = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        int bl = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (int j = 0; j < k; ++j) {
          const double dd = detail::sq_dist(z[i], c[static_cast<std::size_t>(j)]);
          if (dd < bd) {
            bd = dd;
            bl = j;
          }
        }
        inertia += bd;
        if (label[i] != bl) {
          label[i] = bl;
          changed = true;
        }
      }
      if (!changed) break;
      std::vector<FeatureArray> sum(static_cast<std::size_t>(k), FeatureArray{});
      std::vector<int> cnt(static_cast<std::size_t>(k), 0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < kFeatureDims; ++d) sum[static_cast<std::size_t>(label[i])][d] += z[i][d];
        ++cnt[static_cast<std::size_t>(label[i])];
      }
      for (int j = 0; j < k; ++j) {
        if (cnt[static_cast<std::size_t>(j)] == 0) {
          // reseed an empty cluster at the point farthest from its centroid
          std::size_t far = 0;
          double fd = -1.0;
          for (std::size_t i = 0; i < n; ++i) {
            const double dd = detail::sq_dist(z[i], c[static_cast<std::size_t>(label[i])]);
            if (dd > fd) {
              fd = dd;
              far = i;
            }
          }
          c[static_cast<std::size_t>(j)] = z[far];
          continue;
        }
        for (std::size_t d = 0; d < kFeatureDims; ++d)
          c[static_cast<std::size_t>(j)][d] = sum[static_cast<std::size_t>(j)][d] / cnt[static_cast<std::size_t>(j)];
      }
    }
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best = c;
    }
  }
  std::sort(best.begin(), best.end(), [](const FeatureArray &a, const FeatureArray &b) {
    if (a[3] != b[3]) return a[3] < b[3];
    return a < b;
  });
  cb.centroids = std::move(best);
  return cb;
}

/// Collapses runs of repeated letters.
inline MotionWord compress(std::span<const int> letters) {
  MotionWord w;
  for (int l : letters)
    if (w.letters.empty() || w.letters.back() != l) w.letters.push_back(l);
  return w;
}

// ---- abstraction and dictionaries ----

struct UavSymbols {
  MissionWord mission;
  RouteWord route;
  MotionWord motion;
};

struct SymbolicTriplet {
  int n_cities = 0;
  int uav_count = 0;
  std::vector<UavSymbols> uavs;  // idle UAVs carry no symbols and are omitted
};

inline SymbolicTriplet abstract_demonstration(const ExpertDemonstration &demo, const LetterCodebook &codebook,
                                              const QuantizerConfig &qc, const FieldConfig &field) {
  SymbolicTriplet t;
  t.n_cities = demo.instance.city_count();
  t.uav_count = static_cast<int>(demo.routes.size());
  const auto features = demonstration_features(demo, field);
  for (std::size_t q = 0; q < demo.routes.size(); ++q) {
    const auto &subset = demo.allocation.at(q);
    if (subset.empty()) continue;
    UavSymbols s;
    s.mission = mission_word(demo.instance, subset, qc);
    s.route = route_word(demo.instance, demo.routes[q], s.mission, qc);
    std::vector<int> letters;
    for (const auto &f : features[q]) letters.push_back(codebook.assign(f));
    s.motion = compress(letters);
    t.uavs.push_back(std::move(s));
  }
  return t;
}

template <class Word>
struct DictEntry {
  Word word;
  long count = 0;
};

struct Dictionaries {
  std::vector<DictEntry<MissionWord>> mission;
  std::vector<DictEntry<RouteWord>> route;
  std::vector<DictEntry<MotionWord>> motion;
  LetterCodebook codebook;
  QuantizerConfig quantizer;

  std::size_t k_m() const { return mission.size(); }
  std::size_t k_r() const { return route.size(); }
  std::size_t k_o() const { return motion.size(); }

  template <class Word>
  static int find(const std::vector<DictEntry<Word>> &entries, const Word &w) {
    auto it = std::lower_bound(entries.begin(), entries.end(), w,
                               [](const DictEntry<Word> &e, const Word &x) { return e.word < x; });
    if (it == entries.end() || it->word != w) return -1;
    return static_cast<int>(it - entries.begin());
  }
  int index_of(const MissionWord &w) const { return find(mission, w); }
  int index_of(const RouteWord &w) const { return find(route, w); }
  int index_of(const MotionWord &w) const { return find(motion, w); }
};

namespace detail {
template <class Word>
std::vector<DictEntry<Word>> to_entries(const std::map<Word, long> &counts) {
  std::vector<DictEntry<Word>> out;
  for (const auto &[w, c] : counts) out.push_back({w, c});
  return out;
}
}  // namespace detail

/// Unique symbols with occurrence counts, sorted by symbol.
inline Dictionaries build_dictionaries(std::span<const SymbolicTriplet> triplets, LetterCodebook codebook = {},
                                       QuantizerConfig qc = {}) {
  std::map<MissionWord, long> m;
  std::map<RouteWord, long> r;
  std::map<MotionWord, long> o;
  for (const auto &t : triplets)
    for (const auto &u : t.uavs) {
      ++m[u.mission];
      ++r[u.route];
      ++o[u.motion];
    }
  Dictionaries d;
  d.mission = detail::to_entries(m);
  d.route = detail::to_entries(r);
  d.motion = detail::to_entries(o);
  d.codebook = std::move(codebook);
  d.quantizer = qc;
  return d;
}

// ---- JSON ----

inline nlohmann::json to_json(const MissionWord &w) { return nlohmann::json::array({w.share_bin, w.sector_bin, w.ring_bin}); }

inline MissionWord mission_word_from_json(const nlohmann::json &j) {
  if (!j.is_array() || j.size() != 3) throw DomainError("mission signature must be [share, sector, ring]");
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

inline nlohmann::json to_json(const RouteWord &w) {
  return {{"parent", to_json(w.parent)}, {"orientation", to_string(w.orientation)}, {"nn_bin", w.nn_bin}};
}

inline RouteWord route_word_from_json(const nlohmann::json &j) {
  return {mission_word_from_json(require(j, "parent")), orientation_from_string(require(j, "orientation").get<std::string>()),
          require(j, "nn_bin").get<int>()};
}

inline nlohmann::json to_json(const LetterCodebook &cb) {
  return {{"means", cb.means}, {"stds", cb.stds}, {"centroids", cb.centroids}};
}

inline LetterCodebook codebook_from_json(const nlohmann::json &j) {
  LetterCodebook cb;
  cb.means = require(j, "means").get<FeatureArray>();
  cb.stds = require(j, "stds").get<FeatureArray>();
  cb.centroids = require(j, "centroids").get<std::vector<FeatureArray>>();
  return cb;
}

inline nlohmann::json to_json(const QuantizerConfig &q) {
  return {{"share_bins", q.share_bins},
          {"sector_bins", q.sector_bins},
          {"ring_bins", q.ring_bins},
          {"nn_bins", q.nn_bins},
          {"orientation_threshold", q.orientation_threshold}};
}

inline QuantizerConfig quantizer_from_json(const nlohmann::json &j) {
  QuantizerConfig q;
  q.share_bins = require(j, "share_bins").get<int>();
  q.sector_bins = require(j, "sector_bins").get<int>();
  q.ring_bins = require(j, "ring_bins").get<int>();
  q.nn_bins = require(j, "nn_bins").get<int>();
  q.orientation_threshold = require(j, "orientation_threshold").get<double>();
  return q;
}

inline nlohmann::json to_json(const Dictionaries &d) {
  nlohmann::json j;
  j["letter_codebook"] = to_json(d.codebook);
  j["quantizer"] = to_json(d.quantizer);
  j["mission"] = nlohmann::json::array();
  for (const auto &e : d.mission) j["mission"].push_back({{"signature", to_json(e.word)}, {"count", e.count}});
  j["route"] = nlohmann::json::array();
  for (const auto &e : d.route) {
    auto r = to_json(e.word);
    r["count"] = e.count;
    j["route"].push_back(r);
  }
  j["motion"] = nlohmann::json::array();
  for (const auto &e : d.motion) j["motion"].push_back({{"letters", e.word.letters}, {"count", e.count}});
  return j;
}

inline Dictionaries dictionaries_from_json(const nlohmann::json &j) {
  Dictionaries d;
  try {
    d.codebook = codebook_from_json(require(j, "letter_codebook"));
    d.quantizer = quantizer_from_json(require(j, "quantizer"));
    for (const auto &e : require(j, "mission"))
      d.mission.push_back({mission_word_from_json(require(e, "signature")), require(e, "count").get<long>()});
    for (const auto &e : require(j, "route")) d.route.push_back({route_word_from_json(e), require(e, "count").get<long>()});
    for (const auto &e : require(j, "motion"))
      d.motion.push_back({MotionWord{require(e, "letters").get<std::vector<int>>()}, require(e, "count").get<long>()});
  } catch (const nlohmann::json::exception &e) {
    throw DomainError(std::string("malformed dictionaries: ") + e.what());
  }
  return d;
}

}  // namespace uavwm
