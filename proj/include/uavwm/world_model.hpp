#pragma once

// Reference distributions, level-to-level transition matrices and the
// swarm-size table estimated from abstracted demonstrations.

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uavwm/symbolic.hpp"

namespace uavwm {

inline constexpr int kWorldModelVersion = 1;
inline constexpr const char *kWorldModelFormat = "uavwm-world-model";

struct ReferenceDistribution {
  std::vector<long> counts;
  std::vector<double> probs;
  double alpha = 1.0;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t i) const { return probs.at(i); }
};

/// (n_i + alpha) / (sum n + alpha K).
inline ReferenceDistribution estimate_reference(std::span<const long> counts, double alpha) {
  if (counts.empty()) throw DomainError("reference distribution needs at least one symbol");
  if (alpha < 0.0) throw DomainError("alpha must be >= 0");
  long total = 0;
  for (long c : counts) {
    if (c < 0) throw DomainError("negative symbol count");
    total += c;
  }
  const double denom = static_cast<double>(total) + alpha * static_cast<double>(counts.size());
  if (denom <= 0.0) throw DomainError("alpha = 0 with all-zero counts leaves the distribution undefined");
  ReferenceDistribution r;
  r.alpha = alpha;
  r.counts.assign(counts.begin(), counts.end());
  for (long c : counts) r.probs.push_back((static_cast<double>(c) + alpha) / denom);
  return r;
}

struct TransitionMatrix {
  std::vector<std::vector<long>> counts;
  std::vector<std::vector<double>> rows;
  double alpha = 1.0;

  std::size_t from_size() const { return rows.size(); }
  std::size_t to_size() const { return rows.empty() ? 0 : rows.front().size(); }
  const std::vector<double> &row(std::size_t i) const { return rows.at(i); }
  double operator()(std::size_t from, std::size_t to) const { return rows.at(from).at(to); }
};

/// Row-wise smoothed conditional frequencies; a row without mass is uniform.
inline TransitionMatrix estimate_transition(const std::vector<std::vector<long>> &pair_counts, double alpha) {
  if (pair_counts.empty() || pair_counts.front().empty()) throw DomainError("transition matrix needs non-empty symbol sets");
  if (alpha < 0.0) throw DomainError("alpha must be >= 0");
  TransitionMatrix t;
  t.alpha = alpha;
  t.counts = pair_counts;
  const std::size_t k = pair_counts.front().size();
  for (const auto &row : pair_counts) {
    if (row.size() != k) throw DomainError("ragged transition count matrix");
    long total = 0;
    for (long c : row) total += c;
    const double denom = static_cast<double>(total) + alpha * static_cast<double>(k);
    std::vector<double> p(k, 1.0 / static_cast<double>(k));
    if (denom > 0.0)
      for (std::size_t j = 0; j < k; ++j) p[j] = (static_cast<double>(row[j]) + alpha) / denom;
    t.rows.push_back(std::move(p));
  }
  return t;
}

struct SwarmSizeTable {
  int bin_width = 10;
  std::map<int, std::map<int, long>> counts;  // city-count bin -> Q -> occurrences

  int bin_of(int n_cities) const { return n_cities / bin_width; }

  void add(int n_cities, int q, long n = 1) { counts[bin_of(n_cities)][q] += n; }

  /// Probability over Q for an observed bin.
  std::map<int, double> row(int bin) const {
    std::map<int, double> p;
    const auto it = counts.find(bin);
    if (it == counts.end()) return p;
    long total = 0;
    for (const auto &[q, c] : it->second) total += c;
    for (const auto &[q, c] : it->second) p[q] = static_cast<double>(c) / static_cast<double>(total);
    return p;
  }
};

struct SwarmSizeInference {
  int q = 1;
  int bin = 0;       // requested bin
  int used_bin = 0;  // bin actually read
  bool fallback = false;
};

/// Argmax Q for the city-count bin, ties to the smaller Q. Unobserved bins
/// fall back to the nearest observed bin (ties to the lower one).
inline SwarmSizeInference infer_swarm_size(const SwarmSizeTable &table, int n_cities) {
  if (table.counts.empty()) throw DomainError("swarm-size table is empty");
  SwarmSizeInference r;
  r.bin = table.bin_of(n_cities);
  r.used_bin = r.bin;
  if (!table.counts.contains(r.bin)) {
    r.fallback = true;
    int best_gap = std::numeric_limits<int>::max();
    for (const auto &[b, _] : table.counts) {
      const int gap = std::abs(b - r.bin);
      if (gap < best_gap) {
        best_gap = gap;
        r.used_bin = b;
      }
    }
  }
  long best = -1;
  for (const auto &[q, c] : table.counts.at(r.used_bin))
    if (c > best) {
      best = c;
      r.q = q;
    }
  return r;
}

struct TrainingMetadata {
  long demonstrations = 0;
  std::vector<std::uint64_t> seeds;
  double alpha = 1.0;
};

struct WorldModel {
  Dictionaries dictionaries;
  ReferenceDistribution mission_ref;
  ReferenceDistribution route_ref;
  ReferenceDistribution motion_ref;
  std::map<int, ReferenceDistribution> mission_ref_by_bin;  // conditioned on the city-count bin
  TransitionMatrix msn_to_rte;
  TransitionMatrix rte_to_mot;
  SwarmSizeTable swarm;
  TrainingMetadata meta;

  /// Mission reference for a city count; the unconditioned one when the bin was never seen.
  const ReferenceDistribution &mission_reference_for(int n_cities) const {
    const auto it = mission_ref_by_bin.find(swarm.bin_of(n_cities));
    return it == mission_ref_by_bin.end() ? mission_ref : it->second;
  }
};

inline WorldModel train_world_model(std::span<const SymbolicTriplet> triplets, Dictionaries dict, double alpha,
                                    int bin_width = 10, std::vector<std::uint64_t> seeds = {}) {
  if (dict.k_m() == 0 || dict.k_r() == 0 || dict.k_o() == 0) throw DomainError("dictionaries are empty");
  if (bin_width < 1) throw DomainError("swarm-size bin width must be >= 1");
  const std::size_t km = dict.k_m(), kr = dict.k_r(), ko = dict.k_o();
  std::vector<long> cm(km, 0), cr(kr, 0), co(ko, 0);
  std::vector<std::vector<long>> mr(km, std::vector<long>(kr, 0)), ro(kr, std::vector<long>(ko, 0));
  std::map<int, std::vector<long>> cm_bin;
  WorldModel w;
  w.swarm.bin_width = bin_width;
  auto idx = [](int i, const char *level) {
    if (i < 0) throw DomainError(std::string("unknown ") + level + " symbol in training triplet");
    return static_cast<std::size_t>(i);
  };
  for (const auto &t : triplets) {
    w.swarm.add(t.n_cities, t.uav_count);
    auto &binned = cm_bin[w.swarm.bin_of(t.n_cities)];
    binned.resize(km, 0);
    for (const auto &u : t.uavs) {
      const auto m = idx(dict.index_of(u.mission), "mission");
      const auto r = idx(dict.index_of(u.route), "route");
      const auto o = idx(dict.index_of(u.motion), "motion");
      ++cm[m];
      ++cr[r];
      ++co[o];
      ++binned[m];
      ++mr[m][r];
      ++ro[r][o];
    }
  }
  w.mission_ref = estimate_reference(cm, alpha);
  w.route_ref = estimate_reference(cr, alpha);
  w.motion_ref = estimate_reference(co, alpha);
  for (const auto &[b, c] : cm_bin) w.mission_ref_by_bin.emplace(b, estimate_reference(c, alpha));
  w.msn_to_rte = estimate_transition(mr, alpha);
  w.rte_to_mot = estimate_transition(ro, alpha);
  w.dictionaries = std::move(dict);
  w.meta = {static_cast<long>(triplets.size()), std::move(seeds), alpha};
  return w;
}

inline double joint_probability(const WorldModel &w, std::size_t msn, std::size_t rte, std::size_t mot) {
  if (msn >= w.mission_ref.size()) throw DomainError("unknown mission symbol index");
  if (rte >= w.msn_to_rte.to_size()) throw DomainError("unknown route symbol index");
  if (mot >= w.rte_to_mot.to_size()) throw DomainError("unknown motion symbol index");
  return w.mission_ref[msn] * w.msn_to_rte(msn, rte) * w.rte_to_mot(rte, mot);
}

inline double joint_probability(const WorldModel &w, const MissionWord &m, const RouteWord &r, const MotionWord &o) {
  const int i = w.dictionaries.index_of(m);
  if (i < 0) throw DomainError("unknown mission symbol");
  const int j = w.dictionaries.index_of(r);
  if (j < 0) throw DomainError("unknown route symbol");
  const int k = w.dictionaries.index_of(o);
  if (k < 0) throw DomainError("unknown motion symbol");
  return joint_probability(w, static_cast<std::size_t>(i), static_cast<std::size_t>(j), static_cast<std::size_t>(k));
}

// ---- persistence ----

inline nlohmann::json to_json(const WorldModel &w) {
  nlohmann::json j;
  j["format"] = kWorldModelFormat;
  j["version"] = kWorldModelVersion;
  j["dictionaries"] = to_json(w.dictionaries);
  j["alpha"] = w.meta.alpha;
  j["training"] = {{"demonstrations", w.meta.demonstrations}, {"seeds", w.meta.seeds}};
  j["mission_counts"] = w.mission_ref.counts;
  j["route_counts"] = w.route_ref.counts;
  j["motion_counts"] = w.motion_ref.counts;
  j["mission_counts_by_bin"] = nlohmann::json::array();
  for (const auto &[b, r] : w.mission_ref_by_bin) j["mission_counts_by_bin"].push_back({{"bin", b}, {"counts", r.counts}});
  j["msn_to_rte_counts"] = w.msn_to_rte.counts;
  j["rte_to_mot_counts"] = w.rte_to_mot.counts;
  nlohmann::json swarm = nlohmann::json::array();
  for (const auto &[b, row] : w.swarm.counts)
    for (const auto &[q, c] : row) swarm.push_back({{"bin", b}, {"q", q}, {"count", c}});
  j["swarm_size"] = {{"bin_width", w.swarm.bin_width}, {"counts", swarm}};
  return j;
}

inline WorldModel world_model_from_json(const nlohmann::json &j) {
  if (!j.is_object()) throw DomainError("world model file is not a JSON object");
  if (require(j, "format") != kWorldModelFormat) throw DomainError("not a world model file");
  const int version = require(j, "version").get<int>();
  if (version != kWorldModelVersion)
    throw DomainError("world model version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kWorldModelVersion) + ")");
  WorldModel w;
  try {
    w.dictionaries = dictionaries_from_json(require(j, "dictionaries"));
    const double alpha = require(j, "alpha").get<double>();
    const auto &tr = require(j, "training");
    w.meta = {require(tr, "demonstrations").get<long>(), require(tr, "seeds").get<std::vector<std::uint64_t>>(), alpha};
    w.mission_ref = estimate_reference(require(j, "mission_counts").get<std::vector<long>>(), alpha);
    w.route_ref = estimate_reference(require(j, "route_counts").get<std::vector<long>>(), alpha);
    w.motion_ref = estimate_reference(require(j, "motion_counts").get<std::vector<long>>(), alpha);
    for (const auto &e : require(j, "mission_counts_by_bin"))
      w.mission_ref_by_bin.emplace(require(e, "bin").get<int>(),
                                   estimate_reference(require(e, "counts").get<std::vector<long>>(), alpha));
    w.msn_to_rte = estimate_transition(require(j, "msn_to_rte_counts").get<std::vector<std::vector<long>>>(), alpha);
    w.rte_to_mot = estimate_transition(require(j, "rte_to_mot_counts").get<std::vector<std::vector<long>>>(), alpha);
    const auto &s = require(j, "swarm_size");
    w.swarm.bin_width = require(s, "bin_width").get<int>();
    for (const auto &e : require(s, "counts"))
      w.swarm.counts[require(e, "bin").get<int>()][require(e, "q").get<int>()] = require(e, "count").get<long>();
  } catch (const nlohmann::json::exception &e) {
    throw DomainError(std::string("malformed world model: ") + e.what());
  }
  if (w.mission_ref.size() != w.dictionaries.k_m() || w.msn_to_rte.from_size() != w.dictionaries.k_m() ||
      w.msn_to_rte.to_size() != w.dictionaries.k_r() || w.rte_to_mot.from_size() != w.dictionaries.k_r() ||
      w.rte_to_mot.to_size() != w.dictionaries.k_o())
    throw DomainError("world model tables do not match the dictionary sizes");
  return w;
}

inline void save_world_model(const WorldModel &w, const std::string &path) {
  std::ofstream os(path);
  if (!os) throw DomainError("cannot write " + path);
  os << to_json(w).dump(1) << '\n';
}

inline WorldModel load_world_model(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw DomainError("cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error &e) {
    throw DomainError(path + ": corrupt world model file (" + e.what() + ")");
  }
  return world_model_from_json(j);
}

}  // namespace uavwm
