#pragma once

// Offline pipeline (demonstrations -> abstraction -> world model), the online
// mission loop (cascade + filters + events) and run metrics.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uavwm/expert_ga.hpp"
#include "uavwm/filters.hpp"
#include "uavwm/inference.hpp"
#include "uavwm/world_model.hpp"

namespace uavwm {

// ---- events ----

enum class EventKind { new_city, new_obstacle };

inline std::string to_string(EventKind k) { return k == EventKind::new_city ? "new_city" : "new_obstacle"; }

struct Event {
  double t = 0.0;
  EventKind kind = EventKind::new_city;
  Vec2 position;
  double radius = 0.0;  // obstacles only
};

inline void check_events(std::span<const Event> events, const Area &area) {
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto &e = events[i];
    if (i > 0 && e.t < events[i - 1].t) throw DomainError("event schedule must be sorted by time");
    if (e.t < 0.0) throw DomainError("event times must be >= 0");
    if (!area.contains(e.position)) throw DomainError("event position lies outside the area");
    if (e.kind == EventKind::new_obstacle && !(e.radius > 0.0)) throw DomainError("obstacle event needs radius > 0");
  }
}

inline nlohmann::json to_json(const Event &e) {
  nlohmann::json j{{"t", e.t}, {"kind", to_string(e.kind)}, {"position", {e.position.x, e.position.y}}};
  if (e.kind == EventKind::new_obstacle) j["radius"] = e.radius;
  return j;
}

inline Event event_from_json(const nlohmann::json &j) {
  Event e;
  try {
    e.t = require(j, "t").get<double>();
    const auto kind = require(j, "kind").get<std::string>();
    if (kind == "new_city")
      e.kind = EventKind::new_city;
    else if (kind == "new_obstacle")
      e.kind = EventKind::new_obstacle;
    else
      throw DomainError("unknown event kind '" + kind + "' (expected new_city or new_obstacle)");
    const auto &p = require(j, "position");
    e.position = {p.at(0).get<double>(), p.at(1).get<double>()};
    if (e.kind == EventKind::new_obstacle) e.radius = require(j, "radius").get<double>();
  } catch (const nlohmann::json::exception &ex) {
    throw DomainError(std::string("malformed event: ") + ex.what());
  }
  return e;
}

// ---- offline phase ----

struct OfflineConfig {
  int demos = 50;
  int min_cities = 4, max_cities = 10;
  int min_uavs = 1, max_uavs = 3;
  int max_obstacles = 2;
  Area area;
  GAConfig ga;
  FieldConfig field;
  QuantizerConfig quantizer;
  int letters = 6;
  int kmeans_restarts = 10;
  double alpha = 1.0;
  int bin_width = 10;
  std::uint64_t seed = 1;

  void validate() const {
    if (demos < 1) throw DomainError("demos must be >= 1");
    if (min_cities < 1 || max_cities < min_cities) throw DomainError("city range is empty");
    if (min_uavs < 1 || max_uavs < min_uavs) throw DomainError("uav range is empty");
    if (max_obstacles < 0) throw DomainError("max_obstacles must be >= 0");
    if (letters < 1) throw DomainError("letters must be >= 1");
    ga.validate();
    field.validate();
  }
};

/// Instance i of the offline corpus; a pure function of (seed, i).
inline MissionInstance offline_instance(const OfflineConfig &cfg, int i) {
  std::mt19937_64 rng(cfg.seed * 1000003ULL + static_cast<std::uint64_t>(i));
  std::uniform_int_distribution<int> n(cfg.min_cities, cfg.max_cities), q(cfg.min_uavs, cfg.max_uavs),
      o(0, cfg.max_obstacles);
  const int nc = n(rng), nq = q(rng), no = o(rng);
  return generate_instance(rng(), nc, nq, cfg.area, no);
}

inline std::uint64_t offline_ga_seed(const OfflineConfig &cfg, int i) {
  return cfg.seed * 7919ULL + static_cast<std::uint64_t>(i);
}

namespace detail {
inline std::string demo_stem(int i) {
  std::ostringstream s;
  s << "demo_" << std::setw(5) << std::setfill('0') << i;
  return s.str();
}

inline void write_atomically(const std::filesystem::path &path, const std::string &content) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw DomainError("cannot write " + tmp);
    os << content;
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DomainError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}
}  // namespace detail

inline void save_demonstration(const ExpertDemonstration &demo, const std::filesystem::path &dir, const std::string &stem) {
  std::filesystem::create_directories(dir);
  nlohmann::json j{{"instance", to_json(demo.instance)}, {"demonstration", to_json(demo)}};
  std::ostringstream csv;
  write_trajectory_csv(csv, demo.trajectories);
  // CSV first: a JSON file marks a complete record
  detail::write_atomically(dir / (stem + ".csv"), csv.str());
  detail::write_atomically(dir / (stem + ".json"), j.dump(1) + "\n");
}

inline ExpertDemonstration load_demonstration(const std::filesystem::path &dir, const std::string &stem) {
  nlohmann::json j;
  const auto path = dir / (stem + ".json");
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::parse_error &e) {
    throw DomainError(path.string() + ": corrupt demonstration (" + e.what() + ")");
  }
  std::istringstream csv(detail::read_file(dir / (stem + ".csv")));
  return demonstration_from_json(require(j, "demonstration"), instance_from_json(require(j, "instance")),
                                 read_trajectory_csv(csv));
}

/// Stems of complete demonstration records in `dir`, sorted.
inline std::vector<std::string> list_demonstrations(const std::filesystem::path &dir) {
  if (!std::filesystem::is_directory(dir)) throw DomainError("demonstration directory " + dir.string() + " does not exist");
  std::vector<std::string> stems;
  for (const auto &e : std::filesystem::directory_iterator(dir)) {
    const auto p = e.path();
    if (p.extension() == ".json" && p.stem().string().rfind("demo_", 0) == 0 &&
        std::filesystem::exists(dir / (p.stem().string() + ".csv")))
      stems.push_back(p.stem().string());
  }
  std::sort(stems.begin(), stems.end());
  return stems;
}

struct DemoGenerationReport {
  std::vector<ExpertDemonstration> demos;
  long generated = 0;
  long reused = 0;
  std::vector<std::string> failures;  // "demo_00012: reason"
};

/// Generates the corpus. With a directory, existing records are reused and new
/// ones written; every returned demo is read back from disk so fresh and
/// resumed runs see identical data.
inline DemoGenerationReport generate_demonstrations(const OfflineConfig &cfg, const std::string &dir = "") {
  cfg.validate();
  DemoGenerationReport rep;
  for (int i = 0; i < cfg.demos; ++i) {
    const auto stem = detail::demo_stem(i);
    if (!dir.empty() && std::filesystem::exists(std::filesystem::path(dir) / (stem + ".json"))) {
      rep.demos.push_back(load_demonstration(dir, stem));
      ++rep.reused;
      continue;
    }
    try {
      GAConfig ga = cfg.ga;
      ga.seed = offline_ga_seed(cfg, i);
      auto demo = evolve(offline_instance(cfg, i), ga, cfg.field);
      demo.instance_ref = stem;
      ++rep.generated;
      if (dir.empty()) {
        rep.demos.push_back(std::move(demo));
      } else {
        save_demonstration(demo, dir, stem);
        rep.demos.push_back(load_demonstration(dir, stem));
      }
    } catch (const DomainError &e) {
      rep.failures.push_back(stem + ": " + e.what());
    }
  }
  return rep;
}

inline std::vector<ExpertDemonstration> load_demonstrations(const std::string &dir) {
  std::vector<ExpertDemonstration> out;
  for (const auto &stem : list_demonstrations(dir)) out.push_back(load_demonstration(dir, stem));
  if (out.empty()) throw DomainError("no demonstrations found in " + dir);
  return out;
}

struct LearnConfig {
  FieldConfig field;
  QuantizerConfig quantizer;
  int letters = 6;
  int kmeans_restarts = 10;
  double alpha = 1.0;
  int bin_width = 10;
  std::uint64_t seed = 1;
};

inline LearnConfig learn_config(const OfflineConfig &c) {
  return {c.field, c.quantizer, c.letters, c.kmeans_restarts, c.alpha, c.bin_width, c.seed};
}

/// Abstraction and model learning. The letter count shrinks to the number of
/// distinct feature vectors when the corpus is tiny.
inline WorldModel learn_world_model(std::span<const ExpertDemonstration> demos, const LearnConfig &cfg) {
  if (demos.empty()) throw DomainError("learning needs at least one demonstration");
  std::vector<FeatureVector> features;
  for (const auto &d : demos)
    for (const auto &per : demonstration_features(d, cfg.field)) features.insert(features.end(), per.begin(), per.end());
  if (features.empty()) throw DomainError("demonstrations contain no flown legs");
  std::set<FeatureArray> distinct;
  for (const auto &f : features) distinct.insert(f.as_array());
  const int k = std::min(cfg.letters, static_cast<int>(distinct.size()));
  const auto codebook = fit_letter_codebook(features, k, cfg.seed, cfg.kmeans_restarts);
  std::vector<SymbolicTriplet> triplets;
  for (const auto &d : demos) triplets.push_back(abstract_demonstration(d, codebook, cfg.quantizer, cfg.field));
  std::vector<std::uint64_t> seeds{cfg.seed};
  auto model = train_world_model(triplets, build_dictionaries(triplets, codebook, cfg.quantizer), cfg.alpha,
                                 cfg.bin_width, seeds);
  return model;
}

struct OfflineResult {
  WorldModel model;
  DemoGenerationReport demos;
};

inline OfflineResult run_offline(const OfflineConfig &cfg, const std::string &demos_dir = "") {
  OfflineResult r;
  r.demos = generate_demonstrations(cfg, demos_dir);
  r.model = learn_world_model(r.demos.demos, learn_config(cfg));
  r.model.meta.seeds = {cfg.seed};
  return r;
}

// ---- online phase ----

struct OnlineConfig {
  FieldConfig field;
  InferenceConfig inference;
  FilterConfig filter;
  std::vector<Event> events;
  double max_time = 3600.0;  // s
  bool noise = true;
  std::uint64_t seed = 0;
};

struct StepLog {
  double t = 0.0;
  double delta_mission = 0.0, delta_route = 0.0, delta_motion = 0.0, delta_total = 0.0;
  std::size_t mission_candidates = 0, route_candidates = 0, motion_candidates = 0;  // counted by the cascade
  std::size_t logged_evaluated = 0;  // sum of `evaluated` over the step's decision records
  double min_separation = std::numeric_limits<double>::infinity();  // among airborne UAVs
  int airborne = 0;
};

struct Visit {
  int city = 0;
  int uav = 0;
  double t = 0.0;
};

struct OnlineRun {
  MissionInstance instance;  // with every revealed city and obstacle
  Allocation allocation;
  Routes routes;
  std::vector<Trajectory> truth;
  std::vector<Visit> visits;
  std::vector<std::optional<double>> return_time;
  std::vector<StepLog> steps;
  std::vector<std::vector<std::optional<MotionWord>>> motion;  // per step, per UAV
  std::vector<FilterTraceRow> filter_trace;  // configured filter, airborne steps only
  double mission_delta = 0.0;
  double sq_err_ekf = 0.0, sq_err_pf = 0.0, sq_err_meas = 0.0;
  long err_samples = 0;
  long ga_calls = 0;
  long pf_weight_resets = 0;
  bool timed_out = false;
};

namespace detail {
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = a * 0x9e3779b97f4a7c15ULL + b + 0x632be59bd9b4e019ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Simulates one mission. Control is computed from the configured filter's
/// estimates; the other filter runs in shadow so both RMSEs are available.
/// Visits are judged on the true positions. Decision records are streamed to
/// `trace` as they are made, so an aborted run leaves a complete prefix.
inline OnlineRun run_online(const MissionInstance &start, const WorldModel &model, const OnlineConfig &cfg,
                            std::ostream *trace = nullptr) {
  check_instance(start);
  cfg.field.validate();
  cfg.inference.validate();
  check_events(cfg.events, start.area);
  const long ga_before = ga_invocation_counter().load();

  OnlineRun run;
  run.instance = start;
  auto &inst = run.instance;
  const int q = inst.uav_count;
  const auto uq = static_cast<std::size_t>(q);
  const double dt = cfg.field.dt;

  std::mt19937_64 rng(detail::mix_seed(cfg.seed, 0x5eed));
  std::normal_distribution<double> proc(0.0, cfg.noise ? std::sqrt(cfg.filter.q_pos) : 0.0);
  std::normal_distribution<double> meas(0.0, cfg.noise ? std::sqrt(cfg.filter.r) : 0.0);

  FilterConfig primary_cfg = cfg.filter, shadow_cfg = cfg.filter;
  shadow_cfg.kind = cfg.filter.kind == FilterKind::ekf ? FilterKind::pf : FilterKind::ekf;
  std::vector<UavFilter> primary, shadow;
  for (std::size_t u = 0; u < uq; ++u) {
    primary.emplace_back(inst.depot, primary_cfg, detail::mix_seed(cfg.seed, 2 * u + 1));
    shadow.emplace_back(inst.depot, shadow_cfg, detail::mix_seed(cfg.seed, 2 * u + 2));
  }
  std::vector<Vec2> truth(uq, inst.depot), control(uq, Vec2{});
  std::vector<bool> launched(uq, false);
  run.truth.assign(uq, Trajectory{});
  run.return_time.assign(uq, std::nullopt);

  PlanState plan;
  std::size_t next_event = 0;
  auto finished = [&](std::size_t u) { return plan.initialized && plan.finished(u); };

  try {
    for (long k = 0;; ++k) {
      const double t = static_cast<double>(k) * dt;
      Observation obs;
      obs.t = t;
      obs.instance = &inst;
      while (next_event < cfg.events.size() && cfg.events[next_event].t <= t + 1e-9) {
        const auto &e = cfg.events[next_event++];
        if (e.kind == EventKind::new_city) {
          inst.cities.push_back({inst.city_count() + 1, e.position});
          obs.new_cities.push_back(inst.city_count());
        } else {
          inst.obstacles.push_back({e.position, e.radius});
        }
      }
      // an uninitialized plan sees every city at its first decision
      if (!plan.initialized) obs.new_cities.clear();

      std::vector<bool> was_finished(uq);
      for (std::size_t u = 0; u < uq; ++u) was_finished[u] = finished(u);
      obs.airborne.assign(uq, false);
      for (std::size_t u = 0; u < uq; ++u) {
        launched[u] = launched[u] || t + 1e-9 >= launch_time(u, cfg.field);
        obs.airborne[u] = launched[u] && !was_finished[u];
        obs.estimates.push_back(obs.airborne[u] ? primary[u].position() : inst.depot);
        obs.predicted.push_back(obs.airborne[u] ? primary[u].predict_position(control[u], dt) : inst.depot);
      }
      // a UAV re-tasked after landing takes off again at once
      obs.predict = [&](std::size_t u, Vec2 c) { return primary[u].predict_position(c, dt); };

      auto act = step(obs, model, plan, q, cfg.inference, cfg.field);
      for (std::size_t u = 0; u < uq; ++u)
        if (was_finished[u] && !plan.finished(u)) {
          run.return_time[u].reset();
          auto &marks = run.truth[u].waypoint_marks;
          if (!marks.empty()) marks.pop_back();  // the depot is no longer the end of this leg
        }
      if (trace)
        for (const auto &r : act.records) *trace << to_json(r).dump() << '\n';

      StepLog log;
      log.t = t;
      log.delta_mission = act.delta_mission;
      log.delta_route = act.delta_route;
      log.delta_motion = act.delta_motion;
      log.delta_total = act.delta_total;
      log.mission_candidates = act.counts.mission;
      log.route_candidates = act.counts.route;
      log.motion_candidates = act.counts.motion;
      for (const auto &r : act.records) log.logged_evaluated += r.evaluated;
      run.motion.push_back(act.motion);

      // advance the true dynamics of flying UAVs
      std::vector<std::size_t> flying;
      for (std::size_t u = 0; u < uq; ++u)
        if (launched[u] && !plan.finished(u)) flying.push_back(u);
      for (std::size_t u : flying) {
        auto &tr = run.truth[u];
        if (tr.samples.empty() || was_finished[u]) tr.samples.push_back({t, truth[u], {}});
        const Vec2 v = act.motion[u] ? act.velocity[u]
                                     : field_velocity(primary[u].position(), inst.node(plan.routes[u][plan.next[u]]),
                                                      inst.obstacles, {}, cfg.field);
        control[u] = v;
        truth[u] = truth[u] + v * dt + Vec2{proc(rng), proc(rng)};
        const Vec2 z = truth[u] + Vec2{meas(rng), meas(rng)};
        primary[u].step(control[u], dt, z);
        shadow[u].step(control[u], dt, z);
        tr.samples.push_back({t + dt, truth[u], v});
        const Vec2 ekf = cfg.filter.kind == FilterKind::ekf ? primary[u].position() : shadow[u].position();
        const Vec2 pf = cfg.filter.kind == FilterKind::pf ? primary[u].position() : shadow[u].position();
        run.sq_err_ekf += norm_sq(ekf - truth[u]);
        run.sq_err_pf += norm_sq(pf - truth[u]);
        run.sq_err_meas += norm_sq(z - truth[u]);
        ++run.err_samples;
        run.filter_trace.push_back({t + dt, static_cast<int>(u) + 1, truth[u], z, primary[u].position(),
                                    primary[u].covariance_trace()});
        const int node = plan.routes[u][plan.next[u]];
        if (distance(truth[u], inst.node(node)) <= cfg.field.capture_radius) {
          tr.waypoint_marks.push_back(tr.samples.size() - 1);
          if (node != 0) run.visits.push_back({node, static_cast<int>(u), t + dt});
          ++plan.next[u];
          if (plan.finished(u)) {
            run.return_time[u] = t + dt;
            truth[u] = inst.depot;  // landed
          }
        }
      }
      for (std::size_t a = 0; a < flying.size(); ++a)
        for (std::size_t b = a + 1; b < flying.size(); ++b)
          log.min_separation = std::min(log.min_separation, distance(truth[flying[a]], truth[flying[b]]));
      log.airborne = static_cast<int>(flying.size());
      run.steps.push_back(log);

      bool all_home = true;
      for (std::size_t u = 0; u < uq; ++u) all_home = all_home && plan.finished(u);
      if (all_home && next_event >= cfg.events.size()) break;
      if (t + dt > cfg.max_time) {
        run.timed_out = true;
        break;
      }
    }
  } catch (...) {
    if (trace) trace->flush();
    throw;
  }
  if (trace) trace->flush();
  run.allocation = plan.allocation;
  run.routes = plan.routes;
  run.mission_delta = plan.mission_delta;
  for (const auto &f : primary) run.pf_weight_resets += f.weight_resets();
  for (const auto &f : shadow) run.pf_weight_resets += f.weight_resets();
  run.ga_calls = ga_invocation_counter().load() - ga_before;
  if (run.ga_calls != 0) throw std::logic_error("the online loop invoked the expert optimizer");
  return run;
}

// ---- metrics ----

struct SimilarityMetrics {
  double division = 0.0;
  double order = 0.0;
  std::vector<int> matching;  // matching[q] = expert UAV matched to plan UAV q
};

namespace detail {
/// 1 - normalized Kendall distance between two orders of the same items.
inline double kendall_similarity(const std::vector<int> &a, const std::vector<int> &b) {
  if (a.size() < 2) return 1.0;
  std::map<int, std::size_t> pos;
  for (std::size_t i = 0; i < b.size(); ++i) pos[b[i]] = i;
  long discordant = 0, total = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      ++total;
      discordant += pos.at(a[i]) > pos.at(a[j]);
    }
  return 1.0 - static_cast<double>(discordant) / static_cast<double>(total);
}

inline std::vector<int> cities_of(const std::vector<int> &route) {
  std::vector<int> out;
  for (int c : route)
    if (c != 0) out.push_back(c);
  return out;
}

/// Order of `route`'s cities restricted to those also present in `other`.
inline std::vector<int> restricted(const std::vector<int> &route, const std::vector<int> &other) {
  const auto o = cities_of(other);
  std::set<int> keep(o.begin(), o.end());
  std::vector<int> out;
  for (int c : cities_of(route))
    if (keep.contains(c)) out.push_back(c);
  return out;
}
}  // namespace detail

/// Division: fraction of cities assigned identically under the best UAV label
/// matching (all permutations). Order: mean over matched route pairs of the
/// Kendall similarity on shared cities, taking the better of the two directions.
inline SimilarityMetrics similarity_metrics(const Routes &plan, const Routes &expert) {
  const std::size_t q = std::max(plan.size(), expert.size());
  if (q > 8) throw DomainError("similarity label matching supports at most 8 UAVs");
  Routes a = plan, b = expert;
  a.resize(q);
  b.resize(q);
  std::vector<std::set<int>> sa(q), sb(q);
  std::set<int> all;
  for (std::size_t u = 0; u < q; ++u) {
    for (int c : detail::cities_of(a[u])) sa[u].insert(c), all.insert(c);
    for (int c : detail::cities_of(b[u])) sb[u].insert(c), all.insert(c);
  }
  std::vector<int> perm(q);
  std::iota(perm.begin(), perm.end(), 0);
  long best = -1;
  std::vector<int> best_perm = perm;
  do {
    long agree = 0;
    for (std::size_t u = 0; u < q; ++u)
      for (int c : sa[u]) agree += sb[static_cast<std::size_t>(perm[u])].contains(c);
    if (agree > best) {
      best = agree;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  SimilarityMetrics m;
  m.matching = best_perm;
  m.division = all.empty() ? 1.0 : static_cast<double>(best) / static_cast<double>(all.size());
  double sum = 0.0;
  int pairs = 0;
  for (std::size_t u = 0; u < q; ++u) {
    const auto &other = b[static_cast<std::size_t>(best_perm[u])];
    const auto x = detail::restricted(a[u], other);
    if (x.empty()) continue;
    auto y = detail::restricted(other, a[u]);
    const double fwd = detail::kendall_similarity(x, y);
    std::reverse(y.begin(), y.end());
    sum += std::max(fwd, detail::kendall_similarity(x, y));
    ++pairs;
  }
  m.order = pairs == 0 ? 1.0 : sum / pairs;
  return m;
}

/// Same visiting order up to direction for every matched UAV pair, compared
/// on the cities both routes contain so division errors are not counted twice.
inline bool same_order_up_to_reversal(const Routes &plan, const Routes &expert, std::span<const int> matching) {
  for (std::size_t u = 0; u < plan.size(); ++u) {
    const auto m = static_cast<std::size_t>(matching[u]);
    const std::vector<int> other = m < expert.size() ? expert[m] : std::vector<int>{};
    const auto x = detail::restricted(plan[u], other);
    auto y = detail::restricted(other, plan[u]);
    if (x == y) continue;
    std::reverse(y.begin(), y.end());
    if (x != y) return false;
  }
  return true;
}

struct SuccessFlags {
  bool division = false;
  bool ordering = false;
  bool motion = false;
  bool completion = false;
};

struct MetricsReport {
  double completion_time = 0.0;  // last depot return, s
  double total_distance = 0.0;   // m
  std::optional<double> min_inter_uav_distance;  // empty when no two UAVs were airborne together
  long steps = 0;
  long steps_below_d_min = 0;
  long multi_airborne_steps = 0;
  std::optional<double> division_similarity, order_similarity;
  double rmse_ekf = 0.0, rmse_pf = 0.0, rmse_measurement = 0.0;
  double motion_match = 0.0;
  std::size_t evaluated_candidates = 0;
  bool accounting_consistent = true;  // cascade counts equal logged `evaluated` at every step
  long ga_calls_online = 0;
  bool plan_feasible = false;
  bool timed_out = false;
  std::vector<double> trace_t, trace_mission, trace_route, trace_motion, trace_total;
  SuccessFlags success;
};

struct MetricsOptions {
  double motion_threshold = 0.5;
  const Routes *expert = nullptr;
};

/// Observed motion word per UAV, abstracted from the true trajectories.
inline std::vector<std::optional<MotionWord>> observed_motion_words(const OnlineRun &run, const WorldModel &model,
                                                                    const FieldConfig &field) {
  ExpertDemonstration d;
  d.instance = run.instance;
  d.routes = run.routes;
  d.allocation = run.allocation;
  d.trajectories = run.truth;
  const auto features = demonstration_features(d, field);
  std::vector<std::optional<MotionWord>> out(run.routes.size());
  for (std::size_t u = 0; u < run.routes.size(); ++u) {
    if (features[u].empty()) continue;
    std::vector<int> letters;
    for (const auto &f : features[u]) letters.push_back(model.dictionaries.codebook.assign(f));
    out[u] = compress(letters);
  }
  return out;
}

inline MetricsReport compute_metrics(const OnlineRun &run, const WorldModel &model, const FieldConfig &field,
                                     const MetricsOptions &opt = {}) {
  MetricsReport m;
  m.steps = static_cast<long>(run.steps.size());
  m.timed_out = run.timed_out;
  m.ga_calls_online = run.ga_calls;
  for (const auto &t : run.truth) m.total_distance += t.path_length();
  double min_sep = std::numeric_limits<double>::infinity();
  for (const auto &s : run.steps) {
    m.trace_t.push_back(s.t);
    m.trace_mission.push_back(s.delta_mission);
    m.trace_route.push_back(s.delta_route);
    m.trace_motion.push_back(s.delta_motion);
    m.trace_total.push_back(s.delta_total);
    const std::size_t counted = s.mission_candidates + s.route_candidates + s.motion_candidates;
    m.evaluated_candidates += counted;
    m.accounting_consistent = m.accounting_consistent && counted == s.logged_evaluated;
    if (s.airborne >= 2) {
      ++m.multi_airborne_steps;
      min_sep = std::min(min_sep, s.min_separation);
      m.steps_below_d_min += s.min_separation < field.d_min;
    }
  }
  if (std::isfinite(min_sep)) m.min_inter_uav_distance = min_sep;
  for (const auto &r : run.return_time)
    if (r) m.completion_time = std::max(m.completion_time, *r);
  if (run.err_samples > 0) {
    const auto n = static_cast<double>(run.err_samples);
    m.rmse_ekf = std::sqrt(run.sq_err_ekf / n);
    m.rmse_pf = std::sqrt(run.sq_err_pf / n);
    m.rmse_measurement = std::sqrt(run.sq_err_meas / n);
  }
  m.plan_feasible = validate_solution(run.instance, run.allocation, run.routes).ok;

  // division: every city in exactly one route, with a finite mission abnormality
  std::map<int, int> seen;
  for (const auto &r : run.routes)
    for (int c : detail::cities_of(r)) ++seen[c];
  bool once = static_cast<int>(seen.size()) == run.instance.city_count();
  for (const auto &[c, k] : seen) once = once && k == 1;
  m.success.division = once && std::isfinite(run.mission_delta);

  std::set<int> visited;
  for (const auto &v : run.visits) visited.insert(v.city);
  bool home = !run.timed_out;
  for (const auto &r : run.return_time) home = home && r.has_value();
  m.success.completion = home && static_cast<int>(visited.size()) == run.instance.city_count();

  if (opt.expert) {
    const auto s = similarity_metrics(run.routes, *opt.expert);
    m.division_similarity = s.division;
    m.order_similarity = s.order;
    m.success.ordering = same_order_up_to_reversal(run.routes, *opt.expert, s.matching);
  }

  const auto observed = observed_motion_words(run, model, field);
  long predictions = 0, matches = 0;
  for (const auto &per_step : run.motion)
    for (std::size_t u = 0; u < per_step.size(); ++u) {
      if (!per_step[u]) continue;
      ++predictions;
      matches += observed[u] && *per_step[u] == *observed[u];
    }
  m.motion_match = predictions == 0 ? 0.0 : static_cast<double>(matches) / static_cast<double>(predictions);
  m.success.motion = predictions > 0 && m.motion_match >= opt.motion_threshold;
  return m;
}

inline nlohmann::json to_json(const MetricsReport &m) {
  auto opt = [](const std::optional<double> &v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"completion_time", m.completion_time},
          {"total_distance", m.total_distance},
          {"min_inter_uav_distance", opt(m.min_inter_uav_distance)},
          {"steps", m.steps},
          {"steps_below_d_min", m.steps_below_d_min},
          {"multi_airborne_steps", m.multi_airborne_steps},
          {"division_similarity", opt(m.division_similarity)},
          {"order_similarity", opt(m.order_similarity)},
          {"rmse_ekf", m.rmse_ekf},
          {"rmse_pf", m.rmse_pf},
          {"rmse_measurement", m.rmse_measurement},
          {"motion_match", m.motion_match},
          {"evaluated_candidates", m.evaluated_candidates},
          {"accounting_consistent", m.accounting_consistent},
          {"ga_calls_online", m.ga_calls_online},
          {"plan_feasible", m.plan_feasible},
          {"timed_out", m.timed_out},
          {"abnormality",
           {{"t", m.trace_t},
            {"mission", m.trace_mission},
            {"route", m.trace_route},
            {"motion", m.trace_motion},
            {"total", m.trace_total}}},
          {"success",
           {{"division", m.success.division},
            {"ordering", m.success.ordering},
            {"motion", m.success.motion},
            {"completion", m.success.completion}}}};
}

// ---- run files ----

inline nlohmann::json to_json(const OnlineRun &run) {
  nlohmann::json steps = nlohmann::json::array(), visits = nlohmann::json::array(), motion = nlohmann::json::array(),
                 ret = nlohmann::json::array(), marks = nlohmann::json::array();
  for (const auto &s : run.steps)
    steps.push_back({s.t, s.delta_mission, s.delta_route, s.delta_motion, s.delta_total, s.mission_candidates,
                     s.route_candidates, s.motion_candidates, s.logged_evaluated,
                     std::isfinite(s.min_separation) ? nlohmann::json(s.min_separation) : nlohmann::json(nullptr),
                     s.airborne});
  for (const auto &v : run.visits) visits.push_back({v.city, v.uav, v.t});
  for (const auto &per : run.motion) {
    nlohmann::json row = nlohmann::json::array();
    for (const auto &w : per) row.push_back(w ? nlohmann::json(w->letters) : nlohmann::json(nullptr));
    motion.push_back(row);
  }
  for (const auto &r : run.return_time) ret.push_back(r ? nlohmann::json(*r) : nlohmann::json(nullptr));
  for (const auto &t : run.truth) marks.push_back(t.waypoint_marks);
  return {{"instance", to_json(run.instance)},
          {"allocation", run.allocation},
          {"routes", run.routes},
          {"visits", visits},
          {"return_time", ret},
          {"waypoint_marks", marks},
          {"steps", steps},
          {"motion", motion},
          {"mission_delta", run.mission_delta},
          {"sq_err", {run.sq_err_ekf, run.sq_err_pf, run.sq_err_meas, run.err_samples}},
          {"ga_calls", run.ga_calls},
          {"pf_weight_resets", run.pf_weight_resets},
          {"timed_out", run.timed_out}};
}

inline OnlineRun online_run_from_json(const nlohmann::json &j, std::vector<Trajectory> truth) {
  OnlineRun run;
  try {
    run.instance = instance_from_json(require(j, "instance"));
    run.allocation = require(j, "allocation").get<Allocation>();
    run.routes = require(j, "routes").get<Routes>();
    for (const auto &v : require(j, "visits")) run.visits.push_back({v.at(0).get<int>(), v.at(1).get<int>(), v.at(2).get<double>()});
    for (const auto &r : require(j, "return_time"))
      run.return_time.push_back(r.is_null() ? std::nullopt : std::optional<double>(r.get<double>()));
    const auto marks = require(j, "waypoint_marks").get<std::vector<std::vector<std::size_t>>>();
    truth.resize(marks.size());
    for (std::size_t u = 0; u < marks.size(); ++u) truth[u].waypoint_marks = marks[u];
    run.truth = std::move(truth);
    for (const auto &s : require(j, "steps")) {
      StepLog l;
      l.t = s.at(0).get<double>();
      l.delta_mission = s.at(1).get<double>();
      l.delta_route = s.at(2).get<double>();
      l.delta_motion = s.at(3).get<double>();
      l.delta_total = s.at(4).get<double>();
      l.mission_candidates = s.at(5).get<std::size_t>();
      l.route_candidates = s.at(6).get<std::size_t>();
      l.motion_candidates = s.at(7).get<std::size_t>();
      l.logged_evaluated = s.at(8).get<std::size_t>();
      if (!s.at(9).is_null()) l.min_separation = s.at(9).get<double>();
      l.airborne = s.at(10).get<int>();
      run.steps.push_back(l);
    }
    for (const auto &row : require(j, "motion")) {
      std::vector<std::optional<MotionWord>> per;
      for (const auto &w : row) per.push_back(w.is_null() ? std::nullopt : std::optional<MotionWord>(MotionWord{w.get<std::vector<int>>()}));
      run.motion.push_back(std::move(per));
    }
    run.mission_delta = require(j, "mission_delta").get<double>();
    const auto &e = require(j, "sq_err");
    run.sq_err_ekf = e.at(0).get<double>();
    run.sq_err_pf = e.at(1).get<double>();
    run.sq_err_meas = e.at(2).get<double>();
    run.err_samples = e.at(3).get<long>();
    run.ga_calls = require(j, "ga_calls").get<long>();
    run.pf_weight_resets = require(j, "pf_weight_resets").get<long>();
    run.timed_out = require(j, "timed_out").get<bool>();
  } catch (const nlohmann::json::exception &ex) {
    throw DomainError(std::string("malformed run file: ") + ex.what());
  }
  return run;
}

/// Writes run.json and truth.csv; metrics can be recomputed from these alone.
inline void save_online_run(const OnlineRun &run, const std::filesystem::path &dir) {
  std::filesystem::create_directories(dir);
  detail::write_atomically(dir / "run.json", to_json(run).dump() + "\n");
  std::ostringstream csv;
  write_trajectory_csv(csv, run.truth);
  detail::write_atomically(dir / "truth.csv", csv.str());
}

inline OnlineRun load_online_run(const std::filesystem::path &dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(dir / "run.json"));
  } catch (const nlohmann::json::parse_error &e) {
    throw DomainError((dir / "run.json").string() + ": corrupt run file (" + e.what() + ")");
  }
  std::istringstream csv(detail::read_file(dir / "truth.csv"));
  return online_run_from_json(j, read_trajectory_csv(csv));
}

// ---- scenario suites ----

struct SimConfig {
  int n_cities = 6;
  int uav_count = 2;
  int obstacles = 1;
  Area area;
  int n_test = 1000;
  std::uint64_t instance_seed = 100;
  OnlineConfig online;
  bool compare_expert = true;
  GAConfig expert_ga;  // used after the online run, only for similarity metrics
  double motion_threshold = 0.5;
};

inline MissionInstance suite_instance(const SimConfig &cfg, int i) {
  return generate_instance(cfg.instance_seed + static_cast<std::uint64_t>(i), cfg.n_cities, cfg.uav_count, cfg.area,
                           cfg.obstacles);
}

/// Expert plan for the final instance of a run, computed outside the online loop.
inline Routes expert_routes(const MissionInstance &inst, const GAConfig &ga, const FieldConfig &field) {
  return evolve(inst, ga, field).routes;
}

}  // namespace uavwm
