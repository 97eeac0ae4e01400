#pragma once

// Command-line front end: layered configuration, subcommands, run manifests.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "uavwm/ingest.hpp"
#include "uavwm/runtime.hpp"

namespace uavwm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- logging ----

enum class LogLevel { error = 0, info = 1, debug = 2 };

inline LogLevel log_level_from_env() {
  const char *v = std::getenv("SWARM_LOG");
  if (!v) return LogLevel::info;
  const std::string s(v);
  if (s == "error") return LogLevel::error;
  if (s == "debug") return LogLevel::debug;
  return LogLevel::info;
}

class Logger {
 public:
  explicit Logger(LogLevel level, std::ostream &os = std::cerr) : level_(level), os_(&os) {}
  void error(const std::string &m) const { emit(LogLevel::error, "error", m); }
  void info(const std::string &m) const { emit(LogLevel::info, "info", m); }
  void debug(const std::string &m) const { emit(LogLevel::debug, "debug", m); }

 private:
  void emit(LogLevel l, const char *tag, const std::string &m) const {
    if (static_cast<int>(l) <= static_cast<int>(level_)) *os_ << "[" << tag << "] " << m << '\n';
  }
  LogLevel level_;
  std::ostream *os_;
};

// ---- hashing ----

inline std::string sha256_hex(const std::string &data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

inline std::string sha256_file(const fs::path &p) { return sha256_hex(uavwm::detail::read_file(p)); }

// ---- configuration ----

struct Config {
  std::uint64_t seed = 1;
  OfflineConfig offline;
  SimConfig sim;
  GNGConfig gng;
  double ingest_beta = kDefaultIngestBeta;
  double ingest_alpha = 1.0;
};

namespace detail {

/// Visits every configurable leaf as (dotted path, reference). Sections that
/// the offline and online phases share (field, ga, area) are stored once in
/// the offline config and copied into the simulation config by `finalize`.
template <class F>
void visit_config(Config &c, F &&f) {
  f("seed", c.seed);
  auto &o = c.offline;
  f("area.width", o.area.width);
  f("area.height", o.area.height);
  f("offline.demos", o.demos);
  f("offline.min_cities", o.min_cities);
  f("offline.max_cities", o.max_cities);
  f("offline.min_uavs", o.min_uavs);
  f("offline.max_uavs", o.max_uavs);
  f("offline.max_obstacles", o.max_obstacles);
  f("offline.letters", o.letters);
  f("offline.kmeans_restarts", o.kmeans_restarts);
  f("offline.alpha", o.alpha);
  f("offline.bin_width", o.bin_width);
  f("quantizer.share_bins", o.quantizer.share_bins);
  f("quantizer.sector_bins", o.quantizer.sector_bins);
  f("quantizer.ring_bins", o.quantizer.ring_bins);
  f("quantizer.nn_bins", o.quantizer.nn_bins);
  f("quantizer.orientation_threshold", o.quantizer.orientation_threshold);
  f("ga.population", o.ga.population);
  f("ga.generations", o.ga.generations);
  f("ga.tournament_k", o.ga.tournament_k);
  f("ga.crossover_rate", o.ga.crossover_rate);
  f("ga.mutation_rate", o.ga.mutation_rate);
  f("ga.elitism", o.ga.elitism);
  f("ga.mu_bal", o.ga.mu_bal);
  f("ga.mu_obs", o.ga.mu_obs);
  f("ga.mu_uav", o.ga.mu_uav);
  f("ga.proxy_dt", o.ga.proxy_dt);
  auto &fd = o.field;
  f("field.k_att", fd.k_att);
  f("field.k_rep_obs", fd.k_rep_obs);
  f("field.k_rep_uav", fd.k_rep_uav);
  f("field.d0", fd.d0);
  f("field.gain", fd.gain);
  f("field.dt", fd.dt);
  f("field.v_max", fd.v_max);
  f("field.d_min", fd.d_min);
  f("field.d_min_obs", fd.d_min_obs);
  f("field.distance_floor", fd.distance_floor);
  f("field.capture_radius", fd.capture_radius);
  f("field.step_budget", fd.step_budget);
  f("field.launch_interval", fd.launch_interval);
  auto &in = c.sim.online.inference;
  f("inference.beta", in.beta);
  f("inference.lambda", in.lambda);
  f("inference.w_d", in.w_d);
  f("inference.w_b", in.w_b);
  f("inference.w_s", in.w_s);
  f("inference.w_L", in.w_L);
  f("inference.w_T", in.w_T);
  f("inference.w_C", in.w_C);
  f("inference.w_x", in.w_x);
  f("inference.w_o", in.w_o);
  f("inference.w_u", in.w_u);
  f("inference.mismatch_scale", in.mismatch_scale);
  f("inference.cost_emphasis", in.cost_emphasis);
  f("inference.motion_rep_gain", in.motion_rep_gain);
  f("inference.max_mission_candidates", in.max_mission_candidates);
  f("inference.max_route_candidates", in.max_route_candidates);
  f("inference.exhaustive_route_limit", in.exhaustive_route_limit);
  f("inference.trace_candidate_limit", in.trace_candidate_limit);
  f("inference.seed", in.seed);
  auto &fl = c.sim.online.filter;
  f("filter.kind", fl.kind);
  f("filter.q_pos", fl.q_pos);
  f("filter.q_vel", fl.q_vel);
  f("filter.r", fl.r);
  f("filter.particles", fl.particles);
  f("filter.initial_pos_var", fl.initial_pos_var);
  f("filter.initial_vel_var", fl.initial_vel_var);
  auto &s = c.sim;
  f("sim.n_cities", s.n_cities);
  f("sim.uav_count", s.uav_count);
  f("sim.obstacles", s.obstacles);
  f("sim.n_test", s.n_test);
  f("sim.instance_seed", s.instance_seed);
  f("sim.max_time", s.online.max_time);
  f("sim.noise", s.online.noise);
  f("sim.compare_expert", s.compare_expert);
  f("sim.motion_threshold", s.motion_threshold);
  f("sim.events", s.online.events);
  f("gng.max_nodes", c.gng.max_nodes);
  f("gng.eps_b", c.gng.eps_b);
  f("gng.eps_n", c.gng.eps_n);
  f("gng.lambda_insert", c.gng.lambda_insert);
  f("gng.a_max", c.gng.a_max);
  f("gng.alpha_split", c.gng.alpha_split);
  f("gng.d_decay", c.gng.d_decay);
  f("gng.epochs", c.gng.epochs);
  f("ingest.beta", c.ingest_beta);
  f("ingest.alpha", c.ingest_alpha);
}

inline json::json_pointer pointer(const std::string &dotted) {
  std::string p;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) p += "/" + part;
  return json::json_pointer(p);
}

template <class T>
json leaf_to_json(const T &v) {
  if constexpr (std::is_same_v<T, FilterKind>)
    return v == FilterKind::ekf ? "ekf" : "pf";
  else if constexpr (std::is_same_v<T, std::vector<Event>>) {
    json a = json::array();
    for (const auto &e : v) a.push_back(to_json(e));
    return a;
  } else
    return v;
}

template <class T>
void leaf_from_json(const json &j, T &v, const std::string &path) {
  try {
    if constexpr (std::is_same_v<T, FilterKind>)
      v = filter_kind_from_string(j.get<std::string>());
    else if constexpr (std::is_same_v<T, std::vector<Event>>) {
      v.clear();
      for (const auto &e : j) v.push_back(event_from_json(e));
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!j.is_boolean()) throw DomainError("expected true or false");
      v = j.get<bool>();
    } else if constexpr (std::is_arithmetic_v<T>) {
      if (!j.is_number()) throw DomainError("expected a number");
      if constexpr (std::is_integral_v<T>)
        if (!j.is_number_integer() || (std::is_unsigned_v<T> && j.get<long long>() < 0))
          throw DomainError(std::is_unsigned_v<T> ? "expected a nonnegative integer" : "expected an integer");
      v = j.get<T>();
    } else {
      v = j.get<T>();
    }
  } catch (const DomainError &e) {
    throw DomainError("config key '" + path + "': " + e.what());
  } catch (const json::exception &e) {
    throw DomainError("config key '" + path + "' has the wrong type (" + e.what() + ")");
  }
}

inline void collect_leaves(const json &j, const std::string &prefix, std::vector<std::string> &out) {
  if (j.is_object() && !j.empty()) {
    for (const auto &[k, v] : j.items()) collect_leaves(v, prefix.empty() ? k : prefix + "." + k, out);
  } else {
    out.push_back(prefix);
  }
}
}  // namespace detail

inline json to_json(Config c) {
  json j = json::object();
  detail::visit_config(c, [&](const std::string &path, const auto &v) { j[detail::pointer(path)] = detail::leaf_to_json(v); });
  return j;
}

/// Shared sections copied to where each phase reads them.
inline void finalize(Config &c) {
  c.sim.area = c.offline.area;
  c.sim.online.field = c.offline.field;
  c.sim.expert_ga = c.offline.ga;
  c.offline.seed = c.seed;
  c.sim.online.seed = c.seed;
  c.gng.seed = c.seed;
}

/// Reads a full or partial document over `base`; unknown keys are errors.
inline Config config_from_json(const json &j, Config base = {}) {
  if (!j.is_object()) throw DomainError("configuration must be a JSON object");
  std::set<std::string> known;
  detail::visit_config(base, [&](const std::string &path, auto &) { known.insert(path); });
  std::vector<std::string> leaves;
  detail::collect_leaves(j, "", leaves);
  for (const auto &l : leaves)
    if (!known.contains(l)) throw DomainError("unknown config key '" + l + "'");
  detail::visit_config(base, [&](const std::string &path, auto &v) {
    const auto ptr = detail::pointer(path);
    if (j.contains(ptr)) detail::leaf_from_json(j.at(ptr), v, path);
  });
  finalize(base);
  base.offline.validate();
  base.sim.online.inference.validate();
  base.gng.validate();
  if (base.sim.n_test < 1) throw DomainError("sim.n_test must be >= 1");
  if (!(base.ingest_beta > 0.0)) throw DomainError("ingest.beta must be > 0");
  check_events(base.sim.online.events, base.sim.area);
  return base;
}

/// Desk-scale (ci) and full-scale (paper) settings over the library defaults.
inline json preset(const std::string &name) {
  if (name == "ci")
    return {{"offline", {{"demos", 50}}},
            {"ga", {{"population", 100}, {"generations", 100}}},
            {"sim", {{"n_test", 5}, {"n_cities", 6}, {"uav_count", 2}, {"obstacles", 1}}}};
  if (name == "paper")
    return {{"offline", {{"demos", 5000}}},
            {"ga", {{"population", 200}, {"generations", 500}}},
            {"sim", {{"n_test", 1000}, {"n_cities", 10}, {"uav_count", 3}, {"obstacles", 2}}}};
  throw DomainError("unknown preset '" + name + "' (expected ci or paper)");
}

inline json read_json_file(const std::string &path, const char *what) {
  if (!fs::exists(path)) throw DomainError(std::string(what) + " " + path + " does not exist");
  try {
    return json::parse(uavwm::detail::read_file(path));
  } catch (const json::parse_error &e) {
    throw DomainError(std::string(what) + " " + path + " is not valid JSON (" + e.what() + ")");
  }
}

/// defaults < preset < config file < flags
inline Config resolve_config(const std::string &preset_name, const std::string &config_path, const json &flags) {
  json doc = to_json(Config{});
  doc.merge_patch(preset(preset_name));
  if (!config_path.empty()) {
    const json file = read_json_file(config_path, "config file");
    config_from_json(file);  // reject unknown keys before merging
    doc.merge_patch(file);
  }
  doc.merge_patch(flags);
  return config_from_json(doc);
}

// ---- manifest ----

struct RunManifest {
  std::string subcommand;
  json config;
  json seeds;
  std::vector<std::string> inputs;
  std::vector<fs::path> outputs;
  double wall_seconds = 0.0;
};

inline void write_manifest(const RunManifest &m, const fs::path &path) {
  json outs = json::array();
  for (const auto &p : m.outputs) outs.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
  json j{{"subcommand", m.subcommand}, {"config", m.config},       {"seeds", m.seeds},
         {"inputs", m.inputs},         {"outputs", outs},           {"timings", {{"wall_seconds", m.wall_seconds}}}};
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  uavwm::detail::write_atomically(path, j.dump(1) + "\n");
}

inline json seeds_of(const Config &c) {
  return {{"seed", c.seed}, {"sim.instance_seed", c.sim.instance_seed}, {"inference.seed", c.sim.online.inference.seed}};
}

// ---- subcommand bodies ----

struct Context {
  Config config;
  json config_doc;
  Logger log{LogLevel::info};
  RunManifest manifest;
};

inline void write_text(const fs::path &p, const std::string &content, RunManifest &m) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  uavwm::detail::write_atomically(p, content);
  m.outputs.push_back(p);
}

inline void cmd_gen_instances(Context &ctx, int count, const fs::path &out) {
  const auto &s = ctx.config.sim;
  for (int i = 0; i < count; ++i) {
    const auto inst = suite_instance(s, i);
    std::ostringstream name;
    name << "instance_" << std::setw(5) << std::setfill('0') << i << ".json";
    write_text(out / name.str(), to_json(inst).dump(1) + "\n", ctx.manifest);
  }
  ctx.log.info("wrote " + std::to_string(count) + " instances to " + out.string());
}

inline void cmd_gen_demos(Context &ctx, const fs::path &out) {
  const auto rep = generate_demonstrations(ctx.config.offline, out.string());
  for (const auto &f : rep.failures) ctx.log.error("skipped " + f);
  for (const auto &stem : list_demonstrations(out)) {
    ctx.manifest.outputs.push_back(out / (stem + ".json"));
    ctx.manifest.outputs.push_back(out / (stem + ".csv"));
  }
  json summary{{"generated", rep.generated}, {"reused", rep.reused}, {"failed", rep.failures.size()},
               {"failures", rep.failures}};
  write_text(out / "generation.json", summary.dump(1) + "\n", ctx.manifest);
  ctx.log.info("demonstrations: " + std::to_string(rep.generated) + " generated, " + std::to_string(rep.reused) +
               " reused, " + std::to_string(rep.failures.size()) + " failed");
}

inline void cmd_learn(Context &ctx, const std::string &demos, const fs::path &out) {
  ctx.manifest.inputs.push_back(demos);
  const auto corpus = load_demonstrations(demos);
  auto model = learn_world_model(corpus, learn_config(ctx.config.offline));
  model.meta.seeds = {ctx.config.seed};
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_world_model(model, out.string());
  ctx.manifest.outputs.push_back(out);
  ctx.log.info("model: K_M=" + std::to_string(model.dictionaries.k_m()) + " K_R=" +
               std::to_string(model.dictionaries.k_r()) + " K_O=" + std::to_string(model.dictionaries.k_o()) +
               " from " + std::to_string(corpus.size()) + " demonstrations");
}

inline json aggregate(const std::vector<MetricsReport> &reports) {
  json j;
  const double n = static_cast<double>(reports.size());
  auto mean = [&](auto get) {
    double s = 0.0;
    for (const auto &r : reports) s += get(r);
    return reports.empty() ? 0.0 : s / n;
  };
  j["missions"] = reports.size();
  j["completion_time"] = mean([](const MetricsReport &r) { return r.completion_time; });
  j["total_distance"] = mean([](const MetricsReport &r) { return r.total_distance; });
  j["rmse_ekf"] = mean([](const MetricsReport &r) { return r.rmse_ekf; });
  j["rmse_pf"] = mean([](const MetricsReport &r) { return r.rmse_pf; });
  j["success_rate"] = {
      {"division", mean([](const MetricsReport &r) { return r.success.division ? 1.0 : 0.0; })},
      {"ordering", mean([](const MetricsReport &r) { return r.success.ordering ? 1.0 : 0.0; })},
      {"motion", mean([](const MetricsReport &r) { return r.success.motion ? 1.0 : 0.0; })},
      {"completion", mean([](const MetricsReport &r) { return r.success.completion ? 1.0 : 0.0; })}};
  return j;
}

inline void cmd_simulate(Context &ctx, const std::string &model_path, const std::string &instance_path,
                         const fs::path &out) {
  const auto &cfg = ctx.config;
  WorldModel model;
  if (model_path.empty()) {
    ctx.log.info("no model given: running the offline phase (" + std::to_string(cfg.offline.demos) + " demonstrations)");
    const auto off = run_offline(cfg.offline, (out / "offline" / "demos").string());
    for (const auto &f : off.demos.failures) ctx.log.error("skipped " + f);
    model = off.model;
    save_world_model(model, (out / "offline" / "model.json").string());
    ctx.manifest.outputs.push_back(out / "offline" / "model.json");
  } else {
    ctx.manifest.inputs.push_back(model_path);
    model = load_world_model(model_path);
  }
  std::vector<MissionInstance> instances;
  if (!instance_path.empty()) {
    ctx.manifest.inputs.push_back(instance_path);
    instances.push_back(instance_from_json(read_json_file(instance_path, "instance file")));
  } else {
    for (int i = 0; i < cfg.sim.n_test; ++i) instances.push_back(suite_instance(cfg.sim, i));
  }
  std::vector<MetricsReport> reports;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    std::ostringstream name;
    name << "mission_" << std::setw(5) << std::setfill('0') << i;
    const fs::path dir = out / name.str();
    fs::create_directories(dir);
    OnlineConfig online = cfg.sim.online;
    online.seed = cfg.seed + i;
    OnlineRun run;
    {
      std::ofstream trace(dir / "decisions.jsonl");
      run = run_online(instances[i], model, online, &trace);
    }
    ctx.manifest.outputs.push_back(dir / "decisions.jsonl");
    save_online_run(run, dir);
    ctx.manifest.outputs.push_back(dir / "run.json");
    ctx.manifest.outputs.push_back(dir / "truth.csv");
    std::ostringstream ft;
    write_filter_trace(ft, run.filter_trace);
    write_text(dir / "filter_trace.csv", ft.str(), ctx.manifest);
    MetricsOptions opt;
    opt.motion_threshold = cfg.sim.motion_threshold;
    Routes expert;
    if (cfg.sim.compare_expert) {
      GAConfig ga = cfg.sim.expert_ga;
      ga.seed = cfg.seed + i;
      expert = expert_routes(run.instance, ga, online.field);
      opt.expert = &expert;
    }
    const auto m = compute_metrics(run, model, online.field, opt);
    json mj = to_json(m);
    if (opt.expert) mj["expert_routes"] = expert;
    write_text(dir / "metrics.json", mj.dump(1) + "\n", ctx.manifest);
    ctx.log.info(name.str() + ": completion=" + (m.success.completion ? "true" : "false") +
                 " T=" + std::to_string(m.completion_time) + "s distance=" + std::to_string(m.total_distance) + "m");
    reports.push_back(m);
  }
  write_text(out / "summary.json", aggregate(reports).dump(1) + "\n", ctx.manifest);
}

inline void cmd_ingest(Context &ctx, const std::vector<std::string> &logs, std::uint64_t synthetic_seed,
                       const fs::path &out) {
  std::vector<FlightLog> flights;
  if (logs.empty()) {
    flights.push_back(synthetic_flights(synthetic_seed));
    std::ostringstream csv;
    write_flightlog(csv, flights.back());
    write_text(out / "synthetic_log.csv", csv.str(), ctx.manifest);
  } else {
    for (const auto &l : logs) {
      ctx.manifest.inputs.push_back(l);
      flights.push_back(load_flightlog(l));
    }
  }
  std::vector<std::vector<Vec3>> vels;
  std::vector<Vec3> all;
  std::vector<std::string> names;
  for (const auto &f : flights)
    for (const auto &u : f.uavs) {
      if (!u.gaps.empty()) ctx.log.info("uav " + std::to_string(u.uav_id) + ": " + std::to_string(u.gaps.size()) + " gaps flagged");
      vels.push_back(velocities(u));
      all.insert(all.end(), vels.back().begin(), vels.back().end());
      names.push_back(f.experiment_id + "#" + std::to_string(u.uav_id));
    }
  const auto cb = gng_fit(all, ctx.config.gng);
  std::vector<std::vector<int>> seqs;
  for (const auto &v : vels) seqs.push_back(label_sequence(v, cb));
  const auto t = combined_transition(seqs, cb.size(), ctx.config.ingest_alpha);
  json per = json::array();
  long n = 0, pe = 0, ce = 0;
  bool unseen = false;
  for (std::size_t i = 0; i < vels.size(); ++i) {
    const auto r = predict_and_correct(vels[i], cb, t, ctx.config.ingest_beta);
    json rj = to_json(r);
    rj["sequence"] = names[i];
    rj["predicted"] = r.predicted;
    rj["corrected"] = r.corrected;
    rj["observed"] = r.observed;
    per.push_back(rj);
    n += static_cast<long>(r.n());
    pe += r.predicted_errors;
    ce += r.corrected_errors;
    unseen = unseen || r.unseen_label;
  }
  write_text(out / "codebook.json", to_json(cb).dump(1) + "\n", ctx.manifest);
  write_text(out / "transition.json", to_json(t).dump(1) + "\n", ctx.manifest);
  json report{{"n", n}, {"predicted_errors", pe}, {"corrected_errors", ce}, {"unseen_label", unseen}, {"sequences", per}};
  write_text(out / "correction.json", report.dump(1) + "\n", ctx.manifest);
  ctx.log.info("ingest: " + std::to_string(cb.size()) + " clusters, predicted errors " + std::to_string(pe) +
               ", corrected errors " + std::to_string(ce) + " over " + std::to_string(n) + " steps");
}

inline const std::vector<std::string> &report_columns() {
  static const std::vector<std::string> cols{
      "completion_time",   "total_distance",  "min_inter_uav_distance", "division_similarity", "order_similarity",
      "rmse_ekf",          "rmse_pf",         "rmse_measurement",       "steps_below_d_min",   "multi_airborne_steps",
      "motion_match",      "evaluated_candidates"};
  return cols;
}

/// CSV summary of every metrics.json below `runs`, one row per mission plus a mean row.
inline std::string report_csv(const fs::path &runs) {
  if (!fs::is_directory(runs)) throw DomainError("runs directory " + runs.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto &e : fs::recursive_directory_iterator(runs))
    if (e.path().filename() == "metrics.json") files.push_back(e.path());
  if (files.empty()) throw DomainError("no metrics.json found below " + runs.string());
  std::sort(files.begin(), files.end());
  const auto &cols = report_columns();
  const std::vector<std::string> flags{"division", "ordering", "motion", "completion"};
  std::ostringstream os;
  os.precision(10);
  os << "run";
  for (const auto &c : cols) os << ',' << c;
  for (const auto &f : flags) os << ",success_" << f;
  os << '\n';
  std::vector<double> sum(cols.size() + flags.size(), 0.0);
  std::vector<long> cnt(sum.size(), 0);
  for (const auto &f : files) {
    const json m = read_json_file(f.string(), "metrics file");
    os << fs::relative(f.parent_path(), runs).generic_string();
    for (std::size_t k = 0; k < cols.size(); ++k) {
      os << ',';
      if (!m.contains(cols[k]) || m[cols[k]].is_null()) continue;
      const double v = m[cols[k]].get<double>();
      os << v;
      sum[k] += v;
      ++cnt[k];
    }
    for (std::size_t k = 0; k < flags.size(); ++k) {
      const bool b = m.at("success").at(flags[k]).get<bool>();
      os << ',' << (b ? 1 : 0);
      sum[cols.size() + k] += b;
      ++cnt[cols.size() + k];
    }
    os << '\n';
  }
  os << "mean";
  for (std::size_t k = 0; k < sum.size(); ++k) {
    os << ',';
    if (cnt[k] > 0) os << sum[k] / static_cast<double>(cnt[k]);
  }
  os << '\n';
  return os.str();
}

// ---- dispatch ----

/// Returns 0 on success, 1 on a domain error, 2 on a usage error.
inline int dispatch(int argc, const char *const *argv, std::ostream &sout = std::cout, std::ostream &serr = std::cerr) {
  CLI::App app{"Multi-UAV hierarchical world model: expert demonstrations, learning, online missions, log ingest"};
  app.require_subcommand(1);
  std::string preset_name = "ci", config_path;
  std::optional<std::uint64_t> seed;
  auto common = [&](CLI::App *sub) {
    sub->add_option("--preset", preset_name, "Scale preset: ci (desk scale) or paper (full scale)")->check(CLI::IsMember({"ci", "paper"}));
    sub->add_option("--config", config_path, "JSON config file layered over the preset");
    sub->add_option("--seed", seed, "Master seed");
  };

  std::string out, sim_out = "runs";
  int count = 10;
  std::optional<int> cities, uavs, obstacles, demos_n, letters, n_test, max_nodes;
  std::optional<double> alpha, beta;
  std::optional<std::string> filter;
  bool no_noise = false, no_expert = false;
  std::string demos_dir, model_path, instance_path, runs_dir;
  std::vector<std::string> logs;
  std::uint64_t synthetic_seed = 0;

  auto *gi = app.add_subcommand("gen-instances", "Generate random mission instances");
  common(gi);
  gi->add_option("--count", count, "Number of instances")->check(CLI::PositiveNumber);
  gi->add_option("--cities", cities, "Cities per instance");
  gi->add_option("--uavs", uavs, "UAVs per instance");
  gi->add_option("--obstacles", obstacles, "Obstacles per instance");
  gi->add_option("--out", out, "Output directory")->required();

  auto *gd = app.add_subcommand("gen-demos", "Generate expert demonstrations (resumable)");
  common(gd);
  gd->add_option("--count,--demos", demos_n, "Number of demonstrations M");
  gd->add_option("--out", out, "Output directory")->required();

  auto *le = app.add_subcommand("learn", "Abstract demonstrations and learn the world model");
  common(le);
  le->add_option("--demos", demos_dir, "Demonstration directory")->required();
  le->add_option("--alpha", alpha, "Additive smoothing alpha");
  le->add_option("--letters", letters, "Motion letter count K_L");
  le->add_option("--out", out, "Model file")->required();

  auto *si = app.add_subcommand("simulate", "Run online missions and write metrics and traces");
  common(si);
  si->add_option("--model", model_path, "World model file (omit to run the offline phase first)");
  si->add_option("--instance", instance_path, "Single instance file instead of the generated suite");
  si->add_option("--n-test", n_test, "Number of generated test missions");
  si->add_option("--filter", filter, "State filter used for control")->check(CLI::IsMember({"ekf", "pf"}));
  si->add_flag("--no-noise", no_noise, "Disable process and measurement noise");
  si->add_flag("--no-expert", no_expert, "Skip the expert comparison (similarity and ordering)");
  si->add_option("--out", sim_out, "Output directory")->capture_default_str();

  auto *in = app.add_subcommand("ingest", "Cluster flight-log velocities and run label prediction/correction");
  common(in);
  in->add_option("--log", logs, "Flight log CSV (t,x,y,z,uav_id); repeatable. Omit for the synthetic log");
  in->add_option("--synthetic-seed", synthetic_seed, "Seed of the synthetic log");
  in->add_option("--max-nodes", max_nodes, "GNG node limit");
  in->add_option("--beta", beta, "Correction likelihood sharpness");
  in->add_option("--out", out, "Output directory")->required();

  auto *re = app.add_subcommand("report", "Aggregate metrics.json files into a CSV table");
  re->add_option("--runs", runs_dir, "Directory containing mission outputs")->required();
  re->add_option("--out", out, "CSV file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    sout << app.help();
    if (!app.get_subcommands().empty()) sout << app.get_subcommands().front()->help();
    return 0;
  } catch (const CLI::ParseError &e) {
    if (e.get_exit_code() == 0) {
      sout << e.what() << '\n';
      return 0;
    }
    serr << "usage error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  Logger log(log_level_from_env(), serr);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    auto *sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "report") {
      RunManifest m;
      m.subcommand = name;
      m.inputs = {runs_dir};
      write_text(out, report_csv(runs_dir), m);
      m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      write_manifest(m, fs::path(out + ".manifest.json"));
      log.info("wrote " + out);
      return 0;
    }

    json flags = json::object();
    if (seed) flags["seed"] = *seed;
    if (cities) flags["sim"]["n_cities"] = *cities;
    if (uavs) flags["sim"]["uav_count"] = *uavs;
    if (obstacles) flags["sim"]["obstacles"] = *obstacles;
    if (demos_n) flags["offline"]["demos"] = *demos_n;
    if (alpha) flags["offline"]["alpha"] = *alpha;
    if (letters) flags["offline"]["letters"] = *letters;
    if (n_test) flags["sim"]["n_test"] = *n_test;
    if (filter) flags["filter"]["kind"] = *filter;
    if (no_noise) flags["sim"]["noise"] = false;
    if (no_expert) flags["sim"]["compare_expert"] = false;
    if (max_nodes) flags["gng"]["max_nodes"] = *max_nodes;
    if (beta) flags["ingest"]["beta"] = *beta;

    Context ctx;
    ctx.config = resolve_config(preset_name, config_path, flags);
    ctx.config_doc = to_json(ctx.config);
    ctx.log = log;
    ctx.manifest.subcommand = name;
    ctx.manifest.config = ctx.config_doc;
    ctx.manifest.seeds = seeds_of(ctx.config);
    if (!config_path.empty()) ctx.manifest.inputs.push_back(config_path);
    log.debug("resolved config: " + ctx.config_doc.dump());

    fs::path manifest_path;
    if (name == "gen-instances") {
      cmd_gen_instances(ctx, count, out);
      manifest_path = fs::path(out) / "manifest.json";
    } else if (name == "gen-demos") {
      cmd_gen_demos(ctx, out);
      manifest_path = fs::path(out) / "manifest.json";
    } else if (name == "learn") {
      cmd_learn(ctx, demos_dir, out);
      manifest_path = fs::path(out + ".manifest.json");
    } else if (name == "simulate") {
      cmd_simulate(ctx, model_path, instance_path, sim_out);
      manifest_path = fs::path(sim_out) / "manifest.json";
    } else if (name == "ingest") {
      cmd_ingest(ctx, logs, synthetic_seed, out);
      manifest_path = fs::path(out) / "manifest.json";
    }
    ctx.manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(ctx.manifest, manifest_path);
    return 0;
  } catch (const DomainError &e) {
    log.error(e.what());
    return 1;
  } catch (const fs::filesystem_error &e) {
    log.error(e.what());
    return 1;
  }
}

}  // namespace uavwm::cli
