#pragma once

// Flight-log ingestion: velocity clustering with Growing Neural Gas, label
// sequences, the combined transition matrix and Bayesian label correction.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "uavwm/inference.hpp"
#include "uavwm/world_model.hpp"

namespace uavwm {

using Vec3 = Eigen::Vector3d;

struct LogSample {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
};

struct UavLog {
  int uav_id = 0;
  std::vector<LogSample> samples;
  std::vector<std::size_t> gaps;  // sample i starts after a gap (> gap_factor x median step)
};

struct FlightLog {
  std::string experiment_id;
  std::vector<UavLog> uavs;
};

namespace detail {
inline std::vector<std::string> split_csv(const std::string &line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    cell.erase(0, cell.find_first_not_of(" \t\r"));
    cell.erase(cell.find_last_not_of(" \t\r") + 1);
    out.push_back(cell);
  }
  return out;
}
}  // namespace detail

inline void flag_gaps(UavLog &log, double gap_factor = 3.0) {
  log.gaps.clear();
  if (log.samples.size() < 3) return;
  std::vector<double> steps;
  for (std::size_t i = 1; i < log.samples.size(); ++i) steps.push_back(log.samples[i].t - log.samples[i - 1].t);
  auto sorted = steps;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 2), sorted.end());
  const double median = sorted[sorted.size() / 2];
  for (std::size_t i = 0; i < steps.size(); ++i)
    if (steps[i] > gap_factor * median) log.gaps.push_back(i + 1);
}

/// CSV with header columns t,x,y,z,uav_id in any order. Rows of one UAV must
/// have strictly increasing timestamps.
inline FlightLog parse_flightlog(std::istream &is, const std::string &experiment_id = "") {
  std::string line;
  if (!std::getline(is, line) || line.find_first_not_of(" \t\r") == std::string::npos)
    throw DomainError("flight log is empty");
  const auto header = detail::split_csv(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char *need : {"t", "x", "y", "z", "uav_id"})
    if (!col.contains(need)) throw DomainError(std::string("flight log is missing column '") + need + "'");
  std::map<int, UavLog> by_uav;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() < header.size()) throw DomainError("flight log row " + std::to_string(row) + " has too few columns");
    LogSample s;
    int id = 0;
    try {
      s.t = std::stod(cells[col["t"]]);
      s.p = {std::stod(cells[col["x"]]), std::stod(cells[col["y"]]), std::stod(cells[col["z"]])};
      id = std::stoi(cells[col["uav_id"]]);
    } catch (const std::exception &) {
      throw DomainError("flight log row " + std::to_string(row) + " is not numeric");
    }
    auto &u = by_uav[id];
    u.uav_id = id;
    if (!u.samples.empty() && !(s.t > u.samples.back().t))
      throw DomainError("flight log timestamps not strictly increasing for uav " + std::to_string(id) + " at row " +
                        std::to_string(row));
    u.samples.push_back(s);
  }
  if (by_uav.empty()) throw DomainError("flight log has no samples");
  FlightLog log;
  log.experiment_id = experiment_id;
  for (auto &[id, u] : by_uav) {
    flag_gaps(u);
    log.uavs.push_back(std::move(u));
  }
  return log;
}

inline FlightLog load_flightlog(const std::string &path) {
  std::ifstream is(path);
  if (!is) throw DomainError("cannot open flight log " + path);
  return parse_flightlog(is, path);
}

inline void write_flightlog(std::ostream &os, const FlightLog &log) {
  os << "t,x,y,z,uav_id\n";
  os.precision(10);
  for (const auto &u : log.uavs)
    for (const auto &s : u.samples) os << s.t << ',' << s.p.x() << ',' << s.p.y() << ',' << s.p.z() << ',' << u.uav_id << '\n';
}

/// Linear resampling onto a uniform grid starting at the first timestamp.
inline UavLog resample(const UavLog &log, double dt) {
  if (!(dt > 0.0)) throw DomainError("resampling step must be > 0");
  UavLog out;
  out.uav_id = log.uav_id;
  if (log.samples.empty()) return out;
  std::size_t i = 0;
  for (double t = log.samples.front().t; t <= log.samples.back().t + 1e-12; t += dt) {
    while (i + 1 < log.samples.size() && log.samples[i + 1].t < t) ++i;
    if (i + 1 >= log.samples.size()) {
      out.samples.push_back({t, log.samples.back().p});
      continue;
    }
    const auto &a = log.samples[i];
    const auto &b = log.samples[i + 1];
    const double w = std::clamp((t - a.t) / (b.t - a.t), 0.0, 1.0);
    out.samples.push_back({t, a.p + w * (b.p - a.p)});
  }
  return out;
}

/// Central differences, one-sided at the ends.
inline std::vector<Vec3> velocities(const UavLog &log) {
  const auto &s = log.samples;
  std::vector<Vec3> v;
  if (s.size() < 2) return v;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const std::size_t a = i == 0 ? 0 : i - 1;
    const std::size_t b = i + 1 == s.size() ? i : i + 1;
    v.push_back((s[b].p - s[a].p) / (s[b].t - s[a].t));
  }
  return v;
}

// ---- Growing Neural Gas ----

struct GNGConfig {
  int max_nodes = 10;
  double eps_b = 0.05;
  double eps_n = 0.006;
  int lambda_insert = 100;
  int a_max = 50;
  double alpha_split = 0.5;
  double d_decay = 0.995;
  int epochs = 5;
  std::uint64_t seed = 0;

  void validate() const {
    auto unit = [](double r) { return r > 0.0 && r < 1.0; };
    if (!unit(eps_b) || !unit(eps_n) || !unit(alpha_split) || !unit(d_decay))
      throw DomainError("GNG rates must lie in (0, 1)");
    if (max_nodes < 2) throw DomainError("GNG max_nodes must be >= 2");
    if (lambda_insert < 1 || a_max < 1 || epochs < 1) throw DomainError("GNG intervals must be >= 1");
  }
};

struct GNGCodebook {
  std::vector<Vec3> nodes;
  std::vector<double> errors;
  std::map<std::pair<int, int>, int> edges;  // (lo, hi) -> age

  int size() const { return static_cast<int>(nodes.size()); }

  /// Nearest node; ties go to the lowest id.
  int label(const Vec3 &v) const {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (int k = 0; k < size(); ++k) {
      const double d = (nodes[static_cast<std::size_t>(k)] - v).squaredNorm();
      if (d < bd) {
        bd = d;
        best = k;
      }
    }
    return best;
  }

  std::vector<int> neighbors(int k) const {
    std::vector<int> out;
    for (const auto &[e, age] : edges) {
      if (e.first == k) out.push_back(e.second);
      if (e.second == k) out.push_back(e.first);
    }
    return out;
  }
};

namespace detail {
inline std::pair<int, int> edge_key(int a, int b) { return {std::min(a, b), std::max(a, b)}; }

inline void remove_node(GNGCodebook &g, int k) {
  g.nodes.erase(g.nodes.begin() + k);
  g.errors.erase(g.errors.begin() + k);
  std::map<std::pair<int, int>, int> kept;
  for (const auto &[e, age] : g.edges) {
    if (e.first == k || e.second == k) continue;
    kept[{e.first > k ? e.first - 1 : e.first, e.second > k ? e.second - 1 : e.second}] = age;
  }
  g.edges = std::move(kept);
}
}  // namespace detail

inline GNGCodebook gng_fit(std::span<const Vec3> data, const GNGConfig &cfg) {
  cfg.validate();
  if (data.size() < 2) throw DomainError("GNG needs at least 2 samples");
  std::set<std::array<double, 3>> distinct;
  for (const auto &v : data) distinct.insert({v.x(), v.y(), v.z()});
  if (distinct.size() < 2) throw DomainError("GNG needs at least 2 distinct samples");

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  GNGCodebook g;
  const std::size_t first = pick(rng);
  std::size_t second = pick(rng);
  while (data[second] == data[first]) second = pick(rng);
  g.nodes = {data[first], data[second]};
  g.errors = {0.0, 0.0};

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t idx : order) {
      const Vec3 &x = data[idx];
      int s1 = -1, s2 = -1;
      double d1 = std::numeric_limits<double>::infinity(), d2 = d1;
      for (int k = 0; k < g.size(); ++k) {
        const double d = (g.nodes[static_cast<std::size_t>(k)] - x).squaredNorm();
        if (d < d1) {
          d2 = d1;
          s2 = s1;
          d1 = d;
          s1 = k;
        } else if (d < d2) {
          d2 = d;
          s2 = k;
        }
      }
      for (auto &[e, age] : g.edges)
        if (e.first == s1 || e.second == s1) ++age;
      g.errors[static_cast<std::size_t>(s1)] += d1;
      g.nodes[static_cast<std::size_t>(s1)] += cfg.eps_b * (x - g.nodes[static_cast<std::size_t>(s1)]);
      for (int n : g.neighbors(s1)) g.nodes[static_cast<std::size_t>(n)] += cfg.eps_n * (x - g.nodes[static_cast<std::size_t>(n)]);
      g.edges[detail::edge_key(s1, s2)] = 0;
      std::erase_if(g.edges, [&](const auto &e) { return e.second > cfg.a_max; });
      for (int k = g.size() - 1; k >= 0 && g.size() > 2; --k)
        if (g.neighbors(k).empty()) detail::remove_node(g, k);

      if (++step % cfg.lambda_insert == 0 && g.size() < cfg.max_nodes) {
        const int q = static_cast<int>(std::max_element(g.errors.begin(), g.errors.end()) - g.errors.begin());
        int f = -1;
        for (int n : g.neighbors(q))
          if (f < 0 || g.errors[static_cast<std::size_t>(n)] > g.errors[static_cast<std::size_t>(f)]) f = n;
        if (f >= 0) {
          const int r = g.size();
          g.nodes.push_back(0.5 * (g.nodes[static_cast<std::size_t>(q)] + g.nodes[static_cast<std::size_t>(f)]));
          g.edges.erase(detail::edge_key(q, f));
          g.edges[detail::edge_key(q, r)] = 0;
          g.edges[detail::edge_key(r, f)] = 0;
          g.errors[static_cast<std::size_t>(q)] *= cfg.alpha_split;
          g.errors[static_cast<std::size_t>(f)] *= cfg.alpha_split;
          g.errors.push_back(g.errors[static_cast<std::size_t>(q)]);
        }
      }
      for (auto &e : g.errors) e *= cfg.d_decay;
    }
  }
  return g;
}

inline std::vector<int> label_sequence(std::span<const Vec3> vel, const GNGCodebook &cb) {
  std::vector<int> out;
  out.reserve(vel.size());
  for (const auto &v : vel) out.push_back(cb.label(v));
  return out;
}

/// Bigram counts over all sequences, smoothed row-wise.
inline TransitionMatrix combined_transition(std::span<const std::vector<int>> sequences, int k, double alpha) {
  if (k < 1) throw DomainError("label count must be >= 1");
  std::vector<std::vector<long>> counts(static_cast<std::size_t>(k), std::vector<long>(static_cast<std::size_t>(k), 0));
  for (const auto &s : sequences)
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      if (s[i] < 0 || s[i] >= k || s[i + 1] < 0 || s[i + 1] >= k) throw DomainError("label out of range");
      ++counts[static_cast<std::size_t>(s[i])][static_cast<std::size_t>(s[i + 1])];
    }
  return estimate_transition(counts, alpha);
}

namespace detail {
inline int argmax(const std::vector<double> &p) {
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());  // first maximum
}
}  // namespace detail

struct CorrectionReport {
  std::vector<int> observed;   // labels t = 1..n-1
  std::vector<int> predicted;  // from the transition row of the previous label
  std::vector<int> corrected;  // posterior argmax after seeing the measurement
  std::vector<bool> predicted_error;
  std::vector<bool> corrected_error;
  long predicted_errors = 0;
  long corrected_errors = 0;
  bool unseen_label = false;  // a label outside the matrix fell back to a uniform row

  std::size_t n() const { return observed.size(); }
};

inline constexpr double kDefaultIngestBeta = 5.0;

/// Predicts each next label from the transition row of the current one, then
/// corrects it with a softmax(-beta * distance) likelihood over the codebook.
inline CorrectionReport predict_and_correct(std::span<const Vec3> vel, const GNGCodebook &cb, const TransitionMatrix &t,
                                            double beta) {
  if (!(beta > 0.0)) throw DomainError("beta must be > 0");
  CorrectionReport r;
  const auto labels = label_sequence(vel, cb);
  const std::size_t k = static_cast<std::size_t>(cb.size());
  for (std::size_t i = 0; i + 1 < labels.size(); ++i) {
    std::vector<double> prior(k, 1.0 / static_cast<double>(k));
    const auto cur = static_cast<std::size_t>(labels[i]);
    if (cur < t.from_size() && t.to_size() == k)
      prior = t.row(cur);
    else
      r.unseen_label = true;
    const int pred = detail::argmax(prior);
    // log-space posterior so a sharp likelihood cannot underflow against a sparse prior
    std::vector<double> log_post(k);
    for (std::size_t j = 0; j < k; ++j)
      log_post[j] = std::log(prior[j]) - beta * (cb.nodes[j] - vel[i + 1]).norm();
    const int corr = detail::argmax(log_post);
    const int obs = labels[i + 1];
    r.observed.push_back(obs);
    r.predicted.push_back(pred);
    r.corrected.push_back(corr);
    r.predicted_error.push_back(pred != obs);
    r.corrected_error.push_back(corr != obs);
    r.predicted_errors += pred != obs;
    r.corrected_errors += corr != obs;
  }
  return r;
}

/// Next-label prediction only, from labels already assigned.
inline std::vector<int> predict_labels(std::span<const int> labels, const TransitionMatrix &t) {
  std::vector<int> out;
  for (std::size_t i = 0; i + 1 < labels.size(); ++i) {
    const auto cur = static_cast<std::size_t>(labels[i]);
    out.push_back(cur < t.from_size() ? detail::argmax(t.row(cur)) : 0);
  }
  return out;
}

// ---- synthetic logs ----

/// Velocity regimes following a Markov chain over `prototypes`; positions
/// integrate the regime velocity plus Gaussian velocity noise.
struct MarkovVelocityLog {
  UavLog log;
  std::vector<int> regimes;
};

inline MarkovVelocityLog markov_velocity_log(std::uint64_t seed, const std::vector<std::vector<double>> &chain,
                                             const std::vector<Vec3> &prototypes, int steps, double dt,
                                             double noise, int uav_id = 0) {
  if (chain.size() != prototypes.size() || chain.empty()) throw DomainError("chain and prototypes disagree");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, noise);
  MarkovVelocityLog out;
  out.log.uav_id = uav_id;
  int state = 0;
  Vec3 p(0, 0, 1.5);
  for (int i = 0; i < steps; ++i) {
    out.log.samples.push_back({i * dt, p});
    out.regimes.push_back(state);
    const Vec3 v = prototypes[static_cast<std::size_t>(state)] + Vec3(g(rng), g(rng), g(rng));
    p += dt * v;
    std::discrete_distribution<int> next(chain[static_cast<std::size_t>(state)].begin(),
                                         chain[static_cast<std::size_t>(state)].end());
    state = next(rng);
  }
  return out;
}

/// Two UAVs visiting three of six fixed cities each at indoor scale:
/// accelerate, cruise, brake and hover at every city, with sensor jitter.
inline FlightLog synthetic_flights(std::uint64_t seed, double dt = 0.1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jitter(0.0, 0.01);
  const std::vector<Vec3> cities{{1, 1, 1.5}, {4, 1, 1.5}, {7, 1, 1.5}, {1, 5, 1.5}, {4, 5, 1.5}, {7, 5, 1.5}};
  const std::vector<std::vector<int>> tours{{0, 1, 4, 3, 0}, {2, 5, 4, 1, 2}};
  const double v_cruise = 1.0, accel = 0.5, hover = 2.0;
  FlightLog log;
  log.experiment_id = "synthetic-" + std::to_string(seed);
  for (std::size_t u = 0; u < tours.size(); ++u) {
    UavLog ul;
    ul.uav_id = static_cast<int>(u) + 1;
    double t = 0.0;
    auto emit = [&](const Vec3 &p) {
      ul.samples.push_back({t, p + Vec3(jitter(rng), jitter(rng), jitter(rng))});
      t += dt;
    };
    for (std::size_t k = 0; k + 1 < tours[u].size(); ++k) {
      const Vec3 a = cities[static_cast<std::size_t>(tours[u][k])], b = cities[static_cast<std::size_t>(tours[u][k + 1])];
      for (double h = 0; h < hover; h += dt) emit(a);
      const double len = (b - a).norm();
      const Vec3 dir = (b - a) / len;
      // trapezoidal speed profile
      double s = 0.0, v = 0.0;
      while (s < len) {
        const double brake = v * v / (2 * accel);
        if (len - s <= brake)
          v = std::max(0.05, v - accel * dt);
        else
          v = std::min(v_cruise, v + accel * dt);
        s = std::min(len, s + v * dt);
        emit(a + s * dir);
      }
    }
    for (double h = 0; h < hover; h += dt) emit(cities[static_cast<std::size_t>(tours[u].back())]);
    log.uavs.push_back(std::move(ul));
  }
  return log;
}

// ---- JSON ----

inline nlohmann::json to_json(const GNGCodebook &cb) {
  nlohmann::json nodes = nlohmann::json::array(), edges = nlohmann::json::array();
  for (const auto &n : cb.nodes) nodes.push_back({n.x(), n.y(), n.z()});
  for (const auto &[e, age] : cb.edges) edges.push_back({e.first, e.second, age});
  return {{"nodes", nodes}, {"edges", edges}};
}

inline GNGCodebook gng_codebook_from_json(const nlohmann::json &j) {
  GNGCodebook cb;
  try {
    for (const auto &n : require(j, "nodes")) cb.nodes.emplace_back(n.at(0).get<double>(), n.at(1).get<double>(), n.at(2).get<double>());
    for (const auto &e : require(j, "edges")) cb.edges[{e.at(0).get<int>(), e.at(1).get<int>()}] = e.at(2).get<int>();
  } catch (const nlohmann::json::exception &e) {
    throw DomainError(std::string("malformed codebook: ") + e.what());
  }
  cb.errors.assign(cb.nodes.size(), 0.0);
  return cb;
}

inline nlohmann::json to_json(const TransitionMatrix &t) {
  return {{"alpha", t.alpha}, {"counts", t.counts}, {"rows", t.rows}};
}

inline nlohmann::json to_json(const CorrectionReport &r) {
  return {{"n", r.n()},
          {"predicted_errors", r.predicted_errors},
          {"corrected_errors", r.corrected_errors},
          {"unseen_label", r.unseen_label}};
}

}  // namespace uavwm
