#pragma once

// Artificial potential fields: attractive well, inverse-distance repulsion,
// gradient-flow trajectory synthesis and the repulsive-energy ratio.

#include <algorithm>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "uavwm/geometry.hpp"
#include "uavwm/scenario.hpp"

namespace uavwm {

struct FieldConfig {
  double k_att = 1.0;
  double k_rep_obs = 3.0e4;
  double k_rep_uav = 3.0e4;
  double d0 = 50.0;            // influence distance (m)
  double gain = 1.0;           // K
  double dt = 0.1;             // s
  double v_max = 10.0;         // m/s
  double d_min = 10.0;         // inter-UAV safety distance (m)
  double d_min_obs = 20.0;     // obstacle safety distance (m)
  double distance_floor = 0.1; // repulsion is evaluated no closer than this (m)
  double capture_radius = 2.0; // waypoint reached within this radius (m)
  int step_budget = 20000;
  double launch_interval = 2.0; // UAV q departs at q * launch_interval (s)

  void validate() const {
    if (!(k_att > 0 && k_rep_obs >= 0 && k_rep_uav >= 0 && d0 > 0 && gain > 0 && dt > 0 && v_max > 0 &&
          distance_floor > 0 && capture_radius > 0 && step_budget > 0 && launch_interval >= 0))
      throw DomainError("invalid field configuration");
  }
};

class NonConvergenceError : public DomainError {
 public:
  NonConvergenceError(const std::string &what, int waypoint) : DomainError(what), waypoint_(waypoint) {}
  int waypoint() const { return waypoint_; }

 private:
  int waypoint_;
};

struct TrajectorySample {
  double t = 0.0;
  Vec2 position;
  Vec2 velocity;
};

struct Trajectory {
  std::vector<TrajectorySample> samples;
  std::vector<std::size_t> waypoint_marks;  // sample index at which each route node after the first is reached

  bool empty() const { return samples.empty(); }
  double start_time() const { return samples.front().t; }
  double end_time() const { return samples.back().t; }
  bool active_at(double t) const { return !samples.empty() && t >= start_time() - 1e-9 && t <= end_time() + 1e-9; }

  /// Linear interpolation of the position at time `t` (clamped to the ends).
  Vec2 position_at(double t) const {
    if (t <= samples.front().t) return samples.front().position;
    if (t >= samples.back().t) return samples.back().position;
    auto it = std::upper_bound(samples.begin(), samples.end(), t,
                               [](double v, const TrajectorySample &s) { return v < s.t; });
    const auto i = static_cast<std::size_t>(it - samples.begin()) - 1;
    const auto &a = samples[i];
    const auto &b = samples[i + 1];
    const double w = (t - a.t) / (b.t - a.t);
    return a.position + (b.position - a.position) * w;
  }

  double path_length() const {
    double len = 0.0;
    for (std::size_t i = 1; i < samples.size(); ++i) len += distance(samples[i].position, samples[i - 1].position);
    return len;
  }

  /// Samples [first, last] inclusive.
  Trajectory slice(std::size_t first, std::size_t last) const {
    Trajectory s;
    s.samples.assign(samples.begin() + static_cast<std::ptrdiff_t>(first),
                     samples.begin() + static_cast<std::ptrdiff_t>(last) + 1);
    return s;
  }
};

/// Positions of the trajectories airborne at time `t`. A UAV before its
/// departure or after its return is on the ground and exerts no field.
inline std::vector<Vec2> active_positions(std::span<const Trajectory> trajs, double t) {
  std::vector<Vec2> out;
  for (const auto &tr : trajs)
    if (tr.active_at(t)) out.push_back(tr.position_at(t));
  return out;
}

inline double attractive_potential(Vec2 x, Vec2 p, double k_att) { return 0.5 * k_att * norm_sq(x - p); }

inline Vec2 attractive_gradient(Vec2 x, Vec2 p, double k_att) { return (x - p) * k_att; }

namespace detail {
inline double rep_term(double d, double k, double d0) {
  if (d >= d0) return 0.0;
  const double g = 1.0 / d - 1.0 / d0;
  return 0.5 * k * g * g;
}
// d/dd of rep_term
inline double rep_slope(double d, double k, double d0) {
  if (d >= d0) return 0.0;
  return -k * (1.0 / d - 1.0 / d0) / (d * d);
}
}  // namespace detail

inline double repulsive_potential(Vec2 x, std::span<const Obstacle> obstacles, std::span<const Vec2> others,
                                  const FieldConfig &cfg) {
  double u = 0.0;
  for (const auto &o : obstacles)
    u += detail::rep_term(std::max(o.surface_distance(x), cfg.distance_floor), cfg.k_rep_obs, cfg.d0);
  for (const auto &r : others) u += detail::rep_term(std::max(distance(x, r), cfg.distance_floor), cfg.k_rep_uav, cfg.d0);
  return u;
}

/// Analytic gradient of the repulsive potential. Inside the distance floor the
/// slope is held at its floor value along the outward direction.
inline Vec2 repulsive_gradient(Vec2 x, std::span<const Obstacle> obstacles, std::span<const Vec2> others,
                               const FieldConfig &cfg) {
  Vec2 g;
  auto add = [&](Vec2 from, double d, double k) {
    const Vec2 diff = x - from;
    const double n = norm(diff);
    if (n < 1e-12) return;  // direction undefined
    g += (diff / n) * detail::rep_slope(std::max(d, cfg.distance_floor), k, cfg.d0);
  };
  for (const auto &o : obstacles) add(o.center, o.surface_distance(x), cfg.k_rep_obs);
  for (const auto &r : others) add(r, distance(x, r), cfg.k_rep_uav);
  return g;
}

struct StepResult {
  Vec2 position;
  Vec2 velocity;
};

/// Attraction is saturated at v_max before repulsion is added, then the sum is
/// capped again; otherwise a distant target's quadratic well hides repulsion.
inline Vec2 field_velocity(Vec2 x, Vec2 target, std::span<const Obstacle> obstacles, std::span<const Vec2> others,
                           const FieldConfig &cfg) {
  const Vec2 v_att = clamp_norm(attractive_gradient(x, target, cfg.k_att) * -cfg.gain, cfg.v_max);
  const Vec2 v_rep = repulsive_gradient(x, obstacles, others, cfg) * -cfg.gain;
  return clamp_norm(v_att + v_rep, cfg.v_max);
}

inline StepResult gradient_step(Vec2 x, Vec2 target, std::span<const Obstacle> obstacles,
                                std::span<const Vec2> others, const FieldConfig &cfg) {
  const Vec2 v = field_velocity(x, target, obstacles, others, cfg);
  return {x + v * cfg.dt, v};
}

/// Follows the field through `route` (depot at both ends), starting at
/// `start_time`. Co-trajectories repel only while airborne.
inline Trajectory synthesize_trajectory(std::span<const Vec2> route, std::span<const Obstacle> obstacles,
                                        std::span<const Trajectory> co_trajectories, const FieldConfig &cfg,
                                        double start_time = 0.0) {
  cfg.validate();
  if (route.empty()) throw DomainError("route must contain at least the depot");
  Trajectory tr;
  Vec2 x = route.front();
  double t = start_time;
  tr.samples.push_back({t, x, {}});
  int steps = 0;
  for (std::size_t w = 1; w < route.size(); ++w) {
    const Vec2 target = route[w];
    while (distance(x, target) > cfg.capture_radius) {
      if (steps++ >= cfg.step_budget) {
        std::ostringstream msg;
        msg << "trajectory did not converge: stuck before waypoint " << w << " at (" << target.x << ", " << target.y
            << ")";
        throw NonConvergenceError(msg.str(), static_cast<int>(w));
      }
      const auto others = active_positions(co_trajectories, t);
      const auto step = gradient_step(x, target, obstacles, others, cfg);
      x = step.position;
      t = start_time + steps * cfg.dt;
      tr.samples.push_back({t, x, step.velocity});
    }
    tr.waypoint_marks.push_back(tr.samples.size() - 1);
  }
  return tr;
}

/// Trapezoid-discretized share of repulsive energy along `segment`.
inline double repulsive_ratio(const Trajectory &segment, Vec2 target, std::span<const Obstacle> obstacles,
                              std::span<const Trajectory> others, const FieldConfig &cfg) {
  if (segment.empty()) throw DomainError("repulsive_ratio needs a non-empty segment");
  const auto &s = segment.samples;
  std::vector<double> rep(s.size()), att(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto pos = active_positions(others, s[i].t);
    rep[i] = repulsive_potential(s[i].position, obstacles, pos, cfg);
    att[i] = attractive_potential(s[i].position, target, cfg.k_att);
  }
  double num = 0.0, den = 0.0;
  if (s.size() == 1) {
    num = rep[0];
    den = rep[0] + att[0];
  }
  for (std::size_t i = 1; i < s.size(); ++i) {
    const double h = s[i].t - s[i - 1].t;
    num += 0.5 * h * (rep[i] + rep[i - 1]);
    den += 0.5 * h * (rep[i] + rep[i - 1] + att[i] + att[i - 1]);
  }
  return den > 0.0 ? num / den : 0.0;
}

// ---- CSV (trajectory file: t,x,y,vx,vy,uav_id) ----

inline void write_trajectory_csv(std::ostream &os, std::span<const Trajectory> trajs, bool header = true) {
  if (header) os << "t,x,y,vx,vy,uav_id\n";
  os.precision(17);
  for (std::size_t q = 0; q < trajs.size(); ++q)
    for (const auto &s : trajs[q].samples)
      os << s.t << ',' << s.position.x << ',' << s.position.y << ',' << s.velocity.x << ',' << s.velocity.y << ','
         << q + 1 << '\n';
}

/// Parses a trajectory CSV into per-UAV trajectories (uav ids 1..Q).
inline std::vector<Trajectory> read_trajectory_csv(std::istream &is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("t,x,y,vx,vy,uav_id", 0) != 0)
    throw DomainError("trajectory CSV must start with header t,x,y,vx,vy,uav_id");
  std::vector<Trajectory> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    double v[5];
    for (double &d : v) {
      if (!std::getline(ls, cell, ',')) throw DomainError("short trajectory CSV row: " + line);
      d = std::stod(cell);
    }
    if (!std::getline(ls, cell)) throw DomainError("missing uav_id in row: " + line);
    const int id = std::stoi(cell);
    if (id < 1) throw DomainError("uav_id must be >= 1");
    if (out.size() < static_cast<std::size_t>(id)) out.resize(static_cast<std::size_t>(id));
    out[static_cast<std::size_t>(id - 1)].samples.push_back({v[0], {v[1], v[2]}, {v[3], v[4]}});
  }
  return out;
}

}  // namespace uavwm
