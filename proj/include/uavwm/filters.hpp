#pragma once

// EKF and particle filter over the planar state [x, y, vx, vy].
//
// Transition: v' = v + k (u - v), x' = x + dt v', with k the velocity
// response when a commanded velocity u is given and 0 otherwise. The model is
// linear, so the Jacobian F is exact. Measurements read the position only.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "uavwm/geometry.hpp"

namespace uavwm {

using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;
using Mat2 = Eigen::Matrix2d;
using Mat24 = Eigen::Matrix<double, 2, 4>;

struct ContinuousState {
  Vec2 position;
  Vec2 velocity;

  Vec4 vector() const { return {position.x, position.y, velocity.x, velocity.y}; }
  static ContinuousState from_vector(const Vec4 &s) { return {{s(0), s(1)}, {s(2), s(3)}}; }
};

struct NoiseConfig {
  Mat4 Q = Mat4::Zero();
  Mat2 R = Mat2::Identity();
  std::uint64_t seed = 0;

  static NoiseConfig isotropic(double q_pos, double q_vel, double r, std::uint64_t seed = 0) {
    NoiseConfig n;
    n.Q.diagonal() << q_pos, q_pos, q_vel, q_vel;
    n.R = Mat2::Identity() * r;
    n.seed = seed;
    return n;
  }
};

struct TransitionModel {
  double velocity_response = 1.0;  // fraction of the commanded-velocity change realized per step

  Mat4 jacobian(double dt, bool controlled) const {
    const double a = controlled ? 1.0 - velocity_response : 1.0;
    Mat4 f = Mat4::Identity();
    f(0, 2) = f(1, 3) = dt * a;
    f(2, 2) = f(3, 3) = a;
    return f;
  }

  Vec4 apply(const Vec4 &s, const std::optional<Vec2> &u, double dt) const {
    Eigen::Vector2d v = s.tail<2>();
    if (u) v += velocity_response * (Eigen::Vector2d(u->x, u->y) - v);
    Vec4 out;
    out << s(0) + dt * v(0), s(1) + dt * v(1), v(0), v(1);
    return out;
  }
};

inline Mat24 measurement_matrix() {
  Mat24 h = Mat24::Zero();
  h(0, 0) = h(1, 1) = 1.0;
  return h;
}

template <class M>
void check_psd(const M &m, const char *name, double tol = 1e-9) {
  if (!m.allFinite()) throw DomainError(std::string(name) + " has non-finite entries");
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol * std::max(1.0, m.cwiseAbs().maxCoeff()))
    throw DomainError(std::string(name) + " is not symmetric");
  Eigen::SelfAdjointEigenSolver<M> es(m);
  if (es.eigenvalues().minCoeff() < -tol * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff()))
    throw DomainError(std::string(name) + " is not positive semi-definite");
}

struct EKFState {
  Vec4 mean = Vec4::Zero();
  Mat4 cov = Mat4::Identity();

  Vec2 position() const { return {mean(0), mean(1)}; }
  Vec2 velocity() const { return {mean(2), mean(3)}; }
};

inline EKFState ekf_predict(const EKFState &s, const std::optional<Vec2> &control, double dt, const NoiseConfig &noise,
                            const TransitionModel &model = {}) {
  check_psd(s.cov, "state covariance");
  check_psd(noise.Q, "process covariance Q");
  const Mat4 f = model.jacobian(dt, control.has_value());
  EKFState out;
  out.mean = model.apply(s.mean, control, dt);
  out.cov = f * s.cov * f.transpose() + noise.Q;
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

inline Eigen::Matrix<double, 4, 2> ekf_gain(const EKFState &s, const NoiseConfig &noise) {
  const Mat24 h = measurement_matrix();
  const Mat2 sinn = h * s.cov * h.transpose() + noise.R;
  Eigen::FullPivLU<Mat2> lu(sinn);
  if (!lu.isInvertible() || std::abs(sinn.determinant()) < 1e-300)
    throw DomainError("singular innovation covariance in EKF update");
  return s.cov * h.transpose() * lu.inverse();
}

inline EKFState ekf_update(const EKFState &s, Vec2 z, const NoiseConfig &noise) {
  check_psd(s.cov, "state covariance");
  check_psd(noise.R, "measurement covariance R");
  const Mat24 h = measurement_matrix();
  const auto k = ekf_gain(s, noise);
  EKFState out;
  out.mean = s.mean + k * (Eigen::Vector2d(z.x, z.y) - h * s.mean);
  out.cov = (Mat4::Identity() - k * h) * s.cov;
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

// ---- particle filter ----

namespace detail {
/// Symmetric square root so that PSD (possibly singular) covariances can be sampled.
inline Mat4 psd_sqrt(const Mat4 &m) {
  Eigen::SelfAdjointEigenSolver<Mat4> es(m);
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}
}  // namespace detail

struct ParticleSet {
  std::vector<Vec4> particles;
  std::vector<double> weights;
  std::mt19937_64 rng;
  bool weights_reset = false;  // set when every particle became impossible under the last measurement
  bool resampled = false;

  std::size_t size() const { return particles.size(); }

  Vec4 mean() const {
    Vec4 m = Vec4::Zero();
    for (std::size_t i = 0; i < particles.size(); ++i) m += weights[i] * particles[i];
    return m;
  }

  Mat4 covariance() const {
    const Vec4 m = mean();
    Mat4 c = Mat4::Zero();
    for (std::size_t i = 0; i < particles.size(); ++i) c += weights[i] * (particles[i] - m) * (particles[i] - m).transpose();
    return c;
  }

  double effective_sample_size() const {
    double s = 0.0;
    for (double w : weights) s += w * w;
    return s > 0.0 ? 1.0 / s : 0.0;
  }

  Vec2 position() const {
    const Vec4 m = mean();
    return {m(0), m(1)};
  }
};

inline ParticleSet make_particles(const Vec4 &mean, const Mat4 &cov, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw DomainError("particle count must be >= 1");
  check_psd(cov, "initial particle covariance");
  ParticleSet p;
  p.rng.seed(seed);
  const Mat4 l = detail::psd_sqrt(cov);
  std::normal_distribution<double> g(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    Vec4 e;
    e << g(p.rng), g(p.rng), g(p.rng), g(p.rng);
    p.particles.push_back(mean + l * e);
  }
  p.weights.assign(n, 1.0 / static_cast<double>(n));
  return p;
}

/// Systematic resampling driven by one uniform draw.
inline void systematic_resample(ParticleSet &p) {
  const std::size_t n = p.size();
  std::uniform_real_distribution<double> u(0.0, 1.0 / static_cast<double>(n));
  const double start = u(p.rng);
  std::vector<Vec4> out;
  out.reserve(n);
  double cum = p.weights[0];
  std::size_t i = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const double target = start + static_cast<double>(j) / static_cast<double>(n);
    while (target > cum && i + 1 < n) cum += p.weights[++i];
    out.push_back(p.particles[i]);
  }
  p.particles = std::move(out);
  p.weights.assign(n, 1.0 / static_cast<double>(n));
}

/// Propagation through the shared transition with sampled process noise.
inline void pf_predict(ParticleSet &p, const std::optional<Vec2> &control, double dt, const NoiseConfig &noise,
                       const TransitionModel &model = {}) {
  check_psd(noise.Q, "process covariance Q");
  const Mat4 l = detail::psd_sqrt(noise.Q);
  const bool noisy = noise.Q.cwiseAbs().maxCoeff() > 0.0;
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto &x : p.particles) {
    x = model.apply(x, control, dt);
    if (noisy) {
      Vec4 e;
      e << g(p.rng), g(p.rng), g(p.rng), g(p.rng);
      x += l * e;
    }
  }
}

/// Gaussian reweighting in the log domain. When every particle's weight
/// would underflow in linear space the weights are reset to uniform and
/// `weights_reset` is raised.
inline void pf_update(ParticleSet &p, Vec2 z, const NoiseConfig &noise) {
  check_psd(noise.R, "measurement covariance R");
  Eigen::FullPivLU<Mat2> lu(noise.R);
  if (!lu.isInvertible()) throw DomainError("singular measurement covariance in PF update");
  const Mat2 r_inv = lu.inverse();
  const std::size_t n = p.size();
  std::vector<double> logw(n);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d innov(z.x - p.particles[i](0), z.y - p.particles[i](1));
    const double ll = -0.5 * innov.dot(r_inv * innov);
    logw[i] = std::log(p.weights[i]) + ll;
    best = std::max(best, ll);
  }
  p.weights_reset = false;
  p.resampled = false;
  if (!std::isfinite(best) || best < std::log(std::numeric_limits<double>::min())) {
    p.weights.assign(n, 1.0 / static_cast<double>(n));
    p.weights_reset = true;
    return;
  }
  const double top = *std::max_element(logw.begin(), logw.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += (p.weights[i] = std::exp(logw[i] - top));
  for (auto &w : p.weights) w /= sum;
  if (p.effective_sample_size() < 0.5 * static_cast<double>(n)) {
    systematic_resample(p);
    p.resampled = true;
  }
}

inline void pf_step(ParticleSet &p, const std::optional<Vec2> &control, Vec2 z, const NoiseConfig &noise, double dt,
                    const TransitionModel &model = {}) {
  pf_predict(p, control, dt, noise, model);
  pf_update(p, z, noise);
}

/// Unordered pairs (i < j) whose predicted positions are closer than d_min.
inline std::vector<std::pair<int, int>> predicted_collision(std::span<const Vec2> predictions, double d_min) {
  std::vector<std::pair<int, int>> out;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    for (std::size_t j = i + 1; j < predictions.size(); ++j)
      if (distance(predictions[i], predictions[j]) < d_min) out.emplace_back(static_cast<int>(i), static_cast<int>(j));
  return out;
}

// ---- per-UAV filter used by the runtime ----

enum class FilterKind { ekf, pf };

inline FilterKind filter_kind_from_string(const std::string &s) {
  if (s == "ekf") return FilterKind::ekf;
  if (s == "pf") return FilterKind::pf;
  throw DomainError("unknown filter '" + s + "' (expected ekf or pf)");
}

struct FilterConfig {
  FilterKind kind = FilterKind::ekf;
  double q_pos = 0.01;  // process noise variance per step, m^2
  double q_vel = 0.05;  // (m/s)^2
  double r = 4.0;       // measurement variance, m^2
  std::size_t particles = 500;
  double initial_pos_var = 4.0;
  double initial_vel_var = 1.0;
  TransitionModel model;
};

class UavFilter {
 public:
  UavFilter(Vec2 start, const FilterConfig &cfg, std::uint64_t seed) : cfg_(cfg) {
    noise_ = NoiseConfig::isotropic(cfg.q_pos, cfg.q_vel, cfg.r, seed);
    ekf_.mean << start.x, start.y, 0.0, 0.0;
    ekf_.cov = Mat4::Zero();
    ekf_.cov.diagonal() << cfg.initial_pos_var, cfg.initial_pos_var, cfg.initial_vel_var, cfg.initial_vel_var;
    if (cfg.kind == FilterKind::pf) pf_ = make_particles(ekf_.mean, ekf_.cov, cfg.particles, seed);
  }

  /// Position one step ahead under `control`, without changing the filter.
  Vec2 predict_position(const std::optional<Vec2> &control, double dt) const {
    const Vec4 m = cfg_.model.apply(state_vector(), control, dt);
    return {m(0), m(1)};
  }

  void step(const std::optional<Vec2> &control, double dt, Vec2 z) {
    if (cfg_.kind == FilterKind::ekf) {
      ekf_ = ekf_update(ekf_predict(ekf_, control, dt, noise_, cfg_.model), z, noise_);
    } else {
      pf_step(*pf_, control, z, noise_, dt, cfg_.model);
      if (pf_->weights_reset) ++weight_resets_;
    }
  }

  Vec4 state_vector() const { return cfg_.kind == FilterKind::ekf ? ekf_.mean : pf_->mean(); }
  Vec2 position() const {
    const Vec4 s = state_vector();
    return {s(0), s(1)};
  }
  double covariance_trace() const { return cfg_.kind == FilterKind::ekf ? ekf_.cov.trace() : pf_->covariance().trace(); }
  long weight_resets() const { return weight_resets_; }
  FilterKind kind() const { return cfg_.kind; }

 private:
  FilterConfig cfg_;
  NoiseConfig noise_;
  EKFState ekf_;
  std::optional<ParticleSet> pf_;
  long weight_resets_ = 0;
};

struct FilterTraceRow {
  double t = 0.0;
  int uav_id = 0;
  Vec2 truth, measurement, estimate;
  double trace_p = 0.0;
};

inline void write_filter_trace(std::ostream &os, std::span<const FilterTraceRow> rows) {
  os << "t,uav_id,truth_x,truth_y,meas_x,meas_y,est_x,est_y,trace_P\n";
  for (const auto &r : rows)
    os << r.t << ',' << r.uav_id << ',' << r.truth.x << ',' << r.truth.y << ',' << r.measurement.x << ','
       << r.measurement.y << ',' << r.estimate.x << ',' << r.estimate.y << ',' << r.trace_p << '\n';
}

}  // namespace uavwm
