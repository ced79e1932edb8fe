#pragma once

// Method-of-lines co-simulation of robots coupled through 1-D diffusion
// channels.
//
// Each segment of length L carries nodes r_k = k L / M, k = 0..M. The end nodes
// are Dirichlet values taken from the adjacent robot's output (its last
// state) or from a fixed wall value; the M - 1 interior nodes are states
// advanced with the 3-point Laplacian. A robot receives the flux
//   w = kappa * sum over adjacent segments of (c_adjacent - y) / dr
// The channel half-cell next to a robot moves with the robot's output, so the
// robot's signal state carries the extra capacity dr / 2 per adjacent segment:
//   (1 + kappa * sum(dr / 2) / mu) dy/dt = f_m(x) + w.
// This keeps the boundary flux second-order accurate in dr, and total signal
// mass (trapezoidal channel integral plus robot volume mu / kappa times the
// robot states) is conserved exactly by transport.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcstab/channel.hpp"
#include "mcstab/errors.hpp"
#include "mcstab/reaction.hpp"

namespace mcstab {

struct Endpoint {
  enum class Kind { Robot, Fixed };
  Kind kind = Kind::Fixed;
  std::size_t robot = 0;
  double value = 0.0;

  static Endpoint to_robot(std::size_t i) { return {Kind::Robot, i, 0.0}; }
  static Endpoint fixed(double v) { return {Kind::Fixed, 0, v}; }
};

struct Segment {
  double length;
  Endpoint left, right;
};

/// Segments of a topology. Periodic: segment s joins robot s-1 (mod n) to
/// robot s. DirichletZeroEnds: zero walls before robot 1 and after robot n.
inline std::vector<Segment> segments_for(const ChannelTopology& topo) {
  topo.validate();
  std::vector<Segment> segs;
  const std::size_t n = topo.n;
  if (topo.boundary == Boundary::Periodic) {
    for (std::size_t s = 0; s < n; ++s)
      segs.push_back({topo.lengths[s], Endpoint::to_robot((s + n - 1) % n), Endpoint::to_robot(s)});
  } else {
    segs.push_back({topo.lengths[0], Endpoint::fixed(0.0), Endpoint::to_robot(0)});
    for (std::size_t s = 1; s < n; ++s)
      segs.push_back({topo.lengths[s], Endpoint::to_robot(s - 1), Endpoint::to_robot(s)});
    segs.push_back({topo.lengths[n], Endpoint::to_robot(n - 1), Endpoint::fixed(0.0)});
  }
  return segs;
}

enum class ChannelInit { Equilibrium, Zero };
enum class ResponseClass { Decaying, Oscillating, Diverging, Undecided };

inline const char* to_string(ResponseClass c) {
  switch (c) {
    case ResponseClass::Decaying: return "Decaying";
    case ResponseClass::Oscillating: return "Oscillating";
    case ResponseClass::Diverging: return "Diverging";
    case ResponseClass::Undecided: return "Undecided";
  }
  return "Undecided";
}

struct Classification {
  ResponseClass cls = ResponseClass::Undecided;
  double rate = 0.0;  // fitted log-envelope slope per time unit
  std::size_t peaks = 0;
};

struct SimConfig {
  std::size_t cells_per_segment = 32;
  double dt = 0.0;  // 0 selects the largest step within the diffusion bound
  double t_final = 100.0;
  // Empty: +0.1 on every state of every robot. One entry: applied to every
  // robot. n entries: one per robot.
  std::vector<std::vector<double>> perturbation;
  ChannelInit channel_init = ChannelInit::Equilibrium;
  double window_fraction = 0.5;
  std::size_t samples = 2000;
  std::size_t profile_samples = 0;

  /// dt <= 0.4 dr^2 / mu for the finest segment grid.
  double max_dt(const ChannelTopology& topo) const {
    const double L = *std::min_element(topo.lengths.begin(), topo.lengths.end());
    const double dr = L / static_cast<double>(cells_per_segment);
    return 0.4 * dr * dr / topo.mu();
  }

  double effective_dt(const ChannelTopology& topo) const { return dt > 0.0 ? dt : max_dt(topo); }

  void validate(const ChannelTopology& topo, std::size_t m) const {
    if (cells_per_segment < 8) throw ConfigError("simulation: cells_per_segment must be >= 8");
    if (!(t_final > 0.0)) throw ConfigError("simulation: t_final must be positive");
    if (dt < 0.0) throw ConfigError("simulation: dt must be >= 0");
    if (dt > max_dt(topo) * (1.0 + 1e-12))
      throw ConfigError("simulation: dt " + std::to_string(dt) + " exceeds the diffusion bound " +
                        std::to_string(max_dt(topo)));
    if (!(window_fraction > 0.0 && window_fraction <= 1.0))
      throw ConfigError("simulation: window_fraction must lie in (0, 1]");
    if (samples < 100) throw ConfigError("simulation: samples must be >= 100");
    if (!perturbation.empty() && perturbation.size() != 1 && perturbation.size() != topo.n)
      throw ConfigError("simulation: perturbation needs 1 or n rows");
    for (const auto& row : perturbation)
      if (row.size() != m) throw ConfigError("simulation: perturbation rows need one entry per state");
  }
};

class CoupledSystem {
 public:
  /// model may be null only when n_robots == 0.
  CoupledSystem(const ReactionModel* model, std::size_t n_robots, std::vector<Segment> segments, double mu,
                double flux_gain, std::size_t cells)
      : model_(model), n_(n_robots), m_(model ? model->m : 0), segs_(std::move(segments)), mu_(mu),
        kappa_(flux_gain), cells_(cells) {
    if (n_ > 0 && !model_) throw std::invalid_argument("CoupledSystem: robots need a model");
    if (cells_ < 2) throw std::invalid_argument("CoupledSystem: need at least 2 cells per segment");
    std::size_t off = n_ * m_;
    for (const auto& s : segs_) {
      for (const auto* e : {&s.left, &s.right})
        if (e->kind == Endpoint::Kind::Robot && e->robot >= n_)
          throw std::invalid_argument("CoupledSystem: segment endpoint names a missing robot");
      offsets_.push_back(off);
      spacing_.push_back(s.length / static_cast<double>(cells_));
      off += cells_ - 1;
    }
    std::vector<double> half_cells(n_, 0.0);
    for (std::size_t s = 0; s < segs_.size(); ++s)
      for (const auto* e : {&segs_[s].left, &segs_[s].right})
        if (e->kind == Endpoint::Kind::Robot) half_cells[e->robot] += 0.5 * spacing_[s];
    for (double h : half_cells) capacity_.push_back(1.0 + kappa_ * h / mu_);
    size_ = off;
    for (auto* buf : {&k1_, &k2_, &k3_, &k4_, &tmp_}) buf->resize(size_);
    flux_.resize(n_);
  }

  static CoupledSystem for_topology(const ReactionModel& model, const ChannelTopology& topo, std::size_t cells) {
    return CoupledSystem(&model, topo.n, segments_for(topo), topo.mu(), topo.flux_gain, cells);
  }

  std::size_t size() const { return size_; }
  std::size_t robots() const { return n_; }
  std::size_t states_per_robot() const { return m_; }
  const std::vector<Segment>& segments() const { return segs_; }
  std::size_t interior_nodes() const { return cells_ - 1; }
  std::size_t robot_offset(std::size_t i) const { return i * m_; }
  std::size_t segment_offset(std::size_t s) const { return offsets_[s]; }
  double grid_spacing(std::size_t s) const { return spacing_[s]; }
  /// Robot volume mu / kappa that makes the flux coupling mass-conservative.
  double robot_width() const { return mu_ / kappa_; }

  /// Robots at x + perturbation (per robot), channels uniform at channel_value.
  std::vector<double> initial_state(std::span<const double> x_star,
                                    const std::vector<std::vector<double>>& perturbation,
                                    double channel_value) const {
    std::vector<double> y(size_, channel_value);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < m_; ++j) {
        double p = 0.0;
        if (!perturbation.empty()) p = perturbation[perturbation.size() == 1 ? 0 : i][j];
        y[robot_offset(i) + j] = x_star[j] + p;
      }
    return y;
  }

  double endpoint_value(const Endpoint& e, std::span<const double> y) const {
    return e.kind == Endpoint::Kind::Robot ? y[robot_offset(e.robot) + m_ - 1] : e.value;
  }

  void rhs(std::span<const double> y, std::span<double> dy) const {
    std::fill(flux_.begin(), flux_.end(), 0.0);
    const std::size_t inner = cells_ - 1;
    for (std::size_t s = 0; s < segs_.size(); ++s) {
      const double left = endpoint_value(segs_[s].left, y);
      const double right = endpoint_value(segs_[s].right, y);
      const double dr = spacing_[s];
      const double c = mu_ / (dr * dr);
      const double* u = y.data() + offsets_[s];
      double* du = dy.data() + offsets_[s];
      for (std::size_t k = 0; k < inner; ++k) {
        const double um = k == 0 ? left : u[k - 1];
        const double up = k + 1 == inner ? right : u[k + 1];
        du[k] = c * (um - 2.0 * u[k] + up);
      }
      if (segs_[s].left.kind == Endpoint::Kind::Robot) flux_[segs_[s].left.robot] += kappa_ * (u[0] - left) / dr;
      if (segs_[s].right.kind == Endpoint::Kind::Robot)
        flux_[segs_[s].right.robot] += kappa_ * (u[inner - 1] - right) / dr;
    }
    for (std::size_t i = 0; i < n_; ++i) {
      const auto x = y.subspan(robot_offset(i), m_);
      const auto f = model_->f(x);
      for (std::size_t j = 0; j < m_; ++j) dy[robot_offset(i) + j] = f[j];
      double& ds = dy[robot_offset(i) + m_ - 1];
      ds = (ds + flux_[i]) / capacity_[i];
    }
  }

  /// One classical RK4 step, in place.
  void step(std::vector<double>& y, double dt) const {
    rhs(y, k1_);
    for (std::size_t i = 0; i < size_; ++i) tmp_[i] = y[i] + 0.5 * dt * k1_[i];
    rhs(tmp_, k2_);
    for (std::size_t i = 0; i < size_; ++i) tmp_[i] = y[i] + 0.5 * dt * k2_[i];
    rhs(tmp_, k3_);
    for (std::size_t i = 0; i < size_; ++i) tmp_[i] = y[i] + dt * k3_[i];
    rhs(tmp_, k4_);
    for (std::size_t i = 0; i < size_; ++i) y[i] += dt / 6.0 * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
  }

  /// Trapezoidal channel mass (end nodes at half weight) plus robot_width
  /// times the sum of all robot states.
  double total_mass(std::span<const double> y) const {
    double mass = 0.0;
    for (std::size_t s = 0; s < segs_.size(); ++s) {
      for (std::size_t k = 0; k + 1 < cells_; ++k) mass += y[offsets_[s] + k] * spacing_[s];
      mass += 0.5 * spacing_[s] * (endpoint_value(segs_[s].left, y) + endpoint_value(segs_[s].right, y));
    }
    for (std::size_t i = 0; i < n_ * m_; ++i) mass += y[i] * robot_width();
    return mass;
  }

 private:
  const ReactionModel* model_;
  std::size_t n_, m_;
  std::vector<Segment> segs_;
  double mu_, kappa_;
  std::size_t cells_;
  std::vector<std::size_t> offsets_;
  std::vector<double> spacing_;
  std::vector<double> capacity_;  // per robot, divides the signal-state derivative
  std::size_t size_ = 0;
  mutable std::vector<double> k1_, k2_, k3_, k4_, tmp_, flux_;
};

struct ProfileSnapshot {
  double t;
  std::vector<std::vector<double>> segments;  // nodes 0..M including the Dirichlet ends
};

struct SimTrace {
  std::size_t n = 0, m = 0;
  StateVector x_star;
  std::vector<double> times;
  std::vector<std::vector<double>> robot_states;  // per sample: robot-major n*m values
  std::vector<double> deviation;                  // ||x - x*||_inf over all robots
  std::vector<ProfileSnapshot> profiles;
  Classification classification;
  double dt = 0.0;
};

namespace detail {

inline double fit_slope(const std::vector<double>& t, const std::vector<double>& v) {
  const double n = static_cast<double>(t.size());
  double st = 0, sv = 0, stt = 0, stv = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    st += t[k];
    sv += v[k];
    stt += t[k] * t[k];
    stv += t[k] * v[k];
  }
  const double den = n * stt - st * st;
  return den == 0.0 ? 0.0 : (n * stv - st * sv) / den;
}

}  // namespace detail

inline constexpr double kRateThreshold = 1e-4;

/// Classifies a deviation signal by the slope of its log peak envelope over
/// the final window_fraction of the trace.
inline Classification classify(std::span<const double> times, std::span<const double> dev,
                               double window_fraction = 0.5) {
  if (times.size() != dev.size()) throw std::invalid_argument("classify: length mismatch");
  if (times.size() < 100) throw std::invalid_argument("classify: need at least 100 samples");
  Classification out;
  const double dmax = *std::max_element(dev.begin(), dev.end());
  if (dmax == 0.0 || dev.back() <= 1e-10 * dmax) {
    out.cls = ResponseClass::Decaying;
    out.rate = -std::numeric_limits<double>::infinity();
    return out;
  }
  const double t0 = times.front(), t1 = times.back();
  const double start = t1 - window_fraction * (t1 - t0);
  std::size_t w0 = 0;
  while (w0 < times.size() && times[w0] < start) ++w0;
  w0 = std::min(w0, times.size() - 3);

  std::vector<double> pt, pv;
  for (std::size_t k = std::max<std::size_t>(w0, 1); k + 1 < dev.size(); ++k)
    if (dev[k] > dev[k - 1] && dev[k] >= dev[k + 1] && dev[k] > 0.0) {
      pt.push_back(times[k]);
      pv.push_back(std::log(dev[k]));
    }
  out.peaks = pt.size();
  auto by_rate = [&](double slope, ResponseClass flat) {
    out.rate = slope;
    out.cls = slope < -kRateThreshold ? ResponseClass::Decaying
              : slope > kRateThreshold ? ResponseClass::Diverging
                                       : flat;
    return out;
  };
  if (pt.size() >= 3) return by_rate(detail::fit_slope(pt, pv), ResponseClass::Oscillating);

  bool non_increasing = true, non_decreasing = true;
  for (std::size_t k = w0 + 1; k < dev.size(); ++k) {
    if (dev[k] > dev[k - 1]) non_increasing = false;
    if (dev[k] < dev[k - 1]) non_decreasing = false;
  }
  if (!non_increasing && !non_decreasing) return out;
  std::vector<double> wt, wv;
  for (std::size_t k = w0; k < dev.size(); ++k)
    if (dev[k] > 0.0) {
      wt.push_back(times[k]);
      wv.push_back(std::log(dev[k]));
    }
  if (wt.size() < 2) return out;
  return by_rate(detail::fit_slope(wt, wv), ResponseClass::Undecided);
}

inline Classification classify(const SimTrace& trace, double window_fraction = 0.5) {
  return classify(trace.times, trace.deviation, window_fraction);
}

/// Integrates the ring from x* + perturbation to t_final and classifies the
/// response.
inline SimTrace run(const ReactionModel& model, const ChannelTopology& topo, const SimConfig& cfg,
                    std::span<const double> x_star) {
  cfg.validate(topo, model.m);
  if (x_star.size() != model.m) throw std::invalid_argument("run: x_star has wrong length");
  const auto sys = CoupledSystem::for_topology(model, topo, cfg.cells_per_segment);
  const double channel_value = cfg.channel_init == ChannelInit::Equilibrium ? x_star.back() : 0.0;
  std::vector<std::vector<double>> pert = cfg.perturbation;
  if (pert.empty()) pert.assign(1, std::vector<double>(model.m, 0.1));
  std::vector<double> y = sys.initial_state(x_star, pert, channel_value);

  const double dt_max = cfg.effective_dt(topo);
  const auto steps = static_cast<std::size_t>(std::ceil(cfg.t_final / dt_max - 1e-9));
  const double dt = cfg.t_final / static_cast<double>(steps);
  const std::size_t stride = std::max<std::size_t>(1, steps / cfg.samples);
  const std::size_t profile_stride =
      cfg.profile_samples ? std::max<std::size_t>(1, steps / cfg.profile_samples) : 0;

  SimTrace tr;
  tr.n = topo.n;
  tr.m = model.m;
  tr.x_star.assign(x_star.begin(), x_star.end());
  tr.dt = dt;
  const std::size_t nm = topo.n * model.m;
  auto record = [&](std::size_t k) {
    const double t = static_cast<double>(k) * dt;
    double d = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (!std::isfinite(y[i])) throw NonFinite("run: non-finite state at t = " + std::to_string(t));
    for (std::size_t i = 0; i < nm; ++i) d = std::max(d, std::abs(y[i] - x_star[i % model.m]));
    tr.times.push_back(t);
    tr.robot_states.emplace_back(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(nm));
    tr.deviation.push_back(d);
  };
  auto snapshot = [&](std::size_t k) {
    ProfileSnapshot p{static_cast<double>(k) * dt, {}};
    for (std::size_t s = 0; s < sys.segments().size(); ++s) {
      std::vector<double> nodes;
      nodes.push_back(sys.endpoint_value(sys.segments()[s].left, y));
      for (std::size_t c = 0; c < sys.interior_nodes(); ++c) nodes.push_back(y[sys.segment_offset(s) + c]);
      nodes.push_back(sys.endpoint_value(sys.segments()[s].right, y));
      p.segments.push_back(std::move(nodes));
    }
    tr.profiles.push_back(std::move(p));
  };

  record(0);
  if (profile_stride) snapshot(0);
  for (std::size_t k = 1; k <= steps; ++k) {
    sys.step(y, dt);
    if (k % stride == 0 || k == steps) record(k);
    if (profile_stride && (k % profile_stride == 0 || k == steps)) snapshot(k);
  }
  tr.classification = classify(tr, cfg.window_fraction);
  return tr;
}

}  // namespace mcstab
