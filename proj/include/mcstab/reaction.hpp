#pragma once

// Robot reaction models: vector fields, homogeneous equilibria, Jacobians and
// the robot transfer function h(s) = C (sI - A)^-1 B with B = C^T = e_m.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcstab/errors.hpp"
#include "mcstab/numerics.hpp"
#include "mcstab/parallel.hpp"

namespace mcstab {

using StateVector = std::vector<double>;
using ParamMap = std::map<std::string, double>;

/// A reaction network x' = f(x) + B w, y = C x. The last state is the signal
/// concentration outside the robot; B and C select it.
struct ReactionModel {
  std::string name;
  std::size_t m = 0;
  ParamMap params;
  std::function<StateVector(std::span<const double>)> f;
  std::function<RealMatrix(std::span<const double>)> analytic_jacobian;  // may be empty
};

/// Activator-repressor-diffuser circuit. Concentrations in uM, rates per
/// minute.
struct ArdParams {
  double delta_a = 0, delta_r = 0, delta_d = 0;
  double gamma_a = 0, gamma_r = 0, gamma_d = 0;
  double K_a = 0, K_r = 0, K_d = 0;
  double k = 0.05;

  void validate() const {
    const std::pair<const char*, double> all[] = {
        {"delta_a", delta_a}, {"delta_r", delta_r}, {"delta_d", delta_d}, {"gamma_a", gamma_a},
        {"gamma_r", gamma_r}, {"gamma_d", gamma_d}, {"K_a", K_a},         {"K_r", K_r},
        {"K_d", K_d},         {"k", k}};
    for (const auto& [name, v] : all)
      if (!(v > 0.0) || !std::isfinite(v))
        throw ConfigError(std::string("ard parameter '") + name + "' must be positive and finite");
  }

  ParamMap to_map() const {
    return {{"delta_a", delta_a}, {"delta_r", delta_r}, {"delta_d", delta_d}, {"gamma_a", gamma_a},
            {"gamma_r", gamma_r}, {"gamma_d", gamma_d}, {"K_a", K_a},         {"K_r", K_r},
            {"K_d", K_d},         {"k", k}};
  }

  static ArdParams from_map(const ParamMap& p) {
    ArdParams a;
    const std::pair<const char*, double*> fields[] = {
        {"delta_a", &a.delta_a}, {"delta_r", &a.delta_r}, {"delta_d", &a.delta_d},
        {"gamma_a", &a.gamma_a}, {"gamma_r", &a.gamma_r}, {"gamma_d", &a.gamma_d},
        {"K_a", &a.K_a},         {"K_r", &a.K_r},         {"K_d", &a.K_d},
        {"k", &a.k}};
    for (const auto& [key, value] : p) {
      auto it = std::find_if(std::begin(fields), std::end(fields),
                             [&](const auto& f) { return key == f.first; });
      if (it == std::end(fields)) throw ConfigError("ard: unknown parameter '" + key + "'");
      *it->second = value;
    }
    for (const auto& [name, ptr] : fields)
      if (std::string(name) != "k" && !p.count(name))
        throw ConfigError(std::string("ard: missing parameter '") + name + "'");
    a.validate();
    return a;
  }
};

namespace detail {
inline double hill_act(double x, double K) { return x * x / (K * K + x * x); }
inline double hill_rep(double x, double K) { return K * K / (K * K + x * x); }
inline double hill_act_dx(double x, double K) {
  const double d = K * K + x * x;
  return 2.0 * x * K * K / (d * d);
}
inline double hill_rep_dx(double x, double K) {
  const double d = K * K + x * x;
  return -2.0 * x * K * K / (d * d);
}
}  // namespace detail

/// State order (x_a, x_r, x_d, x_e).
inline StateVector ard_vector_field(const ArdParams& p, std::span<const double> x) {
  if (x.size() != 4) throw std::invalid_argument("ard_vector_field: state must have 4 entries");
  using namespace detail;
  const double xa = x[0], xr = x[1], xd = x[2], xe = x[3];
  const double act = hill_act(xa, p.K_a);
  const double rep_r = hill_rep(xr, p.K_r);
  return {-p.delta_a * xa + p.gamma_a * act * rep_r,
          -p.delta_r * xr + p.gamma_r * act * hill_rep(xd, p.K_d),
          -p.delta_d * xd + p.gamma_d * rep_r + p.k * (xe - xd),
          p.k * (xd - xe)};
}

inline RealMatrix ard_jacobian(const ArdParams& p, std::span<const double> x) {
  if (x.size() != 4) throw std::invalid_argument("ard_jacobian: state must have 4 entries");
  using namespace detail;
  const double xa = x[0], xr = x[1], xd = x[2];
  const double act = hill_act(xa, p.K_a), dact = hill_act_dx(xa, p.K_a);
  const double rep_r = hill_rep(xr, p.K_r), drep_r = hill_rep_dx(xr, p.K_r);
  const double rep_d = hill_rep(xd, p.K_d), drep_d = hill_rep_dx(xd, p.K_d);
  return RealMatrix{
      {-p.delta_a + p.gamma_a * dact * rep_r, p.gamma_a * act * drep_r, 0.0, 0.0},
      {p.gamma_r * dact * rep_d, -p.delta_r, p.gamma_r * act * drep_d, 0.0},
      {0.0, p.gamma_d * drep_r, -p.delta_d - p.k, p.k},
      {0.0, 0.0, p.k, -p.k}};
}

inline ReactionModel make_ard_model(const ArdParams& p) {
  p.validate();
  return {"ard", 4, p.to_map(),
          [p](std::span<const double> x) { return ard_vector_field(p, x); },
          [p](std::span<const double> x) { return ard_jacobian(p, x); }};
}

/// Affine model f(x) = A x + b.
inline ReactionModel make_affine_model(const RealMatrix& A, std::vector<double> b) {
  if (!A.square() || b.size() != A.rows()) throw std::invalid_argument("make_affine_model: shape mismatch");
  ParamMap params;
  const std::size_t m = A.rows();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j)
      params["a_" + std::to_string(i + 1) + "_" + std::to_string(j + 1)] = A(i, j);
    params["b_" + std::to_string(i + 1)] = b[i];
  }
  return {"linear", m, std::move(params),
          [A, b](std::span<const double> x) {
            auto y = multiply(A, x);
            for (std::size_t i = 0; i < y.size(); ++i) y[i] += b[i];
            return y;
          },
          [A](std::span<const double>) { return A; }};
}

/// f(x) = -delta x with a single state.
inline ReactionModel make_linear_decay(double delta) {
  if (!(delta > 0.0) || !std::isfinite(delta))
    throw ConfigError("linear_decay: 'delta' must be positive and finite");
  auto model = make_affine_model(RealMatrix{{-delta}}, {0.0});
  model.name = "linear_decay";
  model.params = {{"delta", delta}};
  return model;
}

/// Registry lookup by name: "ard", "linear_decay" (param delta) and "linear"
/// (params a_i_j and b_i, 1-based, dimension inferred).
inline ReactionModel make_model(const std::string& name, const ParamMap& params) {
  if (name == "ard") return make_ard_model(ArdParams::from_map(params));
  if (name == "linear_decay") {
    for (const auto& [k, v] : params)
      if (k != "delta") throw ConfigError("linear_decay: unknown parameter '" + k + "'");
    auto it = params.find("delta");
    if (it == params.end()) throw ConfigError("linear_decay: missing parameter 'delta'");
    return make_linear_decay(it->second);
  }
  if (name == "linear") {
    std::size_t m = 0;
    while (params.count("b_" + std::to_string(m + 1))) ++m;
    if (m == 0) throw ConfigError("linear: needs b_1..b_m and a_i_j");
    if (params.size() != m * m + m) throw ConfigError("linear: expected exactly m*m + m parameters");
    RealMatrix A(m, m);
    std::vector<double> b(m);
    for (std::size_t i = 0; i < m; ++i) {
      b[i] = params.at("b_" + std::to_string(i + 1));
      for (std::size_t j = 0; j < m; ++j) {
        const auto key = "a_" + std::to_string(i + 1) + "_" + std::to_string(j + 1);
        auto it = params.find(key);
        if (it == params.end()) throw ConfigError("linear: missing parameter '" + key + "'");
        A(i, j) = it->second;
      }
    }
    return make_affine_model(A, std::move(b));
  }
  throw ConfigError("unknown model '" + name + "'");
}

/// Central differences with h_j = 1e-6 (1 + |x_j|).
inline RealMatrix finite_difference_jacobian(const ReactionModel& model, std::span<const double> x) {
  const std::size_t m = model.m;
  RealMatrix J(m, m);
  StateVector xp(x.begin(), x.end());
  for (std::size_t j = 0; j < m; ++j) {
    const double h = 1e-6 * (1.0 + std::abs(x[j]));
    xp[j] = x[j] + h;
    const auto fp = model.f(xp);
    xp[j] = x[j] - h;
    const auto fm = model.f(xp);
    xp[j] = x[j];
    for (std::size_t i = 0; i < m; ++i) J(i, j) = (fp[i] - fm[i]) / (2.0 * h);
  }
  return J;
}

inline RealMatrix jacobian(const ReactionModel& model, std::span<const double> x) {
  if (model.analytic_jacobian) return model.analytic_jacobian(x);
  return finite_difference_jacobian(model, x);
}

struct Equilibrium {
  StateVector x_star;
  double residual = 0.0;  // ||f(x*)||_inf
  RealMatrix jacobian = RealMatrix(1, 1);
};

struct NewtonOptions {
  int max_iterations = 200;
  double residual_tol = 1e-9;
  double min_damping = 1.0 / 1048576.0;  // 2^-20
};

namespace detail {
inline double norm_inf(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}
}  // namespace detail

/// Damped Newton iteration on f(x) = 0 from x0. The step is halved while the
/// residual grows.
inline Equilibrium find_equilibrium(const ReactionModel& model, std::span<const double> x0,
                                    const NewtonOptions& opt = {}) {
  if (x0.size() != model.m) throw std::invalid_argument("find_equilibrium: x0 has wrong length");
  StateVector x(x0.begin(), x0.end());
  StateVector fx = model.f(x);
  double res = detail::norm_inf(fx);
  bool converged = false;
  for (int it = 0; it < opt.max_iterations; ++it) {
    const RealMatrix J = jacobian(model, x);
    StateVector neg_f(fx.size());
    for (std::size_t i = 0; i < fx.size(); ++i) neg_f[i] = -fx[i];
    StateVector dx;
    try {
      dx = lu_solve(J, std::span<const double>(neg_f));
    } catch (const SingularMatrix&) {
      throw NoConvergence("find_equilibrium: singular Jacobian at iteration " + std::to_string(it));
    }
    const double step = detail::norm_inf(dx);
    if (res <= opt.residual_tol && step <= 1e-13 * (1.0 + detail::norm_inf(x))) {
      converged = true;
      break;
    }
    double t = 1.0;
    StateVector trial(x.size());
    StateVector ft;
    double rt = 0.0;
    for (;;) {
      for (std::size_t i = 0; i < x.size(); ++i) trial[i] = x[i] + t * dx[i];
      ft = model.f(trial);
      rt = detail::norm_inf(ft);
      if (std::isfinite(rt) && (rt <= res || t <= opt.min_damping)) break;
      t *= 0.5;
    }
    if (t * step < 1e-14 && res > opt.residual_tol)
      throw NoConvergence("find_equilibrium: step below 1e-14 with residual " + std::to_string(res));
    x = trial;
    fx = std::move(ft);
    res = rt;
  }
  if (!converged && res > opt.residual_tol)
    throw NoConvergence("find_equilibrium: no convergence in " + std::to_string(opt.max_iterations) +
                        " iterations, residual " + std::to_string(res));
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] < -1e-9)
      throw NegativeState("find_equilibrium: component " + std::to_string(i + 1) + " converged to " +
                          std::to_string(x[i]));
  return {x, res, jacobian(model, x)};
}

/// Runs find_equilibrium from a grid of seeds ({0.1, 1, 5, 10, 20} per
/// coordinate, at most 625 seeds) and returns the distinct equilibria found
/// (within 1e-6), sorted lexicographically.
inline std::vector<Equilibrium> find_equilibria(const ReactionModel& model) {
  static constexpr double kSeedValues[] = {0.1, 1.0, 5.0, 10.0, 20.0};
  constexpr std::size_t kMaxSeeds = 625;
  std::size_t total = 1;
  for (std::size_t j = 0; j < model.m && total < kMaxSeeds; ++j) total *= 5;
  total = std::min(total, kMaxSeeds);

  std::vector<std::optional<Equilibrium>> found(total);
  parallel_for(total, [&](std::size_t s) {
    StateVector x0(model.m, kSeedValues[0]);
    std::size_t code = s;
    for (std::size_t j = 0; j < model.m && code > 0; ++j) {
      x0[j] = kSeedValues[code % 5];
      code /= 5;
    }
    try {
      found[s] = find_equilibrium(model, x0);
    } catch (const NoConvergence&) {
    } catch (const NegativeState&) {
    }
  });

  std::vector<Equilibrium> out;
  for (auto& e : found) {
    if (!e) continue;
    const bool dup = std::any_of(out.begin(), out.end(), [&](const Equilibrium& o) {
      for (std::size_t i = 0; i < model.m; ++i)
        if (std::abs(o.x_star[i] - e->x_star[i]) > 1e-6) return false;
      return true;
    });
    if (!dup) out.push_back(std::move(*e));
  }
  std::sort(out.begin(), out.end(),
            [](const Equilibrium& a, const Equilibrium& b) { return a.x_star < b.x_star; });
  return out;
}

/// h(s) = e_m^T (sI - A)^-1 e_m.
inline cplx robot_tf(const RealMatrix& A, cplx s) {
  const std::size_t m = A.rows();
  ComplexMatrix M(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) M(i, j) = -A(i, j);
  for (std::size_t i = 0; i < m; ++i) M(i, i) += s;
  std::vector<cplx> rhs(m, cplx{});
  rhs[m - 1] = 1.0;
  try {
    return lu_solve(M, std::span<const cplx>(rhs))[m - 1];
  } catch (const SingularMatrix&) {
    throw ResolventSingular("robot_tf: s = (" + std::to_string(s.real()) + ", " + std::to_string(s.imag()) +
                            ") is a pole of the resolvent");
  }
}

}  // namespace mcstab
