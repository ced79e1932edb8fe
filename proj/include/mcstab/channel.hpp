#pragma once

// Diffusion channel transfer functions and the robot-to-flux channel matrix
// G(s). With s_hat = sqrt(s / mu):
//   g_tan(s; a, b) = -s_hat (coth(a s_hat) + coth(b s_hat))
//   g_sin(s; L)    =  s_hat / sinh(L s_hat)
// Both are even in s_hat, so the square-root branch does not matter.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "mcstab/errors.hpp"
#include "mcstab/numerics.hpp"

namespace mcstab {

enum class Boundary { Periodic, DirichletZeroEnds };
enum class TimeUnit { Minutes, Seconds };

struct ChannelTopology {
  std::size_t n = 1;
  // Periodic: n entries, lengths[0] joins robot n to robot 1.
  // DirichletZeroEnds: n + 1 entries, walls at both outer ends.
  std::vector<double> lengths;  // um
  double mu_um2_per_s = 83.0;
  Boundary boundary = Boundary::Periodic;
  TimeUnit time_unit = TimeUnit::Minutes;
  // mu / (robot size): scale of the flux entering a robot, um per time unit.
  // 1 reproduces the channel matrix exactly as assembled by assemble_G.
  double flux_gain = 1.0;

  /// Diffusion coefficient in um^2 per declared time unit.
  double mu() const { return time_unit == TimeUnit::Minutes ? mu_um2_per_s * 60.0 : mu_um2_per_s; }

  std::size_t segment_count() const { return boundary == Boundary::Periodic ? n : n + 1; }

  double left_length(std::size_t robot) const { return lengths[robot]; }
  double right_length(std::size_t robot) const {
    return boundary == Boundary::Periodic ? lengths[(robot + 1) % n] : lengths[robot + 1];
  }

  bool is_circulant() const {
    if (boundary != Boundary::Periodic) return false;
    for (double l : lengths)
      if (l != lengths.front()) return false;
    return true;
  }

  void validate() const {
    if (n < 1) throw ConfigError("topology: n must be >= 1");
    if (lengths.size() != segment_count())
      throw ConfigError("topology: expected " + std::to_string(segment_count()) + " lengths, got " +
                        std::to_string(lengths.size()));
    for (double l : lengths)
      if (!(l > 0.0) || !std::isfinite(l)) throw ConfigError("topology: lengths must be positive");
    if (!(mu_um2_per_s > 0.0) || !std::isfinite(mu_um2_per_s))
      throw ConfigError("topology: mu must be positive");
    if (!(flux_gain > 0.0) || !std::isfinite(flux_gain))
      throw ConfigError("topology: flux_gain must be positive");
  }

  static ChannelTopology ring(std::size_t n, double length, double mu_um2_per_s,
                              TimeUnit unit = TimeUnit::Minutes, double flux_gain = 1.0) {
    ChannelTopology t{n, std::vector<double>(n, length), mu_um2_per_s, Boundary::Periodic, unit, flux_gain};
    t.validate();
    return t;
  }
};

/// Principal square root of s / mu (cut on the negative real axis).
inline cplx diffusion_frequency(cplx s, double mu) { return std::sqrt(s / mu); }

namespace detail {

inline void check_pole(cplx s, double L, double mu, const char* what) {
  if (s.real() >= 0.0) return;
  // Poles of coth(L s_hat) and 1/sinh(L s_hat): s = -mu (k pi / L)^2, k >= 1.
  const double scale = mu / (L * L);
  const double kk = std::sqrt(-s.real() / scale) / std::numbers::pi;
  const double k = std::max(1.0, std::round(kk));
  const cplx pole(-scale * (k * std::numbers::pi) * (k * std::numbers::pi), 0.0);
  if (std::abs(s - pole) < 1e-12 * scale)
    throw PoleProximity(std::string(what) + ": s is within 1e-12*mu/L^2 of the pole at " +
                        std::to_string(pole.real()));
}

// Below this |L s_hat| a 4-term Taylor series in (L s_hat)^2 is used.
inline constexpr double kSeriesRadius = 1e-3;
inline constexpr double kAsymptoticRe = 350.0;

// exp(z) - 1 without cancellation for small |z|.
inline cplx expm1c(cplx z) {
  const double x = z.real(), y = z.imag();
  const double sh = std::sin(0.5 * y);
  return {std::expm1(x) * std::cos(y) - 2.0 * sh * sh, std::exp(x) * std::sin(y)};
}

}  // namespace detail

/// s_hat * coth(L s_hat) from either square root s_hat of s / mu. The value is
/// even in s_hat; the root is normalized to Re >= 0 before evaluation.
inline cplx coth_term_from_root(cplx sh, double L) {
  if (sh.real() < 0.0 || (sh.real() == 0.0 && sh.imag() < 0.0)) sh = -sh;
  const cplx z = L * sh;
  if (std::abs(z) < detail::kSeriesRadius) {
    const cplx z2 = z * z;
    // z coth z = 1 + z^2/3 - z^4/45 + 2 z^6/945
    return (1.0 + z2 * (1.0 / 3.0 + z2 * (-1.0 / 45.0 + z2 * (2.0 / 945.0)))) / L;
  }
  if (z.real() > detail::kAsymptoticRe) return sh;
  const cplx e = std::exp(-2.0 * z);
  return sh * (1.0 + e) / -detail::expm1c(-2.0 * z);
}

/// s_hat / sinh(L s_hat) from either square root. Returns exactly 0 once
/// exp(-Re(L s_hat)) underflows.
inline cplx csch_term_from_root(cplx sh, double L) {
  if (sh.real() < 0.0 || (sh.real() == 0.0 && sh.imag() < 0.0)) sh = -sh;
  const cplx z = L * sh;
  if (std::abs(z) < detail::kSeriesRadius) {
    const cplx z2 = z * z;
    // z / sinh z = 1 - z^2/6 + 7 z^4/360 - 31 z^6/15120
    return (1.0 + z2 * (-1.0 / 6.0 + z2 * (7.0 / 360.0 + z2 * (-31.0 / 15120.0)))) / L;
  }
  if (z.real() > detail::kAsymptoticRe) {
    const cplx v = 2.0 * sh * std::exp(-z);
    return std::isfinite(v.real()) && std::isfinite(v.imag()) ? v : cplx{};
  }
  return 2.0 * sh * std::exp(-z) / -detail::expm1c(-2.0 * z);
}

/// s_hat * coth(L s_hat) on the principal branch.
inline cplx coth_term(cplx s, double L, double mu) {
  detail::check_pole(s, L, mu, "coth_term");
  return coth_term_from_root(diffusion_frequency(s, mu), L);
}

/// s_hat / sinh(L s_hat) on the principal branch.
inline cplx csch_term(cplx s, double L, double mu) {
  detail::check_pole(s, L, mu, "csch_term");
  return csch_term_from_root(diffusion_frequency(s, mu), L);
}

/// Diagonal entry for a robot with channels of length L_left and L_right.
inline cplx g_tan(cplx s, double L_left, double L_right, double mu) {
  return -(coth_term(s, L_left, mu) + coth_term(s, L_right, mu));
}

/// Coupling through a channel of length L.
inline cplx g_sin(cplx s, double L, double mu) { return csch_term(s, L, mu); }

struct ChannelSample {
  cplx s;
  ComplexMatrix G;
};

/// Channel matrix G(s): W = G(s) Y maps robot outputs to net channel fluxes.
/// Entries for a periodic ring with n <= 2 accumulate where the wrap-around
/// coupling lands on an existing entry.
inline ChannelSample assemble_G(const ChannelTopology& topo, cplx s) {
  topo.validate();
  const std::size_t n = topo.n;
  const double mu = topo.mu();
  ChannelSample out{s, ComplexMatrix(n, n)};
  auto& G = out.G;
  auto guarded = [&](std::size_t r, std::size_t c, auto&& fn) {
    try {
      return fn();
    } catch (const PoleProximity& e) {
      throw PoleProximity(std::string(e.what()) + " [entry (" + std::to_string(r + 1) + "," +
                          std::to_string(c + 1) + ")]");
    }
  };
  for (std::size_t i = 0; i < n; ++i)
    G(i, i) = guarded(i, i, [&] { return g_tan(s, topo.left_length(i), topo.right_length(i), mu); });

  const std::size_t couplings = topo.boundary == Boundary::Periodic ? n : n - 1;
  for (std::size_t i = 0; i < couplings; ++i) {
    const std::size_t j = (i + 1) % n;
    const cplx g = guarded(i, j, [&] { return g_sin(s, topo.right_length(i), mu); });
    G(i, j) += g;
    if (i != j) G(j, i) += g;
    else G(i, i) += g;  // n == 1: the channel connects the robot to itself at both ends
  }
  return out;
}

}  // namespace mcstab
