#pragma once

// Stability of circulant rings of identical robots.
//
// For a ring G(s) = circ(g_tan, g_sin, 0, ..., 0, g_sin) the DFT matrix
// diagonalizes G, so det(I - kappa h G) = prod_i (1 - kappa h lambda_i) with
//   lambda_i(s) = g_tan(s) + 2 cos(2 pi (i - 1) / n) g_sin(s).
// Each factor is checked with the Nyquist criterion on the open loop
// L_i(jw) = -kappa h(jw) lambda_i(jw): Z_i = N_i + P, where N_i counts
// clockwise encirclements of -1 (clockwise is positive throughout this
// library) and P counts eigenvalues of the robot Jacobian with Re > 0.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcstab/channel.hpp"
#include "mcstab/errors.hpp"
#include "mcstab/numerics.hpp"
#include "mcstab/parallel.hpp"
#include "mcstab/reaction.hpp"

namespace mcstab {

/// 2 cos(2 pi (i - 1) / n) for the 1-based branch index i.
inline double coupling_factor(std::size_t n, std::size_t i) {
  if (n == 0 || i < 1 || i > n) throw std::invalid_argument("coupling_factor: index out of range");
  const std::size_t k = i - 1;
  // Exact values where the cosine is rational keep mirrored branches identical.
  if (4 * k == n || 4 * k == 3 * n) return 0.0;
  if (2 * k == n) return -2.0;
  if (k == 0) return 2.0;
  const std::size_t folded = std::min(k, n - k);
  return 2.0 * std::cos(2.0 * std::numbers::pi * static_cast<double>(folded) / static_cast<double>(n));
}

/// Number of distinct coupling factors: floor(n/2) + 1 (n for n <= 2).
inline std::size_t distinct_branch_count(std::size_t n) { return std::min(n, n / 2 + 1); }

/// Branch with the same coupling factor among 1..distinct_branch_count(n).
inline std::size_t representative_branch(std::size_t n, std::size_t i) {
  return i <= distinct_branch_count(n) ? i : n - i + 2;
}

inline cplx circulant_eigenvalue(const ChannelTopology& topo, std::size_t i, cplx s) {
  if (!topo.is_circulant()) throw NotCirculant("circulant_eigenvalue: topology is not a uniform periodic ring");
  if (i < 1 || i > topo.n) throw std::invalid_argument("circulant_eigenvalue: branch index out of range");
  const double L = topo.lengths.front();
  const double mu = topo.mu();
  return g_tan(s, L, L, mu) + coupling_factor(topo.n, i) * g_sin(s, L, mu);
}

/// F(r, c) = alpha^(r c) / sqrt(n), alpha = exp(-j 2 pi / n), 0-based r, c.
inline ComplexMatrix dft_matrix(std::size_t n) {
  if (n == 0) throw std::invalid_argument("dft_matrix: n must be >= 1");
  ComplexMatrix F(n, n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t k = (r * c) % n;
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      F(r, c) = std::polar(scale, ang);
    }
  return F;
}

/// det(I - kappa diag(h) G).
inline cplx char_det(std::span<const cplx> h, const ComplexMatrix& G, double kappa = 1.0) {
  const std::size_t n = G.rows();
  if (!G.square() || h.size() != n) throw std::invalid_argument("char_det: shape mismatch");
  ComplexMatrix M = ComplexMatrix::identity(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) M(i, j) -= kappa * h[i] * G(i, j);
  return determinant(M);
}

/// Homogeneous robots: det(I - kappa h(s) G(s)) from the assembled channel
/// matrix.
inline cplx char_det(cplx h, const ChannelTopology& topo, cplx s) {
  const auto sample = assemble_G(topo, s);
  const std::vector<cplx> hv(topo.n, h);
  return char_det(hv, sample.G, topo.flux_gain);
}

/// prod_i (1 - kappa h(s) lambda_i(s)) over all n branches.
inline cplx branch_product(cplx h, const ChannelTopology& topo, cplx s) {
  cplx p = 1.0;
  for (std::size_t i = 1; i <= topo.n; ++i) p *= 1.0 - topo.flux_gain * h * circulant_eigenvalue(topo, i, s);
  return p;
}

inline constexpr double kMarginalRe = 1e-9;

/// Eigenvalues of A with Re >= 1e-9. Refuses (BoundaryAmbiguous) when any
/// eigenvalue has |Re| < 1e-9.
inline int count_rhp_poles(const RealMatrix& A) {
  const auto sp = eig_real(A);
  int count = 0;
  for (const auto& e : sp.eigenvalues) {
    if (std::abs(e.real()) < kMarginalRe)
      throw BoundaryAmbiguous("count_rhp_poles: eigenvalue (" + std::to_string(e.real()) + ", " +
                              std::to_string(e.imag()) + ") lies on the imaginary axis");
    if (e.real() >= kMarginalRe) ++count;
  }
  return count;
}

/// Clockwise-positive winding number of the closed polyline (last vertex joins
/// the first) around center.
inline int winding_number(std::span<const cplx> contour, cplx center) {
  if (contour.size() < 2) return 0;
  double total = 0.0;
  for (std::size_t k = 0; k < contour.size(); ++k) {
    const cplx a = contour[k] - center;
    const cplx b = contour[(k + 1) % contour.size()] - center;
    if (std::abs(a) < 1e-9)
      throw ThroughCriticalPoint("winding_number: vertex " + std::to_string(k) + " within 1e-9 of center");
    total += std::arg(b / a);
  }
  const double turns = -total / (2.0 * std::numbers::pi);
  const double rounded = std::round(turns);
  if (std::abs(turns - rounded) >= 0.01)
    throw UnderResolved("winding_number: rounding residue " + std::to_string(std::abs(turns - rounded)));
  return static_cast<int>(rounded);
}

struct ContourGrid {
  double omega_min = 1e-6;
  double omega_max = 1e6;
  std::size_t points_per_decade = 50;
  int max_refinement_passes = 20;

  void validate() const {
    if (!(omega_min > 0.0) || !(omega_max > omega_min)) throw ConfigError("analysis: need 0 < omega_min < omega_max");
    if (points_per_decade < 1) throw ConfigError("analysis: points_per_decade must be >= 1");
  }

  /// Initial positive frequencies, log-spaced from omega_min to omega_max.
  std::vector<double> initial_omegas() const {
    validate();
    const double decades = std::log10(omega_max / omega_min);
    const auto count = static_cast<std::size_t>(std::ceil(decades * static_cast<double>(points_per_decade))) + 1;
    std::vector<double> w(count);
    for (std::size_t k = 0; k < count; ++k)
      w[k] = omega_min * std::pow(10.0, decades * static_cast<double>(k) / static_cast<double>(count - 1));
    w.back() = omega_max;
    return w;
  }
};

struct ContourPoint {
  double omega;
  cplx value;
};

using OpenLoop = std::function<cplx(cplx)>;

struct SpectralBranch {
  std::size_t index = 1;
  double coupling = 0.0;
  std::vector<ContourPoint> contour;  // omega from -omega_max to omega_max, including 0
  int encirclements = 0;              // clockwise-positive N
  double min_dist_to_minus1 = 0.0;
  int refinement_passes = 0;
};

namespace detail {

inline double point_segment_distance(cplx p, cplx a, cplx b) {
  const cplx d = b - a;
  const double len2 = std::norm(d);
  if (len2 == 0.0) return std::abs(p - a);
  const double t = std::clamp(((p - a) * std::conj(d)).real() / len2, 0.0, 1.0);
  return std::abs(p - (a + t * d));
}

inline bool needs_refinement(const ContourPoint& a, const ContourPoint& b) {
  const cplx da = a.value + 1.0, db = b.value + 1.0;
  const double dist = std::min(std::abs(da), std::abs(db));
  // Left for the critical-point check instead of refining forever.
  if (point_segment_distance(cplx(-1.0, 0.0), a.value, b.value) < 1e-6) return false;
  if (std::abs(std::arg(db / da)) > std::numbers::pi / 2) return true;
  return std::abs(b.value - a.value) > 0.1 * dist;
}

}  // namespace detail

/// Traces L(jw) for w >= 0 with adaptive bisection, mirrors it by conjugation
/// and counts clockwise encirclements of -1. The contour closes through
/// L(j inf) = 0; |L(j omega_max)| must already be below 0.5.
inline SpectralBranch trace_nyquist(const OpenLoop& loop, const ContourGrid& grid) {
  std::vector<ContourPoint> upper;
  upper.push_back({0.0, loop(cplx(0.0, 0.0))});
  for (double w : grid.initial_omegas()) upper.push_back({w, loop(cplx(0.0, w))});

  SpectralBranch br;
  for (int pass = 0;; ++pass) {
    std::vector<ContourPoint> next;
    next.reserve(upper.size() * 2);
    bool refined = false;
    for (std::size_t k = 0; k + 1 < upper.size(); ++k) {
      next.push_back(upper[k]);
      if (detail::needs_refinement(upper[k], upper[k + 1])) {
        refined = true;
        const double wa = upper[k].omega, wb = upper[k + 1].omega;
        const double mid = wa == 0.0 ? 0.5 * wb : std::sqrt(wa * wb);
        if (!(mid > wa && mid < wb))
          throw RefinementExhausted("trace_nyquist: frequency resolution exhausted near w = " + std::to_string(wa));
        next.push_back({mid, loop(cplx(0.0, mid))});
      }
    }
    next.push_back(upper.back());
    if (!refined) {
      br.refinement_passes = pass;
      break;
    }
    if (pass + 1 > grid.max_refinement_passes)
      throw RefinementExhausted("trace_nyquist: still under-resolved after " +
                                std::to_string(grid.max_refinement_passes) + " passes");
    upper = std::move(next);
  }

  for (const auto& p : upper)
    if (!std::isfinite(p.value.real()) || !std::isfinite(p.value.imag()))
      throw UnderResolved("trace_nyquist: non-finite open-loop value at w = " + std::to_string(p.omega));
  if (std::abs(upper.back().value) >= 0.5)
    throw ContourTruncated("trace_nyquist: |L(j omega_max)| = " + std::to_string(std::abs(upper.back().value)) +
                           " has not rolled off; raise omega_max");

  br.contour.reserve(2 * upper.size() - 1);
  for (std::size_t k = upper.size(); k-- > 1;) br.contour.push_back({-upper[k].omega, std::conj(upper[k].value)});
  br.contour.insert(br.contour.end(), upper.begin(), upper.end());

  double dmin = std::abs(br.contour.front().value + 1.0);
  const cplx minus1(-1.0, 0.0);
  for (std::size_t k = 0; k < br.contour.size(); ++k) {
    const auto& a = br.contour[k].value;
    const auto& b = br.contour[(k + 1) % br.contour.size()].value;
    dmin = std::min(dmin, detail::point_segment_distance(minus1, a, b));
  }
  br.min_dist_to_minus1 = dmin;
  if (dmin < 1e-6)
    throw ThroughCriticalPoint("trace_nyquist: trajectory passes within " + std::to_string(dmin) + " of -1");

  std::vector<cplx> poly(br.contour.size());
  for (std::size_t k = 0; k < poly.size(); ++k) poly[k] = br.contour[k].value;
  br.encirclements = winding_number(poly, minus1);
  return br;
}

/// Nyquist trace of branch i for a robot transfer function h.
inline SpectralBranch nyquist_branch(const OpenLoop& h, const ChannelTopology& topo, std::size_t i,
                                     const ContourGrid& grid) {
  const double kappa = topo.flux_gain;
  auto br = trace_nyquist([&](cplx s) { return -kappa * h(s) * circulant_eigenvalue(topo, i, s); }, grid);
  br.index = i;
  br.coupling = coupling_factor(topo.n, i);
  return br;
}

struct BranchRecord {
  std::size_t i = 1;
  double coupling = 0.0;
  int N = 0;
  int Z = 0;
  double min_dist_to_minus1 = 0.0;
  std::size_t points = 0;
  int refinement_passes = 0;
};

struct StabilityVerdict {
  StateVector equilibrium;
  double equilibrium_residual = 0.0;
  std::vector<cplx> open_loop_poles;  // eigenvalues of A
  int P = 0;
  std::vector<BranchRecord> branches;  // all n branches; mirrors share results
  bool stable = false;
  double det_product_residual = 0.0;
};

struct AnalysisOptions {
  ContourGrid grid;
  std::optional<StateVector> initial_guess;
  std::size_t det_check_points = 100;
};

/// Worst relative gap |det(I - kappa h G) - prod_i p_i| / (1 + |det|) on
/// log-spaced points of the imaginary axis.
inline double decomposition_residual(const OpenLoop& h, const ChannelTopology& topo, const ContourGrid& grid,
                                     std::size_t points) {
  double worst = 0.0;
  const double decades = std::log10(grid.omega_max / grid.omega_min);
  for (std::size_t k = 0; k < points; ++k) {
    const double w =
        grid.omega_min * std::pow(10.0, decades * static_cast<double>(k) / static_cast<double>(std::max<std::size_t>(points - 1, 1)));
    const cplx s(0.0, w);
    const cplx hv = h(s);
    const cplx d = char_det(hv, topo, s);
    const cplx p = branch_product(hv, topo, s);
    worst = std::max(worst, std::abs(d - p) / (1.0 + std::abs(d)));
  }
  return worst;
}

/// Verdict for a ring of robots with transfer function h and P open-loop
/// right-half-plane poles. Only the distinct branches are traced.
inline StabilityVerdict loop_verdict(const OpenLoop& h, int P, const ChannelTopology& topo, const ContourGrid& grid,
                                     std::size_t det_check_points = 100) {
  if (!topo.is_circulant()) throw NotCirculant("verdict: topology is not a uniform periodic ring");
  const std::size_t distinct = distinct_branch_count(topo.n);
  std::vector<std::optional<SpectralBranch>> traced(distinct);
  std::vector<std::string> refusals(distinct);
  parallel_for(distinct, [&](std::size_t k) {
    try {
      traced[k] = nyquist_branch(h, topo, k + 1, grid);
    } catch (const VerdictRefused& e) {
      refusals[k] = "branch " + std::to_string(k + 1) + ": " + e.what();
    }
  });
  std::string refused;
  for (const auto& r : refusals)
    if (!r.empty()) refused += (refused.empty() ? "" : "; ") + r;
  if (!refused.empty()) throw VerdictRefused("verdict refused: " + refused);

  StabilityVerdict v;
  v.P = P;
  v.stable = true;
  for (std::size_t i = 1; i <= topo.n; ++i) {
    const auto& br = *traced[representative_branch(topo.n, i) - 1];
    BranchRecord rec;
    rec.i = i;
    rec.coupling = coupling_factor(topo.n, i);
    rec.N = br.encirclements;
    rec.Z = br.encirclements + P;
    rec.min_dist_to_minus1 = br.min_dist_to_minus1;
    rec.points = br.contour.size();
    rec.refinement_passes = br.refinement_passes;
    if (rec.Z < 0)
      throw UnderResolved("verdict: branch " + std::to_string(i) + " gives Z = " + std::to_string(rec.Z) +
                          " < 0; contour under-resolved");
    if (rec.Z != 0) v.stable = false;
    v.branches.push_back(rec);
  }
  v.det_product_residual = decomposition_residual(h, topo, grid, det_check_points);
  return v;
}

/// Locates the homogeneous equilibrium: from the initial guess when given,
/// otherwise from the seed grid, which must yield exactly one equilibrium.
inline Equilibrium locate_equilibrium(const ReactionModel& model, const std::optional<StateVector>& initial_guess) {
  if (initial_guess) return find_equilibrium(model, *initial_guess);
  auto all = find_equilibria(model);
  if (all.empty()) throw NoConvergence("verdict: no equilibrium reached from the seed grid");
  if (all.size() > 1)
    throw ConfigError("verdict: " + std::to_string(all.size()) +
                      " equilibria found; set model.initial_guess to select one");
  return std::move(all.front());
}

inline StabilityVerdict verdict(const ReactionModel& model, const ChannelTopology& topo,
                                const AnalysisOptions& opts = {}) {
  if (!topo.is_circulant()) throw NotCirculant("verdict: topology is not a uniform periodic ring");
  const Equilibrium eq = locate_equilibrium(model, opts.initial_guess);
  const RealMatrix A = eq.jacobian;
  const int P = count_rhp_poles(A);
  auto v = loop_verdict([&A](cplx s) { return robot_tf(A, s); }, P, topo, opts.grid, opts.det_check_points);
  v.equilibrium = eq.x_star;
  v.equilibrium_residual = eq.residual;
  v.open_loop_poles = eig_real(A).eigenvalues;
  return v;
}

/// Newton iteration on an analytic function with a central-difference
/// derivative.
inline cplx polish_root(const std::function<cplx(cplx)>& fn, cplx s0, int max_iterations = 100) {
  cplx s = s0;
  for (int it = 0; it < max_iterations; ++it) {
    const double h = 1e-6 * (1.0 + std::abs(s));
    const cplx f = fn(s);
    const cplx df = (fn(s + h) - fn(s - h)) / (2.0 * h);
    if (df == cplx{}) break;
    const cplx ds = -f / df;
    s += ds;
    if (std::abs(ds) < 1e-13 * (1.0 + std::abs(s))) return s;
  }
  throw NoConvergence("polish_root: no convergence from (" + std::to_string(s0.real()) + ", " +
                      std::to_string(s0.imag()) + ")");
}

/// det(sI - A) (1 - kappa h(s) lambda_i(s)), the pole-free form of branch i's
/// characteristic function.
inline cplx branch_characteristic(const RealMatrix& A, const ChannelTopology& topo, std::size_t i, cplx s) {
  const std::size_t m = A.rows();
  ComplexMatrix M(m, m);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < m; ++c) M(r, c) = (r == c ? s : cplx{}) - A(r, c);
  const cplx d = determinant(M);
  cplx minor = 1.0;
  if (m > 1) {
    ComplexMatrix Mm(m - 1, m - 1);
    for (std::size_t r = 0; r + 1 < m; ++r)
      for (std::size_t c = 0; c + 1 < m; ++c) Mm(r, c) = M(r, c);
    minor = determinant(Mm);
  }
  return d - topo.flux_gain * circulant_eigenvalue(topo, i, s) * minor;
}

/// Closed-loop root with the largest real part over all distinct branches.
/// Newton is seeded from the eigenvalues of A, from sign changes of the branch
/// function along the real axis right of the first channel pole
/// -mu (pi / L)^2, and from a coarse grid in the upper half plane reaching
/// twice as far left.
inline cplx dominant_closed_loop_root(const RealMatrix& A, const ChannelTopology& topo) {
  if (!topo.is_circulant()) throw NotCirculant("dominant_closed_loop_root: topology is not a uniform periodic ring");
  const double L = topo.lengths.front();
  const double s_pole = -topo.mu() * std::numbers::pi * std::numbers::pi / (L * L);
  const auto eigs = eig_real(A).eigenvalues;
  double spread = 0.0;
  for (const auto& e : eigs) spread = std::max(spread, std::abs(e));
  const double kappa = topo.flux_gain;
  const double reach = 1.0 + spread + 4.0 * kappa / L + 4.0 * kappa * kappa / topo.mu();

  std::optional<cplx> best;
  for (std::size_t i = 1; i <= distinct_branch_count(topo.n); ++i) {
    auto p = [&](cplx s) { return branch_characteristic(A, topo, i, s); };
    std::vector<cplx> seeds;
    for (const auto& e : eigs) seeds.push_back(e + cplx(1e-3, 1e-3));
    constexpr int kScan = 2000;
    double prev = 0.0;
    for (int k = 1; k <= kScan; ++k) {
      const double s = s_pole + (reach - s_pole) * k / kScan;
      const double v = p(s).real();
      if (k > 1 && (v > 0.0) != (prev > 0.0)) seeds.emplace_back(s, 0.0);
      prev = v;
    }
    constexpr int kGrid = 16;
    for (int a = 1; a <= kGrid; ++a)
      for (int b = 1; b <= kGrid; ++b)
        seeds.emplace_back(2.0 * s_pole + (reach - 2.0 * s_pole) * a / (kGrid + 1), reach * b / kGrid);
    for (const auto& seed : seeds) {
      try {
        const cplx r = polish_root(p, seed);
        if (!best || r.real() > best->real()) best = r;
      } catch (const Error&) {
      }
    }
  }
  if (!best) throw NoConvergence("dominant_closed_loop_root: no seed converged");
  return *best;
}

struct SweepStep {
  double value;
  std::optional<bool> stable;  // empty: verdict refused (marginal)
};

struct SweepResult {
  double lo = 0, hi = 0;  // final bracket
  bool lo_stable = false;
  std::vector<SweepStep> steps;
  double boundary() const { return 0.5 * (lo + hi); }
};

/// Bisection on a stability predicate until the bracket is narrower than tol.
/// A refused verdict inside the bracket is taken as the boundary itself.
inline SweepResult find_stability_boundary(const std::function<std::optional<bool>(double)>& is_stable, double lo,
                                           double hi, double tol) {
  if (!(hi > lo) || !(tol > 0.0)) throw ConfigError("sweep: need lo < hi and tol > 0");
  SweepResult r;
  const auto at_lo = is_stable(lo);
  const auto at_hi = is_stable(hi);
  r.steps.push_back({lo, at_lo});
  r.steps.push_back({hi, at_hi});
  if (!at_lo || !at_hi) throw VerdictRefused("sweep: verdict refused at a bracket end");
  if (*at_lo == *at_hi)
    throw SameVerdictAtEnds(std::string("sweep: both ends are ") + (*at_lo ? "stable" : "unstable"));
  r.lo = lo;
  r.hi = hi;
  r.lo_stable = *at_lo;
  while (r.hi - r.lo > tol) {
    const double mid = 0.5 * (r.lo + r.hi);
    const auto v = is_stable(mid);
    r.steps.push_back({mid, v});
    if (!v) {
      r.lo = r.hi = mid;
      break;
    }
    (*v == r.lo_stable ? r.lo : r.hi) = mid;
  }
  return r;
}

}  // namespace mcstab
