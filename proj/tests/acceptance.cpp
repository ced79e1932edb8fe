// Acceptance runner: one PASS/FAIL/SKIP line per criterion. Exits non-zero
// when any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "battery.hpp"
#include "channel_oracle.hpp"
#include "fitted.hpp"
#include "mcstab/config.hpp"
#include "mcstab/stability.hpp"
#include "winding_oracle.hpp"

using namespace mcstab;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kDecompTol = 1e-9;
constexpr double kDecompBudgetS = 10.0;
constexpr double kBatteryBudgetS = 300.0;
constexpr double kChannelTol = 1e-10;
constexpr double kFlipTol = 1e-12;
constexpr double kEquilibriumTol = 0.1;
constexpr double kJacobianTol = 1e-6;
constexpr double kGridTol = 0.02;
constexpr double kStepTol = 1e-6;

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status;
  std::string detail;
};

Outcome verdict_of(bool ok, std::string detail) { return {ok ? Status::Pass : Status::Fail, std::move(detail)}; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome decomposition_identity() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> len(10.0, 200.0), mu(10.0, 500.0);
  std::uniform_int_distribution<std::size_t> ring(1, 8), dim(1, 6);
  std::normal_distribution<double> g;
  double worst = 0.0;
  int hurwitz = 0;
  for (int sys = 0; sys < 50; ++sys) {
    const std::size_t m = dim(rng);
    RealMatrix A(m, m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) A(i, j) = g(rng);
    // Alternate shifts give both Hurwitz and non-Hurwitz Jacobians.
    for (std::size_t i = 0; i < m; ++i) A(i, i) += sys % 2 ? -3.0 : 0.5;
    bool is_hurwitz = true;
    for (const auto& e : eig_real(A).eigenvalues) is_hurwitz = is_hurwitz && e.real() < 0.0;
    hurwitz += is_hurwitz;
    const auto topo = ChannelTopology::ring(ring(rng), len(rng), mu(rng), TimeUnit::Seconds);
    worst = std::max(worst, decomposition_residual([&A](cplx s) { return robot_tf(A, s); }, topo, ContourGrid{}, 100));
  }
  const double elapsed = seconds_since(t0);
  return verdict_of(worst < kDecompTol && elapsed < kDecompBudgetS && hurwitz > 0 && hurwitz < 50,
                    "worst residual " + num(worst) + ", " + std::to_string(hurwitz) + "/50 Hurwitz, " +
                        num(elapsed) + " s");
}

Outcome verdict_vs_simulation() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cases = battery::linear_battery(32, 80.0);
  int decided = 0, agreed = 0, stable = 0;
  std::string refused, mismatched;
  for (const auto& c : cases) {
    const auto model = c.model();
    StabilityVerdict v;
    try {
      v = verdict(model, c.topo, {{}, StateVector(c.A.rows(), 1.0), 20});
    } catch (const VerdictRefused&) {
      refused += " " + c.label;
      continue;
    }
    const auto eq = find_equilibrium(model, StateVector(c.A.rows(), 1.0));
    const auto tr = run(model, c.topo, c.sim, eq.x_star);
    const bool decaying = tr.classification.cls == ResponseClass::Decaying;
    ++decided;
    stable += v.stable;
    if (v.stable == decaying) ++agreed;
    else mismatched += " " + c.label + "(" + to_string(tr.classification.cls) + ")";
  }
  const double elapsed = seconds_since(t0);
  std::string detail = std::to_string(agreed) + "/" + std::to_string(decided) + " agree (" + std::to_string(stable) +
                       " stable), refused:" + (refused.empty() ? " none" : refused) + ", " + num(elapsed) + " s";
  if (!mismatched.empty()) detail += ", mismatched:" + mismatched;
  return verdict_of(cases.size() >= 20 && decided > 0 && agreed == decided && elapsed < kBatteryBudgetS, detail);
}

Outcome channel_functions() {
  using namespace channel_oracle;
  std::mt19937_64 rng(103);
  std::uniform_real_distribution<double> len(10.0, 200.0);
  double worst = 0.0, flip = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const cplx s = random_s(rng);
    const double a = len(rng), b = len(rng);
    const double mu = rep % 2 ? 83.0 * 60.0 : 83.0;
    worst = std::max({worst, rel(g_tan(s, a, b, mu), -(oracle_coth_term(s, a, mu) + oracle_coth_term(s, b, mu))),
                      rel(g_sin(s, a, mu), oracle_csch_term(s, a, mu))});
    const cplx sh = diffusion_frequency(s, mu);
    flip = std::max({flip, rel(coth_term_from_root(-sh, a), coth_term_from_root(sh, a)),
                     rel(csch_term_from_root(-sh, a), csch_term_from_root(sh, a))});
  }
  bool dc = true;
  for (double a : {10.0, 37.0, 50.0, 200.0})
    for (double b : {13.0, 50.0, 80.0}) {
      dc = dc && g_tan(0.0, a, b, 4980.0) == cplx(-(1.0 / a + 1.0 / b));
      dc = dc && g_sin(0.0, a, 4980.0) == cplx(1.0 / a);
    }
  return verdict_of(worst < kChannelTol && flip < kFlipTol && dc,
                    "worst rel " + num(worst) + ", branch flip " + num(flip) + ", DC limits " +
                        (dc ? "exact" : "inexact"));
}

Outcome winding_numbers() {
  std::mt19937_64 rng(104);
  int mismatches = 0, nonzero = 0;
  for (int rep = 0; rep < 10000; ++rep) {
    const auto curve = winding_oracle::random_curve(rng);
    const cplx c = winding_oracle::random_center(rng);
    const int expected = winding_oracle::ray_cast(curve, c);
    nonzero += expected != 0;
    if (winding_number(curve, c) != expected) ++mismatches;
  }
  return verdict_of(mismatches == 0, std::to_string(10000 - mismatches) + "/10000 match, " + std::to_string(nonzero) +
                                         " with nonzero winding");
}

Outcome reference_example() {
  const fs::path file = fs::path(MCSTAB_CONFIGS) / "ard_case_a.cfg";
  if (!fs::exists(file)) return {Status::Skip, file.string() + " absent"};
  const auto doc = json::parse(slurp(file));
  std::string unfilled;
  for (const auto& [key, value] : doc.at("model").at("params").items())
    if (value.is_null()) unfilled += " " + key;
  if (!unfilled.empty()) return {Status::Skip, "reference parameters not filled in:" + unfilled};

  const auto cfg = load_config(file.string());
  struct Expect {
    double gamma_a;
    StateVector x;
    int P;
    bool stable;
    ResponseClass cls;
  };
  const Expect expectations[] = {{2.5, {7.6, 15.6, 14.5, 14.5}, 0, true, ResponseClass::Decaying},
                                 {3.0, {7.1, 17.4, 12.4, 12.4}, 2, false, ResponseClass::Oscillating}};
  bool ok = true;
  std::string detail;
  for (const auto& e : expectations) {
    const auto model = cfg.build_model_with("gamma_a", e.gamma_a);
    const auto eq = find_equilibrium(model, e.x);
    double gap = 0.0;
    for (std::size_t i = 0; i < 4; ++i) gap = std::max(gap, std::abs(eq.x_star[i] - e.x[i]));
    const auto v = verdict(model, cfg.topology, {cfg.analysis, eq.x_star, 100});
    bool z_ok = true;
    for (const auto& b : v.branches) z_ok = z_ok && b.Z == (e.stable ? 0 : 2);
    const auto tr = run(model, cfg.topology, cfg.simulation, eq.x_star);
    ok = ok && gap <= kEquilibriumTol && v.P == e.P && v.stable == e.stable && z_ok && tr.classification.cls == e.cls;
    detail += "gamma_a " + num(e.gamma_a) + ": gap " + num(gap) + " P " + std::to_string(v.P) + " " +
              (v.stable ? "stable" : "unstable") + " " + to_string(tr.classification.cls) + "; ";
  }
  return verdict_of(ok, detail);
}

double max_rel_gap(const RealMatrix& a, const RealMatrix& b) {
  const double scale = std::max(a.max_abs(), 1e-300);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      worst = std::max(worst, std::abs(a(i, j) - b(i, j)) / std::max(std::abs(a(i, j)), 1e-3 * scale));
  return worst;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("'") + MCSTAB_CLI + "' " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome numerical_hygiene() {
  std::string detail;
  bool ok = true;

  double jac = 0.0;
  std::mt19937_64 rng(106);
  std::uniform_real_distribution<double> u(0.5, 30.0);
  for (double ga : {2.5, 3.0}) {
    const auto model = make_ard_model(fitted::ard(ga));
    for (int rep = 0; rep < 100; ++rep) {
      const StateVector x{u(rng), u(rng), u(rng), u(rng)};
      jac = std::max(jac, max_rel_gap(jacobian(model, x), finite_difference_jacobian(model, x)));
    }
  }
  ok = ok && jac < kJacobianTol;
  detail += "jacobian " + num(jac);

  double grid = 0.0, step = 0.0;
  const auto coarse = battery::linear_battery(32);
  const auto fine = battery::linear_battery(64);
  for (std::size_t k = 0; k < coarse.size(); ++k) {
    auto c = coarse[k], f = fine[k];
    c.sim.t_final = f.sim.t_final = battery::rate_horizon(c);
    const auto model = c.model();
    const auto eq = find_equilibrium(model, StateVector(c.A.rows(), 1.0));
    const double a = battery::envelope_rate(run(model, c.topo, c.sim, eq.x_star));
    const double b = battery::envelope_rate(run(model, f.topo, f.sim, eq.x_star));
    grid = std::max(grid, std::abs(a - b) / std::abs(b));

    c.sim.dt = c.sim.max_dt(c.topo);
    const auto y1 = run(model, c.topo, c.sim, eq.x_star).robot_states.back();
    c.sim.dt *= 0.5;
    const auto y2 = run(model, c.topo, c.sim, eq.x_star).robot_states.back();
    double diff = 0.0, size = 0.0;
    for (std::size_t i = 0; i < y1.size(); ++i) {
      diff = std::max(diff, std::abs(y1[i] - y2[i]));
      size = std::max(size, std::abs(y2[i]));
    }
    step = std::max(step, diff / size);
  }
  ok = ok && grid < kGridTol && step < kStepTol;
  detail += ", grid rate change " + num(grid) + ", dt relative change " + num(step);

  const auto base = fs::temp_directory_path() / "mcstab_acceptance";
  fs::remove_all(base);
  const fs::path configs = MCSTAB_CONFIGS;
  std::size_t files = 0, differing = 0;
  for (const char* run_dir : {"a", "b"})
    for (const auto& [cmd, config] : {std::pair{"analyze", "ard_fitted_3p0.json"}, std::pair{"nyquist", "ard_fitted_2p5.json"},
                                      std::pair{"simulate", "linear_decay.json"}, std::pair{"sweep", "ard_fitted_sweep.json"}})
      run_cli(std::string(cmd) + " '" + (configs / config).string() + "' --out '" + (base / run_dir / cmd).string() + "'");
  for (const auto& entry : fs::recursive_directory_iterator(base / "a")) {
    if (!entry.is_regular_file()) continue;
    ++files;
    const auto twin = base / "b" / fs::relative(entry.path(), base / "a");
    if (!fs::exists(twin) || slurp(entry.path()) != slurp(twin)) ++differing;
  }
  ok = ok && files >= 10 && differing == 0;
  detail += ", CLI outputs " + std::to_string(files - differing) + "/" + std::to_string(files) + " identical";
  return verdict_of(ok, detail);
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"decomposition identity on 50 random rings", decomposition_identity},
      {"verdict agrees with simulation on the linear battery", verdict_vs_simulation},
      {"channel functions against the 50-digit oracle", channel_functions},
      {"winding numbers against ray casting", winding_numbers},
      {"ARD reference example", reference_example},
      {"numerical hygiene", numerical_hygiene},
  };
  int failures = 0;
  int index = 1;
  for (const auto& [title, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {Status::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Status::Pass ? "PASS" : o.status == Status::Fail ? "FAIL" : "SKIP";
    failures += o.status == Status::Fail;
    std::cout << "criterion " << index++ << ": " << tag << "  " << title << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
