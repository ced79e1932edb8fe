// mcstab: stability analysis and co-simulation of circulant molecular
// communication rings.
//
//   mcstab analyze  <config.json> [--out DIR]   exit 0 stable, 10 unstable, 20 refused, 1 error
//   mcstab nyquist  <config.json> [--out DIR]
//   mcstab simulate <config.json> [--out DIR]
//   mcstab sweep    <config.json> [--out DIR]

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "mcstab/config.hpp"
#include "mcstab/report.hpp"
#include "mcstab/simulator.hpp"
#include "mcstab/stability.hpp"

namespace fs = std::filesystem;
using namespace mcstab;

namespace {

constexpr int kExitStable = 0;
constexpr int kExitError = 1;
constexpr int kExitUnstable = 10;
constexpr int kExitRefused = 20;

int cmd_analyze(const RunConfig& cfg, const fs::path& out) {
  const auto model = cfg.build_model();
  try {
    VerdictReport report{cfg.source, verdict(model, cfg.topology, cfg.analysis_options())};
    const std::string text = to_json(report).dump(2) + "\n";
    write_file_atomic(out / "verdict.json", text);
    std::cout << text;
    return report.verdict.stable ? kExitStable : kExitUnstable;
  } catch (const VerdictRefused& e) {
    const json refused = {{"refused", true}, {"reason", e.what()}, {"config", cfg.source}};
    const std::string text = refused.dump(2) + "\n";
    write_file_atomic(out / "verdict.json", text);
    std::cout << text;
    return kExitRefused;
  }
}

int cmd_nyquist(const RunConfig& cfg, const fs::path& out) {
  const auto model = cfg.build_model();
  const auto& topo = cfg.topology;
  if (!topo.is_circulant()) throw NotCirculant("nyquist: topology is not a uniform periodic ring");
  const Equilibrium eq = locate_equilibrium(model, cfg.model.initial_guess);
  const RealMatrix A = eq.jacobian;
  const OpenLoop h = [&A](cplx s) { return robot_tf(A, s); };

  std::vector<double> omegas = cfg.analysis.initial_omegas();
  std::vector<double> grid;
  for (auto it = omegas.rbegin(); it != omegas.rend(); ++it) grid.push_back(-*it);
  grid.push_back(0.0);
  grid.insert(grid.end(), omegas.begin(), omegas.end());

  json summary = json::array();
  try {
    for (std::size_t i = 1; i <= distinct_branch_count(topo.n); ++i) {
      const auto br = nyquist_branch(h, topo, i, cfg.analysis);
      write_file_atomic(out / ("branch_" + std::to_string(i) + ".csv"), contour_csv(i, br.contour));
      std::vector<ContourPoint> lambda;
      for (double w : grid) lambda.push_back({w, circulant_eigenvalue(topo, i, cplx(0.0, w))});
      write_file_atomic(out / ("channel_" + std::to_string(i) + ".csv"), contour_csv(i, lambda));
      summary.push_back({{"branch", i},
                         {"coupling", br.coupling},
                         {"N", br.encirclements},
                         {"points", br.contour.size()},
                         {"min_dist_to_minus1", br.min_dist_to_minus1}});
    }
  } catch (const VerdictRefused& e) {
    std::cerr << "nyquist: " << e.what() << "\n";
    return kExitRefused;
  }
  const std::string text = summary.dump(2) + "\n";
  write_file_atomic(out / "nyquist_summary.json", text);
  std::cout << text;
  return kExitStable;
}

int cmd_simulate(const RunConfig& cfg, const fs::path& out) {
  const auto model = cfg.build_model();
  const Equilibrium eq = locate_equilibrium(model, cfg.model.initial_guess);
  const auto trace = run(model, cfg.topology, cfg.simulation, eq.x_star);
  write_file_atomic(out / "trace.csv", trace_csv(trace));
  if (!trace.profiles.empty()) write_file_atomic(out / "profile.csv", profile_csv(trace));
  const auto& c = trace.classification;
  std::cout << "classification: " << to_string(c.cls) << " rate=" << fmt17(c.rate) << " peaks=" << c.peaks << "\n";
  return kExitStable;
}

int cmd_sweep(const RunConfig& cfg, const fs::path& out) {
  if (!cfg.sweep) throw ConfigError("sweep: config has no 'sweep' section");
  const auto& sw = *cfg.sweep;
  const auto opts = cfg.analysis_options();
  const auto result = find_stability_boundary(
      [&](double value) -> std::optional<bool> {
        try {
          return verdict(cfg.build_model_with(sw.param_name, value), cfg.topology, opts).stable;
        } catch (const VerdictRefused&) {
          return std::nullopt;
        }
      },
      sw.lo, sw.hi, sw.bisection_tol);

  std::string csv = "step,value,verdict\n";
  for (std::size_t k = 0; k < result.steps.size(); ++k) {
    const auto& st = result.steps[k];
    csv += std::to_string(k) + "," + fmt17(st.value) + "," +
           (st.stable ? (*st.stable ? "stable" : "unstable") : "refused") + "\n";
  }
  write_file_atomic(out / "sweep.csv", csv);
  const json summary = {{"param_name", sw.param_name},
                        {"lo", result.lo},
                        {"hi", result.hi},
                        {"lo_stable", result.lo_stable},
                        {"boundary", result.boundary()}};
  std::cout << summary.dump(2) << "\n";
  return kExitStable;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stability analysis and co-simulation of circulant molecular communication rings"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir = ".";

  auto add = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("config", config_path, "JSON run configuration")->required();
    sub->add_option("--out", out_dir, "output directory");
    return sub;
  };
  auto* analyze = add("analyze", "stability verdict (exit 0 stable, 10 unstable, 20 refused)");
  auto* nyquist = add("nyquist", "per-branch Nyquist contours as CSV");
  auto* simulate = add("simulate", "time-domain co-simulation and response classification");
  auto* sweep = add("sweep", "bisect the stability boundary over one model parameter");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitError;
  }

  try {
    const RunConfig cfg = load_config(config_path);
    const fs::path out(out_dir);
    if (analyze->parsed()) return cmd_analyze(cfg, out);
    if (nyquist->parsed()) return cmd_nyquist(cfg, out);
    if (simulate->parsed()) return cmd_simulate(cfg, out);
    if (sweep->parsed()) return cmd_sweep(cfg, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
