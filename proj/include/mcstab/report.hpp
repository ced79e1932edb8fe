#pragma once

// Machine-readable outputs: verdict.json, contour/trace/profile CSVs and
// atomic file writes. Every CSV number is printed with 17 significant digits.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "mcstab/config.hpp"
#include "mcstab/simulator.hpp"
#include "mcstab/stability.hpp"

namespace mcstab {

inline std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes to a temporary sibling and renames it over the target.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

struct VerdictReport {
  json config;
  StabilityVerdict verdict;
};

inline json to_json(const VerdictReport& r) {
  const auto& v = r.verdict;
  json branches = json::array();
  for (const auto& b : v.branches)
    branches.push_back({{"i", b.i},
                        {"coupling", b.coupling},
                        {"N", b.N},
                        {"Z", b.Z},
                        {"min_dist_to_minus1", b.min_dist_to_minus1},
                        {"points", b.points},
                        {"refinement_passes", b.refinement_passes}});
  json poles = json::array();
  for (const auto& p : v.open_loop_poles) poles.push_back({p.real(), p.imag()});
  return {{"stable", v.stable},
          {"P", v.P},
          {"branches", branches},
          {"equilibrium", v.equilibrium},
          {"equilibrium_residual", v.equilibrium_residual},
          {"open_loop_poles", poles},
          {"det_product_residual", v.det_product_residual},
          {"config", r.config}};
}

inline VerdictReport verdict_report_from_json(const json& j) {
  VerdictReport r;
  r.config = j.at("config");
  auto& v = r.verdict;
  v.stable = j.at("stable").get<bool>();
  v.P = j.at("P").get<int>();
  for (const auto& b : j.at("branches"))
    v.branches.push_back({b.at("i").get<std::size_t>(), b.at("coupling").get<double>(), b.at("N").get<int>(),
                          b.at("Z").get<int>(), b.at("min_dist_to_minus1").get<double>(),
                          b.at("points").get<std::size_t>(), b.at("refinement_passes").get<int>()});
  v.equilibrium = j.at("equilibrium").get<StateVector>();
  v.equilibrium_residual = j.at("equilibrium_residual").get<double>();
  for (const auto& p : j.at("open_loop_poles")) v.open_loop_poles.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  v.det_product_residual = j.at("det_product_residual").get<double>();
  return r;
}

inline bool operator==(const BranchRecord& a, const BranchRecord& b) {
  return a.i == b.i && a.coupling == b.coupling && a.N == b.N && a.Z == b.Z &&
         a.min_dist_to_minus1 == b.min_dist_to_minus1 && a.points == b.points &&
         a.refinement_passes == b.refinement_passes;
}

inline bool operator==(const StabilityVerdict& a, const StabilityVerdict& b) {
  return a.equilibrium == b.equilibrium && a.equilibrium_residual == b.equilibrium_residual &&
         a.open_loop_poles == b.open_loop_poles && a.P == b.P && a.branches == b.branches &&
         a.stable == b.stable && a.det_product_residual == b.det_product_residual;
}

/// Rows `branch,omega,re,im`.
inline std::string contour_csv(std::size_t branch, const std::vector<ContourPoint>& pts) {
  std::string out = "branch,omega,re,im\n";
  for (const auto& p : pts)
    out += std::to_string(branch) + "," + fmt17(p.omega) + "," + fmt17(p.value.real()) + "," +
           fmt17(p.value.imag()) + "\n";
  return out;
}

/// Rows `t,robot,x1..xm`, robots 1-based.
inline std::string trace_csv(const SimTrace& tr) {
  std::string out = "t,robot";
  for (std::size_t j = 1; j <= tr.m; ++j) out += ",x" + std::to_string(j);
  out += "\n";
  for (std::size_t k = 0; k < tr.times.size(); ++k)
    for (std::size_t i = 0; i < tr.n; ++i) {
      out += fmt17(tr.times[k]) + "," + std::to_string(i + 1);
      for (std::size_t j = 0; j < tr.m; ++j) out += "," + fmt17(tr.robot_states[k][i * tr.m + j]);
      out += "\n";
    }
  return out;
}

/// Rows `t,segment,cell,c` with segments 1-based and cells 0..M (end nodes
/// included).
inline std::string profile_csv(const SimTrace& tr) {
  std::string out = "t,segment,cell,c\n";
  for (const auto& p : tr.profiles)
    for (std::size_t s = 0; s < p.segments.size(); ++s)
      for (std::size_t c = 0; c < p.segments[s].size(); ++c)
        out += fmt17(p.t) + "," + std::to_string(s + 1) + "," + std::to_string(c) + "," + fmt17(p.segments[s][c]) + "\n";
  return out;
}

}  // namespace mcstab
