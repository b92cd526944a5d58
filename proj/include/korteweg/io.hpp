#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "korteweg/grid.hpp"
#include "korteweg/relative.hpp"
#include "korteweg/trajectory.hpp"

namespace korteweg {
namespace io {

/// 17 significant digits: round-trips doubles exactly.
inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("io: cannot open " + p.string() + " for writing");
    return out;
}

/// Scalar snapshot: header x[,y],value; nodes in row-major order.
inline void write_scalar_csv(const std::filesystem::path& p, const ScalarField& f) {
    auto out = open_out(p);
    const TorusGrid& g = f.grid();
    const int n = g.points_per_axis();
    if (g.dim() == 1) {
        out << "x,value\n";
        for (int i = 0; i < n; ++i)
            out << fmt(g.coord(0, i)) << ',' << fmt(f.at(i)) << '\n';
    } else {
        out << "x,y,value\n";
        for (int ix = 0; ix < n; ++ix)
            for (int iy = 0; iy < n; ++iy)
                out << fmt(g.coord(0, ix)) << ',' << fmt(g.coord(1, iy)) << ','
                    << fmt(f.at(ix, iy)) << '\n';
    }
}

/// Vector snapshot: header x[,y],v1[,v2].
inline void write_vector_csv(const std::filesystem::path& p, const VectorField& v) {
    auto out = open_out(p);
    const TorusGrid& g = v.grid();
    const int n = g.points_per_axis();
    if (g.dim() == 1) {
        out << "x,v1\n";
        for (int i = 0; i < n; ++i)
            out << fmt(g.coord(0, i)) << ',' << fmt(v.comp(0).at(i)) << '\n';
    } else {
        out << "x,y,v1,v2\n";
        for (int ix = 0; ix < n; ++ix)
            for (int iy = 0; iy < n; ++iy)
                out << fmt(g.coord(0, ix)) << ',' << fmt(g.coord(1, iy)) << ','
                    << fmt(v.comp(0).at(ix, iy)) << ',' << fmt(v.comp(1).at(ix, iy)) << '\n';
    }
}

inline void write_diagnostics_csv(const std::filesystem::path& p,
                                  const std::vector<SnapshotDiagnostics>& diags, int dim,
                                  bool with_dissipation = false) {
    auto out = open_out(p);
    out << "t,mass,energy,min_rho,momentum_x";
    if (dim == 2) out << ",momentum_y";
    if (with_dissipation) out << ",dissipation";
    out << '\n';
    for (const auto& d : diags) {
        out << fmt(d.time) << ',' << fmt(d.mass) << ',' << fmt(d.energy) << ','
            << fmt(d.min_rho) << ',' << fmt(d.momentum[0]);
        if (dim == 2) out << ',' << fmt(d.momentum[1]);
        if (with_dissipation) out << ',' << fmt(d.dissipation);
        out << '\n';
    }
}

/// Trajectory export: per-snapshot field CSVs plus diagnostics.csv.
inline void export_trajectory(const std::filesystem::path& dir, const FluidTrajectory& traj,
                              bool with_dissipation = false) {
    std::filesystem::create_directories(dir);
    const int dim = traj.states.empty() ? 1 : traj.states.front().grid().dim();
    write_diagnostics_csv(dir / "diagnostics.csv", traj.diagnostics, dim, with_dissipation);
    char name[64];
    for (std::size_t i = 0; i < traj.size(); ++i) {
        std::snprintf(name, sizeof(name), "rho_%05zu.csv", i);
        write_scalar_csv(dir / name, traj.states[i].rho);
        std::snprintf(name, sizeof(name), "m_%05zu.csv", i);
        write_vector_csv(dir / name, traj.states[i].m);
    }
    if (!traj.completed()) {
        auto out = open_out(dir / "abort.txt");
        out << to_string(traj.status) << ": " << traj.abort_reason << '\n';
    }
}

inline void export_trajectory(const std::filesystem::path& dir, const DensityTrajectory& traj) {
    std::filesystem::create_directories(dir);
    const int dim = traj.states.empty() ? 1 : traj.states.front().grid().dim();
    write_diagnostics_csv(dir / "diagnostics.csv", traj.diagnostics, dim);
    char name[64];
    for (std::size_t i = 0; i < traj.size(); ++i) {
        std::snprintf(name, sizeof(name), "rho_%05zu.csv", i);
        write_scalar_csv(dir / name, traj.states[i]);
    }
    if (!traj.completed()) {
        auto out = open_out(dir / "abort.txt");
        out << to_string(traj.status) << ": " << traj.abort_reason << '\n';
    }
}

/// Relative-energy report series as CSV rows
/// t,kinetic,internal_gamma,internal_bump,capillary,total[,term columns].
inline void write_reports_csv(const std::filesystem::path& p,
                              const std::vector<RelativeEnergyReport>& reports,
                              const RhsTermBreakdown* terms = nullptr) {
    auto out = open_out(p);
    out << "t,kinetic,internal_gamma,internal_bump,capillary,total";
    if (terms)
        out << ",convective,div_pressure,hessian_H,grad_div_r,bump_correction,"
               "friction_dissipation,defect_E";
    out << '\n';
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        out << fmt(r.time) << ',' << fmt(r.kinetic) << ',' << fmt(r.internal_gamma) << ','
            << fmt(r.internal_bump) << ',' << fmt(r.capillary) << ',' << fmt(r.total);
        if (terms) {
            // the breakdown is cumulative over [0, t_end]; emit it on the last row
            if (i + 1 == reports.size())
                out << ',' << fmt(terms->convective) << ',' << fmt(terms->div_pressure) << ','
                    << fmt(terms->hessian_H) << ',' << fmt(terms->grad_div_r) << ','
                    << fmt(terms->bump_correction) << ',' << fmt(terms->friction_dissipation)
                    << ',' << fmt(terms->defect_E);
            else
                out << ",,,,,,,";
        }
        out << '\n';
    }
}

}  // namespace io
}  // namespace korteweg
