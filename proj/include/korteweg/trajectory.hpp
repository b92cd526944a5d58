#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "korteweg/constitutive.hpp"

namespace korteweg {

struct SnapshotDiagnostics {
    double time = 0.0;
    double mass = 0.0;
    double energy = 0.0;
    double min_rho = 0.0;
    std::array<double, 2> momentum{0.0, 0.0};
    double dissipation = 0.0;  // friction runs: (1/eps^2) integral |m|^2/rho at this time
};

enum class RunStatus { Completed, AbortedVacuum, AbortedNonFinite, AbortedResolutionLoss };

inline const char* to_string(RunStatus s) {
    switch (s) {
        case RunStatus::Completed: return "completed";
        case RunStatus::AbortedVacuum: return "aborted-vacuum";
        case RunStatus::AbortedNonFinite: return "aborted-non-finite";
        case RunStatus::AbortedResolutionLoss: return "aborted-resolution-loss";
    }
    return "unknown";
}

/// Discrete-in-time solution record. States are immutable snapshots; aborted
/// runs keep the partial trajectory for post-mortem inspection.
template <typename State>
struct Trajectory {
    std::vector<double> times;
    std::vector<State> states;
    std::vector<SnapshotDiagnostics> diagnostics;
    RunStatus status = RunStatus::Completed;
    std::string abort_reason;

    bool completed() const { return status == RunStatus::Completed; }
    std::size_t size() const { return times.size(); }

    const State& front() const { return states.front(); }
    const State& back() const { return states.back(); }

    void push(double t, State state, SnapshotDiagnostics diag) {
        if (!times.empty() && !(t > times.back()))
            throw std::logic_error("Trajectory: times must be strictly increasing");
        times.push_back(t);
        states.push_back(std::move(state));
        diagnostics.push_back(diag);
    }
};

using FluidTrajectory = Trajectory<FluidState>;
using DensityTrajectory = Trajectory<ScalarField>;

namespace detail {
inline void require_common_times(const std::vector<double>& a, const std::vector<double>& b,
                                 const char* op, double tol = 1e-12) {
    if (a.size() != b.size())
        throw std::invalid_argument(std::string(op) + ": trajectories have different lengths");
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::abs(a[i] - b[i]) > tol * (1.0 + std::abs(a[i])))
            throw std::invalid_argument(std::string(op) + ": time grids differ at index " +
                                        std::to_string(i));
}

/// Trapezoid rule over a (possibly nonuniform) snapshot grid.
inline double trapezoid(const std::vector<double>& t, const std::vector<double>& f) {
    double acc = 0.0;
    for (std::size_t i = 1; i < t.size(); ++i)
        acc += 0.5 * (t[i] - t[i - 1]) * (f[i] + f[i - 1]);
    return acc;
}
}  // namespace detail

}  // namespace korteweg
