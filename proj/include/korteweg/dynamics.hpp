#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "korteweg/constitutive.hpp"
#include "korteweg/grid.hpp"
#include "korteweg/spectral.hpp"
#include "korteweg/trajectory.hpp"

namespace korteweg {

struct SolverConfig {
    double dt = 0.0;  // <= 0 selects the automatic CFL-based step
    double t_end = 1.0;
    double cfl_advective = 0.4;
    double cfl_dispersive = 0.2;
    double vacuum_floor = 1e-8;
    enum class Scheme { Rk4, ImexCh } scheme = Scheme::Rk4;
    int snapshot_every = 10;
    bool conservative_form = true;   // momentum flux via the stress tensor
    bool exact_friction = true;      // integrating factor for -m/eps^2
    bool dealias = false;            // 2/3-rule truncation of the right-hand sides
    double blowup_gradient_factor = 50.0;  // 0 disables the resolution-loss abort
};

struct StateDeriv {
    ScalarField drho;
    VectorField dm;
};

namespace dynamics_detail {

struct Abort : std::runtime_error {
    Abort(RunStatus s, std::string msg) : std::runtime_error(std::move(msg)), status(s) {}
    RunStatus status;
};

inline void check_fields(const ScalarField& rho, const VectorField& m, double floor, double t) {
    for (std::size_t i = 0; i < rho.size(); ++i) {
        if (!std::isfinite(rho[i]))
            throw Abort(RunStatus::AbortedNonFinite,
                        "non-finite density at t = " + std::to_string(t));
        if (rho[i] < floor) {
            const int n = rho.grid().points_per_axis();
            const int ix = rho.grid().dim() == 1 ? static_cast<int>(i) : static_cast<int>(i) / n;
            throw Abort(RunStatus::AbortedVacuum,
                        "vacuum breach at t = " + std::to_string(t) + ", node " +
                            std::to_string(ix) + " (rho = " + std::to_string(rho[i]) + ")");
        }
    }
    for (int a = 0; a < m.dim(); ++a)
        for (std::size_t i = 0; i < m.comp(a).size(); ++i)
            if (!std::isfinite(m.comp(a)[i]))
                throw Abort(RunStatus::AbortedNonFinite,
                            "non-finite momentum at t = " + std::to_string(t));
}

inline TensorField momentum_flux(const ScalarField& rho, const VectorField& m) {
    TensorField t(rho.grid(), true);
    for (int i = 0; i < rho.grid().dim(); ++i)
        for (int j = 0; j < rho.grid().dim(); ++j) {
            ScalarField c(rho.grid());
            for (std::size_t n = 0; n < c.size(); ++n)
                c[n] = m.comp(i)[n] * m.comp(j)[n] / rho[n];
            t.comp(i, j) = std::move(c);
        }
    return t;
}

inline double max_velocity(const ScalarField& rho, const VectorField& m) {
    double v = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i)
        for (int a = 0; a < m.dim(); ++a)
            v = std::max(v, std::abs(m.comp(a)[i] / rho[i]));
    return v;
}

inline double max_sound_speed(const ScalarField& rho, const EnergyLaw& energy) {
    double c = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i)
        c = std::max(c, std::sqrt(std::max(rho[i] * energy.hpp(rho[i]), 0.0)));
    return c;
}

}  // namespace dynamics_detail

namespace dynamics_detail {
inline StateDeriv dealias(StateDeriv d) {
    d.drho = spectral::dealias_two_thirds(d.drho);
    for (int a = 0; a < d.dm.dim(); ++a)
        d.dm.comp(a) = spectral::dealias_two_thirds(d.dm.comp(a));
    return d;
}
}  // namespace dynamics_detail

/// Euler-Korteweg right-hand side with capillarity eps * kappa:
///   rho_t = -div m,  m_t = -div(m (x) m / rho) - rho grad mu
/// or, in conservative form, m_t = -div(m (x) m / rho) + div S.
inline StateDeriv ek_rhs(const ScalarField& rho, const VectorField& m, const EnergyLaw& energy,
                         const CapillarityLaw& cap, double eps, bool conservative = true,
                         double vacuum_floor = 1e-8) {
    if (rho.min() < vacuum_floor)
        throw dynamics_detail::Abort(
            RunStatus::AbortedVacuum,
            "ek_rhs: density below vacuum floor (min rho = " + std::to_string(rho.min()) + ")");
    StateDeriv d{(-1.0) * spectral::divergence(m), VectorField(rho.grid())};
    auto conv = spectral::div_tensor(dynamics_detail::momentum_flux(rho, m));
    if (conservative) {
        FluidState st(rho, m);
        auto div_s = spectral::div_tensor(korteweg_stress(st, energy, cap, eps, vacuum_floor));
        d.dm = (-1.0) * conv + div_s;
    } else {
        auto mu = variational_derivative(rho, energy, cap, eps, vacuum_floor);
        d.dm = (-1.0) * conv + (-1.0) * (rho * spectral::gradient(mu));
    }
    return d;
}

/// Compressible Euler right-hand side (the eps = 0 specialization).
inline StateDeriv euler_rhs(const ScalarField& rho, const VectorField& m, const EnergyLaw& energy,
                            bool conservative = true, double vacuum_floor = 1e-8) {
    return ek_rhs(rho, m, energy, CapillarityLaw::constant(1.0), 0.0, conservative, vacuum_floor);
}

/// Friction-rescaled Euler-Korteweg right-hand side (constant capillarity):
///   rho_t = -(1/eps) div m
///   m_t   = -(1/eps) div(m (x) m / rho) - (1/eps^2) m
///           - (1/eps) rho grad(h'(rho) - C Delta rho).
/// With include_friction = false the stiff -(1/eps^2) m term is omitted (it is
/// then applied exactly by the integrating-factor stepper).
inline StateDeriv ekf_rhs(const ScalarField& rho, const VectorField& m, const EnergyLaw& energy,
                          double c_kappa, double eps, bool include_friction = true,
                          double vacuum_floor = 1e-8) {
    if (rho.min() < vacuum_floor)
        throw dynamics_detail::Abort(
            RunStatus::AbortedVacuum,
            "ekf_rhs: density below vacuum floor (min rho = " + std::to_string(rho.min()) + ")");
    const double inv_eps = 1.0 / eps;
    StateDeriv d{(-inv_eps) * spectral::divergence(m), VectorField(rho.grid())};
    auto conv = spectral::div_tensor(dynamics_detail::momentum_flux(rho, m));
    auto mu = variational_derivative(rho, energy, CapillarityLaw::constant(c_kappa), 1.0,
                                     vacuum_floor);
    d.dm = (-inv_eps) * conv + (-inv_eps) * (rho * spectral::gradient(mu));
    if (include_friction) d.dm = d.dm + (-inv_eps * inv_eps) * m;
    return d;
}

/// Cahn-Hilliard right-hand side rho_t = div( rho grad(h'(rho) - C Delta rho) ).
inline ScalarField ch_rhs(const ScalarField& rho, const EnergyLaw& energy, double c_kappa,
                          double vacuum_floor = 1e-8) {
    if (rho.min() < vacuum_floor)
        throw dynamics_detail::Abort(
            RunStatus::AbortedVacuum,
            "ch_rhs: density below vacuum floor (min rho = " + std::to_string(rho.min()) + ")");
    auto mu = variational_derivative(rho, energy, CapillarityLaw::constant(c_kappa), 1.0,
                                     vacuum_floor);
    return spectral::divergence(rho * spectral::gradient(mu));
}

/// CH free energy, the Lyapunov functional of the gradient flow.
inline double ch_free_energy(const ScalarField& rho, const EnergyLaw& energy, double c_kappa) {
    auto grad2 = spectral::gradient(rho).squared_magnitude();
    ScalarField dens(rho.grid());
    for (std::size_t i = 0; i < dens.size(); ++i)
        dens[i] = energy.h(rho[i]) + 0.5 * c_kappa * grad2[i];
    return spectral::integrate(dens);
}

// ---------------------------------------------------------------------------
// Systems: bundle a right-hand side with its diagnostics and CFL estimate.
// ---------------------------------------------------------------------------

struct EkSystem {
    EnergyLaw energy;
    CapillarityLaw cap;
    double eps = 1.0;

    StateDeriv rhs(const ScalarField& rho, const VectorField& m, const SolverConfig& cfg) const {
        auto d = ek_rhs(rho, m, energy, cap, eps, cfg.conservative_form, cfg.vacuum_floor);
        return cfg.dealias ? dynamics_detail::dealias(std::move(d)) : d;
    }
    double energy_of(const FluidState& st, double floor) const {
        return total_energy(st, energy, cap, eps, floor);
    }
    double auto_dt(const FluidState& st, const SolverConfig& cfg) const {
        const double dx = st.grid().spacing(0);
        const double signal = dynamics_detail::max_velocity(st.rho, st.m) +
                              dynamics_detail::max_sound_speed(st.rho, energy);
        double dt = cfg.cfl_advective * dx / std::max(signal, 1e-12);
        if (eps > 0.0) {
            double kap_max = 0.0;
            for (std::size_t i = 0; i < st.rho.size(); ++i)
                kap_max = std::max(kap_max, cap.kappa(st.rho[i]));
            const double disp = std::sqrt(eps * kap_max * st.rho.max());
            if (disp > 0.0) dt = std::min(dt, cfg.cfl_dispersive * dx * dx / disp);
        }
        return dt;
    }
    double friction_rate() const { return 0.0; }
};

struct EulerSystem {
    EnergyLaw energy;

    StateDeriv rhs(const ScalarField& rho, const VectorField& m, const SolverConfig& cfg) const {
        auto d = euler_rhs(rho, m, energy, cfg.conservative_form, cfg.vacuum_floor);
        return cfg.dealias ? dynamics_detail::dealias(std::move(d)) : d;
    }
    double energy_of(const FluidState& st, double floor) const {
        return total_energy(st, energy, CapillarityLaw::constant(1.0), 0.0, floor);
    }
    double auto_dt(const FluidState& st, const SolverConfig& cfg) const {
        const double dx = st.grid().spacing(0);
        const double signal = dynamics_detail::max_velocity(st.rho, st.m) +
                              dynamics_detail::max_sound_speed(st.rho, energy);
        return cfg.cfl_advective * dx / std::max(signal, 1e-12);
    }
    double friction_rate() const { return 0.0; }
};

struct EkfSystem {
    EnergyLaw energy;
    double c_kappa = 1.0;
    double eps = 0.1;

    StateDeriv rhs(const ScalarField& rho, const VectorField& m, const SolverConfig& cfg) const {
        auto d = ekf_rhs(rho, m, energy, c_kappa, eps, /*include_friction=*/!cfg.exact_friction,
                         cfg.vacuum_floor);
        return cfg.dealias ? dynamics_detail::dealias(std::move(d)) : d;
    }
    double energy_of(const FluidState& st, double floor) const {
        return total_energy(st, energy, CapillarityLaw::constant(c_kappa), 1.0, floor);
    }
    double auto_dt(const FluidState& st, const SolverConfig& cfg) const {
        // both equations carry 1/eps, so acoustic and dispersive branches of
        // the symbol scale like k sqrt(rho h'')/eps and sqrt(C rho) k^2 / eps
        const double dx = st.grid().spacing(0);
        const double signal = (dynamics_detail::max_velocity(st.rho, st.m) +
                               dynamics_detail::max_sound_speed(st.rho, energy)) /
                              eps;
        double dt = cfg.cfl_advective * dx / std::max(signal, 1e-12);
        const double disp = std::sqrt(c_kappa * st.rho.max()) / eps;
        dt = std::min(dt, cfg.cfl_dispersive * dx * dx / disp);
        if (!cfg.exact_friction) {
            // explicit friction is stable only for dt < eps^2 / 2
            dt = std::min(dt, 0.4 * eps * eps);
        }
        return dt;
    }
    double friction_rate() const { return 1.0 / (eps * eps); }
};

// ---------------------------------------------------------------------------
// Integrators
// ---------------------------------------------------------------------------

namespace dynamics_detail {

inline int steps_for(double t_end, double dt_target) {
    return std::max(1, static_cast<int>(std::ceil(t_end / dt_target - 1e-12)));
}

template <typename System>
SnapshotDiagnostics fluid_diagnostics(const System& sys, const FluidState& st, double t,
                                      double floor) {
    SnapshotDiagnostics d;
    d.time = t;
    d.mass = st.mass();
    d.energy = sys.energy_of(st, floor);
    d.min_rho = st.rho.min();
    for (int a = 0; a < st.grid().dim(); ++a)
        d.momentum[static_cast<std::size_t>(a)] = spectral::integrate(st.m, a);
    const double fr = sys.friction_rate();
    if (fr > 0.0) {
        auto kin = kinetic_density(st, floor);
        d.dissipation = 2.0 * fr * spectral::integrate(kin);  // (1/eps^2) integral |m|^2/rho
    }
    return d;
}

}  // namespace dynamics_detail

/// Explicit RK4 time stepping with optional exact-friction Strang splitting.
/// Deterministic for a fixed config; on vacuum / NaN / resolution-loss the
/// partial trajectory is returned with the abort reason.
template <typename System>
FluidTrajectory integrate_fluid(const System& sys, const FluidState& initial,
                                const SolverConfig& cfg) {
    FluidTrajectory traj;
    const double dt_target = cfg.dt > 0.0 ? cfg.dt : sys.auto_dt(initial, cfg);
    if (!(dt_target > 0.0) || !std::isfinite(dt_target))
        throw std::invalid_argument("integrate_fluid: non-positive time step");
    const int n_steps = dynamics_detail::steps_for(cfg.t_end, dt_target);
    const double dt = cfg.t_end / n_steps;

    ScalarField rho = initial.rho;
    VectorField m = initial.m;
    traj.push(0.0, initial, dynamics_detail::fluid_diagnostics(sys, initial, 0.0, cfg.vacuum_floor));

    double grad_u0 = 0.0;
    if (cfg.blowup_gradient_factor > 0.0)
        grad_u0 = spectral::jacobian(velocity(initial, cfg.vacuum_floor)).max_abs();

    const double friction = sys.friction_rate();
    const bool strang = cfg.exact_friction && friction > 0.0;
    const double half_decay = strang ? std::exp(-0.5 * dt * friction) : 1.0;

    try {
        for (int step = 0; step < n_steps; ++step) {
            if (strang) m = half_decay * m;

            auto k1 = sys.rhs(rho, m, cfg);
            auto k2 = sys.rhs(rho + (0.5 * dt) * k1.drho, m + (0.5 * dt) * k1.dm, cfg);
            auto k3 = sys.rhs(rho + (0.5 * dt) * k2.drho, m + (0.5 * dt) * k2.dm, cfg);
            auto k4 = sys.rhs(rho + dt * k3.drho, m + dt * k3.dm, cfg);
            const double w = dt / 6.0;
            rho = rho + w * k1.drho + (2.0 * w) * k2.drho + (2.0 * w) * k3.drho + w * k4.drho;
            m = m + w * k1.dm + (2.0 * w) * k2.dm + (2.0 * w) * k3.dm + w * k4.dm;

            if (strang) m = half_decay * m;

            const double t_next = (step + 1) * dt;
            dynamics_detail::check_fields(rho, m, cfg.vacuum_floor, t_next);

            if ((step + 1) % cfg.snapshot_every == 0 || step + 1 == n_steps) {
                FluidState st(rho, m);
                if (cfg.blowup_gradient_factor > 0.0) {
                    const double gu =
                        spectral::jacobian(velocity(st, cfg.vacuum_floor)).max_abs();
                    if (gu > cfg.blowup_gradient_factor * std::max(grad_u0, 1e-3))
                        throw dynamics_detail::Abort(
                            RunStatus::AbortedResolutionLoss,
                            "velocity gradient grew past the resolution-loss bound at t = " +
                                std::to_string(t_next) + " (|grad u| = " + std::to_string(gu) +
                                ")");
                }
                traj.push(t_next, st,
                          dynamics_detail::fluid_diagnostics(sys, st, t_next, cfg.vacuum_floor));
            }
        }
    } catch (const dynamics_detail::Abort& abort) {
        traj.status = abort.status;
        traj.abort_reason = abort.what();
    }
    return traj;
}

/// First-order IMEX stepping for Cahn-Hilliard: the constant-coefficient
/// biharmonic -C M Delta^2 is treated implicitly (diagonal in Fourier space)
/// with stabilization mobility M = max rho(0); the remainder is explicit.
inline DensityTrajectory integrate_ch(const ScalarField& initial, const EnergyLaw& energy,
                                      double c_kappa, const SolverConfig& cfg) {
    DensityTrajectory traj;
    const TorusGrid& g = initial.grid();
    double dt_target = cfg.dt;
    if (dt_target <= 0.0) {
        double rate = 0.0;
        for (std::size_t i = 0; i < initial.size(); ++i)
            rate = std::max(rate, initial[i] * std::abs(energy.hpp(initial[i])));
        const double dx = g.spacing(0);
        dt_target = cfg.cfl_dispersive * dx * dx / std::max(rate, 1e-12);
    }
    const int n_steps = dynamics_detail::steps_for(cfg.t_end, dt_target);
    const double dt = cfg.t_end / n_steps;
    const double mobility = initial.max();

    auto diag_of = [&](const ScalarField& rho, double t) {
        SnapshotDiagnostics d;
        d.time = t;
        d.mass = spectral::integrate(rho);
        d.energy = ch_free_energy(rho, energy, c_kappa);
        d.min_rho = rho.min();
        return d;
    };

    ScalarField rho = initial;
    traj.push(0.0, rho, diag_of(rho, 0.0));

    // implicit denominator 1 + dt C M |k|^4 per mode
    const int n = g.points_per_axis();
    std::vector<double> denom(spectral::detail::spectrum_size(g), 1.0);
    {
        auto k2_of = [&](int jx, int jy) {
            const double kx0 = 2.0 * M_PI / g.period(0);
            const double ky0 = g.dim() == 2 ? 2.0 * M_PI / g.period(1) : 0.0;
            const double kx = kx0 * spectral::detail::signed_mode(jx, n);
            const double ky = g.dim() == 2 ? ky0 * jy : 0.0;
            return kx * kx + ky * ky;
        };
        if (g.dim() == 1) {
            for (int j = 0; j <= n / 2; ++j) {
                const double k2 = k2_of(j, 0);
                denom[static_cast<std::size_t>(j)] = 1.0 + dt * c_kappa * mobility * k2 * k2;
            }
        } else {
            const int nyh = n / 2 + 1;
            for (int jx = 0; jx < n; ++jx)
                for (int jy = 0; jy < nyh; ++jy) {
                    const double k2 = k2_of(jx, jy);
                    denom[static_cast<std::size_t>(jx) * nyh + jy] =
                        1.0 + dt * c_kappa * mobility * k2 * k2;
                }
        }
    }

    try {
        for (int step = 0; step < n_steps; ++step) {
            auto explicit_rhs = ch_rhs(rho, energy, c_kappa, cfg.vacuum_floor);
            auto stab = spectral::laplacian(spectral::laplacian(rho));
            ScalarField work(g);
            for (std::size_t i = 0; i < work.size(); ++i)
                work[i] = rho[i] + dt * (explicit_rhs[i] + c_kappa * mobility * stab[i]);
            auto spec = spectral::forward(work);
            for (std::size_t i = 0; i < spec.size(); ++i) spec[i] /= denom[i];
            rho = spectral::inverse(g, spec);

            const double t_next = (step + 1) * dt;
            for (std::size_t i = 0; i < rho.size(); ++i) {
                if (!std::isfinite(rho[i]))
                    throw dynamics_detail::Abort(RunStatus::AbortedNonFinite,
                                                 "non-finite density at t = " + std::to_string(t_next));
                if (rho[i] < cfg.vacuum_floor)
                    throw dynamics_detail::Abort(
                        RunStatus::AbortedVacuum,
                        "vacuum breach at t = " + std::to_string(t_next) +
                            " (rho = " + std::to_string(rho[i]) + ")");
            }
            if ((step + 1) % cfg.snapshot_every == 0 || step + 1 == n_steps)
                traj.push(t_next, rho, diag_of(rho, t_next));
        }
    } catch (const dynamics_detail::Abort& abort) {
        traj.status = abort.status;
        traj.abort_reason = abort.what();
    }
    return traj;
}

}  // namespace korteweg
