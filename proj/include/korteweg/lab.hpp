#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <future>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "korteweg/config.hpp"
#include "korteweg/constitutive.hpp"
#include "korteweg/dynamics.hpp"
#include "korteweg/grid.hpp"
#include "korteweg/io.hpp"
#include "korteweg/mollify.hpp"
#include "korteweg/relative.hpp"
#include "korteweg/spectral.hpp"

namespace korteweg {

// ---------------------------------------------------------------------------
// Rate fitting
// ---------------------------------------------------------------------------

struct RateFit {
    std::vector<double> eps_values;
    std::vector<double> errors;
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    bool curvature_flag = false;  // systematic bend in log-log: floor suspected
};

namespace lab_detail {

struct LineFit {
    double slope, intercept, r_squared;
};

inline LineFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        syy += ly * ly;
    }
    const double denom = n * sxx - sx * sx;
    LineFit f{};
    f.slope = (n * sxy - sx * sy) / denom;
    f.intercept = (sy - f.slope * sx) / n;
    double ss_res = 0.0, ss_tot = 0.0;
    const double mean_y = sy / n;
    for (std::size_t i = 0; i < n; ++i) {
        const double ly = std::log(y[i]);
        const double fit = f.intercept + f.slope * std::log(x[i]);
        ss_res += (ly - fit) * (ly - fit);
        ss_tot += (ly - mean_y) * (ly - mean_y);
    }
    f.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    return f;
}

/// Quadratic coefficient of the least-squares parabola through
/// (log eps, log err); a clean power law gives zero, a floor bends the tail.
inline double loglog_curvature(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double s0 = n, s1 = 0, s2 = 0, s3 = 0, s4 = 0, b0 = 0, b1 = 0, b2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        s1 += lx;
        s2 += lx * lx;
        s3 += lx * lx * lx;
        s4 += lx * lx * lx * lx;
        b0 += ly;
        b1 += lx * ly;
        b2 += lx * lx * ly;
    }
    // solve the 3x3 normal equations by Cramer's rule
    const double d = s0 * (s2 * s4 - s3 * s3) - s1 * (s1 * s4 - s2 * s3) +
                     s2 * (s1 * s3 - s2 * s2);
    if (std::abs(d) < 1e-30) return 0.0;
    const double dc = s0 * (s2 * b2 - s3 * b1) - s1 * (s1 * b2 - s3 * b0) +
                      s2 * (s1 * b1 - s2 * b0);
    return dc / d;
}

}  // namespace lab_detail

/// Ordinary least squares on (log eps, log err) with a residual-curvature
/// floor detector. Requires at least 4 strictly positive pairs.
inline RateFit fit_rate(const std::vector<double>& eps, const std::vector<double>& err) {
    if (eps.size() != err.size())
        throw std::invalid_argument("fit_rate: eps and err lengths differ");
    if (eps.size() < 4)
        throw std::invalid_argument("fit_rate: need at least 4 pairs, got " +
                                    std::to_string(eps.size()));
    for (std::size_t i = 0; i < eps.size(); ++i) {
        if (!(eps[i] > 0.0)) throw std::invalid_argument("fit_rate: eps must be positive");
        if (!(err[i] > 0.0))
            throw std::invalid_argument("fit_rate: refusing to fit non-positive error " +
                                        std::to_string(err[i]));
    }
    RateFit fit;
    fit.eps_values = eps;
    fit.errors = err;
    auto line = lab_detail::loglog_fit(eps, err);
    fit.slope = line.slope;
    fit.intercept = line.intercept;
    fit.r_squared = line.r_squared;
    fit.curvature_flag = std::abs(lab_detail::loglog_curvature(eps, err)) > 0.02;
    return fit;
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

/// Fourier-coefficient recipe for smooth initial data: mode k amplitude at
/// index k-1 of the cos/sin arrays.
struct InitialData {
    double rho_mean = 1.0;
    std::vector<double> rho_cos, rho_sin;
    double u_mean = 0.0;
    std::vector<double> u_cos, u_sin;

    ScalarField rho_field(const TorusGrid& g) const {
        return synth(g, rho_mean, rho_cos, rho_sin);
    }
    ScalarField u_field(const TorusGrid& g) const { return synth(g, u_mean, u_cos, u_sin); }
    FluidState state(const TorusGrid& g) const {
        auto rho = rho_field(g);
        auto u = u_field(g);
        return FluidState(rho, VectorField::from_components({rho * u}));
    }

private:
    static ScalarField synth(const TorusGrid& g, double mean, const std::vector<double>& cos_a,
                             const std::vector<double>& sin_a) {
        if (g.dim() != 1)
            throw std::invalid_argument("InitialData: experiment recipes are one-dimensional");
        const double tau = 2.0 * M_PI / g.period(0);
        return ScalarField::from_function(g, [&](double x, double) {
            double v = mean;
            for (std::size_t k = 0; k < cos_a.size(); ++k)
                v += cos_a[k] * std::cos(tau * (k + 1) * x);
            for (std::size_t k = 0; k < sin_a.size(); ++k)
                v += sin_a[k] * std::sin(tau * (k + 1) * x);
            return v;
        });
    }
};

struct ExperimentConfig {
    // grid
    int dim = 1;
    int points = 128;
    double period = 1.0;
    // energy law
    double c = 1.0;
    double gamma = 2.0;
    double bump_amplitude = 0.0;
    double bump_lo = 0.8;
    double bump_hi = 1.2;
    // capillarity
    std::string capillarity_kind = "constant";  // constant | qhd
    double c_kappa = 0.01;
    // solver
    SolverConfig solver;
    // experiment
    std::string system = "ek";  // ek | euler | ekf | ch (simulate subcommand)
    std::string setting = "set1";
    double eps = 1.0;
    std::vector<double> eps_list;
    std::vector<double> amplitudes;
    int perturb_mode = 2;
    double perturb_mean = 0.0;  // mean-density offset of the perturbation
    int reference_refine = 2;
    int snapshots = 32;  // aligned snapshot intervals over [0, t_end]
    int mollifier_scale = 8;
    int jobs = 0;
    InitialData initial;

    TorusGrid grid() const { return TorusGrid(dim, points, period); }
    TorusGrid fine_grid() const { return TorusGrid(dim, points * reference_refine, period); }

    EnergyLaw energy() const {
        std::optional<BumpSpec> bump;
        if (bump_amplitude != 0.0) bump = BumpSpec(bump_amplitude, bump_lo, bump_hi);
        return EnergyLaw(c, gamma, bump);
    }
    CapillarityLaw capillarity() const {
        if (capillarity_kind == "constant") return CapillarityLaw::constant(c_kappa);
        if (capillarity_kind == "qhd") return CapillarityLaw::qhd();
        if (capillarity_kind == "rho^-2")
            return CapillarityLaw::custom([](double r) { return 1.0 / (r * r); },
                                          [](double r) { return -2.0 / (r * r * r); },
                                          [](double r) { return 6.0 / (r * r * r * r); }, true,
                                          "rho^-2");
        throw std::invalid_argument("ExperimentConfig: unknown capillarity kind '" +
                                    capillarity_kind + "'");
    }

    /// Hypothesis checks shared by every experiment; throws with the violated
    /// clause in the message.
    void validate() const {
        (void)grid();
        (void)energy();
        auto cap = capillarity();
        if (solver.t_end <= 0.0) throw std::invalid_argument("solver.t_end must be positive");
        if (snapshots < 2) throw std::invalid_argument("experiment.snapshots must be >= 2");
        for (double a : amplitudes)
            if (!(a > 0.0))
                throw std::invalid_argument("experiment.amplitudes must be strictly positive");
        for (double e : eps_list)
            if (!(e > 0.0))
                throw std::invalid_argument("experiment.eps_list must be strictly positive");

        // (A1)/(A2): for 1 < gamma < 2 the candidate and reference must carry
        // equal masses; mode-k >= 1 perturbations are mean-free, so the check
        // is on the recipes actually used.
        if (gamma < 2.0 && !amplitudes.empty()) {
            auto g = grid();
            const double base_mass = spectral::integrate(initial.rho_field(g));
            auto pert = perturbed_initial(amplitudes.front());
            const double pert_mass = spectral::integrate(pert.rho_field(g));
            if (std::abs(pert_mass - base_mass) > 1e-12 * std::max(1.0, std::abs(base_mass)))
                throw std::invalid_argument(
                    "A2 mass mismatch: gamma < 2 requires equal initial masses "
                    "(difference " +
                    std::to_string(pert_mass - base_mass) + ")");
        }

        if (setting == "set2") {
            auto verdict = set2_check(cap, energy(), 0.25, 4.0, 512);
            if (!verdict.pass)
                throw std::invalid_argument("set2 admissibility failed: " + verdict.failure);
        }
        if ((system == "ekf" || setting == "set1") && capillarity_kind != "constant" &&
            system != "ch")
            throw std::invalid_argument(
                "constant capillarity required for Set1 and friction experiments");
    }

    /// Base recipe plus an amplitude-a mode perturbation on density and
    /// velocity (mean-free by construction).
    InitialData perturbed_initial(double a) const {
        InitialData d = initial;
        const std::size_t idx = static_cast<std::size_t>(perturb_mode - 1);
        if (d.rho_sin.size() <= idx) d.rho_sin.resize(idx + 1, 0.0);
        if (d.u_cos.size() <= idx) d.u_cos.resize(idx + 1, 0.0);
        d.rho_sin[idx] += a;
        d.u_cos[idx] += a;
        d.rho_mean += perturb_mean;
        return d;
    }

    static ExperimentConfig from_table(config::Table table);
    config::Table to_table() const;
};

namespace lab_detail {

class TableReader {
public:
    explicit TableReader(config::Table table) : table_(std::move(table)) {}

    double number(const std::string& key, double fallback) {
        auto v = take(key);
        if (!v) return fallback;
        if (v->type != config::Value::Type::Number)
            throw config::ParseError("key '" + key + "' must be a number");
        return v->num;
    }
    int integer(const std::string& key, int fallback) {
        const double d = number(key, fallback);
        const int i = static_cast<int>(std::lround(d));
        if (std::abs(d - i) > 1e-12)
            throw config::ParseError("key '" + key + "' must be an integer");
        return i;
    }
    bool flag(const std::string& key, bool fallback) {
        auto v = take(key);
        if (!v) return fallback;
        if (v->type != config::Value::Type::Boolean)
            throw config::ParseError("key '" + key + "' must be true or false");
        return v->boolean;
    }
    std::string text(const std::string& key, const std::string& fallback) {
        auto v = take(key);
        if (!v) return fallback;
        if (v->type != config::Value::Type::String)
            throw config::ParseError("key '" + key + "' must be a string");
        return v->str;
    }
    std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
        auto v = take(key);
        if (!v) return fallback;
        if (v->type != config::Value::Type::NumberList)
            throw config::ParseError("key '" + key + "' must be a number array");
        return v->list;
    }
    /// dt accepts a number or the string "auto" (stored as 0).
    double dt_value(const std::string& key, double fallback) {
        auto v = take(key);
        if (!v) return fallback;
        if (v->type == config::Value::Type::String) {
            if (v->str == "auto") return 0.0;
            throw config::ParseError("key '" + key + "' must be a number or \"auto\"");
        }
        if (v->type != config::Value::Type::Number)
            throw config::ParseError("key '" + key + "' must be a number or \"auto\"");
        if (!(v->num > 0.0)) throw config::ParseError("key '" + key + "' must be positive");
        return v->num;
    }

    void reject_unknown() const {
        if (table_.empty()) return;
        std::string keys;
        for (const auto& [k, v] : table_) keys += (keys.empty() ? "" : ", ") + k;
        throw config::ParseError("unknown config keys: " + keys);
    }

private:
    std::optional<config::Value> take(const std::string& key) {
        auto it = table_.find(key);
        if (it == table_.end()) return std::nullopt;
        config::Value v = it->second;
        table_.erase(it);
        return v;
    }
    config::Table table_;
};

}  // namespace lab_detail

inline ExperimentConfig ExperimentConfig::from_table(config::Table table) {
    lab_detail::TableReader r(std::move(table));
    ExperimentConfig cfg;
    cfg.dim = r.integer("grid.dim", cfg.dim);
    cfg.points = r.integer("grid.points", cfg.points);
    cfg.period = r.number("grid.period", cfg.period);
    cfg.c = r.number("energy.c", cfg.c);
    cfg.gamma = r.number("energy.gamma", cfg.gamma);
    cfg.bump_amplitude = r.number("energy.bump_amplitude", cfg.bump_amplitude);
    cfg.bump_lo = r.number("energy.bump_lo", cfg.bump_lo);
    cfg.bump_hi = r.number("energy.bump_hi", cfg.bump_hi);
    cfg.capillarity_kind = r.text("capillarity.kind", cfg.capillarity_kind);
    cfg.c_kappa = r.number("capillarity.c_kappa", cfg.c_kappa);
    cfg.solver.dt = r.dt_value("solver.dt", cfg.solver.dt);
    cfg.solver.t_end = r.number("solver.t_end", cfg.solver.t_end);
    cfg.solver.cfl_advective = r.number("solver.cfl_advective", cfg.solver.cfl_advective);
    cfg.solver.cfl_dispersive = r.number("solver.cfl_dispersive", cfg.solver.cfl_dispersive);
    cfg.solver.vacuum_floor = r.number("solver.vacuum_floor", cfg.solver.vacuum_floor);
    const std::string scheme = r.text("solver.scheme", "rk4");
    if (scheme == "rk4")
        cfg.solver.scheme = SolverConfig::Scheme::Rk4;
    else if (scheme == "imex-ch")
        cfg.solver.scheme = SolverConfig::Scheme::ImexCh;
    else
        throw config::ParseError("solver.scheme must be \"rk4\" or \"imex-ch\"");
    cfg.solver.snapshot_every = r.integer("solver.snapshot_every", cfg.solver.snapshot_every);
    cfg.solver.conservative_form = r.flag("solver.conservative_form", cfg.solver.conservative_form);
    cfg.solver.exact_friction = r.flag("solver.exact_friction", cfg.solver.exact_friction);
    cfg.solver.dealias = r.flag("solver.dealias", cfg.solver.dealias);
    cfg.solver.blowup_gradient_factor =
        r.number("solver.blowup_gradient_factor", cfg.solver.blowup_gradient_factor);
    cfg.initial.rho_mean = r.number("initial.rho_mean", cfg.initial.rho_mean);
    cfg.initial.rho_cos = r.numbers("initial.rho_cos", cfg.initial.rho_cos);
    cfg.initial.rho_sin = r.numbers("initial.rho_sin", cfg.initial.rho_sin);
    cfg.initial.u_mean = r.number("initial.u_mean", cfg.initial.u_mean);
    cfg.initial.u_cos = r.numbers("initial.u_cos", cfg.initial.u_cos);
    cfg.initial.u_sin = r.numbers("initial.u_sin", cfg.initial.u_sin);
    cfg.system = r.text("experiment.system", cfg.system);
    cfg.setting = r.text("experiment.setting", cfg.setting);
    cfg.eps = r.number("experiment.eps", cfg.eps);
    cfg.eps_list = r.numbers("experiment.eps_list", cfg.eps_list);
    cfg.amplitudes = r.numbers("experiment.amplitudes", cfg.amplitudes);
    cfg.perturb_mode = r.integer("experiment.perturb_mode", cfg.perturb_mode);
    cfg.perturb_mean = r.number("experiment.perturb_mean", cfg.perturb_mean);
    cfg.reference_refine = r.integer("experiment.reference_refine", cfg.reference_refine);
    cfg.snapshots = r.integer("experiment.snapshots", cfg.snapshots);
    cfg.mollifier_scale = r.integer("experiment.mollifier_scale", cfg.mollifier_scale);
    cfg.jobs = r.integer("experiment.jobs", cfg.jobs);
    r.reject_unknown();
    return cfg;
}

inline config::Table ExperimentConfig::to_table() const {
    using config::Value;
    config::Table t;
    t["grid.dim"] = Value::number(dim);
    t["grid.points"] = Value::number(points);
    t["grid.period"] = Value::number(period);
    t["energy.c"] = Value::number(c);
    t["energy.gamma"] = Value::number(gamma);
    t["energy.bump_amplitude"] = Value::number(bump_amplitude);
    t["energy.bump_lo"] = Value::number(bump_lo);
    t["energy.bump_hi"] = Value::number(bump_hi);
    t["capillarity.kind"] = Value::string(capillarity_kind);
    t["capillarity.c_kappa"] = Value::number(c_kappa);
    t["solver.dt"] = solver.dt > 0.0 ? Value::number(solver.dt) : Value::string("auto");
    t["solver.t_end"] = Value::number(solver.t_end);
    t["solver.cfl_advective"] = Value::number(solver.cfl_advective);
    t["solver.cfl_dispersive"] = Value::number(solver.cfl_dispersive);
    t["solver.vacuum_floor"] = Value::number(solver.vacuum_floor);
    t["solver.scheme"] =
        Value::string(solver.scheme == SolverConfig::Scheme::Rk4 ? "rk4" : "imex-ch");
    t["solver.snapshot_every"] = Value::number(solver.snapshot_every);
    t["solver.conservative_form"] = Value::flag(solver.conservative_form);
    t["solver.exact_friction"] = Value::flag(solver.exact_friction);
    t["solver.dealias"] = Value::flag(solver.dealias);
    t["solver.blowup_gradient_factor"] = Value::number(solver.blowup_gradient_factor);
    t["initial.rho_mean"] = Value::number(initial.rho_mean);
    t["initial.rho_cos"] = Value::numbers(initial.rho_cos);
    t["initial.rho_sin"] = Value::numbers(initial.rho_sin);
    t["initial.u_mean"] = Value::number(initial.u_mean);
    t["initial.u_cos"] = Value::numbers(initial.u_cos);
    t["initial.u_sin"] = Value::numbers(initial.u_sin);
    t["experiment.system"] = Value::string(system);
    t["experiment.setting"] = Value::string(setting);
    t["experiment.eps"] = Value::number(eps);
    t["experiment.eps_list"] = Value::numbers(eps_list);
    t["experiment.amplitudes"] = Value::numbers(amplitudes);
    t["experiment.perturb_mode"] = Value::number(perturb_mode);
    t["experiment.perturb_mean"] = Value::number(perturb_mean);
    t["experiment.reference_refine"] = Value::number(reference_refine);
    t["experiment.snapshots"] = Value::number(snapshots);
    t["experiment.mollifier_scale"] = Value::number(mollifier_scale);
    t["experiment.jobs"] = Value::number(jobs);
    return t;
}

namespace lab_detail {

/// Time stepping aligned with a fixed snapshot grid: the step divides the
/// snapshot interval exactly, so paired runs sample identical times.
inline SolverConfig aligned_solver(const SolverConfig& base, double t_end, int snapshots,
                                   double dt_target) {
    SolverConfig cfg = base;
    cfg.t_end = t_end;
    const double interval = t_end / snapshots;
    const int n_sub = std::max(1, static_cast<int>(std::ceil(interval / dt_target - 1e-12)));
    cfg.dt = interval / n_sub;
    cfg.snapshot_every = n_sub;
    return cfg;
}

inline FluidState restrict_state(const FluidState& fine, const TorusGrid& coarse) {
    return FluidState(spectral::restrict_to(fine.rho, coarse),
                      spectral::restrict_to(fine.m, coarse));
}

inline FluidTrajectory restrict_trajectory(const FluidTrajectory& fine, const TorusGrid& coarse) {
    FluidTrajectory out;
    for (std::size_t i = 0; i < fine.size(); ++i)
        out.push(fine.times[i], restrict_state(fine.states[i], coarse), fine.diagnostics[i]);
    out.status = fine.status;
    out.abort_reason = fine.abort_reason;
    return out;
}

template <typename State>
Trajectory<State> subsample(const Trajectory<State>& t, std::size_t stride) {
    Trajectory<State> out;
    for (std::size_t i = 0; i < t.size(); i += stride)
        out.push(t.times[i], t.states[i], t.diagnostics[i]);
    return out;
}

inline void require_completed(const FluidTrajectory& traj, const std::string& label) {
    if (!traj.completed())
        throw std::runtime_error(label + " aborted: " + traj.abort_reason);
}

inline int effective_jobs(int jobs) {
    if (const char* env = std::getenv("KORTEWEG_LAB_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    if (jobs > 0) return jobs;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

/// Run one job per item with bounded parallelism, preserving item order.
template <typename T, typename Fn>
std::vector<T> parallel_map(std::size_t count, int jobs, Fn&& fn) {
    std::vector<T> results(count);
    std::size_t next = 0;
    while (next < count) {
        const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(jobs),
                                                        count - next);
        std::vector<std::future<T>> futures;
        for (std::size_t j = 0; j < batch; ++j)
            futures.push_back(std::async(std::launch::async, fn, next + j));
        for (std::size_t j = 0; j < batch; ++j) results[next + j] = futures[j].get();
        next += batch;
    }
    return results;
}

}  // namespace lab_detail

// ---------------------------------------------------------------------------
// Energy balance study
// ---------------------------------------------------------------------------

struct EnergyBalanceReport {
    double mass_drift = 0.0;
    double momentum_drift = 0.0;
    double energy_drift = 0.0;
    double drift_order = 0.0;      // measured under dt-halving
    double order_drift_coarse = 0.0, order_drift_fine = 0.0;
    FluidTrajectory trajectory;
};

inline EnergyBalanceReport run_energy_balance(const ExperimentConfig& cfg,
                                              const std::filesystem::path* out_dir = nullptr) {
    cfg.validate();
    auto g = cfg.grid();
    EkSystem sys{cfg.energy(), cfg.capillarity(), cfg.eps};
    auto init = cfg.initial.state(g);

    SolverConfig main_cfg = cfg.solver;
    auto traj = integrate_fluid(sys, init, main_cfg);
    lab_detail::require_completed(traj, "energy balance run");

    EnergyBalanceReport rep;
    const auto& d0 = traj.diagnostics.front();
    for (const auto& d : traj.diagnostics) {
        rep.mass_drift = std::max(rep.mass_drift, std::abs(d.mass - d0.mass) /
                                                      std::max(std::abs(d0.mass), 1e-30));
        rep.momentum_drift =
            std::max(rep.momentum_drift,
                     std::abs(d.momentum[0] - d0.momentum[0]) /
                         std::max(std::abs(d0.momentum[0]), std::abs(d0.mass)));
        rep.energy_drift = std::max(rep.energy_drift, std::abs(d.energy - d0.energy) /
                                                          std::max(std::abs(d0.energy), 1e-30));
    }

    // dt-refinement order of the energy drift, measured on a short run whose
    // data carries a resolved high mode: at the plain CFL step the smooth
    // low modes are integrated to roundoff and no order is visible.
    {
        InitialData probe = cfg.initial;
        const std::size_t probe_mode = static_cast<std::size_t>(cfg.points / 4);
        if (probe.rho_sin.size() < probe_mode) probe.rho_sin.resize(probe_mode, 0.0);
        probe.rho_sin[probe_mode - 1] += 1e-3;
        auto probe_state = probe.state(g);

        double kap_max = 0.0;
        auto cap = cfg.capillarity();
        for (std::size_t i = 0; i < probe_state.rho.size(); ++i)
            kap_max = std::max(kap_max, cap.kappa(probe_state.rho[i]));
        const double k_max = M_PI / g.spacing(0);
        const double lambda = std::sqrt(cfg.eps * kap_max * probe_state.rho.max()) * k_max * k_max;
        const double dt0 = 2.2 / lambda;

        auto drift_at = [&](double dt) {
            SolverConfig oc = cfg.solver;
            oc.dt = dt;
            oc.t_end = std::min(cfg.solver.t_end, 2048.0 * dt0);
            oc.snapshot_every = 1 << 20;
            oc.blowup_gradient_factor = 0.0;
            auto t = integrate_fluid(sys, probe_state, oc);
            lab_detail::require_completed(t, "energy order probe");
            return std::abs(t.diagnostics.back().energy - t.diagnostics.front().energy) /
                   std::abs(t.diagnostics.front().energy);
        };
        rep.order_drift_coarse = drift_at(dt0);
        rep.order_drift_fine = drift_at(dt0 / 2.0);
        rep.drift_order = std::log2(rep.order_drift_coarse / rep.order_drift_fine);
    }

    rep.trajectory = traj;
    if (out_dir) {
        io::export_trajectory(*out_dir / "trajectory", traj);
        auto out = io::open_out(*out_dir / "summary.csv");
        out << "mass_drift,momentum_drift,energy_drift,drift_order\n";
        out << io::fmt(rep.mass_drift) << ',' << io::fmt(rep.momentum_drift) << ','
            << io::fmt(rep.energy_drift) << ',' << io::fmt(rep.drift_order) << '\n';
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Weak-strong stability study (Gronwall)
// ---------------------------------------------------------------------------

struct WeakStrongReport {
    std::vector<double> amplitudes;
    std::vector<double> psi0;            // Psi(0) per amplitude
    std::vector<double> sup_ratio;       // sup_t Psi / Psi(0)
    std::vector<double> gronwall_c;      // fitted log-derivative bound per amplitude
    std::vector<bool> gronwall_holds;    // Psi(t) <= exp(C t) Psi(0) at snapshots
    double psi0_slope = 0.0;             // log-log slope of Psi(0) vs amplitude
    double sup_ratio_spread = 0.0;       // max/min - 1 across amplitudes
    double lemma31_ratio_coarse = 0.0;   // residual ratios under snapshot refinement
    double lemma31_ratio_fine = 0.0;
    std::vector<std::vector<double>> psi_curves;
    std::vector<double> times;
};

inline WeakStrongReport run_weak_strong(const ExperimentConfig& cfg,
                                        const std::filesystem::path* out_dir = nullptr) {
    cfg.validate();
    if (cfg.amplitudes.empty())
        throw std::invalid_argument("run_weak_strong: experiment.amplitudes is empty");
    if (!cfg.capillarity().is_constant())
        throw std::invalid_argument("run_weak_strong: constant capillarity required");

    auto g = cfg.grid();
    auto gf = cfg.fine_grid();
    auto energy = cfg.energy();
    auto cap = cfg.capillarity();
    EkSystem sys{energy, cap, cfg.eps};

    // dense snapshot cadence so the lemma residual can be refined 4x
    const int snaps = cfg.snapshots * 4;
    const double dt_cand = cfg.solver.dt > 0.0
                               ? cfg.solver.dt
                               : sys.auto_dt(cfg.initial.state(g), cfg.solver);
    auto cand_cfg = lab_detail::aligned_solver(cfg.solver, cfg.solver.t_end, snaps, dt_cand);
    auto ref_cfg = lab_detail::aligned_solver(cfg.solver, cfg.solver.t_end, snaps, dt_cand / 4.0);

    auto ref_fine = integrate_fluid(sys, cfg.initial.state(gf), ref_cfg);
    lab_detail::require_completed(ref_fine, "weak-strong reference");
    auto ref = lab_detail::restrict_trajectory(ref_fine, g);

    WeakStrongReport rep;
    rep.amplitudes = cfg.amplitudes;
    rep.times = ref.times;

    const int jobs = lab_detail::effective_jobs(cfg.jobs);
    auto trajs = lab_detail::parallel_map<FluidTrajectory>(
        cfg.amplitudes.size(), jobs, [&](std::size_t i) {
            return integrate_fluid(sys, cfg.perturbed_initial(cfg.amplitudes[i]).state(g),
                                   cand_cfg);
        });

    for (std::size_t i = 0; i < cfg.amplitudes.size(); ++i) {
        lab_detail::require_completed(trajs[i], "weak-strong candidate");
        std::vector<double> psi;
        for (std::size_t j = 0; j < ref.size(); ++j)
            psi.push_back(reduced_relative_energy(trajs[i].states[j], ref.states[j], energy, cap,
                                                  cfg.eps));
        rep.psi_curves.push_back(psi);
        rep.psi0.push_back(psi.front());
        double sup = 0.0;
        for (double v : psi) sup = std::max(sup, v);
        rep.sup_ratio.push_back(sup / psi.front());

        // empirical Gronwall constant: max logarithmic derivative measured
        // over the snapshot intervals; the exponential bound then holds at
        // every snapshot by telescoping
        double c_hat = 0.0;
        for (std::size_t j = 1; j < psi.size(); ++j) {
            const double dt1 = ref.times[j] - ref.times[j - 1];
            c_hat = std::max(c_hat, (std::log(psi[j]) - std::log(psi[j - 1])) / dt1);
        }
        rep.gronwall_c.push_back(c_hat);
        bool holds = true;
        for (std::size_t j = 0; j < psi.size(); ++j)
            if (psi[j] > std::exp(c_hat * ref.times[j]) * psi.front() * (1.0 + 1e-6))
                holds = false;
        rep.gronwall_holds.push_back(holds);
    }

    rep.psi0_slope = lab_detail::loglog_fit(rep.amplitudes, rep.psi0).slope;
    double lo = rep.sup_ratio.front(), hi = rep.sup_ratio.front();
    for (double v : rep.sup_ratio) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    rep.sup_ratio_spread = hi / lo - 1.0;

    // bump identity residual under snapshot refinement (largest amplitude)
    {
        const auto& cand = trajs.front();
        const double r1 = lemma31_residual(lab_detail::subsample(cand, 4),
                                           lab_detail::subsample(ref, 4), energy);
        const double r2 = lemma31_residual(lab_detail::subsample(cand, 2),
                                           lab_detail::subsample(ref, 2), energy);
        const double r4 = lemma31_residual(cand, ref, energy);
        rep.lemma31_ratio_coarse = r1 / r2;
        rep.lemma31_ratio_fine = r2 / r4;
    }

    if (out_dir) {
        auto out = io::open_out(*out_dir / "psi.csv");
        out << "t";
        for (double a : rep.amplitudes) out << ",psi_a" << io::fmt(a);
        out << '\n';
        for (std::size_t j = 0; j < rep.times.size(); ++j) {
            out << io::fmt(rep.times[j]);
            for (const auto& curve : rep.psi_curves) out << ',' << io::fmt(curve[j]);
            out << '\n';
        }
        auto sum = io::open_out(*out_dir / "summary.csv");
        sum << "amplitude,psi0,sup_ratio,gronwall_c,gronwall_holds\n";
        for (std::size_t i = 0; i < rep.amplitudes.size(); ++i)
            sum << io::fmt(rep.amplitudes[i]) << ',' << io::fmt(rep.psi0[i]) << ','
                << io::fmt(rep.sup_ratio[i]) << ',' << io::fmt(rep.gronwall_c[i]) << ','
                << (rep.gronwall_holds[i] ? 1 : 0) << '\n';
        auto fit = io::open_out(*out_dir / "fit.csv");
        fit << "psi0_slope,sup_ratio_spread,lemma31_ratio_coarse,lemma31_ratio_fine\n";
        fit << io::fmt(rep.psi0_slope) << ',' << io::fmt(rep.sup_ratio_spread) << ','
            << io::fmt(rep.lemma31_ratio_coarse) << ',' << io::fmt(rep.lemma31_ratio_fine) << '\n';
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Vanishing capillarity study (Set1 / Set2)
// ---------------------------------------------------------------------------

enum class CapillaritySetting { Set1, Set2 };

struct CapillarityReport {
    std::vector<double> eps_values;
    std::vector<double> sup_errors;
    std::vector<bool> floor_flags;
    RateFit fit;                      // over unflagged points
    std::vector<std::vector<double>> error_curves;
    std::vector<double> times;
};

namespace lab_detail {

/// Functional of the capillarity study at one snapshot.
inline double capillarity_functional(CapillaritySetting setting, const FluidState& cand,
                                     const FluidState& ref, const EnergyLaw& energy,
                                     const CapillarityLaw& cap, double eps) {
    if (setting == CapillaritySetting::Set1)
        return ek_relative_energy(cand, ref, energy, cap, eps).total;
    return euler_relative_energy(cand, ref, energy, cap, eps);
}

struct CapillarityRun {
    double sup_error = 0.0;
    std::vector<double> curve;
};

}  // namespace lab_detail

inline CapillarityReport run_vanishing_capillarity(
    const ExperimentConfig& cfg, CapillaritySetting setting,
    const std::filesystem::path* out_dir = nullptr) {
    cfg.validate();
    if (cfg.eps_list.size() < 4)
        throw std::invalid_argument("run_vanishing_capillarity: need >= 4 eps values");
    if (cfg.bump_amplitude != 0.0)
        throw std::invalid_argument(
            "run_vanishing_capillarity: convex energy required (disable the bump)");
    if (setting == CapillaritySetting::Set1 && !cfg.capillarity().is_constant())
        throw std::invalid_argument("Set1 requires constant capillarity");
    if (setting == CapillaritySetting::Set2) {
        auto verdict = set2_check(cfg.capillarity(), cfg.energy(), 0.25, 4.0, 512);
        if (!verdict.pass)
            throw std::invalid_argument("Set2 admissibility failed: " + verdict.failure);
    }

    auto energy = cfg.energy();
    auto cap = cfg.capillarity();

    // reference: compressible Euler, fine grid, restricted spectrally
    auto euler_reference = [&](const TorusGrid& coarse, int refine, double dt_target) {
        TorusGrid fine(coarse.dim(), coarse.points_per_axis() * refine, coarse.period(0));
        EulerSystem esys{energy};
        auto ref_cfg = lab_detail::aligned_solver(cfg.solver, cfg.solver.t_end, cfg.snapshots,
                                                  dt_target / 4.0);
        auto traj = integrate_fluid(esys, cfg.initial.state(fine), ref_cfg);
        lab_detail::require_completed(traj, "Euler reference");
        return lab_detail::restrict_trajectory(traj, coarse);
    };

    auto run_eps = [&](const TorusGrid& g, const FluidTrajectory& ref, double eps_val) {
        EkSystem sys{energy, cap, eps_val};
        const double dt = cfg.solver.dt > 0.0 ? cfg.solver.dt
                                              : sys.auto_dt(cfg.initial.state(g), cfg.solver);
        auto run_cfg = lab_detail::aligned_solver(cfg.solver, cfg.solver.t_end, cfg.snapshots, dt);
        auto traj = integrate_fluid(sys, cfg.initial.state(g), run_cfg);
        lab_detail::require_completed(traj, "EK eps run");
        lab_detail::CapillarityRun out;
        for (std::size_t j = 0; j < ref.size(); ++j) {
            const double v = lab_detail::capillarity_functional(setting, traj.states[j],
                                                                ref.states[j], energy, cap,
                                                                eps_val);
            out.curve.push_back(v);
            out.sup_error = std::max(out.sup_error, v);
        }
        return out;
    };

    auto g = cfg.grid();
    EkSystem stiffest{energy, cap, cfg.eps_list.front()};
    const double dt_ref_target = cfg.solver.dt > 0.0
                                     ? cfg.solver.dt
                                     : stiffest.auto_dt(cfg.initial.state(g), cfg.solver);
    auto ref = euler_reference(g, cfg.reference_refine, dt_ref_target);

    CapillarityReport rep;
    rep.eps_values = cfg.eps_list;
    rep.times = ref.times;

    const int jobs = lab_detail::effective_jobs(cfg.jobs);
    auto runs = lab_detail::parallel_map<lab_detail::CapillarityRun>(
        cfg.eps_list.size(), jobs, [&](std::size_t i) { return run_eps(g, ref, cfg.eps_list[i]); });
    for (auto& r : runs) {
        rep.sup_errors.push_back(r.sup_error);
        rep.error_curves.push_back(std::move(r.curve));
    }

    // discretization floor: rerun the smallest eps at doubled resolution; a
    // >= 10% change flags the point and removes it from the fit
    rep.floor_flags.assign(cfg.eps_list.size(), false);
    {
        const std::size_t last = cfg.eps_list.size() - 1;
        TorusGrid g2(cfg.dim, cfg.points * 2, cfg.period);
        ExperimentConfig fine_cfg = cfg;
        fine_cfg.points = cfg.points * 2;
        EkSystem sys2{energy, cap, cfg.eps_list[last]};
        const double dt2 = cfg.solver.dt > 0.0
                               ? cfg.solver.dt / 2.0
                               : sys2.auto_dt(cfg.initial.state(g2), cfg.solver);
        auto ref2 = euler_reference(g2, cfg.reference_refine, dt2);
        EkSystem sys_fine{energy, cap, cfg.eps_list[last]};
        auto run_cfg2 =
            lab_detail::aligned_solver(cfg.solver, cfg.solver.t_end, cfg.snapshots, dt2);
        auto traj2 = integrate_fluid(sys_fine, cfg.initial.state(g2), run_cfg2);
        lab_detail::require_completed(traj2, "floor probe");
        double sup2 = 0.0;
        for (std::size_t j = 0; j < ref2.size(); ++j)
            sup2 = std::max(sup2, lab_detail::capillarity_functional(
                                      setting, traj2.states[j], ref2.states[j], energy, cap,
                                      cfg.eps_list[last]));
        const double change = std::abs(sup2 - rep.sup_errors[last]) /
                              std::max(rep.sup_errors[last], 1e-300);
        if (change >= 0.10) rep.floor_flags[last] = true;
    }

    std::vector<double> fit_eps, fit_err;
    for (std::size_t i = 0; i < cfg.eps_list.size(); ++i) {
        if (!rep.floor_flags[i]) {
            fit_eps.push_back(cfg.eps_list[i]);
            fit_err.push_back(rep.sup_errors[i]);
        }
    }
    rep.fit = fit_rate(fit_eps, fit_err);

    if (out_dir) {
        auto rates = io::open_out(*out_dir / "rates.csv");
        rates << "eps,sup_error,floor_flag\n";
        for (std::size_t i = 0; i < rep.eps_values.size(); ++i)
            rates << io::fmt(rep.eps_values[i]) << ',' << io::fmt(rep.sup_errors[i]) << ','
                  << (rep.floor_flags[i] ? 1 : 0) << '\n';
        auto fit = io::open_out(*out_dir / "fit.csv");
        fit << "slope,intercept,r2\n";
        fit << io::fmt(rep.fit.slope) << ',' << io::fmt(rep.fit.intercept) << ','
            << io::fmt(rep.fit.r_squared) << '\n';
        auto sum = io::open_out(*out_dir / "summary.csv");
        sum << "t";
        for (double e : rep.eps_values) sum << ",phi_eps" << io::fmt(e);
        sum << '\n';
        for (std::size_t j = 0; j < rep.times.size(); ++j) {
            sum << io::fmt(rep.times[j]);
            for (const auto& curve : rep.error_curves) sum << ',' << io::fmt(curve[j]);
            sum << '\n';
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Large friction study (Cahn-Hilliard limit)
// ---------------------------------------------------------------------------

struct FrictionReport {
    std::vector<double> eps_values;
    std::vector<double> sup_psi;
    std::vector<double> psi0;
    std::vector<double> defect_sup;   // ||E_bar||_inf per eps
    std::vector<double> m_bar_sup;    // ||m_bar||_inf per eps
    std::vector<bool> floor_flags;
    bool monotone = false;
    RateFit psi_fit;
    RateFit defect_fit;
    std::vector<std::vector<double>> psi_curves;
    std::vector<double> times;
};

inline FrictionReport run_large_friction(const ExperimentConfig& cfg,
                                         const std::filesystem::path* out_dir = nullptr) {
    cfg.validate();
    if (cfg.eps_list.size() < 4)
        throw std::invalid_argument("run_large_friction: need >= 4 eps values");
    if (!cfg.capillarity().is_constant())
        throw std::invalid_argument("run_large_friction: constant capillarity required");

    auto energy = cfg.energy();
    const double ck = cfg.c_kappa;

    auto ch_reference = [&](int points, double dt) {
        TorusGrid g(cfg.dim, points, cfg.period);
        SolverConfig ch_cfg =
            lab_detail::aligned_solver(cfg.solver, cfg.solver.t_end, cfg.snapshots, dt);
        auto traj = integrate_ch(cfg.initial.rho_field(g), energy, ck, ch_cfg);
        if (!traj.completed())
            throw std::runtime_error("CH reference aborted: " + traj.abort_reason);
        return traj;
    };

    struct EpsRun {
        double sup_psi = 0.0, psi0 = 0.0, defect = 0.0, m_sup = 0.0;
        std::vector<double> curve;
    };

    auto run_eps = [&](const DensityTrajectory& ch, int points, double eps_val,
                       double dt_scale) {
        TorusGrid g(cfg.dim, points, cfg.period);
        auto lift = ch_lift(ch, energy, ck, eps_val);
        EkfSystem sys{energy, ck, eps_val};
        const FluidState& init = lift.lifted.states.front();
        const double dt = (cfg.solver.dt > 0.0 ? cfg.solver.dt : sys.auto_dt(init, cfg.solver)) *
                          dt_scale;
        auto run_cfg = lab_detail::aligned_solver(cfg.solver, cfg.solver.t_end, cfg.snapshots, dt);
        auto traj = integrate_fluid(sys, init, run_cfg);
        lab_detail::require_completed(traj, "EKF eps run");
        EpsRun out;
        out.defect = lift.defect_sup;
        out.m_sup = lift.m_sup;
        auto cap = CapillarityLaw::constant(ck);
        for (std::size_t j = 0; j < traj.size(); ++j) {
            const double v = reduced_relative_energy(traj.states[j], lift.lifted.states[j],
                                                     energy, cap, 1.0);
            out.curve.push_back(v);
            out.sup_psi = std::max(out.sup_psi, v);
        }
        out.psi0 = out.curve.front();
        return out;
    };

    const double dt_ch = cfg.solver.dt > 0.0 ? cfg.solver.dt / 16.0 : 1e-6;
    auto ch = ch_reference(cfg.points, dt_ch);

    FrictionReport rep;
    rep.eps_values = cfg.eps_list;
    rep.times = ch.times;

    const int jobs = lab_detail::effective_jobs(cfg.jobs);
    auto runs = lab_detail::parallel_map<EpsRun>(cfg.eps_list.size(), jobs, [&](std::size_t i) {
        return run_eps(ch, cfg.points, cfg.eps_list[i], 1.0);
    });
    for (auto& r : runs) {
        rep.sup_psi.push_back(r.sup_psi);
        rep.psi0.push_back(r.psi0);
        rep.defect_sup.push_back(r.defect);
        rep.m_bar_sup.push_back(r.m_sup);
        rep.psi_curves.push_back(std::move(r.curve));
    }

    // floor probe: smallest eps at doubled resolution and halved steps
    rep.floor_flags.assign(cfg.eps_list.size(), false);
    {
        const std::size_t last = cfg.eps_list.size() - 1;
        auto ch2 = ch_reference(cfg.points * 2, dt_ch / 2.0);
        auto probe = run_eps(ch2, cfg.points * 2, cfg.eps_list[last], 0.5);
        const double change =
            std::abs(probe.sup_psi - rep.sup_psi[last]) / std::max(rep.sup_psi[last], 1e-300);
        if (change >= 0.10) rep.floor_flags[last] = true;
    }

    rep.monotone = true;
    for (std::size_t i = 1; i < rep.sup_psi.size(); ++i)
        if (!(rep.sup_psi[i] < rep.sup_psi[i - 1])) rep.monotone = false;

    std::vector<double> fit_eps, fit_err;
    for (std::size_t i = 0; i < cfg.eps_list.size(); ++i) {
        if (!rep.floor_flags[i]) {
            fit_eps.push_back(cfg.eps_list[i]);
            fit_err.push_back(rep.sup_psi[i]);
        }
    }
    rep.psi_fit = fit_rate(fit_eps, fit_err);
    rep.defect_fit = fit_rate(cfg.eps_list, rep.defect_sup);

    if (out_dir) {
        auto rates = io::open_out(*out_dir / "rates.csv");
        rates << "eps,sup_error,floor_flag\n";
        for (std::size_t i = 0; i < rep.eps_values.size(); ++i)
            rates << io::fmt(rep.eps_values[i]) << ',' << io::fmt(rep.sup_psi[i]) << ','
                  << (rep.floor_flags[i] ? 1 : 0) << '\n';
        auto defect = io::open_out(*out_dir / "defect.csv");
        defect << "eps,defect_sup,m_bar_sup,psi0\n";
        for (std::size_t i = 0; i < rep.eps_values.size(); ++i)
            defect << io::fmt(rep.eps_values[i]) << ',' << io::fmt(rep.defect_sup[i]) << ','
                   << io::fmt(rep.m_bar_sup[i]) << ',' << io::fmt(rep.psi0[i]) << '\n';
        auto fit = io::open_out(*out_dir / "fit.csv");
        fit << "slope,intercept,r2,defect_slope,defect_r2\n";
        fit << io::fmt(rep.psi_fit.slope) << ',' << io::fmt(rep.psi_fit.intercept) << ','
            << io::fmt(rep.psi_fit.r_squared) << ',' << io::fmt(rep.defect_fit.slope) << ','
            << io::fmt(rep.defect_fit.r_squared) << '\n';
        auto sum = io::open_out(*out_dir / "summary.csv");
        sum << "t";
        for (double e : rep.eps_values) sum << ",psi_eps" << io::fmt(e);
        sum << '\n';
        for (std::size_t j = 0; j < rep.times.size(); ++j) {
            sum << io::fmt(rep.times[j]);
            for (const auto& curve : rep.psi_curves) sum << ',' << io::fmt(curve[j]);
            sum << '\n';
        }
    }
    return rep;
}

}  // namespace korteweg
