#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "korteweg/grid.hpp"
#include "korteweg/spectral.hpp"

namespace korteweg {

/// Smooth compactly supported perturbation of the internal energy,
/// e(rho) = A exp(-1/(1-s^2)) with s the affine map of [lo,hi] onto [-1,1].
/// e and all derivatives vanish identically outside [lo,hi].
struct BumpSpec {
    double amplitude = 0.0;
    double support_lo = 0.0;
    double support_hi = 0.0;

    BumpSpec() = default;
    BumpSpec(double amp, double lo, double hi) : amplitude(amp), support_lo(lo), support_hi(hi) {
        if (!(lo > 0.0) || !(hi > lo))
            throw std::invalid_argument("BumpSpec: need 0 < support_lo < support_hi");
    }

    bool active() const { return amplitude != 0.0 && support_hi > support_lo; }

    double e(double rho) const {
        if (!active()) return 0.0;
        const double s = scaled(rho);
        if (std::abs(s) >= 1.0) return 0.0;
        return amplitude * std::exp(-1.0 / (1.0 - s * s));
    }

    double ep(double rho) const {
        if (!active()) return 0.0;
        const double s = scaled(rho);
        if (std::abs(s) >= 1.0) return 0.0;
        const double w = std::exp(-1.0 / (1.0 - s * s));
        const double om = 1.0 - s * s;
        return amplitude * w * (-2.0 * s / (om * om)) * slope();
    }

    double epp(double rho) const {
        if (!active()) return 0.0;
        const double s = scaled(rho);
        if (std::abs(s) >= 1.0) return 0.0;
        const double w = std::exp(-1.0 / (1.0 - s * s));
        const double om = 1.0 - s * s;
        const double w2 = w * (4.0 * s * s / (om * om * om * om) -
                               2.0 * (1.0 + 3.0 * s * s) / (om * om * om));
        return amplitude * w2 * slope() * slope();
    }

    /// p_e = rho e' - e.
    double pe(double rho) const { return rho * ep(rho) - e(rho); }

private:
    double scaled(double rho) const { return (2.0 * rho - (support_lo + support_hi)) / (support_hi - support_lo); }
    double slope() const { return 2.0 / (support_hi - support_lo); }
};

/// Internal energy h = c rho^gamma + e(rho) with gamma-law convex part and an
/// optional non-convex bump.
class EnergyLaw {
public:
    EnergyLaw(double c, double gamma, std::optional<BumpSpec> bump = std::nullopt)
        : c_(c), gamma_(gamma), bump_(bump.value_or(BumpSpec{})) {
        if (!(c > 0.0)) throw std::invalid_argument("EnergyLaw: c must be positive");
        if (!(gamma > 1.0)) throw std::invalid_argument("EnergyLaw: gamma must exceed 1");
    }

    double c() const { return c_; }
    double gamma() const { return gamma_; }
    const BumpSpec& bump() const { return bump_; }
    bool has_bump() const { return bump_.active(); }

    double h_gamma(double rho) const {
        check_domain(rho);
        return c_ * std::pow(rho, gamma_);
    }
    double hp_gamma(double rho) const {
        check_domain(rho);
        return c_ * gamma_ * std::pow(rho, gamma_ - 1.0);
    }
    double hpp_gamma(double rho) const {
        check_domain(rho);
        return c_ * gamma_ * (gamma_ - 1.0) * std::pow(rho, gamma_ - 2.0);
    }

    double h(double rho) const { return h_gamma(rho) + bump_.e(rho); }
    double hp(double rho) const { return hp_gamma(rho) + bump_.ep(rho); }
    double hpp(double rho) const { return hpp_gamma(rho) + bump_.epp(rho); }

    /// p = rho h' - h; equals (gamma-1) h for a pure gamma-law.
    double pressure(double rho) const { return rho * hp(rho) - h(rho); }
    double pressure_gamma(double rho) const { return (gamma_ - 1.0) * h_gamma(rho); }

    /// Smallest h'' over the bump support (sampled); negative value means an
    /// elliptic region exists.
    double min_hpp_over_support(int samples = 2001) const {
        if (!has_bump()) return hpp(1.0) < 0.0 ? hpp(1.0) : 0.0;
        double m = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= samples; ++i) {
            const double r = bump_.support_lo +
                             (bump_.support_hi - bump_.support_lo) * i / static_cast<double>(samples);
            m = std::min(m, hpp(r));
        }
        return m;
    }
    bool has_elliptic_region() const { return min_hpp_over_support() < 0.0; }

private:
    static void check_domain(double rho) {
        if (rho < 0.0)
            throw std::domain_error("EnergyLaw: negative density " + std::to_string(rho));
    }
    double c_;
    double gamma_;
    BumpSpec bump_;
};

/// Capillarity coefficient kappa(rho) with first and second derivatives.
class CapillarityLaw {
public:
    using Fn = std::function<double(double)>;

    static CapillarityLaw constant(double ck) {
        if (!(ck > 0.0)) throw std::invalid_argument("CapillarityLaw: C_kappa must be positive");
        CapillarityLaw law;
        law.kind_ = Kind::Constant;
        law.ck_ = ck;
        law.name_ = "constant";
        return law;
    }

    /// Quantum hydrodynamics, kappa = 1/rho.
    static CapillarityLaw qhd() {
        CapillarityLaw law;
        law.kind_ = Kind::Qhd;
        law.name_ = "qhd";
        return law;
    }

    static CapillarityLaw custom(Fn k, Fn kp, Fn kpp, bool singular_at_vacuum, std::string name) {
        CapillarityLaw law;
        law.kind_ = Kind::Custom;
        law.k_ = std::move(k);
        law.kp_ = std::move(kp);
        law.kpp_ = std::move(kpp);
        law.singular_ = singular_at_vacuum;
        law.name_ = std::move(name);
        return law;
    }

    double kappa(double rho) const {
        switch (kind_) {
            case Kind::Constant: return ck_;
            case Kind::Qhd: return 1.0 / rho;
            default: return k_(rho);
        }
    }
    double kappa_p(double rho) const {
        switch (kind_) {
            case Kind::Constant: return 0.0;
            case Kind::Qhd: return -1.0 / (rho * rho);
            default: return kp_(rho);
        }
    }
    double kappa_pp(double rho) const {
        switch (kind_) {
            case Kind::Constant: return 0.0;
            case Kind::Qhd: return 2.0 / (rho * rho * rho);
            default: return kpp_(rho);
        }
    }

    bool is_constant() const { return kind_ == Kind::Constant; }
    double constant_value() const {
        if (!is_constant()) throw std::logic_error("CapillarityLaw: not a constant law");
        return ck_;
    }
    bool singular_at_vacuum() const { return kind_ == Kind::Qhd || singular_; }
    const std::string& name() const { return name_; }

private:
    enum class Kind { Constant, Qhd, Custom };
    CapillarityLaw() = default;
    Kind kind_ = Kind::Constant;
    double ck_ = 1.0;
    Fn k_, kp_, kpp_;
    bool singular_ = false;
    std::string name_;
};

/// Verdict of the admissibility check for the state-dependent capillarity
/// setting: Hessian clause kk'' - 2(k')^2 >= 0 plus the growth bounds
/// rho^2 k <= C (h + rho) and |rho k'| <= C k on the sampled range.
struct Set2Verdict {
    bool pass = false;
    double min_hessian_clause = 0.0;   // min of kk'' - 2(k')^2
    double hessian_scale = 0.0;        // max of |kk''| + 2(k')^2, for margin tests
    double c_growth = 0.0;             // smallest C with rho^2 k <= C (h + rho)
    double c_kappa_prime = 0.0;        // smallest C with |rho k'| <= C k
    bool growth_ratio_increasing = false;  // growth constant still rising at range end
    std::string failure;
};

inline Set2Verdict set2_check(const CapillarityLaw& cap, const EnergyLaw& energy,
                              double rho_lo, double rho_hi, int samples = 512) {
    if (!(rho_lo > 0.0) || !(rho_hi > rho_lo))
        throw std::invalid_argument("set2_check: need 0 < rho_lo < rho_hi");
    if (samples < 2) throw std::invalid_argument("set2_check: need at least 2 samples");

    Set2Verdict v;
    v.min_hessian_clause = std::numeric_limits<double>::infinity();
    double ratio_mid = 0.0, ratio_end = 0.0;
    for (int i = 0; i <= samples; ++i) {
        const double rho = rho_lo + (rho_hi - rho_lo) * i / static_cast<double>(samples);
        const double k = cap.kappa(rho);
        if (!(k > 0.0)) {
            v.pass = false;
            v.failure = "kappa not positive at rho = " + std::to_string(rho);
            return v;
        }
        const double kp = cap.kappa_p(rho);
        const double kpp = cap.kappa_pp(rho);
        const double clause = k * kpp - 2.0 * kp * kp;
        v.min_hessian_clause = std::min(v.min_hessian_clause, clause);
        v.hessian_scale = std::max(v.hessian_scale, std::abs(k * kpp) + 2.0 * kp * kp);
        const double growth = rho * rho * k / (energy.h(rho) + rho);
        v.c_growth = std::max(v.c_growth, growth);
        v.c_kappa_prime = std::max(v.c_kappa_prime, std::abs(rho * kp) / k);
        if (i == samples / 2) ratio_mid = growth;
        if (i == samples) ratio_end = growth;
    }
    v.growth_ratio_increasing = ratio_end > 1.05 * ratio_mid;
    const double tol = 1e-12 * std::max(v.hessian_scale, 1.0);
    if (v.min_hessian_clause < -tol) {
        v.pass = false;
        v.failure = "kappa kappa'' - 2 (kappa')^2 negative: min = " +
                    std::to_string(v.min_hessian_clause);
        return v;
    }
    v.pass = true;
    return v;
}

/// Density/momentum pair on a common grid; the object every solver evolves.
struct FluidState {
    ScalarField rho;
    VectorField m;

    FluidState(ScalarField rho_, VectorField m_) : rho(std::move(rho_)), m(std::move(m_)) {
        detail::require_same_grid(rho.grid(), m.grid(), "FluidState");
        for (std::size_t i = 0; i < rho.size(); ++i) {
            if (!std::isfinite(rho[i]))
                throw std::domain_error("FluidState: non-finite density");
            if (rho[i] < 0.0)
                throw std::domain_error("FluidState: negative density " + std::to_string(rho[i]));
        }
    }

    const TorusGrid& grid() const { return rho.grid(); }
    double mass() const { return spectral::integrate(rho); }
};

/// One scalar function applied nodewise.
inline ScalarField map_field(const ScalarField& f, const std::function<double(double)>& fn) {
    ScalarField out(f.grid());
    for (std::size_t i = 0; i < f.size(); ++i) out[i] = fn(f[i]);
    return out;
}

/// Velocity m/rho with the vacuum convention: u = 0 where rho < floor and the
/// momentum vanishes there too; otherwise a vacuum breach is an error.
inline VectorField velocity(const FluidState& st, double vacuum_floor = 1e-8) {
    VectorField u(st.grid());
    for (std::size_t i = 0; i < st.rho.size(); ++i) {
        if (st.rho[i] < vacuum_floor) {
            for (int a = 0; a < u.dim(); ++a) {
                if (std::abs(st.m.comp(a)[i]) > vacuum_floor)
                    throw std::runtime_error(
                        "velocity: nonzero momentum in vacuum region (min rho = " +
                        std::to_string(st.rho.min()) + ")");
                u.comp(a)[i] = 0.0;
            }
        } else {
            for (int a = 0; a < u.dim(); ++a) u.comp(a)[i] = st.m.comp(a)[i] / st.rho[i];
        }
    }
    return u;
}

/// Kinetic energy density |m|^2 / (2 rho) with the vacuum convention.
inline ScalarField kinetic_density(const FluidState& st, double vacuum_floor = 1e-8) {
    ScalarField out(st.grid());
    for (std::size_t i = 0; i < st.rho.size(); ++i) {
        double m2 = 0.0;
        for (int a = 0; a < st.m.dim(); ++a) m2 += st.m.comp(a)[i] * st.m.comp(a)[i];
        if (st.rho[i] < vacuum_floor) {
            if (m2 > vacuum_floor * vacuum_floor)
                throw std::runtime_error(
                    "kinetic_density: nonzero momentum where rho < vacuum floor (min rho = " +
                    std::to_string(st.rho.min()) + ")");
            out[i] = 0.0;
        } else {
            out[i] = 0.5 * m2 / st.rho[i];
        }
    }
    return out;
}

namespace detail {
inline void require_capillarity_domain(const ScalarField& rho, const CapillarityLaw& cap,
                                       double vacuum_floor, const char* op) {
    if (cap.singular_at_vacuum() && rho.min() < vacuum_floor)
        throw std::runtime_error(std::string(op) +
                                 ": density below vacuum floor under singular capillarity "
                                 "(min rho = " +
                                 std::to_string(rho.min()) + ")");
}
}  // namespace detail

/// Korteweg stress tensor
///   S = [-p - (eps/2)(rho k' + k)|grad rho|^2 + eps div(rho k grad rho)] I
///       - eps k grad rho (x) grad rho.
inline TensorField korteweg_stress(const FluidState& st, const EnergyLaw& energy,
                                   const CapillarityLaw& cap, double eps,
                                   double vacuum_floor = 1e-8) {
    detail::require_capillarity_domain(st.rho, cap, vacuum_floor, "korteweg_stress");
    const TorusGrid& g = st.grid();
    auto grad_rho = spectral::gradient(st.rho);
    auto grad2 = grad_rho.squared_magnitude();
    auto kap = map_field(st.rho, [&](double r) { return cap.kappa(r); });
    auto kap_p = map_field(st.rho, [&](double r) { return cap.kappa_p(r); });
    auto p = map_field(st.rho, [&](double r) { return energy.pressure(r); });

    ScalarField trace_part(g);
    auto div_rkg = spectral::divergence((st.rho * kap) * grad_rho);
    for (std::size_t i = 0; i < trace_part.size(); ++i) {
        trace_part[i] = -p[i] - 0.5 * eps * (st.rho[i] * kap_p[i] + kap[i]) * grad2[i] +
                        eps * div_rkg[i];
    }

    TensorField s(g, true);
    for (int i = 0; i < g.dim(); ++i) {
        for (int j = 0; j < g.dim(); ++j) {
            ScalarField c = kap * (grad_rho.comp(i) * grad_rho.comp(j));
            for (std::size_t n = 0; n < c.size(); ++n)
                s.comp(i, j)[n] = (i == j ? trace_part[n] : 0.0) - eps * c[n];
        }
    }
    return s;
}

/// First variation of the energy with respect to the density,
///   mu = h'(rho) + (eps/2) k'(rho) |grad rho|^2 - eps div(k(rho) grad rho).
inline ScalarField variational_derivative(const ScalarField& rho, const EnergyLaw& energy,
                                          const CapillarityLaw& cap, double eps,
                                          double vacuum_floor = 1e-8) {
    detail::require_capillarity_domain(rho, cap, vacuum_floor, "variational_derivative");
    auto grad_rho = spectral::gradient(rho);
    auto grad2 = grad_rho.squared_magnitude();
    auto kap = map_field(rho, [&](double r) { return cap.kappa(r); });
    auto kap_p = map_field(rho, [&](double r) { return cap.kappa_p(r); });
    auto div_kg = spectral::divergence(kap * grad_rho);
    ScalarField mu(rho.grid());
    for (std::size_t i = 0; i < mu.size(); ++i)
        mu[i] = energy.hp(rho[i]) + 0.5 * eps * kap_p[i] * grad2[i] - eps * div_kg[i];
    return mu;
}

/// Total (kinetic + internal + capillary) energy
///   E = integral of |m|^2/(2 rho) + h(rho) + (eps/2) k(rho) |grad rho|^2.
inline double total_energy(const FluidState& st, const EnergyLaw& energy,
                           const CapillarityLaw& cap, double eps, double vacuum_floor = 1e-8) {
    auto kin = kinetic_density(st, vacuum_floor);
    auto grad2 = spectral::gradient(st.rho).squared_magnitude();
    ScalarField dens(st.grid());
    for (std::size_t i = 0; i < dens.size(); ++i)
        dens[i] = kin[i] + energy.h(st.rho[i]) + 0.5 * eps * cap.kappa(st.rho[i]) * grad2[i];
    return spectral::integrate(dens);
}

}  // namespace korteweg
