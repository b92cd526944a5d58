#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "korteweg/grid.hpp"
#include "korteweg/spectral.hpp"
#include "korteweg/trajectory.hpp"

namespace korteweg {

/// Space-time mollifier phi^n(x) = n phi(n x) built from the smooth bump
/// phi(x) = C exp(-1/(1 - (2x-1)^2)) on (0,1), zero outside, with C chosen so
/// the kernel has unit integral. Support in [0,1] means the mollification
/// looks backward in time.
class MollifierSpec {
public:
    explicit MollifierSpec(int n) : n_(n) {
        if (n < 1) throw std::invalid_argument("MollifierSpec: scale n must be positive");
        // normalization by composite Simpson on the closed-form bump
        const int m = 1 << 16;
        double sum = 0.0;
        for (int i = 0; i <= m; ++i) {
            const double w = (i == 0 || i == m) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
            sum += w * raw(i / static_cast<double>(m));
        }
        norm_ = 3.0 * m / sum;
    }

    int scale() const { return n_; }
    double width() const { return 1.0 / n_; }

    /// Unit-mass kernel on [0,1].
    double kernel(double x) const { return norm_ * raw(x); }

    /// Scaled kernel phi^n(x) = n phi(n x), supported on [0, 1/n].
    double scaled_kernel(double x) const { return n_ * kernel(n_ * x); }

private:
    static double raw(double x) {
        const double s = 2.0 * x - 1.0;
        if (std::abs(s) >= 1.0) return 0.0;
        return std::exp(-1.0 / (1.0 - s * s));
    }
    int n_;
    double norm_;
};

namespace mollify_detail {

/// Nonnegative discrete spatial kernel on the grid, normalized to unit mass;
/// convolution with it is a Fourier multiplier, so it commutes with the
/// spectral derivatives exactly and preserves Jensen's inequality.
inline std::vector<std::complex<double>> spatial_multiplier(const TorusGrid& g,
                                                            const MollifierSpec& spec) {
    const int n = g.points_per_axis();
    ScalarField kernel1d(TorusGrid(1, n, g.period(0)));
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = spec.scaled_kernel(kernel1d.grid().coord(0, i));
        kernel1d[static_cast<std::size_t>(i)] = v;
        sum += v;
    }
    if (sum <= 0.0)
        throw std::invalid_argument(
            "mollify: spatial kernel has no support on the grid (scale too fine)");
    const double scale = 1.0 / sum;  // unit discrete mass
    for (std::size_t i = 0; i < kernel1d.size(); ++i) kernel1d[i] *= scale;
    auto spec1d = spectral::forward(kernel1d);

    if (g.dim() == 1) return spec1d;

    // separable product kernel: multiplier is the product of axis transforms
    const int nyh = n / 2 + 1;
    std::vector<std::complex<double>> mult(static_cast<std::size_t>(n) * nyh);
    // full-line coefficients along axis 0 from the half spectrum (real input)
    auto coef = [&](int j) {
        if (j <= n / 2) return spec1d[static_cast<std::size_t>(j)];
        return std::conj(spec1d[static_cast<std::size_t>(n - j)]);
    };
    for (int jx = 0; jx < n; ++jx)
        for (int jy = 0; jy < nyh; ++jy)
            mult[static_cast<std::size_t>(jx) * nyh + jy] =
                coef(jx) * spec1d[static_cast<std::size_t>(jy)];
    return mult;
}

inline ScalarField apply_multiplier(const ScalarField& f,
                                    const std::vector<std::complex<double>>& mult) {
    auto spec = spectral::forward(f);
    for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= mult[i];
    return spectral::inverse(f.grid(), spec);
}

}  // namespace mollify_detail

/// Spatial part of the mollification alone (periodic convolution with the
/// sampled, renormalized kernel).
inline ScalarField spatial_mollify(const ScalarField& f, const MollifierSpec& spec) {
    return mollify_detail::apply_multiplier(f, mollify_detail::spatial_multiplier(f.grid(), spec));
}

/// Extend a trajectory to negative times with rho(t) = rho(0), m(t) = 0,
/// prepending at the leading snapshot cadence until at least `length` is
/// covered.
inline FluidTrajectory extend_negative_time(const FluidTrajectory& traj, double length) {
    if (traj.size() < 2) throw std::invalid_argument("extend_negative_time: need >= 2 snapshots");
    if (std::abs(traj.times.front()) > 1e-14)
        throw std::invalid_argument("extend_negative_time: trajectory must start at t = 0");
    const double dt = traj.times[1] - traj.times[0];
    const int prepend = static_cast<int>(std::ceil(length / dt - 1e-12));
    FluidTrajectory out;
    const FluidState& init = traj.states.front();
    FluidState frozen(init.rho, VectorField(init.grid(), 0.0));
    for (int k = prepend; k >= 1; --k) {
        SnapshotDiagnostics d;
        d.time = -k * dt;
        d.mass = frozen.mass();
        d.min_rho = frozen.rho.min();
        out.push(-k * dt, frozen, d);
    }
    for (std::size_t i = 0; i < traj.size(); ++i)
        out.push(traj.times[i], traj.states[i], traj.diagnostics[i]);
    out.status = traj.status;
    out.abort_reason = traj.abort_reason;
    return out;
}

/// Space-time mollification of a trajectory pair. The spatial part is the
/// grid convolution above; the temporal part is a trapezoid quadrature of
/// phi^n(t - s) over the snapshots, renormalized to unit discrete mass so a
/// mass-conserving input keeps its mass exactly. Preconditions: snapshots
/// uniform enough to give >= 8 per kernel width, and full backward coverage
/// [t - 1/n, t] for every output time.
inline FluidTrajectory mollify_pair(const FluidTrajectory& traj, const MollifierSpec& spec) {
    if (traj.size() < 3) throw std::invalid_argument("mollify_pair: need >= 3 snapshots");
    const double width = spec.width();
    const double dt = traj.times[1] - traj.times[0];
    if (width / dt < 8.0 - 1e-9)
        throw std::invalid_argument(
            "mollify_pair: need >= 8 snapshots per kernel width 1/n; have " +
            std::to_string(width / dt) + " (refine snapshots or lower n)");

    const TorusGrid& g = traj.states.front().grid();
    auto mult = mollify_detail::spatial_multiplier(g, spec);

    // spatially mollified snapshots, computed once
    std::vector<ScalarField> rho_s;
    std::vector<VectorField> m_s;
    rho_s.reserve(traj.size());
    for (std::size_t i = 0; i < traj.size(); ++i) {
        rho_s.push_back(mollify_detail::apply_multiplier(traj.states[i].rho, mult));
        std::vector<ScalarField> comps;
        for (int a = 0; a < g.dim(); ++a)
            comps.push_back(mollify_detail::apply_multiplier(traj.states[i].m.comp(a), mult));
        m_s.push_back(VectorField::from_components(std::move(comps)));
    }

    FluidTrajectory out;
    for (std::size_t i = 0; i < traj.size(); ++i) {
        const double t = traj.times[i];
        if (t - width < traj.times.front() - 1e-12) continue;  // no backward coverage yet

        // trapezoid weights of phi^n(t - s) over the covered snapshots
        double wsum = 0.0;
        std::vector<std::pair<std::size_t, double>> weights;
        for (std::size_t j = 0; j < traj.size(); ++j) {
            const double s = traj.times[j];
            if (s < t - width - 1e-12 || s > t + 1e-12) continue;
            const double left = j > 0 ? traj.times[j] - traj.times[j - 1] : 0.0;
            const double right = j + 1 < traj.size() ? traj.times[j + 1] - traj.times[j] : 0.0;
            const double w = 0.5 * (left + right) * spec.scaled_kernel(t - s);
            if (w > 0.0) {
                weights.emplace_back(j, w);
                wsum += w;
            }
        }
        if (weights.empty() || wsum <= 0.0)
            throw std::logic_error("mollify_pair: empty kernel window");

        ScalarField rho(g);
        VectorField m(g);
        for (const auto& [j, w] : weights) {
            const double wn = w / wsum;
            for (std::size_t k = 0; k < rho.size(); ++k) rho[k] += wn * rho_s[j][k];
            for (int a = 0; a < g.dim(); ++a)
                for (std::size_t k = 0; k < rho.size(); ++k)
                    m.comp(a)[k] += wn * m_s[j].comp(a)[k];
        }
        SnapshotDiagnostics d;
        d.time = t;
        FluidState st(std::move(rho), std::move(m));
        d.mass = st.mass();
        d.min_rho = st.rho.min();
        out.push(t, std::move(st), d);
    }
    if (out.size() < 3)
        throw std::invalid_argument(
            "mollify_pair: insufficient time coverage; extend the trajectory by at least 1/n = " +
            std::to_string(width) + " before the first output time");
    return out;
}

/// Max over interior output times of || centered-difference d/dt rho^n
/// + div m^n ||_inf; certifies that mollification preserves the continuity
/// equation pointwise.
inline double continuity_residual(const FluidTrajectory& mollified) {
    if (mollified.size() < 3)
        throw std::invalid_argument("continuity_residual: need >= 3 snapshots");
    double worst = 0.0;
    for (std::size_t i = 1; i + 1 < mollified.size(); ++i) {
        const double dt2 = mollified.times[i + 1] - mollified.times[i - 1];
        auto div_m = spectral::divergence(mollified.states[i].m);
        double local = 0.0;
        for (std::size_t k = 0; k < div_m.size(); ++k) {
            const double ddt =
                (mollified.states[i + 1].rho[k] - mollified.states[i - 1].rho[k]) / dt2;
            local = std::max(local, std::abs(ddt + div_m[k]));
        }
        worst = std::max(worst, local);
    }
    return worst;
}

/// Nodewise slack of Jensen's inequality |m^n|^2 / rho^n <= (|m|^2/rho)^n:
/// returns max over nodes and output times of the violation (negative values
/// mean the inequality holds strictly).
inline double jensen_violation(const FluidTrajectory& traj, const MollifierSpec& spec,
                               double vacuum_floor = 1e-8) {
    if (traj.states.front().rho.min() < vacuum_floor)
        throw std::runtime_error(
            "jensen_violation: mollification input must stay above the vacuum floor");
    const TorusGrid& g = traj.states.front().grid();
    auto mult = mollify_detail::spatial_multiplier(g, spec);

    // mollify the pair and, with the same weights, the convex combination
    // field |m|^2 / rho
    FluidTrajectory convex_in;
    for (std::size_t i = 0; i < traj.size(); ++i) {
        ScalarField k2(g);
        for (std::size_t n = 0; n < k2.size(); ++n) {
            double m2 = 0.0;
            for (int a = 0; a < g.dim(); ++a)
                m2 += traj.states[i].m.comp(a)[n] * traj.states[i].m.comp(a)[n];
            k2[n] = m2 / traj.states[i].rho[n];
        }
        // carried through the same mollification path as rho
        convex_in.push(traj.times[i], FluidState(k2 + ScalarField(g, 1.0), VectorField(g, 0.0)),
                       SnapshotDiagnostics{});
    }
    auto pair_out = mollify_pair(traj, spec);
    auto convex_out = mollify_pair(convex_in, spec);

    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pair_out.size(); ++i) {
        const auto& st = pair_out.states[i];
        const auto& cv = convex_out.states[i].rho;
        for (std::size_t n = 0; n < st.rho.size(); ++n) {
            double m2 = 0.0;
            for (int a = 0; a < g.dim(); ++a) m2 += st.m.comp(a)[n] * st.m.comp(a)[n];
            const double lhs = m2 / st.rho[n];
            const double rhs = cv[n] - 1.0;  // undo the positivity shift
            worst = std::max(worst, lhs - rhs);
        }
    }
    return worst;
}

}  // namespace korteweg
