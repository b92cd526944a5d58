#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "korteweg/dynamics.hpp"
#include "korteweg/grid.hpp"
#include "korteweg/mollify.hpp"
#include "korteweg/spectral.hpp"

using namespace korteweg;
namespace sp = korteweg::spectral;

namespace {

constexpr double kTau = 2.0 * M_PI;

/// Hand-built smooth space-time pair (not a PDE solution; mollification tests
/// only need smoothness).
FluidTrajectory traveling_wave(const TorusGrid& g, double t0, double t1, int snaps) {
    FluidTrajectory traj;
    for (int i = 0; i < snaps; ++i) {
        const double t = t0 + (t1 - t0) * i / static_cast<double>(snaps - 1);
        auto rho = ScalarField::from_function(g, [&](double x, double) {
            return 1.0 + 0.3 * std::sin(kTau * (x - t)) +
                   0.15 * std::sin(kTau * x) * std::cos(2.0 * kTau * t);
        });
        auto m = ScalarField::from_function(
            g, [&](double x, double) { return 0.2 * std::cos(kTau * (x - t)); });
        traj.push(t, FluidState(rho, VectorField::from_components({m})), SnapshotDiagnostics{});
    }
    return traj;
}

FluidTrajectory subsample(const FluidTrajectory& t, std::size_t stride) {
    FluidTrajectory out;
    for (std::size_t i = 0; i < t.size(); i += stride)
        out.push(t.times[i], t.states[i], t.diagnostics[i]);
    return out;
}

FluidTrajectory ek_reference_run(const TorusGrid& g) {
    EkSystem sys{EnergyLaw(1.0, 2.0), CapillarityLaw::constant(0.01), 1.0};
    auto rho0 = ScalarField::from_function(
        g, [](double x, double) { return 1.0 + 0.1 * std::sin(kTau * x); });
    auto u0 = ScalarField::from_function(
        g, [](double x, double) { return 0.1 * std::cos(kTau * x); });
    FluidState init(rho0, VectorField::from_components({rho0 * u0}));
    SolverConfig cfg;
    cfg.t_end = 0.25;
    cfg.dt = 0.25 / 1024.0;
    cfg.snapshot_every = 4;  // snapshot spacing 1/1024
    cfg.blowup_gradient_factor = 0.0;
    auto traj = integrate_fluid(sys, init, cfg);
    REQUIRE(traj.completed());
    return traj;
}

}  // namespace

TEST_CASE("mollifier kernel: nonnegative, supported in [0,1], unit mass") {
    MollifierSpec spec(4);
    for (double x : {-0.5, -0.01, 1.01, 2.0}) CHECK(spec.kernel(x) == 0.0);
    for (double x : {0.1, 0.3, 0.5, 0.9}) CHECK(spec.kernel(x) > 0.0);

    // independent trapezoid quadrature of the unit-mass normalization
    const int n = 200000;
    double sum = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double w = (i == 0 || i == n) ? 0.5 : 1.0;
        sum += w * spec.kernel(i / static_cast<double>(n));
    }
    sum /= n;
    CHECK(std::abs(sum - 1.0) <= 1e-10);

    // phi^n(x) = n phi(n x)
    CHECK(spec.scaled_kernel(0.1) == Catch::Approx(4.0 * spec.kernel(0.4)).epsilon(1e-14));
    CHECK_THROWS_AS(MollifierSpec(0), std::invalid_argument);
}

TEST_CASE("extend_negative_time: frozen density, zero momentum, restriction identity") {
    TorusGrid g(1, 64);
    auto traj = traveling_wave(g, 0.0, 0.1, 11);
    auto ext = extend_negative_time(traj, 0.05);
    REQUIRE(ext.size() > traj.size());
    std::size_t prepended = ext.size() - traj.size();
    CHECK(ext.times.front() <= -0.05 + 1e-12);
    for (std::size_t i = 0; i < prepended; ++i) {
        CHECK(ext.times[i] < 0.0);
        CHECK(ext.states[i].m.max_abs() == 0.0);
        for (std::size_t k = 0; k < ext.states[i].rho.size(); ++k)
            CHECK(ext.states[i].rho[k] == traj.states.front().rho[k]);
    }
    // restriction to t >= 0 recovers the original
    for (std::size_t i = 0; i < traj.size(); ++i) {
        CHECK(ext.times[prepended + i] == traj.times[i]);
        for (std::size_t k = 0; k < traj.states[i].rho.size(); ++k)
            CHECK(ext.states[prepended + i].rho[k] == traj.states[i].rho[k]);
    }
}

TEST_CASE("mollify_pair: constant pair is unchanged") {
    TorusGrid g(1, 64);
    FluidTrajectory traj;
    for (int i = 0; i <= 40; ++i)
        traj.push(i * 0.01, FluidState(ScalarField(g, 1.5), VectorField(g, 0.7)),
                  SnapshotDiagnostics{});
    auto out = mollify_pair(traj, MollifierSpec(4));
    REQUIRE(out.size() >= 3);
    for (const auto& st : out.states) {
        for (std::size_t k = 0; k < st.rho.size(); ++k) {
            CHECK(std::abs(st.rho[k] - 1.5) <= 1e-13);
            CHECK(std::abs(st.m.comp(0)[k] - 0.7) <= 1e-13);
        }
    }
}

TEST_CASE("spatial mollification multiplies a Fourier mode by the kernel transform") {
    TorusGrid g(1, 512);
    MollifierSpec spec(2);
    const int mode = 3;
    auto f = ScalarField::from_function(
        g, [&](double x, double) { return std::cos(kTau * mode * x); });
    auto out = spatial_mollify(f, spec);

    // analytic factor: integral of phi^n(z) exp(-i k z) dz over [0, 1/n]
    const double k = kTau * mode;
    const int nq = 1 << 17;
    std::complex<double> factor = 0.0;
    for (int i = 0; i <= nq; ++i) {
        const double y = i / static_cast<double>(nq);
        const double w = (i == 0 || i == nq) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        factor += w * spec.kernel(y) * std::exp(std::complex<double>(0.0, -k * y / spec.scale()));
    }
    factor /= 3.0 * nq;

    double err = 0.0;
    for (int i = 0; i < g.points_per_axis(); ++i) {
        const double x = g.coord(0, i);
        const double expect =
            std::real(factor * std::exp(std::complex<double>(0.0, k * x)));
        err = std::max(err, std::abs(out[static_cast<std::size_t>(i)] - expect));
    }
    CHECK(err <= 1e-8);
}

TEST_CASE("mollification error decays at the kernel approximation order in n") {
    TorusGrid g(1, 512);
    const double t_star = 0.5;
    std::vector<double> errs;
    for (int n : {4, 8, 16, 32}) {
        // snapshots dense enough for the finest kernel: 1/(8*32) = 1/256
        auto traj = traveling_wave(g, 0.0, 1.0, 513);
        auto out = mollify_pair(traj, MollifierSpec(n));
        // locate t_star among output times
        std::size_t idx = 0;
        for (std::size_t i = 0; i < out.size(); ++i)
            if (std::abs(out.times[i] - t_star) < 1e-12) idx = i;
        auto exact = ScalarField::from_function(g, [&](double x, double) {
            return 1.0 + 0.3 * std::sin(kTau * (x - t_star)) +
                   0.15 * std::sin(kTau * x) * std::cos(2.0 * kTau * t_star);
        });
        auto diff = out.states[idx].rho - exact;
        errs.push_back(std::sqrt(sp::integrate(diff * diff)));
    }
    INFO("errors: " << errs[0] << " " << errs[1] << " " << errs[2] << " " << errs[3]);
    for (std::size_t i = 0; i + 1 < errs.size(); ++i) {
        const double ratio = errs[i] / errs[i + 1];
        CHECK(ratio >= 1.7);  // first-order kernel (one-sided support)
        CHECK(ratio <= 2.4);
    }
}

TEST_CASE("mollify_pair enforces >= 8 snapshots per kernel width") {
    TorusGrid g(1, 64);
    auto traj = traveling_wave(g, 0.0, 1.0, 17);  // spacing 1/16, width 1/4 -> only 4 per width
    CHECK_THROWS_WITH(mollify_pair(traj, MollifierSpec(4)),
                      Catch::Matchers::ContainsSubstring("8 snapshots per kernel width"));
}

TEST_CASE("mollify_pair names the required extension when coverage is missing") {
    TorusGrid g(1, 64);
    auto traj = traveling_wave(g, 0.0, 0.2, 129);  // width 1 at n=1 never covered
    CHECK_THROWS_WITH(mollify_pair(traj, MollifierSpec(1)),
                      Catch::Matchers::ContainsSubstring("extend the trajectory"));
}

TEST_CASE("continuity residual: exact solution pair converges at order 2, controls hold") {
    TorusGrid g(1, 64);
    auto dense = ek_reference_run(g);  // snapshot spacing 1/1024 over [0, 0.25]
    MollifierSpec spec(8);             // width 1/8

    auto resid_at = [&](std::size_t stride) {
        auto sub = subsample(dense, stride);
        auto moll = mollify_pair(sub, spec);
        return continuity_residual(moll);
    };
    const double r4 = resid_at(8);  // spacing 1/128: 16 snapshots per width
    const double r2 = resid_at(4);
    const double r1 = resid_at(2);
    INFO("r(1/128)=" << r4 << " r(1/256)=" << r2 << " r(1/512)=" << r1);
    CHECK(r4 / r2 >= 3.5);
    CHECK(r2 / r1 >= 3.5);

    // negative control: doubling the momentum leaves a residual proportional
    // to || div m ||
    auto sub = subsample(dense, 8);
    FluidTrajectory doubled;
    for (std::size_t i = 0; i < sub.size(); ++i)
        doubled.push(sub.times[i],
                     FluidState(sub.states[i].rho, 2.0 * sub.states[i].m),
                     sub.diagnostics[i]);
    auto moll_true = mollify_pair(sub, spec);
    auto moll_doubled = mollify_pair(doubled, spec);
    double div_scale = 0.0;
    for (const auto& st : moll_true.states)
        div_scale = std::max(div_scale, sp::divergence(st.m).max_abs());
    const double neg = continuity_residual(moll_doubled);
    INFO("negative control residual " << neg << " vs div scale " << div_scale);
    CHECK(neg >= 0.1 * div_scale);

    // constant pair residual is zero
    FluidTrajectory constant;
    for (int i = 0; i <= 32; ++i)
        constant.push(i / 64.0, FluidState(ScalarField(g, 1.0), VectorField(g, 0.3)),
                      SnapshotDiagnostics{});
    CHECK(continuity_residual(mollify_pair(constant, MollifierSpec(8))) <= 1e-12);
}

TEST_CASE("mollification across the t = 0 extension keeps the continuity residual bounded") {
    TorusGrid g(1, 64);
    auto run = ek_reference_run(g);
    auto sub = subsample(run, 8);  // spacing 1/128
    auto ext = extend_negative_time(sub, 0.125 + 1e-9);
    auto moll = mollify_pair(ext, MollifierSpec(8));
    // outputs start right at the head of the extension; the momentum jump at
    // t = 0 costs one quadrature order but not pointwise validity
    double div_scale = 0.0;
    for (const auto& st : moll.states)
        div_scale = std::max(div_scale, sp::divergence(st.m).max_abs());
    CHECK(continuity_residual(moll) <= 0.25 * div_scale);
}

TEST_CASE("Jensen inequality |m^n|^2/rho^n <= (|m|^2/rho)^n holds nodewise") {
    TorusGrid g(1, 64);
    auto run = ek_reference_run(g);
    auto sub = subsample(run, 8);
    CHECK(jensen_violation(sub, MollifierSpec(8)) <= 1e-12);
}

TEST_CASE("mollification preserves mass and commutes with spectral derivatives") {
    TorusGrid g(1, 64);
    auto run = ek_reference_run(g);
    auto sub = subsample(run, 8);
    const double mass0 = sub.states.front().mass();
    auto moll = mollify_pair(sub, MollifierSpec(8));
    for (const auto& st : moll.states)
        CHECK(std::abs(st.mass() - mass0) / mass0 <= 1e-10);

    MollifierSpec spec(8);
    auto f = ScalarField::from_function(g, [](double x, double) {
        return 1.0 + 0.2 * std::sin(kTau * x) + 0.1 * std::cos(2.0 * kTau * x);
    });
    auto a = sp::partial(spatial_mollify(f, spec), 0);
    auto b = spatial_mollify(sp::partial(f, 0), 0 ? MollifierSpec(8) : spec);
    double err = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) err = std::max(err, std::abs(a[i] - b[i]));
    CHECK(err <= 1e-12);
}
