#pragma once

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "korteweg/grid.hpp"

namespace korteweg {
namespace spectral {

namespace detail {

/// RAII buffer with FFTW alignment so cached plans can run on it.
template <typename T>
class FftwBuffer {
public:
    explicit FftwBuffer(std::size_t count)
        : ptr_(static_cast<T*>(fftw_malloc(sizeof(T) * count))), count_(count) {
        if (!ptr_) throw std::bad_alloc();
        std::memset(ptr_, 0, sizeof(T) * count);
    }
    ~FftwBuffer() { fftw_free(ptr_); }
    FftwBuffer(const FftwBuffer&) = delete;
    FftwBuffer& operator=(const FftwBuffer&) = delete;
    T* get() { return ptr_; }
    std::size_t count() const { return count_; }

private:
    T* ptr_;
    std::size_t count_;
};

/// Process-wide plan cache. Plan creation is serialized; execution via the
/// new-array interface is safe from concurrent threads on distinct buffers.
class PlanCache {
public:
    static PlanCache& instance() {
        static PlanCache cache;
        return cache;
    }

    fftw_plan forward(int dim, int n) { return get(dim, n, true); }
    fftw_plan inverse(int dim, int n) { return get(dim, n, false); }

private:
    PlanCache() = default;
    ~PlanCache() {
        for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
    }

    fftw_plan get(int dim, int n, bool fwd) {
        std::lock_guard<std::mutex> lock(mutex_);
        auto key = std::make_tuple(dim, n, fwd);
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;

        const std::size_t real_count = dim == 1 ? static_cast<std::size_t>(n)
                                                : static_cast<std::size_t>(n) * n;
        const std::size_t cplx_count = dim == 1
                                           ? static_cast<std::size_t>(n / 2 + 1)
                                           : static_cast<std::size_t>(n) * (n / 2 + 1);
        FftwBuffer<double> re(real_count);
        FftwBuffer<fftw_complex> cx(cplx_count);
        fftw_plan plan = nullptr;
        if (dim == 1) {
            plan = fwd ? fftw_plan_dft_r2c_1d(n, re.get(), cx.get(), FFTW_ESTIMATE)
                       : fftw_plan_dft_c2r_1d(n, cx.get(), re.get(), FFTW_ESTIMATE);
        } else {
            plan = fwd ? fftw_plan_dft_r2c_2d(n, n, re.get(), cx.get(), FFTW_ESTIMATE)
                       : fftw_plan_dft_c2r_2d(n, n, cx.get(), re.get(), FFTW_ESTIMATE);
        }
        if (!plan) throw std::runtime_error("PlanCache: fftw plan creation failed");
        plans_.emplace(key, plan);
        return plan;
    }

    std::mutex mutex_;
    std::map<std::tuple<int, int, bool>, fftw_plan> plans_;
};

inline std::size_t spectrum_size(const TorusGrid& g) {
    const std::size_t n = static_cast<std::size_t>(g.points_per_axis());
    return g.dim() == 1 ? n / 2 + 1 : n * (n / 2 + 1);
}

}  // namespace detail

/// Forward real-to-complex transform; coefficients are unnormalized FFTW layout.
inline std::vector<std::complex<double>> forward(const ScalarField& f) {
    const TorusGrid& g = f.grid();
    const int n = g.points_per_axis();
    detail::FftwBuffer<double> in(g.node_count());
    detail::FftwBuffer<fftw_complex> out(detail::spectrum_size(g));
    std::memcpy(in.get(), f.values().data(), sizeof(double) * g.node_count());
    fftw_execute_dft_r2c(detail::PlanCache::instance().forward(g.dim(), n), in.get(), out.get());
    std::vector<std::complex<double>> spec(detail::spectrum_size(g));
    // std::complex<double> is layout-compatible with fftw_complex (double[2])
    const double* raw = reinterpret_cast<const double*>(out.get());
    for (std::size_t i = 0; i < spec.size(); ++i) spec[i] = {raw[2 * i], raw[2 * i + 1]};
    return spec;
}

/// Inverse transform with 1/N^dim normalization.
inline ScalarField inverse(const TorusGrid& g, const std::vector<std::complex<double>>& spec) {
    const int n = g.points_per_axis();
    if (spec.size() != detail::spectrum_size(g))
        throw std::invalid_argument("spectral::inverse: spectrum size mismatch");
    detail::FftwBuffer<fftw_complex> in(spec.size());
    detail::FftwBuffer<double> out(g.node_count());
    std::memcpy(in.get(), spec.data(), sizeof(fftw_complex) * spec.size());
    fftw_execute_dft_c2r(detail::PlanCache::instance().inverse(g.dim(), n), in.get(), out.get());
    ScalarField f(g);
    const double norm = 1.0 / static_cast<double>(g.node_count());
    for (std::size_t i = 0; i < g.node_count(); ++i) f[i] = out.get()[i] * norm;
    return f;
}

namespace detail {

inline void check_finite(const ScalarField& f, const char* op) {
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (!std::isfinite(f[i])) {
            const int n = f.grid().points_per_axis();
            const int ix = f.grid().dim() == 1 ? static_cast<int>(i) : static_cast<int>(i) / n;
            const int iy = f.grid().dim() == 1 ? 0 : static_cast<int>(i) % n;
            throw std::domain_error(std::string(op) + ": non-finite value at node (" +
                                    std::to_string(ix) +
                                    (f.grid().dim() == 2 ? "," + std::to_string(iy) : "") + ")");
        }
    }
}

/// Signed integer mode along the first axis for r2c 2d layout.
inline int signed_mode(int j, int n) { return j <= n / 2 ? j : j - n; }

/// Apply a per-mode multiplier. `mult(kx, ky, jx_nyq, jy_nyq)` returns the complex factor.
template <typename Mult>
ScalarField apply_multiplier(const ScalarField& f, Mult mult) {
    const TorusGrid& g = f.grid();
    const int n = g.points_per_axis();
    auto spec = forward(f);
    if (g.dim() == 1) {
        const double k0 = 2.0 * M_PI / g.period(0);
        for (int j = 0; j <= n / 2; ++j)
            spec[static_cast<std::size_t>(j)] *= mult(k0 * j, 0.0, j == n / 2, false);
    } else {
        const double kx0 = 2.0 * M_PI / g.period(0);
        const double ky0 = 2.0 * M_PI / g.period(1);
        const int nyh = n / 2 + 1;
        for (int jx = 0; jx < n; ++jx) {
            const int sx = signed_mode(jx, n);
            for (int jy = 0; jy < nyh; ++jy) {
                spec[static_cast<std::size_t>(jx) * nyh + jy] *=
                    mult(kx0 * sx, ky0 * jy, jx == n / 2, jy == n / 2);
            }
        }
    }
    return inverse(g, spec);
}

}  // namespace detail

/// Spectral partial derivative along one axis. Exact for trigonometric
/// polynomials up to mode N/2 - 1; the Nyquist mode is annihilated.
inline ScalarField partial(const ScalarField& f, int axis) {
    detail::check_finite(f, "partial");
    if (axis < 0 || axis >= f.grid().dim())
        throw std::invalid_argument("partial: axis out of range");
    const std::complex<double> I(0.0, 1.0);
    return detail::apply_multiplier(f, [axis, I](double kx, double ky, bool nx, bool ny) {
        const double k = axis == 0 ? kx : ky;
        const bool nyq = axis == 0 ? nx : ny;
        return nyq ? std::complex<double>(0.0) : I * k;
    });
}

inline VectorField gradient(const ScalarField& f) {
    detail::check_finite(f, "gradient");
    std::vector<ScalarField> comps;
    for (int a = 0; a < f.grid().dim(); ++a) comps.push_back(partial(f, a));
    return VectorField::from_components(std::move(comps));
}

inline ScalarField divergence(const VectorField& v) {
    ScalarField out(v.grid());
    for (int a = 0; a < v.dim(); ++a) {
        detail::check_finite(v.comp(a), "divergence");
        out = out + partial(v.comp(a), a);
    }
    return out;
}

inline ScalarField laplacian(const ScalarField& f) {
    detail::check_finite(f, "laplacian");
    return detail::apply_multiplier(f, [](double kx, double ky, bool, bool) {
        return std::complex<double>(-(kx * kx + ky * ky));
    });
}

/// (div T)_i = sum_j d_j T_ij.
inline VectorField div_tensor(const TensorField& t) {
    std::vector<ScalarField> comps;
    for (int i = 0; i < t.dim(); ++i) {
        ScalarField c(t.grid());
        for (int j = 0; j < t.dim(); ++j) {
            detail::check_finite(t.comp(i, j), "div_tensor");
            c = c + partial(t.comp(i, j), j);
        }
        comps.push_back(std::move(c));
    }
    return VectorField::from_components(std::move(comps));
}

/// Quadrature on the torus: the trapezoid rule collapses to mean * volume,
/// exact for band-limited integrands.
inline double integrate(const ScalarField& f) {
    detail::check_finite(f, "integrate");
    double sum = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) sum += f[i];
    return sum / static_cast<double>(f.size()) * f.grid().total_volume();
}

inline double integrate(const VectorField& v, int axis) { return integrate(v.comp(axis)); }

/// 2/3-rule truncation for nonlinear products (optional, off by default).
inline ScalarField dealias_two_thirds(const ScalarField& f) {
    const int cut = f.grid().points_per_axis() / 3;
    const double k0x = 2.0 * M_PI / f.grid().period(0);
    const double k0y = f.grid().dim() == 2 ? 2.0 * M_PI / f.grid().period(1) : 1.0;
    return detail::apply_multiplier(f, [cut, k0x, k0y](double kx, double ky, bool, bool) {
        const int jx = static_cast<int>(std::lround(std::abs(kx) / k0x));
        const int jy = static_cast<int>(std::lround(std::abs(ky) / k0y));
        return (jx > cut || jy > cut) ? 0.0 : 1.0;
    });
}

/// Spectral restriction onto a coarser grid (same period, fewer points):
/// keep modes below the coarse Nyquist, zero the rest. Exact for fields
/// band-limited to the coarse grid.
inline ScalarField restrict_to(const ScalarField& fine, const TorusGrid& coarse) {
    const TorusGrid& gf = fine.grid();
    if (gf.dim() != coarse.dim())
        throw std::invalid_argument("restrict_to: dimension mismatch");
    for (int a = 0; a < gf.dim(); ++a)
        if (gf.period(a) != coarse.period(a))
            throw std::invalid_argument("restrict_to: period mismatch");
    const int nf = gf.points_per_axis();
    const int nc = coarse.points_per_axis();
    if (nc > nf) throw std::invalid_argument("restrict_to: target grid is finer than source");
    if (nc == nf) return ScalarField(coarse, fine.values());

    auto spec = forward(fine);
    const double scale = static_cast<double>(coarse.node_count()) / static_cast<double>(gf.node_count());
    std::vector<std::complex<double>> cspec(detail::spectrum_size(coarse), 0.0);
    if (gf.dim() == 1) {
        for (int j = 0; j < nc / 2; ++j)
            cspec[static_cast<std::size_t>(j)] = spec[static_cast<std::size_t>(j)] * scale;
    } else {
        const int nyh_f = nf / 2 + 1;
        const int nyh_c = nc / 2 + 1;
        for (int jx = 0; jx < nc; ++jx) {
            const int sx = detail::signed_mode(jx, nc);
            if (std::abs(sx) >= nc / 2) continue;
            const int jxf = sx >= 0 ? sx : nf + sx;
            for (int jy = 0; jy < nc / 2; ++jy)
                cspec[static_cast<std::size_t>(jx) * nyh_c + jy] =
                    spec[static_cast<std::size_t>(jxf) * nyh_f + jy] * scale;
        }
    }
    return inverse(coarse, cspec);
}

inline VectorField restrict_to(const VectorField& fine, const TorusGrid& coarse) {
    std::vector<ScalarField> comps;
    for (int a = 0; a < fine.dim(); ++a) comps.push_back(restrict_to(fine.comp(a), coarse));
    return VectorField::from_components(std::move(comps));
}

/// Outer product a (x) b as a tensor field.
inline TensorField outer(const VectorField& a, const VectorField& b, bool symmetric = false) {
    korteweg::detail::require_same_grid(a.grid(), b.grid(), "outer");
    TensorField t(a.grid(), symmetric);
    for (int i = 0; i < a.dim(); ++i)
        for (int j = 0; j < a.dim(); ++j)
            t.comp(i, j) = a.comp(i) * b.comp(j);
    return t;
}

/// Jacobian of a vector field: J_ij = d_j v_i.
inline TensorField jacobian(const VectorField& v) {
    TensorField t(v.grid());
    for (int i = 0; i < v.dim(); ++i)
        for (int j = 0; j < v.dim(); ++j)
            t.comp(i, j) = partial(v.comp(i), j);
    return t;
}

/// Frobenius contraction A : B per node.
inline ScalarField contract(const TensorField& a, const TensorField& b) {
    korteweg::detail::require_same_grid(a.grid(), b.grid(), "contract");
    ScalarField out(a.grid());
    for (int i = 0; i < a.dim(); ++i)
        for (int j = 0; j < a.dim(); ++j)
            out = out + a.comp(i, j) * b.comp(i, j);
    return out;
}

/// Dot product per node.
inline ScalarField dot(const VectorField& a, const VectorField& b) {
    korteweg::detail::require_same_grid(a.grid(), b.grid(), "dot");
    ScalarField out(a.grid());
    for (int c = 0; c < a.dim(); ++c) out = out + a.comp(c) * b.comp(c);
    return out;
}

}  // namespace spectral
}  // namespace korteweg
