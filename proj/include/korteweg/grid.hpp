#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace korteweg {

/// Uniform periodic grid on the flat torus, d in {1,2}.
/// Nodes along each axis sit at x_i = i * period/points, i = 0..points-1.
class TorusGrid {
public:
    TorusGrid(int dim, int points_per_axis, double period = 1.0)
        : TorusGrid(dim, points_per_axis, std::array<double, 2>{period, period}) {}

    TorusGrid(int dim, int points_per_axis, std::array<double, 2> period)
        : dim_(dim), n_(points_per_axis), period_(period) {
        if (dim != 1 && dim != 2)
            throw std::invalid_argument("TorusGrid: dim must be 1 or 2, got " + std::to_string(dim));
        if (n_ < 16 || (n_ & (n_ - 1)) != 0)
            throw std::invalid_argument("TorusGrid: points_per_axis must be a power of two >= 16, got " +
                                        std::to_string(n_));
        for (int a = 0; a < dim_; ++a)
            if (!(period_[static_cast<std::size_t>(a)] > 0.0))
                throw std::invalid_argument("TorusGrid: period must be positive");
    }

    int dim() const { return dim_; }
    int points_per_axis() const { return n_; }
    std::size_t node_count() const {
        std::size_t n = static_cast<std::size_t>(n_);
        return dim_ == 1 ? n : n * n;
    }
    double period(int axis = 0) const { return period_[static_cast<std::size_t>(axis)]; }
    double spacing(int axis = 0) const { return period(axis) / n_; }
    double cell_volume() const {
        double v = 1.0;
        for (int a = 0; a < dim_; ++a) v *= spacing(a);
        return v;
    }
    double total_volume() const {
        double v = 1.0;
        for (int a = 0; a < dim_; ++a) v *= period(a);
        return v;
    }
    double coord(int axis, int index) const { return spacing(axis) * index; }

    /// Row-major node index; iy ignored in 1d.
    std::size_t node(int ix, int iy = 0) const {
        return dim_ == 1 ? static_cast<std::size_t>(ix)
                         : static_cast<std::size_t>(ix) * static_cast<std::size_t>(n_) +
                               static_cast<std::size_t>(iy);
    }

    friend bool operator==(const TorusGrid& a, const TorusGrid& b) {
        if (a.dim_ != b.dim_ || a.n_ != b.n_) return false;
        for (int ax = 0; ax < a.dim_; ++ax)
            if (a.period(ax) != b.period(ax)) return false;
        return true;
    }
    friend bool operator!=(const TorusGrid& a, const TorusGrid& b) { return !(a == b); }

private:
    int dim_;
    int n_;
    std::array<double, 2> period_;
};

namespace detail {
inline void require_same_grid(const TorusGrid& a, const TorusGrid& b, const char* op) {
    if (a != b)
        throw std::invalid_argument(std::string(op) + ": fields live on different grids");
}
}  // namespace detail

/// One real value per grid node, row-major.
class ScalarField {
public:
    explicit ScalarField(const TorusGrid& grid, double fill = 0.0)
        : grid_(grid), values_(grid.node_count(), fill) {}

    ScalarField(const TorusGrid& grid, std::vector<double> values)
        : grid_(grid), values_(std::move(values)) {
        if (values_.size() != grid_.node_count())
            throw std::invalid_argument("ScalarField: value count does not match grid node count");
    }

    static ScalarField from_function(const TorusGrid& grid,
                                     const std::function<double(double, double)>& f) {
        ScalarField out(grid);
        const int n = grid.points_per_axis();
        if (grid.dim() == 1) {
            for (int i = 0; i < n; ++i) out.values_[grid.node(i)] = f(grid.coord(0, i), 0.0);
        } else {
            for (int ix = 0; ix < n; ++ix)
                for (int iy = 0; iy < n; ++iy)
                    out.values_[grid.node(ix, iy)] = f(grid.coord(0, ix), grid.coord(1, iy));
        }
        return out;
    }

    const TorusGrid& grid() const { return grid_; }
    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }
    double at(int ix, int iy = 0) const { return values_[grid_.node(ix, iy)]; }
    double& at(int ix, int iy = 0) { return values_[grid_.node(ix, iy)]; }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }

    double min() const {
        double m = values_.empty() ? 0.0 : values_[0];
        for (double v : values_) m = std::min(m, v);
        return m;
    }
    double max() const {
        double m = values_.empty() ? 0.0 : values_[0];
        for (double v : values_) m = std::max(m, v);
        return m;
    }
    double max_abs() const {
        double m = 0.0;
        for (double v : values_) m = std::max(m, std::abs(v));
        return m;
    }

private:
    TorusGrid grid_;
    std::vector<double> values_;
};

/// dim real components per node.
class VectorField {
public:
    explicit VectorField(const TorusGrid& grid, double fill = 0.0) : grid_(grid) {
        for (int a = 0; a < grid.dim(); ++a)
            comps_.emplace_back(grid, fill);
    }

    static VectorField from_components(std::vector<ScalarField> comps) {
        if (comps.empty()) throw std::invalid_argument("VectorField: no components");
        VectorField out(comps.front().grid());
        if (static_cast<int>(comps.size()) != out.grid_.dim())
            throw std::invalid_argument("VectorField: component count does not match grid dim");
        for (std::size_t a = 1; a < comps.size(); ++a)
            detail::require_same_grid(comps[a].grid(), out.grid_, "VectorField");
        out.comps_ = std::move(comps);
        return out;
    }

    const TorusGrid& grid() const { return grid_; }
    int dim() const { return grid_.dim(); }
    const ScalarField& comp(int a) const { return comps_[static_cast<std::size_t>(a)]; }
    ScalarField& comp(int a) { return comps_[static_cast<std::size_t>(a)]; }

    /// |v|^2 per node.
    ScalarField squared_magnitude() const {
        ScalarField out(grid_);
        for (std::size_t i = 0; i < out.size(); ++i) {
            double s = 0.0;
            for (int a = 0; a < dim(); ++a) s += comp(a)[i] * comp(a)[i];
            out[i] = s;
        }
        return out;
    }

    double max_abs() const {
        double m = 0.0;
        for (const auto& c : comps_) m = std::max(m, c.max_abs());
        return m;
    }

private:
    TorusGrid grid_;
    std::vector<ScalarField> comps_;
};

/// dim x dim real components per node; row index first.
class TensorField {
public:
    explicit TensorField(const TorusGrid& grid, bool symmetric = false)
        : grid_(grid), symmetric_(symmetric) {
        const int d = grid.dim();
        for (int k = 0; k < d * d; ++k)
            comps_.emplace_back(grid, 0.0);
    }

    const TorusGrid& grid() const { return grid_; }
    int dim() const { return grid_.dim(); }
    bool symmetric() const { return symmetric_; }
    const ScalarField& comp(int i, int j) const {
        return comps_[static_cast<std::size_t>(i * dim() + j)];
    }
    ScalarField& comp(int i, int j) { return comps_[static_cast<std::size_t>(i * dim() + j)]; }

    /// Max |T_ij - T_ji| over nodes; zero in 1d.
    double asymmetry() const {
        double m = 0.0;
        for (int i = 0; i < dim(); ++i)
            for (int j = i + 1; j < dim(); ++j)
                for (std::size_t k = 0; k < comp(i, j).size(); ++k)
                    m = std::max(m, std::abs(comp(i, j)[k] - comp(j, i)[k]));
        return m;
    }

    void check_symmetric(double tol = 1e-12) const {
        if (!symmetric_) return;
        const double a = asymmetry();
        if (a > tol)
            throw std::logic_error("TensorField: flagged symmetric but asymmetry " + std::to_string(a));
    }

    double max_abs() const {
        double m = 0.0;
        for (const auto& c : comps_) m = std::max(m, c.max_abs());
        return m;
    }

private:
    TorusGrid grid_;
    bool symmetric_;
    std::vector<ScalarField> comps_;
};

// Elementwise arithmetic used all over the functional calculus.

inline ScalarField operator+(const ScalarField& a, const ScalarField& b) {
    detail::require_same_grid(a.grid(), b.grid(), "operator+");
    ScalarField out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

inline ScalarField operator-(const ScalarField& a, const ScalarField& b) {
    detail::require_same_grid(a.grid(), b.grid(), "operator-");
    ScalarField out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

inline ScalarField operator*(const ScalarField& a, const ScalarField& b) {
    detail::require_same_grid(a.grid(), b.grid(), "operator*");
    ScalarField out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

inline ScalarField operator*(double s, const ScalarField& a) {
    ScalarField out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
    return out;
}

inline VectorField operator+(const VectorField& a, const VectorField& b) {
    detail::require_same_grid(a.grid(), b.grid(), "operator+");
    VectorField out = a;
    for (int c = 0; c < out.dim(); ++c)
        for (std::size_t i = 0; i < out.comp(c).size(); ++i) out.comp(c)[i] += b.comp(c)[i];
    return out;
}

inline VectorField operator-(const VectorField& a, const VectorField& b) {
    detail::require_same_grid(a.grid(), b.grid(), "operator-");
    VectorField out = a;
    for (int c = 0; c < out.dim(); ++c)
        for (std::size_t i = 0; i < out.comp(c).size(); ++i) out.comp(c)[i] -= b.comp(c)[i];
    return out;
}

inline VectorField operator*(double s, const VectorField& a) {
    VectorField out = a;
    for (int c = 0; c < out.dim(); ++c)
        for (std::size_t i = 0; i < out.comp(c).size(); ++i) out.comp(c)[i] *= s;
    return out;
}

/// Pointwise scale of a vector field by a scalar field.
inline VectorField operator*(const ScalarField& s, const VectorField& a) {
    detail::require_same_grid(s.grid(), a.grid(), "operator*");
    VectorField out = a;
    for (int c = 0; c < out.dim(); ++c)
        for (std::size_t i = 0; i < out.comp(c).size(); ++i) out.comp(c)[i] *= s[i];
    return out;
}

/// Cyclic shift by whole grid nodes (exact periodic translation).
inline ScalarField shift_nodes(const ScalarField& f, int sx, int sy = 0) {
    const TorusGrid& g = f.grid();
    const int n = g.points_per_axis();
    auto wrap = [n](int i) { return ((i % n) + n) % n; };
    ScalarField out(g);
    if (g.dim() == 1) {
        for (int i = 0; i < n; ++i) out.at(wrap(i + sx)) = f.at(i);
    } else {
        for (int ix = 0; ix < n; ++ix)
            for (int iy = 0; iy < n; ++iy) out.at(wrap(ix + sx), wrap(iy + sy)) = f.at(ix, iy);
    }
    return out;
}

}  // namespace korteweg
