#ifndef BIFLAB_CORE_HPP
#define BIFLAB_CORE_HPP

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

namespace biflab {

using cplx = std::complex<double>;

/// A point in C^k, k in {1,2}. For univariate families only `z` is used.
struct Point {
    cplx z{0.0, 0.0};
    cplx w{0.0, 0.0};
};

inline double sup_norm(const Point& p, int dim) {
    return dim == 1 ? std::abs(p.z) : std::max(std::abs(p.z), std::abs(p.w));
}

inline bool is_finite(const cplx& c) {
    return std::isfinite(c.real()) && std::isfinite(c.imag());
}

inline bool is_finite(const Point& p, int dim) {
    return dim == 1 ? is_finite(p.z) : (is_finite(p.z) && is_finite(p.w));
}

inline double dist(const Point& a, const Point& b, int dim) {
    double dz = std::abs(a.z - b.z);
    if (dim == 1) return dz;
    return std::max(dz, std::abs(a.w - b.w));
}

/// Rectangular parameter window with its sampling grid (nodes at cell centers).
struct ParameterDomain {
    cplx center{0.0, 0.0};
    double half_width = 1.0;
    double half_height = 1.0;
    int grid_nx = 1;
    int grid_ny = 1;

    double hx() const { return 2.0 * half_width / grid_nx; }
    double hy() const { return 2.0 * half_height / grid_ny; }
    double x0() const { return center.real() - half_width + 0.5 * hx(); }
    double y0() const { return center.imag() - half_height + 0.5 * hy(); }

    cplx node(int i, int j) const {
        return {x0() + i * hx(), y0() + j * hy()};
    }
    int node_count() const { return grid_nx * grid_ny; }
    int index(int i, int j) const { return j * grid_nx + i; }

    bool contains(const cplx& lambda) const {
        return std::abs(lambda.real() - center.real()) <= half_width &&
               std::abs(lambda.imag() - center.imag()) <= half_height;
    }

    /// Largest |lambda| over the closed rectangle (attained at a corner).
    double corner_radius() const {
        double xr = std::max(std::abs(center.real() - half_width),
                             std::abs(center.real() + half_width));
        double yr = std::max(std::abs(center.imag() - half_height),
                             std::abs(center.imag() + half_height));
        return std::hypot(xr, yr);
    }
};

/// Certificate that f_lambda^{-1}(polydisk R) sits inside the smaller polydisk r.
struct FamilyGeometry {
    cplx lambda{0.0, 0.0};
    double V_radius = 0.0;       // R
    double U_escape_bound = 0.0; // r < R
};

} // namespace biflab

#endif
