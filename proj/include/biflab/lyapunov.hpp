#ifndef BIFLAB_LYAPUNOV_HPP
#define BIFLAB_LYAPUNOV_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "biflab/core.hpp"
#include "biflab/errors.hpp"
#include "biflab/family.hpp"
#include "biflab/measure.hpp"
#include "biflab/numerics.hpp"
#include "biflab/parallel.hpp"

namespace biflab {

/// Monte Carlo estimate of L(lambda) = <mu_lambda, log|Jac|>.
struct LyapunovEstimate {
    cplx lambda;
    double L_value = 0.0;
    double std_error = 0.0;
    int sample_count = 0;
    int depth = 0;
    double clipped_fraction = 0.0;
};

// log|Jac| is clipped below at log(jac_floor); mu integrates the log, so the
// clipped mass must stay statistically negligible or the estimate errors out.
constexpr double kLogJacFloor = -50.0;
constexpr double kClippedFractionLimit = 0.01;

inline LyapunovEstimate estimate_L(const FamilySpec& s, const cplx& lambda, int depth,
                                   int count, std::uint64_t seed,
                                   const SampleOptions& opt = {}) {
    if (count < 2) throw PreconditionViolation("estimate_L: need at least 2 samples");
    MeasureSample sample = sample_equilibrium(s, lambda, depth, count, seed, opt);
    double sum = 0.0, sumsq = 0.0;
    int clipped = 0;
    for (const auto& p : sample.points) {
        double a = std::abs(jacobian(s, lambda, p));
        double lj = a > 0.0 ? std::log(a) : kLogJacFloor;
        if (lj < kLogJacFloor) {
            lj = kLogJacFloor;
            ++clipped;
        }
        sum += lj;
        sumsq += lj * lj;
    }
    double n = static_cast<double>(count);
    LyapunovEstimate est;
    est.lambda = lambda;
    est.L_value = sum / n;
    double var = std::max(0.0, (sumsq - sum * sum / n) / (n - 1.0));
    est.std_error = std::sqrt(var / n);
    est.sample_count = count;
    est.depth = depth;
    est.clipped_fraction = static_cast<double>(clipped) / n;
    if (est.clipped_fraction > kClippedFractionLimit)
        throw ClippedFractionExcessive("estimate_L: clipped fraction " +
                                       std::to_string(est.clipped_fraction) +
                                       " exceeds 1%; sample is hitting the critical set");
    return est;
}

/// L over a parameter grid; cell (i,j) uses the substream (seed, cell index),
/// so any thread count gives the same grid.
struct LyapunovGrid {
    ParameterDomain dom;
    std::vector<LyapunovEstimate> cells; // row-major, ny rows of nx
    std::vector<std::string> cell_errors;
    std::uint64_t seed = 0;
    int depth = 0;
    int count = 0;

    const LyapunovEstimate& at(int i, int j) const { return cells[dom.index(i, j)]; }
};

inline LyapunovGrid sweep_grid(const FamilySpec& s, const ParameterDomain& dom, int depth,
                               int count, std::uint64_t seed, int threads = 1) {
    certify_geometry(s, dom); // precondition: the window must be certified
    LyapunovGrid grid;
    grid.dom = dom;
    grid.seed = seed;
    grid.depth = depth;
    grid.count = count;
    grid.cells.resize(dom.node_count());
    grid.cell_errors.resize(dom.node_count());
    parallel_for(static_cast<std::size_t>(dom.node_count()), threads, [&](std::size_t idx) {
        int i = static_cast<int>(idx) % dom.grid_nx;
        int j = static_cast<int>(idx) / dom.grid_nx;
        cplx lambda = dom.node(i, j);
        try {
            grid.cells[idx] = estimate_L(s, lambda, depth, count, splitmix64_key(seed, idx));
        } catch (const Error& e) {
            grid.cells[idx].lambda = lambda;
            grid.cells[idx].L_value = std::numeric_limits<double>::quiet_NaN();
            grid.cell_errors[idx] = e.what();
        }
    });
    return grid;
}

// ---------------------------------------------------------------------------
// Discrete bifurcation field
// ---------------------------------------------------------------------------

/// (1/2pi) Delta_h L on interior nodes; the normalization makes
/// dd^c log|lambda| carry unit mass at the origin.
struct BifField {
    ParameterDomain dom;
    std::vector<double> laplacian; // interior nodes, row-major (nx-2) x (ny-2)
    double cell_area = 0.0;        // hx*hy

    int nx_int() const { return dom.grid_nx - 2; }
    int ny_int() const { return dom.grid_ny - 2; }

    double lap_at(int i, int j) const { // i in [1,nx-1), j in [1,ny-1)
        return laplacian[(j - 1) * nx_int() + (i - 1)];
    }

    /// (1/2pi) sum over interior cells inside the rectangle of Delta_h L * area.
    double mass_over(const cplx& center, double hw, double hh) const {
        double m = 0.0;
        for (int j = 1; j < dom.grid_ny - 1; ++j)
            for (int i = 1; i < dom.grid_nx - 1; ++i) {
                cplx l = dom.node(i, j);
                if (std::abs(l.real() - center.real()) <= hw &&
                    std::abs(l.imag() - center.imag()) <= hh)
                    m += lap_at(i, j);
            }
        return m * cell_area / (2.0 * kPi);
    }

    double total_mass() const {
        double m = 0.0;
        for (double v : laplacian) m += v;
        return m * cell_area / (2.0 * kPi);
    }
};

/// Field from raw node values (tests feed synthetic grids through this).
inline BifField ddc_field_from_values(const ParameterDomain& dom,
                                      const std::vector<double>& values) {
    if (dom.grid_nx < 3 || dom.grid_ny < 3)
        throw PreconditionViolation("ddc_field: grid must be at least 3x3");
    BifField f;
    f.dom = dom;
    f.cell_area = dom.hx() * dom.hy();
    double ihx2 = 1.0 / (dom.hx() * dom.hx());
    double ihy2 = 1.0 / (dom.hy() * dom.hy());
    f.laplacian.resize(static_cast<std::size_t>(f.nx_int()) * f.ny_int());
    auto v = [&](int i, int j) { return values[dom.index(i, j)]; };
    for (int j = 1; j < dom.grid_ny - 1; ++j)
        for (int i = 1; i < dom.grid_nx - 1; ++i) {
            double lap = (v(i + 1, j) + v(i - 1, j) - 2.0 * v(i, j)) * ihx2 +
                         (v(i, j + 1) + v(i, j - 1) - 2.0 * v(i, j)) * ihy2;
            f.laplacian[(j - 1) * f.nx_int() + (i - 1)] = lap;
        }
    return f;
}

inline BifField ddc_field(const LyapunovGrid& grid) {
    std::vector<double> vals(grid.cells.size());
    for (std::size_t i = 0; i < grid.cells.size(); ++i) vals[i] = grid.cells[i].L_value;
    return ddc_field_from_values(grid.dom, vals);
}

/// Discrete Green identity: the interior Laplacian sum telescopes to a
/// boundary flux. Returns the flux-side mass for comparison with total_mass().
inline double boundary_flux_mass(const ParameterDomain& dom, const std::vector<double>& values) {
    double ihx2 = 1.0 / (dom.hx() * dom.hx());
    double ihy2 = 1.0 / (dom.hy() * dom.hy());
    auto v = [&](int i, int j) { return values[dom.index(i, j)]; };
    double flux = 0.0;
    // vertical faces between the interior block [1, nx-2] and its neighbors
    for (int j = 1; j < dom.grid_ny - 1; ++j) {
        flux += (v(0, j) - v(1, j)) * ihx2;
        flux += (v(dom.grid_nx - 1, j) - v(dom.grid_nx - 2, j)) * ihx2;
    }
    for (int i = 1; i < dom.grid_nx - 1; ++i) {
        flux += (v(i, 0) - v(i, 1)) * ihy2;
        flux += (v(i, dom.grid_ny - 1) - v(i, dom.grid_ny - 2)) * ihy2;
    }
    return flux * dom.hx() * dom.hy() / (2.0 * kPi);
}

} // namespace biflab

#endif
