#ifndef BIFLAB_MISIUREWICZ_HPP
#define BIFLAB_MISIUREWICZ_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <vector>

#include "biflab/core.hpp"
#include "biflab/critical.hpp"
#include "biflab/errors.hpp"
#include "biflab/family.hpp"
#include "biflab/lyapunov.hpp"
#include "biflab/measure.hpp"
#include "biflab/polyroots.hpp"

namespace biflab {

// ---------------------------------------------------------------------------
// Cycle continuation
// ---------------------------------------------------------------------------

/// A periodic point continued over a parameter grid, with validity mask.
struct CycleTrack {
    ParameterDomain dom;
    int period = 0;
    cplx base_lambda;
    Point base_point;
    std::vector<Point> z;            // per grid node
    std::vector<char> valid;
    std::vector<double> min_mult_mod; // min eigenvalue modulus of D(f^n)

    const Point& at(int i, int j) const { return z[dom.index(i, j)]; }
    bool valid_at(int i, int j) const { return valid[dom.index(i, j)] != 0; }
};

struct ContinuationOptions {
    int newton_iters = 60;
    double residual_tol = 1e-12;  // Newton target; validity requires < 1e-10
    double max_step = 1.0;        // basin guard: corrector may not move farther
    enum class Order { BreadthFirst, RowMajor } order = Order::BreadthFirst;
};

namespace detail {

/// One Newton solve of f_lambda^n(x) = x from a predictor. Returns residual.
inline double newton_periodic(const FamilySpec& s, const cplx& lambda, int n, Point& x,
                              int iters, double tol) {
    double res = std::numeric_limits<double>::infinity();
    for (int it = 0; it < iters; ++it) {
        Point cur = x;
        cplx jzz{1.0, 0.0}, jww{1.0, 0.0}, jwz{0.0, 0.0};
        for (int k = 0; k < n; ++k) {
            cplx az = dp_dz(s, lambda, cur.z);
            if (s.kind == FamilyKind::SkewProduct) {
                cplx aw = dq_dw(s, lambda, cur.z, cur.w);
                cplx cz = dq_dz(s, lambda, cur.z, cur.w);
                jwz = cz * jzz + aw * jwz;
                jww = aw * jww;
            }
            jzz = az * jzz;
            cur = evaluate(s, lambda, cur).value;
            if (!is_finite(cur, s.dim())) return res;
        }
        cplx hz = cur.z - x.z;
        cplx hw = cur.w - x.w;
        res = s.dim() == 1 ? std::abs(hz) : std::max(std::abs(hz), std::abs(hw));
        if (res < tol) return res;
        if (s.dim() == 1) {
            cplx denom = jzz - 1.0;
            if (std::abs(denom) < 1e-300) return res;
            x.z -= hz / denom;
        } else {
            cplx a = jzz - 1.0, c = jwz, d = jww - 1.0;
            if (std::abs(a) < 1e-300 || std::abs(d) < 1e-300) return res;
            cplx dxz = hz / a;
            x.z -= dxz;
            x.w -= (hw - c * dxz) / d;
        }
        if (!is_finite(x, s.dim())) return std::numeric_limits<double>::infinity();
    }
    return res;
}

} // namespace detail

/// Multiplier eigenvalues of D(f^n) along the orbit of x.
inline std::array<cplx, 2> cycle_multiplier(const FamilySpec& s, const cplx& lambda,
                                            const Point& x, int n) {
    return detail::orbit_multiplier(s, lambda, x, n);
}

/// (min eigenvalue modulus of D(f^n), repelling?)
inline std::pair<double, bool> cycle_multiplier_check(const FamilySpec& s, const cplx& lambda,
                                                      const Point& x, int n) {
    auto m = cycle_multiplier(s, lambda, x, n);
    double lo = std::abs(m[0]);
    if (s.dim() == 2) lo = std::min(lo, std::abs(m[1]));
    return {lo, lo > 1.0 + kRepellingTol};
}

/// Predictor-corrector continuation of a repelling periodic point across the
/// grid. Cells where Newton leaves the predictor's basin or the cycle loses
/// repelling status are masked invalid and not expanded from.
inline CycleTrack continue_cycle(const FamilySpec& s, const ParameterDomain& dom,
                                 const Point& base, int period, const cplx& base_lambda,
                                 const ContinuationOptions& opt = {}) {
    {
        auto mult = cycle_multiplier_check(s, base_lambda, base, period);
        if (!mult.second)
            throw BaseNotRepelling("continue_cycle: base point is not repelling (min |mult| = " +
                                   std::to_string(mult.first) + ")");
    }
    CycleTrack track;
    track.dom = dom;
    track.period = period;
    track.base_lambda = base_lambda;
    track.base_point = base;
    track.z.resize(dom.node_count());
    track.valid.assign(dom.node_count(), 0);
    track.min_mult_mod.assign(dom.node_count(), 0.0);

    auto try_cell = [&](int idx, const Point& predictor) -> bool {
        int i = idx % dom.grid_nx, j = idx / dom.grid_nx;
        cplx lambda = dom.node(i, j);
        Point x = predictor;
        double res = detail::newton_periodic(s, lambda, period, x, opt.newton_iters,
                                             opt.residual_tol);
        if (!(res < 1e-10)) return false;
        if (dist(x, predictor, s.dim()) > opt.max_step) return false; // left the basin
        auto mm = cycle_multiplier_check(s, lambda, x, period);
        track.z[idx] = x;
        track.min_mult_mod[idx] = mm.first;
        if (!mm.second) return false; // stored but masked: lost repelling status
        track.valid[idx] = 1;
        return true;
    };

    // start at the node nearest the base parameter
    int bi = std::clamp(static_cast<int>(std::lround((base_lambda.real() - dom.x0()) / dom.hx())),
                        0, dom.grid_nx - 1);
    int bj = std::clamp(static_cast<int>(std::lround((base_lambda.imag() - dom.y0()) / dom.hy())),
                        0, dom.grid_ny - 1);

    if (opt.order == ContinuationOptions::Order::BreadthFirst) {
        std::deque<int> frontier;
        std::vector<char> visited(dom.node_count(), 0);
        int start = dom.index(bi, bj);
        visited[start] = 1;
        if (try_cell(start, base)) frontier.push_back(start);
        while (!frontier.empty()) {
            int idx = frontier.front();
            frontier.pop_front();
            int i = idx % dom.grid_nx, j = idx / dom.grid_nx;
            const int di[4] = {1, -1, 0, 0};
            const int dj[4] = {0, 0, 1, -1};
            for (int d = 0; d < 4; ++d) {
                int ni = i + di[d], nj = j + dj[d];
                if (ni < 0 || ni >= dom.grid_nx || nj < 0 || nj >= dom.grid_ny) continue;
                int nidx = dom.index(ni, nj);
                if (visited[nidx]) continue;
                visited[nidx] = 1;
                if (try_cell(nidx, track.z[idx])) frontier.push_back(nidx);
            }
        }
    } else {
        // row-major sweep outward from the base row, predictor = nearest
        // previously valid neighbor (used by the path-independence check)
        if (!try_cell(dom.index(bi, bj), base)) return track;
        auto sweep_row = [&](int j, int from_j) {
            for (int i = bi; i >= 0; --i) {
                int idx = dom.index(i, j);
                const Point* pred = nullptr;
                if (j != from_j && track.valid[dom.index(i, from_j)])
                    pred = &track.z[dom.index(i, from_j)];
                if (i < bi && track.valid[dom.index(i + 1, j)]) pred = &track.z[dom.index(i + 1, j)];
                if (!pred) continue;
                if (!(i == bi && j == from_j)) try_cell(idx, *pred);
            }
            for (int i = bi + 1; i < dom.grid_nx; ++i) {
                int idx = dom.index(i, j);
                const Point* pred = nullptr;
                if (j != from_j && track.valid[dom.index(i, from_j)])
                    pred = &track.z[dom.index(i, from_j)];
                if (track.valid[dom.index(i - 1, j)]) pred = &track.z[dom.index(i - 1, j)];
                if (!pred) continue;
                try_cell(idx, *pred);
            }
        };
        sweep_row(bj, bj);
        for (int j = bj - 1; j >= 0; --j) sweep_row(j, j + 1);
        for (int j = bj + 1; j < dom.grid_ny; ++j) sweep_row(j, j - 1);
    }
    return track;
}

// ---------------------------------------------------------------------------
// Misiurewicz scan
// ---------------------------------------------------------------------------

/// A transversal collision of a postcritical orbit with a continued repelling
/// cycle: f_{lambda*}^{n0}(c(lambda*)) = sigma(lambda*).
struct MisiurewiczHit {
    cplx lambda_star;
    int n0 = 0;
    int component_id = 0;
    int cycle_id = 0;
    double residual = 0.0;
    double transversality = 0.0;   // |d/dlambda residual| at lambda*
    double min_mult_mod = 0.0;     // cycle multiplier floor at lambda*
    double julia_proximity = 0.0;  // distance from sigma(lambda*) to the sampled Julia set
};

struct ScanOptions {
    int newton_iters = 100;
    double polish_tol = 1e-12;
    double accept_residual = 1e-8;
    double transversality_floor = 1e-6;
    double persistence_tol = 1e-10; // reject r identically ~0 on the window
    double dedupe_radius = 1e-6;
    int julia_probe_count = 2000;
    int julia_probe_depth = 30;
    double julia_proximity_radius = 0.05;
    std::uint64_t seed = 7;
    int threads = 1;
};

namespace detail {

/// Continued critical point values over the grid (k=1), nearest-root matched
/// from cell to cell starting at the domain center.
struct CriticalTrackSet {
    std::vector<std::vector<cplx>> values; // [component][node]
    std::vector<int> multiplicity;
};

inline CriticalTrackSet continue_critical_points(const FamilySpec& s, const ParameterDomain& dom) {
    CriticalTrackSet set;
    auto comps = critical_components(s, dom.center);
    int nc = static_cast<int>(comps.size());
    set.values.assign(nc, std::vector<cplx>(dom.node_count()));
    for (const auto& c : comps) set.multiplicity.push_back(c.multiplicity);

    std::vector<char> visited(dom.node_count(), 0);
    std::deque<int> frontier;
    int bi = dom.grid_nx / 2, bj = dom.grid_ny / 2;
    int start = dom.index(bi, bj);
    auto solve_at = [&](int idx, const std::vector<cplx>& guide) {
        int i = idx % dom.grid_nx, j = idx / dom.grid_nx;
        cplx lambda = dom.node(i, j);
        std::vector<cplx> dp(s.deg_p());
        for (int a = 1; a <= s.deg_p(); ++a)
            dp[a - 1] = static_cast<double>(a) * eval_poly(s.p_coeffs[a], lambda);
        RootSet rs = solve(dp);
        std::vector<cplx> pool;
        for (const auto& r : rs.roots)
            for (int c = 0; c < r.multiplicity; ++c) pool.push_back(r.value);
        std::vector<char> used(pool.size(), 0);
        for (int c = 0; c < nc; ++c) {
            double best = std::numeric_limits<double>::infinity();
            std::size_t bix = 0;
            for (std::size_t pi = 0; pi < pool.size(); ++pi) {
                if (used[pi]) continue;
                double dd = std::abs(pool[pi] - guide[c]);
                if (dd < best) {
                    best = dd;
                    bix = pi;
                }
            }
            if (!pool.empty()) {
                used[bix] = 1;
                set.values[c][idx] = pool[bix];
            }
        }
    };
    std::vector<cplx> guide(nc);
    for (int c = 0; c < nc; ++c) guide[c] = comps[c].location;
    visited[start] = 1;
    solve_at(start, guide);
    frontier.push_back(start);
    while (!frontier.empty()) {
        int idx = frontier.front();
        frontier.pop_front();
        int i = idx % dom.grid_nx, j = idx / dom.grid_nx;
        const int di[4] = {1, -1, 0, 0};
        const int dj[4] = {0, 0, 1, -1};
        std::vector<cplx> g(nc);
        for (int c = 0; c < nc; ++c) g[c] = set.values[c][idx];
        for (int d = 0; d < 4; ++d) {
            int ni = i + di[d], nj = j + dj[d];
            if (ni < 0 || ni >= dom.grid_nx || nj < 0 || nj >= dom.grid_ny) continue;
            int nidx = dom.index(ni, nj);
            if (visited[nidx]) continue;
            visited[nidx] = 1;
            solve_at(nidx, g);
            frontier.push_back(nidx);
        }
    }
    return set;
}

/// Nearest critical-point value to a guide at an off-grid lambda.
inline cplx critical_point_near(const FamilySpec& s, const cplx& lambda, const cplx& guide) {
    std::vector<cplx> dp(s.deg_p());
    for (int a = 1; a <= s.deg_p(); ++a)
        dp[a - 1] = static_cast<double>(a) * eval_poly(s.p_coeffs[a], lambda);
    RootSet rs = solve(dp);
    cplx best = rs.roots.front().value;
    for (const auto& r : rs.roots)
        if (std::abs(r.value - guide) < std::abs(best - guide)) best = r.value;
    return best;
}

/// Cycle point at an off-grid lambda, refined from a nearby track value.
inline bool cycle_point_near(const FamilySpec& s, const cplx& lambda, int period,
                             const Point& guide, Point& out) {
    Point x = guide;
    double res = newton_periodic(s, lambda, period, x, 60, 1e-13);
    if (!(res < 1e-10)) return false;
    out = x;
    return true;
}

} // namespace detail

/// Scans the grid for collisions of postcritical orbits with continued cycles.
/// Cells whose corner residuals change sign in both real and imaginary part
/// seed a damped Newton polish on lambda; hits must pass the residual,
/// transversality, persistence and Julia-proximity gates, re-evaluated from
/// scratch at lambda*.
inline std::vector<MisiurewiczHit> misiurewicz_scan(const FamilySpec& s, const ParameterDomain& dom,
                                                    const std::vector<CycleTrack>& tracks,
                                                    int n0_max, const ScanOptions& opt = {}) {
    std::vector<MisiurewiczHit> hits;
    if (s.kind != FamilyKind::Univariate) return hits; // k=2 path not scanned on grids

    detail::CriticalTrackSet crit = detail::continue_critical_points(s, dom);
    int nc = static_cast<int>(crit.values.size());

    struct Candidate {
        int comp, cyc, n0;
        cplx lambda0;
        cplx crit_guide;
        Point cycle_guide;
    };
    std::vector<Candidate> cands;

    for (int cyc = 0; cyc < static_cast<int>(tracks.size()); ++cyc) {
        const CycleTrack& track = tracks[cyc];
        for (int comp = 0; comp < nc; ++comp) {
            for (int n0 = 1; n0 <= n0_max; ++n0) {
                // residual on grid nodes
                std::vector<cplx> r(dom.node_count());
                std::vector<char> ok(dom.node_count(), 0);
                for (int idx = 0; idx < dom.node_count(); ++idx) {
                    if (!track.valid[idx]) continue;
                    int i = idx % dom.grid_nx, j = idx / dom.grid_nx;
                    cplx lambda = dom.node(i, j);
                    Point x{crit.values[comp][idx], {}};
                    bool esc = false;
                    for (int k = 0; k < n0; ++k) {
                        EvalResult ev = evaluate(s, lambda, x);
                        x = ev.value;
                        if (ev.escaped) {
                            esc = true;
                            break;
                        }
                    }
                    if (esc) continue;
                    r[idx] = x.z - track.z[idx].z;
                    ok[idx] = 1;
                }
                for (int j = 0; j + 1 < dom.grid_ny; ++j)
                    for (int i = 0; i + 1 < dom.grid_nx; ++i) {
                        int c00 = dom.index(i, j), c10 = dom.index(i + 1, j);
                        int c01 = dom.index(i, j + 1), c11 = dom.index(i + 1, j + 1);
                        if (!(ok[c00] && ok[c10] && ok[c01] && ok[c11])) continue;
                        auto sgn = [](double v) { return v >= 0.0 ? 1 : -1; };
                        int re0 = sgn(r[c00].real());
                        int im0 = sgn(r[c00].imag());
                        bool re_change = sgn(r[c10].real()) != re0 || sgn(r[c01].real()) != re0 ||
                                         sgn(r[c11].real()) != re0;
                        bool im_change = sgn(r[c10].imag()) != im0 || sgn(r[c01].imag()) != im0 ||
                                         sgn(r[c11].imag()) != im0;
                        if (!(re_change && im_change)) continue;
                        cplx lam = 0.25 * (dom.node(i, j) + dom.node(i + 1, j) +
                                           dom.node(i, j + 1) + dom.node(i + 1, j + 1));
                        cands.push_back({comp, cyc, n0, lam, crit.values[comp][c00],
                                         track.z[c00]});
                    }
            }
        }
    }

    double cell_diag = std::hypot(dom.hx(), dom.hy());
    std::vector<MisiurewiczHit> found(cands.size());
    std::vector<char> good(cands.size(), 0);
    parallel_for(cands.size(), opt.threads, [&](std::size_t ci) {
        const Candidate& cand = cands[ci];
        const CycleTrack& track = tracks[cand.cyc];
        cplx lambda = cand.lambda0;
        Point cycle_guide = cand.cycle_guide;
        cplx crit_guide = cand.crit_guide;

        auto residual_at = [&](const cplx& l, bool& valid) -> cplx {
            valid = false;
            cplx c = detail::critical_point_near(s, l, crit_guide);
            Point x{c, {}};
            for (int k = 0; k < cand.n0; ++k) {
                EvalResult ev = evaluate(s, l, x);
                x = ev.value;
                if (ev.escaped) return {};
            }
            Point sigma;
            if (!detail::cycle_point_near(s, l, track.period, cycle_guide, sigma)) return {};
            valid = true;
            return x.z - sigma.z;
        };

        bool valid = false;
        cplx r = residual_at(lambda, valid);
        if (!valid) return;
        for (int it = 0; it < opt.newton_iters; ++it) {
            if (std::abs(r) < opt.polish_tol) break;
            double h = 1e-7 * (1.0 + std::abs(lambda));
            bool v1 = false, v2 = false;
            cplx rp = residual_at(lambda + h, v1);
            cplx rm = residual_at(lambda - h, v2);
            if (!v1 || !v2) return;
            cplx dr = (rp - rm) / (2.0 * h);
            if (std::abs(dr) < 1e-300) return;
            cplx step = r / dr;
            if (std::abs(step) > cell_diag) step *= cell_diag / std::abs(step); // damped
            lambda -= step;
            r = residual_at(lambda, valid);
            if (!valid) return;
        }
        if (!(std::abs(r) < opt.accept_residual)) return;

        // full re-evaluation from scratch at lambda*
        cplx c_star = detail::critical_point_near(s, lambda, crit_guide);
        Point orbit{c_star, {}};
        for (int k = 0; k < cand.n0; ++k) orbit = evaluate(s, lambda, orbit).value;
        Point sigma;
        if (!detail::cycle_point_near(s, lambda, track.period, cycle_guide, sigma)) return;
        double residual = std::abs(orbit.z - sigma.z);
        if (!(residual < opt.accept_residual)) return;
        auto mm = cycle_multiplier_check(s, lambda, sigma, track.period);
        if (!mm.second) return; // cycle must be repelling at the hit

        double h = 1e-6 * (1.0 + std::abs(lambda));
        bool v1 = false, v2 = false;
        cplx rp = residual_at(lambda + h, v1);
        cplx rm = residual_at(lambda - h, v2);
        if (!v1 || !v2) return;
        double transversality = std::abs((rp - rm) / (2.0 * h));
        if (!(transversality > opt.transversality_floor)) return;

        // persistence probe: r must not vanish identically on the window
        int zero_probes = 0, probes = 0;
        for (int pj = -1; pj <= 1; ++pj)
            for (int pi = -1; pi <= 1; ++pi) {
                cplx l = lambda + cplx{pi * std::max(dom.hx(), 10 * h),
                                       pj * std::max(dom.hy(), 10 * h)};
                bool v = false;
                cplx rr = residual_at(l, v);
                if (!v) continue;
                ++probes;
                if (std::abs(rr) < opt.persistence_tol) ++zero_probes;
            }
        if (probes > 0 && zero_probes == probes) return; // persistent intersection

        // condition: sigma(lambda*) should sit on the sampled Julia set
        MeasureSample probe = sample_equilibrium(s, lambda, opt.julia_probe_depth,
                                                 opt.julia_probe_count,
                                                 splitmix64_key(opt.seed, ci));
        double dmin = std::numeric_limits<double>::infinity();
        for (const auto& p : probe.points) dmin = std::min(dmin, dist(p, sigma, s.dim()));
        if (!(dmin < opt.julia_proximity_radius)) return;

        found[ci] = {lambda, cand.n0, cand.comp, cand.cyc, residual, transversality,
                     mm.first, dmin};
        good[ci] = 1;
    });

    for (std::size_t ci = 0; ci < cands.size(); ++ci) {
        if (!good[ci]) continue;
        bool dup = false;
        for (auto& h : hits)
            if (std::abs(h.lambda_star - found[ci].lambda_star) < opt.dedupe_radius) {
                dup = true;
                if (found[ci].n0 < h.n0) h = found[ci]; // keep the earliest collision
                break;
            }
        if (!dup) hits.push_back(found[ci]);
    }
    std::sort(hits.begin(), hits.end(), [](const MisiurewiczHit& a, const MisiurewiczHit& b) {
        if (a.lambda_star.real() != b.lambda_star.real())
            return a.lambda_star.real() < b.lambda_star.real();
        return a.lambda_star.imag() < b.lambda_star.imag();
    });
    return hits;
}

// ---------------------------------------------------------------------------
// Hit verification against the bifurcation field
// ---------------------------------------------------------------------------

struct HitVerification {
    double neighborhood_mass = 0.0; // dd^c L mass of the 5x5-cell box at lambda*
    GrowthRate local_rate;
    bool rate_available = false;
};

inline HitVerification verify_hit(const FamilySpec& s, const MisiurewiczHit& hit,
                                  const BifField& bif, const FamilyGeometry& geom,
                                  int n_min = 5, int n_max = 14, const MassOptions& mass_opt = {}) {
    if (!bif.dom.contains(hit.lambda_star))
        throw PreconditionViolation("verify_hit: hit lies outside the field domain");
    HitVerification v;
    double hw = 2.5 * bif.dom.hx();
    double hh = 2.5 * bif.dom.hy();
    v.neighborhood_mass = bif.mass_over(hit.lambda_star, hw, hh);
    ParameterDomain window;
    window.center = hit.lambda_star;
    window.half_width = hw;
    window.half_height = hh;
    window.grid_nx = window.grid_ny = 1;
    try {
        VolumeSeries vs = volume_series(s, window, n_min, n_max, mass_opt, geom);
        v.local_rate = growth_rate(vs);
        v.rate_available = true;
    } catch (const Error&) {
        v.rate_available = false;
    }
    return v;
}

} // namespace biflab

#endif
