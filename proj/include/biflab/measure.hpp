#ifndef BIFLAB_MEASURE_HPP
#define BIFLAB_MEASURE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "biflab/core.hpp"
#include "biflab/errors.hpp"
#include "biflab/family.hpp"
#include "biflab/parallel.hpp"
#include "biflab/polyroots.hpp"
#include "biflab/rng.hpp"

namespace biflab {

/// Weighted point cloud approximating the equilibrium measure at one
/// parameter. Weights are uniform 1/points.size().
struct MeasureSample {
    cplx lambda;
    std::vector<Point> points;
    int depth = 0;
    std::uint64_t seed = 0;
    int discarded_transient = 0;
    int dim = 1;
};

struct SampleOptions {
    int transient = -1;           // default depth/3
    int collapse_limit = 5;       // consecutive full-multiplicity collapses
    int retry_limit = 10;
    int threads = 1;
};

namespace detail {

/// Allocation-free backward step for quadratic fibers: replicates the exact
/// branch ordering (roots sorted by (re, im)) and multiplicity weighting of
/// preimage_points, so results are bit-identical to the general path.
struct QuadPullback {
    bool usable = false;
    // p(lambda, z) = pa z^2 + pb z + pc at the fixed parameter
    cplx pa, pb, pc;
    // skew only: w-coefficient rows of q at the fixed parameter, indexed
    // [w-degree][z-degree]
    bool skew = false;
    std::array<std::array<cplx, 8>, 3> q{};
    std::array<int, 3> q_len{};

    static QuadPullback prepare(const FamilySpec& s, const cplx& lambda) {
        QuadPullback f;
        if (s.deg_p() != 2) return f;
        f.pa = eval_poly(s.p_coeffs[2], lambda);
        f.pb = s.p_coeffs.size() > 1 && !s.p_coeffs[1].empty() ? eval_poly(s.p_coeffs[1], lambda)
                                                               : cplx{0.0, 0.0};
        f.pc = s.p_coeffs[0].empty() ? cplx{0.0, 0.0} : eval_poly(s.p_coeffs[0], lambda);
        if (std::abs(f.pa) <= 1e-12) return f;
        if (s.kind == FamilyKind::SkewProduct) {
            if (s.deg_q() != 2) return f;
            f.skew = true;
            for (int j = 0; j <= 2; ++j) {
                const auto& row = s.q_coeffs[j];
                if (row.size() > 8) return f;
                f.q_len[j] = static_cast<int>(row.size());
                for (std::size_t a = 0; a < row.size(); ++a)
                    f.q[j][a] = row[a].empty() ? cplx{0.0, 0.0} : eval_poly(row[a], lambda);
            }
        }
        f.usable = true;
        return f;
    }

    cplx qcoeff(int j, const cplx& z) const {
        cplx acc{0.0, 0.0};
        for (int a = q_len[j]; a-- > 0;) acc = acc * z + q[j][a];
        return acc;
    }

    static void order(cplx& r0, cplx& r1) {
        if (r1.real() < r0.real() || (r1.real() == r0.real() && r1.imag() < r0.imag()))
            std::swap(r0, r1);
    }

    /// One pullback choosing branch u ~ U[0,1). Returns -1 when the caller
    /// must fall back to the general path (x untouched), 0 on a normal step,
    /// 1 when the fiber collapsed onto a single full-multiplicity preimage.
    int step(Point& x, double u, double cluster_eps) const {
        cplx r0, r1;
        int kz = quad_roots(pa, pb, pc - x.z, cluster_eps, r0, r1);
        if (kz == 2) order(r0, r1);
        if (!skew) {
            x.z = (kz == 1) ? r0 : (u < 0.5 ? r0 : r1);
            return kz == 1 ? 1 : 0;
        }
        // enumerate (z_i, w_ij) in the same order as preimage_points
        double u4 = u * 4.0;
        bool z_first = kz == 1 || u4 < 2.0;
        cplx z_pick = z_first ? r0 : r1;
        if (kz == 2 && !z_first) u4 -= 2.0;
        cplx qa = qcoeff(2, z_pick);
        cplx qb = qcoeff(1, z_pick);
        cplx qc = qcoeff(0, z_pick) - x.w;
        if (std::abs(qa) <= 1e-12) return -1;
        cplx w0, w1;
        int kw = quad_roots(qa, qb, qc, cluster_eps, w0, w1);
        if (kw == 2) order(w0, w1);
        double uw = kz == 1 ? u4 / 2.0 : u4; // remaining uniform in [0,2)
        x.z = z_pick;
        x.w = (kw == 1) ? w0 : (uw < 1.0 ? w0 : w1);
        return (kz == 1 && kw == 1) ? 1 : 0;
    }
};

} // namespace detail

/// Inverse-iteration sampler: each of `count` independent backward orbits
/// starts uniformly in V, pulls back `depth` times choosing one of the d_t
/// preimage branches uniformly with multiplicity, and emits its endpoint.
/// Per-orbit RNG substreams make the result independent of thread schedule.
inline MeasureSample sample_equilibrium(const FamilySpec& s, const cplx& lambda, int depth,
                                        int count, std::uint64_t seed,
                                        const SampleOptions& opt = {}) {
    int transient = opt.transient >= 0 ? opt.transient : depth / 3;
    if (count > 0 && depth < transient + 1)
        throw PreconditionViolation("sample_equilibrium: depth must be >= transient + 1");
    MeasureSample out;
    out.lambda = lambda;
    out.depth = depth;
    out.seed = seed;
    out.discarded_transient = transient;
    out.dim = s.dim();
    out.points.resize(static_cast<std::size_t>(std::max(count, 0)));
    if (count <= 0) {
        out.points.clear();
        return out;
    }

    double R = s.escape_radius;
    const detail::QuadPullback fast = detail::QuadPullback::prepare(s, lambda);
    const double cluster_eps = SolveOptions{}.cluster_eps;
    parallel_for(static_cast<std::size_t>(count), opt.threads, [&](std::size_t orbit) {
        Rng rng = Rng::derive(seed, orbit);
        for (int attempt = 0;; ++attempt) {
            Point x;
            x.z = rng.uniform_disk(R);
            if (s.dim() == 2) x.w = rng.uniform_disk(R);
            int collapses = 0;
            bool exceptional = false;
            for (int step = 0; step < depth; ++step) {
                double u = rng.uniform();
                bool collapsed;
                int rc = fast.usable ? fast.step(x, u, cluster_eps) : -1;
                if (rc >= 0) {
                    collapsed = rc == 1;
                } else {
                    PreimageSet pre = preimage_points(s, lambda, x);
                    int total = pre.total_count();
                    if (total <= 0) {
                        exceptional = true;
                        break;
                    }
                    collapsed = pre.entries.size() == 1 && pre.entries[0].multiplicity == s.d_t;
                    int pick = static_cast<int>(u * total) % total;
                    int acc = 0;
                    for (const auto& e : pre.entries) {
                        acc += e.multiplicity;
                        if (pick < acc) {
                            x = e.point;
                            break;
                        }
                    }
                }
                if (collapsed) {
                    if (++collapses >= opt.collapse_limit) {
                        exceptional = true;
                        break;
                    }
                } else {
                    collapses = 0;
                }
            }
            if (!exceptional) {
                out.points[orbit] = x;
                return;
            }
            if (attempt >= opt.retry_limit)
                throw StartOnExceptionalOrbit(
                    "backward orbit kept collapsing onto a full-multiplicity preimage");
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Moments and discrepancy
// ---------------------------------------------------------------------------

/// Moment index set (a,b), 1 <= a+b <= 3.
inline const std::vector<std::pair<int, int>>& moment_indices() {
    static const std::vector<std::pair<int, int>> idx = {
        {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}, {3, 0}, {2, 1}, {1, 2}, {0, 3}};
    return idx;
}

/// m_{a,b} = mean(v^a conj(v)^b) of one coordinate of a point cloud.
inline std::vector<cplx> moment_vector(const std::vector<Point>& pts, int coord) {
    const auto& idx = moment_indices();
    std::vector<cplx> m(idx.size(), cplx{0.0, 0.0});
    if (pts.empty()) return m;
    for (const auto& p : pts) {
        cplx v = coord == 0 ? p.z : p.w;
        cplx vb = std::conj(v);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            cplx t{1.0, 0.0};
            for (int a = 0; a < idx[k].first; ++a) t *= v;
            for (int b = 0; b < idx[k].second; ++b) t *= vb;
            m[k] += t;
        }
    }
    for (auto& v : m) v /= static_cast<double>(pts.size());
    return m;
}

/// Max moment gap over indices (and both coordinates for skew products).
inline double moment_gap(const std::vector<Point>& a, const std::vector<Point>& b, int dim) {
    double gap = 0.0;
    for (int coord = 0; coord < dim; ++coord) {
        auto ma = moment_vector(a, coord);
        auto mb = moment_vector(b, coord);
        for (std::size_t k = 0; k < ma.size(); ++k)
            gap = std::max(gap, std::abs(ma[k] - mb[k]));
    }
    return gap;
}

inline double discrepancy(const MeasureSample& a, const MeasureSample& b) {
    if (a.lambda != b.lambda)
        throw PreconditionViolation("discrepancy: samples must share the parameter");
    return moment_gap(a.points, b.points, a.dim);
}

struct PushforwardReport {
    double max_moment_gap = 0.0;
};

/// Invariance check: compares the sample's moments with the moments of its
/// image under f_lambda.
inline PushforwardReport pushforward_check(const MeasureSample& sample, const FamilySpec& s) {
    if (sample.points.empty())
        throw PreconditionViolation("pushforward_check: empty sample");
    std::vector<Point> image;
    image.reserve(sample.points.size());
    for (const auto& p : sample.points) image.push_back(evaluate(s, sample.lambda, p).value);
    return {moment_gap(sample.points, image, sample.dim)};
}

// ---------------------------------------------------------------------------
// Periodic points
// ---------------------------------------------------------------------------

struct CycleSet {
    cplx lambda;
    int period = 0;
    std::vector<Point> points;
    std::vector<int> multiplicity;
    std::vector<std::array<cplx, 2>> multipliers; // eigenvalues of D(f^n); [1] unused for k=1
    std::vector<bool> repelling;
    double newton_miss_rate = 0.0; // seeded path only
    bool complete = false;         // direct-expansion path found all d_t^n points

    int total_points() const {
        int n = 0;
        for (int m : multiplicity) n += m;
        return n;
    }

    std::vector<Point> repelling_points() const {
        std::vector<Point> out;
        for (std::size_t i = 0; i < points.size(); ++i)
            if (repelling[i]) out.push_back(points[i]);
        return out;
    }
};

constexpr double kRepellingTol = 1e-9;

struct PeriodicOptions {
    int degree_cap = 4096;    // max d_t^n for direct univariate expansion
    int newton_seeds = 4096;  // seeded path
    int newton_iters = 80;
    double newton_tol = 1e-12;
    double dedupe_radius = 1e-8;
    std::uint64_t seed = 1;
    int sample_depth = 30;
    int threads = 1;
};

namespace detail {

inline std::vector<cplx> poly_multiply(const std::vector<cplx>& a, const std::vector<cplx>& b) {
    std::vector<cplx> out(a.size() + b.size() - 1, cplx{0.0, 0.0});
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    return out;
}

/// Coefficients of A(B(z)) by Horner over A's coefficients.
inline std::vector<cplx> poly_compose(const std::vector<cplx>& a, const std::vector<cplx>& b) {
    std::vector<cplx> acc{a.back()};
    for (std::size_t i = a.size() - 1; i-- > 0;) {
        acc = poly_multiply(acc, b);
        acc[0] += a[i];
    }
    return acc;
}

/// Multiplier eigenvalues of f^n along the forward orbit of x.
inline std::array<cplx, 2> orbit_multiplier(const FamilySpec& s, const cplx& lambda,
                                            const Point& x, int n) {
    ScaledCplx mz = ScaledCplx::from(cplx{1.0, 0.0});
    ScaledCplx mw = ScaledCplx::from(cplx{1.0, 0.0});
    Point cur = x;
    for (int i = 0; i < n; ++i) {
        mz = mz.times(dp_dz(s, lambda, cur.z));
        if (s.kind == FamilyKind::SkewProduct) mw = mw.times(dq_dw(s, lambda, cur.z, cur.w));
        cur = evaluate(s, lambda, cur).value;
    }
    return {mz.value(), s.kind == FamilyKind::SkewProduct ? mw.value() : cplx{0.0, 0.0}};
}

inline bool multiplier_repelling(const std::array<cplx, 2>& m, int dim) {
    double lo = std::abs(m[0]);
    if (dim == 2) lo = std::min(lo, std::abs(m[1]));
    return lo > 1.0 + kRepellingTol;
}

} // namespace detail

/// All period-n points. Univariate families expand f^n symbolically while
/// d_t^n stays under the degree cap, then fall back to Newton from
/// mu-distributed seeds; skew products always use the seeded path.
inline CycleSet find_periodic(const FamilySpec& s, const cplx& lambda, int n,
                              const PeriodicOptions& opt = {}) {
    CycleSet out;
    out.lambda = lambda;
    out.period = n;
    double dtn = std::pow(static_cast<double>(s.d_t), n);

    bool expansion_ok = s.kind == FamilyKind::Univariate &&
                        dtn <= static_cast<double>(opt.degree_cap);
    std::vector<cplx> fn;
    if (expansion_ok) {
        std::vector<cplx> p(s.p_coeffs.size());
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = eval_poly(s.p_coeffs[i], lambda);
        fn = p;
        for (int i = 1; i < n; ++i) fn = detail::poly_compose(fn, p);
        if (fn.size() < 2) fn.resize(2, cplx{0.0, 0.0});
        fn[1] -= 1.0; // f^n(z) - z
        for (const auto& c : fn)
            if (!is_finite(c)) expansion_ok = false; // coefficient overflow: fall back
    }
    if (expansion_ok) {
        RootSet roots = solve(fn);
        for (const auto& r : roots.roots) {
            Point x{r.value, {}};
            auto mult = detail::orbit_multiplier(s, lambda, x, n);
            out.points.push_back(x);
            out.multiplicity.push_back(r.multiplicity);
            out.multipliers.push_back(mult);
            out.repelling.push_back(detail::multiplier_repelling(mult, 1));
        }
        out.complete = roots.converged;
        return out;
    }

    if (s.kind == FamilyKind::Univariate && dtn > static_cast<double>(opt.degree_cap) &&
        opt.newton_seeds <= 0)
        throw DegreeCapExceeded("find_periodic: d_t^n exceeds the expansion cap");

    // Newton from backward-orbit seeds
    MeasureSample seeds = sample_equilibrium(s, lambda, opt.sample_depth, opt.newton_seeds,
                                             opt.seed, SampleOptions{-1, 5, 10, opt.threads});
    std::vector<Point> found;
    std::vector<char> hit(seeds.points.size(), 0);
    std::vector<Point> results(seeds.points.size());
    parallel_for(seeds.points.size(), opt.threads, [&](std::size_t i) {
        Point x = seeds.points[i];
        for (int it = 0; it < opt.newton_iters; ++it) {
            // residual H(x) = f^n(x) - x and its (triangular) Jacobian
            Point cur = x;
            cplx jzz{1.0, 0.0}, jww{1.0, 0.0}, jwz{0.0, 0.0};
            for (int stepi = 0; stepi < n; ++stepi) {
                cplx az = dp_dz(s, lambda, cur.z);
                if (s.kind == FamilyKind::SkewProduct) {
                    cplx aw = dq_dw(s, lambda, cur.z, cur.w);
                    cplx cz = dq_dz(s, lambda, cur.z, cur.w);
                    jwz = cz * jzz + aw * jwz;
                    jww = aw * jww;
                }
                jzz = az * jzz;
                cur = evaluate(s, lambda, cur).value;
                if (!is_finite(cur, s.dim())) break;
            }
            if (!is_finite(cur, s.dim())) return;
            cplx hz = cur.z - x.z;
            cplx hw = cur.w - x.w;
            if (s.kind == FamilyKind::Univariate) {
                cplx denom = jzz - 1.0;
                if (std::abs(denom) < 1e-300) return;
                x.z -= hz / denom;
                if (std::abs(hz) < opt.newton_tol) {
                    results[i] = x;
                    hit[i] = 1;
                    return;
                }
            } else {
                // solve (J - I) dx = h with lower-triangular J
                cplx a = jzz - 1.0, c = jwz, dgl = jww - 1.0;
                if (std::abs(a) < 1e-300 || std::abs(dgl) < 1e-300) return;
                cplx dxz = hz / a;
                cplx dxw = (hw - c * dxz) / dgl;
                x.z -= dxz;
                x.w -= dxw;
                if (std::max(std::abs(hz), std::abs(hw)) < opt.newton_tol) {
                    results[i] = x;
                    hit[i] = 1;
                    return;
                }
            }
        }
    });
    int misses = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (!hit[i]) {
            ++misses;
            continue;
        }
        bool dup = false;
        for (const auto& f : found)
            if (dist(f, results[i], s.dim()) < opt.dedupe_radius) {
                dup = true;
                break;
            }
        if (!dup) found.push_back(results[i]);
    }
    for (const auto& x : found) {
        auto mult = detail::orbit_multiplier(s, lambda, x, n);
        out.points.push_back(x);
        out.multiplicity.push_back(1);
        out.multipliers.push_back(mult);
        out.repelling.push_back(detail::multiplier_repelling(mult, s.dim()));
    }
    out.newton_miss_rate =
        seeds.points.empty() ? 1.0 : static_cast<double>(misses) / seeds.points.size();
    out.complete = false;
    return out;
}

/// Uniform sample on the repelling points of a cycle set (for discrepancy
/// comparisons against inverse-iteration samples).
inline MeasureSample sample_from_cycles(const CycleSet& cs, int dim) {
    MeasureSample m;
    m.lambda = cs.lambda;
    m.dim = dim;
    for (std::size_t i = 0; i < cs.points.size(); ++i)
        if (cs.repelling[i])
            for (int c = 0; c < cs.multiplicity[i]; ++c) m.points.push_back(cs.points[i]);
    return m;
}

} // namespace biflab

#endif
