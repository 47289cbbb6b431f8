#ifndef BIFLAB_CRITICAL_HPP
#define BIFLAB_CRITICAL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "biflab/core.hpp"
#include "biflab/errors.hpp"
#include "biflab/family.hpp"
#include "biflab/measure.hpp"
#include "biflab/numerics.hpp"
#include "biflab/parallel.hpp"
#include "biflab/polyroots.hpp"
#include "biflab/rng.hpp"

namespace biflab {

// ---------------------------------------------------------------------------
// Critical components
// ---------------------------------------------------------------------------

struct CriticalComponent {
    enum class Kind { FiberPoint, ZCritCurve, WCritCurve };
    Kind kind = Kind::FiberPoint;
    cplx location;        // fiber point, or the z / w root defining the curve
    int multiplicity = 1; // from the divisor of Jac
};

/// k=1: roots of dp/dz with multiplicity. k=2: the curve families
/// {dp/dz = 0} x C_w and {dq/dw(.,z,.) = 0} (w-root representative at z=0).
inline std::vector<CriticalComponent> critical_components(const FamilySpec& s,
                                                          const cplx& lambda) {
    std::vector<CriticalComponent> out;
    std::vector<cplx> dp(s.deg_p());
    for (int i = 1; i <= s.deg_p(); ++i)
        dp[i - 1] = static_cast<double>(i) * eval_poly(s.p_coeffs[i], lambda);
    RootSet zr = solve(dp);
    for (const auto& r : zr.roots)
        out.push_back({s.kind == FamilyKind::Univariate ? CriticalComponent::Kind::FiberPoint
                                                        : CriticalComponent::Kind::ZCritCurve,
                       r.value, r.multiplicity});
    if (s.kind == FamilyKind::SkewProduct) {
        std::vector<cplx> dq(s.deg_q());
        for (int j = 1; j <= s.deg_q(); ++j) {
            cplx cj{0.0, 0.0};
            const auto& zrow = s.q_coeffs[j];
            for (std::size_t a = zrow.size(); a-- > 0;)
                cj = cj * cplx{0.0, 0.0} + eval_poly(zrow[a], lambda);
            dq[j - 1] = static_cast<double>(j) * cj;
        }
        RootSet wr = solve(dq);
        for (const auto& r : wr.roots)
            out.push_back({CriticalComponent::Kind::WCritCurve, r.value, r.multiplicity});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Postcritical pushforward mass
// ---------------------------------------------------------------------------

struct MassOptions {
    int gauss_nodes = 16;    // per axis, k=1 quadrature
    int mc_strata = 10000;   // k=2 Monte Carlo
    std::uint64_t seed = 1;
    int threads = 1;
    double fd_step = 1e-6;   // finite-difference step (relative) for k=2
};

struct MassResult {
    double log_mass = -std::numeric_limits<double>::infinity();
    double kept_fraction = 0.0; // samples whose orbit stayed in U through step n
    bool all_escaped = false;
};

namespace detail {

/// Critical points of p(lambda,.) with their lambda-derivatives. Implicit
/// differentiation where the critical point is simple; matched finite
/// differences otherwise.
struct CritPointDeriv {
    cplx c;
    cplx dc;
    int multiplicity;
};

inline std::vector<CritPointDeriv> critical_points_with_derivative(const FamilySpec& s,
                                                                   const cplx& lambda) {
    std::vector<CritPointDeriv> out;
    std::vector<cplx> dp(s.deg_p());
    for (int i = 1; i <= s.deg_p(); ++i)
        dp[i - 1] = static_cast<double>(i) * eval_poly(s.p_coeffs[i], lambda);
    RootSet zr = solve(dp);
    for (const auto& r : zr.roots) {
        CritPointDeriv cp{r.value, cplx{0.0, 0.0}, r.multiplicity};
        cplx denom = d2p_dz2(s, lambda, r.value);
        if (r.multiplicity == 1 && std::abs(denom) > 1e-10) {
            cp.dc = -d2p_dzdlambda(s, lambda, r.value) / denom;
        } else {
            // nearest-root matching between lambda +/- h
            double h = 1e-6 * (1.0 + std::abs(lambda));
            auto nearest = [&](const cplx& l) {
                std::vector<cplx> d2(s.deg_p());
                for (int i = 1; i <= s.deg_p(); ++i)
                    d2[i - 1] = static_cast<double>(i) * eval_poly(s.p_coeffs[i], l);
                RootSet rs = solve(d2);
                cplx best = rs.roots.front().value;
                for (const auto& q : rs.roots)
                    if (std::abs(q.value - r.value) < std::abs(best - r.value)) best = q.value;
                return best;
            };
            cp.dc = (nearest(lambda + h) - nearest(lambda - h)) / (2.0 * h);
        }
        out.push_back(cp);
    }
    return out;
}

} // namespace detail

/// log of the estimated ||(f^n)_* C_f|| restricted to the part of the product
/// space over the window whose orbit stays in the certified U.
///
/// k=1: tensor Gauss quadrature of sum_i mult_i (1 + |d/dlambda f^n(c_i)|^2)
/// over the window, dropping nodes whose orbit escapes before step n.
/// k=2: stratified Monte Carlo over (lambda, curve parameter) of the squared
/// determinant of the 2x2 parameter-to-image derivative (finite differences).
inline MassResult pushforward_mass(const FamilySpec& s, const ParameterDomain& window, int n,
                                   const MassOptions& opt, const FamilyGeometry& geom) {
    if (n < 1) throw PreconditionViolation("pushforward_mass: n must be >= 1");
    MassResult res;
    double clip = geom.U_escape_bound;

    if (s.kind == FamilyKind::Univariate) {
        GaussRule gr = gauss_legendre(opt.gauss_nodes);
        int nn = opt.gauss_nodes;
        std::vector<double> logs(static_cast<std::size_t>(nn) * nn,
                                 -std::numeric_limits<double>::infinity());
        std::vector<char> kept(static_cast<std::size_t>(nn) * nn, 0);
        parallel_for(static_cast<std::size_t>(nn) * nn, opt.threads, [&](std::size_t idx) {
            int gi = static_cast<int>(idx) % nn;
            int gj = static_cast<int>(idx) / nn;
            cplx lambda{window.center.real() + window.half_width * gr.nodes[gi],
                        window.center.imag() + window.half_height * gr.nodes[gj]};
            double wgt = gr.weights[gi] * gr.weights[gj] * window.half_width * window.half_height;
            auto crits = detail::critical_points_with_derivative(s, lambda);
            LogSumExp cell;
            bool any_kept = false;
            for (const auto& cp : crits) {
                ParamDerivative pd = param_derivative(s, lambda, Point{cp.c, {}}, n,
                                                      {cp.dc, cplx{0, 0}}, clip);
                if (pd.escaped_at >= 0) continue;
                any_kept = true;
                double log_integrand = log1p_exp(2.0 * pd.log_abs[0]); // log(1+|G|^2)
                cell.add(std::log(static_cast<double>(cp.multiplicity)) + log_integrand);
            }
            if (any_kept) {
                kept[idx] = 1;
                logs[idx] = std::log(wgt) + cell.value();
            }
        });
        LogSumExp acc;
        int kept_count = 0;
        for (std::size_t i = 0; i < logs.size(); ++i) {
            acc.add(logs[i]);
            kept_count += kept[i];
        }
        res.kept_fraction = static_cast<double>(kept_count) / (static_cast<double>(nn) * nn);
        res.all_escaped = kept_count == 0;
        res.log_mass = acc.value();
        return res;
    }

    // Skew product: sample (lambda, t) strata; t parameterizes the critical
    // curve (w for z-curves, z for w-curves) over the disk of radius clip.
    auto comps = critical_components(s, window.center);
    int strata = std::max(1, opt.mc_strata);
    int side = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(strata))));
    std::vector<double> logs;
    std::vector<char> kept;
    logs.assign(static_cast<std::size_t>(side) * side * comps.size(),
                -std::numeric_limits<double>::infinity());
    kept.assign(logs.size(), 0);
    double domain_area_lambda = 4.0 * window.half_width * window.half_height;
    double domain_area_t = kPi * clip * clip;

    parallel_for(logs.size(), opt.threads, [&](std::size_t idx) {
        std::size_t per_comp = static_cast<std::size_t>(side) * side;
        std::size_t ci = idx / per_comp;
        std::size_t cell = idx % per_comp;
        int si = static_cast<int>(cell) % side;
        int sj = static_cast<int>(cell) / side;
        const auto& comp = comps[ci];
        Rng rng = Rng::derive(opt.seed, idx);
        // stratified jitter inside the (lambda, t) cell
        double ux = (si + rng.uniform()) / side;
        double uy = (sj + rng.uniform()) / side;
        cplx lambda{window.center.real() + (2.0 * ux - 1.0) * window.half_width,
                    window.center.imag() + (2.0 * uy - 1.0) * window.half_height};
        double rr = clip * std::sqrt(rng.uniform());
        double th = 2.0 * kPi * rng.uniform();
        cplx t{rr * std::cos(th), rr * std::sin(th)};

        // base point on the critical set at (lambda, t)
        auto base_point = [&](const cplx& l, const cplx& tt) -> Point {
            if (comp.kind == CriticalComponent::Kind::ZCritCurve) {
                // track the z-root of dp/dz near comp.location
                std::vector<cplx> dp(s.deg_p());
                for (int i = 1; i <= s.deg_p(); ++i)
                    dp[i - 1] = static_cast<double>(i) * eval_poly(s.p_coeffs[i], l);
                RootSet rs = solve(dp);
                cplx best = rs.roots.front().value;
                for (const auto& q : rs.roots)
                    if (std::abs(q.value - comp.location) < std::abs(best - comp.location))
                        best = q.value;
                return Point{best, tt};
            }
            // WCritCurve: w-root of dq/dw(lambda, z=tt, .)
            std::vector<cplx> dq(s.deg_q());
            for (int j = 1; j <= s.deg_q(); ++j) {
                cplx cj{0.0, 0.0};
                const auto& zrow = s.q_coeffs[j];
                for (std::size_t a = zrow.size(); a-- > 0;) cj = cj * tt + eval_poly(zrow[a], l);
                dq[j - 1] = static_cast<double>(j) * cj;
            }
            RootSet rs = solve(dq);
            cplx best = rs.roots.front().value;
            for (const auto& q : rs.roots)
                if (std::abs(q.value - comp.location) < std::abs(best - comp.location))
                    best = q.value;
            return Point{tt, best};
        };

        auto orbit_n = [&](const cplx& l, const cplx& tt, bool& escaped) -> Point {
            Point x = base_point(l, tt);
            for (int i = 0; i < n; ++i) {
                EvalResult ev = evaluate(s, l, x);
                x = ev.value;
                if (ev.escaped || sup_norm(x, 2) > clip) {
                    escaped = true;
                    return x;
                }
            }
            escaped = false;
            return x;
        };

        bool esc = false;
        Point img = orbit_n(lambda, t, esc);
        if (esc) return;
        double hl = opt.fd_step * (1.0 + std::abs(lambda));
        double ht = opt.fd_step * (1.0 + std::abs(t));
        bool e1 = false, e2 = false, e3 = false, e4 = false;
        Point ip = orbit_n(lambda + hl, t, e1);
        Point im = orbit_n(lambda - hl, t, e2);
        Point tp = orbit_n(lambda, t + ht, e3);
        Point tm = orbit_n(lambda, t - ht, e4);
        if (e1 || e2 || e3 || e4) return;
        cplx dzl = (ip.z - im.z) / (2.0 * hl), dwl = (ip.w - im.w) / (2.0 * hl);
        cplx dzt = (tp.z - tm.z) / (2.0 * ht), dwt = (tp.w - tm.w) / (2.0 * ht);
        cplx det = dzl * dwt - dzt * dwl;
        double a2 = std::norm(det); // |det|^2, the pulled-back volume form
        (void)img;
        kept[idx] = 1;
        double cellw = domain_area_lambda * domain_area_t * comp.multiplicity /
                       (static_cast<double>(side) * side);
        logs[idx] = a2 > 0.0 ? std::log(cellw) + std::log(a2)
                             : -std::numeric_limits<double>::infinity();
    });
    LogSumExp acc;
    int kept_count = 0;
    for (std::size_t i = 0; i < logs.size(); ++i) {
        acc.add(logs[i]);
        kept_count += kept[i];
    }
    res.kept_fraction = static_cast<double>(kept_count) / static_cast<double>(logs.size());
    res.all_escaped = kept_count == 0;
    res.log_mass = acc.value();
    return res;
}

// ---------------------------------------------------------------------------
// Volume series, growth rate, stability dichotomy
// ---------------------------------------------------------------------------

struct VolumeSeries {
    ParameterDomain window;
    int n_min = 1;
    int n_max = 1;
    std::vector<double> log_mass;      // index 0 -> n_min
    std::vector<double> kept_fraction;
    std::vector<char> escaped_flag;    // all samples escaped at this n
};

/// Per-n masses share one orbit sweep per quadrature node: each node is
/// propagated once to n_max, recording its integrand at every n before its
/// escape step.
inline VolumeSeries volume_series(const FamilySpec& s, const ParameterDomain& window,
                                  int n_min, int n_max, const MassOptions& opt,
                                  const FamilyGeometry& geom) {
    if (n_min < 1 || n_max < n_min)
        throw PreconditionViolation("volume_series: need 1 <= n_min <= n_max");
    VolumeSeries vs;
    vs.window = window;
    vs.n_min = n_min;
    vs.n_max = n_max;
    int count = n_max - n_min + 1;
    vs.log_mass.assign(count, -std::numeric_limits<double>::infinity());
    vs.kept_fraction.assign(count, 0.0);
    vs.escaped_flag.assign(count, 0);

    if (s.kind == FamilyKind::Univariate) {
        GaussRule gr = gauss_legendre(opt.gauss_nodes);
        int nn = opt.gauss_nodes;
        double clip = geom.U_escape_bound;
        // per-node, per-n log integrand (log weight included)
        std::vector<std::vector<double>> logs(
            static_cast<std::size_t>(nn) * nn,
            std::vector<double>(count, -std::numeric_limits<double>::infinity()));
        parallel_for(static_cast<std::size_t>(nn) * nn, opt.threads, [&](std::size_t idx) {
            int gi = static_cast<int>(idx) % nn;
            int gj = static_cast<int>(idx) / nn;
            cplx lambda{window.center.real() + window.half_width * gr.nodes[gi],
                        window.center.imag() + window.half_height * gr.nodes[gj]};
            double wgt = gr.weights[gi] * gr.weights[gj] * window.half_width * window.half_height;
            auto crits = detail::critical_points_with_derivative(s, lambda);
            std::vector<LogSumExp> per_n(count);
            for (const auto& cp : crits) {
                Point x{cp.c, {}};
                ScaledCplx g = ScaledCplx::from(cp.dc);
                for (int step = 1; step <= n_max; ++step) {
                    cplx az = dp_dz(s, lambda, x.z);
                    cplx bz = dp_dlambda(s, lambda, x.z);
                    g = ScaledCplx::sum(g.times(az), ScaledCplx::from(bz));
                    EvalResult ev = evaluate(s, lambda, x);
                    x = ev.value;
                    if (ev.escaped || std::abs(x.z) > clip) break;
                    if (step >= n_min)
                        per_n[step - n_min].add(std::log(static_cast<double>(cp.multiplicity)) +
                                                log1p_exp(2.0 * g.log_abs()));
                }
            }
            for (int k = 0; k < count; ++k)
                if (per_n[k].terms() > 0) logs[idx][k] = std::log(wgt) + per_n[k].value();
        });
        for (int k = 0; k < count; ++k) {
            LogSumExp acc;
            int kept = 0;
            for (std::size_t idx = 0; idx < logs.size(); ++idx) {
                acc.add(logs[idx][k]);
                if (logs[idx][k] > -std::numeric_limits<double>::infinity()) ++kept;
            }
            vs.log_mass[k] = acc.value();
            vs.kept_fraction[k] = static_cast<double>(kept) / (static_cast<double>(nn) * nn);
            vs.escaped_flag[k] = kept == 0;
        }
        return vs;
    }

    for (int n = n_min; n <= n_max; ++n) {
        MassOptions o = opt;
        o.seed = splitmix64_key(opt.seed, static_cast<std::uint64_t>(n));
        MassResult r = pushforward_mass(s, window, n, o, geom);
        vs.log_mass[n - n_min] = r.log_mass;
        vs.kept_fraction[n - n_min] = r.kept_fraction;
        vs.escaped_flag[n - n_min] = r.all_escaped;
    }
    return vs;
}

struct GrowthRate {
    double rate = 0.0;
    double ci = 0.0; // 1.96 * standard error of the fitted slope
    int points_used = 0;
};

/// Least-squares slope of log_mass vs n over the last half of the series.
inline GrowthRate growth_rate(const VolumeSeries& vs) {
    int count = static_cast<int>(vs.log_mass.size());
    int start = count / 2;
    std::vector<double> xs, ys;
    for (int k = start; k < count; ++k) {
        if (!std::isfinite(vs.log_mass[k])) continue;
        xs.push_back(static_cast<double>(vs.n_min + k));
        ys.push_back(vs.log_mass[k]);
    }
    if (xs.size() < 5)
        throw InsufficientPoints("growth_rate: need at least 5 finite tail points");
    LineFit f = fit_line(xs, ys);
    return {f.slope, 1.96 * f.slope_stderr, f.points};
}

enum class Stability { Stable, Bifurcating, Inconclusive };

/// Theorem-B-style dichotomy against the user-supplied degree bound.
inline Stability classify_stability(const GrowthRate& g, double d_star_upper) {
    double threshold = std::log(d_star_upper);
    if (g.rate - g.ci > threshold) return Stability::Bifurcating;
    if (g.rate + g.ci < threshold) return Stability::Stable;
    return Stability::Inconclusive;
}

// ---------------------------------------------------------------------------
// Inverse-branch census
// ---------------------------------------------------------------------------

struct CensusOptions {
    int boundary_samples = 32;
    long branch_cap_univariate = 1 << 16;
    long branch_cap_skew = 4096;
    int threads = 1;
};

struct InverseBranchCensus {
    Point center;
    double radius = 0.0;
    double rho = 0.0;
    int n = 0;
    long count = 0;   // branches with h(closure A) inside A and sampled Lip <= rho
    double ratio = 0.0; // count / d_t^n
};

/// Counts inverse branches of f^n over the ball A = B(a0, radius) that map the
/// closed ball into A with sampled Lipschitz constant <= rho. Branches are
/// reconstructed on boundary samples by nearest-root continuation of the
/// center's preimage tree.
inline InverseBranchCensus inverse_branch_census(const FamilySpec& s, const cplx& lambda,
                                                 const Point& a0, double radius, double rho,
                                                 int n, const MeasureSample& julia_probe,
                                                 const CensusOptions& opt = {}) {
    // precondition: A must meet the sampled Julia set
    double dmin = std::numeric_limits<double>::infinity();
    for (const auto& p : julia_probe.points) dmin = std::min(dmin, dist(p, a0, s.dim()));
    if (!(dmin < radius))
        throw PreconditionViolation("inverse_branch_census: ball does not meet the sampled Julia set");

    double dtn = std::pow(static_cast<double>(s.d_t), n);
    long cap = s.kind == FamilyKind::Univariate ? opt.branch_cap_univariate : opt.branch_cap_skew;
    if (dtn > static_cast<double>(cap))
        throw BranchCapExceeded("inverse_branch_census: d_t^n exceeds the branch cap");

    // sample set: center plus boundary points (z-circle; w-circle too for k=2)
    std::vector<Point> samples;
    samples.push_back(a0);
    int m = opt.boundary_samples;
    for (int i = 0; i < m; ++i) {
        double th = 2.0 * kPi * i / m;
        Point p = a0;
        p.z += radius * cplx{std::cos(th), std::sin(th)};
        if (s.dim() == 2) {
            p.w += radius * cplx{std::cos(2.3 * th + 0.7), std::sin(2.3 * th + 0.7)};
        }
        samples.push_back(p);
    }
    std::size_t ns = samples.size();

    // level-wise preimage trees, sample trees aligned to the center tree by
    // nearest-root matching (deterministic: roots sorted inside solve())
    struct Node {
        std::vector<Point> pts; // [sample] including center at index 0
    };
    std::vector<Node> level(1);
    level[0].pts = samples;
    for (int depth_i = 0; depth_i < n; ++depth_i) {
        std::vector<Node> next(level.size() * s.d_t);
        parallel_for(level.size(), opt.threads, [&](std::size_t node_i) {
            const Node& nd = level[node_i];
            PreimageSet center_pre = preimage_points(s, lambda, nd.pts[0]);
            // flatten with multiplicity to exactly d_t ordered branches
            std::vector<Point> center_branches;
            for (const auto& e : center_pre.entries)
                for (int c = 0; c < e.multiplicity; ++c) center_branches.push_back(e.point);
            // defensive: degenerate solve shortfall
            while (static_cast<int>(center_branches.size()) < s.d_t)
                center_branches.push_back(center_pre.entries.front().point);
            for (std::size_t b = 0; b < static_cast<std::size_t>(s.d_t); ++b) {
                Node& child = next[node_i * s.d_t + b];
                child.pts.resize(ns);
                child.pts[0] = center_branches[b];
            }
            for (std::size_t si = 1; si < ns; ++si) {
                PreimageSet pre = preimage_points(s, lambda, nd.pts[si]);
                std::vector<Point> pool;
                for (const auto& e : pre.entries)
                    for (int c = 0; c < e.multiplicity; ++c) pool.push_back(e.point);
                while (pool.size() < static_cast<std::size_t>(s.d_t))
                    pool.push_back(pre.entries.front().point);
                std::vector<char> used(pool.size(), 0);
                for (std::size_t b = 0; b < static_cast<std::size_t>(s.d_t); ++b) {
                    // nearest unused pool point to the center branch point
                    const Point& target = next[node_i * s.d_t + b].pts[0];
                    double best = std::numeric_limits<double>::infinity();
                    std::size_t bi = 0;
                    for (std::size_t pi = 0; pi < pool.size(); ++pi) {
                        if (used[pi]) continue;
                        double dd = dist(pool[pi], target, s.dim());
                        if (dd < best) {
                            best = dd;
                            bi = pi;
                        }
                    }
                    used[bi] = 1;
                    next[node_i * s.d_t + b].pts[si] = pool[bi];
                }
            }
        });
        level = std::move(next);
    }

    InverseBranchCensus census;
    census.center = a0;
    census.radius = radius;
    census.rho = rho;
    census.n = n;
    std::vector<char> pass(level.size(), 0);
    parallel_for(level.size(), opt.threads, [&](std::size_t bi) {
        const Node& nd = level[bi];
        for (const auto& p : nd.pts)
            if (!(dist(p, a0, s.dim()) < radius)) return; // image must stay in A
        for (std::size_t i = 0; i < ns; ++i)
            for (std::size_t j = i + 1; j < ns; ++j) {
                double dx = dist(samples[i], samples[j], s.dim());
                if (dx <= 0.0) continue;
                if (dist(nd.pts[i], nd.pts[j], s.dim()) > rho * dx) return;
            }
        pass[bi] = 1;
    });
    for (char c : pass) census.count += c;
    census.ratio = static_cast<double>(census.count) / dtn;
    return census;
}

} // namespace biflab

#endif
