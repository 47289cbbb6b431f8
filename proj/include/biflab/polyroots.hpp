#ifndef BIFLAB_POLYROOTS_HPP
#define BIFLAB_POLYROOTS_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "biflab/core.hpp"
#include "biflab/errors.hpp"
#include "biflab/family.hpp"

namespace biflab {

struct RootSet {
    struct Root {
        cplx value;
        int multiplicity = 1;
    };
    std::vector<Root> roots;
    double residual_max = 0.0; // max |p(root)| on the max-normalized polynomial
    bool converged = true;     // false: NonConvergence, partial set returned

    int total_count() const {
        int n = 0;
        for (const auto& r : roots) n += r.multiplicity;
        return n;
    }
};

struct SolveOptions {
    double cluster_eps = 1e-9;
    double degeneracy_threshold = 1e-12; // absolute, on the leading coefficient
    int max_iterations = 400;
    int polish_iterations = 50;
    double polish_tol = 1e-12;
};

namespace detail {

inline void horner_pair(const std::vector<cplx>& c, const cplx& z, cplx& p, cplx& dp) {
    p = c.back();
    dp = {0.0, 0.0};
    for (std::size_t i = c.size() - 1; i-- > 0;) {
        dp = dp * z + p;
        p = p * z + c[i];
    }
}

/// Bini-style initial guesses from the upper convex hull of (i, log|c_i|).
inline std::vector<cplx> initial_guesses(const std::vector<cplx>& c) {
    int d = static_cast<int>(c.size()) - 1;
    std::vector<double> lg(d + 1);
    for (int i = 0; i <= d; ++i) {
        double a = std::abs(c[i]);
        lg[i] = a > 0.0 ? std::log(a) : -1e300;
    }
    // upper hull by monotone chain over indices 0..d
    std::vector<int> hull;
    for (int i = 0; i <= d; ++i) {
        if (lg[i] <= -1e299 && i != 0 && i != d) continue;
        while (hull.size() >= 2) {
            int a = hull[hull.size() - 2], b = hull[hull.size() - 1];
            // keep turn convex from above
            if ((lg[b] - lg[a]) * (i - b) <= (lg[i] - lg[b]) * (b - a)) hull.pop_back();
            else break;
        }
        hull.push_back(i);
    }
    std::vector<cplx> guesses;
    guesses.reserve(d);
    int placed = 0;
    for (std::size_t s = 0; s + 1 < hull.size(); ++s) {
        int i = hull[s], j = hull[s + 1];
        int count = j - i;
        double r = std::exp((lg[i] - lg[j]) / count);
        r = std::min(std::max(r, 1e-12), 1e12);
        for (int t = 0; t < count; ++t) {
            double theta = 2.0 * kPi * (t + 0.5) / count + 0.4 + 0.31 * s;
            guesses.push_back(cplx{r * std::cos(theta), r * std::sin(theta)});
            ++placed;
        }
    }
    while (placed < d) { // degenerate hull fallback
        double theta = 2.0 * kPi * placed / d + 0.4;
        guesses.push_back(cplx{std::cos(theta), std::sin(theta)});
        ++placed;
    }
    return guesses;
}

inline void solve_quadratic(const cplx& a, const cplx& b, const cplx& c,
                            cplx& r0, cplx& r1) {
    cplx disc = std::sqrt(b * b - 4.0 * a * c);
    // pick the sign that avoids cancellation
    cplx q = (std::real(std::conj(b) * disc) >= 0.0) ? -0.5 * (b + disc) : -0.5 * (b - disc);
    if (std::abs(q) > 0.0) {
        r0 = q / a;
        r1 = c / q;
    } else {
        r0 = cplx{0.0, 0.0};
        r1 = cplx{0.0, 0.0};
    }
}

} // namespace detail

/// All complex roots, with multiplicity tags from cluster merging.
/// Coefficients ascending; residuals are measured after normalizing the
/// polynomial by its largest coefficient magnitude.
inline RootSet solve(std::vector<cplx> coeffs, const SolveOptions& opt = {}) {
    RootSet out;
    double cmax = 0.0;
    for (const auto& c : coeffs) cmax = std::max(cmax, std::abs(c));
    if (coeffs.empty() || cmax == 0.0)
        throw DegenerateLeadingCoefficient("polyroots: zero polynomial");
    // exact zeros are array padding; a merely tiny leading coefficient is an error
    while (coeffs.size() > 1 && coeffs.back() == cplx{0.0, 0.0}) coeffs.pop_back();
    int d = static_cast<int>(coeffs.size()) - 1;
    if (d < 1) throw DegenerateLeadingCoefficient("polyroots: degree fell below 1");
    if (std::abs(coeffs.back()) <= opt.degeneracy_threshold)
        throw DegenerateLeadingCoefficient("polyroots: leading coefficient below threshold");

    for (auto& c : coeffs) c /= cmax;

    // exact zero roots split off first
    int zero_roots = 0;
    while (zero_roots < d && coeffs[zero_roots] == cplx{0.0, 0.0}) ++zero_roots;
    std::vector<cplx> body(coeffs.begin() + zero_roots, coeffs.end());
    int db = static_cast<int>(body.size()) - 1;

    std::vector<cplx> raw;
    raw.reserve(d);
    for (int i = 0; i < zero_roots; ++i) raw.push_back(cplx{0.0, 0.0});

    if (db == 1) {
        raw.push_back(-body[0] / body[1]);
    } else if (db == 2) {
        cplx r0, r1;
        detail::solve_quadratic(body[2], body[1], body[0], r0, r1);
        raw.push_back(r0);
        raw.push_back(r1);
    } else if (db >= 3) {
        std::vector<cplx> z = detail::initial_guesses(body);
        std::vector<bool> done(db, false);
        int it = 0;
        for (; it < opt.max_iterations; ++it) {
            bool all_done = true;
            for (int k = 0; k < db; ++k) {
                if (done[k]) continue;
                cplx p, dp;
                detail::horner_pair(body, z[k], p, dp);
                if (std::abs(p) < 1e-15 * (1.0 + std::pow(std::abs(z[k]), db))) {
                    done[k] = true;
                    continue;
                }
                if (dp == cplx{0.0, 0.0}) dp = cplx{1e-30, 0.0};
                cplx w = p / dp;
                cplx sum{0.0, 0.0};
                for (int j = 0; j < db; ++j) {
                    if (j == k) continue;
                    cplx diff = z[k] - z[j];
                    if (std::abs(diff) < 1e-300) diff = cplx{1e-300, 0.0};
                    sum += 1.0 / diff;
                }
                cplx denom = 1.0 - w * sum;
                cplx step = (std::abs(denom) > 1e-300) ? w / denom : w;
                z[k] -= step;
                if (std::abs(step) > 1e-14 * (1.0 + std::abs(z[k]))) all_done = false;
                else done[k] = true;
            }
            if (all_done) break;
        }
        if (it >= opt.max_iterations) out.converged = false;
        for (const auto& zi : z) raw.push_back(zi);
    }

    // Newton polish (skip the exact zeros, they are exact)
    for (auto& r : raw) {
        if (r == cplx{0.0, 0.0} && zero_roots > 0) continue;
        for (int i = 0; i < opt.polish_iterations; ++i) {
            cplx p, dp;
            detail::horner_pair(coeffs, r, p, dp);
            if (std::abs(p) <= opt.polish_tol) break;
            if (std::abs(dp) < 1e-300) break;
            cplx step = p / dp;
            if (!is_finite(step)) break;
            r -= step;
        }
    }

    // cluster roots closer than cluster_eps into multiplicity tags
    std::vector<int> parent(raw.size());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    };
    for (std::size_t i = 0; i < raw.size(); ++i)
        for (std::size_t j = i + 1; j < raw.size(); ++j) {
            double scale = std::max(1.0, std::abs(raw[i]));
            if (std::abs(raw[i] - raw[j]) < opt.cluster_eps * scale)
                parent[find(static_cast<int>(i))] = find(static_cast<int>(j));
        }
    std::vector<std::vector<int>> groups(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) groups[find(static_cast<int>(i))].push_back(static_cast<int>(i));
    for (const auto& g : groups) {
        if (g.empty()) continue;
        cplx mean{0.0, 0.0};
        for (int i : g) mean += raw[i];
        mean /= static_cast<double>(g.size());
        out.roots.push_back({mean, static_cast<int>(g.size())});
    }
    std::sort(out.roots.begin(), out.roots.end(), [](const RootSet::Root& a, const RootSet::Root& b) {
        if (a.value.real() != b.value.real()) return a.value.real() < b.value.real();
        return a.value.imag() < b.value.imag();
    });

    for (const auto& r : out.roots) {
        cplx p, dp;
        detail::horner_pair(coeffs, r.value, p, dp);
        out.residual_max = std::max(out.residual_max, std::abs(p));
    }
    return out;
}

/// Coefficients (in z) of p(lambda, z) - target at fixed lambda.
inline std::vector<cplx> shifted_p_coeffs(const FamilySpec& s, const cplx& lambda,
                                          const cplx& target) {
    std::vector<cplx> c(s.p_coeffs.size());
    for (std::size_t i = 0; i < s.p_coeffs.size(); ++i) c[i] = eval_poly(s.p_coeffs[i], lambda);
    c[0] -= target;
    return c;
}

/// Coefficients (in w) of q(lambda, z, w) - target at fixed lambda, z.
inline std::vector<cplx> shifted_q_coeffs(const FamilySpec& s, const cplx& lambda,
                                          const cplx& z, const cplx& target) {
    std::vector<cplx> c(s.q_coeffs.size());
    for (std::size_t j = 0; j < s.q_coeffs.size(); ++j) {
        cplx cj{0.0, 0.0};
        const auto& zrow = s.q_coeffs[j];
        for (std::size_t a = zrow.size(); a-- > 0;) cj = cj * z + eval_poly(zrow[a], lambda);
        c[j] = cj;
    }
    c[0] -= target;
    return c;
}

namespace detail {

/// Allocation-free quadratic preimage solve; the hot path of every backward
/// orbit for degree-2 fibers. Matches solve()'s clustering convention.
inline int quad_roots(const cplx& a, const cplx& b, const cplx& c, double cluster_eps,
                      cplx& r0, cplx& r1) {
    solve_quadratic(a, b, c, r0, r1);
    double scale = std::max(1.0, std::abs(r0));
    if (std::abs(r0 - r1) < cluster_eps * scale) {
        r0 = 0.5 * (r0 + r1);
        return 1; // double root
    }
    return 2;
}

} // namespace detail

/// The d_t preimages of a univariate target, with multiplicity.
inline RootSet solve_shifted(const FamilySpec& s, const cplx& lambda, const cplx& target,
                             const SolveOptions& opt = {}) {
    if (s.deg_p() == 2) {
        cplx a = eval_poly(s.p_coeffs[2], lambda);
        cplx b = s.p_coeffs.size() > 1 && !s.p_coeffs[1].empty()
                     ? eval_poly(s.p_coeffs[1], lambda)
                     : cplx{0.0, 0.0};
        cplx c = (s.p_coeffs[0].empty() ? cplx{0.0, 0.0} : eval_poly(s.p_coeffs[0], lambda)) -
                 target;
        if (std::abs(a) > opt.degeneracy_threshold) {
            RootSet out;
            cplx r0, r1;
            if (detail::quad_roots(a, b, c, opt.cluster_eps, r0, r1) == 1) {
                out.roots.push_back({r0, 2});
            } else {
                if (r1.real() < r0.real() ||
                    (r1.real() == r0.real() && r1.imag() < r0.imag()))
                    std::swap(r0, r1);
                out.roots.push_back({r0, 1});
                out.roots.push_back({r1, 1});
            }
            return out;
        }
    }
    return solve(shifted_p_coeffs(s, lambda, target), opt);
}

/// Preimages in either dimension, flattened with multiplicities. For skew
/// products the z-fiber is solved first, then one w-solve per z-branch.
struct PreimageSet {
    struct Entry {
        Point point;
        int multiplicity = 1;
    };
    std::vector<Entry> entries;

    int total_count() const {
        int n = 0;
        for (const auto& e : entries) n += e.multiplicity;
        return n;
    }
};

inline PreimageSet preimage_points(const FamilySpec& s, const cplx& lambda,
                                   const Point& target, const SolveOptions& opt = {}) {
    PreimageSet out;
    RootSet zr = solve_shifted(s, lambda, target.z, opt);
    if (s.kind == FamilyKind::Univariate) {
        out.entries.reserve(zr.roots.size());
        for (const auto& r : zr.roots) out.entries.push_back({Point{r.value, {}}, r.multiplicity});
        return out;
    }
    out.entries.reserve(static_cast<std::size_t>(s.d_t));
    for (const auto& r : zr.roots) {
        if (s.deg_q() == 2) {
            // closed-form w-fiber, same convention as the z fast path
            auto coeff = [&](std::size_t j) -> cplx {
                cplx cj{0.0, 0.0};
                const auto& zrow = s.q_coeffs[j];
                for (std::size_t a = zrow.size(); a-- > 0;)
                    cj = cj * r.value + eval_poly(zrow[a], lambda);
                return cj;
            };
            cplx a = coeff(2), b = s.q_coeffs.size() > 1 ? coeff(1) : cplx{0.0, 0.0};
            cplx c = coeff(0) - target.w;
            if (std::abs(a) > opt.degeneracy_threshold) {
                cplx r0, r1;
                if (detail::quad_roots(a, b, c, opt.cluster_eps, r0, r1) == 1) {
                    out.entries.push_back({Point{r.value, r0}, 2 * r.multiplicity});
                } else {
                    out.entries.push_back({Point{r.value, r0}, r.multiplicity});
                    out.entries.push_back({Point{r.value, r1}, r.multiplicity});
                }
                continue;
            }
        }
        RootSet wr = solve(shifted_q_coeffs(s, lambda, r.value, target.w), opt);
        for (const auto& q : wr.roots)
            out.entries.push_back({Point{r.value, q.value}, r.multiplicity * q.multiplicity});
    }
    return out;
}

} // namespace biflab

#endif
