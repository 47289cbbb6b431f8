#ifndef BIFLAB_FAMILY_HPP
#define BIFLAB_FAMILY_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "biflab/core.hpp"
#include "biflab/errors.hpp"
#include "biflab/numerics.hpp"

namespace biflab {

enum class FamilyKind { Univariate, SkewProduct };

/// Polynomial in lambda, coefficients ascending.
using LambdaPoly = std::vector<cplx>;

inline cplx eval_poly(const LambdaPoly& c, const cplx& x) {
    cplx acc{0.0, 0.0};
    for (std::size_t i = c.size(); i-- > 0;) acc = acc * x + c[i];
    return acc;
}

inline LambdaPoly poly_derivative(const LambdaPoly& c) {
    LambdaPoly d;
    for (std::size_t i = 1; i < c.size(); ++i) d.push_back(static_cast<double>(i) * c[i]);
    return d;
}

/// A parameterized polynomial family on C (p(lambda,z)) or a skew product on
/// C^2 ((z,w) -> (p(lambda,z), q(lambda,z,w))).
struct FamilySpec {
    FamilyKind kind = FamilyKind::Univariate;
    std::vector<LambdaPoly> p_coeffs;               // index = z-degree
    std::vector<std::vector<LambdaPoly>> q_coeffs;  // [w-degree][z-degree]
    int d_t = 0;
    double d_star_upper = 1.0;
    double escape_radius = 2.0;

    int dim() const { return kind == FamilyKind::Univariate ? 1 : 2; }
    int deg_p() const { return static_cast<int>(p_coeffs.size()) - 1; }
    int deg_q() const { return static_cast<int>(q_coeffs.size()) - 1; }

    static FamilySpec univariate(std::vector<LambdaPoly> p, double escape_radius,
                                 double d_star_upper = 1.0) {
        FamilySpec s;
        s.kind = FamilyKind::Univariate;
        s.p_coeffs = std::move(p);
        s.escape_radius = escape_radius;
        s.d_star_upper = d_star_upper;
        s.d_t = s.deg_p();
        s.validate();
        return s;
    }

    static FamilySpec skew_product(std::vector<LambdaPoly> p,
                                   std::vector<std::vector<LambdaPoly>> q,
                                   double escape_radius, double d_star_upper) {
        FamilySpec s;
        s.kind = FamilyKind::SkewProduct;
        s.p_coeffs = std::move(p);
        s.q_coeffs = std::move(q);
        s.escape_radius = escape_radius;
        s.d_star_upper = d_star_upper;
        s.d_t = s.deg_p() * s.deg_q();
        s.validate();
        return s;
    }

    void validate() const {
        if (deg_p() < 1) throw ConfigError("family: p must have z-degree >= 1");
        if (kind == FamilyKind::SkewProduct && deg_q() < 1)
            throw ConfigError("family: q must have w-degree >= 1");
        if (d_t < 2) throw ConfigError("family: topological degree d_t must be >= 2");
        if (escape_radius <= 0.0) throw ConfigError("family: escape_radius must be positive");
    }
};

// ---------------------------------------------------------------------------
// Evaluation and pointwise derivatives
// ---------------------------------------------------------------------------

/// q(lambda, z, w) given the coefficient table, Horner in w then z then lambda.
inline cplx eval_q(const FamilySpec& s, const cplx& lambda, const cplx& z, const cplx& w) {
    cplx acc{0.0, 0.0};
    for (std::size_t j = s.q_coeffs.size(); j-- > 0;) {
        cplx cj{0.0, 0.0};
        const auto& zrow = s.q_coeffs[j];
        for (std::size_t a = zrow.size(); a-- > 0;) cj = cj * z + eval_poly(zrow[a], lambda);
        acc = acc * w + cj;
    }
    return acc;
}

inline cplx eval_p(const FamilySpec& s, const cplx& lambda, const cplx& z) {
    cplx acc{0.0, 0.0};
    for (std::size_t i = s.p_coeffs.size(); i-- > 0;) acc = acc * z + eval_poly(s.p_coeffs[i], lambda);
    return acc;
}

struct EvalResult {
    Point value;
    bool escaped = false; // non-finite arithmetic; never a silent infinity
};

inline EvalResult evaluate(const FamilySpec& s, const cplx& lambda, const Point& x) {
    EvalResult r;
    r.value.z = eval_p(s, lambda, x.z);
    if (s.kind == FamilyKind::SkewProduct) r.value.w = eval_q(s, lambda, x.z, x.w);
    r.escaped = !is_finite(r.value, s.dim());
    return r;
}

inline cplx dp_dz(const FamilySpec& s, const cplx& lambda, const cplx& z) {
    cplx acc{0.0, 0.0};
    for (std::size_t i = s.p_coeffs.size(); i-- > 1;)
        acc = acc * z + static_cast<double>(i) * eval_poly(s.p_coeffs[i], lambda);
    return acc;
}

inline cplx d2p_dz2(const FamilySpec& s, const cplx& lambda, const cplx& z) {
    cplx acc{0.0, 0.0};
    for (std::size_t i = s.p_coeffs.size(); i-- > 2;)
        acc = acc * z + static_cast<double>(i) * static_cast<double>(i - 1) *
                            eval_poly(s.p_coeffs[i], lambda);
    return acc;
}

inline cplx dp_dlambda(const FamilySpec& s, const cplx& lambda, const cplx& z) {
    cplx acc{0.0, 0.0};
    for (std::size_t i = s.p_coeffs.size(); i-- > 0;)
        acc = acc * z + eval_poly(poly_derivative(s.p_coeffs[i]), lambda);
    return acc;
}

/// d/dz of dp_dz in lambda: used for implicit differentiation of critical points.
inline cplx d2p_dzdlambda(const FamilySpec& s, const cplx& lambda, const cplx& z) {
    cplx acc{0.0, 0.0};
    for (std::size_t i = s.p_coeffs.size(); i-- > 1;)
        acc = acc * z + static_cast<double>(i) * eval_poly(poly_derivative(s.p_coeffs[i]), lambda);
    return acc;
}

inline cplx dq_dw(const FamilySpec& s, const cplx& lambda, const cplx& z, const cplx& w) {
    cplx acc{0.0, 0.0};
    for (std::size_t j = s.q_coeffs.size(); j-- > 1;) {
        cplx cj{0.0, 0.0};
        const auto& zrow = s.q_coeffs[j];
        for (std::size_t a = zrow.size(); a-- > 0;) cj = cj * z + eval_poly(zrow[a], lambda);
        acc = acc * w + static_cast<double>(j) * cj;
    }
    return acc;
}

inline cplx dq_dz(const FamilySpec& s, const cplx& lambda, const cplx& z, const cplx& w) {
    cplx acc{0.0, 0.0};
    for (std::size_t j = s.q_coeffs.size(); j-- > 0;) {
        cplx cj{0.0, 0.0};
        const auto& zrow = s.q_coeffs[j];
        for (std::size_t a = zrow.size(); a-- > 1;)
            cj = cj * z + static_cast<double>(a) * eval_poly(zrow[a], lambda);
        acc = acc * w + cj;
    }
    return acc;
}

inline cplx dq_dlambda(const FamilySpec& s, const cplx& lambda, const cplx& z, const cplx& w) {
    cplx acc{0.0, 0.0};
    for (std::size_t j = s.q_coeffs.size(); j-- > 0;) {
        cplx cj{0.0, 0.0};
        const auto& zrow = s.q_coeffs[j];
        for (std::size_t a = zrow.size(); a-- > 0;)
            cj = cj * z + eval_poly(poly_derivative(zrow[a]), lambda);
        acc = acc * w + cj;
    }
    return acc;
}

/// Complex Jacobian determinant of f_lambda at a point. Triangular for skew
/// products, so the determinant is the product of the diagonal entries.
inline cplx jacobian(const FamilySpec& s, const cplx& lambda, const Point& x) {
    cplx jz = dp_dz(s, lambda, x.z);
    if (s.kind == FamilyKind::Univariate) return jz;
    return jz * dq_dw(s, lambda, x.z, x.w);
}

// ---------------------------------------------------------------------------
// Parameter derivative along an orbit
// ---------------------------------------------------------------------------

struct ParamDerivative {
    std::array<cplx, 2> d{};        // d/dlambda of (z_n, w_n); [1] unused for k=1
    std::array<double, 2> log_abs{}; // robust log-magnitudes of the same
    Point endpoint;
    int escaped_at = -1;            // step index where the orbit left the clip radius
};

/// Propagates d/dlambda of f_lambda^n(x(lambda)) by the chain rule alongside
/// the orbit, starting from x with dx/dlambda = dx0. Magnitudes are carried in
/// scaled form so the logs stay finite long after doubles overflow.
inline ParamDerivative param_derivative(const FamilySpec& s, const cplx& lambda,
                                        const Point& x0, int n,
                                        std::array<cplx, 2> dx0 = {cplx{0, 0}, cplx{0, 0}},
                                        double clip_radius = 0.0) {
    ParamDerivative out;
    Point x = x0;
    ScaledCplx gz = ScaledCplx::from(dx0[0]);
    ScaledCplx gw = ScaledCplx::from(dx0[1]);
    for (int step = 1; step <= n; ++step) {
        cplx az = dp_dz(s, lambda, x.z);
        cplx bz = dp_dlambda(s, lambda, x.z);
        ScaledCplx gz_next = ScaledCplx::sum(gz.times(az), ScaledCplx::from(bz));
        ScaledCplx gw_next;
        if (s.kind == FamilyKind::SkewProduct) {
            // w' = dq/dw * w'_prev + dq/dz * z'_prev + dq/dlambda
            cplx aw = dq_dw(s, lambda, x.z, x.w);
            cplx cz = dq_dz(s, lambda, x.z, x.w);
            cplx bw = dq_dlambda(s, lambda, x.z, x.w);
            gw_next = ScaledCplx::sum(ScaledCplx::sum(gw.times(aw), gz.times(cz)),
                                      ScaledCplx::from(bw));
        }
        EvalResult ev = evaluate(s, lambda, x);
        x = ev.value;
        gz = gz_next;
        gw = gw_next;
        bool out_of_clip = clip_radius > 0.0 && sup_norm(x, s.dim()) > clip_radius;
        if (ev.escaped || out_of_clip) {
            out.escaped_at = step;
            break;
        }
    }
    out.endpoint = x;
    out.d[0] = gz.value();
    out.d[1] = gw.value();
    out.log_abs[0] = gz.log_abs();
    out.log_abs[1] = gw.log_abs();
    return out;
}

// ---------------------------------------------------------------------------
// Polynomial-like geometry certificate
// ---------------------------------------------------------------------------

namespace detail {

/// Upper bound of |poly(lambda)| over |lambda| <= rho.
inline double poly_upper(const LambdaPoly& c, double rho) {
    double b = 0.0, r = 1.0;
    for (const auto& ci : c) {
        b += std::abs(ci) * r;
        r *= rho;
    }
    return b;
}

/// Lower bound of |poly(lambda)| over |lambda| <= rho (crude: constant term
/// minus the rest). Nonpositive means the bound cannot exclude a zero.
inline double poly_lower(const LambdaPoly& c, double rho) {
    if (c.empty()) return 0.0;
    double b = std::abs(c[0]), r = rho;
    for (std::size_t i = 1; i < c.size(); ++i) {
        b -= std::abs(c[i]) * r;
        r *= rho;
    }
    return b;
}

/// Smallest r < R such that c_low*s^d - sum_j C_j s^j > R for all s >= r,
/// checked on a Lipschitz-guarded grid. Returns a negative value when no such
/// radius exists below R.
inline double escape_radius_bound(double c_low, const std::vector<double>& C, int d,
                                  double R) {
    double csum = 0.0;
    for (int j = 0; j < d; ++j) csum += C[j];
    double s1 = std::max(1.0, (R + 1.0 + csum) / c_low);
    auto G = [&](double s) {
        double v = c_low * std::pow(s, d);
        double sp = 1.0;
        for (int j = 0; j < d; ++j) {
            v -= C[j] * sp;
            sp *= s;
        }
        return v;
    };
    // |G'| bound on [0, s1]
    double lip = c_low * d * std::pow(s1, d - 1);
    for (int j = 1; j < d; ++j) lip += j * C[j] * std::pow(s1, j - 1);
    const int K = 8192;
    double step = s1 / K;
    double guard = lip * step;
    auto valid = [&](double r) {
        if (r >= R) return false;
        for (double s = r; s <= s1 + step; s += step)
            if (G(s) <= R + guard) return false;
        return true;
    };
    if (!valid(R * (1.0 - 1e-9))) {
        // even the largest admissible radius fails
        if (!valid(R * (1.0 - 1e-6))) return -1.0;
    }
    double lo = 0.0, hi = R * (1.0 - 1e-9);
    if (!valid(hi)) return -1.0;
    for (int it = 0; it < 60; ++it) {
        double mid = 0.5 * (lo + hi);
        if (valid(mid)) hi = mid;
        else lo = mid;
    }
    return hi;
}

} // namespace detail

/// Escape-radius certificate over a whole parameter rectangle: every point
/// with some coordinate of modulus >= r maps outside the polydisk of radius R,
/// hence U_lambda = f_lambda^{-1}(V_lambda) sits inside the polydisk of
/// radius r < R for all lambda in the domain. Throws NoEscapeCertificate when
/// the coefficient bounds cannot deliver r < R.
inline FamilyGeometry certify_geometry(const FamilySpec& s, const ParameterDomain& dom) {
    double rho = dom.corner_radius();
    double R = s.escape_radius;

    int dp = s.deg_p();
    std::vector<double> Cp(dp, 0.0);
    for (int j = 0; j < dp; ++j) Cp[j] = detail::poly_upper(s.p_coeffs[j], rho);
    double lead_p = detail::poly_lower(s.p_coeffs[dp], rho);
    if (lead_p <= 1e-12)
        throw NoEscapeCertificate(
            "leading z-coefficient of p cannot be bounded away from zero on the domain");
    double rp = detail::escape_radius_bound(lead_p, Cp, dp, R);
    if (rp < 0.0)
        throw NoEscapeCertificate(
            "no escape radius below R=" + std::to_string(R) +
            " for p on the domain; raise escape_radius");
    double r = rp;

    if (s.kind == FamilyKind::SkewProduct) {
        // Bound q's w-coefficients over |lambda| <= rho, |z| <= R.
        int dq = s.deg_q();
        std::vector<double> Cq(dq, 0.0);
        for (int j = 0; j < dq; ++j) {
            double b = 0.0, zr = 1.0;
            for (const auto& lp : s.q_coeffs[j]) {
                b += detail::poly_upper(lp, rho) * zr;
                zr *= R;
            }
            Cq[j] = b;
        }
        const auto& leadrow = s.q_coeffs[dq];
        double lead_q = leadrow.empty() ? 0.0 : detail::poly_lower(leadrow[0], rho);
        {
            double zr = R;
            for (std::size_t a = 1; a < leadrow.size(); ++a) {
                lead_q -= detail::poly_upper(leadrow[a], rho) * zr;
                zr *= R;
            }
        }
        if (lead_q <= 1e-12)
            throw NoEscapeCertificate(
                "leading w-coefficient of q cannot be bounded away from zero on the domain");
        double rq = detail::escape_radius_bound(lead_q, Cq, dq, R);
        if (rq < 0.0)
            throw NoEscapeCertificate(
                "no escape radius below R=" + std::to_string(R) +
                " for q on the domain; raise escape_radius");
        r = std::max(rp, rq);
    }

    FamilyGeometry g;
    g.lambda = dom.center;
    g.V_radius = R;
    g.U_escape_bound = r;
    return g;
}

/// Same certificate, reported at the four corners of the domain rectangle.
inline std::array<FamilyGeometry, 4> validate_polynomial_like(const FamilySpec& s,
                                                              const ParameterDomain& dom) {
    FamilyGeometry g = certify_geometry(s, dom);
    std::array<FamilyGeometry, 4> corners;
    const double xs[2] = {dom.center.real() - dom.half_width, dom.center.real() + dom.half_width};
    const double ys[2] = {dom.center.imag() - dom.half_height, dom.center.imag() + dom.half_height};
    int k = 0;
    for (int iy = 0; iy < 2; ++iy)
        for (int ix = 0; ix < 2; ++ix) {
            corners[k] = g;
            corners[k].lambda = {xs[ix], ys[iy]};
            ++k;
        }
    return corners;
}

} // namespace biflab

#endif
