#ifndef BIFLAB_NUMERICS_HPP
#define BIFLAB_NUMERICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "biflab/core.hpp"

namespace biflab {

constexpr double kPi = 3.14159265358979323846;

/// Complex value carried as m * 2^e with |m| kept near 1, so products of
/// thousands of O(10)-sized factors never overflow.
struct ScaledCplx {
    cplx m{0.0, 0.0};
    long e = 0;

    static ScaledCplx from(const cplx& v) {
        ScaledCplx s{v, 0};
        s.renorm();
        return s;
    }

    void renorm() {
        double mag = std::abs(m);
        if (mag == 0.0 || !std::isfinite(mag)) {
            e = 0;
            return;
        }
        int k = 0;
        std::frexp(mag, &k);
        if (k > 60 || k < -60) {
            m = {std::ldexp(m.real(), -k), std::ldexp(m.imag(), -k)};
            e += k;
        }
    }

    ScaledCplx times(const cplx& a) const {
        ScaledCplx r{m * a, e};
        r.renorm();
        return r;
    }

    /// Exact-exponent addition; when the scales are too far apart for double
    /// the smaller term drops out, which is the correctly rounded result.
    static ScaledCplx sum(const ScaledCplx& x, const ScaledCplx& y) {
        if (x.m == cplx{0.0, 0.0}) return y;
        if (y.m == cplx{0.0, 0.0}) return x;
        const ScaledCplx& big = (x.e >= y.e) ? x : y;
        const ScaledCplx& small = (x.e >= y.e) ? y : x;
        long de = small.e - big.e; // <= 0
        ScaledCplx r;
        if (de < -2000) {
            r = big;
        } else {
            int k = static_cast<int>(de);
            r.m = big.m + cplx{std::ldexp(small.m.real(), k), std::ldexp(small.m.imag(), k)};
            r.e = big.e;
        }
        r.renorm();
        return r;
    }

    double log_abs() const {
        double mag = std::abs(m);
        if (mag == 0.0) return -std::numeric_limits<double>::infinity();
        return std::log(mag) + static_cast<double>(e) * 0.6931471805599453;
    }

    cplx value() const {
        return {std::ldexp(m.real(), static_cast<int>(clamp_exp())),
                std::ldexp(m.imag(), static_cast<int>(clamp_exp()))};
    }

  private:
    long clamp_exp() const { return std::clamp(e, -4000L, 4000L); }
};

/// Streaming log(sum(exp(x_i))). Order-sensitive only at the last ulp; callers
/// that need bit-exact determinism feed it in a fixed order.
class LogSumExp {
  public:
    void add(double log_term) {
        if (log_term == -std::numeric_limits<double>::infinity()) return;
        if (terms_ == 0 || log_term > max_) {
            if (terms_ > 0) acc_ = acc_ * std::exp(max_ - log_term) + 1.0;
            else acc_ = 1.0;
            max_ = log_term;
        } else {
            acc_ += std::exp(log_term - max_);
        }
        ++terms_;
    }

    double value() const {
        if (terms_ == 0) return -std::numeric_limits<double>::infinity();
        return max_ + std::log(acc_);
    }

    std::size_t terms() const { return terms_; }

  private:
    double max_ = 0.0;
    double acc_ = 0.0;
    std::size_t terms_ = 0;
};

/// log(1 + exp(t)) without overflow; used for log(1+|G|^2) from log|G|.
inline double log1p_exp(double t) {
    if (t > 36.0) return t;
    if (t < -36.0) return std::exp(t);
    return std::log1p(std::exp(t));
}

/// Gauss-Legendre nodes/weights on [-1,1], Newton-refined. n <= 128.
struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

inline GaussRule gauss_legendre(int n) {
    GaussRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        // Chebyshev-style initial guess, then Newton on P_n.
        double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
            }
            pp = n * (x * p0 - p1) / (x * x - 1.0);
            double dx = p0 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        rule.nodes[i] = x;
        rule.weights[i] = 2.0 / ((1.0 - x * x) * pp * pp);
    }
    std::reverse(rule.nodes.begin(), rule.nodes.end());
    std::reverse(rule.weights.begin(), rule.weights.end());
    return rule;
}

/// FNV-1a 64-bit content digest (hex). Stable across runs and platforms.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xCBF29CE484222325ULL) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::string fnv1a64_hex(const std::string& s) {
    std::uint64_t h = fnv1a64(s.data(), s.size());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

/// Least-squares line fit; returns slope, intercept and the slope's standard
/// error (residual-based).
struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = 0.0;
    int points = 0;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    LineFit f;
    f.points = static_cast<int>(x.size());
    if (f.points < 2) return f;
    double n = static_cast<double>(f.points);
    double mx = 0.0, my = 0.0;
    for (int i = 0; i < f.points; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (int i = 0; i < f.points; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    if (f.points > 2) {
        double ss = 0.0;
        for (int i = 0; i < f.points; ++i) {
            double r = y[i] - (f.intercept + f.slope * x[i]);
            ss += r * r;
        }
        f.slope_stderr = std::sqrt(ss / (n - 2.0) / sxx);
    }
    return f;
}

} // namespace biflab

#endif
