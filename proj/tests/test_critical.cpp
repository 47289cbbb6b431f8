#include <catch_amalgamated.hpp>

#include <cmath>

#include "biflab/critical.hpp"
#include "biflab/lyapunov.hpp"

using namespace biflab;
using Catch::Approx;

namespace {

FamilySpec quadratic(double R = 6.0) {
    return FamilySpec::univariate({{cplx{0, 0}, cplx{1, 0}}, {}, {cplx{1, 0}}}, R);
}

FamilySpec pure_square(double R = 2.0) {
    return FamilySpec::univariate({{}, {}, {cplx{1, 0}}}, R);
}

FamilySpec cubic_pz(double R = 6.0) {
    // z^3 + lambda z
    return FamilySpec::univariate({{}, {cplx{0, 0}, cplx{1, 0}}, {}, {cplx{1, 0}}}, R);
}

FamilySpec skew(double R = 6.0) {
    return FamilySpec::skew_product({{cplx{0, 0}, cplx{1, 0}}, {}, {cplx{1, 0}}},
                                    {{{cplx{0, 0}}, {cplx{1, 0}}}, {}, {{cplx{1, 0}}}}, R, 2.0);
}

ParameterDomain window(cplx center, double side) {
    ParameterDomain w;
    w.center = center;
    w.half_width = w.half_height = side / 2.0;
    return w;
}

} // namespace

TEST_CASE("critical components") {
    SECTION("z^2 + lambda: single fiber point at 0") {
        auto comps = critical_components(quadratic(), {0.3, -0.1});
        REQUIRE(comps.size() == 1);
        REQUIRE(comps[0].kind == CriticalComponent::Kind::FiberPoint);
        REQUIRE(std::abs(comps[0].location) < 1e-12);
        REQUIRE(comps[0].multiplicity == 1);
    }
    SECTION("z^3 + lambda z: fiber points at +-sqrt(-lambda/3)") {
        cplx lambda{-3.0, 0.0};
        auto comps = critical_components(cubic_pz(), lambda);
        REQUIRE(comps.size() == 2);
        bool plus = false, minus = false;
        for (const auto& c : comps) {
            if (std::abs(c.location - cplx{1, 0}) < 1e-9) plus = true;
            if (std::abs(c.location - cplx{-1, 0}) < 1e-9) minus = true;
            REQUIRE(std::abs(jacobian(cubic_pz(), lambda, Point{c.location, {}})) < 1e-8);
        }
        REQUIRE((plus && minus));
    }
    SECTION("skew product: z- and w-critical curves") {
        auto comps = critical_components(skew(), {0.1, 0.0});
        REQUIRE(comps.size() == 2);
        bool zc = false, wc = false;
        for (const auto& c : comps) {
            if (c.kind == CriticalComponent::Kind::ZCritCurve) {
                zc = true;
                REQUIRE(std::abs(c.location) < 1e-12);
            }
            if (c.kind == CriticalComponent::Kind::WCritCurve) {
                wc = true;
                REQUIRE(std::abs(c.location) < 1e-12);
            }
            REQUIRE(c.multiplicity == 1);
        }
        REQUIRE((zc && wc));
    }
}

TEST_CASE("pushforward mass closed forms on the unit square") {
    FamilySpec q = quadratic(16.0);
    ParameterDomain w = window({0.5, 0.5}, 1.0);
    FamilyGeometry g = certify_geometry(q, w);
    MassOptions opt;
    opt.gauss_nodes = 24;

    SECTION("n = 1: integrand 1 + |1|^2, mass = 2") {
        MassResult r = pushforward_mass(q, w, 1, opt, g);
        REQUIRE(std::exp(r.log_mass) == Approx(2.0).epsilon(1e-10));
        REQUIRE(r.kept_fraction == 1.0);
    }
    SECTION("n = 2: mass = 20/3") {
        MassResult r = pushforward_mass(q, w, 2, opt, g);
        REQUIRE(std::exp(r.log_mass) == Approx(20.0 / 3.0).epsilon(1e-10));
    }
    SECTION("Gauss node count does not change polynomial-exact results") {
        MassOptions lo;
        lo.gauss_nodes = 8;
        MassOptions hi;
        hi.gauss_nodes = 32;
        double a = pushforward_mass(q, w, 2, lo, g).log_mass;
        double b = pushforward_mass(q, w, 2, hi, g).log_mass;
        REQUIRE(std::exp(a) == Approx(std::exp(b)).epsilon(1e-10));
    }
}

TEST_CASE("pushforward mass vs composite Simpson oracle (n = 3, no clipping)") {
    FamilySpec q = quadratic(16.0);
    ParameterDomain w = window({0.1, 0.1}, 0.2);
    FamilyGeometry g = certify_geometry(q, w);
    MassOptions opt;
    opt.gauss_nodes = 24;
    MassResult r = pushforward_mass(q, w, 3, opt, g);

    // independent quadrature of 1 + |g3'(lambda)|^2, g3 = ((l^2+l)^2+l)
    auto integrand = [](cplx l) {
        cplx g2 = l * l + l;
        cplx d2 = 2.0 * l + 1.0;
        cplx d3 = 2.0 * g2 * d2 + 1.0;
        return 1.0 + std::norm(d3);
    };
    int m = 256; // Simpson nodes per axis (even)
    double hx = 2.0 * w.half_width / m, hy = 2.0 * w.half_height / m;
    double sum = 0.0;
    for (int j = 0; j <= m; ++j)
        for (int i = 0; i <= m; ++i) {
            double wx = (i == 0 || i == m) ? 1.0 : (i % 2 ? 4.0 : 2.0);
            double wy = (j == 0 || j == m) ? 1.0 : (j % 2 ? 4.0 : 2.0);
            cplx l{w.center.real() - w.half_width + i * hx,
                   w.center.imag() - w.half_height + j * hy};
            sum += wx * wy * integrand(l);
        }
    double oracle = sum * hx * hy / 9.0;
    REQUIRE(std::exp(r.log_mass) == Approx(oracle).epsilon(1e-8));
}

TEST_CASE("skew-product Monte Carlo mass against the clipped closed form") {
    FamilySpec sk = skew(6.0);
    ParameterDomain w = window({0, 0}, 0.02);
    FamilyGeometry g = certify_geometry(sk, w);
    double r = g.U_escape_bound;
    MassOptions opt;
    opt.mc_strata = 40000;
    opt.seed = 5;
    MassResult res = pushforward_mass(sk, w, 1, opt, g);
    double area_lambda = 4.0 * w.half_width * w.half_height;
    // z-curve {z=0}: image (lambda, w^2), |det D|^2 = 4|w|^2, kept on |w| <= sqrt(r):
    //   integral = 2 pi r^2. w-curve {w=0}: image (z^2+lambda, z), |det D|^2 = 1,
    //   kept on |z^2 + lambda| <= r: integral ~ pi r.
    double expected = area_lambda * (2.0 * kPi * r * r + kPi * r);
    REQUIRE(std::exp(res.log_mass) == Approx(expected).epsilon(0.05));
}

TEST_CASE("volume series matches per-n pushforward masses") {
    FamilySpec q = quadratic(6.0);
    ParameterDomain w = window({-2, 0}, 0.2);
    FamilyGeometry g = certify_geometry(q, w);
    MassOptions opt;
    opt.gauss_nodes = 12;
    VolumeSeries vs = volume_series(q, w, 1, 6, opt, g);
    for (int n = 1; n <= 6; ++n) {
        MassResult r = pushforward_mass(q, w, n, opt, g);
        if (r.all_escaped) {
            REQUIRE(vs.escaped_flag[n - 1] != 0);
        } else {
            REQUIRE(vs.log_mass[n - 1] == Approx(r.log_mass).margin(1e-12));
        }
    }
}

TEST_CASE("growth rate fitting") {
    SECTION("exact linear series recovers the slope") {
        VolumeSeries vs;
        vs.n_min = 1;
        vs.n_max = 12;
        for (int n = 1; n <= 12; ++n) vs.log_mass.push_back(n * std::log(2.0));
        GrowthRate g = growth_rate(vs);
        REQUIRE(g.rate == Approx(std::log(2.0)).margin(1e-12));
        REQUIRE(g.ci == Approx(0.0).margin(1e-10));
    }
    SECTION("bounded perturbation stays within 0.2") {
        VolumeSeries vs;
        vs.n_min = 1;
        vs.n_max = 14;
        for (int n = 1; n <= 14; ++n) vs.log_mass.push_back(n * std::log(2.0) + std::sin(n));
        GrowthRate g = growth_rate(vs);
        REQUIRE(g.rate > std::log(2.0) - 0.2);
        REQUIRE(g.rate < std::log(2.0) + 0.2);
    }
    SECTION("too few points") {
        VolumeSeries vs;
        vs.n_min = 1;
        vs.n_max = 6;
        for (int n = 1; n <= 6; ++n) vs.log_mass.push_back(static_cast<double>(n));
        REQUIRE_THROWS_AS(growth_rate(vs), InsufficientPoints); // last half = 3 points
    }
}

TEST_CASE("stability classification") {
    REQUIRE(classify_stability({std::log(2.0), 0.05, 8}, 1.0) == Stability::Bifurcating);
    REQUIRE(classify_stability({0.1, 0.05, 8}, 1.0) == Stability::Bifurcating);
    REQUIRE(classify_stability({-0.3, 0.1, 8}, 1.0) == Stability::Stable);
    REQUIRE(classify_stability({0.02, 0.05, 8}, 1.0) == Stability::Inconclusive);
}

TEST_CASE("mass-theorem slope bounds at desk scale") {
    FamilySpec q = quadratic(6.0);

    // reference bifurcation fields for the two windows
    auto ddc_mass_of = [&](cplx center, double side) {
        ParameterDomain dom = window(center, side);
        dom.grid_nx = dom.grid_ny = 16;
        LyapunovGrid grid = sweep_grid(q, dom, 25, 1500, 77, 2);
        BifField f = ddc_field(grid);
        return std::abs(f.total_mass());
    };
    double active_mass = ddc_mass_of({-2, 0}, 0.4);
    double stable_mass = ddc_mass_of({-0.1, 0}, 0.2);
    double noise_floor = 3.0 * stable_mass;

    SECTION("active window: ddc mass above the floor and rate >= log d_t - 0.2") {
        REQUIRE(active_mass > noise_floor);
        ParameterDomain w = window({-2, 0}, 0.2);
        FamilyGeometry g = certify_geometry(q, w);
        MassOptions opt;
        opt.gauss_nodes = 17; // odd: keeps the real-antenna quadrature row alive
        opt.threads = 2;
        VolumeSeries vs = volume_series(q, w, 1, 16, opt, g);
        GrowthRate gr = growth_rate(vs);
        REQUIRE(gr.rate >= std::log(2.0) - 0.2);
    }
    SECTION("stable window: rate <= log d_star_upper + 0.2") {
        ParameterDomain w = window({-0.1, 0}, 0.2);
        FamilyGeometry g = certify_geometry(q, w);
        MassOptions opt;
        opt.gauss_nodes = 16;
        opt.threads = 2;
        VolumeSeries vs = volume_series(q, w, 1, 16, opt, g);
        GrowthRate gr = growth_rate(vs);
        REQUIRE(gr.rate <= std::log(1.0) + 0.2);
        REQUIRE(vs.kept_fraction.back() == 1.0); // nothing escapes in the stable window
    }
}

TEST_CASE("inverse branch census") {
    FamilySpec sq = pure_square();
    MeasureSample probe = sample_equilibrium(sq, {0, 0}, 30, 2000, 3);
    CensusOptions opt;
    opt.threads = 2;
    Point a0{{1, 0}, {}};

    SECTION("n = 1: only the principal square-root branch lands in A") {
        InverseBranchCensus c = inverse_branch_census(sq, {0, 0}, a0, 0.3, 1.0, 1, probe, opt);
        REQUIRE(c.count == 1);
    }
    SECTION("n = 6..10: ratio stays positive, stable, and near the oracle") {
        double ratio6 = 0.0;
        for (int n = 6; n <= 10; ++n) {
            InverseBranchCensus c = inverse_branch_census(sq, {0, 0}, a0, 0.3, 1.0, n, probe, opt);
            // roots-of-unity oracle: branch images cluster at the 2^n-th roots
            // of unity; margins account for the O(radius/2^n) image size
            long d = 1L << n;
            long lo = 0, hi = 0;
            for (long k = 0; k < d; ++k) {
                double th = 2.0 * kPi * k / d;
                double dd = std::abs(cplx{std::cos(th) - 1.0, std::sin(th)});
                if (dd < 0.3 - 1.8 / d) ++lo;
                if (dd < 0.3 + 1.8 / d) ++hi;
            }
            REQUIRE(c.count >= lo);
            REQUIRE(c.count <= hi);
            REQUIRE(c.ratio > 0.0);
            if (n == 6) ratio6 = c.ratio;
            REQUIRE(c.ratio >= 0.5 * ratio6);
            REQUIRE(c.ratio <= 2.0 * ratio6);
        }
    }
    SECTION("count is monotone in rho and radius") {
        InverseBranchCensus base = inverse_branch_census(sq, {0, 0}, a0, 0.3, 1.0, 7, probe, opt);
        InverseBranchCensus tighter_rho =
            inverse_branch_census(sq, {0, 0}, a0, 0.3, 0.05, 7, probe, opt);
        InverseBranchCensus smaller_ball =
            inverse_branch_census(sq, {0, 0}, a0, 0.2, 1.0, 7, probe, opt);
        REQUIRE(tighter_rho.count <= base.count);
        REQUIRE(smaller_ball.count <= base.count);
    }
    SECTION("ball disjoint from the Julia set is rejected") {
        REQUIRE_THROWS_AS(
            inverse_branch_census(sq, {0, 0}, Point{{0.2, 0}, {}}, 0.1, 1.0, 3, probe, opt),
            PreconditionViolation);
    }
    SECTION("branch cap") {
        REQUIRE_THROWS_AS(inverse_branch_census(sq, {0, 0}, a0, 0.3, 1.0, 30, probe, opt),
                          BranchCapExceeded);
    }
}

TEST_CASE("census works for the skew product at small n") {
    FamilySpec sk = skew(6.0);
    MeasureSample probe = sample_equilibrium(sk, {0, 0}, 25, 1500, 13);
    // center the ball on a sampled point so the precondition holds
    Point a0 = probe.points.front();
    CensusOptions opt;
    opt.threads = 2;
    InverseBranchCensus c = inverse_branch_census(sk, {0, 0}, a0, 0.4, 1.0, 3, probe, opt);
    REQUIRE(c.count >= 0);
    REQUIRE(c.count <= 64);
}
