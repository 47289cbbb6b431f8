#include <catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "biflab/config.hpp"
#include "biflab/grid_io.hpp"
#include "biflab/rng.hpp"

using namespace biflab;
using Catch::Approx;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("grid csv round trip is bit exact") {
    Rng rng(2024);
    GridData g;
    g.nx = 7;
    g.ny = 5;
    g.x0 = -1.2345678901234567;
    g.y0 = 0.1;
    g.h = 0.0625;
    for (int k = 0; k < 35; ++k) {
        double v = rng.uniform(-1e3, 1e3);
        if (k % 9 == 0) v = rng.uniform(-1e-300, 1e-300); // denormal-adjacent
        if (k % 11 == 0) v *= 1e12;
        g.values.push_back(v);
    }
    std::string p1 = temp_path("biflab_grid_a.csv");
    write_grid_csv(p1, g);
    GridData back = read_grid_csv(p1);
    REQUIRE(back.nx == g.nx);
    REQUIRE(back.ny == g.ny);
    REQUIRE(back.x0 == g.x0);
    REQUIRE(back.y0 == g.y0);
    REQUIRE(back.h == g.h);
    for (int k = 0; k < 35; ++k) REQUIRE(back.values[k] == g.values[k]);

    std::string p2 = temp_path("biflab_grid_b.csv");
    write_grid_csv(p2, back);
    REQUIRE(slurp(p1) == slurp(p2));
}

TEST_CASE("malformed grids are rejected") {
    REQUIRE_THROWS_AS(parse_grid_csv("1,2\n3,4\n"), MalformedGrid);
    REQUIRE_THROWS_AS(parse_grid_csv("# 2 2 0 0 1\n1,2\n"), MalformedGrid);
    REQUIRE_THROWS_AS(parse_grid_csv("# 2 2 0 0 1\n1,x\n3,4\n"), MalformedGrid);
    REQUIRE_THROWS_AS(parse_grid_csv("# 0 2 0 0 1\n"), MalformedGrid);
}

TEST_CASE("render scalings") {
    SECTION("constant grid: linear 0, signed 128") {
        GridData g;
        g.nx = g.ny = 3;
        g.h = 1.0;
        g.values.assign(9, 4.2);
        auto lin = render_bytes(g, RasterScale::Linear);
        auto sgn = render_bytes(g, RasterScale::Signed);
        for (auto b : lin) REQUIRE(b == 0);
        for (auto b : sgn) REQUIRE(b == 128);
    }
    SECTION("2x2 min-max example") {
        GridData g;
        g.nx = g.ny = 2;
        g.h = 1.0;
        g.values = {0.0, 1.0, 2.0, 3.0};
        auto px = render_bytes(g, RasterScale::Linear);
        REQUIRE(px == std::vector<std::uint8_t>{0, 85, 170, 255});
    }
    SECTION("signed maps zero to 128 and is symmetric") {
        GridData g;
        g.nx = 3;
        g.ny = 1;
        g.h = 1.0;
        g.values = {-2.0, 0.0, 2.0};
        auto px = render_bytes(g, RasterScale::Signed);
        REQUIRE(px[1] == 128);
        REQUIRE(px[0] == 1);
        REQUIRE(px[2] == 255);
    }
    SECTION("log scaling is monotone") {
        GridData g;
        g.nx = 4;
        g.ny = 1;
        g.h = 1.0;
        g.values = {0.0, 0.1, 10.0, 1000.0};
        auto px = render_bytes(g, RasterScale::Log);
        REQUIRE(px[0] <= px[1]);
        REQUIRE(px[1] <= px[2]);
        REQUIRE(px[2] <= px[3]);
        REQUIRE(px[3] == 255);
    }
}

TEST_CASE("pgm writer emits a canonical P5 header") {
    std::string path = temp_path("biflab_test.pgm");
    write_pgm(path, 3, 2, {0, 1, 2, 3, 4, 255});
    std::string data = slurp(path);
    REQUIRE(data.substr(0, 3) == "P5\n");
    REQUIRE(data == std::string("P5\n3 2\n255\n") + std::string("\x00\x01\x02\x03\x04\xff", 6));
}

TEST_CASE("config parsing") {
    SECTION("quadratic family") {
        auto cfg = KeyValueConfig::parse_text(
            "family.kind = univariate\n"
            "family.p.0 = 0 1\n"
            "family.p.2 = 1\n"
            "family.escape_radius = 3.0\n"
            "domain.center = -1.0,0.0\n"
            "domain.half_width = 1.5\n"
            "domain.nx = 8\n"
            "seed = 42\n");
        RunConfig rc = run_config_from(cfg);
        REQUIRE(rc.family.kind == FamilyKind::Univariate);
        REQUIRE(rc.family.d_t == 2);
        REQUIRE(rc.family.p_coeffs[0].size() == 2);
        REQUIRE(rc.family.p_coeffs[0][1] == cplx{1, 0});
        REQUIRE(rc.domain.center == cplx{-1.0, 0.0});
        REQUIRE(rc.domain.grid_ny == 8); // defaults to nx
        REQUIRE(rc.seed == 42);
        REQUIRE(!rc.sweep.has_value());
    }
    SECTION("missing seed names the field") {
        auto cfg = KeyValueConfig::parse_text(
            "family.kind = univariate\n"
            "family.p.0 = 0 1\n"
            "family.p.2 = 1\n"
            "family.escape_radius = 3.0\n"
            "domain.center = 0\n"
            "domain.half_width = 1\n"
            "domain.nx = 4\n");
        try {
            run_config_from(cfg);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            REQUIRE(std::string(e.what()).find("seed") != std::string::npos);
        }
    }
    SECTION("skew product coefficient table") {
        auto cfg = KeyValueConfig::parse_text(
            "family.kind = skew_product\n"
            "family.p.0 = 0 1\n"
            "family.p.2 = 1\n"
            "family.q.0.1 = 1\n"
            "family.q.2.0 = 1\n"
            "family.escape_radius = 6.0\n"
            "family.d_star_upper = 2.0\n"
            "domain.center = 0\n"
            "domain.half_width = 0.1\n"
            "domain.nx = 4\n"
            "seed = 1\n"
            "sweep.depth = 20\n"
            "sweep.count = 100\n");
        RunConfig rc = run_config_from(cfg);
        REQUIRE(rc.family.kind == FamilyKind::SkewProduct);
        REQUIRE(rc.family.d_t == 4);
        REQUIRE(rc.family.d_star_upper == 2.0);
        REQUIRE(rc.sweep.has_value());
        REQUIRE(rc.sweep->depth == 20);
    }
    SECTION("complex tokens and comments") {
        auto cfg = KeyValueConfig::parse_text("# comment line\nx.y = 1.5,-2.5\n");
        REQUIRE(cfg.get_complex("x.y") == cplx{1.5, -2.5});
        REQUIRE_THROWS_AS(cfg.get_double("absent"), ConfigError);
        REQUIRE_THROWS_AS(KeyValueConfig::parse_text("no equals sign\n"), ConfigError);
    }
    SECTION("task blocks") {
        auto cfg = KeyValueConfig::parse_text(
            "family.kind = univariate\n"
            "family.p.0 = 0 1\n"
            "family.p.2 = 1\n"
            "family.escape_radius = 6.0\n"
            "domain.center = -2\n"
            "domain.half_width = 0.1\n"
            "domain.nx = 6\n"
            "seed = 3\n"
            "volume.n_min = 2\n"
            "volume.n_max = 9\n"
            "cycles.0.period = 1\n"
            "cycles.0.base_lambda = -2\n"
            "misiurewicz.n0_max = 4\n"
            "census.center = 1\n"
            "census.radius = 0.3\n"
            "census.n_max = 6\n");
        RunConfig rc = run_config_from(cfg);
        REQUIRE(rc.volume.has_value());
        REQUIRE(rc.volume->n_min == 2);
        REQUIRE(rc.cycles.size() == 1);
        REQUIRE(rc.cycles[0].base_lambda == cplx{-2, 0});
        REQUIRE(rc.misiurewicz.has_value());
        REQUIRE(rc.census.has_value());
        REQUIRE(rc.census->n_min == 6);
    }
}

TEST_CASE("fnv1a digests are stable") {
    REQUIRE(fnv1a64_hex("") == "cbf29ce484222325");
    REQUIRE(fnv1a64_hex("a") != fnv1a64_hex("b"));
    REQUIRE(fnv1a64_hex("biflab") == fnv1a64_hex("biflab"));
}
