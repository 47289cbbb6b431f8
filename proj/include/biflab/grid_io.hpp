#ifndef BIFLAB_GRID_IO_HPP
#define BIFLAB_GRID_IO_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "biflab/errors.hpp"

namespace biflab {

/// Row-major grid with the CSV header `# nx ny x0 y0 h`. Values print with 17
/// significant digits so a write/read round trip is bit-exact for doubles.
struct GridData {
    int nx = 0, ny = 0;
    double x0 = 0.0, y0 = 0.0, h = 0.0;
    std::vector<double> values; // ny rows of nx

    double at(int i, int j) const { return values[static_cast<std::size_t>(j) * nx + i]; }
};

inline std::string format_grid_csv(const GridData& g) {
    std::string out;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "# %d %d %.17g %.17g %.17g\n", g.nx, g.ny, g.x0, g.y0, g.h);
    out += buf;
    for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", g.at(i, j));
            out += buf;
            out += (i + 1 < g.nx) ? "," : "";
        }
        out += "\n";
    }
    return out;
}

inline void write_grid_csv(const std::string& path, const GridData& g) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open for writing: " + path);
    f << format_grid_csv(g);
}

inline GridData parse_grid_csv(const std::string& text) {
    GridData g;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.empty() || line[0] != '#')
        throw MalformedGrid("grid csv: missing `# nx ny x0 y0 h` header");
    {
        std::istringstream hs(line.substr(1));
        if (!(hs >> g.nx >> g.ny >> g.x0 >> g.y0 >> g.h) || g.nx <= 0 || g.ny <= 0)
            throw MalformedGrid("grid csv: bad header: " + line);
    }
    g.values.reserve(static_cast<std::size_t>(g.nx) * g.ny);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            try {
                g.values.push_back(std::stod(cell));
            } catch (...) {
                throw MalformedGrid("grid csv: bad value `" + cell + "`");
            }
        }
    }
    if (g.values.size() != static_cast<std::size_t>(g.nx) * g.ny)
        throw MalformedGrid("grid csv: expected " + std::to_string(g.nx * g.ny) + " values, got " +
                            std::to_string(g.values.size()));
    return g;
}

inline GridData read_grid_csv(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw MalformedGrid("cannot open grid: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_grid_csv(ss.str());
}

// ---------------------------------------------------------------------------
// PGM rendering
// ---------------------------------------------------------------------------

enum class RasterScale { Linear, Log, Signed };

inline RasterScale parse_scale(const std::string& s) {
    if (s == "linear") return RasterScale::Linear;
    if (s == "log") return RasterScale::Log;
    if (s == "signed") return RasterScale::Signed;
    throw ConfigError("render: unknown scale `" + s + "` (linear|log|signed)");
}

/// 8-bit min-max normalization. linear: [min,max] -> [0,255] (flat grid -> 0).
/// log: same on log(v - min + eps) with eps = 1e-9 * range. signed: symmetric
/// about zero, 0 -> 128.
inline std::vector<std::uint8_t> render_bytes(const GridData& g, RasterScale scale) {
    std::vector<std::uint8_t> px(g.values.size(), 0);
    double lo = g.values.empty() ? 0.0 : g.values[0];
    double hi = lo;
    for (double v : g.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double range = hi - lo;
    auto clamp255 = [](double v) {
        return static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, std::round(v))));
    };
    switch (scale) {
        case RasterScale::Linear:
            for (std::size_t k = 0; k < g.values.size(); ++k)
                px[k] = range > 0.0 ? clamp255(255.0 * (g.values[k] - lo) / range) : 0;
            break;
        case RasterScale::Log: {
            double eps = range > 0.0 ? 1e-9 * range : 1.0;
            double llo = std::log(eps), lhi = std::log(range + eps);
            for (std::size_t k = 0; k < g.values.size(); ++k) {
                if (range <= 0.0) {
                    px[k] = 0;
                    continue;
                }
                double t = (std::log(g.values[k] - lo + eps) - llo) / (lhi - llo);
                px[k] = clamp255(255.0 * t);
            }
            break;
        }
        case RasterScale::Signed: {
            double m = std::max(std::abs(lo), std::abs(hi));
            for (std::size_t k = 0; k < g.values.size(); ++k) {
                if (range <= 0.0 || m <= 0.0) {
                    px[k] = 128; // constant grids sit at the zero gray
                    continue;
                }
                px[k] = clamp255(128.0 + 127.0 * g.values[k] / m);
            }
            break;
        }
    }
    return px;
}

/// Binary PGM (P5), row-major, maxval 255.
inline void write_pgm(const std::string& path, int width, int height,
                      const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open for writing: " + path);
    f << "P5\n" << width << " " << height << "\n255\n";
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

inline void render_grid_to_pgm(const std::string& grid_path, RasterScale scale,
                               const std::string& out_path) {
    GridData g = read_grid_csv(grid_path);
    write_pgm(out_path, g.nx, g.ny, render_bytes(g, scale));
}

} // namespace biflab

#endif
