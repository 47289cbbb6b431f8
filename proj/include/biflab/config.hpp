#ifndef BIFLAB_CONFIG_HPP
#define BIFLAB_CONFIG_HPP

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "biflab/core.hpp"
#include "biflab/errors.hpp"
#include "biflab/family.hpp"

namespace biflab {

/// Flat key-value config with dotted section keys, e.g. `sweep.depth = 30`.
/// Lines starting with `#` are comments. Complex numbers are written `re,im`,
/// bare reals mean imaginary part zero.
class KeyValueConfig {
  public:
    static KeyValueConfig parse_text(const std::string& text) {
        KeyValueConfig cfg;
        cfg.raw_text_ = text;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string t = trim(line);
            if (t.empty() || t[0] == '#') continue;
            auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
            std::string key = trim(t.substr(0, eq));
            std::string value = trim(t.substr(eq + 1));
            if (key.empty())
                throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
            cfg.entries_[key] = value;
        }
        return cfg;
    }

    static KeyValueConfig parse_file(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw ConfigError("cannot open config file: " + path);
        std::ostringstream ss;
        ss << f.rdbuf();
        return parse_text(ss.str());
    }

    bool has(const std::string& key) const { return entries_.count(key) > 0; }

    const std::string& raw_text() const { return raw_text_; }

    std::string get_string(const std::string& key) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) throw ConfigError("config: missing required field `" + key + "`");
        return it->second;
    }

    std::string get_string_or(const std::string& key, const std::string& fallback) const {
        auto it = entries_.find(key);
        return it == entries_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key) const { return to_double(key, get_string(key)); }

    double get_double_or(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }

    long get_int(const std::string& key) const {
        try {
            return std::stol(get_string(key));
        } catch (const ConfigError&) {
            throw;
        } catch (...) {
            throw ConfigError("config: field `" + key + "` is not an integer");
        }
    }

    long get_int_or(const std::string& key, long fallback) const {
        return has(key) ? get_int(key) : fallback;
    }

    cplx get_complex(const std::string& key) const { return to_complex(key, get_string(key)); }

    /// Keys `prefix.<index>` present in the config, in index order.
    std::vector<int> indexed_keys(const std::string& prefix) const {
        std::vector<int> idx;
        for (const auto& [k, v] : entries_) {
            if (k.rfind(prefix + ".", 0) != 0) continue;
            std::string tail = k.substr(prefix.size() + 1);
            if (tail.find('.') != std::string::npos) tail = tail.substr(0, tail.find('.'));
            try {
                int i = std::stoi(tail);
                bool seen = false;
                for (int e : idx) seen |= (e == i);
                if (!seen) idx.push_back(i);
            } catch (...) {
            }
        }
        std::sort(idx.begin(), idx.end());
        return idx;
    }

    /// Space-separated complex tokens (`re` or `re,im`), ascending degree.
    LambdaPoly get_poly(const std::string& key) const {
        std::istringstream ss(get_string(key));
        LambdaPoly poly;
        std::string tok;
        while (ss >> tok) poly.push_back(to_complex(key, tok));
        if (poly.empty()) throw ConfigError("config: field `" + key + "` has no coefficients");
        return poly;
    }

  private:
    static std::string trim(const std::string& s) {
        std::size_t a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        std::size_t b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }

    static double to_double(const std::string& key, const std::string& v) {
        try {
            std::size_t pos = 0;
            double d = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return d;
        } catch (...) {
            throw ConfigError("config: field `" + key + "` is not a number: `" + v + "`");
        }
    }

    static cplx to_complex(const std::string& key, const std::string& v) {
        auto comma = v.find(',');
        if (comma == std::string::npos) return {to_double(key, v), 0.0};
        return {to_double(key, v.substr(0, comma)), to_double(key, v.substr(comma + 1))};
    }

    std::map<std::string, std::string> entries_;
    std::string raw_text_;
};

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct SweepTask {
    int depth = 30;
    int count = 2000;
    bool ddc = true;          // derive the bifurcation field after the sweep
    std::string render_scale; // empty: no raster
};

struct VolumeTask {
    int n_min = 1;
    int n_max = 12;
    int gauss_nodes = 16;
    int mc_strata = 10000;
};

struct CyclesTask {
    int period = 1;
    cplx base_lambda{0.0, 0.0};
    cplx base_guess{0.0, 0.0}; // refined by Newton before continuation
    bool has_guess = false;
};

struct MisiurewiczTask {
    int n0_max = 5;
    double proximity_radius = 0.05;
};

struct CensusTask {
    cplx center{1.0, 0.0};
    double radius = 0.3;
    double rho = 1.0;
    int n_min = 6;
    int n_max = 10;
    cplx at_lambda{0.0, 0.0};
};

struct RunConfig {
    FamilySpec family;
    ParameterDomain domain;
    std::uint64_t seed = 0;
    std::string output_dir = "out";

    std::optional<SweepTask> sweep;
    std::optional<VolumeTask> volume;
    std::vector<CyclesTask> cycles;
    std::optional<MisiurewiczTask> misiurewicz;
    std::optional<CensusTask> census;

    std::string config_text; // verbatim, for hashing into the manifest
};

inline FamilySpec family_from_config(const KeyValueConfig& cfg) {
    std::string kind = cfg.get_string("family.kind");
    auto p_idx = cfg.indexed_keys("family.p");
    if (p_idx.empty()) throw ConfigError("config: missing family.p.<degree> coefficients");
    int pmax = p_idx.back();
    std::vector<LambdaPoly> p(pmax + 1, LambdaPoly{cplx{0.0, 0.0}});
    for (int i : p_idx) p[i] = cfg.get_poly("family.p." + std::to_string(i));
    double R = cfg.get_double("family.escape_radius");

    if (kind == "univariate") {
        double dstar = cfg.get_double_or("family.d_star_upper", 1.0);
        return FamilySpec::univariate(std::move(p), R, dstar);
    }
    if (kind != "skew_product")
        throw ConfigError("config: family.kind must be `univariate` or `skew_product`");

    auto w_idx = cfg.indexed_keys("family.q");
    if (w_idx.empty()) throw ConfigError("config: missing family.q.<wdeg>.<zdeg> coefficients");
    int wmax = w_idx.back();
    std::vector<std::vector<LambdaPoly>> q(wmax + 1);
    for (int j = 0; j <= wmax; ++j) {
        auto z_idx = cfg.indexed_keys("family.q." + std::to_string(j));
        int zmax = z_idx.empty() ? 0 : z_idx.back();
        q[j].assign(zmax + 1, LambdaPoly{cplx{0.0, 0.0}});
        for (int a : z_idx)
            q[j][a] = cfg.get_poly("family.q." + std::to_string(j) + "." + std::to_string(a));
    }
    double default_dstar = static_cast<double>(static_cast<int>(p.size()) - 1);
    double dstar = cfg.get_double_or("family.d_star_upper", default_dstar);
    return FamilySpec::skew_product(std::move(p), std::move(q), R, dstar);
}

inline ParameterDomain domain_from_config(const KeyValueConfig& cfg, const std::string& prefix) {
    ParameterDomain dom;
    dom.center = cfg.get_complex(prefix + ".center");
    dom.half_width = cfg.get_double(prefix + ".half_width");
    dom.half_height = cfg.get_double_or(prefix + ".half_height", dom.half_width);
    dom.grid_nx = static_cast<int>(cfg.get_int(prefix + ".nx"));
    dom.grid_ny = static_cast<int>(cfg.get_int_or(prefix + ".ny", dom.grid_nx));
    if (dom.half_width <= 0.0 || dom.half_height <= 0.0)
        throw ConfigError("config: " + prefix + " half sizes must be positive");
    if (dom.grid_nx <= 0 || dom.grid_ny <= 0)
        throw ConfigError("config: " + prefix + " grid sizes must be positive");
    return dom;
}

inline RunConfig run_config_from(const KeyValueConfig& cfg) {
    RunConfig rc;
    rc.config_text = cfg.raw_text();
    rc.family = family_from_config(cfg);
    rc.domain = domain_from_config(cfg, "domain");
    if (!cfg.has("seed"))
        throw ConfigError("config: missing required field `seed` (wall-clock seeding is not allowed)");
    rc.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
    rc.output_dir = cfg.get_string_or("output_dir", "out");

    if (cfg.has("sweep.depth") || cfg.has("sweep.count")) {
        SweepTask t;
        t.depth = static_cast<int>(cfg.get_int_or("sweep.depth", 30));
        t.count = static_cast<int>(cfg.get_int_or("sweep.count", 2000));
        t.ddc = cfg.get_string_or("sweep.ddc", "true") != "false";
        t.render_scale = cfg.get_string_or("sweep.render", "");
        if (t.depth < 2 || t.count < 2) throw ConfigError("config: sweep.depth/count too small");
        rc.sweep = t;
    }
    if (cfg.has("volume.n_max")) {
        VolumeTask t;
        t.n_min = static_cast<int>(cfg.get_int_or("volume.n_min", 1));
        t.n_max = static_cast<int>(cfg.get_int("volume.n_max"));
        t.gauss_nodes = static_cast<int>(cfg.get_int_or("volume.gauss_nodes", 16));
        t.mc_strata = static_cast<int>(cfg.get_int_or("volume.mc_strata", 10000));
        if (t.n_min < 1 || t.n_max < t.n_min) throw ConfigError("config: bad volume.n range");
        rc.volume = t;
    }
    for (int i : cfg.indexed_keys("cycles")) {
        CyclesTask t;
        std::string p = "cycles." + std::to_string(i);
        t.period = static_cast<int>(cfg.get_int(p + ".period"));
        t.base_lambda = cfg.has(p + ".base_lambda") ? cfg.get_complex(p + ".base_lambda")
                                                    : cplx{0.0, 0.0};
        if (cfg.has(p + ".base_guess")) {
            t.base_guess = cfg.get_complex(p + ".base_guess");
            t.has_guess = true;
        }
        if (t.period < 1) throw ConfigError("config: " + p + ".period must be >= 1");
        rc.cycles.push_back(t);
    }
    if (cfg.has("misiurewicz.n0_max")) {
        MisiurewiczTask t;
        t.n0_max = static_cast<int>(cfg.get_int("misiurewicz.n0_max"));
        t.proximity_radius = cfg.get_double_or("misiurewicz.proximity_radius", 0.05);
        if (t.n0_max < 1) throw ConfigError("config: misiurewicz.n0_max must be >= 1");
        rc.misiurewicz = t;
    }
    if (cfg.has("census.n_max")) {
        CensusTask t;
        t.center = cfg.get_complex("census.center");
        t.radius = cfg.get_double("census.radius");
        t.rho = cfg.get_double_or("census.rho", 1.0);
        t.n_min = static_cast<int>(cfg.get_int_or("census.n_min", 6));
        t.n_max = static_cast<int>(cfg.get_int("census.n_max"));
        t.at_lambda = cfg.has("census.lambda") ? cfg.get_complex("census.lambda") : cplx{0.0, 0.0};
        if (t.radius <= 0.0 || t.n_min < 1 || t.n_max < t.n_min)
            throw ConfigError("config: bad census block");
        rc.census = t;
    }
    return rc;
}

} // namespace biflab

#endif
