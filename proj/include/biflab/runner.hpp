#ifndef BIFLAB_RUNNER_HPP
#define BIFLAB_RUNNER_HPP

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "biflab/config.hpp"
#include "biflab/critical.hpp"
#include "biflab/grid_io.hpp"
#include "biflab/lyapunov.hpp"
#include "biflab/measure.hpp"
#include "biflab/misiurewicz.hpp"
#include "biflab/numerics.hpp"

namespace biflab {

struct RunManifest {
    std::string config_hash;
    struct TaskRecord {
        std::string name;
        double seconds = 0.0;
        std::vector<std::string> warnings;
    };
    std::vector<TaskRecord> tasks;
    struct ArtifactRecord {
        std::string path; // relative to the output dir
        std::string digest;
    };
    std::vector<ArtifactRecord> artifacts;
};

namespace detail {

inline std::string file_digest(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return fnv1a64_hex(ss.str());
}

inline GridData grid_from_domain(const ParameterDomain& dom, const std::vector<double>& vals) {
    GridData g;
    g.nx = dom.grid_nx;
    g.ny = dom.grid_ny;
    g.x0 = dom.x0();
    g.y0 = dom.y0();
    g.h = dom.hx();
    g.values = vals;
    return g;
}

class Stopwatch {
  public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_;
};

} // namespace detail

/// Executes the configured tasks in dependency order, writes CSV grids, PGM
/// rasters and the JSON manifest. Deterministic for a fixed (config, seed)
/// at any thread count; file writes happen on the orchestrator thread.
class Runner {
  public:
    Runner(RunConfig config, int threads, std::ostream& log = std::cerr)
        : cfg_(std::move(config)), threads_(threads), log_(log) {}

    int execute() {
        namespace fs = std::filesystem;
        fs::create_directories(cfg_.output_dir);
        manifest_.config_hash = fnv1a64_hex(cfg_.config_text);

        geom_ = certify_geometry(cfg_.family, cfg_.domain); // exit 2 on failure (CLI maps it)

        if (cfg_.sweep) run_sweep();
        if (!cfg_.cycles.empty()) run_cycles();
        if (cfg_.misiurewicz) run_misiurewicz();
        if (cfg_.volume) run_volume();
        if (cfg_.census) run_census();

        write_manifest();
        return 0;
    }

    const RunManifest& manifest() const { return manifest_; }

  private:
    std::string out_path(const std::string& rel) const {
        return (std::filesystem::path(cfg_.output_dir) / rel).string();
    }

    void record_artifact(const std::string& rel) {
        manifest_.artifacts.push_back({rel, detail::file_digest(out_path(rel))});
    }

    /// Grid cache keyed by the sweep inputs (family, domain, knobs, seed) so
    /// runs that differ only in output location share entries. BIFLAB_CACHE_DIR,
    /// if set, short-circuits recomputation with the previously written bytes.
    std::string sweep_cache_path() const {
        const char* dir = std::getenv("BIFLAB_CACHE_DIR");
        if (!dir || !*dir) return "";
        std::ostringstream key;
        key.precision(17);
        key << "kind=" << static_cast<int>(cfg_.family.kind) << "|R=" << cfg_.family.escape_radius
            << "|p=";
        for (const auto& row : cfg_.family.p_coeffs) {
            for (const auto& c : row) key << c.real() << "," << c.imag() << ";";
            key << "/";
        }
        key << "|q=";
        for (const auto& wrow : cfg_.family.q_coeffs) {
            for (const auto& row : wrow) {
                for (const auto& c : row) key << c.real() << "," << c.imag() << ";";
                key << "/";
            }
            key << "//";
        }
        key << "|dom=" << cfg_.domain.center.real() << "," << cfg_.domain.center.imag() << ","
            << cfg_.domain.half_width << "," << cfg_.domain.half_height << ","
            << cfg_.domain.grid_nx << "," << cfg_.domain.grid_ny;
        key << "|sweep=" << cfg_.sweep->depth << "," << cfg_.sweep->count << "|seed=" << cfg_.seed;
        return (std::filesystem::path(dir) / (fnv1a64_hex(key.str()) + "_L.csv")).string();
    }

    void run_sweep() {
        detail::Stopwatch timer;
        RunManifest::TaskRecord rec;
        rec.name = "sweep";

        GridData Lgrid, Egrid;
        std::string cache = sweep_cache_path();
        bool cache_hit = false;
        if (!cache.empty() && std::filesystem::exists(cache) &&
            std::filesystem::exists(cache + ".stderr")) {
            Lgrid = read_grid_csv(cache);
            Egrid = read_grid_csv(cache + ".stderr");
            cache_hit = true;
            rec.warnings.push_back("sweep loaded from cache");
        } else {
            LyapunovGrid grid = sweep_grid(cfg_.family, cfg_.domain, cfg_.sweep->depth,
                                           cfg_.sweep->count, cfg_.seed, threads_);
            std::vector<double> L(grid.cells.size()), E(grid.cells.size());
            for (std::size_t i = 0; i < grid.cells.size(); ++i) {
                L[i] = grid.cells[i].L_value;
                E[i] = grid.cells[i].std_error;
                if (!grid.cell_errors[i].empty())
                    rec.warnings.push_back("cell " + std::to_string(i) + ": " + grid.cell_errors[i]);
            }
            Lgrid = detail::grid_from_domain(cfg_.domain, L);
            Egrid = detail::grid_from_domain(cfg_.domain, E);
        }

        write_grid_csv(out_path("L.csv"), Lgrid);
        write_grid_csv(out_path("L_stderr.csv"), Egrid);
        record_artifact("L.csv");
        record_artifact("L_stderr.csv");
        if (!cache.empty() && !cache_hit) {
            std::filesystem::create_directories(std::filesystem::path(cache).parent_path());
            write_grid_csv(cache, Lgrid);
            write_grid_csv(cache + ".stderr", Egrid);
        }

        if (cfg_.sweep->ddc && cfg_.domain.grid_nx >= 3 && cfg_.domain.grid_ny >= 3) {
            BifField field = ddc_field_from_values(cfg_.domain, Lgrid.values);
            ParameterDomain interior = cfg_.domain;
            interior.grid_nx -= 2;
            interior.grid_ny -= 2;
            interior.half_width -= cfg_.domain.hx();
            interior.half_height -= cfg_.domain.hy();
            GridData ddc = detail::grid_from_domain(interior, field.laplacian);
            write_grid_csv(out_path("ddc.csv"), ddc);
            record_artifact("ddc.csv");
            if (!cfg_.sweep->render_scale.empty()) {
                RasterScale scale = parse_scale(cfg_.sweep->render_scale);
                write_pgm(out_path("bif.pgm"), ddc.nx, ddc.ny, render_bytes(ddc, scale));
                record_artifact("bif.pgm");
            }
        }
        rec.seconds = timer.seconds();
        manifest_.tasks.push_back(std::move(rec));
    }

    void run_cycles() {
        detail::Stopwatch timer;
        RunManifest::TaskRecord rec;
        rec.name = "cycles";
        tracks_.clear();
        for (std::size_t t = 0; t < cfg_.cycles.size(); ++t) {
            const CyclesTask& task = cfg_.cycles[t];
            std::vector<Point> bases;
            if (task.has_guess) {
                Point base{task.base_guess, {}};
                refine_base_guess(base, task);
                bases.push_back(base);
            } else {
                // continue every repelling point of the requested period
                CycleSet cs = find_periodic(cfg_.family, task.base_lambda, task.period,
                                            PeriodicOptions{.seed = cfg_.seed, .threads = threads_});
                for (std::size_t i = 0; i < cs.points.size() && bases.size() < 16; ++i)
                    if (cs.repelling[i]) bases.push_back(cs.points[i]);
                if (bases.empty()) {
                    rec.warnings.push_back("cycles." + std::to_string(t) +
                                           ": no repelling cycle found at the base parameter");
                    continue;
                }
            }
            for (std::size_t b = 0; b < bases.size(); ++b)
                track_one(bases[b], task, t, b, rec);
        }
        rec.seconds = timer.seconds();
        manifest_.tasks.push_back(std::move(rec));
    }

    void track_one(const Point& base, const CyclesTask& task, std::size_t t, std::size_t b,
                   RunManifest::TaskRecord& rec) {
            CycleTrack track = continue_cycle(cfg_.family, cfg_.domain, base, task.period,
                                              task.base_lambda);
            int invalid = 0;
            for (char v : track.valid) invalid += v ? 0 : 1;
            if (invalid > 0)
                rec.warnings.push_back("cycles." + std::to_string(t) + "." + std::to_string(b) +
                                       ": " + std::to_string(invalid) + " invalid cells");
            std::vector<double> re(track.z.size()), im(track.z.size()), va(track.z.size());
            for (std::size_t i = 0; i < track.z.size(); ++i) {
                re[i] = track.z[i].z.real();
                im[i] = track.z[i].z.imag();
                va[i] = track.valid[i] ? 1.0 : 0.0;
            }
            std::string stem = "track" + std::to_string(t) + "_" + std::to_string(b);
            write_grid_csv(out_path(stem + "_re.csv"), detail::grid_from_domain(cfg_.domain, re));
            write_grid_csv(out_path(stem + "_im.csv"), detail::grid_from_domain(cfg_.domain, im));
            write_grid_csv(out_path(stem + "_valid.csv"), detail::grid_from_domain(cfg_.domain, va));
            record_artifact(stem + "_re.csv");
            record_artifact(stem + "_im.csv");
            record_artifact(stem + "_valid.csv");
            tracks_.push_back(std::move(track));
    }

    void refine_base_guess(Point& base, const CyclesTask& task) {
        double res = detail::newton_periodic(cfg_.family, task.base_lambda, task.period, base,
                                             80, 1e-13);
        if (!(res < 1e-10))
            throw Error("cycles: base guess did not converge to a periodic point");
    }

    void run_misiurewicz() {
        detail::Stopwatch timer;
        RunManifest::TaskRecord rec;
        rec.name = "misiurewicz";
        ScanOptions opt;
        opt.threads = threads_;
        opt.seed = cfg_.seed;
        opt.julia_proximity_radius = cfg_.misiurewicz->proximity_radius;
        auto hits = misiurewicz_scan(cfg_.family, cfg_.domain, tracks_, cfg_.misiurewicz->n0_max, opt);
        nlohmann::json j = nlohmann::json::array();
        for (const auto& h : hits) {
            j.push_back({{"lambda_re", h.lambda_star.real()},
                         {"lambda_im", h.lambda_star.imag()},
                         {"n0", h.n0},
                         {"component", h.component_id},
                         {"cycle", h.cycle_id},
                         {"residual", h.residual},
                         {"transversality", h.transversality},
                         {"min_multiplier_modulus", h.min_mult_mod},
                         {"julia_proximity", h.julia_proximity}});
        }
        std::ofstream f(out_path("hits.json"), std::ios::binary);
        f << j.dump(2) << "\n";
        f.close();
        record_artifact("hits.json");
        if (tracks_.empty())
            rec.warnings.push_back("misiurewicz scan ran without any cycle tracks");
        rec.seconds = timer.seconds();
        manifest_.tasks.push_back(std::move(rec));
    }

    void run_volume() {
        detail::Stopwatch timer;
        RunManifest::TaskRecord rec;
        rec.name = "volume";
        MassOptions opt;
        opt.gauss_nodes = cfg_.volume->gauss_nodes;
        opt.mc_strata = cfg_.volume->mc_strata;
        opt.seed = cfg_.seed;
        opt.threads = threads_;
        VolumeSeries vs = volume_series(cfg_.family, cfg_.domain, cfg_.volume->n_min,
                                        cfg_.volume->n_max, opt, geom_);
        for (std::size_t k = 0; k < vs.escaped_flag.size(); ++k)
            if (vs.escaped_flag[k])
                rec.warnings.push_back("volume: all samples escaped at n = " +
                                       std::to_string(vs.n_min + static_cast<int>(k)));
        GridData g;
        g.nx = static_cast<int>(vs.log_mass.size());
        g.ny = 2; // row 0: log mass, row 1: kept fraction
        g.x0 = vs.n_min;
        g.y0 = 0.0;
        g.h = 1.0;
        g.values = vs.log_mass;
        g.values.insert(g.values.end(), vs.kept_fraction.begin(), vs.kept_fraction.end());
        write_grid_csv(out_path("volume.csv"), g);
        record_artifact("volume.csv");
        try {
            GrowthRate gr = growth_rate(vs);
            Stability st = classify_stability(gr, cfg_.family.d_star_upper);
            nlohmann::json j = {{"rate", gr.rate},
                                {"ci", gr.ci},
                                {"points", gr.points_used},
                                {"classification", st == Stability::Stable       ? "stable"
                                                   : st == Stability::Bifurcating ? "bifurcating"
                                                                                  : "inconclusive"}};
            std::ofstream f(out_path("growth.json"), std::ios::binary);
            f << j.dump(2) << "\n";
            f.close();
            record_artifact("growth.json");
        } catch (const Error& e) {
            rec.warnings.push_back(std::string("growth fit: ") + e.what());
        }
        rec.seconds = timer.seconds();
        manifest_.tasks.push_back(std::move(rec));
    }

    void run_census() {
        detail::Stopwatch timer;
        RunManifest::TaskRecord rec;
        rec.name = "census";
        const CensusTask& t = *cfg_.census;
        MeasureSample probe = sample_equilibrium(cfg_.family, t.at_lambda, 30, 2000,
                                                 splitmix64_key(cfg_.seed, 0xCE5505),
                                                 SampleOptions{-1, 5, 10, threads_});
        CensusOptions copt;
        copt.threads = threads_;
        nlohmann::json j = nlohmann::json::array();
        for (int n = t.n_min; n <= t.n_max; ++n) {
            InverseBranchCensus c = inverse_branch_census(cfg_.family, t.at_lambda,
                                                          Point{t.center, {}}, t.radius, t.rho, n,
                                                          probe, copt);
            j.push_back({{"n", n}, {"count", c.count}, {"ratio", c.ratio}});
        }
        std::ofstream f(out_path("census.json"), std::ios::binary);
        f << j.dump(2) << "\n";
        f.close();
        record_artifact("census.json");
        rec.seconds = timer.seconds();
        manifest_.tasks.push_back(std::move(rec));
    }

    void write_manifest() {
        nlohmann::json j;
        j["config_hash"] = manifest_.config_hash;
        j["tasks"] = nlohmann::json::array();
        for (const auto& t : manifest_.tasks)
            j["tasks"].push_back({{"name", t.name}, {"seconds", t.seconds}, {"warnings", t.warnings}});
        j["artifacts"] = nlohmann::json::array();
        for (const auto& a : manifest_.artifacts)
            j["artifacts"].push_back({{"path", a.path}, {"digest", a.digest}});
        std::ofstream f(out_path("manifest.json"), std::ios::binary);
        f << j.dump(2) << "\n";
    }

    RunConfig cfg_;
    int threads_;
    std::ostream& log_;
    FamilyGeometry geom_;
    RunManifest manifest_;
    std::vector<CycleTrack> tracks_;
};

} // namespace biflab

#endif
