#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "biflab/grid_io.hpp"
#include "biflab/numerics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kExe = BIFLAB_EXE_PATH;
const std::string kConfigDir = BIFLAB_CONFIG_DIR;

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

int run_cmd(const std::string& cmd) {
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

/// Copy the demo config with a different output dir (and optional extra keys).
std::string make_config(const fs::path& dir, const std::string& out_dir,
                        const std::string& extra = "") {
    std::string text = slurp(kConfigDir + "/quadratic_demo.cfg");
    std::istringstream in(text);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("output_dir", 0) == 0) continue;
        out << line << "\n";
    }
    out << "output_dir = " << out_dir << "\n" << extra;
    fs::create_directories(dir);
    std::string path = (dir / "cfg.cfg").string();
    std::ofstream f(path, std::ios::binary);
    f << out.str();
    return path;
}

} // namespace

TEST_CASE("cli run produces the demo artifacts with matching digests") {
    fs::path work = fs::temp_directory_path() / "biflab_cli_run";
    fs::remove_all(work);
    std::string cfg = make_config(work, (work / "out").string());
    REQUIRE(run_cmd(kExe + " run " + cfg + " --threads 2 > /dev/null 2>&1") == 0);

    json manifest = json::parse(slurp((work / "out" / "manifest.json").string()));
    REQUIRE(manifest.contains("config_hash"));
    REQUIRE(manifest["artifacts"].size() >= 4);
    bool saw_L = false, saw_pgm = false;
    for (const auto& a : manifest["artifacts"]) {
        std::string rel = a["path"];
        std::string digest = a["digest"];
        std::string content = slurp((work / "out" / rel).string());
        REQUIRE(biflab::fnv1a64_hex(content) == digest);
        saw_L |= rel == "L.csv";
        saw_pgm |= rel == "bif.pgm";
    }
    REQUIRE(saw_L);
    REQUIRE(saw_pgm);
    // hits were written (content checked by the misiurewicz suites)
    REQUIRE(fs::exists(work / "out" / "hits.json"));
}

TEST_CASE("determinism: same config and seed are byte-identical at thread counts 1 and 8") {
    fs::path work = fs::temp_directory_path() / "biflab_cli_det";
    fs::remove_all(work);
    std::string cfg1 = make_config(work / "a", (work / "a" / "out").string());
    std::string cfg8 = make_config(work / "b", (work / "b" / "out").string());
    REQUIRE(run_cmd(kExe + " run " + cfg1 + " --threads 1 > /dev/null 2>&1") == 0);
    REQUIRE(run_cmd(kExe + " run " + cfg8 + " --threads 8 > /dev/null 2>&1") == 0);

    json m1 = json::parse(slurp((work / "a" / "out" / "manifest.json").string()));
    json m8 = json::parse(slurp((work / "b" / "out" / "manifest.json").string()));
    REQUIRE(m1["artifacts"].size() == m8["artifacts"].size());
    for (std::size_t i = 0; i < m1["artifacts"].size(); ++i) {
        std::string rel = m1["artifacts"][i]["path"];
        REQUIRE(std::string(m8["artifacts"][i]["path"]) == rel);
        REQUIRE(slurp((work / "a" / "out" / rel).string()) ==
                slurp((work / "b" / "out" / rel).string()));
    }
}

TEST_CASE("seed override changes the grids") {
    fs::path work = fs::temp_directory_path() / "biflab_cli_seed";
    fs::remove_all(work);
    std::string cfg = make_config(work, (work / "out").string());
    REQUIRE(run_cmd(kExe + " run " + cfg + " --threads 2 > /dev/null 2>&1") == 0);
    std::string l_a = slurp((work / "out" / "L.csv").string());
    REQUIRE(run_cmd(kExe + " run " + cfg + " --threads 2 --seed 555 > /dev/null 2>&1") == 0);
    std::string l_b = slurp((work / "out" / "L.csv").string());
    REQUIRE(l_a != l_b);
}

TEST_CASE("config errors exit with code 1 and name the field") {
    fs::path work = fs::temp_directory_path() / "biflab_cli_err";
    fs::remove_all(work);
    fs::create_directories(work);
    std::string bad = (work / "bad.cfg").string();
    {
        std::ofstream f(bad);
        f << "family.kind = univariate\nfamily.p.0 = 0 1\nfamily.p.2 = 1\n"
          << "family.escape_radius = 3.0\ndomain.center = 0\ndomain.half_width = 1\n"
          << "domain.nx = 4\n"; // no seed
    }
    std::string errfile = (work / "stderr.txt").string();
    int rc = run_cmd(kExe + " run " + bad + " 2> " + errfile);
    REQUIRE(rc == 1);
    REQUIRE(slurp(errfile).find("seed") != std::string::npos);
}

TEST_CASE("geometry failures exit with code 2") {
    fs::path work = fs::temp_directory_path() / "biflab_cli_geom";
    fs::remove_all(work);
    std::string cfg =
        make_config(work, (work / "out").string(), "family.escape_radius = 0.5\n");
    // later duplicate keys win in the flat config, shrinking R below certifiability
    std::string errfile = (work / "stderr.txt").string();
    int rc = run_cmd(kExe + " run " + cfg + " 2> " + errfile);
    REQUIRE(rc == 2);
    REQUIRE(slurp(errfile).find("escape") != std::string::npos);
}

TEST_CASE("render subcommand") {
    fs::path work = fs::temp_directory_path() / "biflab_cli_render";
    fs::remove_all(work);
    fs::create_directories(work);
    biflab::GridData g;
    g.nx = 2;
    g.ny = 2;
    g.h = 1.0;
    g.values = {0.0, 1.0, 2.0, 3.0};
    std::string grid = (work / "g.csv").string();
    biflab::write_grid_csv(grid, g);
    std::string out = (work / "g.pgm").string();
    REQUIRE(run_cmd(kExe + " render " + grid + " --scale linear -o " + out + " > /dev/null 2>&1") ==
            0);
    std::string pgm = slurp(out);
    REQUIRE(pgm == std::string("P5\n2 2\n255\n") + std::string("\x00\x55\xaa\xff", 4));
    REQUIRE(run_cmd(kExe + " render " + grid + " --scale bogus -o " + out + " > /dev/null 2>&1") ==
            1);
}

TEST_CASE("grid cache short-circuits the sweep") {
    fs::path work = fs::temp_directory_path() / "biflab_cli_cache";
    fs::remove_all(work);
    fs::path cache = work / "cache";
    fs::create_directories(cache);
    std::string cfg1 = make_config(work / "a", (work / "a" / "out").string());
    std::string cfg2 = make_config(work / "b", (work / "b" / "out").string());
    std::string env = "BIFLAB_CACHE_DIR=" + cache.string() + " ";
    REQUIRE(run_cmd(env + kExe + " run " + cfg1 + " --threads 2 > /dev/null 2>&1") == 0);
    REQUIRE(fs::exists(cache));
    bool has_cache_file = false;
    for (const auto& e : fs::directory_iterator(cache)) has_cache_file |= e.is_regular_file();
    REQUIRE(has_cache_file);
    REQUIRE(run_cmd(env + kExe + " run " + cfg2 + " --threads 2 > /dev/null 2>&1") == 0);
    // identical sweep bytes whether computed or loaded from the cache
    REQUIRE(slurp((work / "a" / "out" / "L.csv").string()) ==
            slurp((work / "b" / "out" / "L.csv").string()));
    json m2 = json::parse(slurp((work / "b" / "out" / "manifest.json").string()));
    bool cache_note = false;
    for (const auto& t : m2["tasks"])
        for (const auto& w : t["warnings"])
            cache_note |= std::string(w).find("cache") != std::string::npos;
    REQUIRE(cache_note);
}
