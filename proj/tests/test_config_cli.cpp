#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "seqkrr/config.hpp"
#include "seqkrr/spectrum.hpp"

using namespace seqkrr;
namespace fs = std::filesystem;

namespace {

fs::path make_temp_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("seqkrr_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(SEQKRR_BINARY_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("config parser: sections, lists, comments, repeats") {
    const auto cfg = ConfigFile::parse_string(
        "# comment\n"
        "[kernel]\n"
        "type = ntk\n"
        "D = 10   # trailing comment\n"
        "[experiment]\n"
        "rho_list = 0, 0.5, 1\n"
        "N_list = 4000, 3x200\n",
        "test.cfg");
    CHECK(cfg.get_string("kernel", "type") == "ntk");
    CHECK(cfg.get_int("kernel", "D") == 10);
    CHECK(cfg.get_double_list("experiment", "rho_list") == std::vector<double>{0.0, 0.5, 1.0});
    CHECK(cfg.get_int_list("experiment", "N_list") ==
          std::vector<std::int64_t>{4000, 200, 200, 200});
    CHECK(cfg.get_int("kernel", "L", 3) == 3);  // fallback
}

TEST_CASE("config parser: line and field diagnostics") {
    try {
        const auto cfg = ConfigFile::parse_string("[kernel]\nD = ten\n", "bad.cfg");
        cfg.get_int("kernel", "D");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("bad.cfg:2") != std::string::npos);
        CHECK(msg.find("D") != std::string::npos);
    }
    CHECK_THROWS_AS(ConfigFile::parse_string("D = 1\n", "orphan.cfg"), ConfigError);
    CHECK_THROWS_AS(ConfigFile::parse_string("[kernel]\nD = 1\nD = 2\n", "dup.cfg"), ConfigError);
}

TEST_CASE("run config: validation of protocol, rho, unknown keys") {
    const std::string good =
        "[kernel]\ntype = ntk\nL = 3\nsigma_w_sq = 2\nsigma_b_sq = 0\nD = 5\n"
        "[spectrum]\nk_max = 40\nr = 256\n"
        "[experiment]\nprotocol = transfer\nN_A = 20\nN_B = 20\nrho = 1\ntrials = 2\n";
    CHECK_NOTHROW(RunConfig::from_config(ConfigFile::parse_string(good, "good.cfg")));

    const std::string bad_protocol =
        "[kernel]\ntype = ntk\nD = 5\n[experiment]\nprotocol = sideways\n";
    CHECK_THROWS_AS(RunConfig::from_config(ConfigFile::parse_string(bad_protocol, "p.cfg")),
                    ConfigError);
    const std::string bad_rho = "[kernel]\ntype = ntk\nD = 5\n[experiment]\nrho = 1.5\n";
    CHECK_THROWS_AS(RunConfig::from_config(ConfigFile::parse_string(bad_rho, "r.cfg")),
                    ConfigError);
    const std::string unknown = "[kernel]\ntype = ntk\nD = 5\nwat = 1\n";
    CHECK_THROWS_AS(RunConfig::from_config(ConfigFile::parse_string(unknown, "u.cfg")),
                    ConfigError);
}

TEST_CASE("manifest: save and validate") {
    const auto dir = make_temp_dir("manifest");
    RunManifest manifest;
    manifest.command = "simulate";
    manifest.config_path = "x.cfg";
    manifest.seed = 7;
    manifest.threads = 2;
    manifest.config = {{"kernel", {{"D", "5"}}}};
    manifest.timings_sec = {{"experiment", 0.25}};
    manifest.outputs = {"report.csv"};
    const auto path = dir / "report.csv.manifest.json";
    manifest.save(path.string());
    CHECK_NOTHROW(validate_manifest_file(path.string()));

    write_file(dir / "broken.json", "{\"tool\": \"seqkrr\"}");
    CHECK_THROWS_AS(validate_manifest_file((dir / "broken.json").string()), ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("cli: spectrum subcommand on the linear fixture") {
    const auto dir = make_temp_dir("cli_spectrum");
    write_file(dir / "lin.cfg",
               "[kernel]\ntype = monomial\ndegree = 1\nD = 3\n"
               "[spectrum]\nk_max = 8\nr = 64\n");
    REQUIRE(run_cli("spectrum --config " + (dir / "lin.cfg").string() + " --out " +
                    dir.string()) == 0);
    const Spectrum s = load_spectrum_csv((dir / "spectrum.csv").string());
    for (const auto& lv : s.levels) {
        if (lv.k == 1)
            CHECK(lv.eta == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
        else
            CHECK(std::abs(lv.eta) < 1e-12);
    }
    CHECK_NOTHROW(validate_manifest_file((dir / "spectrum.csv.manifest.json").string()));
    fs::remove_all(dir);
}

TEST_CASE("cli: theory subcommand reproduces the flat-spectrum fixtures") {
    const auto dir = make_temp_dir("cli_theory");
    Spectrum flat;
    flat.levels = {{0, 1.0, 10.0}};
    save_spectrum_csv(flat, (dir / "flat.csv").string());

    write_file(dir / "transfer.cfg",
               "[kernel]\ntype = monomial\ndegree = 1\nD = 3\n"
               "[spectrum]\ncsv = " + (dir / "flat.csv").string() + "\n" +
               "[experiment]\nprotocol = transfer\nN_A = 5\nN_B = 5\nrho_list = 0,0.5,1\n");
    REQUIRE(run_cli("theory --config " + (dir / "transfer.cfg").string() + " --out " +
                    dir.string()) == 0);
    const std::string csv = read_file(dir / "theory.csv");
    CHECK(csv.find("E1,5,0,1,1,0,5\n") != std::string::npos);
    CHECK(csv.find("E_AB,5,5,2,1,0,2.5\n") != std::string::npos);
    CHECK(csv.find("E_ave,5,5,2,1,0,3.75\n") != std::string::npos);

    // Affine in rho: the E_AB value at 0.5 is the midpoint of 0 and 1.
    double v0 = -1, v5 = -1, v1 = -1;
    std::istringstream lines(csv);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.rfind("E_AB,", 0) != 0) continue;
        std::istringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        const double rho = std::stod(fields[4]), value = std::stod(fields[6]);
        if (rho == 0.0) v0 = value;
        if (rho == 0.5) v5 = value;
        if (rho == 1.0) v1 = value;
    }
    CHECK(v5 == doctest::Approx(0.5 * (v0 + v1)).epsilon(1e-12));

    write_file(dir / "seq.cfg",
               "[kernel]\ntype = monomial\ndegree = 1\nD = 3\n"
               "[spectrum]\ncsv = " + (dir / "flat.csv").string() + "\n" +
               "[experiment]\nprotocol = sequential\nN_list = 3x5\n");
    REQUIRE(run_cli("theory --config " + (dir / "seq.cfg").string() + " --out " + dir.string()) ==
            0);
    const std::string seq_csv = read_file(dir / "theory.csv");
    CHECK(seq_csv.find("E_n,5,5,3,1,0,1.25\n") != std::string::npos);

    // Mode deficit surfaces as a clean numerical-error exit (3).
    write_file(dir / "deficit.cfg",
               "[kernel]\ntype = monomial\ndegree = 1\nD = 3\n"
               "[spectrum]\ncsv = " + (dir / "flat.csv").string() + "\n" +
               "[experiment]\nprotocol = single\nN_A = 50\n");
    CHECK(run_cli("theory --config " + (dir / "deficit.cfg").string() + " --out " +
                  dir.string()) == 3);
    fs::remove_all(dir);
}

TEST_CASE("cli: config errors exit 2 with diagnostics") {
    const auto dir = make_temp_dir("cli_bad");
    write_file(dir / "bad.cfg",
               "[kernel]\ntype = ntk\nD = 1\n[spectrum]\nk_max = 8\nr = 64\n"
               "[experiment]\nprotocol = single\nN_A = 5\n");
    CHECK(run_cli("spectrum --config " + (dir / "bad.cfg").string() + " --out " + dir.string()) ==
          2);
    CHECK(run_cli("simulate --config " + (dir / "nonexistent.cfg").string()) == 2);
    fs::remove_all(dir);
}

TEST_CASE("cli: simulate smoke run, deterministic bytes under a fixed seed") {
    const auto dir = make_temp_dir("cli_sim");
    write_file(dir / "smoke.cfg",
               "[kernel]\ntype = ntk\nL = 3\nsigma_w_sq = 2\nsigma_b_sq = 0\nD = 5\n"
               "[spectrum]\nk_max = 40\nr = 256\n"
               "[experiment]\nprotocol = transfer\nN_A = 20\nN_B = 20\nrho = 1\n"
               "sigma_sq = 0\ntrials = 5\nn_test = 300\nP_prime = 600\nseed = 3\n");
    const auto out1 = dir / "run1";
    const auto out2 = dir / "run2";
    REQUIRE(run_cli("simulate --config " + (dir / "smoke.cfg").string() + " --out " +
                    out1.string() + " --threads 2") == 0);
    REQUIRE(run_cli("simulate --config " + (dir / "smoke.cfg").string() + " --out " +
                    out2.string() + " --threads 1") == 0);
    const std::string a = read_file(out1 / "report.csv");
    const std::string b = read_file(out2 / "report.csv");
    CHECK(!a.empty());
    CHECK(a == b);
    CHECK_NOTHROW(validate_manifest_file((out1 / "report.csv.manifest.json").string()));

    // Different seed changes the Monte Carlo bytes.
    const auto out3 = dir / "run3";
    REQUIRE(run_cli("simulate --config " + (dir / "smoke.cfg").string() + " --out " +
                    out3.string() + " --seed 4") == 0);
    CHECK(read_file(out3 / "report.csv") != a);
    fs::remove_all(dir);
}
