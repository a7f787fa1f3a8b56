// Command-line front end: kernel -> spectrum -> theory -> simulation, with
// reproducible seeded runs and manifest-accompanied CSV outputs.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "seqkrr/checks.hpp"
#include "seqkrr/config.hpp"
#include "seqkrr/simulate.hpp"
#include "seqkrr/theory.hpp"

namespace {

using namespace seqkrr;
namespace fs = std::filesystem;

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    int threads = 0;

    int resolved_threads() const {
        if (threads > 0) return threads;
        const unsigned hw = std::thread::hardware_concurrency();
        return hw ? static_cast<int>(hw) : 1;
    }
    fs::path out() const {
        fs::path p = out_dir;
        fs::create_directories(p);
        return p;
    }
};

std::string default_out_dir() {
    if (const char* env = std::getenv("SEQKRR_OUT")) return env;
    return ".";
}

class StageTimer {
public:
    explicit StageTimer(RunManifest& manifest) : manifest_(manifest) {}
    template <typename F>
    auto run(const std::string& stage, F&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        auto result = fn();
        manifest_.timings_sec.emplace_back(
            stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        return result;
    }

private:
    RunManifest& manifest_;
};

RunConfig load_run_config(const CommonArgs& args, RunManifest& manifest) {
    const ConfigFile cfg = ConfigFile::parse_file(args.config_path);
    RunConfig rc = RunConfig::from_config(cfg);
    if (args.seed) rc.experiment.seed = *args.seed;
    manifest.config_path = args.config_path;
    manifest.config = cfg.sections();
    manifest.config["experiment"]["seed"] = std::to_string(rc.experiment.seed);
    manifest.seed = rc.experiment.seed;
    manifest.threads = args.resolved_threads();
    return rc;
}

DecomposeResult resolve_spectral(const RunConfig& rc, StageTimer& timer) {
    const int d = rc.kernel.input_dim();
    auto rule = timer.run("quadrature", [&] { return build_quadrature(d, rc.r); });
    return timer.run("decompose", [&] { return decompose(rc.kernel, d, rc.k_max, rule); });
}

int cmd_spectrum(const CommonArgs& args) {
    RunManifest manifest;
    manifest.command = "spectrum";
    StageTimer timer(manifest);
    const RunConfig rc = load_run_config(args, manifest);
    const DecomposeResult res = resolve_spectral(rc, timer);

    const fs::path csv = args.out() / "spectrum.csv";
    save_spectrum_csv(res.spectrum, csv.string());
    manifest.outputs.push_back(csv.string());
    manifest.save((csv.string() + ".manifest.json"));

    std::cout << "levels: " << res.spectrum.levels.size() << " (k_max " << rc.k_max << ")\n"
              << "Theta(1): " << res.theta1 << "\n"
              << "trace before eta_0 zeroing: " << res.trace_before_zeroing << " ("
              << 100.0 * res.trace_before_zeroing / res.theta1 << "% of Theta(1))\n"
              << "eta_0 (zeroed in output): " << res.eta0_raw << "\n"
              << "unresolved tail mass at level k_max+1: " << res.tail_mass << "\n"
              << "max node reconstruction error / Theta(1): " << res.max_recon_rel_err << "\n"
              << "wrote " << csv.string() << "\n";
    return 0;
}

int cmd_theory(const CommonArgs& args) {
    RunManifest manifest;
    manifest.command = "theory";
    StageTimer timer(manifest);
    const RunConfig rc = load_run_config(args, manifest);

    Spectrum spectrum;
    if (rc.spectrum_csv) {
        spectrum = load_spectrum_csv(*rc.spectrum_csv);
    } else {
        spectrum = resolve_spectral(rc, timer).spectrum;
    }

    const ExperimentSpec& ex = rc.experiment;
    std::vector<CurvePoint> points = timer.run("theory", [&] {
        std::vector<CurvePoint> out;
        for (double sigma_sq : ex.sigma_sq_grid) {
            if (ex.protocol == Protocol::Single) {
                for (std::int64_t n : ex.n_a_grid) {
                    const SelfConsistency sc = solve_kappa(spectrum, n);
                    out.push_back({"E1", double(n), 0, 1, 1.0, sigma_sq,
                                   e_single(sc, spectrum, TargetEnsemble::gaussian(1.0, sigma_sq))});
                }
            } else if (ex.protocol == Protocol::Sequential || ex.protocol == Protocol::Block) {
                const auto curve = learning_curve(spectrum, ex.n_list, sigma_sq);
                for (std::size_t t = 0; t < curve.errors.size(); ++t)
                    out.push_back({"E_n", double(ex.n_list[0]), double(ex.n_list[t]),
                                   int(t + 1), 1.0, sigma_sq, curve.errors[t]});
            } else {
                for (std::int64_t na : ex.n_a_grid) {
                    for (std::int64_t nb : ex.n_b_grid) {
                        const SelfConsistency sa = solve_kappa(spectrum, na);
                        const SelfConsistency sb = solve_kappa(spectrum, nb);
                        for (double rho : ex.rho_grid) {
                            const TargetEnsemble ens = TargetEnsemble::gaussian(rho, sigma_sq);
                            out.push_back({"E1", double(na), 0, 1, rho, sigma_sq,
                                           e_single(sa, spectrum, ens)});
                            out.push_back({"E1", double(nb), 0, 1, rho, sigma_sq,
                                           e_single(sb, spectrum, ens)});
                            out.push_back({"E_AB", double(na), double(nb), 2, rho, sigma_sq,
                                           e_transfer(spectrum, na, nb, rho, sigma_sq)});
                            out.push_back({"E_AB_back", double(na), double(nb), 2, rho, sigma_sq,
                                           e_backward(spectrum, na, nb, rho, sigma_sq)});
                            if (sigma_sq == 0.0)
                                out.push_back({"E_ave", double(na), double(nb), 2, rho, sigma_sq,
                                               e_average(spectrum, na, nb, rho)});
                        }
                    }
                }
            }
        }
        return out;
    });

    const fs::path csv = args.out() / "theory.csv";
    save_curve_points_csv(points, csv.string());
    manifest.outputs.push_back(csv.string());
    manifest.save(csv.string() + ".manifest.json");
    std::cout << "wrote " << points.size() << " theory rows to " << csv.string() << "\n";
    return 0;
}

int cmd_simulate(const CommonArgs& args) {
    RunManifest manifest;
    manifest.command = "simulate";
    StageTimer timer(manifest);
    const RunConfig rc = load_run_config(args, manifest);
    const DecomposeResult spectral = resolve_spectral(rc, timer);

    const auto rows = timer.run("experiment", [&] {
        return run_experiment(rc.kernel, spectral, rc.experiment, args.resolved_threads());
    });

    const fs::path csv = args.out() / "report.csv";
    save_report_csv(rows, csv.string());
    manifest.outputs.push_back(csv.string());
    manifest.save(csv.string() + ".manifest.json");
    std::cout << "wrote " << rows.size() << " report rows to " << csv.string() << "\n";
    return 0;
}

int cmd_check(bool fast, const CommonArgs& args) {
    CheckOptions options;
    options.fast = fast;
    options.threads = args.resolved_threads();
    options.log = &std::cout;
    const auto results = run_acceptance_checks(options);
    int passed = 0, failed = 0, skipped = 0;
    for (const auto& r : results) {
        if (r.skipped)
            ++skipped;
        else if (r.passed)
            ++passed;
        else
            ++failed;
    }
    std::cout << passed << " passed, " << failed << " failed, " << skipped << " skipped\n";
    return failed == 0 ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Learning curves for sequential NTK ridge-less regression: "
                 "closed-form theory and Monte Carlo validation"};
    app.require_subcommand(1);

    CommonArgs args;
    args.out_dir = default_out_dir();
    std::uint64_t seed_value = 0;

    auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* copt = sub->add_option("--config", args.config_path, "config file path");
        if (needs_config) copt->required();
        sub->add_option("--out", args.out_dir, "output directory (default $SEQKRR_OUT or .)");
        sub->add_option("--seed", seed_value, "override the config seed")
            ->each([&](const std::string&) { args.seed = seed_value; });
        sub->add_option("--threads", args.threads, "worker cap (default: hardware)");
    };

    auto* spectrum = app.add_subcommand("spectrum", "decompose the kernel, write spectrum.csv");
    add_common(spectrum, true);
    auto* theory = app.add_subcommand("theory", "evaluate closed-form curves, write theory.csv");
    add_common(theory, true);
    auto* simulate = app.add_subcommand("simulate", "run Monte Carlo experiments, write report.csv");
    add_common(simulate, true);
    auto* check = app.add_subcommand("check", "run the invariant suite");
    bool fast = false;
    check->add_flag("--fast", fast, "skip the Monte Carlo criteria");
    check->add_option("--threads", args.threads, "worker cap (default: hardware)");

    try {
        app.parse(argc, argv);
        if (spectrum->parsed()) return cmd_spectrum(args);
        if (theory->parsed()) return cmd_theory(args);
        if (simulate->parsed()) return cmd_simulate(args);
        if (check->parsed()) return cmd_check(fast, args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericsError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const InvariantError& e) {
        std::cerr << "invariant failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
