// Command-line driver: run a scenario, check a config, or collect distributed/centralized ratios.

#include "conmax/sim.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace conmax;

Scenario scenario_or_default(const std::string& path)
{
    if (path.empty()) return benchmark_scenario(Mode::distributed, 3, 1);
    return load_scenario(path);
}

void apply_overrides(Scenario& s, const std::string& mode, std::optional<std::uint64_t> seed, std::optional<int> steps)
{
    if (!mode.empty()) s.mode = parse_mode(mode);
    if (seed) s.seed = *seed;
    if (steps) s.steps = *steps;
}

int run_command(const std::string& config, const std::string& mode, std::optional<std::uint64_t> seed,
                std::optional<int> steps, bool paired, const std::string& out_dir, bool verbose)
{
    Scenario s = scenario_or_default(config);
    apply_overrides(s, mode, seed, steps);
    if (paired) s.paired_centralized = true;
    RunOptions options;
    options.diagnostics = true;
    if (verbose) options.progress = &std::cerr;
    const RunResult result = run(s, options);
    write_outputs(out_dir, result);
    const RunSummary& sum = result.summary;
    std::cout << "mode " << to_string(sum.mode) << " agents " << sum.agents << " steps " << sum.steps << "\n"
              << "lambda2 " << format_double(sum.initial_lambda2) << " -> " << format_double(sum.final_lambda2) << "\n";
    if (sum.ratio) std::cout << "ratio to centralized " << format_double(*sum.ratio) << "\n";
    std::cout << "outputs written to " << out_dir << "\n";
    return 0;
}

int check_command(const std::string& config)
{
    const Scenario s = load_scenario(config);
    const ScenarioCheck check = validate_scenario(s);
    if (is_lifted(s.mode))
        std::cout << collision_margin_diagnostic(s.weights.rho1, check.collision) << "\n";
    std::cout << "initial lambda2 "
              << format_double(algebraic_connectivity(build_graph(check.initial.configuration(), s.weights).laplacian))
              << "\nconfig ok\n";
    return 0;
}

int bench_command(const std::string& config, const std::string& mode, int runs, std::uint64_t first_seed,
                  std::optional<int> steps, const std::string& out_path)
{
    Scenario base = scenario_or_default(config);
    apply_overrides(base, mode, std::nullopt, steps);
    if (base.mode != Mode::distributed && base.mode != Mode::adaptive)
        throw ConfigError("bench needs a distributed or adaptive scenario");
    base.paired_centralized = true;
    RatioHistogram hist;
    nlohmann::json records = nlohmann::json::array();
    for (int r = 0; r < runs; ++r) {
        Scenario s = base;
        s.seed = first_seed + static_cast<std::uint64_t>(r);
        const RunResult result = run(s);
        const double ratio = *result.summary.ratio;
        hist.add(ratio);
        std::cout << "seed " << s.seed << " distributed " << format_double(result.summary.final_lambda2)
                  << " centralized " << format_double(*result.summary.centralized_final_lambda2) << " ratio "
                  << format_double(ratio) << std::endl;
        records.push_back(summary_json(result.summary));
    }
    std::cout << "ratio histogram\n";
    for (std::size_t b = 0; b < hist.counts.size(); ++b) std::cout << "  " << hist.label(b) << " " << hist.counts[b] << "\n";
    if (!out_path.empty()) {
        std::ofstream f(out_path);
        if (!f) throw std::runtime_error("cannot write " + out_path);
        nlohmann::json doc;
        doc["runs"] = records;
        nlohmann::json bins = nlohmann::json::array();
        for (std::size_t b = 0; b < hist.counts.size(); ++b) bins.push_back({{"bin", hist.label(b)}, {"count", hist.counts[b]}});
        doc["histogram"] = bins;
        f << doc.dump(2) << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Connectivity maximization simulator"};
    app.require_subcommand(1);

    std::string config, mode, out_dir = "out", bench_out;
    std::optional<std::uint64_t> seed;
    std::optional<int> steps;
    bool paired = false, verbose = false;
    int runs = 5;
    std::uint64_t first_seed = 1;

    CLI::App* run_cmd = app.add_subcommand("run", "Simulate a scenario and write steps.csv, trajectory.csv, summary.json");
    run_cmd->add_option("--config", config, "Scenario file (JSON); benchmark defaults when omitted")->check(CLI::ExistingFile);
    run_cmd->add_option("--mode", mode, "centralized-si | centralized-lti | distributed | adaptive");
    run_cmd->add_option("--out", out_dir, "Output directory")->required();
    run_cmd->add_option("--seed", seed, "RNG seed override");
    run_cmd->add_option("--steps", steps, "Step count override")->check(CLI::PositiveNumber);
    run_cmd->add_flag("--paired-centralized", paired, "Also run the centralized problem and report the ratio");
    run_cmd->add_flag("-v,--verbose", verbose, "Per-step progress on stderr");

    CLI::App* check_cmd = app.add_subcommand("check", "Validate a scenario: initial feasibility and collision margin");
    check_cmd->add_option("--config", config, "Scenario file (JSON)")->required()->check(CLI::ExistingFile);

    CLI::App* bench_cmd = app.add_subcommand("bench", "Histogram of distributed/centralized final lambda2 ratios");
    bench_cmd->add_option("--runs", runs, "Number of seeds")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--config", config, "Scenario file (JSON); benchmark n=3 when omitted")->check(CLI::ExistingFile);
    bench_cmd->add_option("--mode", mode, "distributed | adaptive");
    bench_cmd->add_option("--first-seed", first_seed, "Seed of the first run");
    bench_cmd->add_option("--steps", steps, "Step count override")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--out", bench_out, "Optional JSON report");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) return run_command(config, mode, seed, steps, paired, out_dir, verbose);
        if (*check_cmd) return check_command(config);
        if (*bench_cmd) return bench_command(config, mode, runs, first_seed, steps, bench_out);
    } catch (const ConfigError& e) {
        std::cerr << "config rejected: " << e.what() << "\n";
        return 1;
    } catch (const FeasibilityViolation& e) {
        std::cerr << "feasibility violation: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
