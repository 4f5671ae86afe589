// fedsim: deterministic federated-learning simulator with knowledgeable
// client insertion.
//
//   fedsim run <config> [--threads N]      execute the configured runs
//   fedsim summarize <results.csv>         per-run accuracy summary
//   fedsim gradcheck [--seeds N] [--step h]  finite-difference gradient suite

#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/experiment.hpp"
#include "fedsim/gradcheck.hpp"

namespace {

int do_run(const std::string& config_path, unsigned threads) {
    fedsim::ExperimentConfig cfg = fedsim::parse_config(config_path);
    auto summaries = fedsim::run_experiment(cfg, threads, std::cout);
    std::cout << "\nresults written to " << cfg.output_path << "\n\n";
    fedsim::print_summary_table(std::cout, summaries, 0.5);
    return 0;
}

int do_summarize(const std::string& results_path, double threshold) {
    auto summaries = fedsim::summarize_file(results_path, threshold);
    fedsim::print_summary_table(std::cout, summaries, threshold);
    return 0;
}

int do_gradcheck(std::size_t seeds, double step) {
    constexpr double kTolerance = 1e-4;
    auto reports = fedsim::run_gradcheck(seeds, step);
    bool ok = true;
    std::printf("%-14s %-12s %-16s %s\n", "layer", "coords", "max_rel_error", "status");
    for (const auto& r : reports) {
        bool pass = r.max_rel_error < kTolerance;
        ok = ok && pass;
        std::printf("%-14s %-12zu %-16.3e %s\n", r.name.c_str(), r.coords_checked,
                    r.max_rel_error, pass ? "ok" : "FAIL");
    }
    if (!ok) throw fedsim::InternalError("gradient check exceeded tolerance");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic FedAvg / knowledgeable-client-insertion simulator"};
    app.require_subcommand(1);

    std::string config_path;
    unsigned threads = 1;
    auto* run = app.add_subcommand("run", "execute the runs in a config file");
    run->add_option("config", config_path, "experiment config file")->required();
    run->add_option("--threads", threads, "worker threads for client training")
        ->check(CLI::Range(1u, 256u));

    std::string results_path;
    double threshold = 0.5;
    auto* summarize = app.add_subcommand("summarize", "summarize a results CSV");
    summarize->add_option("results", results_path, "results CSV file")->required();
    summarize->add_option("--threshold", threshold,
                          "accuracy for the rounds-to-threshold column");

    std::size_t seeds = 20;
    double step = 1e-4;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    gradcheck->add_option("--seeds", seeds, "random seeds per layer type")
        ->check(CLI::PositiveNumber);
    gradcheck->add_option("--step", step, "central-difference step")
        ->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
        if (run->parsed()) return do_run(config_path, threads);
        if (summarize->parsed()) return do_summarize(results_path, threshold);
        return do_gradcheck(seeds, step);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const fedsim::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 1;
    } catch (const fedsim::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const fedsim::InternalError& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
}
