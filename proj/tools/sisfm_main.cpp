#include "sisfm/commands.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Sparse Bayesian factor models with structured increasing shrinkage"};
    app.require_subcommand(1);
    sisfm::CliOptions options;
    std::string config;
    std::uint64_t seed = 0;
    std::string output = options.output.string();

    const char* commands[][2] = {
        {"fit", "Run the Gibbs sampler on a dataset and summarize the chain"},
        {"simulate", "Run replicated synthetic scenarios and report recovery metrics"},
        {"prior-check", "Monte Carlo checks of the prior's shrinkage properties"},
        {"summarize", "Re-process a stored chain"},
    };
    for (const auto& c : commands) {
        CLI::App* sub = app.add_subcommand(c[0], c[1]);
        sub->add_option("--config", config, "JSON run configuration")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "Random seed (overrides the config)");
        sub->add_option("--threads", options.threads, "Worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--output", output, "Output directory");
        sub->add_option("--set", options.overrides, "Override a config value, key=value (repeatable)");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        const sisfm::Json j{{"schema_version", sisfm::kSchemaVersion},
                            {"kind", "error"},
                            {"code", "argument_error"},
                            {"message", e.what()}};
        // CLI11 may stop before storing --output, so look for it directly.
        for (int i = 1; i < argc; ++i) {
            const std::string a = argv[i];
            if (a == "--output" && i + 1 < argc) output = argv[i + 1];
            if (a.rfind("--output=", 0) == 0) output = a.substr(9);
        }
        try {
            sisfm::write_json_atomic(std::filesystem::path(output) / "error.json", j);
        } catch (const std::exception&) {
        }
        std::cerr << j.dump() << "\n";
        return 2;
    }
    options.command = app.get_subcommands().front()->get_name();
    const CLI::App* sub = app.get_subcommands().front();
    if (sub->count("--config")) options.config = config;
    if (sub->count("--seed")) options.seed = seed;
    options.output = output;
    return sisfm::run_command(options, std::cout, std::cerr);
}
