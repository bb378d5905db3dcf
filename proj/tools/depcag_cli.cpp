#include "depcag/app.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    using depcag::app::GlobalOptions;
    CLI::App cli{"Linear and quasilinear DEPCAG solver and certificate tool"};
    cli.require_subcommand(1);
    GlobalOptions g;
    cli.add_option("--config", g.config, "INI configuration file")->required()->check(CLI::ExistingFile);
    cli.add_option("--out", g.out_dir, "output directory for CSV and JSON files");
    cli.add_option("--tol", g.tol, "overrides solver.tol");
    cli.add_option("--seed", g.seed, "seed for randomized projections");
    cli.set_version_flag("--version", "depcag 1.0");

    cli.add_subcommand("simulate", "solve the configured initial value problem");
    cli.add_subcommand("certify", "run the configured certificates");
    cli.add_subcommand("dichotomy", "ordinary and exponential dichotomy report");
    cli.add_subcommand("equivalence", "asymptotic equivalence and bounded solutions");
    cli.add_subcommand("sweep", "scalar stability inequality over an (a, b) grid");
    // Flags may come before or after the subcommand.
    for (auto* sub : cli.get_subcommands({})) sub->fallthrough();

    try {
        cli.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return cli.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return cli.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error[ConfigError]: " << e.what() << '\n';
        return depcag::app::exit_config;
    }
    const std::string command = cli.get_subcommands().front()->get_name();
    return depcag::app::run(command, g, std::cout, std::cerr);
}
