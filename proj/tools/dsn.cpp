// dsn: command-line front end. See README.md for the config schema and outputs.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dsn/cli/commands.hpp"

namespace {

unsigned env_workers() {
    const char* v = std::getenv("DSN_WORKERS");
    if (!v || !*v) return 1;
    try {
        const long n = std::stol(v);
        return n > 0 ? static_cast<unsigned>(n) : 1u;
    } catch (const std::exception&) {
        std::cerr << "warning: ignoring invalid DSN_WORKERS='" << v << "'\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distributed compressive sensing: replica analysis, simulation and figure data"};
    app.set_version_flag("--version", std::string(DSN_VERSION));
    app.require_subcommand(1);

    dsn::cli::Invocation inv;
    std::uint64_t seed = 0;
    unsigned workers = 0;
    for (const auto& name : dsn::cli::command_names()) {
        CLI::App* sub = app.add_subcommand(name, "run the " + name + " command");
        sub->add_option("--config", inv.config_path, "JSON config (or a previous manifest.json)")
            ->required();
        sub->add_option("--out", inv.out, "output directory")->required();
        sub->add_option("--seed", seed, "override every seed in the config");
        sub->add_option("--workers", workers, "worker threads (default: DSN_WORKERS or 1)")
            ->check(CLI::PositiveNumber);
        sub->callback([&inv, name] { inv.command = name; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(dsn::ExitCode::kConfigError);
    }
    for (const auto* sub : app.get_subcommands()) {
        if (sub->count("--seed")) inv.seed = seed;
        inv.workers = sub->count("--workers") ? workers : env_workers();
    }
    return dsn::cli::run(inv);
}
