// laof_lab: command-line front end for the latent-action flow laboratory.
// Subcommands are added as the corresponding modules land.
#include <CLI11.hpp>

#include <cstdio>

int main(int argc, char** argv) {
    CLI::App app{"latent action learning laboratory"};
    app.require_subcommand(0, 1);
    CLI11_PARSE(app, argc, argv);
    if (app.get_subcommands().empty()) {
        std::puts("no subcommand given; run with --help");
    }
    return 0;
}
