#include <CLI11.hpp>

#include "fkpide/cli.hpp"

int main(int argc, char **argv) {
    using namespace fkpide::cli;
    CLI::App app{"Feynman-Kac PIDE pricer: Galerkin solver, condition checks and Monte-Carlo cross-validation"};
    app.require_subcommand(1);

    Invocation inv;
    int threads = 0;
    std::uint64_t seed = 0;
    app.add_option("--threads", threads, "worker threads (default: FKPIDE_THREADS or all cores)")->check(CLI::PositiveNumber);

    const std::map<std::string, std::string> help{
        {"check", "estimate the growth exponent and check the symbol conditions"},
        {"price", "price the employee option (call killed at rate lambda below B)"},
        {"bond", "zero-coupon bond with a short rate via the orthant split"},
        {"occupation", "Laplace transform of the occupation time of a set"},
        {"barrier", "barrier option by penalization over a lambda sweep"},
        {"schroedinger", "relativistic Schroedinger evolution of a Gaussian"},
        {"validate", "PIDE against Monte-Carlo Feynman-Kac estimates"},
        {"figure1", "employee-option experiment over B and lambda"}};
    for (const auto &name : commands()) {
        auto *sub = app.add_subcommand(name, help.at(name));
        sub->add_option("--config", inv.config_path, "TOML configuration file")->check(CLI::ExistingFile);
        sub->add_option("--set", inv.overrides, "override section.key=value (repeatable)");
        sub->add_option("--out", inv.out_dir, "output directory")->capture_default_str();
        sub->add_option("--seed", seed, "Monte-Carlo seed (validate)");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        sub->callback([&inv, name] { inv.command = name; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }
    for (auto *sub : app.get_subcommands())
        if (sub->count("--seed")) inv.seed = seed;
    if (threads > 0) fkpide::set_thread_count(threads);
    return run_invocation(inv, std::cout, std::cerr);
}
