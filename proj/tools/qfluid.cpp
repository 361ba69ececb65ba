#include <qfluid/cli.hpp>

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char **argv)
{
    CLI::App app{"qfluid: fluid model, equilibrium and simulation of many-server queues with abandonment"};
    std::string config;
    std::vector<std::string> overrides;
    std::string out;
    app.add_option("--config", config, "JSON run configuration")->required();
    app.add_option("--set", overrides, "override a config value, e.g. --set patience.rate=2 (value parsed as JSON)");
    app.add_option("--out", out, "output directory (overrides \"out\" in the config)");
    CLI11_PARSE(app, argc, argv);

    std::optional<std::filesystem::path> out_dir;
    if (!out.empty())
        out_dir = out;
    return qfluid::cli::run_main(config, overrides, out_dir, std::cout, std::cerr);
}
