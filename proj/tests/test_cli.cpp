#include <catch_amalgamated.hpp>

#include <qfluid/cli.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

using namespace qfluid;
using namespace qfluid::cli;
namespace fs = std::filesystem;

namespace
{
    fs::path scratch(const std::string &name)
    {
        const auto p = fs::temp_directory_path() / ("qfluid_cli_test_" + std::to_string(::getpid())) / name;
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }

    fs::path write(const fs::path &dir, const std::string &name, const std::string &text)
    {
        const auto p = dir / name;
        std::ofstream(p) << text;
        return p;
    }

    std::string slurp(const fs::path &p)
    {
        std::ifstream in(p);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    int run_cli(const std::string &args)
    {
        const std::string cmd = std::string(QFLUID_CLI_PATH) + " " + args + " >/dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    int run_json(const std::string &text, const fs::path &out, std::string *err = nullptr)
    {
        const auto cfg = write(out, "config.json", text);
        std::ostringstream log, errs;
        const int code = run_main(cfg, {}, out, log, errs);
        if (err)
            *err = errs.str();
        return code;
    }

    const char *exp_pair = R"("patience": {"family": "exponential", "rate": 1}, "service": {"family": "exponential", "rate": 1})";
}

TEST_CASE("defaults for a minimal fluid-solve config")
{
    const auto cfg = parse_config(json::parse(std::string(R"({"mode": "fluid-solve", "lambda": 1.2, )") + exp_pair + "}"));
    CHECK(cfg.mode == Mode::fluid_solve);
    CHECK(cfg.dt == 1e-3);
    CHECK(cfg.horizon == 10.0);
    CHECK(cfg.probes.count == 512);
    CHECK(cfg.replications == 20);
    CHECK(cfg.lambda == 1.2);
    REQUIRE(cfg.patience);
    CHECK(cfg.patience->family() == Family::exponential);
    CHECK(std::holds_alternative<std::monostate>(cfg.initial));
    CHECK(cfg.profile_times == std::vector<double>{10.0});
}

TEST_CASE("strict parsing exit codes")
{
    const auto dir = scratch("codes");
    std::string err;

    CHECK(run_json(std::string(R"({"mode": "fluid-solve", "lamda": 1.2, )") + exp_pair + "}", dir, &err) == 4);
    CHECK_THAT(err, Catch::Matchers::ContainsSubstring("lamda"));

    CHECK(run_json(std::string(R"({"mode": "simulate", "lambda": 1.2, )") + exp_pair + "}", dir, &err) == 5);
    CHECK_THAT(err, Catch::Matchers::ContainsSubstring("\"n\""));

    CHECK(run_json(R"({"mode": "fluid-solve", "lambda": )", dir) == 3);
    std::ostringstream log, errs;
    CHECK(run_main(dir / "does_not_exist.json", {}, dir, log, errs) == 2);

    // keys that exist but belong to another mode
    CHECK(run_json(std::string(R"({"mode": "equilibrium", "n": 4, "lambda": 1.2, )") + exp_pair + "}", dir) == 5);
    // unknown key inside a distribution literal
    CHECK(run_json(R"({"mode": "equilibrium", "lambda": 1.2, "patience": {"family": "exponential", "rat": 1},
                       "service": {"family": "exponential", "rate": 1}})",
                   dir) == 4);
    // bad values
    CHECK(run_json(std::string(R"({"mode": "fluid-solve", "lambda": -1, )") + exp_pair + "}", dir) == 5);
    CHECK(run_json(R"({"mode": "gc-check", "distribution": {"family": "weibull"}})", dir) == 5);
    CHECK(run_json(std::string(R"({"mode": "compare", "n_list": [5], "lambda": 1, "snapshot_times": [0.0005], )") +
                       exp_pair + "}",
                   dir) == 5);
    CHECK(run_json(std::string(R"({"mode": "fluid-solve", "lambda": 1.2, "initial": {"buffer_mass": 1}, )") +
                       exp_pair + "}",
                   dir) == 5);
    CHECK(run_json(R"({"mode": "teleport"})", dir) == 5);
}

TEST_CASE("overrides")
{
    json j = json::parse(std::string(R"({"mode": "fluid-solve", "lambda": 1.2, )") + exp_pair + "}");
    apply_override(j, "patience.rate=2.5");
    apply_override(j, "T=3");
    apply_override(j, "profile_times=[1,2]");
    const auto cfg = parse_config(j);
    CHECK(std::get<Exponential>(cfg.patience->params()).rate == 2.5);
    CHECK(cfg.horizon == 3.0);
    CHECK(cfg.profile_times == std::vector<double>{1.0, 2.0});
    CHECK_THROWS_AS(apply_override(j, "novalue"), ConfigError);
}

TEST_CASE("equilibrium mode")
{
    const auto dir = scratch("eq");
    CHECK(run_json(std::string(R"({"mode": "equilibrium", "lambda": 0.8, )") + exp_pair + "}", dir) == 0);
    const auto j = json::parse(slurp(dir / "equilibrium.json"));
    CHECK(j["w"] == 0.0);
    CHECK(j["Z_inf"].get<double>() == Catch::Approx(0.8));
    CHECK(fs::exists(dir / "equilibrium_profiles.csv"));
}

TEST_CASE("equilibrium output round-trips into a fluid solve")
{
    const auto dir = scratch("roundtrip");
    REQUIRE(run_json(std::string(R"({"mode": "equilibrium", "lambda": 1.2, )") + exp_pair + "}", dir) == 0);
    const auto eq = json::parse(slurp(dir / "equilibrium.json"));
    const std::string solve_cfg = std::string(R"({"mode": "fluid-solve", "lambda": 1.2, "T": 10, )") + exp_pair +
                                  R"(, "initial": {"equilibrium_file": "equilibrium.json"}})";
    REQUIRE(run_json(solve_cfg, dir) == 0);
    std::ifstream in(dir / "trajectory.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "t,X,Q,Z,R,B");
    double worst = 0.0;
    while (std::getline(in, line))
    {
        std::stringstream ss(line);
        std::string t, x;
        std::getline(ss, t, ',');
        std::getline(ss, x, ',');
        worst = std::max(worst, std::abs(std::stod(x) - eq["X_inf"].get<double>()));
    }
    CHECK(worst <= 1e-3);
}

TEST_CASE("ode-check mode")
{
    const auto dir = scratch("ode");
    REQUIRE(run_json(R"({"mode": "ode-check", "rho": 2, "alpha": 2, "mu": 1})", dir) == 0);
    const auto s = json::parse(slurp(dir / "ode_check_summary.json"));
    CHECK(s["sup_diff"].get<double>() <= 2e-3);
    CHECK(slurp(dir / "ode_check.csv").starts_with("t,X_ode,X_fluid,diff\n"));
}

TEST_CASE("compare mode writes three summary rows")
{
    const auto dir = scratch("compare");
    const std::string cfg = std::string(R"({"mode": "compare", "n_list": [25, 100, 400], "lambda": 1.2, "T": 2,
        "dt": 0.01, "snapshot_every": 0.5, "replications": 4, )") + exp_pair + "}";
    REQUIRE(run_json(cfg, dir) == 0);
    std::ifstream in(dir / "compare_summary.csv");
    std::string line;
    int rows = -1;
    while (std::getline(in, line))
        ++rows;
    CHECK(rows == 3);
    CHECK(slurp(dir / "compare_detail.csv")
              .starts_with("n,t,mean_dist_buffer,max_dist_buffer,mean_dist_server,max_dist_server,mean_absQ,mean_absZ\n"));
}

TEST_CASE("outputs are byte-identical across runs")
{
    const auto a = scratch("det_a");
    const auto b = scratch("det_b");
    const std::string cfg = std::string(R"({"mode": "simulate", "n": 20, "lambda": 1.1, "T": 2, "replications": 3,
        "seed": 5, )") + exp_pair + "}";
    REQUIRE(run_json(cfg, a) == 0);
    REQUIRE(run_json(cfg, b) == 0);
    for (int r = 0; r < 3; ++r)
    {
        const std::string name = "sim_n20_rep" + std::to_string(r) + ".csv";
        CHECK(slurp(a / name) == slurp(b / name));
        CHECK_FALSE(slurp(a / name).empty());
    }
}

TEST_CASE("fluid-matched simulation from an initial condition")
{
    const auto dir = scratch("matched");
    const std::string cfg = std::string(R"({"mode": "simulate", "n": 50, "lambda": 1.2, "T": 1, "replications": 2,
        "snapshot_times": [0, 1], "initial": {"equilibrium": true}, "buffer_seeding": "real_queue_only", )") +
                            exp_pair + "}";
    REQUIRE(run_json(cfg, dir) == 0);
    const auto text = slurp(dir / "sim_n50_rep0.csv");
    // first data row: t = 0 with 50 busy servers and floor(50 * 0.2) = 10 waiting
    CHECK_THAT(text, Catch::Matchers::ContainsSubstring("\n0,10,10,50,60,"));
}

TEST_CASE("gc-check mode")
{
    const auto dir = scratch("gc");
    REQUIRE(run_json(R"({"mode": "gc-check", "distribution": {"family": "exponential", "rate": 1}, "seed": 2})", dir) ==
            0);
    const auto j = json::parse(slurp(dir / "gc_check.json"));
    CHECK(j["statistic"].get<double>() <= 0.0136);
}

TEST_CASE("command-line front end")
{
    const std::string config_dir = QFLUID_CONFIG_DIR;
    const auto dir = scratch("binary");
    CHECK(run_cli("--config " + config_dir + "/ode_check.json --out " + dir.string()) == 0);
    CHECK(fs::exists(dir / "ode_check.csv"));
    CHECK(run_cli("--config " + config_dir + "/equilibrium.json --set lambda=0.8 --out " + dir.string()) == 0);
    CHECK(json::parse(slurp(dir / "equilibrium.json"))["w"] == 0.0);
    CHECK(run_cli("--config " + config_dir + "/equilibrium.json --set lamda=0.8 --out " + dir.string()) == 4);
    CHECK(run_cli("--config " + (dir / "missing.json").string()) == 2);
    const auto broken = write(dir, "broken.json", "{ not json");
    CHECK(run_cli("--config " + broken.string()) == 3);
}

TEST_CASE("invariant violations surface as exit code 1")
{
    const auto dir = scratch("fail");
    // a single inner iteration cannot reach the tolerance
    CHECK(run_json(std::string(R"({"mode": "fluid-solve", "lambda": 2, "T": 1, "max_inner_iterations": 1, )") +
                       exp_pair + "}",
                   dir) == 1);
}
