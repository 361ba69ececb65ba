#pragma once

#include "convergence.hpp"
#include "distributions.hpp"
#include "equilibrium.hpp"
#include "error.hpp"
#include "expode.hpp"
#include "fluid.hpp"
#include "io.hpp"
#include "simulator.hpp"

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

namespace qfluid::cli
{
    using io::json;
    namespace fs = std::filesystem;

    enum ExitCode : int
    {
        ok = 0,
        failure = 1,
        missing_file = 2,
        malformed = 3,
        unknown_key = 4,
        bad_field = 5,
    };

    /// Configuration problem carrying the process exit code.
    class ConfigError : public Error
    {
    public:
        ConfigError(int code, const std::string &what) : Error(what), code_(code) {}
        int code() const { return code_; }

    private:
        int code_;
    };

    enum class Mode
    {
        fluid_solve,
        equilibrium,
        ode_check,
        simulate,
        compare,
        gc_check,
    };

    inline const char *mode_name(Mode m)
    {
        switch (m)
        {
        case Mode::fluid_solve:
            return "fluid-solve";
        case Mode::equilibrium:
            return "equilibrium";
        case Mode::ode_check:
            return "ode-check";
        case Mode::simulate:
            return "simulate";
        case Mode::compare:
            return "compare";
        case Mode::gc_check:
            return "gc-check";
        }
        return "?";
    }

    struct EquilibriumFile
    {
        fs::path path;
    };
    struct EquilibriumStart
    {
    };
    using InitialSpec = std::variant<std::monostate, EquilibriumFile, EquilibriumStart, InitialCondition>;

    struct ProbeSpec
    {
        std::size_t count = 512;
        std::optional<double> lo;
        std::optional<double> hi;
    };

    struct RunConfig
    {
        Mode mode = Mode::fluid_solve;
        double lambda = 0.0;
        std::optional<Distribution> patience;
        std::optional<Distribution> service;
        std::optional<Distribution> arrival;      // interarrival shape, rescaled to mean 1/(n lambda)
        std::optional<Distribution> distribution; // gc-check
        double horizon = 10.0;
        double dt = 1e-3;
        double tolerance = 1e-10;
        int max_inner_iterations = 50;
        InitialSpec initial;
        std::vector<std::size_t> servers; // one entry for simulate, the sweep for compare
        std::vector<double> snapshot_times;
        std::vector<double> profile_times;
        ProbeSpec probes;
        std::uint64_t seed = 1;
        std::size_t replications = 20;
        BufferSeeding seeding = BufferSeeding::full_profile;
        ExpOdeConfig ode;
        std::size_t samples = 10000;
        fs::path out = ".";
    };

    namespace detail
    {
        struct ModeKeys
        {
            std::set<std::string> required;
            std::set<std::string> optional;
        };

        inline const std::map<std::string, Mode> &modes()
        {
            static const std::map<std::string, Mode> m{
                {"fluid-solve", Mode::fluid_solve}, {"equilibrium", Mode::equilibrium},
                {"ode-check", Mode::ode_check},     {"simulate", Mode::simulate},
                {"compare", Mode::compare},         {"gc-check", Mode::gc_check},
            };
            return m;
        }

        inline const std::set<std::string> &all_keys()
        {
            static const std::set<std::string> k{
                "mode",     "out",          "lambda",         "patience",        "service",       "arrival",
                "T",        "dt",           "tolerance",      "max_inner_iterations", "initial",  "n",
                "n_list",   "snapshot_times", "snapshot_every", "profile_times", "probes",        "seed",
                "replications", "buffer_seeding", "mu",       "alpha",           "rho",           "x0",
                "distribution", "samples",
            };
            return k;
        }

        inline ModeKeys mode_keys(Mode m)
        {
            switch (m)
            {
            case Mode::fluid_solve:
                return {{"lambda", "patience", "service"},
                        {"T", "dt", "tolerance", "max_inner_iterations", "initial", "profile_times", "probes"}};
            case Mode::equilibrium:
                return {{"lambda", "patience", "service"}, {"probes"}};
            case Mode::ode_check:
                return {{"mu", "alpha", "rho"}, {"x0", "T", "dt", "tolerance"}};
            case Mode::simulate:
                return {{"n", "lambda", "patience", "service"},
                        {"arrival", "T", "dt", "initial", "snapshot_times", "snapshot_every", "probes", "seed",
                         "replications", "buffer_seeding"}};
            case Mode::compare:
                return {{"n_list", "lambda", "patience", "service"},
                        {"arrival", "T", "dt", "tolerance", "max_inner_iterations", "initial", "snapshot_times",
                         "snapshot_every", "probes", "seed", "replications", "buffer_seeding"}};
            case Mode::gc_check:
                return {{"distribution"}, {"samples", "seed", "probes"}};
            }
            return {};
        }

        [[noreturn]] inline void bad(const std::string &what) { throw ConfigError(bad_field, "config: " + what); }

        inline double number(const json &j, const std::string &key)
        {
            if (!j.is_number())
                bad("\"" + key + "\" must be a number");
            const double v = j.get<double>();
            if (!std::isfinite(v))
                bad("\"" + key + "\" must be finite");
            return v;
        }

        inline double positive(const json &j, const std::string &key)
        {
            const double v = number(j, key);
            if (!(v > 0.0))
                bad("\"" + key + "\" must be positive");
            return v;
        }

        inline std::uint64_t count(const json &j, const std::string &key, std::uint64_t min = 1)
        {
            if (!j.is_number_integer() || j.get<std::int64_t>() < static_cast<std::int64_t>(min))
                bad("\"" + key + "\" must be an integer >= " + std::to_string(min));
            return j.get<std::uint64_t>();
        }

        inline std::vector<double> times(const json &j, const std::string &key)
        {
            if (!j.is_array() || j.empty())
                bad("\"" + key + "\" must be a nonempty array of times");
            std::vector<double> out;
            for (const auto &v : j)
                out.push_back(number(v, key));
            return out;
        }

        inline Distribution distribution(const json &j, const std::string &key)
        {
            try
            {
                return io::distribution_from_json(j, key);
            }
            catch (const io::UnknownKey &e)
            {
                throw ConfigError(unknown_key, std::string("config: ") + e.what());
            }
            catch (const InvalidArgument &e)
            {
                bad(e.what());
            }
        }

        inline void check_keys(const json &j, std::initializer_list<const char *> allowed, const std::string &where)
        {
            const std::set<std::string> ok(allowed.begin(), allowed.end());
            for (const auto &[k, v] : j.items())
                if (!ok.contains(k))
                    throw ConfigError(unknown_key, "config: unknown key \"" + k + "\" in " + where);
        }

        inline ServerProfile server_profile(const json &j)
        {
            if (!j.is_object())
                bad("\"initial.server\" must be an object");
            check_keys(j, {"profile", "mass"}, "initial.server");
            if (!j.contains("profile") || !j["profile"].is_string())
                bad("\"initial.server.profile\" must be one of empty, equilibrium, service_complement");
            const auto kind = j["profile"].get<std::string>();
            if (kind == "empty")
            {
                if (j.contains("mass"))
                    bad("\"initial.server.mass\" does not apply to the empty profile");
                return EmptyProfile{};
            }
            if (!j.contains("mass"))
                bad("\"initial.server.mass\" is required");
            const double mass = number(j["mass"], "initial.server.mass");
            if (kind == "equilibrium")
                return EquilibriumProfile{mass};
            if (kind == "service_complement")
                return ServiceComplementProfile{mass};
            bad("\"initial.server.profile\" must be one of empty, equilibrium, service_complement");
        }

        inline InitialSpec initial(const json &j, const fs::path &base)
        {
            if (!j.is_object())
                bad("\"initial\" must be an object");
            check_keys(j, {"equilibrium_file", "equilibrium", "buffer_mass", "server"}, "initial");
            const int forms = static_cast<int>(j.contains("equilibrium_file")) +
                              static_cast<int>(j.contains("equilibrium")) +
                              static_cast<int>(j.contains("buffer_mass") || j.contains("server"));
            if (forms != 1)
                bad("\"initial\" takes exactly one of equilibrium_file, equilibrium, or buffer_mass/server");
            if (j.contains("equilibrium_file"))
            {
                if (!j["equilibrium_file"].is_string())
                    bad("\"initial.equilibrium_file\" must be a path");
                fs::path p = j["equilibrium_file"].get<std::string>();
                if (p.is_relative() && !fs::exists(p) && !base.empty())
                    p = base / p;
                return EquilibriumFile{p};
            }
            if (j.contains("equilibrium"))
            {
                if (!j["equilibrium"].is_boolean() || !j["equilibrium"].get<bool>())
                    bad("\"initial.equilibrium\" must be true");
                return EquilibriumStart{};
            }
            InitialCondition ic;
            if (j.contains("buffer_mass"))
                ic.buffer_mass = number(j["buffer_mass"], "initial.buffer_mass");
            if (j.contains("server"))
                ic.server = server_profile(j["server"]);
            return ic;
        }

        inline ProbeSpec probes(const json &j)
        {
            if (!j.is_object())
                bad("\"probes\" must be an object");
            check_keys(j, {"count", "lo", "hi"}, "probes");
            ProbeSpec p;
            if (j.contains("count"))
                p.count = count(j["count"], "probes.count", 2);
            if (j.contains("lo"))
                p.lo = number(j["lo"], "probes.lo");
            if (j.contains("hi"))
                p.hi = number(j["hi"], "probes.hi");
            if (p.lo && p.hi && !(*p.hi > *p.lo))
                bad("\"probes.hi\" must exceed \"probes.lo\"");
            return p;
        }

        inline bool on_grid(double t, double dt)
        {
            const double k = std::round(t / dt);
            return std::abs(k * dt - t) <= 1e-12 * std::max(1.0, std::abs(t));
        }
    }

    /// Apply a dotted-path override such as "patience.rate=2" or "n_list=[10,20]".
    /// The value is parsed as JSON; anything that fails to parse is taken as a string.
    inline void apply_override(json &root, const std::string &assignment)
    {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError(bad_field, "override \"" + assignment + "\" is not of the form key=value");
        const std::string path = assignment.substr(0, eq);
        const std::string text = assignment.substr(eq + 1);
        json value = json::parse(text, nullptr, false);
        if (value.is_discarded())
            value = text;

        json *node = &root;
        std::size_t start = 0;
        while (true)
        {
            const auto dot = path.find('.', start);
            const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
            if (key.empty())
                throw ConfigError(bad_field, "override \"" + assignment + "\" has an empty key segment");
            if (!node->is_object())
                *node = json::object();
            if (dot == std::string::npos)
            {
                (*node)[key] = value;
                return;
            }
            node = &(*node)[key];
            start = dot + 1;
        }
    }

    /// Strict conversion of a parsed JSON document. `base` resolves relative
    /// paths inside the config (the config file's directory).
    inline RunConfig parse_config(const json &j, const fs::path &base = {})
    {
        using namespace detail;
        if (!j.is_object())
            throw ConfigError(malformed, "config: top level must be an object");
        for (const auto &[k, v] : j.items())
            if (!all_keys().contains(k))
                throw ConfigError(unknown_key, "config: unknown key \"" + k + "\"");
        if (!j.contains("mode") || !j["mode"].is_string() || !modes().contains(j["mode"].get<std::string>()))
            bad("\"mode\" must be one of fluid-solve, equilibrium, ode-check, simulate, compare, gc-check");

        RunConfig cfg;
        cfg.mode = modes().at(j["mode"].get<std::string>());
        const auto keys = mode_keys(cfg.mode);
        for (const auto &[k, v] : j.items())
            if (k != "mode" && k != "out" && !keys.required.contains(k) && !keys.optional.contains(k))
                bad("\"" + k + "\" does not apply to mode " + mode_name(cfg.mode));
        for (const auto &k : keys.required)
            if (!j.contains(k))
                bad("mode " + std::string(mode_name(cfg.mode)) + " requires \"" + k + "\"");

        if (j.contains("out"))
        {
            if (!j["out"].is_string())
                bad("\"out\" must be a path");
            cfg.out = j["out"].get<std::string>();
        }
        if (j.contains("lambda"))
            cfg.lambda = positive(j["lambda"], "lambda");
        if (j.contains("patience"))
            cfg.patience = distribution(j["patience"], "patience");
        if (j.contains("service"))
            cfg.service = distribution(j["service"], "service");
        if (j.contains("arrival"))
            cfg.arrival = distribution(j["arrival"], "arrival");
        if (j.contains("distribution"))
            cfg.distribution = distribution(j["distribution"], "distribution");
        if (j.contains("T"))
            cfg.horizon = positive(j["T"], "T");
        if (j.contains("dt"))
            cfg.dt = positive(j["dt"], "dt");
        if (j.contains("tolerance"))
            cfg.tolerance = positive(j["tolerance"], "tolerance");
        if (j.contains("max_inner_iterations"))
            cfg.max_inner_iterations = static_cast<int>(count(j["max_inner_iterations"], "max_inner_iterations"));
        if (j.contains("initial"))
            cfg.initial = initial(j["initial"], base);
        if (j.contains("n"))
            cfg.servers = {static_cast<std::size_t>(count(j["n"], "n"))};
        if (j.contains("n_list"))
        {
            if (!j["n_list"].is_array() || j["n_list"].empty())
                bad("\"n_list\" must be a nonempty array of server counts");
            for (const auto &v : j["n_list"])
                cfg.servers.push_back(static_cast<std::size_t>(count(v, "n_list")));
        }
        if (j.contains("probes"))
            cfg.probes = probes(j["probes"]);
        if (j.contains("seed"))
            cfg.seed = count(j["seed"], "seed", 0);
        if (j.contains("replications"))
            cfg.replications = static_cast<std::size_t>(count(j["replications"], "replications"));
        if (j.contains("samples"))
        {
            cfg.samples = static_cast<std::size_t>(count(j["samples"], "samples", 100));
        }
        if (j.contains("buffer_seeding"))
        {
            const auto &b = j["buffer_seeding"];
            if (b == "full_profile")
                cfg.seeding = BufferSeeding::full_profile;
            else if (b == "real_queue_only")
                cfg.seeding = BufferSeeding::real_queue_only;
            else
                bad("\"buffer_seeding\" must be full_profile or real_queue_only");
            if (!j.contains("initial"))
                bad("\"buffer_seeding\" needs an \"initial\" condition to seed from");
        }
        if (cfg.mode == Mode::ode_check)
        {
            cfg.ode.mu = positive(j["mu"], "mu");
            cfg.ode.alpha = positive(j["alpha"], "alpha");
            cfg.ode.rho = positive(j["rho"], "rho");
            if (j.contains("x0"))
                cfg.ode.x0 = number(j["x0"], "x0");
            if (cfg.ode.x0 < 0.0)
                bad("\"x0\" must be nonnegative");
            cfg.ode.horizon = cfg.horizon;
            cfg.ode.dt = cfg.dt;
        }

        if (j.contains("snapshot_times") && j.contains("snapshot_every"))
            bad("give either \"snapshot_times\" or \"snapshot_every\"");
        if (j.contains("snapshot_times"))
            cfg.snapshot_times = times(j["snapshot_times"], "snapshot_times");
        if (cfg.mode == Mode::simulate || cfg.mode == Mode::compare)
        {
            if (cfg.snapshot_times.empty())
            {
                const double every = j.contains("snapshot_every") ? positive(j["snapshot_every"], "snapshot_every")
                                                                   : 0.5;
                for (double k = 1.0; k * every <= cfg.horizon * (1.0 + 1e-12); k += 1.0)
                    cfg.snapshot_times.push_back(std::min(k * every, cfg.horizon));
                if (cfg.snapshot_times.empty())
                    bad("\"snapshot_every\" exceeds T");
            }
        }
        if (j.contains("profile_times"))
            cfg.profile_times = times(j["profile_times"], "profile_times");
        else if (cfg.mode == Mode::fluid_solve)
            cfg.profile_times = {cfg.horizon};

        for (const auto *list : {&cfg.snapshot_times, &cfg.profile_times})
            for (double t : *list)
            {
                if (t < 0.0 || t > cfg.horizon * (1.0 + 1e-12))
                    bad("time " + io::fmt(t) + " lies outside [0, T]");
                if ((cfg.mode == Mode::compare || cfg.mode == Mode::fluid_solve) && !on_grid(t, cfg.dt))
                    bad("time " + io::fmt(t) + " is not a multiple of dt");
            }
        if (cfg.mode == Mode::compare || cfg.mode == Mode::fluid_solve || cfg.mode == Mode::ode_check)
            if (!on_grid(cfg.horizon, cfg.dt))
                bad("T must be a multiple of dt");
        return cfg;
    }

    /// Read, override and parse a config file.
    inline RunConfig parse_config_file(const fs::path &path, const std::vector<std::string> &overrides = {},
                                       const std::optional<fs::path> &out = std::nullopt)
    {
        std::ifstream in(path);
        if (!fs::is_regular_file(path) || !in)
            throw ConfigError(missing_file, "config: cannot open " + path.string());
        json j = json::parse(in, nullptr, false);
        if (j.is_discarded())
            throw ConfigError(malformed, "config: " + path.string() + " is not valid JSON");
        for (const auto &o : overrides)
            apply_override(j, o);
        auto cfg = parse_config(j, path.parent_path());
        if (out)
            cfg.out = *out;
        return cfg;
    }

    inline std::size_t thread_budget()
    {
        std::size_t n = std::max(1u, std::thread::hardware_concurrency());
        if (const char *env = std::getenv("QF_THREADS"))
        {
            char *end = nullptr;
            const long v = std::strtol(env, &end, 10);
            if (end != env && v >= 1)
                n = std::min<std::size_t>(n, static_cast<std::size_t>(v));
        }
        return n;
    }

    /// Equilibrium summary in the form written by equilibrium mode.
    inline json equilibrium_json(const EquilibriumState &s)
    {
        return json{
            {"w", s.w},
            {"w_bracket", {s.w_lo, s.w_hi}},
            {"Q_inf", s.queue},
            {"Z_inf", s.in_service},
            {"R_inf", s.buffer_mass},
            {"X_inf", s.total()},
            {"abandonment_fraction", s.abandonment_fraction},
            {"rho", s.rho},
        };
    }

    /// Fluid-matched initial condition read back from an equilibrium summary.
    inline InitialCondition read_equilibrium_file(const fs::path &path)
    {
        std::ifstream in(path);
        if (!fs::is_regular_file(path) || !in)
            throw ConfigError(missing_file, "config: cannot open equilibrium file " + path.string());
        const json j = json::parse(in, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw ConfigError(malformed, "config: equilibrium file " + path.string() + " is not valid JSON");
        static const std::set<std::string> known{"w",     "w_bracket", "Q_inf",
                                                 "Z_inf", "R_inf",     "X_inf",
                                                 "abandonment_fraction", "rho"};
        for (const auto &[k, v] : j.items())
            if (!known.contains(k))
                throw ConfigError(unknown_key, "config: unknown key \"" + k + "\" in equilibrium file");
        if (!j.contains("R_inf") || !j.contains("Z_inf"))
            detail::bad("equilibrium file needs R_inf and Z_inf");
        return InitialCondition{detail::number(j["R_inf"], "R_inf"),
                                EquilibriumProfile{detail::number(j["Z_inf"], "Z_inf")}};
    }

    namespace detail
    {
        inline std::optional<InitialCondition> resolve_initial(const RunConfig &cfg)
        {
            return std::visit(
                qfluid::detail::overloaded{
                    [](std::monostate) -> std::optional<InitialCondition> { return std::nullopt; },
                    [](const EquilibriumFile &f) -> std::optional<InitialCondition>
                    { return read_equilibrium_file(f.path); },
                    [&](EquilibriumStart) -> std::optional<InitialCondition>
                    {
                        const auto eq = equilibrium_state(cfg.lambda, *cfg.patience, *cfg.service,
                                                          std::vector<double>{0.0});
                        return as_initial_condition(eq);
                    },
                    [](const InitialCondition &ic) -> std::optional<InitialCondition> { return ic; },
                },
                cfg.initial);
        }

        inline std::vector<double> probe_grid(const RunConfig &cfg)
        {
            double lo = -cfg.horizon;
            double hi = cfg.horizon;
            if (cfg.patience && cfg.service)
            {
                const auto d = default_probes(*cfg.patience, *cfg.service, cfg.horizon, 2);
                lo = d.front();
                hi = d.back();
            }
            return uniform_probes(cfg.probes.lo.value_or(lo), cfg.probes.hi.value_or(hi), cfg.probes.count);
        }

        inline FluidConfig fluid_config(const RunConfig &cfg)
        {
            return FluidConfig{.lambda = cfg.lambda,
                               .patience = *cfg.patience,
                               .service = *cfg.service,
                               .horizon = cfg.horizon,
                               .dt = cfg.dt,
                               .tolerance = cfg.tolerance,
                               .max_inner_iterations = cfg.max_inner_iterations};
        }

        inline void write_profiles(const fs::path &path, const std::vector<double> &probes,
                                   const std::vector<std::pair<double, FluidProfiles>> &at)
        {
            io::CsvWriter csv(path, {"t", "x", "buffer_tail", "server_tail"});
            for (const auto &[t, p] : at)
                for (double x : probes)
                    csv.row(t, x, p.buffer.tail_at(x), p.server.tail_at(x));
        }

        inline SimConfig sim_config(const RunConfig &cfg, std::size_t n, const std::optional<InitialCondition> &ic,
                                    const std::vector<double> &probes)
        {
            SimConfig sc{.servers = n,
                         .interarrival = scaled_interarrival(cfg.arrival.value_or(Distribution::exponential(1.0)),
                                                             n, cfg.lambda),
                         .arrival_times = {},
                         .patience = *cfg.patience,
                         .service = *cfg.service,
                         .horizon = cfg.horizon,
                         .snapshot_times = cfg.snapshot_times,
                         .seed = cfg.seed,
                         .start = EmptyStart{},
                         .probes = probes,
                         .record_service_starts = false};
            if (ic)
                sc.start = FluidMatchedStart{cfg.lambda, *ic, cfg.seeding};
            return sc;
        }

        inline int run_fluid_solve(const RunConfig &cfg, std::ostream &log)
        {
            const auto ic = resolve_initial(cfg).value_or(InitialCondition{});
            const auto sol = solve(fluid_config(cfg), ic);
            const auto report = structural_report(sol);
            const double residual = fixed_point_residual(sol);

            io::CsvWriter csv(cfg.out / "trajectory.csv", {"t", "X", "Q", "Z", "R", "B"});
            for (std::size_t k = 0; k <= sol.steps(); ++k)
                csv.row(sol.time(k), sol.total()[k], sol.queue()[k], sol.in_service()[k], sol.buffer()[k],
                        sol.entered()[k]);

            const auto probes = probe_grid(cfg);
            std::vector<std::pair<double, FluidProfiles>> at;
            for (double t : cfg.profile_times)
                at.emplace_back(t, sol.measures_at(t, probes));
            write_profiles(cfg.out / "profiles.csv", probes, at);

            const json summary{
                {"steps", sol.steps()},
                {"dt", sol.dt()},
                {"X_final", sol.total().back()},
                {"max_inner_iterations_used", sol.max_inner_iterations_used()},
                {"contraction_factor", sol.contraction_factor()},
                {"fixed_point_residual", residual},
                {"min_entered_increment", report.min_entered_increment},
                {"max_queue_excess", report.max_queue_excess},
                {"max_d_increment", check_d_monotone(sol)},
            };
            io::write_json(cfg.out / "fluid_summary.json", summary);
            if (residual > 2.0 * cfg.tolerance)
                throw InvariantViolation("invariant-violation: fixed-point residual " + io::fmt(residual));
            log << "X(T) " << io::fmt(sol.total().back()) << '\n';
            return ok;
        }

        inline int run_equilibrium(const RunConfig &cfg, std::ostream &log)
        {
            const auto probes = probe_grid(cfg);
            const auto eq = equilibrium_state(cfg.lambda, *cfg.patience, *cfg.service, probes);
            const auto j = equilibrium_json(eq);
            io::write_json(cfg.out / "equilibrium.json", j);
            io::CsvWriter csv(cfg.out / "equilibrium_profiles.csv", {"x", "buffer_tail", "server_tail"});
            for (double x : probes)
                csv.row(x, eq.buffer.tail_at(x), eq.server.tail_at(x));
            log << j.dump() << '\n';
            return ok;
        }

        inline int run_ode_check(const RunConfig &cfg, std::ostream &log)
        {
            const auto r = cross_check(cfg.ode, cfg.tolerance);
            io::CsvWriter csv(cfg.out / "ode_check.csv", {"t", "X_ode", "X_fluid", "diff"});
            for (std::size_t k = 0; k < r.times.size(); ++k)
                csv.row(r.times[k], r.ode[k], r.fluid[k], std::abs(r.ode[k] - r.fluid[k]));
            io::write_json(cfg.out / "ode_check_summary.json", json{{"sup_diff", r.sup_diff}});
            log << "sup_diff " << io::fmt(r.sup_diff) << '\n';
            return ok;
        }

        inline void write_replication(const fs::path &path, const SimTrajectory &traj)
        {
            io::CsvWriter csv(path, {"t", "Q", "R", "Z", "X", "abandoned", "completed", "Q_scaled", "R_scaled",
                                     "Z_scaled", "X_scaled", "abandoned_scaled", "completed_scaled"});
            for (const auto &s : traj.snapshots)
            {
                const auto f = fluid_scale(s, traj.servers);
                csv.row(s.time, s.queue, s.buffer_count, s.in_service, s.total, s.abandoned, s.completions, f.queue,
                        f.buffer_count, f.in_service, f.total, f.abandoned, f.completions);
            }
        }

        inline int run_simulate(const RunConfig &cfg, std::ostream &log)
        {
            const auto ic = resolve_initial(cfg);
            const std::size_t n = cfg.servers.front();
            const auto sc = sim_config(cfg, n, ic, {});
            const auto runs = run_replications(sc, cfg.replications, thread_budget());
            for (std::size_t r = 0; r < runs.size(); ++r)
                write_replication(cfg.out / ("sim_n" + std::to_string(n) + "_rep" + std::to_string(r) + ".csv"),
                                  runs[r]);
            log << "wrote " << runs.size() << " replications\n";
            return ok;
        }

        inline int run_compare(const RunConfig &cfg, std::ostream &log)
        {
            const auto ic = resolve_initial(cfg);
            const auto sol = solve(fluid_config(cfg), ic.value_or(InitialCondition{}));
            const auto probes = probe_grid(cfg);

            io::CsvWriter detail(cfg.out / "compare_detail.csv",
                                 {"n", "t", "mean_dist_buffer", "max_dist_buffer", "mean_dist_server",
                                  "max_dist_server", "mean_absQ", "mean_absZ"});
            io::CsvWriter summary(cfg.out / "compare_summary.csv",
                                  {"n", "replications", "mean_sup_dist_buffer", "max_sup_dist_buffer",
                                   "mean_sup_dist_server", "max_sup_dist_server", "mean_sup_absQ", "max_sup_absQ",
                                   "mean_sup_absZ", "mean_final_absZ"});
            for (std::size_t n : cfg.servers)
            {
                const auto sc = sim_config(cfg, n, ic, {});
                const auto runs = run_replications(sc, cfg.replications, thread_budget());
                const auto rep = compare_to_fluid(runs, sol, probes);
                for (const auto &row : rep.rows)
                    detail.row(n, row.time, row.mean_dist_buffer, row.max_dist_buffer, row.mean_dist_server,
                               row.max_dist_server, row.mean_abs_queue, row.mean_abs_in_service);
                const auto &s = rep.summary;
                summary.row(n, s.replications, s.mean_sup_dist_buffer, s.max_sup_dist_buffer, s.mean_sup_dist_server,
                            s.max_sup_dist_server, s.mean_sup_abs_queue, s.max_sup_abs_queue,
                            s.mean_sup_abs_in_service, s.mean_final_abs_in_service);
                log << "n=" << n << " mean sup|Q-Qfluid| " << io::fmt(s.mean_sup_abs_queue) << '\n';
            }
            return ok;
        }

        inline int run_gc_check(const RunConfig &cfg, std::ostream &log)
        {
            const auto &d = *cfg.distribution;
            std::vector<double> probes = gc_probes(d, cfg.probes.count);
            if (cfg.probes.lo || cfg.probes.hi)
                probes = uniform_probes(cfg.probes.lo.value_or(probes.front()), cfg.probes.hi.value_or(probes.back()),
                                        cfg.probes.count);
            const double stat = gc_diagnostic(d, cfg.samples, cfg.seed, probes);
            const double bound = 1.36 / std::sqrt(static_cast<double>(cfg.samples));
            io::write_json(cfg.out / "gc_check.json",
                           json{{"statistic", stat}, {"samples", cfg.samples}, {"ks95_bound", bound}});
            log << "statistic " << io::fmt(stat) << " bound " << io::fmt(bound) << '\n';
            return ok;
        }
    }

    /// Run a parsed config, writing outputs under cfg.out. Library errors
    /// propagate; use run_main for exit-code mapping.
    inline int execute(const RunConfig &cfg, std::ostream &log)
    {
        fs::create_directories(cfg.out);
        switch (cfg.mode)
        {
        case Mode::fluid_solve:
            return detail::run_fluid_solve(cfg, log);
        case Mode::equilibrium:
            return detail::run_equilibrium(cfg, log);
        case Mode::ode_check:
            return detail::run_ode_check(cfg, log);
        case Mode::simulate:
            return detail::run_simulate(cfg, log);
        case Mode::compare:
            return detail::run_compare(cfg, log);
        case Mode::gc_check:
            return detail::run_gc_check(cfg, log);
        }
        return failure;
    }

    /// Parse and execute, mapping every error to its exit code.
    inline int run_main(const fs::path &config, const std::vector<std::string> &overrides,
                        const std::optional<fs::path> &out, std::ostream &log, std::ostream &err)
    {
        try
        {
            const auto cfg = parse_config_file(config, overrides, out);
            return execute(cfg, log);
        }
        catch (const ConfigError &e)
        {
            err << e.what() << '\n';
            return e.code();
        }
        catch (const InvalidInitialCondition &e)
        {
            err << e.what() << '\n';
            return bad_field;
        }
        catch (const InvalidArgument &e)
        {
            err << e.what() << '\n';
            return bad_field;
        }
        catch (const std::exception &e)
        {
            err << e.what() << '\n';
            return failure;
        }
    }
}
