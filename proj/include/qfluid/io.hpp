#pragma once

#include "distributions.hpp"
#include "error.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <set>
#include <string>
#include <vector>

namespace qfluid::io
{
    using json = nlohmann::json;

    /// Thrown for distribution literals with a key that no family accepts.
    class UnknownKey : public InvalidArgument
    {
    public:
        UnknownKey(const std::string &where, const std::string &key)
            : InvalidArgument("unknown key \"" + key + "\" in " + where), key_(key)
        {
        }
        const std::string &key() const { return key_; }

    private:
        std::string key_;
    };

    namespace detail
    {
        inline double number(const json &j, const char *key, const std::string &where)
        {
            if (!j.contains(key))
                throw InvalidArgument(where + ": missing \"" + key + "\"");
            if (!j[key].is_number())
                throw InvalidArgument(where + ": \"" + key + "\" must be a number");
            return j[key].get<double>();
        }

        inline std::vector<double> numbers(const json &j, const char *key, const std::string &where)
        {
            if (!j.contains(key) || !j[key].is_array())
                throw InvalidArgument(where + ": \"" + key + "\" must be an array of numbers");
            std::vector<double> out;
            for (const auto &v : j[key])
            {
                if (!v.is_number())
                    throw InvalidArgument(where + ": \"" + key + "\" must be an array of numbers");
                out.push_back(v.get<double>());
            }
            return out;
        }

        inline void only_keys(const json &j, std::initializer_list<const char *> allowed, const std::string &where)
        {
            const std::set<std::string> ok(allowed.begin(), allowed.end());
            for (const auto &[k, v] : j.items())
                if (!ok.contains(k))
                    throw UnknownKey(where, k);
        }
    }

    /// Distribution literal, e.g. {"family": "lognormal", "mean": 1, "cv": 1}.
    ///
    /// Families: exponential {rate}, deterministic {value}, uniform {lo, hi},
    /// lognormal {mu, sigma} or {mean, cv}, hyperexponential {weights, rates}.
    inline Distribution distribution_from_json(const json &j, const std::string &where = "distribution")
    {
        if (!j.is_object())
            throw InvalidArgument(where + ": expected an object");
        if (!j.contains("family") || !j["family"].is_string())
            throw InvalidArgument(where + ": missing \"family\"");
        const auto family = j["family"].get<std::string>();
        using detail::number;
        if (family == "exponential")
        {
            detail::only_keys(j, {"family", "rate"}, where);
            return Distribution::exponential(number(j, "rate", where));
        }
        if (family == "deterministic")
        {
            detail::only_keys(j, {"family", "value"}, where);
            return Distribution::deterministic(number(j, "value", where));
        }
        if (family == "uniform")
        {
            detail::only_keys(j, {"family", "lo", "hi"}, where);
            return Distribution::uniform(number(j, "lo", where), number(j, "hi", where));
        }
        if (family == "lognormal")
        {
            detail::only_keys(j, {"family", "mu", "sigma", "mean", "cv"}, where);
            if (j.contains("mean") || j.contains("cv"))
            {
                if (j.contains("mu") || j.contains("sigma"))
                    throw InvalidArgument(where + ": give either mu/sigma or mean/cv");
                return Distribution::lognormal_from_mean_cv(number(j, "mean", where), number(j, "cv", where));
            }
            return Distribution::lognormal(number(j, "mu", where), number(j, "sigma", where));
        }
        if (family == "hyperexponential")
        {
            detail::only_keys(j, {"family", "weights", "rates"}, where);
            return Distribution::hyperexponential(detail::numbers(j, "weights", where),
                                                  detail::numbers(j, "rates", where));
        }
        throw InvalidArgument(where + ": unknown family \"" + family + "\"");
    }

    inline json to_json(const Distribution &d)
    {
        return std::visit(
            qfluid::detail::overloaded{
                [](const Exponential &p) { return json{{"family", "exponential"}, {"rate", p.rate}}; },
                [](const Deterministic &p) { return json{{"family", "deterministic"}, {"value", p.value}}; },
                [](const Uniform &p) { return json{{"family", "uniform"}, {"lo", p.lo}, {"hi", p.hi}}; },
                [](const LogNormal &p) { return json{{"family", "lognormal"}, {"mu", p.mu}, {"sigma", p.sigma}}; },
                [](const HyperExponential &p)
                { return json{{"family", "hyperexponential"}, {"weights", p.weights}, {"rates", p.rates}}; },
            },
            d.params());
    }

    /// Shortest-round-trip-safe decimal form (17 significant digits).
    inline std::string fmt(double v)
    {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    }

    /// Minimal CSV writer; numbers are written with 17 significant digits.
    class CsvWriter
    {
    public:
        CsvWriter(const std::filesystem::path &path, const std::vector<std::string> &header) : out_(path)
        {
            if (!out_)
                throw Error("cannot open " + path.string() + " for writing");
            row_strings(header);
        }

        template <typename... Ts>
        void row(const Ts &...values)
        {
            bool first = true;
            ((out_ << (first ? "" : ",") << cell(values), first = false), ...);
            out_ << '\n';
        }

        void row_strings(const std::vector<std::string> &cells)
        {
            for (std::size_t i = 0; i < cells.size(); ++i)
                out_ << (i ? "," : "") << cells[i];
            out_ << '\n';
        }

    private:
        static std::string cell(double v) { return fmt(v); }
        static std::string cell(const std::string &s) { return s; }
        static std::string cell(const char *s) { return s; }
        template <typename I>
            requires std::is_integral_v<I>
        static std::string cell(I v)
        {
            return std::to_string(v);
        }

        std::ofstream out_;
    };

    inline void write_json(const std::filesystem::path &path, const json &j)
    {
        std::ofstream out(path);
        if (!out)
            throw Error("cannot open " + path.string() + " for writing");
        out << j.dump(2) << '\n';
    }
}
