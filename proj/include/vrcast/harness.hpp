// vrcast: multicast power allocation for tiled 360-degree video
// Copyright (C) 2026 The vrcast Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#pragma once

#include "transcoding.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace vrcast
{
struct ConfigError : std::runtime_error
{
    using std::runtime_error::runtime_error;
};

enum class Scenario
{
    no_transcode,
    transcode
};

enum class Scheme
{
    optimal_small_groups,
    asymptotic,
    dc_general,
    baseline1,
    baseline2,
    baseline3
};

enum class SweepParam
{
    none,
    K,
    M,
    delta,
    tau
};

enum class DirectionSource
{
    synthetic,
    csv,
    list
};

inline const char *to_string(Scenario s) { return s == Scenario::transcode ? "transcode" : "no_transcode"; }

inline const char *to_string(Scheme s)
{
    switch (s)
    {
    case Scheme::optimal_small_groups:
        return "optimal_small_groups";
    case Scheme::asymptotic:
        return "asymptotic";
    case Scheme::dc_general:
        return "dc_general";
    case Scheme::baseline1:
        return "baseline1";
    case Scheme::baseline2:
        return "baseline2";
    case Scheme::baseline3:
        return "baseline3";
    }
    return "?";
}

inline const char *to_string(SweepParam p)
{
    switch (p)
    {
    case SweepParam::none:
        return "none";
    case SweepParam::K:
        return "K";
    case SweepParam::M:
        return "M";
    case SweepParam::delta:
        return "delta";
    case SweepParam::tau:
        return "tau";
    }
    return "?";
}

inline Scheme parse_scheme(const std::string &s)
{
    for (auto v : {Scheme::optimal_small_groups, Scheme::asymptotic, Scheme::dc_general, Scheme::baseline1, Scheme::baseline2, Scheme::baseline3})
        if (s == to_string(v))
            return v;
    throw ConfigError("scheme: unknown value '" + s + "'");
}

inline SweepParam parse_sweep(const std::string &s)
{
    for (auto v : {SweepParam::none, SweepParam::K, SweepParam::M, SweepParam::delta, SweepParam::tau})
        if (s == to_string(v))
            return v;
    throw ConfigError("sweep.param: unknown value '" + s + "'");
}

inline Scenario parse_scenario(const std::string &s)
{
    if (s == "no_transcode")
        return Scenario::no_transcode;
    if (s == "transcode")
        return Scenario::transcode;
    throw ConfigError("scenario: unknown value '" + s + "'");
}

// Video bitrates of the five levels, Mbit/s, for the whole 360-degree frame. Not taken from a measured sequence.
inline const std::vector<double> &default_video_rates_mbps()
{
    static const std::vector<double> d{2.5, 5.0, 8.0, 12.0, 16.0};
    return d;
}

inline QualityLadder default_ladder(const TileGrid &grid)
{
    QualityLadder q;
    for (double mbps : default_video_rates_mbps())
        q.D.push_back(mbps * 1e6 / (grid.u_h * grid.u_v));
    return q;
}

struct ExperimentConfig
{
    Scenario scenario = Scenario::no_transcode;
    std::vector<Scheme> schemes{Scheme::optimal_small_groups};
    SweepParam sweep = SweepParam::none;
    std::vector<double> values;
    int draws = 100;
    std::uint64_t seed = 1;
    int direction_samples = 1; // synthetic direction sets averaged per record
    SystemParams system;
    QualityLadder ladder;
    bool default_ladder_used = true;
    TileGrid grid;
    FovSpec fov;
    std::vector<UserProfile> users;
    DirectionSource directions = DirectionSource::synthetic;
    std::string directions_path;
    std::vector<ViewingDirection> direction_list;

    ExperimentConfig()
    {
        grid.u_h = 30;
        grid.u_v = 15;
        ladder = default_ladder(grid);
        for (int r : {2, 2, 3, 3, 4})
            users.push_back({1.0, r, 1e-6});
    }
};

namespace detail
{
inline void check_keys(const nlohmann::json &j, const std::string &path, std::initializer_list<const char *> allowed)
{
    if (!j.is_object())
        throw ConfigError(path + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
    {
        bool ok = false;
        for (const char *a : allowed)
            ok = ok || it.key() == a;
        if (!ok)
            throw ConfigError((path.empty() ? "" : path + ".") + it.key() + ": unknown key");
    }
}

template <class T>
T get_as(const nlohmann::json &j, const std::string &path)
{
    try
    {
        return j.get<T>();
    }
    catch (const nlohmann::json::exception &)
    {
        throw ConfigError(path + ": wrong type");
    }
}

inline double get_number(const nlohmann::json &j, const std::string &path)
{
    if (!j.is_number())
        throw ConfigError(path + ": expected a number");
    return j.get<double>();
}

inline int get_int(const nlohmann::json &j, const std::string &path)
{
    if (!j.is_number_integer())
        throw ConfigError(path + ": expected an integer");
    return j.get<int>();
}
} // namespace detail

inline void validate(const ExperimentConfig &c)
{
    if (c.draws < 1)
        throw ConfigError("draws: must be >= 1");
    if (c.direction_samples < 1)
        throw ConfigError("direction_samples: must be >= 1");
    if (c.schemes.empty())
        throw ConfigError("scheme: at least one scheme required");
    for (auto s : c.schemes)
    {
        if (s == Scheme::baseline3 && c.scenario != Scenario::transcode)
            throw ConfigError("scheme: baseline3 needs scenario transcode");
        if ((s == Scheme::baseline1 || s == Scheme::baseline2) && c.scenario != Scenario::no_transcode)
            throw ConfigError(std::string("scheme: ") + to_string(s) + " needs scenario no_transcode");
    }
    try
    {
        validate(c.system);
        validate(c.ladder);
        validate(c.grid);
        validate(c.fov);
    }
    catch (const std::invalid_argument &e)
    {
        throw ConfigError(std::string("system/ladder/grid/fov: ") + e.what());
    }
    if (c.users.empty())
        throw ConfigError("users: at least one user required");
    for (std::size_t k = 0; k < c.users.size(); ++k)
    {
        const auto &u = c.users[k];
        std::string p = "users[" + std::to_string(k) + "]";
        if (!(u.beta > 0.0))
            throw ConfigError(p + ".beta: must be > 0");
        if (u.r < 1 || u.r > c.ladder.L())
            throw ConfigError(p + ".r: must be in 1.." + std::to_string(c.ladder.L()));
        if (!(u.E >= 0.0))
            throw ConfigError(p + ".E: must be >= 0");
    }
    if (c.directions == DirectionSource::list && c.direction_list.size() < c.users.size())
        throw ConfigError("directions.values: need one direction per user");
    if (c.directions == DirectionSource::csv && c.directions_path.empty())
        throw ConfigError("directions.path: required for csv source");
    if (c.sweep == SweepParam::none && !c.values.empty())
        throw ConfigError("sweep.values: must be empty without a sweep");
    if (c.sweep != SweepParam::none && c.values.empty())
        throw ConfigError("sweep.values: at least one value required");
    for (std::size_t i = 0; i < c.values.size(); ++i)
    {
        double v = c.values[i];
        std::string p = "sweep.values[" + std::to_string(i) + "]";
        bool integral = v == std::floor(v);
        switch (c.sweep)
        {
        case SweepParam::K:
            if (!integral || v < 1 || v > static_cast<double>(c.users.size()))
                throw ConfigError(p + ": K must be an integer in 1.." + std::to_string(c.users.size()));
            break;
        case SweepParam::M:
            if (!integral || v < 1)
                throw ConfigError(p + ": M must be a positive integer");
            break;
        case SweepParam::tau:
            if (!integral || v < 1)
                throw ConfigError(p + ": tau must be a positive integer");
            if (c.ladder.L() < 5)
                throw ConfigError(p + ": tau levels reach 5, ladder too short");
            break;
        case SweepParam::delta:
        case SweepParam::none:
            if (!std::isfinite(v))
                throw ConfigError(p + ": must be finite");
            break;
        }
    }
}

inline ExperimentConfig parse_config(const nlohmann::json &j)
{
    using namespace detail;
    ExperimentConfig c;
    check_keys(j, "", {"scenario", "scheme", "sweep", "draws", "seed", "direction_samples", "system", "ladder", "grid", "fov", "users", "directions"});
    if (j.contains("scenario"))
        c.scenario = parse_scenario(get_as<std::string>(j["scenario"], "scenario"));
    if (j.contains("scheme"))
    {
        c.schemes.clear();
        if (j["scheme"].is_string())
            c.schemes.push_back(parse_scheme(j["scheme"].get<std::string>()));
        else if (j["scheme"].is_array())
            for (std::size_t i = 0; i < j["scheme"].size(); ++i)
                c.schemes.push_back(parse_scheme(get_as<std::string>(j["scheme"][i], "scheme[" + std::to_string(i) + "]")));
        else
            throw ConfigError("scheme: expected a string or a list of strings");
    }
    if (j.contains("sweep"))
    {
        const auto &s = j["sweep"];
        if (s.is_string())
            c.sweep = parse_sweep(s.get<std::string>());
        else
        {
            check_keys(s, "sweep", {"param", "values"});
            if (s.contains("param"))
                c.sweep = parse_sweep(get_as<std::string>(s["param"], "sweep.param"));
            if (s.contains("values"))
            {
                if (!s["values"].is_array())
                    throw ConfigError("sweep.values: expected a list");
                for (std::size_t i = 0; i < s["values"].size(); ++i)
                    c.values.push_back(get_number(s["values"][i], "sweep.values[" + std::to_string(i) + "]"));
            }
        }
    }
    if (j.contains("draws"))
        c.draws = get_int(j["draws"], "draws");
    if (j.contains("seed"))
    {
        if (!j["seed"].is_number_unsigned())
            throw ConfigError("seed: expected a nonnegative integer");
        c.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("direction_samples"))
        c.direction_samples = get_int(j["direction_samples"], "direction_samples");
    if (j.contains("system"))
    {
        const auto &s = j["system"];
        check_keys(s, "system", {"M", "N", "B", "sigma2", "alpha"});
        if (s.contains("M"))
            c.system.M = get_int(s["M"], "system.M");
        if (s.contains("N"))
            c.system.N = get_int(s["N"], "system.N");
        if (s.contains("B"))
            c.system.B = get_number(s["B"], "system.B");
        if (s.contains("sigma2"))
            c.system.sigma2 = get_number(s["sigma2"], "system.sigma2");
        if (s.contains("alpha"))
            c.system.alpha = get_number(s["alpha"], "system.alpha");
    }
    if (j.contains("grid"))
    {
        const auto &g = j["grid"];
        check_keys(g, "grid", {"u_h", "u_v"});
        if (g.contains("u_h"))
            c.grid.u_h = get_int(g["u_h"], "grid.u_h");
        if (g.contains("u_v"))
            c.grid.u_v = get_int(g["u_v"], "grid.u_v");
        if (c.default_ladder_used && c.grid.u_h > 0 && c.grid.u_v > 0)
            c.ladder = default_ladder(c.grid);
    }
    if (j.contains("ladder"))
    {
        const auto &l = j["ladder"];
        check_keys(l, "ladder", {"D"});
        if (!l.contains("D") || !l["D"].is_array())
            throw ConfigError("ladder.D: expected a list of per-tile rates in bit/s");
        c.ladder.D.clear();
        for (std::size_t i = 0; i < l["D"].size(); ++i)
            c.ladder.D.push_back(get_number(l["D"][i], "ladder.D[" + std::to_string(i) + "]"));
        c.default_ladder_used = false;
    }
    if (j.contains("fov"))
    {
        const auto &f = j["fov"];
        check_keys(f, "fov", {"f_h", "f_v", "margin"});
        if (f.contains("f_h"))
            c.fov.f_h = get_number(f["f_h"], "fov.f_h");
        if (f.contains("f_v"))
            c.fov.f_v = get_number(f["f_v"], "fov.f_v");
        if (f.contains("margin"))
            c.fov.margin = get_number(f["margin"], "fov.margin");
    }
    if (j.contains("users"))
    {
        if (!j["users"].is_array())
            throw ConfigError("users: expected a list");
        c.users.clear();
        for (std::size_t k = 0; k < j["users"].size(); ++k)
        {
            const auto &u = j["users"][k];
            std::string p = "users[" + std::to_string(k) + "]";
            check_keys(u, p, {"beta", "r", "E"});
            UserProfile up;
            if (u.contains("beta"))
                up.beta = get_number(u["beta"], p + ".beta");
            if (!u.contains("r"))
                throw ConfigError(p + ".r: required");
            up.r = get_int(u["r"], p + ".r");
            if (u.contains("E"))
                up.E = get_number(u["E"], p + ".E");
            c.users.push_back(up);
        }
    }
    if (j.contains("directions"))
    {
        const auto &d = j["directions"];
        check_keys(d, "directions", {"source", "path", "values"});
        std::string src = d.contains("source") ? get_as<std::string>(d["source"], "directions.source") : "synthetic";
        if (src == "synthetic")
            c.directions = DirectionSource::synthetic;
        else if (src == "csv")
        {
            c.directions = DirectionSource::csv;
            if (d.contains("path"))
                c.directions_path = get_as<std::string>(d["path"], "directions.path");
        }
        else if (src == "list")
        {
            c.directions = DirectionSource::list;
            if (!d.contains("values") || !d["values"].is_array())
                throw ConfigError("directions.values: expected a list of [yaw, pitch]");
            for (std::size_t i = 0; i < d["values"].size(); ++i)
            {
                const auto &v = d["values"][i];
                std::string p = "directions.values[" + std::to_string(i) + "]";
                if (!v.is_array() || v.size() != 2)
                    throw ConfigError(p + ": expected [yaw_deg, pitch_deg]");
                c.direction_list.push_back({get_number(v[0], p + "[0]"), get_number(v[1], p + "[1]")});
            }
        }
        else
            throw ConfigError("directions.source: unknown value '" + src + "'");
    }
    validate(c);
    return c;
}

inline ExperimentConfig parse_config_text(const std::string &text)
{
    nlohmann::json j;
    try
    {
        j = nlohmann::json::parse(text);
    }
    catch (const nlohmann::json::parse_error &e)
    {
        throw ConfigError(std::string("config: not valid JSON: ") + e.what());
    }
    return parse_config(j);
}

inline ExperimentConfig load_config(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

// ---- directions and sweeps ----

// Uniform yaw, pitch from a normal(0, 20 deg) clipped to the poles. Counter-based so a (seed, sample) pair is reproducible.
inline std::vector<ViewingDirection> synthetic_directions(std::uint64_t seed, std::uint64_t sample, int K)
{
    std::vector<ViewingDirection> out;
    for (int k = 0; k < K; ++k)
    {
        std::uint64_t base = detail::mix64(detail::mix64(seed ^ 0xd1b54a32d192ed03ULL) + detail::mix64(sample * 977 + static_cast<std::uint64_t>(k)));
        double u0 = detail::unit_open(detail::mix64(base + 1));
        double u1 = detail::unit_open(detail::mix64(base + 2));
        double u2 = detail::unit_open(detail::mix64(base + 3));
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        out.push_back({360.0 * u0 - (u0 == 1.0 ? 360.0 : 0.0), std::clamp(20.0 * z, -90.0, 90.0)});
    }
    return out;
}

// Levels for similarity tau. For five users this is (min{tau,3}, min{tau+1,3}, 3, max{3,5-tau}, max{3,6-tau});
// other K use offsets k - floor(K/2) clipped to [-2, 2] and shrunk toward 3 by tau - 1.
inline std::vector<int> tau_levels(int tau, int K)
{
    if (tau < 1 || K < 1)
        throw std::invalid_argument("tau_levels: tau >= 1 and K >= 1");
    std::vector<int> r;
    for (int k = 0; k < K; ++k)
    {
        int o = std::clamp(k - K / 2, -2, 2);
        int mag = std::max(0, std::abs(o) - (tau - 1));
        r.push_back(3 + (o < 0 ? -mag : mag));
    }
    return r;
}

// First floor(K/2) yaws move by +delta, last floor(K/2) by -delta, a middle user stays.
inline std::vector<ViewingDirection> shift_directions(const std::vector<ViewingDirection> &base, double delta)
{
    std::vector<ViewingDirection> out = base;
    const int K = static_cast<int>(base.size());
    for (int k = 0; k < K; ++k)
    {
        if (k < K / 2)
            out[k].yaw = wrap_yaw(base[k].yaw + delta);
        else if (k >= K - K / 2)
            out[k].yaw = wrap_yaw(base[k].yaw - delta);
    }
    return out;
}

inline std::vector<ViewingDirection> base_directions(const ExperimentConfig &c, std::uint64_t sample)
{
    const int K = static_cast<int>(c.users.size());
    switch (c.directions)
    {
    case DirectionSource::list:
        return {c.direction_list.begin(), c.direction_list.begin() + K};
    case DirectionSource::csv:
    {
        auto rows = load_directions_csv(c.directions_path);
        if (static_cast<int>(rows.size()) < K)
            throw ConfigError("directions.path: fewer rows than users");
        std::vector<ViewingDirection> d;
        for (int k = 0; k < K; ++k)
            d.push_back(rows[k].dir);
        return d;
    }
    case DirectionSource::synthetic:
        break;
    }
    return synthetic_directions(c.seed, sample, K);
}

// Instance for one sweep point and direction sample.
inline Instance sweep_instance(const ExperimentConfig &c, double value, std::uint64_t sample)
{
    SystemParams sys = c.system;
    auto users = c.users;
    auto dirs = base_directions(c, sample);
    switch (c.sweep)
    {
    case SweepParam::K:
        users.resize(static_cast<std::size_t>(value));
        dirs.resize(static_cast<std::size_t>(value));
        break;
    case SweepParam::M:
        sys.M = static_cast<int>(value);
        break;
    case SweepParam::delta:
        dirs = shift_directions(dirs, value);
        break;
    case SweepParam::tau:
    {
        auto r = tau_levels(static_cast<int>(value), static_cast<int>(users.size()));
        for (std::size_t k = 0; k < users.size(); ++k)
            users[k].r = r[k];
        break;
    }
    case SweepParam::none:
        break;
    }
    return make_instance(sys, c.ladder, users, dirs, c.fov, c.grid);
}

// ---- schemes ----

inline AllocationSolution baseline1(const Instance &inst, const ChannelRealization &ch)
{
    auto msgs = unicast_messages(inst);
    return solve_with_beams(inst, msgs, compute_beams(inst, msgs, ch, BeamChoice::mrt));
}

inline AllocationSolution baseline2(const Instance &inst, const ChannelRealization &ch)
{
    auto msgs = natural_messages(inst);
    return solve_with_beams(inst, msgs, compute_beams(inst, msgs, ch, BeamChoice::mrt));
}

inline AllocationSolution solve_no_transcode(const Instance &inst, const ChannelRealization &ch, Scheme s)
{
    switch (s)
    {
    case Scheme::optimal_small_groups:
        return solve_realization(inst, natural_messages(inst), ch, InnerSolver::optimal_small_groups);
    case Scheme::asymptotic:
        return solve_realization(inst, natural_messages(inst), ch, InnerSolver::asymptotic);
    case Scheme::dc_general:
        return solve_realization(inst, natural_messages(inst), ch, InnerSolver::dc_general);
    case Scheme::baseline1:
        return baseline1(inst, ch);
    case Scheme::baseline2:
        return baseline2(inst, ch);
    case Scheme::baseline3:
        break;
    }
    throw std::invalid_argument("solve_no_transcode: baseline3 is a transcoding scheme");
}

inline bool groups_small(const Instance &inst, std::size_t limit = 3)
{
    for (const auto &s : inst.partition.family)
        if (s.size() > limit)
            return false;
    return true;
}

struct SelectionChoice
{
    QualitySelection x;
    InnerSolver inner = InnerSolver::dc_general;
    bool exhaustive = false;
    bool fell_back = false; // exhaustive path unavailable, penalized surrogate used
};

// Long-timescale choice of x for a transcoding scheme.
inline SelectionChoice choose_selection(const Instance &inst, Scheme s, const McOptions &mc, double enum_cap = 1e6)
{
    SelectionChoice out;
    switch (s)
    {
    case Scheme::baseline3:
        out.x = max_level_selection(inst);
        out.inner = InnerSolver::dc_general;
        return out;
    case Scheme::optimal_small_groups:
        if (groups_small(inst) && selection_count(inst) <= enum_cap)
        {
            McOptions m = mc;
            m.solver = InnerSolver::optimal_small_groups;
            out.x = solve_exhaustive(inst, enumerate_X(inst, true, enum_cap), m).best.x;
            out.inner = InnerSolver::optimal_small_groups;
            out.exhaustive = true;
            return out;
        }
        out.fell_back = true;
        out.inner = InnerSolver::dc_general;
        break;
    case Scheme::asymptotic:
        out.inner = InnerSolver::asymptotic;
        break;
    case Scheme::dc_general:
        out.inner = InnerSolver::dc_general;
        break;
    case Scheme::baseline1:
    case Scheme::baseline2:
        throw std::invalid_argument("choose_selection: baselines 1 and 2 do not transcode");
    }
    out.x = approx_quality_selection(inst).x;
    return out;
}

// ---- statistics and records ----

inline double ci95_halfwidth(const std::vector<double> &v)
{
    const std::size_t n = v.size();
    if (n < 2)
        return 0.0;
    double mean = 0.0;
    for (double x : v)
        mean += x;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double x : v)
        ss += (x - mean) * (x - mean);
    double sd = std::sqrt(ss / static_cast<double>(n - 1));
    boost::math::students_t t(static_cast<double>(n - 1));
    return boost::math::quantile(boost::math::complement(t, 0.025)) * sd / std::sqrt(static_cast<double>(n));
}

struct ExperimentRecord
{
    std::string scheme;
    std::string sweep_param;
    double sweep_value = 0.0;
    double avg_power_w = 0.0;
    double ci95_w = 0.0;
    int draws = 0;
    double wall_time_ms = 0.0;
    std::string flags; // ';'-separated
    std::vector<double> per_draw; // kept in memory and JSON only

    bool operator==(const ExperimentRecord &o) const
    {
        return scheme == o.scheme && sweep_param == o.sweep_param && sweep_value == o.sweep_value && avg_power_w == o.avg_power_w &&
               ci95_w == o.ci95_w && draws == o.draws && wall_time_ms == o.wall_time_ms && flags == o.flags;
    }
};

inline int thread_count()
{
    if (const char *e = std::getenv("VRCAST_THREADS"))
    {
        char *end = nullptr;
        long v = std::strtol(e, &end, 10);
        if (end != e && *end == '\0' && v >= 1)
            return static_cast<int>(v);
    }
    unsigned h = std::thread::hardware_concurrency();
    return h == 0 ? 1 : static_cast<int>(h);
}

// Runs body(i) for i in [0, n); results must be written by index so the order of execution does not matter.
inline void parallel_for(int n, const std::function<void(int)> &body, int threads = thread_count())
{
    threads = std::max(1, std::min(threads, n));
    if (threads == 1)
    {
        for (int i = 0; i < n; ++i)
            body(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (int i = next++; i < n && !failed; i = next++)
            {
                try
                {
                    body(i);
                }
                catch (...)
                {
                    if (!failed.exchange(true))
                        err = std::current_exception();
                }
            }
        });
    for (auto &th : pool)
        th.join();
    if (err)
        std::rethrow_exception(err);
}

namespace detail
{
struct DrawOutcome
{
    double value = 0.0;
    double ms = 0.0;
    bool ties = false, unconverged = false, rank_gt_one = false;
};

inline void absorb(DrawOutcome &o, const AllocationSolution &s)
{
    o.ties = s.ties;
    o.unconverged = !s.converged;
    o.rank_gt_one = s.rank_gt_one;
}
} // namespace detail

// Per-draw objectives of one scheme at one sweep point. Draw d of direction sample j uses channel index j * draws + d,
// so every scheme sees the same realizations.
inline ExperimentRecord run_point(const ExperimentConfig &c, Scheme scheme, double value)
{
    using clock = std::chrono::steady_clock;
    ExperimentRecord rec;
    rec.scheme = to_string(scheme);
    rec.sweep_param = to_string(c.sweep);
    rec.sweep_value = value;
    std::set<std::string> flags;
    if (c.default_ladder_used)
        flags.insert("default_ladder");
    if (c.directions == DirectionSource::synthetic)
        flags.insert("synthetic_directions");
    double total_ms = 0.0;
    for (int j = 0; j < c.direction_samples; ++j)
    {
        auto inst = sweep_instance(c, value, static_cast<std::uint64_t>(j));
        const std::uint64_t first = static_cast<std::uint64_t>(j) * static_cast<std::uint64_t>(c.draws);
        double tc = 0.0;
        std::optional<SelectionChoice> sel;
        if (c.scenario == Scenario::transcode)
        {
            McOptions mc;
            mc.seed = c.seed;
            mc.draws = c.draws;
            auto t0 = clock::now();
            sel = choose_selection(inst, scheme, mc);
            total_ms += std::chrono::duration<double, std::milli>(clock::now() - t0).count();
            tc = c.system.alpha * transcoding_power(inst, sel->x);
            if (sel->fell_back)
                flags.insert("surrogate_selection");
        }
        std::vector<detail::DrawOutcome> out(static_cast<std::size_t>(c.draws));
        parallel_for(c.draws, [&](int d) {
            auto ch = sample_channel(c.seed, first + static_cast<std::uint64_t>(d), inst.sys, inst.K());
            auto t0 = clock::now();
            AllocationSolution s = sel ? solve_with_transcoding(inst, sel->x, ch, sel->inner) : solve_no_transcode(inst, ch, scheme);
            auto &o = out[static_cast<std::size_t>(d)];
            o.ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
            o.value = s.objective + tc;
            detail::absorb(o, s);
        });
        for (const auto &o : out)
        {
            rec.per_draw.push_back(o.value);
            total_ms += o.ms;
            if (o.ties)
                flags.insert("ties");
            if (o.unconverged)
                flags.insert("unconverged");
            if (o.rank_gt_one)
                flags.insert("rank_gt_one");
        }
    }
    double sum = 0.0;
    for (double v : rec.per_draw)
        sum += v;
    rec.draws = static_cast<int>(rec.per_draw.size());
    rec.avg_power_w = sum / rec.draws;
    rec.ci95_w = ci95_halfwidth(rec.per_draw);
    rec.wall_time_ms = total_ms;
    for (const auto &f : flags)
        rec.flags += (rec.flags.empty() ? "" : ";") + f;
    return rec;
}

// One record per (scheme, sweep value): schemes outer, values inner.
inline std::vector<ExperimentRecord> run_experiment(const ExperimentConfig &c)
{
    validate(c);
    std::vector<double> values = c.values;
    if (c.sweep == SweepParam::none)
        values = {0.0};
    std::vector<ExperimentRecord> out;
    for (auto s : c.schemes)
        for (double v : values)
            out.push_back(run_point(c, s, v));
    return out;
}

inline const char *csv_header() { return "scheme,sweep_param,sweep_value,avg_power_w,ci95_w,draws,wall_time_ms,flags"; }

inline std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_csv(std::ostream &os, const std::vector<ExperimentRecord> &recs)
{
    os << csv_header() << '\n';
    for (const auto &r : recs)
        os << r.scheme << ',' << r.sweep_param << ',' << format_double(r.sweep_value) << ',' << format_double(r.avg_power_w) << ','
           << format_double(r.ci95_w) << ',' << r.draws << ',' << format_double(r.wall_time_ms) << ',' << r.flags << '\n';
}

inline std::vector<ExperimentRecord> read_csv(std::istream &is)
{
    std::string line;
    if (!std::getline(is, line) || line != csv_header())
        throw std::runtime_error("read_csv: unexpected header");
    std::vector<ExperimentRecord> out;
    while (std::getline(is, line))
    {
        if (line.empty())
            continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            f.push_back(cell);
        if (!line.empty() && line.back() == ',')
            f.emplace_back();
        if (f.size() != 8)
            throw std::runtime_error("read_csv: expected 8 fields in '" + line + "'");
        ExperimentRecord r;
        r.scheme = f[0];
        r.sweep_param = f[1];
        r.sweep_value = std::stod(f[2]);
        r.avg_power_w = std::stod(f[3]);
        r.ci95_w = std::stod(f[4]);
        r.draws = std::stoi(f[5]);
        r.wall_time_ms = std::stod(f[6]);
        r.flags = f[7];
        out.push_back(r);
    }
    return out;
}

inline nlohmann::json to_json(const ExperimentConfig &c)
{
    nlohmann::json j;
    j["scenario"] = to_string(c.scenario);
    std::vector<std::string> s;
    for (auto v : c.schemes)
        s.push_back(to_string(v));
    j["scheme"] = s;
    j["sweep"] = {{"param", to_string(c.sweep)}, {"values", c.values}};
    j["draws"] = c.draws;
    j["seed"] = c.seed;
    j["direction_samples"] = c.direction_samples;
    j["system"] = {{"M", c.system.M}, {"N", c.system.N}, {"B", c.system.B}, {"sigma2", c.system.sigma2}, {"alpha", c.system.alpha}};
    j["ladder"] = {{"D", c.ladder.D}};
    j["grid"] = {{"u_h", c.grid.u_h}, {"u_v", c.grid.u_v}};
    j["fov"] = {{"f_h", c.fov.f_h}, {"f_v", c.fov.f_v}, {"margin", c.fov.margin}};
    j["users"] = nlohmann::json::array();
    for (const auto &u : c.users)
        j["users"].push_back({{"beta", u.beta}, {"r", u.r}, {"E", u.E}});
    switch (c.directions)
    {
    case DirectionSource::synthetic:
        j["directions"] = {{"source", "synthetic"}};
        break;
    case DirectionSource::csv:
        j["directions"] = {{"source", "csv"}, {"path", c.directions_path}};
        break;
    case DirectionSource::list:
    {
        nlohmann::json v = nlohmann::json::array();
        for (const auto &d : c.direction_list)
            v.push_back({d.yaw, d.pitch});
        j["directions"] = {{"source", "list"}, {"values", v}};
        break;
    }
    }
    return j;
}

inline nlohmann::json to_json(const std::vector<ExperimentRecord> &recs, const ExperimentConfig &c)
{
    nlohmann::json j;
    j["config"] = to_json(c);
    j["default_ladder"] = c.default_ladder_used;
    j["records"] = nlohmann::json::array();
    for (const auto &r : recs)
        j["records"].push_back({{"scheme", r.scheme},
                                {"sweep_param", r.sweep_param},
                                {"sweep_value", r.sweep_value},
                                {"avg_power_w", r.avg_power_w},
                                {"ci95_w", r.ci95_w},
                                {"draws", r.draws},
                                {"wall_time_ms", r.wall_time_ms},
                                {"flags", r.flags},
                                {"per_draw_w", r.per_draw}});
    return j;
}

} // namespace vrcast
