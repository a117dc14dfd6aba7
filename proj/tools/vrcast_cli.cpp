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

#include <vrcast/harness.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace vrcast;
using nlohmann::json;

namespace
{
ExperimentConfig base_config(const std::string &path)
{
    if (path.empty())
        return ExperimentConfig{};
    return load_config(path);
}

json user_set(const UserSet &s)
{
    json a = json::array();
    for (int k : s)
        a.push_back(k + 1);
    return a;
}

json tiles_json(const TileSet &t)
{
    json a = json::array();
    for (const auto &x : t)
        a.push_back({x.h, x.v});
    return a;
}

json partition_json(const Instance &inst, bool with_tiles)
{
    json j;
    j["users"] = json::array();
    for (int k = 0; k < inst.K(); ++k)
        j["users"].push_back({{"user", k + 1}, {"r", inst.users[k].r}, {"tiles", inst.tiles[k].size()}});
    j["family"] = json::array();
    for (const auto &s : inst.partition.family)
    {
        const auto &part = inst.partition.parts.at(s);
        json e{{"S", user_set(s)}, {"size", part.size()}};
        if (with_tiles)
            e["tiles"] = tiles_json(part);
        j["family"].push_back(e);
    }
    j["groups"] = json::array();
    for (const auto &[key, g] : inst.partition.groups)
        j["groups"].push_back({{"S", user_set(key.s)}, {"l", key.l}, {"members", user_set(g)}});
    return j;
}

json solution_json(const AllocationSolution &s, const std::vector<Message> &msgs)
{
    json j;
    j["tx_power_w"] = s.objective;
    j["converged"] = s.converged;
    j["ties"] = s.ties;
    j["rank_gt_one"] = s.rank_gt_one;
    j["max_rate_residual"] = s.max_rate_residual;
    j["subcarriers"] = json::array();
    for (std::size_t n = 0; n < s.owner.size(); ++n)
    {
        json e{{"n", n + 1}, {"eta", s.eta[n]}, {"rate", s.c[n]}, {"Q", s.Q[n]}};
        if (s.owner[n] >= 0)
        {
            const auto &m = msgs[static_cast<std::size_t>(s.owner[n])];
            e["S"] = user_set(m.key.s);
            e["l"] = m.key.l;
        }
        j["subcarriers"].push_back(e);
    }
    return j;
}

std::vector<double> parse_values(const std::string &text)
{
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
    {
        std::size_t used = 0;
        double v = std::stod(item, &used);
        if (used != item.size())
            throw ConfigError("--values: bad number '" + item + "'");
        out.push_back(v);
    }
    if (out.empty())
        throw ConfigError("--values: empty list");
    return out;
}
} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"vrcast: multicast power allocation for tiled 360-degree video"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;

    auto *part = app.add_subcommand("partition", "print the tile-set partition and multicast groups");
    int sample = 0;
    bool with_tiles = false;
    part->add_option("--config", config_path, "config file (JSON)");
    part->add_option("--seed", seed, "seed for synthetic directions");
    part->add_option("--sample", sample, "direction sample index")->check(CLI::NonNegativeNumber);
    part->add_flag("--tiles", with_tiles, "list tile indices of each part");

    auto *solve = app.add_subcommand("solve", "solve one channel realization");
    std::string scenario, scheme;
    std::uint64_t draw = 0;
    std::optional<int> solve_draws;
    solve->add_option("--config", config_path, "config file (JSON)");
    solve->add_option("--scenario", scenario, "no_transcode | transcode");
    solve->add_option("--scheme", scheme, "optimal_small_groups | asymptotic | dc_general | baseline1 | baseline2 | baseline3");
    solve->add_option("--seed", seed, "master seed");
    solve->add_option("--draw", draw, "channel realization index");
    solve->add_option("--draws", solve_draws, "Monte Carlo draws used to pick the quality selection")->check(CLI::PositiveNumber);

    auto *exp = app.add_subcommand("experiment", "run a sweep and write CSV records");
    std::string sweep, values, out_path, json_path;
    std::optional<int> draws;
    exp->add_option("--config", config_path, "config file (JSON)");
    exp->add_option("--sweep", sweep, "K | M | delta | tau | none");
    exp->add_option("--values", values, "comma separated sweep values");
    exp->add_option("--draws", draws, "draws per record")->check(CLI::PositiveNumber);
    exp->add_option("--seed", seed, "master seed");
    exp->add_option("--scenario", scenario, "no_transcode | transcode");
    exp->add_option("--scheme", scheme, "scheme name, comma separated for several");
    exp->add_option("--out", out_path, "CSV output path (stdout when absent)");
    exp->add_option("--json", json_path, "JSON mirror with full metadata");

    auto *val = app.add_subcommand("validate-config", "check a config file and print the normalized form");
    val->add_option("--config", config_path, "config file (JSON)")->required();

    CLI11_PARSE(app, argc, argv);

    try
    {
        ExperimentConfig c = base_config(config_path);
        if (seed)
            c.seed = *seed;
        if (!scenario.empty())
            c.scenario = parse_scenario(scenario);

        if (*part)
        {
            validate(c);
            auto inst = sweep_instance(c, c.values.empty() ? 0.0 : c.values.front(), static_cast<std::uint64_t>(sample));
            std::cout << partition_json(inst, with_tiles).dump(2) << "\n";
            return 0;
        }

        if (*val)
        {
            validate(c);
            std::cout << to_json(c).dump(2) << "\n";
            return 0;
        }

        if (*solve)
        {
            if (!scheme.empty())
                c.schemes = {parse_scheme(scheme)};
            if (solve_draws)
                c.draws = *solve_draws;
            validate(c);
            const Scheme s = c.schemes.front();
            auto inst = sweep_instance(c, c.values.empty() ? 0.0 : c.values.front(), 0);
            auto ch = sample_channel(c.seed, draw, inst.sys, inst.K());
            json j{{"scenario", to_string(c.scenario)}, {"scheme", to_string(s)}, {"seed", c.seed}, {"draw", draw}};
            if (c.scenario == Scenario::transcode)
            {
                McOptions mc;
                mc.seed = c.seed;
                mc.draws = c.draws;
                auto sel = choose_selection(inst, s, mc);
                auto msgs = messages_for_selection(inst, sel.x);
                auto sol = solve_with_transcoding(inst, sel.x, ch, sel.inner);
                double tc = c.system.alpha * transcoding_power(inst, sel.x);
                j["selection"] = json::array();
                auto slots = selection_slots(inst);
                for (std::size_t i = 0; i < slots.size(); ++i)
                    j["selection"].push_back({{"S", user_set(slots[i].s)}, {"user", slots[i].k + 1}, {"level", sel.x.level[i]}});
                j["selection_method"] = sel.exhaustive ? "exhaustive" : "penalized_surrogate";
                j["transcode_power_w"] = tc;
                j["objective_w"] = sol.objective + tc;
                j["solution"] = solution_json(sol, msgs);
            }
            else
            {
                auto msgs = s == Scheme::baseline1 ? unicast_messages(inst) : natural_messages(inst);
                auto sol = solve_no_transcode(inst, ch, s);
                j["objective_w"] = sol.objective;
                j["solution"] = solution_json(sol, msgs);
            }
            std::cout << j.dump(2) << "\n";
            return 0;
        }

        // experiment
        if (!sweep.empty())
            c.sweep = parse_sweep(sweep);
        if (!values.empty())
            c.values = parse_values(values);
        if (draws)
            c.draws = *draws;
        if (!scheme.empty())
        {
            c.schemes.clear();
            std::stringstream ss(scheme);
            std::string item;
            while (std::getline(ss, item, ','))
                c.schemes.push_back(parse_scheme(item));
        }
        validate(c);
        auto recs = run_experiment(c);
        if (out_path.empty())
            write_csv(std::cout, recs);
        else
        {
            std::ofstream f(out_path);
            if (!f)
                throw std::runtime_error("cannot write " + out_path);
            write_csv(f, recs);
        }
        if (!json_path.empty())
        {
            std::ofstream f(json_path);
            if (!f)
                throw std::runtime_error("cannot write " + json_path);
            f << to_json(recs, c).dump(2) << "\n";
        }
        return 0;
    }
    catch (const ConfigError &e)
    {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    catch (const std::exception &e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
