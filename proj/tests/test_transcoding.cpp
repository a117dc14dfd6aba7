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

#include <catch2/catch_amalgamated.hpp>

#include <vrcast/transcoding.hpp>

#include "test_util.hpp"

#include <set>

using namespace vrcast;
using namespace vrcast_test;

namespace
{
// Users 0..K-1 with explicit tile sets along one row, unit system unless overridden.
Instance row_instance(const std::vector<std::vector<int>> &cols, const std::vector<int> &r, double E = 1e-6, int L = 3, double sigma2 = 1.0)
{
    SystemParams sys;
    sys.M = 2;
    sys.N = 8;
    sys.B = 1.0;
    sys.sigma2 = sigma2;
    QualityLadder lad;
    for (int l = 1; l <= L; ++l)
        lad.D.push_back(0.5 * l);
    std::vector<UserProfile> users;
    std::vector<TileSet> tiles;
    for (std::size_t k = 0; k < cols.size(); ++k)
    {
        users.push_back({1.0, r[k], E});
        TileSet t;
        for (int c : cols[k])
            t.insert({c, 1});
        tiles.push_back(t);
    }
    return make_instance(sys, lad, users, tiles);
}

std::size_t slot_index(const Instance &inst, const UserSet &s, int k)
{
    auto slots = selection_slots(inst);
    for (std::size_t i = 0; i < slots.size(); ++i)
        if (slots[i].s == s && slots[i].k == k)
            return i;
    throw std::logic_error("no such slot");
}
} // namespace

TEST_CASE("transcoding power follows the level gap per tile")
{
    // user 0 alone on tile 1; users 1 and 2 share tiles 2 and 3
    auto inst = row_instance({{1}, {2, 3}, {2, 3}}, {1, 1, 2});
    auto x = natural_selection(inst);
    CHECK(transcoding_power(inst, x) == 0.0);

    x.level[slot_index(inst, {1, 2}, 1)] = 2;
    CHECK(transcoding_power(inst, x) == Catch::Approx(2e-6).epsilon(1e-12));

    for (auto &u : inst.users)
        u.E *= 2.0;
    CHECK(transcoding_power(inst, x) == Catch::Approx(4e-6).epsilon(1e-12));
    CHECK_THROWS_AS(transcoding_power(inst, QualitySelection{{1}}), std::invalid_argument);
}

TEST_CASE("selection enumeration small cases")
{
    auto one = row_instance({{1, 2}}, {2});
    auto xs = enumerate_X(one);
    REQUIRE(xs.size() == 1);
    CHECK(xs[0] == natural_selection(one));

    auto two = row_instance({{1}, {2, 3}, {2, 3}}, {1, 1, 2});
    xs = enumerate_X(two);
    CHECK(xs.size() == 2);
    for (const auto &x : xs)
    {
        CHECK(x.level[slot_index(two, {1, 2}, 2)] == 2);
        CHECK(is_valid_selection(two, x));
    }
    // dropping the group-level restriction also allows level 3 for both users of the shared part
    CHECK(enumerate_X(two, false).size() == 3 * 2 * 3);
}

TEST_CASE("selection count matches brute force over all level tuples")
{
    std::mt19937_64 g(41);
    for (int trial = 0; trial < 40; ++trial)
    {
        auto inst = random_scenario(g, 1 + trial % 3, 2, 4, 3);
        auto slots = selection_slots(inst);
        auto r = inst.levels();
        for (bool restrict : {true, false})
        {
            // independent count: walk every tuple in {1..L}^slots and test the membership rules directly
            std::size_t total = 1, ok = 0;
            for (std::size_t i = 0; i < slots.size(); ++i)
                total *= 3;
            REQUIRE(total <= 20000);
            std::set<QualitySelection> brute;
            for (std::size_t code = 0; code < total; ++code)
            {
                QualitySelection x;
                std::size_t c = code;
                bool good = true;
                for (const auto &slot : slots)
                {
                    int l = static_cast<int>(c % 3) + 1;
                    c /= 3;
                    x.level.push_back(l);
                    bool in_group = false;
                    for (int j : slot.s)
                        in_group = in_group || r[j] == l;
                    good = good && l >= r[slot.k] && (!restrict || in_group);
                }
                if (good)
                {
                    ++ok;
                    brute.insert(x);
                }
            }
            auto xs = enumerate_X(inst, restrict);
            CHECK(xs.size() == ok);
            CHECK(selection_count(inst, restrict) == static_cast<double>(ok));
            CHECK(std::set<QualitySelection>(xs.begin(), xs.end()) == brute);
        }
    }
}

TEST_CASE("enumeration refuses above the cap")
{
    auto inst = row_instance({{1}, {1}, {1}, {1}}, {1, 1, 1, 1}, 1e-6, 3);
    CHECK(selection_count(inst, false) == 81.0);
    CHECK_THROWS_AS(enumerate_X(inst, false, 80.0), std::length_error);
    CHECK(enumerate_X(inst, false, 81.0).size() == 81);
}

TEST_CASE("messages induced by a selection")
{
    auto inst = row_instance({{1}, {2, 3}, {2, 3}}, {1, 1, 2});
    auto nat = messages_for_selection(inst, natural_selection(inst));
    auto ref = natural_messages(inst);
    REQUIRE(nat.size() == ref.size());
    for (std::size_t m = 0; m < nat.size(); ++m)
    {
        CHECK(nat[m].key == ref[m].key);
        CHECK(nat[m].group == ref[m].group);
        CHECK(nat[m].demand == ref[m].demand);
    }

    auto x = natural_selection(inst);
    x.level[slot_index(inst, {1, 2}, 1)] = 2;
    auto merged = messages_for_selection(inst, x);
    CHECK(merged.size() == ref.size() - 1);
    bool found = false;
    for (const auto &m : merged)
        if (m.key.s == UserSet{1, 2})
        {
            found = true;
            CHECK(m.key.l == 2);
            CHECK(m.group == UserSet{1, 2});
            CHECK(m.demand == 2 * inst.ladder.rate(2));
        }
    CHECK(found);
}

TEST_CASE("natural selection reproduces the plain per-realization solve")
{
    std::mt19937_64 g(3);
    for (int trial = 0; trial < 10; ++trial)
    {
        auto inst = random_scenario(g, 1 + trial % 3, 2, 6);
        auto ch = sample_channel(11, trial, inst.sys, inst.K());
        auto a = solve_with_transcoding(inst, natural_selection(inst), ch);
        auto b = solve_realization(inst, natural_messages(inst), ch, InnerSolver::optimal_small_groups);
        CHECK(a.objective == b.objective);
        CHECK(a.owner == b.owner);
    }
}

TEST_CASE("qbar closed form")
{
    UserProfile u{1.0, 1, 1e-6};
    CHECK(qbar(u, 1e-9) == 1e-9);
    u.beta = 2.0;
    CHECK(qbar(u, 1e-9) == 0.5e-9);
    u.beta = 0.0;
    CHECK_THROWS_AS(qbar(u, 1e-9), std::invalid_argument);
}

TEST_CASE("per-subcarrier and aggregated surrogate points map onto each other")
{
    std::mt19937_64 g(17);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial)
    {
        auto inst = random_scenario(g, 1 + trial % 3, 2, 2 + trial % 5);
        const int N = inst.sys.N;
        auto keys = bar_keys(inst);
        // random point of the per-subcarrier form: shares per subcarrier sum to one
        BarPerSubcarrier pt;
        pt.keys = keys;
        pt.mu.assign(keys.size(), std::vector<double>(N));
        pt.p.assign(keys.size(), std::vector<double>(N));
        for (int n = 0; n < N; ++n)
        {
            double s = 0.0;
            for (std::size_t j = 0; j < keys.size(); ++j)
                s += pt.mu[j][n] = uni(g) + 1e-3;
            for (std::size_t j = 0; j < keys.size(); ++j)
            {
                pt.mu[j][n] /= s;
                pt.p[j][n] = 3.0 * uni(g);
            }
        }
        auto x = natural_selection(inst);
        auto bar = reduce_to_bar(pt);
        double sum_n = 0.0;
        for (double v : bar.N)
            sum_n += v;
        CHECK(sum_n == Catch::Approx(N).epsilon(1e-12));
        CHECK(rel_diff(bar_objective(inst, bar, x), bar_objective(inst, pt, x)) < 1e-12);

        // the aggregate rate is never below the summed per-subcarrier rate
        for (std::size_t j = 0; j < keys.size(); ++j)
            for (int k : keys[j].s)
            {
                double q = qbar(inst.users[k], inst.sys.sigma2);
                double split = 0.0;
                for (int n = 0; n < N; ++n)
                    split += bar_rate(pt.mu[j][n], pt.p[j][n], q, inst.sys.B);
                CHECK(bar_rate(bar.N[j], bar.P[j], q, inst.sys.B) >= split * (1.0 - 1e-12));
            }

        auto back = expand_from_bar(bar, N);
        auto again = reduce_to_bar(back);
        for (std::size_t j = 0; j < keys.size(); ++j)
        {
            CHECK(again.N[j] == Catch::Approx(bar.N[j]).epsilon(1e-12));
            CHECK(again.P[j] == Catch::Approx(bar.P[j]).epsilon(1e-12));
        }
        CHECK(rel_diff(bar_objective(inst, back, x), bar_objective(inst, bar, x)) < 1e-12);
    }
}

TEST_CASE("surrogate shares match a golden-section oracle on two messages")
{
    std::mt19937_64 g(23);
    std::uniform_real_distribution<double> beta(0.2, 5.0);
    for (int trial = 0; trial < 30; ++trial)
    {
        auto inst = row_instance({{1, 2, 3}, {4}}, {1 + trial % 3, 1 + (trial / 3) % 3});
        inst.users[0].beta = beta(g);
        inst.users[1].beta = beta(g);
        auto x = natural_selection(inst);
        auto bar = bar_allocation(inst, x);

        const double B = inst.sys.B, N = inst.sys.N;
        double d0 = 3 * inst.ladder.rate(inst.users[0].r), d1 = inst.ladder.rate(inst.users[1].r);
        double q0 = inst.sys.sigma2 / inst.users[0].beta, q1 = inst.sys.sigma2 / inst.users[1].beta;
        auto f = [&](double n0) {
            double n1 = N - n0;
            return n0 * q0 * (std::pow(2.0, d0 / (B * n0)) - 1.0) + n1 * q1 * (std::pow(2.0, d1 / (B * n1)) - 1.0);
        };
        double a = 1e-9, b = N - 1e-9;
        const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
        for (int it = 0; it < 200; ++it)
        {
            double c = b - phi * (b - a), d = a + phi * (b - a);
            if (f(c) < f(d))
                b = d;
            else
                a = c;
        }
        double oracle = f(0.5 * (a + b)) / inst.sys.M;
        CHECK(rel_diff(bar_value(inst, x), oracle) < 1e-9);
        double total = 0.0;
        for (double v : bar.N)
            total += v;
        CHECK(total == Catch::Approx(N).epsilon(1e-12));
        // binding rate constraints
        for (std::size_t j = 0; j < bar.keys.size(); ++j)
            if (bar.N[j] > 0.0)
            {
                int k = bar.keys[j].s[0];
                double need = part_size(inst, bar.keys[j].s) * inst.ladder.rate(bar.keys[j].l);
                CHECK(bar_rate(bar.N[j], bar.P[j], qbar(inst.users[k], inst.sys.sigma2), B) == Catch::Approx(need).epsilon(1e-9));
            }
    }
}

TEST_CASE("exhaustive search picks the measured argmin")
{
    // one shared part, levels 1 and 2, free transcoding
    auto inst = row_instance({{1, 2}, {1, 2}}, {1, 2}, 0.0);
    auto xs = enumerate_X(inst);
    REQUIRE(xs.size() == 2);
    McOptions mc;
    mc.seed = 5;
    mc.draws = 20;
    auto ex = solve_exhaustive(inst, xs, mc);
    std::size_t arg = std::min_element(ex.objective.begin(), ex.objective.end()) - ex.objective.begin();
    CHECK(ex.best.x == xs[arg]);
    CHECK(ex.best.weighted_objective == ex.objective[arg]);
    CHECK(ex.best.weighted_objective == Catch::Approx(ex.best.avg_tx_power + inst.sys.alpha * ex.best.transcode_power).epsilon(1e-15));
    // each candidate value is the same as evaluating it on its own with the same draws
    for (std::size_t i = 0; i < xs.size(); ++i)
        CHECK(evaluate_selection(inst, xs[i], mc).weighted_objective == ex.objective[i]);

    // candidate order does not matter
    std::vector<QualitySelection> rev(xs.rbegin(), xs.rend());
    CHECK(solve_exhaustive(inst, rev, mc).best.x == ex.best.x);
}

TEST_CASE("exhaustive search with a heavy transcoding weight keeps natural levels")
{
    std::mt19937_64 g(8);
    McOptions mc;
    mc.draws = 4;
    for (int trial = 0; trial < 6; ++trial)
    {
        auto inst = random_scenario(g, 2 + trial % 2, 2, 12);
        inst.sys.alpha = 1e9;
        auto ex = solve_exhaustive(inst, enumerate_X(inst), mc);
        CHECK(ex.best.x == natural_selection(inst));
        CHECK(ex.best.transcode_power == 0.0);
    }
}

TEST_CASE("exhaustive search never loses to natural levels")
{
    std::mt19937_64 g(9);
    McOptions mc;
    mc.draws = 5;
    for (int trial = 0; trial < 8; ++trial)
    {
        auto inst = random_scenario(g, 2 + trial % 2, 2, 12);
        auto xs = enumerate_X(inst);
        auto ex = solve_exhaustive(inst, xs, mc);
        auto nat = evaluate_selection(inst, natural_selection(inst), mc);
        CHECK(ex.best.weighted_objective <= nat.weighted_objective);
    }
}

TEST_CASE("single user exhaustive result is the plain average")
{
    auto inst = row_instance({{1, 2, 3}}, {2});
    McOptions mc;
    mc.draws = 6;
    auto ex = solve_exhaustive(inst, enumerate_X(inst), mc);
    double s = 0.0;
    for (int d = 0; d < mc.draws; ++d)
        s += solve_realization(inst, natural_messages(inst), sample_channel(mc.seed, d, inst.sys, 1), InnerSolver::optimal_small_groups).objective;
    CHECK(ex.best.transcode_power == 0.0);
    CHECK(ex.best.weighted_objective == Catch::Approx(s / mc.draws).epsilon(1e-14));
}

TEST_CASE("group-level restriction loses nothing on small instances")
{
    std::mt19937_64 g(12);
    McOptions mc;
    mc.draws = 3;
    for (int trial = 0; trial < 5; ++trial)
    {
        auto inst = random_scenario(g, 2, 2, 8);
        auto with = solve_exhaustive(inst, enumerate_X(inst, true), mc);
        auto without = solve_exhaustive(inst, enumerate_X(inst, false), mc);
        CHECK(with.best.weighted_objective == without.best.weighted_objective);
    }
}

TEST_CASE("penalized selection with a heavy transcoding weight keeps natural levels")
{
    std::mt19937_64 g(31);
    for (int trial = 0; trial < 8; ++trial)
    {
        auto inst = random_scenario(g, 2 + trial % 2, 2, 8);
        inst.sys.alpha = 1e9;
        auto sel = approx_quality_selection(inst);
        CHECK(sel.x == natural_selection(inst));
    }
}

TEST_CASE("penalized selection matches the surrogate brute force on one shared part")
{
    // users 0 and 1 share everything, r = (1, 2), equal gains; sweep the transcoding price across the switch point
    for (double E : {0.0, 1e-3, 1e-2, 0.03, 0.1, 0.3, 1.0})
    {
        auto inst = row_instance({{1, 2}, {1, 2}}, {1, 2}, E);
        double best = std::numeric_limits<double>::infinity();
        for (const auto &x : enumerate_X(inst))
            best = std::min(best, bar_value(inst, x));
        auto sel = approx_quality_selection(inst);
        CHECK(is_valid_selection(inst, sel.x));
        CHECK(sel.bar_objective <= best * 1.01);
        CHECK(sel.bar_objective >= best * (1.0 - 1e-12));
    }
}

TEST_CASE("penalized selection is feasible, descends, and stays above the surrogate optimum")
{
    std::mt19937_64 g(77);
    for (int trial = 0; trial < 12; ++trial)
    {
        auto inst = random_scenario(g, 2 + trial % 3, 2, 8);
        for (auto &u : inst.users)
            u.E = 0.02 * (trial % 4);
        auto sel = approx_quality_selection(inst);
        CHECK(is_valid_selection(inst, sel.x));
        CHECK(sel.trace.polarized);
        for (const auto &stage : sel.trace.objective)
            for (std::size_t t = 1; t < stage.size(); ++t)
                CHECK(stage[t] <= stage[t - 1] + 1e-9 * std::abs(stage[t - 1]));
        double best = std::numeric_limits<double>::infinity();
        for (const auto &x : enumerate_X(inst))
            best = std::min(best, bar_value(inst, x));
        CHECK(sel.bar_objective >= best * (1.0 - 1e-12));
        CHECK(sel.bar_objective == Catch::Approx(bar_value(inst, sel.x)).epsilon(1e-12));
    }
}
