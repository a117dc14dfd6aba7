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

#include <vrcast/allocation.hpp>

#include "test_util.hpp"

#include <numbers>

using namespace vrcast;
using namespace vrcast_test;

namespace
{
// Cheapest way to carry d bits/s over channels with costs Q: water level by bisection in log space.
double waterfill_power(const std::vector<double> &Q, double d, double B)
{
    if (Q.empty())
        return std::numeric_limits<double>::infinity();
    auto carried = [&](double lv) {
        double s = 0.0;
        for (double q : Q)
            s += B * std::max(0.0, (lv - std::log(q)) / std::numbers::ln2);
        return s;
    };
    double lo = -800.0, hi = 800.0;
    for (int i = 0; i < 300; ++i)
    {
        double mid = 0.5 * (lo + hi);
        (carried(mid) < d ? lo : hi) = mid;
    }
    double p = 0.0;
    for (double q : Q)
        p += std::max(0.0, std::exp(hi) - q);
    return p;
}

// All assignments where every message with demand owns at least one subcarrier.
double brute_force(const std::vector<std::vector<double>> &Q, const std::vector<double> &d, double B)
{
    const int nm = static_cast<int>(Q.size()), ns = static_cast<int>(Q[0].size());
    int total = 1;
    for (int i = 0; i < ns; ++i)
        total *= nm;
    double best = std::numeric_limits<double>::infinity();
    for (int code = 0; code < total; ++code)
    {
        std::vector<std::vector<double>> own(nm);
        int c = code;
        for (int n = 0; n < ns; ++n, c /= nm)
            own[c % nm].push_back(Q[c % nm][n]);
        double p = 0.0;
        for (int m = 0; m < nm; ++m)
            if (d[m] > 0.0)
                p += waterfill_power(own[m], d[m], B);
        best = std::min(best, p);
    }
    return best;
}

std::vector<MessageDemand> make_demands(const std::vector<std::vector<double>> &Q, const std::vector<double> &d)
{
    std::vector<MessageDemand> out;
    for (std::size_t m = 0; m < Q.size(); ++m)
        out.push_back({MessageKey{{static_cast<int>(m)}, 1}, d[m], Q[m]});
    return out;
}
} // namespace

TEST_CASE("metric_f positive part", "[allocation]")
{
    CHECK(metric_f(0.0, 1.0, 1.0) == 0.0);
    CHECK(metric_f(std::numbers::ln2, 0.5, 1.0) == Catch::Approx(0.5));
    const double q = 0.7, b = 2.0, thr = q * std::numbers::ln2 / b;
    CHECK(metric_f(thr * 0.999, q, b) == 0.0);
    CHECK(metric_f(thr * 1.001, q, b) > 0.0);
}

TEST_CASE("metric_W values and monotonicity", "[allocation]")
{
    CHECK(metric_W(0.1, 1.0, 1.0) == 0.0);
    // f = 1 needs lambda = 2 ln2; then W = 2 ln2 (1 - 1/(2 ln2)) = 2 ln2 - 1
    const long double l2 = 0.693147180559945309417232121458176568L;
    CHECK(metric_f(2.0 * std::numbers::ln2, 1.0, 1.0) == Catch::Approx(1.0).epsilon(1e-14));
    CHECK(metric_W(2.0 * std::numbers::ln2, 1.0, 1.0) == Catch::Approx(static_cast<double>(2.0L * l2 - 1.0L)).epsilon(1e-13));
    // lambda = 2/ln2 gives f = 2/ln2^2 - 1
    const long double f = 2.0L / (l2 * l2) - 1.0L;
    const long double w = (2.0L / l2) * (std::log2(1.0L + f) - f / ((1.0L + f) * l2));
    CHECK(metric_W(2.0 / std::numbers::ln2, 1.0, 1.0) == Catch::Approx(static_cast<double>(w)).epsilon(1e-13));
    CHECK(static_cast<double>(w) == Catch::Approx(2.774046615912503).epsilon(1e-12));

    double prev = std::numeric_limits<double>::infinity();
    for (double q = 0.05; q < 3.0; q += 0.05)
    {
        double w = metric_W(3.0, q, 1.0);
        CHECK(w <= prev);
        prev = w;
    }
    prev = 0.0;
    for (double lam = 1.0; lam < 20.0; lam += 0.25)
    {
        double w = metric_W(lam, 1.0, 1.0);
        CHECK(w > prev);
        prev = w;
    }
}

TEST_CASE("one message with constant Q splits equally", "[allocation]")
{
    auto r = solve_allocation(make_demands({{1.0, 1.0}}, {2.0}), 2, 1.0);
    REQUIRE(r.converged);
    CHECK(r.P[0] == Catch::Approx(1.0).epsilon(1e-9));
    CHECK(r.P[1] == Catch::Approx(1.0).epsilon(1e-9));
    CHECK(r.c[0] == Catch::Approx(1.0).epsilon(1e-9));
    CHECK(r.sum_power == Catch::Approx(2.0).epsilon(1e-9));

    std::vector<double> q(16, 0.3);
    auto r2 = solve_allocation(make_demands({q}, {40.0}), 16, 2.0);
    for (int n = 0; n < 16; ++n)
    {
        CHECK(r2.c[n] == Catch::Approx(40.0 / 16).epsilon(1e-9));
        CHECK(r2.P[n] == Catch::Approx(0.3 * (std::exp2(40.0 / 32) - 1.0)).epsilon(1e-9));
    }
}

TEST_CASE("single message matches water filling", "[allocation]")
{
    std::mt19937_64 g(11);
    std::uniform_real_distribution<double> u(0.1, 5.0);
    for (int trial = 0; trial < 50; ++trial)
    {
        std::vector<double> q(12);
        for (auto &x : q)
            x = u(g);
        double d = u(g) * 6.0;
        auto r = solve_allocation(make_demands({q}, {d}), 12, 1.5);
        CHECK(r.converged);
        CHECK(rel_diff(r.sum_power, waterfill_power(q, d, 1.5)) < 1e-8);
    }
}

TEST_CASE("two messages on two subcarriers match exhaustive search", "[allocation]")
{
    std::mt19937_64 g(2024);
    std::uniform_real_distribution<double> u(0.05, 4.0);
    for (int trial = 0; trial < 200; ++trial)
    {
        std::vector<std::vector<double>> Q(2, std::vector<double>(2));
        if (trial % 2 == 0)
        {
            double a = u(g), b = u(g);
            Q = {{a, a}, {b, b}};
        }
        else
        {
            for (auto &row : Q)
                for (auto &x : row)
                    x = u(g);
        }
        std::vector<double> d{u(g), u(g)};
        // each message gets one subcarrier: closed form per assignment
        double o1 = Q[0][0] * (std::exp2(d[0]) - 1.0) + Q[1][1] * (std::exp2(d[1]) - 1.0);
        double o2 = Q[0][1] * (std::exp2(d[0]) - 1.0) + Q[1][0] * (std::exp2(d[1]) - 1.0);
        auto r = solve_allocation(make_demands(Q, d), 2, 1.0);
        CHECK(rel_diff(r.sum_power, std::min(o1, o2)) < 1e-4);
        CHECK(r.max_rate_residual < 1e-3);
    }
}

TEST_CASE("three messages on eight subcarriers against exhaustive water filling", "[allocation]")
{
    std::mt19937_64 g(5);
    std::uniform_real_distribution<double> u(0.05, 4.0);
    for (int trial = 0; trial < 12; ++trial)
    {
        std::vector<std::vector<double>> Q(3, std::vector<double>(8));
        for (auto &row : Q)
            for (auto &x : row)
                x = u(g);
        std::vector<double> d{u(g) * 3, u(g) * 3, u(g) * 3};
        auto r = solve_allocation(make_demands(Q, d), 8, 1.0);
        double bf = brute_force(Q, d, 1.0);
        CHECK(r.sum_power >= bf * (1.0 - 1e-9));
        CHECK(rel_diff(r.sum_power, bf) < 1e-4);
        CHECK(r.converged);
        if (r.certified)
            CHECK(rel_diff(r.sum_power, bf) < 1e-9);
    }
}

TEST_CASE("allocation invariants on random instances", "[allocation][property]")
{
    std::mt19937_64 g(99);
    std::uniform_real_distribution<double> u(0.01, 10.0);
    for (int trial = 0; trial < 40; ++trial)
    {
        int nm = 1 + trial % 6, ns = 32;
        std::vector<std::vector<double>> Q(nm, std::vector<double>(ns));
        std::vector<double> d(nm);
        for (int m = 0; m < nm; ++m)
        {
            d[m] = u(g) * 4;
            for (auto &x : Q[m])
                x = u(g);
        }
        auto r = solve_allocation(make_demands(Q, d), ns, 1.0);
        REQUIRE(r.owner.size() == static_cast<std::size_t>(ns));
        std::vector<double> got(nm, 0.0);
        for (int n = 0; n < ns; ++n)
        {
            CHECK(r.P[n] >= 0.0);
            CHECK(r.c[n] == Catch::Approx(std::log2(1.0 + r.P[n] / Q[r.owner[n]][n])).margin(1e-12));
            got[r.owner[n]] += r.c[n];
        }
        for (int m = 0; m < nm; ++m)
            CHECK(got[m] >= d[m] * (1.0 - 1e-3));
        for (double l : r.lambda)
            CHECK(l >= 0.0);
        // argmax rule at the returned prices
        if (r.certified)
            for (int n = 0; n < ns; ++n)
                for (int m = 0; m < nm; ++m)
                    CHECK(metric_W(r.lambda[m], Q[m][n], 1.0) <= metric_W(r.lambda[r.owner[n]], Q[r.owner[n]][n], 1.0) * (1 + 1e-8) + 1e-300);
    }
}

TEST_CASE("zero demand gets nothing", "[allocation]")
{
    auto r = solve_allocation(make_demands({{1.0, 2.0, 3.0}, {0.5, 0.5, 0.5}}, {3.0, 0.0}), 3, 1.0);
    for (int n = 0; n < 3; ++n)
        CHECK(r.owner[n] == 0);
    CHECK(rel_diff(r.sum_power, waterfill_power({1.0, 2.0, 3.0}, 3.0, 1.0)) < 1e-8);
}

TEST_CASE("allocation input errors", "[allocation]")
{
    CHECK_THROWS_AS(solve_allocation({}, 2, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(solve_allocation(make_demands({{1.0}}, {1.0}), 2, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(solve_allocation(make_demands({{1.0, -1.0}}, {1.0}), 2, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(solve_allocation(make_demands({{1.0}, {1.0}}, {1.0, 1.0}), 1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(solve_allocation(make_demands({{1.0}}, {-1.0}), 1, 1.0), std::invalid_argument);
}

TEST_CASE("assembled solution meets the per-user rate constraints", "[allocation]")
{
    std::mt19937_64 g(3);
    const int M = 4, N = 6;
    const double sigma2 = 0.5, B = 1.0;
    // two messages: groups {0,1} and {2}
    std::vector<std::vector<int>> groups{{0, 1}, {2}};
    std::vector<double> beta{1.0, 0.5, 2.0};
    std::vector<std::vector<CVector>> h(N);
    for (auto &hn : h)
        for (int k = 0; k < 3; ++k)
            hn.push_back(random_cvector(g, M));

    std::vector<std::vector<BeamSolution>> beams(2);
    std::vector<MessageDemand> dem;
    std::vector<std::vector<BeamInstance>> insts(2);
    for (int m = 0; m < 2; ++m)
    {
        MessageDemand md{MessageKey{groups[m], 1}, 3.0 + m, {}};
        for (int n = 0; n < N; ++n)
        {
            BeamInstance bi;
            bi.M = M;
            bi.sigma2 = sigma2;
            for (int k : groups[m])
            {
                bi.h.push_back(h[n][k]);
                bi.beta.push_back(beta[k]);
            }
            beams[m].push_back(solve_qos_sdr(bi));
            insts[m].push_back(bi);
            md.Q.push_back(beams[m].back().Q);
        }
        dem.push_back(md);
    }
    auto alloc = solve_allocation(dem, N, B);
    auto sol = assemble_solution(alloc, beams, M);
    CHECK(sol.objective == Catch::Approx(alloc.sum_power / M).epsilon(1e-14));
    std::vector<double> got(2, 0.0);
    for (int n = 0; n < N; ++n)
    {
        int m = sol.owner[n];
        CHECK(sol.w[n].norm() == Catch::Approx(1.0).epsilon(1e-12));
        for (std::size_t i = 0; i < insts[m][n].h.size(); ++i)
        {
            double rate = B * std::log2(1.0 + sol.eta[n] * snr(insts[m][n], i, sol.w[n]));
            CHECK(rate >= sol.c[n] * (1.0 - 1e-7));
        }
        got[m] += sol.c[n];
    }
    CHECK(got[0] >= 3.0 * (1 - 1e-3));
    CHECK(got[1] >= 4.0 * (1 - 1e-3));

    beams[1].clear();
    if (std::find(alloc.owner.begin(), alloc.owner.end(), 1) != alloc.owner.end())
        CHECK_THROWS_AS(assemble_solution(alloc, beams, M), std::invalid_argument);
}
