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

#include <vrcast/geometry.hpp>

#include <random>
#include <sstream>

using namespace vrcast;

namespace
{
TileSet rect(int h0, int h1, int v0, int v1)
{
    TileSet t;
    for (int h = h0; h <= h1; ++h)
        for (int v = v0; v <= v1; ++v)
            t.insert({h, v});
    return t;
}

TileSet tiles(std::initializer_list<std::pair<int, int>> l)
{
    TileSet t;
    for (auto [h, v] : l)
        t.insert({h, v});
    return t;
}

// Independent brute force: sample points of each tile rectangle against the open FoV box.
bool tile_hits_open_box(int h, int v, const TileGrid &g, double y0, double y1, double p0, double p1)
{
    double tw = 360.0 / g.u_h, th = 180.0 / g.u_v;
    for (int i = 1; i < 40; ++i)
        for (int j = 1; j < 40; ++j)
        {
            double yaw = (h - 1) * tw + tw * i / 40.0;
            double pitch = 90.0 - (v - 1) * th - th * j / 40.0;
            for (double s : {-360.0, 0.0})
                if (yaw + s > y0 && yaw + s < y1 && pitch > p0 && pitch < p1)
                    return true;
        }
    return false;
}
} // namespace

TEST_CASE("full-sphere FoV covers the whole grid", "[geometry]")
{
    TileGrid g{8, 4};
    for (double yaw : {0.0, 91.0, 359.0})
        CHECK(tiles_for_fov({yaw, 10.0}, {360.0, 180.0, 0.0}, g).size() == 32);
}

TEST_CASE("small FoV at the origin touches four tiles", "[geometry]")
{
    TileGrid g{8, 4};
    const double eps = 1e-6;
    auto got = tiles_for_fov({0.0, 0.0}, {45.0 - eps, 45.0 - eps, 0.0}, g);
    TileSet expect;
    for (int h = 1; h <= 8; ++h)
        for (int v = 1; v <= 4; ++v)
            if (tile_hits_open_box(h, v, g, -22.5 + eps / 2, 22.5 - eps / 2, -22.5 + eps / 2, 22.5 - eps / 2))
                expect.insert({h, v});
    CHECK(got == expect);
    CHECK(got == tiles({{1, 2}, {1, 3}, {8, 2}, {8, 3}}));
}

TEST_CASE("boundary contact includes the neighbouring tile", "[geometry]")
{
    TileGrid g{8, 4};
    // yaw interval [0,90] touches the tile starting at 90 and the one ending at 0
    auto got = tiles_for_fov({45.0, 10.0}, {90.0, 10.0, 0.0}, g);
    std::set<int> cols;
    for (auto t : got)
        cols.insert(t.h);
    CHECK(cols == std::set<int>{1, 2, 3, 8});
}

TEST_CASE("pole rows are fully included when the band reaches a pole", "[geometry]")
{
    TileGrid g{8, 4};
    auto got = tiles_for_fov({100.0, 80.0}, {30.0, 30.0, 0.0}, g);
    for (int h = 1; h <= 8; ++h)
        CHECK(got.count({h, 1}) == 1);
    auto south = tiles_for_fov({100.0, -89.0}, {30.0, 10.0, 0.0}, g);
    for (int h = 1; h <= 8; ++h)
        CHECK(south.count({h, 4}) == 1);
}

TEST_CASE("tile sets grow with FoV size and margin", "[geometry]")
{
    TileGrid g{30, 15};
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> yaw(0.0, 360.0), pitch(-90.0, 90.0), fh(1.0, 300.0), fv(1.0, 170.0), mg(0.0, 20.0);
    for (int trial = 0; trial < 300; ++trial)
    {
        ViewingDirection d{yaw(rng), pitch(rng)};
        FovSpec base{fh(rng), fv(rng), mg(rng)};
        auto t0 = tiles_for_fov(d, base, g);
        REQUIRE(!t0.empty());
        FovSpec wider = base;
        wider.f_h = std::min(360.0, base.f_h + 20.0);
        FovSpec taller = base;
        taller.f_v = std::min(180.0, base.f_v + 20.0);
        FovSpec more = base;
        more.margin += 5.0;
        for (const auto &f : {wider, taller, more})
        {
            auto t1 = tiles_for_fov(d, f, g);
            CHECK(std::includes(t1.begin(), t1.end(), t0.begin(), t0.end()));
        }
    }
    auto m0 = tiles_for_fov({180.0, 0.0}, {100.0, 100.0, 0.0}, g);
    auto m15 = tiles_for_fov({180.0, 0.0}, {100.0, 100.0, 15.0}, g);
    CHECK(std::includes(m15.begin(), m15.end(), m0.begin(), m0.end()));
    CHECK(m15.size() > m0.size());
}

TEST_CASE("figure-one partition", "[geometry]")
{
    // G_3 is the 4..7 x 2..4 rectangle; the listed P_{3} includes (6,3) and (7,3).
    std::vector<TileSet> g = {rect(2, 5, 1, 3), rect(2, 5, 2, 4), rect(4, 7, 2, 4)};
    std::vector<int> r = {1, 1, 2};
    auto p = compute_partition(g, r);
    std::map<UserSet, TileSet> expect = {
        {{0}, tiles({{2, 1}, {3, 1}, {4, 1}, {5, 1}})},
        {{1}, tiles({{2, 4}, {3, 4}})},
        {{2}, tiles({{6, 2}, {6, 3}, {6, 4}, {7, 2}, {7, 3}, {7, 4}})},
        {{0, 1}, tiles({{2, 2}, {2, 3}, {3, 2}, {3, 3}})},
        {{1, 2}, tiles({{4, 4}, {5, 4}})},
        {{0, 1, 2}, tiles({{4, 2}, {4, 3}, {5, 2}, {5, 3}})},
    };
    CHECK(p.parts == expect);
    CHECK(p.family == std::vector<UserSet>{{0}, {0, 1}, {0, 1, 2}, {1}, {1, 2}, {2}});

    auto groups = natural_groups(p, r);
    CHECK(groups.at({{0}, 1}) == UserSet{0});
    CHECK(groups.at({{0, 1}, 1}) == UserSet{0, 1});
    CHECK(groups.at({{1}, 1}) == UserSet{1});
    CHECK(groups.at({{2}, 2}) == UserSet{2});
    CHECK(groups.at({{0, 1, 2}, 1}) == UserSet{0, 1});
    CHECK(groups.at({{0, 1, 2}, 2}) == UserSet{2});
    CHECK(groups.at({{1, 2}, 1}) == UserSet{1});
    CHECK(groups.at({{1, 2}, 2}) == UserSet{2});
    CHECK(groups.size() == 8);
    CHECK(groups == p.groups);
}

TEST_CASE("partition degenerate cases", "[geometry]")
{
    auto single = compute_partition({rect(1, 2, 1, 2)}, {3});
    CHECK(single.family == std::vector<UserSet>{{0}});
    CHECK(single.parts.at({0}) == rect(1, 2, 1, 2));

    auto disjoint = compute_partition({rect(1, 1, 1, 1), rect(2, 2, 2, 2), rect(3, 3, 3, 3)}, {1, 2, 3});
    CHECK(disjoint.family == std::vector<UserSet>{{0}, {1}, {2}});
    for (auto &[key, grp] : disjoint.groups)
        CHECK(grp.size() == 1);

    auto same = compute_partition({rect(1, 3, 1, 1), rect(2, 4, 1, 1)}, {2, 2});
    for (const auto &s : same.family)
        CHECK(same.groups.at({s, 2}) == s);

    CHECK_THROWS_AS(compute_partition({rect(1, 1, 1, 1), TileSet{}}, {1, 1}), std::invalid_argument);
}

TEST_CASE("partition cover and reconstruction on random FoVs", "[geometry]")
{
    TileGrid g{30, 15};
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> yaw(0.0, 360.0), pitch(-60.0, 60.0);
    std::uniform_int_distribution<int> lev(1, 5), kk(1, 6);
    for (int trial = 0; trial < 100; ++trial)
    {
        int k = kk(rng);
        std::vector<TileSet> gs;
        std::vector<int> r;
        for (int i = 0; i < k; ++i)
        {
            gs.push_back(tiles_for_fov({yaw(rng), pitch(rng)}, {100.0, 100.0, 15.0}, g));
            r.push_back(lev(rng));
        }
        auto p = compute_partition(gs, r);
        TileSet uni;
        for (auto &t : gs)
            uni.insert(t.begin(), t.end());
        std::size_t total = 0;
        TileSet seen;
        for (auto &[s, part] : p.parts)
        {
            CHECK(!part.empty());
            total += part.size();
            seen.insert(part.begin(), part.end());
        }
        CHECK(total == uni.size());
        CHECK(seen == uni);
        for (int i = 0; i < k; ++i)
        {
            TileSet rec;
            for (auto &s : p.per_user[i])
                rec.insert(p.parts.at(s).begin(), p.parts.at(s).end());
            CHECK(rec == gs[i]);
        }
        for (auto &[key, grp] : p.groups)
            for (int u : grp)
                CHECK(r[u] == key.l);
    }
}

TEST_CASE("directions csv loader", "[geometry]")
{
    std::istringstream ok("user_id,yaw_deg,pitch_deg\n1,370.5,10\n2,-10,-20\n");
    auto rows = parse_directions_csv(ok);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].dir.yaw == Catch::Approx(10.5));
    CHECK(rows[1].dir.yaw == Catch::Approx(350.0));
    CHECK(rows[1].dir.pitch == Catch::Approx(-20.0));

    std::istringstream no_header("1,2,3\n");
    CHECK_THROWS_AS(parse_directions_csv(no_header), std::invalid_argument);
    std::istringstream bad_pitch("user_id,yaw_deg,pitch_deg\n1,0,120\n");
    CHECK_THROWS_AS(parse_directions_csv(bad_pitch), std::invalid_argument);
}
