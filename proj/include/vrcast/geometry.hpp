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

#include <algorithm>
#include <cmath>
#include <compare>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace vrcast
{
struct TileGrid
{
    int u_h = 30; // tiles along yaw
    int u_v = 15; // tiles along pitch
};

struct ViewingDirection
{
    double yaw = 0.0;   // degrees, [0, 360)
    double pitch = 0.0; // degrees, [-90, 90]
};

struct FovSpec
{
    double f_h = 100.0;
    double f_v = 100.0;
    double margin = 15.0;
};

// 1-based (horizontal index, vertical index). Row 1 of u_v sits at the north pole.
struct Tile
{
    int h = 1;
    int v = 1;
    auto operator<=>(const Tile &) const = default;
};

using TileSet = std::set<Tile>;

// Sorted, 0-based user indices.
using UserSet = std::vector<int>;

struct MessageKey
{
    UserSet s;
    int l = 1;
    auto operator<=>(const MessageKey &) const = default;
};

struct Partition
{
    std::vector<UserSet> family;           // I, canonical order
    std::map<UserSet, TileSet> parts;      // P_S
    std::map<MessageKey, UserSet> groups;  // K_{S,l}, empty groups omitted
    std::vector<std::vector<UserSet>> per_user; // I_k
};

inline void validate(const TileGrid &g)
{
    if (g.u_h < 1 || g.u_v < 1)
        throw std::invalid_argument("TileGrid: u_h and u_v must be >= 1");
}

inline void validate(const FovSpec &f)
{
    if (!(f.f_h > 0.0 && f.f_h <= 360.0) || !(f.f_v > 0.0 && f.f_v <= 180.0) || !(f.margin >= 0.0))
        throw std::invalid_argument("FovSpec: need 0 < F_h <= 360, 0 < F_v <= 180, margin >= 0");
}

inline void validate(const ViewingDirection &d)
{
    if (!(d.yaw >= 0.0 && d.yaw < 360.0) || !(d.pitch >= -90.0 && d.pitch <= 90.0))
        throw std::invalid_argument("ViewingDirection: yaw must be in [0,360), pitch in [-90,90]");
}

inline double wrap_yaw(double yaw)
{
    double w = std::fmod(yaw, 360.0);
    if (w < 0.0)
        w += 360.0;
    if (w >= 360.0)
        w = 0.0;
    return w;
}

inline TileSet tiles_for_fov(const ViewingDirection &dir, const FovSpec &fov, const TileGrid &grid)
{
    validate(dir);
    validate(fov);
    validate(grid);
    const double tw = 360.0 / grid.u_h;
    const double th = 180.0 / grid.u_v;

    const double half_h = fov.f_h / 2.0 + fov.margin;
    const bool full_yaw = 2.0 * half_h >= 360.0;
    const double y0 = dir.yaw - half_h, y1 = dir.yaw + half_h;
    auto yaw_hit = [&](int h) {
        if (full_yaw)
            return true;
        double a = (h - 1) * tw, b = h * tw;
        for (double shift : {-360.0, 0.0, 360.0})
            if (a + shift <= y1 && y0 <= b + shift)
                return true;
        return false;
    };

    const double half_v = fov.f_v / 2.0 + fov.margin;
    const double p_hi = std::min(90.0, dir.pitch + half_v);
    const double p_lo = std::max(-90.0, dir.pitch - half_v);

    TileSet out;
    for (int v = 1; v <= grid.u_v; ++v)
    {
        double top = 90.0 - (v - 1) * th;
        double bottom = 90.0 - v * th;
        if (v == grid.u_v)
            bottom = -90.0;
        if (!(bottom <= p_hi && p_lo <= top))
            continue;
        bool pole_row = (v == 1 && p_hi >= 90.0) || (v == grid.u_v && p_lo <= -90.0);
        for (int h = 1; h <= grid.u_h; ++h)
            if (pole_row || yaw_hit(h))
                out.insert({h, v});
    }
    return out;
}

inline Partition compute_partition(const std::vector<TileSet> &tile_sets, const std::vector<int> &r)
{
    const int k_count = static_cast<int>(tile_sets.size());
    if (k_count < 1)
        throw std::invalid_argument("compute_partition: need at least one user");
    if (r.size() != tile_sets.size())
        throw std::invalid_argument("compute_partition: one level per user required");
    for (int k = 0; k < k_count; ++k)
    {
        if (tile_sets[k].empty())
            throw std::invalid_argument("compute_partition: user " + std::to_string(k) + " has no tiles");
        if (r[k] < 1)
            throw std::invalid_argument("compute_partition: levels start at 1");
    }

    std::map<Tile, UserSet> owners;
    for (int k = 0; k < k_count; ++k)
        for (const auto &t : tile_sets[k])
            owners[t].push_back(k); // k ascending, so lists stay sorted

    Partition p;
    for (const auto &[tile, s] : owners)
        p.parts[s].insert(tile);
    p.per_user.assign(k_count, {});
    for (const auto &[s, tiles] : p.parts)
    {
        p.family.push_back(s);
        for (int k : s)
        {
            p.per_user[k].push_back(s);
            p.groups[{s, r[k]}].push_back(k);
        }
    }
    return p;
}

inline std::map<MessageKey, UserSet> natural_groups(const Partition &p, const std::vector<int> &r)
{
    std::map<MessageKey, UserSet> g;
    for (const auto &s : p.family)
        for (int k : s)
        {
            if (k < 0 || static_cast<std::size_t>(k) >= r.size())
                throw std::invalid_argument("natural_groups: level vector too short");
            g[{s, r[k]}].push_back(k);
        }
    return g;
}

// L_S: distinct required levels inside S, ascending.
inline std::vector<int> levels_in(const UserSet &s, const std::vector<int> &r)
{
    std::set<int> ls;
    for (int k : s)
        ls.insert(r[k]);
    return {ls.begin(), ls.end()};
}

struct DirectionRow
{
    int user_id = 0;
    ViewingDirection dir;
};

// CSV with header `user_id,yaw_deg,pitch_deg`. Yaw is wrapped into [0,360).
inline std::vector<DirectionRow> parse_directions_csv(std::istream &in)
{
    std::string line;
    if (!std::getline(in, line))
        throw std::invalid_argument("directions csv: empty input");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF)
        line = line.substr(3); // UTF-8 BOM
    auto strip = [](std::string s) {
        s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); }), s.end());
        return s;
    };
    if (strip(line) != "user_id,yaw_deg,pitch_deg")
        throw std::invalid_argument("directions csv: header must be user_id,yaw_deg,pitch_deg");
    std::vector<DirectionRow> rows;
    int lineno = 1;
    while (std::getline(in, line))
    {
        ++lineno;
        if (strip(line).empty())
            continue;
        std::stringstream ss(line);
        std::string a, b, c;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c))
            throw std::invalid_argument("directions csv: line " + std::to_string(lineno) + " needs 3 fields");
        DirectionRow row;
        try
        {
            row.user_id = std::stoi(a);
            row.dir.yaw = wrap_yaw(std::stod(b));
            row.dir.pitch = std::stod(c);
        }
        catch (const std::exception &)
        {
            throw std::invalid_argument("directions csv: line " + std::to_string(lineno) + " is not numeric");
        }
        if (!(row.dir.pitch >= -90.0 && row.dir.pitch <= 90.0))
            throw std::invalid_argument("directions csv: line " + std::to_string(lineno) + " pitch outside [-90,90]");
        rows.push_back(row);
    }
    return rows;
}

inline std::vector<DirectionRow> load_directions_csv(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw std::invalid_argument("directions csv: cannot open " + path);
    return parse_directions_csv(in);
}

} // namespace vrcast
