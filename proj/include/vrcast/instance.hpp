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

#include "beamforming.hpp"
#include "channel.hpp"
#include "geometry.hpp"

#include <stdexcept>
#include <vector>

namespace vrcast
{
// Everything fixed over the long timescale: system, ladder, users and their tile sets.
struct Instance
{
    SystemParams sys;
    QualityLadder ladder;
    std::vector<UserProfile> users;
    std::vector<TileSet> tiles; // per user
    Partition partition;

    int K() const { return static_cast<int>(users.size()); }
    std::vector<int> levels() const
    {
        std::vector<int> r;
        for (const auto &u : users)
            r.push_back(u.r);
        return r;
    }
};

inline Instance make_instance(const SystemParams &sys, const QualityLadder &ladder, const std::vector<UserProfile> &users, const std::vector<TileSet> &tiles)
{
    validate(sys);
    validate(ladder);
    if (users.empty() || users.size() != tiles.size())
        throw std::invalid_argument("make_instance: one tile set per user required");
    for (const auto &u : users)
        validate(u, ladder.L());
    Instance inst{sys, ladder, users, tiles, {}};
    inst.partition = compute_partition(tiles, inst.levels());
    return inst;
}

inline Instance make_instance(const SystemParams &sys, const QualityLadder &ladder, const std::vector<UserProfile> &users,
                              const std::vector<ViewingDirection> &dirs, const FovSpec &fov, const TileGrid &grid)
{
    std::vector<TileSet> tiles;
    for (const auto &d : dirs)
        tiles.push_back(tiles_for_fov(d, fov, grid));
    return make_instance(sys, ladder, users, tiles);
}

struct Message
{
    MessageKey key;      // (S, l)
    UserSet group;       // users decoding it
    double demand = 0.0; // bits/s
};

inline double part_size(const Instance &inst, const UserSet &s)
{
    auto it = inst.partition.parts.find(s);
    return it == inst.partition.parts.end() ? 0.0 : static_cast<double>(it->second.size());
}

// One message per (S, l) with users of S that require level l.
inline std::vector<Message> natural_messages(const Instance &inst)
{
    std::vector<Message> out;
    for (const auto &[key, group] : inst.partition.groups)
        out.push_back({key, group, part_size(inst, key.s) * inst.ladder.rate(key.l)});
    return out;
}

// Every user receives each of its tile-set parts separately.
inline std::vector<Message> unicast_messages(const Instance &inst)
{
    std::vector<Message> out;
    for (int k = 0; k < inst.K(); ++k)
        for (const auto &s : inst.partition.per_user[k])
        {
            int l = inst.users[k].r;
            out.push_back({{s, l}, {k}, part_size(inst, s) * inst.ladder.rate(l)});
        }
    return out;
}

inline BeamInstance beam_instance(const Instance &inst, const UserSet &group, const ChannelRealization &ch, int n)
{
    BeamInstance b;
    b.M = inst.sys.M;
    b.sigma2 = inst.sys.sigma2;
    for (int k : group)
    {
        b.h.push_back(ch.at(n, k));
        b.beta.push_back(inst.users[k].beta);
    }
    return b;
}

} // namespace vrcast
