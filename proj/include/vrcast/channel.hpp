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

#include "numerics.hpp"

#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace vrcast
{
struct SystemParams
{
    int M = 4;            // antennas
    int N = 64;           // subcarriers
    double B = 39e3;      // Hz per subcarrier
    double sigma2 = 1e-9; // noise power per subcarrier, W
    double alpha = 1.0;   // transcoding weight
};

struct UserProfile
{
    double beta = 1.0; // large-scale gain
    int r = 1;         // required quality level, 1-based
    double E = 1e-6;   // transcoding power per tile per level step, W
};

struct QualityLadder
{
    std::vector<double> D; // bits/s per tile, ascending
    int L() const { return static_cast<int>(D.size()); }
    double rate(int l) const { return D.at(static_cast<std::size_t>(l - 1)); }
};

inline void validate(const SystemParams &p)
{
    if (p.M < 1 || p.N < 1 || !(p.B > 0.0) || !(p.sigma2 > 0.0))
        throw std::invalid_argument("SystemParams: M, N, B, sigma2 must be positive");
    if (!(p.alpha >= 1.0))
        throw std::invalid_argument("SystemParams: alpha must be >= 1");
}

inline void validate(const QualityLadder &q)
{
    if (q.D.empty())
        throw std::invalid_argument("QualityLadder: at least one level");
    for (std::size_t i = 0; i < q.D.size(); ++i)
    {
        if (!(q.D[i] > 0.0))
            throw std::invalid_argument("QualityLadder: rates must be positive");
        if (i > 0 && !(q.D[i] > q.D[i - 1]))
            throw std::invalid_argument("QualityLadder: rates must be strictly ascending");
    }
}

inline void validate(const UserProfile &u, int levels)
{
    if (!(u.beta > 0.0) || !(u.E >= 0.0))
        throw std::invalid_argument("UserProfile: beta > 0 and E >= 0 required");
    if (u.r < 1 || u.r > levels)
        throw std::invalid_argument("UserProfile: level outside the ladder");
}

struct ChannelRealization
{
    int N = 0, K = 0, M = 0;
    std::uint64_t seed = 0;
    std::uint64_t draw_index = 0;
    std::vector<CVector> h; // index n * K + k

    const CVector &at(int n, int k) const { return h[static_cast<std::size_t>(n) * K + k]; }
};

namespace detail
{
inline std::uint64_t mix64(std::uint64_t z)
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline double unit_open(std::uint64_t bits)
{
    // (0, 1]
    return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

// CN(0,1) entry for one counter tuple.
inline cplx gaussian_entry(std::uint64_t seed, std::uint64_t draw, std::uint64_t n, std::uint64_t k, std::uint64_t m)
{
    std::uint64_t key = mix64(seed);
    key = mix64(key ^ draw);
    key = mix64(key ^ (n << 1));
    key = mix64(key ^ (k << 2));
    key = mix64(key ^ (m << 3));
    double u1 = unit_open(mix64(key ^ 0x51ULL));
    double u2 = unit_open(mix64(key ^ 0xa3ULL));
    double rad = std::sqrt(-std::log(u1));
    double ang = 2.0 * std::numbers::pi * u2;
    return {rad * std::cos(ang), rad * std::sin(ang)};
}
} // namespace detail

// Entry (n, k, m) depends only on (seed, draw_index, n, k, m), so a channel with
// fewer antennas is a prefix of one with more.
inline ChannelRealization sample_channel(std::uint64_t seed, std::uint64_t draw_index, const SystemParams &params, int K)
{
    if (K < 1)
        throw std::invalid_argument("sample_channel: K >= 1 required");
    ChannelRealization c;
    c.N = params.N;
    c.K = K;
    c.M = params.M;
    c.seed = seed;
    c.draw_index = draw_index;
    c.h.resize(static_cast<std::size_t>(params.N) * K);
    for (int n = 0; n < params.N; ++n)
        for (int k = 0; k < K; ++k)
        {
            CVector v(params.M);
            for (int m = 0; m < params.M; ++m)
                v[m] = detail::gaussian_entry(seed, draw_index, n, k, m);
            c.h[static_cast<std::size_t>(n) * K + k] = v;
        }
    return c;
}

} // namespace vrcast
