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

#include "dcsolver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

namespace vrcast
{
// One (S, k) pair with k in S. The selection vector below is indexed the same way.
struct SelectionSlot
{
    UserSet s;
    int k = 0;
};

inline std::vector<SelectionSlot> selection_slots(const Instance &inst)
{
    std::vector<SelectionSlot> out;
    for (const auto &s : inst.partition.family)
        for (int k : s)
            out.push_back({s, k});
    return out;
}

// The binary x, stored as the selected level per slot (one-hot by construction).
struct QualitySelection
{
    std::vector<int> level;
    auto operator<=>(const QualitySelection &) const = default;
};

// Levels user k may decode from S: at least r_k, and with the restriction on, only levels some user of S requires.
inline std::vector<int> allowed_levels(const Instance &inst, const SelectionSlot &slot, bool restrict_to_group_levels = true)
{
    const int r = inst.users[slot.k].r;
    std::vector<int> out;
    if (restrict_to_group_levels)
    {
        for (int l : levels_in(slot.s, inst.levels()))
            if (l >= r)
                out.push_back(l);
    }
    else
        for (int l = r; l <= inst.ladder.L(); ++l)
            out.push_back(l);
    return out;
}

inline bool is_valid_selection(const Instance &inst, const QualitySelection &x, bool restrict_to_group_levels = true)
{
    auto slots = selection_slots(inst);
    if (x.level.size() != slots.size())
        return false;
    for (std::size_t i = 0; i < slots.size(); ++i)
    {
        auto a = allowed_levels(inst, slots[i], restrict_to_group_levels);
        if (std::find(a.begin(), a.end(), x.level[i]) == a.end())
            return false;
    }
    return true;
}

inline QualitySelection natural_selection(const Instance &inst)
{
    QualitySelection x;
    for (const auto &slot : selection_slots(inst))
        x.level.push_back(inst.users[slot.k].r);
    return x;
}

// Everyone in S decodes the highest level required inside S.
inline QualitySelection max_level_selection(const Instance &inst)
{
    QualitySelection x;
    auto r = inst.levels();
    for (const auto &slot : selection_slots(inst))
        x.level.push_back(levels_in(slot.s, r).back());
    return x;
}

inline double transcoding_power(const Instance &inst, const QualitySelection &x)
{
    auto slots = selection_slots(inst);
    if (x.level.size() != slots.size())
        throw std::invalid_argument("transcoding_power: selection does not match the partition");
    double e = 0.0;
    for (std::size_t i = 0; i < slots.size(); ++i)
    {
        const auto &u = inst.users[slots[i].k];
        e += (x.level[i] - u.r) * part_size(inst, slots[i].s) * u.E;
    }
    return e;
}

inline double selection_count(const Instance &inst, bool restrict_to_group_levels = true)
{
    double c = 1.0;
    for (const auto &slot : selection_slots(inst))
        c *= static_cast<double>(allowed_levels(inst, slot, restrict_to_group_levels).size());
    return c;
}

inline std::vector<QualitySelection> enumerate_X(const Instance &inst, bool restrict_to_group_levels = true, double cap = 1e6)
{
    const double count = selection_count(inst, restrict_to_group_levels);
    if (count > cap)
        throw std::length_error("enumerate_X: " + std::to_string(static_cast<long long>(count)) +
                                " selections exceed the cap; use approx_quality_selection instead");
    auto slots = selection_slots(inst);
    std::vector<std::vector<int>> choices;
    for (const auto &slot : slots)
        choices.push_back(allowed_levels(inst, slot, restrict_to_group_levels));
    std::vector<QualitySelection> out;
    std::vector<std::size_t> idx(slots.size(), 0);
    while (true)
    {
        QualitySelection x;
        for (std::size_t i = 0; i < slots.size(); ++i)
            x.level.push_back(choices[i][idx[i]]);
        out.push_back(std::move(x));
        std::size_t i = slots.size();
        while (i > 0)
        {
            --i;
            if (++idx[i] < choices[i].size())
                break;
            idx[i] = 0;
            if (i == 0)
                return out;
        }
        if (slots.empty())
            return out;
    }
}

// Users picking the same (S, l) share one message of demand |P_S| D_l.
inline std::vector<Message> messages_for_selection(const Instance &inst, const QualitySelection &x)
{
    auto slots = selection_slots(inst);
    if (x.level.size() != slots.size())
        throw std::invalid_argument("messages_for_selection: selection does not match the partition");
    std::map<MessageKey, UserSet> groups;
    for (std::size_t i = 0; i < slots.size(); ++i)
        groups[{slots[i].s, x.level[i]}].push_back(slots[i].k);
    std::vector<Message> out;
    for (auto &[key, group] : groups)
    {
        std::sort(group.begin(), group.end());
        out.push_back({key, group, part_size(inst, key.s) * inst.ladder.rate(key.l)});
    }
    return out;
}

inline AllocationSolution solve_with_transcoding(const Instance &inst, const QualitySelection &x, const ChannelRealization &ch,
                                                 InnerSolver solver = InnerSolver::optimal_small_groups, BeamCache *cache = nullptr)
{
    return solve_realization(inst, messages_for_selection(inst, x), ch, solver, cache);
}

struct TwoTimescaleResult
{
    QualitySelection x;
    double avg_tx_power = 0.0;     // W, Monte Carlo mean
    double transcode_power = 0.0;  // W
    double weighted_objective = 0.0;
    std::vector<double> per_draw_tx; // W per realization
    std::vector<AllocationSolution> solutions; // only when retained
};

struct McOptions
{
    std::uint64_t seed = 1;
    int draws = 100;
    InnerSolver solver = InnerSolver::optimal_small_groups;
    bool keep_solutions = false;
};

inline TwoTimescaleResult evaluate_selection(const Instance &inst, const QualitySelection &x, const McOptions &opt)
{
    if (opt.draws < 1)
        throw std::invalid_argument("evaluate_selection: draws >= 1");
    TwoTimescaleResult r;
    r.x = x;
    auto msgs = messages_for_selection(inst, x);
    for (int d = 0; d < opt.draws; ++d)
    {
        auto ch = sample_channel(opt.seed, static_cast<std::uint64_t>(d), inst.sys, inst.K());
        auto sol = solve_realization(inst, msgs, ch, opt.solver);
        r.per_draw_tx.push_back(sol.objective);
        if (opt.keep_solutions)
            r.solutions.push_back(std::move(sol));
    }
    double sum = 0.0;
    for (double v : r.per_draw_tx)
        sum += v;
    r.avg_tx_power = sum / opt.draws;
    r.transcode_power = transcoding_power(inst, x);
    r.weighted_objective = r.avg_tx_power + inst.sys.alpha * r.transcode_power;
    return r;
}

struct ExhaustiveResult
{
    TwoTimescaleResult best;
    std::vector<QualitySelection> candidates;
    std::vector<double> objective; // weighted, per candidate
};

// Every candidate sees the same channel draws, and beams are shared between candidates within a draw.
// Ties go to the lexicographically smallest selection so the answer does not depend on input order.
inline ExhaustiveResult solve_exhaustive(const Instance &inst, const std::vector<QualitySelection> &x_set, const McOptions &opt)
{
    if (x_set.empty())
        throw std::invalid_argument("solve_exhaustive: empty candidate set");
    if (opt.draws < 1)
        throw std::invalid_argument("solve_exhaustive: draws >= 1");
    ExhaustiveResult out;
    out.candidates = x_set;
    std::vector<std::vector<Message>> msgs;
    for (const auto &x : x_set)
        msgs.push_back(messages_for_selection(inst, x));
    std::vector<std::vector<double>> tx(x_set.size());
    std::vector<std::vector<AllocationSolution>> sols(x_set.size());
    BeamCache cache;
    for (int d = 0; d < opt.draws; ++d)
    {
        auto ch = sample_channel(opt.seed, static_cast<std::uint64_t>(d), inst.sys, inst.K());
        cache.beams.clear();
        for (std::size_t i = 0; i < x_set.size(); ++i)
        {
            auto sol = solve_realization(inst, msgs[i], ch, opt.solver, &cache);
            tx[i].push_back(sol.objective);
            if (opt.keep_solutions)
                sols[i].push_back(std::move(sol));
        }
    }
    std::size_t best = 0;
    for (std::size_t i = 0; i < x_set.size(); ++i)
    {
        double sum = 0.0;
        for (double v : tx[i])
            sum += v;
        double obj = sum / opt.draws + inst.sys.alpha * transcoding_power(inst, x_set[i]);
        out.objective.push_back(obj);
        if (obj < out.objective[best] || (obj == out.objective[best] && x_set[i] < x_set[best]))
            best = i;
    }
    auto &b = out.best;
    b.x = x_set[best];
    b.per_draw_tx = tx[best];
    b.transcode_power = transcoding_power(inst, b.x);
    double sum = 0.0;
    for (double v : b.per_draw_tx)
        sum += v;
    b.avg_tx_power = sum / opt.draws;
    b.weighted_objective = out.objective[best];
    if (opt.keep_solutions)
        b.solutions = std::move(sols[best]);
    return out;
}

// ---- channel-averaged surrogate ----

inline double qbar(const UserProfile &u, double sigma2)
{
    if (!(u.beta > 0.0))
        throw std::invalid_argument("qbar: beta > 0");
    return sigma2 / u.beta;
}

// Messages (S, l) of the surrogate: every level some slot of S may pick.
inline std::vector<MessageKey> bar_keys(const Instance &inst, bool restrict_to_group_levels = true)
{
    std::map<MessageKey, int> seen;
    for (const auto &slot : selection_slots(inst))
        for (int l : allowed_levels(inst, slot, restrict_to_group_levels))
            seen[{slot.s, l}] = 1;
    std::vector<MessageKey> out;
    for (const auto &kv : seen)
        out.push_back(kv.first);
    return out;
}

// Relaxed selection: weights[i][a] on allowed_levels(slot i)[a].
struct RelaxedSelection
{
    std::vector<std::vector<double>> weights;
};

struct BarAllocation
{
    std::vector<MessageKey> keys;
    std::vector<double> N; // subcarrier shares, sum N
    std::vector<double> P; // W
};

// Per-subcarrier form of the same surrogate: mu[j][n], p[j][n].
struct BarPerSubcarrier
{
    std::vector<MessageKey> keys;
    std::vector<std::vector<double>> mu, p;
};

inline double bar_rate(double n_share, double p, double q, double B)
{
    if (n_share <= 0.0)
        return 0.0;
    return n_share * B * std::log2(1.0 + p / (n_share * q));
}

// Power needed by one surrogate message to give rate e to a user with noise-to-gain q over share n.
inline double bar_power(double n_share, double e, double q, double B)
{
    if (e <= 0.0)
        return 0.0;
    if (n_share <= 0.0)
        return std::numeric_limits<double>::infinity();
    return n_share * q * std::expm1(e / (B * n_share) * std::log(2.0));
}

inline BarAllocation reduce_to_bar(const BarPerSubcarrier &in)
{
    BarAllocation out;
    out.keys = in.keys;
    for (std::size_t j = 0; j < in.keys.size(); ++j)
    {
        double n = 0.0, p = 0.0;
        for (double v : in.mu[j])
            n += v;
        for (double v : in.p[j])
            p += v;
        out.N.push_back(n);
        out.P.push_back(p);
    }
    return out;
}

inline BarPerSubcarrier expand_from_bar(const BarAllocation &in, int N)
{
    BarPerSubcarrier out;
    out.keys = in.keys;
    for (std::size_t j = 0; j < in.keys.size(); ++j)
    {
        out.mu.emplace_back(N, in.N[j] / N);
        out.p.emplace_back(N, in.P[j] / N);
    }
    return out;
}

inline double bar_objective(const Instance &inst, const BarAllocation &a, const QualitySelection &x)
{
    double s = 0.0;
    for (double p : a.P)
        s += p;
    return s / inst.sys.M + inst.sys.alpha * transcoding_power(inst, x);
}

inline double bar_objective(const Instance &inst, const BarPerSubcarrier &a, const QualitySelection &x)
{
    double s = 0.0;
    for (const auto &row : a.p)
        for (double p : row)
            s += p;
    return s / inst.sys.M + inst.sys.alpha * transcoding_power(inst, x);
}

namespace detail
{
// Flattened surrogate: message j is served to components (slot, allowed-level index).
struct BarModel
{
    std::vector<MessageKey> keys;
    std::vector<SelectionSlot> slots;
    std::vector<std::vector<int>> levels; // per slot
    std::vector<std::vector<int>> msg_of; // per slot, per level: message index
    std::vector<std::vector<std::pair<int, int>>> comps; // per message: (slot, level index)
    std::vector<double> demand;           // per message, |P_S| D_l
    std::vector<double> q;                // per slot
    std::vector<std::vector<double>> cost; // per slot, per level: alpha (l - r_k) |P_S| E_k
    double B = 1.0, N = 1.0, M = 1.0;
};

inline BarModel make_bar_model(const Instance &inst, bool restrict_to_group_levels)
{
    BarModel m;
    m.keys = bar_keys(inst, restrict_to_group_levels);
    m.slots = selection_slots(inst);
    m.B = inst.sys.B;
    m.N = inst.sys.N;
    m.M = inst.sys.M;
    std::map<MessageKey, int> index;
    for (std::size_t j = 0; j < m.keys.size(); ++j)
    {
        index[m.keys[j]] = static_cast<int>(j);
        m.demand.push_back(part_size(inst, m.keys[j].s) * inst.ladder.rate(m.keys[j].l));
    }
    m.comps.resize(m.keys.size());
    for (std::size_t i = 0; i < m.slots.size(); ++i)
    {
        const auto &u = inst.users[m.slots[i].k];
        m.levels.push_back(allowed_levels(inst, m.slots[i], restrict_to_group_levels));
        m.q.push_back(qbar(u, inst.sys.sigma2));
        std::vector<int> mo;
        std::vector<double> c;
        for (std::size_t a = 0; a < m.levels[i].size(); ++a)
        {
            int j = index.at({m.slots[i].s, m.levels[i][a]});
            mo.push_back(j);
            m.comps[j].push_back({static_cast<int>(i), static_cast<int>(a)});
            c.push_back(inst.sys.alpha * (m.levels[i][a] - u.r) * part_size(inst, m.slots[i].s) * u.E);
        }
        m.msg_of.push_back(mo);
        m.cost.push_back(c);
    }
    return m;
}

// Power of message j at share n under weights x; also reports the binding component.
inline double message_power(const BarModel &m, const std::vector<std::vector<double>> &x, int j, double n, int *arg = nullptr)
{
    double best = 0.0;
    int who = -1;
    for (std::size_t c = 0; c < m.comps[j].size(); ++c)
    {
        auto [i, a] = m.comps[j][c];
        double e = m.demand[j] * x[i][a];
        if (e <= 0.0)
            continue;
        double p = bar_power(n, e, m.q[i], m.B);
        if (who < 0 || p > best)
        {
            best = p;
            who = static_cast<int>(c);
        }
    }
    if (arg)
        *arg = who;
    return best;
}

// d/dn of n q (2^{e/(B n)} - 1)
inline double power_slope(double n, double e, double q, double B)
{
    double u = e / (B * n) * std::log(2.0);
    if (u > 700.0)
        return -std::numeric_limits<double>::infinity(); // avoids inf - inf
    return q * (std::expm1(u) - u * std::exp(u));
}

inline double message_slope(const BarModel &m, const std::vector<std::vector<double>> &x, int j, double n)
{
    int c = -1;
    message_power(m, x, j, n, &c);
    if (c < 0)
        return 0.0;
    auto [i, a] = m.comps[j][c];
    return power_slope(n, m.demand[j] * x[i][a], m.q[i], m.B);
}

inline bool message_active(const BarModel &m, const std::vector<std::vector<double>> &x, int j)
{
    for (auto [i, a] : m.comps[j])
        if (x[i][a] > 0.0)
            return true;
    return false;
}

// Share of message j where its slope reaches -nu (capped at the total).
inline double share_at_price(const BarModel &m, const std::vector<std::vector<double>> &x, int j, double nu)
{
    if (message_slope(m, x, j, m.N) <= -nu)
        return m.N;
    double lo = m.N * 1e-14, hi = m.N;
    for (int it = 0; it < 80; ++it)
    {
        double mid = std::sqrt(lo * hi);
        if (message_slope(m, x, j, mid) < -nu)
            lo = mid;
        else
            hi = mid;
        if (hi - lo <= 1e-13 * hi)
            break;
    }
    return hi;
}

// Exact minimizer of sum_j P_j over the shares for fixed x: bisection on the common slope.
inline std::vector<double> optimal_shares(const BarModel &m, const std::vector<std::vector<double>> &x)
{
    const std::size_t J = m.keys.size();
    std::vector<int> act;
    for (std::size_t j = 0; j < J; ++j)
        if (message_active(m, x, static_cast<int>(j)))
            act.push_back(static_cast<int>(j));
    std::vector<double> n(J, 0.0);
    if (act.empty())
        return n;
    if (act.size() == 1)
    {
        n[act[0]] = m.N;
        return n;
    }
    auto total = [&](double nu) {
        double s = 0.0;
        for (int j : act)
            s += share_at_price(m, x, j, nu);
        return s;
    };
    // bracket the price in log space
    double lo = 1e-300, hi = 1.0;
    while (total(hi) > m.N)
        hi *= 16.0;
    lo = hi;
    while (total(lo) < m.N && lo > 1e-300)
        lo /= 16.0;
    for (int it = 0; it < 100; ++it)
    {
        double mid = std::sqrt(lo * hi);
        if (total(mid) > m.N)
            lo = mid;
        else
            hi = mid;
        if (hi - lo <= 1e-12 * hi)
            break;
    }
    double s = 0.0;
    for (int j : act)
    {
        n[j] = share_at_price(m, x, j, hi);
        s += n[j];
    }
    for (int j : act)
        n[j] *= m.N / s;
    return n;
}

inline double bar_tx(const BarModel &m, const std::vector<std::vector<double>> &x, const std::vector<double> &n)
{
    double s = 0.0;
    for (std::size_t j = 0; j < m.keys.size(); ++j)
        s += message_power(m, x, static_cast<int>(j), n[j]);
    return s / m.M;
}

inline std::vector<double> project_simplex(std::vector<double> v)
{
    std::vector<double> u = v;
    std::sort(u.begin(), u.end(), std::greater<>());
    double css = 0.0, theta = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i)
    {
        css += u[i];
        double t = (css - 1.0) / static_cast<double>(i + 1);
        if (u[i] - t > 0.0)
            theta = t;
    }
    for (auto &e : v)
        e = std::max(0.0, e - theta);
    return v;
}

inline std::vector<std::vector<double>> one_hot(const BarModel &m, const QualitySelection &x)
{
    std::vector<std::vector<double>> w;
    for (std::size_t i = 0; i < m.slots.size(); ++i)
    {
        std::vector<double> row(m.levels[i].size(), 0.0);
        auto it = std::find(m.levels[i].begin(), m.levels[i].end(), x.level[i]);
        if (it == m.levels[i].end())
            throw std::invalid_argument("surrogate: selection outside the allowed levels");
        row[static_cast<std::size_t>(it - m.levels[i].begin())] = 1.0;
        w.push_back(row);
    }
    return w;
}
} // namespace detail

// Optimal surrogate allocation for a fixed binary x.
inline BarAllocation bar_allocation(const Instance &inst, const QualitySelection &x, bool restrict_to_group_levels = true)
{
    auto m = detail::make_bar_model(inst, restrict_to_group_levels);
    auto w = detail::one_hot(m, x);
    BarAllocation a;
    a.keys = m.keys;
    a.N = detail::optimal_shares(m, w);
    for (std::size_t j = 0; j < m.keys.size(); ++j)
        a.P.push_back(detail::message_power(m, w, static_cast<int>(j), a.N[j]));
    return a;
}

inline double bar_value(const Instance &inst, const QualitySelection &x, bool restrict_to_group_levels = true)
{
    return bar_objective(inst, bar_allocation(inst, x, restrict_to_group_levels), x);
}

struct PenaltyOptions
{
    bool restrict_to_group_levels = true;
    int max_doublings = 10;
    int max_outer = 200;  // convex-concave steps per penalty weight
    int max_inner = 50;   // share/gradient rounds per convex subproblem
    double polar_tol = 1e-6;
    double step_tol = 1e-9;
};

struct PenaltyTrace
{
    std::vector<double> rho;
    std::vector<std::vector<double>> objective; // penalized objective after each convex-concave step, per rho
    bool polarized = false;
    int outer_iterations = 0;
};

struct ApproxSelection
{
    QualitySelection x;
    BarAllocation bar;   // optimal shares for the rounded x
    double bar_objective = 0.0;
    PenaltyTrace trace;
};

// Penalized convex-concave pass over the surrogate with x relaxed to the simplex per slot.
inline ApproxSelection approx_quality_selection(const Instance &inst, const PenaltyOptions &opt = {})
{
    using detail::BarModel;
    auto m = detail::make_bar_model(inst, opt.restrict_to_group_levels);
    const std::size_t I = m.slots.size();

    double max_e = 0.0, max_p = 0.0;
    for (const auto &u : inst.users)
        max_e = std::max(max_e, u.E);
    for (const auto &s : inst.partition.family)
        max_p = std::max(max_p, part_size(inst, s));
    double rho0 = inst.sys.alpha * max_e * max_p * inst.ladder.L();
    if (!(rho0 > 0.0))
    {
        // no transcoding cost: scale the penalty to the transmission power instead
        auto nat = bar_allocation(inst, natural_selection(inst), opt.restrict_to_group_levels);
        double p = 0.0;
        for (double v : nat.P)
            p += v;
        rho0 = std::max(p / m.M, 1e-300);
    }

    std::vector<std::vector<double>> x;
    for (std::size_t i = 0; i < I; ++i)
        x.emplace_back(m.levels[i].size(), 1.0 / static_cast<double>(m.levels[i].size()));

    auto linear_cost = [&](const std::vector<std::vector<double>> &v) {
        double s = 0.0;
        for (std::size_t i = 0; i < I; ++i)
            for (std::size_t a = 0; a < v[i].size(); ++a)
                s += m.cost[i][a] * v[i][a];
        return s;
    };
    auto chi = [&](const std::vector<std::vector<double>> &v) {
        double s = 0.0;
        for (const auto &row : v)
            for (double e : row)
                s += e * (1.0 - e);
        return s;
    };
    auto polarized = [&](const std::vector<std::vector<double>> &v) {
        for (const auto &row : v)
            for (double e : row)
                if (std::min(e, 1.0 - e) > opt.polar_tol)
                    return false;
        return true;
    };

    ApproxSelection out;
    auto n = detail::optimal_shares(m, x);
    double rho = rho0;
    for (int stage = 0; stage <= opt.max_doublings; ++stage, rho *= 2.0)
    {
        out.trace.rho.push_back(rho);
        out.trace.objective.emplace_back();
        auto &hist = out.trace.objective.back();
        for (int t = 0; t < opt.max_outer; ++t)
        {
            const auto xt = x;
            // convex surrogate: linearized -rho x^2 at xt
            auto surrogate = [&](const std::vector<std::vector<double>> &v, const std::vector<double> &nn) {
                double s = detail::bar_tx(m, v, nn) + linear_cost(v);
                for (std::size_t i = 0; i < I; ++i)
                    for (std::size_t a = 0; a < v[i].size(); ++a)
                        s += rho * v[i][a] * (1.0 - 2.0 * xt[i][a]);
                return s;
            };
            for (int inner = 0; inner < opt.max_inner; ++inner)
            {
                n = detail::optimal_shares(m, x);
                double g_cur = surrogate(x, n);
                // gradient in x at fixed shares
                std::vector<std::vector<double>> grad(I);
                double gmax = 0.0;
                for (std::size_t i = 0; i < I; ++i)
                {
                    grad[i].assign(x[i].size(), 0.0);
                    for (std::size_t a = 0; a < x[i].size(); ++a)
                        grad[i][a] = m.cost[i][a] + rho * (1.0 - 2.0 * xt[i][a]);
                }
                for (std::size_t j = 0; j < m.keys.size(); ++j)
                {
                    int c = -1;
                    detail::message_power(m, x, static_cast<int>(j), n[j], &c);
                    if (c < 0)
                        continue;
                    auto [i, a] = m.comps[j][c];
                    double e = m.demand[j] * x[i][a];
                    double ln2 = std::log(2.0);
                    grad[i][a] += m.q[i] * std::exp(e / (m.B * n[j]) * ln2) * ln2 * m.demand[j] / m.B / m.M;
                }
                for (const auto &row : grad)
                    for (double g : row)
                        gmax = std::max(gmax, std::abs(g));
                if (!(gmax > 0.0))
                    break;
                double step = 1.0 / gmax;
                bool moved = false;
                for (int bt = 0; bt < 60; ++bt, step *= 0.5)
                {
                    std::vector<std::vector<double>> y(I);
                    double dist2 = 0.0;
                    for (std::size_t i = 0; i < I; ++i)
                    {
                        std::vector<double> v(x[i].size());
                        for (std::size_t a = 0; a < v.size(); ++a)
                            v[a] = x[i][a] - step * grad[i][a];
                        y[i] = detail::project_simplex(v);
                        for (std::size_t a = 0; a < v.size(); ++a)
                            dist2 += (y[i][a] - x[i][a]) * (y[i][a] - x[i][a]);
                    }
                    if (dist2 == 0.0)
                        break;
                    double g_new = surrogate(y, n);
                    if (g_new <= g_cur - 1e-4 * dist2 / step)
                    {
                        x = std::move(y);
                        moved = true;
                        break;
                    }
                }
                if (!moved)
                    break;
                double g_after = surrogate(x, n);
                if (g_cur - g_after <= 1e-10 * std::abs(g_cur))
                    break;
            }
            n = detail::optimal_shares(m, x);
            hist.push_back(detail::bar_tx(m, x, n) + linear_cost(x) + rho * chi(x));
            ++out.trace.outer_iterations;
            double dx = 0.0;
            for (std::size_t i = 0; i < I; ++i)
                for (std::size_t a = 0; a < x[i].size(); ++a)
                    dx = std::max(dx, std::abs(x[i][a] - xt[i][a]));
            if (dx <= opt.step_tol)
                break;
        }
        if (polarized(x))
        {
            out.trace.polarized = true;
            break;
        }
    }

    for (std::size_t i = 0; i < I; ++i)
    {
        std::size_t a = static_cast<std::size_t>(std::max_element(x[i].begin(), x[i].end()) - x[i].begin());
        out.x.level.push_back(m.levels[i][a]);
    }
    out.bar = bar_allocation(inst, out.x, opt.restrict_to_group_levels);
    out.bar_objective = bar_objective(inst, out.bar, out.x);
    return out;
}

// Choose x on the surrogate, then run the per-realization solver with the groups it induces.
inline TwoTimescaleResult solve_general_transcoding(const Instance &inst, const McOptions &mc, const PenaltyOptions &opt = {})
{
    auto sel = approx_quality_selection(inst, opt);
    return evaluate_selection(inst, sel.x, mc);
}

} // namespace vrcast
