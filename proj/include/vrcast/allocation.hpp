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
#include "instance.hpp"

#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <set>
#include <stdexcept>
#include <limits>
#include <type_traits>
#include <vector>

namespace vrcast
{
// [B lambda / ln2 - Q]^+
inline double metric_f(double lambda, double Q, double B)
{
    return std::max(0.0, B * lambda / std::numbers::ln2 - Q);
}

// Reduction of the per-subcarrier Lagrangian when the message takes the subcarrier.
inline double metric_W(double lambda, double Q, double B)
{
    double f = metric_f(lambda, Q, B);
    if (f <= 0.0)
        return 0.0;
    return lambda * B * (std::log2(1.0 + f / Q) - f / ((Q + f) * std::numbers::ln2));
}

// One (message, subcarrier) pair with linear power cost: power Q (2^{c/B} - 1) buys rate c.
struct PowerLink
{
    double Q = 1.0;
    double B = 1.0;

    double gain(double price) const { return metric_W(price, Q, B); }
    double rate(double price) const
    {
        double f = metric_f(price, Q, B);
        return f > 0.0 ? B * std::log2(1.0 + f / Q) : 0.0;
    }
    double power(double price) const { return metric_f(price, Q, B); }
    double idle() const { return 0.0; }
    // smallest price delivering rate r
    double price_for_rate(double r) const { return Q * std::numbers::ln2 / B * std::exp2(r / B); }
};

struct AssignmentOptions
{
    int max_iter = 10000;
    double rate_tol = 1e-3;  // relative, for the subgradient stage
    double step_scale = 1.0; // a in a / (t + 1)
    int stall_iter = 300;     // stop when the best candidate has not improved for this long
    bool local_search = true; // move/swap pass when the dual stage leaves a gap
    int local_starts = 3;     // best distinct dual candidates the local search starts from
};

// Prices and/or an assignment from an earlier solve; the assignment is always kept as a candidate.
struct AssignmentWarmStart
{
    std::vector<double> prices;
    std::vector<int> owner;
};

struct AssignmentResult
{
    std::vector<int> owner;          // message per subcarrier
    std::vector<double> price;       // dual variable per message
    std::vector<double> link_rate;   // rate on each subcarrier for its owner
    std::vector<double> link_power;  // power on each subcarrier for its owner
    double objective = 0.0;          // sum of powers incl. idle costs (no 1/M)
    double max_rate_residual = 0.0;  // relative
    double lower_bound = 0.0;        // best dual value seen
    bool certified = false;          // KKT verified at the returned prices, so globally optimal
    bool converged = false;          // rate residual within rate_tol
    bool ties = false;
    int iterations = 0;
    std::vector<double> dual_history; // dual function values along the iterations
};

namespace detail
{
// Strict comparison keeps the smallest message index on ties; top[n] receives the winning gain.
template <class Links>
std::vector<int> argmax_owner(const Links &links, const std::vector<double> &price, const std::vector<int> &active, int n_sub, std::vector<double> *top = nullptr)
{
    std::vector<int> owner(n_sub, active.front());
    if (top)
        top->assign(n_sub, 0.0);
    for (int n = 0; n < n_sub; ++n)
    {
        double best = -1.0;
        for (int m : active)
        {
            double g = links(m, n).gain(price[m]);
            if (g > best)
            {
                best = g;
                owner[n] = m;
            }
        }
        if (top)
            (*top)[n] = std::max(0.0, best);
    }
    return owner;
}

template <class Links>
double message_rate(const Links &links, int m, double p, const std::vector<int> &subs)
{
    double r = 0.0;
    for (int n : subs)
        r += links(m, n).rate(p);
    return r;
}

// Price at which the owned subcarriers deliver exactly d.
template <class Links>
double polish_price(const Links &links, int m, double d, const std::vector<int> &subs)
{
    if constexpr (std::is_same_v<std::decay_t<decltype(links(0, 0))>, PowerLink>)
    {
        // water filling in closed form: level w = B price / ln2 over the k smallest Q
        std::vector<double> q;
        for (int n : subs)
            q.push_back(links(m, n).Q);
        std::sort(q.begin(), q.end());
        const double B = links(m, subs.front()).B;
        double log_sum = 0.0, w = 0.0;
        for (std::size_t k = 1; k <= q.size(); ++k)
        {
            log_sum += std::log2(q[k - 1]);
            w = std::exp2((d / B + log_sum) / static_cast<double>(k));
            if (k == q.size() || w <= q[k])
                break;
        }
        // nudged up so rounding cannot leave the rate short
        return w * std::numbers::ln2 / B * (1.0 + 1e-13);
    }
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (int n : subs)
    {
        lo = std::min(lo, links(m, n).price_for_rate(0.0));
        hi = std::max(hi, links(m, n).price_for_rate(d));
    }
    auto f = [&](double p) { return message_rate(links, m, p, subs) - d; };
    double flo = f(lo);
    if (flo >= 0.0)
        return lo;
    double fhi = f(hi);
    while (fhi < 0.0)
    {
        hi *= 2.0;
        fhi = f(hi);
    }
    std::uintmax_t it = 300;
    auto res = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, boost::math::tools::eps_tolerance<double>(52), it);
    // keep the side that meets the demand
    return f(res.first) >= 0.0 ? res.first : res.second;
}
} // namespace detail

// Dual method for binary subcarrier assignment: each subcarrier goes to the message with the
// largest gain at the current prices. For a fixed assignment the prices are the roots of the
// per-message rate equations; when the assignment at those roots is unchanged the pair is a KKT
// point. Otherwise subgradient steps a/(t+1) move the prices and the search continues.
//
// Links: callable links(m, n) returning an object with gain/rate/power/idle/price_for_rate.
template <class Links>
AssignmentResult solve_assignment(const Links &links, const std::vector<double> &demand, int n_sub, const AssignmentOptions &opt = {},
                                  const AssignmentWarmStart *warm = nullptr)
{
    const int n_msg = static_cast<int>(demand.size());
    if (n_msg < 1 || n_sub < 1)
        throw std::invalid_argument("solve_assignment: need messages and subcarriers");
    std::vector<int> active;
    for (int m = 0; m < n_msg; ++m)
    {
        if (!(demand[m] >= 0.0) || !std::isfinite(demand[m]))
            throw std::invalid_argument("solve_assignment: demands must be finite and nonnegative");
        if (demand[m] > 0.0)
            active.push_back(m);
    }
    if (static_cast<int>(active.size()) > n_sub)
        throw std::invalid_argument("solve_assignment: more messages with demand than subcarriers");

    AssignmentResult out;
    double idle_total = 0.0;
    for (int m = 0; m < n_msg; ++m)
        for (int n = 0; n < n_sub; ++n)
            idle_total += links(m, n).idle();

    if (active.empty())
    {
        out.owner.assign(n_sub, 0);
        out.price.assign(n_msg, 0.0);
        out.link_rate.assign(n_sub, 0.0);
        out.link_power.assign(n_sub, links(0, 0).idle());
        for (int n = 0; n < n_sub; ++n)
            out.link_power[n] = links(0, n).idle();
        out.objective = out.lower_bound = idle_total;
        out.certified = out.converged = true;
        return out;
    }

    std::vector<double> price(n_msg, 0.0), scale(n_msg, 0.0);
    for (int m : active)
    {
        std::vector<double> hint;
        for (int n = 0; n < n_sub; ++n)
            hint.push_back(links(m, n).price_for_rate(demand[m] / n_sub));
        std::nth_element(hint.begin(), hint.begin() + hint.size() / 2, hint.end());
        scale[m] = hint[hint.size() / 2];
        price[m] = scale[m];
        if (warm && static_cast<int>(warm->prices.size()) == n_msg && warm->prices[m] > 0.0)
            price[m] = warm->prices[m];
    }

    auto evaluate = [&](const std::vector<int> &owner, const std::vector<double> &p, AssignmentResult &r) {
        r.owner = owner;
        r.price = p;
        r.link_rate.assign(n_sub, 0.0);
        r.link_power.assign(n_sub, 0.0);
        double obj = idle_total;
        std::vector<double> delivered(n_msg, 0.0);
        for (int n = 0; n < n_sub; ++n)
        {
            const auto &lk = links(owner[n], n);
            r.link_rate[n] = lk.rate(p[owner[n]]);
            r.link_power[n] = lk.power(p[owner[n]]);
            obj += r.link_power[n] - lk.idle();
            delivered[owner[n]] += r.link_rate[n];
        }
        r.objective = obj;
        r.max_rate_residual = 0.0;
        for (int m : active)
            r.max_rate_residual = std::max(r.max_rate_residual, std::abs(delivered[m] - demand[m]) / demand[m]);
    };

    auto dual_value = [&](const std::vector<double> &p, const std::vector<double> *top = nullptr) {
        double v = idle_total;
        for (int m : active)
            v += p[m] * demand[m];
        for (int n = 0; n < n_sub; ++n)
        {
            double best = 0.0;
            if (top)
                best = (*top)[n];
            else
                for (int m : active)
                    best = std::max(best, links(m, n).gain(p[m]));
            v -= best;
        }
        return v;
    };

    bool have_best = false;
    AssignmentResult best;
    std::set<std::vector<int>> visited;
    std::vector<AssignmentResult> pool; // lowest objectives, distinct assignments
    auto remember = [&](const AssignmentResult &r) {
        for (const auto &p : pool)
            if (p.owner == r.owner)
                return;
        pool.push_back(r);
        std::sort(pool.begin(), pool.end(), [](const AssignmentResult &x, const AssignmentResult &y) { return x.objective < y.objective; });
        if (static_cast<int>(pool.size()) > std::max(1, opt.local_starts))
            pool.pop_back();
    };
    int sub_steps = 0, last_gain = 0;

    if (warm && static_cast<int>(warm->owner.size()) == n_sub)
    {
        std::vector<std::vector<int>> subs(n_msg);
        bool ok = true;
        for (int n = 0; n < n_sub; ++n)
        {
            ok = ok && warm->owner[n] >= 0 && warm->owner[n] < n_msg && demand[warm->owner[n]] > 0.0;
            if (ok)
                subs[warm->owner[n]].push_back(n);
        }
        for (int m : active)
            ok = ok && !subs[m].empty();
        if (ok)
        {
            std::vector<double> pstar = price;
            for (int m : active)
                pstar[m] = detail::polish_price(links, m, demand[m], subs[m]);
            evaluate(warm->owner, pstar, best);
            have_best = true;
            remember(best);
        }
    }

    for (int it = 0; it < opt.max_iter; ++it)
    {
        out.iterations = it + 1;
        std::vector<double> top;
        auto owner = detail::argmax_owner(links, price, active, n_sub, &top);
        out.dual_history.push_back(dual_value(price, &top));
        std::vector<std::vector<int>> subs(n_msg);
        for (int n = 0; n < n_sub; ++n)
            subs[owner[n]].push_back(n);
        bool covers = true;
        for (int m : active)
            covers = covers && !subs[m].empty();

        if (covers)
        {
            std::vector<double> pstar = price;
            for (int m : active)
                pstar[m] = detail::polish_price(links, m, demand[m], subs[m]);
            AssignmentResult cand;
            evaluate(owner, pstar, cand);
            cand.iterations = it + 1;

            // KKT: every owner still maximizes the gain at the polished prices
            bool kkt = true, ties = false;
            for (int n = 0; n < n_sub && kkt; ++n)
            {
                double own = links(owner[n], n).gain(pstar[owner[n]]);
                for (int m : active)
                {
                    if (m == owner[n])
                        continue;
                    double g = links(m, n).gain(pstar[m]);
                    double tol = 1e-9 * std::max(own, g);
                    if (g > own + tol)
                    {
                        kkt = false;
                        break;
                    }
                    if (g > 0.0 && std::abs(g - own) <= tol)
                        ties = true;
                }
            }
            cand.ties = ties;
            cand.certified = kkt;
            remember(cand);
            out.dual_history.push_back(dual_value(pstar));
            if (!have_best || cand.objective < best.objective || kkt)
            {
                // only a meaningful gain restarts the stall counter
                if (!have_best || kkt || cand.objective < best.objective * (1.0 - 1e-9))
                    last_gain = it;
                best = cand;
                have_best = true;
            }
            if (kkt)
                break;
            if (visited.insert(owner).second)
            {
                price = pstar;
                continue;
            }
        }

        if (have_best && it - last_gain > opt.stall_iter)
            break;
        // subgradient step on the dual
        std::vector<double> delivered(n_msg, 0.0);
        for (int n = 0; n < n_sub; ++n)
            delivered[owner[n]] += links(owner[n], n).rate(price[owner[n]]);
        double step = opt.step_scale / (sub_steps + 1.0);
        ++sub_steps;
        for (int m : active)
        {
            double resid = (delivered[m] - demand[m]) / demand[m];
            price[m] = std::max(0.0, price[m] - step * scale[m] * resid);
        }
    }

    if (!have_best)
    {
        // fall back to a covering assignment: give each message its best subcarrier in turn
        std::vector<int> owner(n_sub, active.front());
        std::vector<bool> taken(n_sub, false);
        for (int m : active)
        {
            int pick = -1;
            double q = std::numeric_limits<double>::infinity();
            for (int n = 0; n < n_sub; ++n)
                if (!taken[n] && links(m, n).price_for_rate(demand[m]) < q)
                {
                    q = links(m, n).price_for_rate(demand[m]);
                    pick = n;
                }
            taken[pick] = true;
            owner[pick] = m;
        }
        std::vector<std::vector<int>> subs(n_msg);
        for (int n = 0; n < n_sub; ++n)
            subs[owner[n]].push_back(n);
        std::vector<double> pstar = price;
        for (int m : active)
            pstar[m] = detail::polish_price(links, m, demand[m], subs[m]);
        evaluate(owner, pstar, best);
        remember(best);
    }
    auto improve = [&](const AssignmentResult &start) {
        // single moves and pairwise swaps, re-pricing only the two messages touched
        std::vector<std::vector<int>> subs(n_msg);
        for (int n = 0; n < n_sub; ++n)
            subs[start.owner[n]].push_back(n);
        auto msg_cost = [&](int m, const std::vector<int> &sm, double &p) {
            double c = 0.0;
            if (demand[m] <= 0.0)
                return c;
            if (sm.empty())
                return std::numeric_limits<double>::infinity();
            p = detail::polish_price(links, m, demand[m], sm);
            for (int n : sm)
                c += links(m, n).power(p) - links(m, n).idle();
            return c;
        };
        std::vector<double> cost(n_msg, 0.0), pr = start.price;
        for (int m : active)
            cost[m] = msg_cost(m, subs[m], pr[m]);
        auto without = [](std::vector<int> v, int n) {
            v.erase(std::find(v.begin(), v.end(), n));
            return v;
        };
        auto with = [](std::vector<int> v, int n) {
            v.insert(std::upper_bound(v.begin(), v.end(), n), n);
            return v;
        };
        std::vector<int> where(n_sub, -1);
        for (int m : active)
            for (int n : subs[m])
                where[n] = m;
        // first improvement, rescanning from the start after every accepted move or swap
        bool improved = true;
        while (improved)
        {
            improved = false;
            for (int n = 0; n < n_sub && !improved; ++n)
            {
                int a = where[n];
                if (a < 0)
                    continue;
                for (int b : active)
                {
                    if (b == a)
                        continue;
                    double pa = pr[a], pb = pr[b];
                    auto sa = without(subs[a], n), sb = with(subs[b], n);
                    double ca = msg_cost(a, sa, pa), cb = msg_cost(b, sb, pb);
                    if (ca + cb < (cost[a] + cost[b]) * (1.0 - 1e-12))
                    {
                        subs[a] = sa, subs[b] = sb, cost[a] = ca, cost[b] = cb, pr[a] = pa, pr[b] = pb;
                        where[n] = b;
                        improved = true;
                        break;
                    }
                    for (int n2 : subs[b])
                    {
                        // a swap that hands both messages a weaker link cannot help
                        if (links(a, n2).price_for_rate(0.0) >= links(a, n).price_for_rate(0.0) &&
                            links(b, n).price_for_rate(0.0) >= links(b, n2).price_for_rate(0.0))
                            continue;
                        auto sa2 = with(without(subs[a], n), n2), sb2 = with(without(subs[b], n2), n);
                        double qa = pr[a], qb = pr[b];
                        double ca2 = msg_cost(a, sa2, qa), cb2 = msg_cost(b, sb2, qb);
                        if (ca2 + cb2 < (cost[a] + cost[b]) * (1.0 - 1e-12))
                        {
                            subs[a] = sa2, subs[b] = sb2, cost[a] = ca2, cost[b] = cb2, pr[a] = qa, pr[b] = qb;
                            where[n] = b;
                            where[n2] = a;
                            improved = true;
                            break;
                        }
                    }
                    if (improved)
                        break;
                }
            }
        }
        std::vector<int> owner(n_sub, 0);
        for (int m = 0; m < n_msg; ++m)
            for (int n : subs[m])
                owner[n] = m;
        for (int n = 0; n < n_sub; ++n)
            if (std::none_of(active.begin(), active.end(), [&](int m) { return std::find(subs[m].begin(), subs[m].end(), n) != subs[m].end(); }))
                owner[n] = start.owner[n];
        AssignmentResult ls;
        evaluate(owner, pr, ls);
        return ls;
    };
    if (!best.certified && opt.local_search)
    {
        // start from the best few distinct assignments; the incumbent is among them
        bool seen = false;
        for (const auto &p : pool)
            seen = seen || p.owner == best.owner;
        if (!seen)
            pool.push_back(best);
        for (const auto &start : pool)
        {
            auto ls = improve(start);
            if (ls.objective < best.objective)
            {
                ls.ties = best.ties;
                best = ls;
            }
        }
    }
    best.converged = best.max_rate_residual <= opt.rate_tol;
    best.lower_bound = out.dual_history.empty() ? 0.0 : *std::max_element(out.dual_history.begin(), out.dual_history.end());
    best.iterations = out.iterations;
    best.dual_history = std::move(out.dual_history);
    return best;
}

struct MessageDemand
{
    MessageKey key;
    double demand = 0.0;
    std::vector<double> Q; // per subcarrier
};

struct AllocationResult
{
    std::vector<int> owner;     // message per subcarrier
    std::vector<double> P;      // power on each subcarrier (for its owner)
    std::vector<double> c;      // rate on each subcarrier
    std::vector<double> lambda; // per message
    double sum_power = 0.0;     // sum of P (no 1/M)
    double lower_bound = 0.0;   // dual bound on sum_power
    double max_rate_residual = 0.0;
    bool certified = false;
    bool converged = false;
    bool ties = false;
    int iterations = 0;
};

inline AllocationResult solve_allocation(const std::vector<MessageDemand> &demands, int N, double B, const AssignmentOptions &opt = {})
{
    if (demands.empty())
        throw std::invalid_argument("solve_allocation: no messages");
    std::vector<std::vector<PowerLink>> links(demands.size());
    std::vector<double> d;
    for (std::size_t m = 0; m < demands.size(); ++m)
    {
        if (static_cast<int>(demands[m].Q.size()) != N)
            throw std::invalid_argument("solve_allocation: Q must cover every subcarrier");
        for (double q : demands[m].Q)
        {
            if (!(q > 0.0) || !std::isfinite(q))
                throw std::invalid_argument("solve_allocation: Q values must be positive");
            links[m].push_back({q, B});
        }
        d.push_back(demands[m].demand);
    }
    auto acc = [&](int m, int n) -> const PowerLink & { return links[m][n]; };
    auto r = solve_assignment(acc, d, N, opt);
    AllocationResult out;
    out.owner = r.owner;
    out.P = r.link_power;
    out.c = r.link_rate;
    out.lambda = r.price;
    out.sum_power = r.objective;
    out.max_rate_residual = r.max_rate_residual;
    out.lower_bound = r.lower_bound;
    out.certified = r.certified;
    out.converged = r.converged;
    out.ties = r.ties;
    out.iterations = r.iterations;
    return out;
}

// Per-realization solution of the joint beam/subcarrier/power/rate problem.
struct AllocationSolution
{
    std::vector<int> owner;  // message per subcarrier
    std::vector<double> eta; // power per subcarrier
    std::vector<double> c;   // rate per subcarrier
    std::vector<CVector> w;  // unit beam per subcarrier
    std::vector<double> Q;   // beam power of the owner per subcarrier
    double objective = 0.0;  // sum eta / M
    bool converged = true;
    bool ties = false;
    bool rank_gt_one = false;
    double max_rate_residual = 0.0;
};

// beams[m][n] must be present for every assigned (m, n).
inline AllocationSolution assemble_solution(const AllocationResult &alloc, const std::vector<std::vector<BeamSolution>> &beams, int M)
{
    AllocationSolution s;
    const int n_sub = static_cast<int>(alloc.owner.size());
    s.owner = alloc.owner;
    s.eta = alloc.P;
    s.c.resize(n_sub);
    s.w.resize(n_sub);
    s.Q.resize(n_sub);
    double total = 0.0;
    for (int n = 0; n < n_sub; ++n)
    {
        int m = alloc.owner[n];
        if (m < 0 || static_cast<std::size_t>(m) >= beams.size() || static_cast<std::size_t>(n) >= beams[m].size() || beams[m][n].v.size() == 0)
            throw std::invalid_argument("assemble_solution: missing beam for an assigned subcarrier");
        const auto &b = beams[m][n];
        s.Q[n] = b.Q;
        s.w[n] = b.v / std::sqrt(b.Q);
        s.c[n] = alloc.c[n];
        total += alloc.P[n];
    }
    s.objective = total / M;
    s.converged = alloc.converged;
    s.ties = alloc.ties;
    s.max_rate_residual = alloc.max_rate_residual;
    return s;
}

enum class BeamChoice
{
    sdr,       // optimal for groups up to three users
    asymptotic,
    mrt        // normalized MRT: per-user for singletons, dominant eigenvector for groups
};

inline BeamSolution design_beam(const BeamInstance &bi, BeamChoice choice)
{
    switch (choice)
    {
    case BeamChoice::sdr:
        return solve_qos_sdr(bi);
    case BeamChoice::asymptotic:
        return asymptotic_beamformer(bi);
    case BeamChoice::mrt:
        break;
    }
    return mrt_beamformer(bi, bi.h.size() == 1 ? MrtMode::per_user : MrtMode::group);
}

// Beams depend only on (group, subcarrier) within one realization, so callers comparing many
// message sets on the same draw can share them.
struct BeamCache
{
    std::uint64_t seed = 0, draw = 0;
    BeamChoice choice = BeamChoice::sdr;
    std::map<std::pair<UserSet, int>, BeamSolution> beams;
};

// beams[m][n]; messages without demand get none.
inline std::vector<std::vector<BeamSolution>> compute_beams(const Instance &inst, const std::vector<Message> &msgs, const ChannelRealization &ch, BeamChoice choice,
                                                            BeamCache *cache = nullptr)
{
    if (cache && (cache->seed != ch.seed || cache->draw != ch.draw_index || cache->choice != choice))
    {
        cache->beams.clear();
        cache->seed = ch.seed;
        cache->draw = ch.draw_index;
        cache->choice = choice;
    }
    std::vector<std::vector<BeamSolution>> beams(msgs.size());
    for (std::size_t m = 0; m < msgs.size(); ++m)
    {
        if (msgs[m].demand <= 0.0)
            continue;
        for (int n = 0; n < inst.sys.N; ++n)
        {
            if (cache)
            {
                auto key = std::make_pair(msgs[m].group, n);
                auto it = cache->beams.find(key);
                if (it == cache->beams.end())
                    it = cache->beams.emplace(key, design_beam(beam_instance(inst, msgs[m].group, ch, n), choice)).first;
                beams[m].push_back(it->second);
            }
            else
                beams[m].push_back(design_beam(beam_instance(inst, msgs[m].group, ch, n), choice));
        }
    }
    return beams;
}

inline std::vector<MessageDemand> demands_from(const std::vector<Message> &msgs, const std::vector<std::vector<BeamSolution>> &beams, int N, bool relaxed = false)
{
    std::vector<MessageDemand> out;
    for (std::size_t m = 0; m < msgs.size(); ++m)
    {
        MessageDemand d{msgs[m].key, msgs[m].demand, std::vector<double>(N, 1.0)};
        if (msgs[m].demand > 0.0)
            for (int n = 0; n < N; ++n)
                d.Q[n] = relaxed ? beams[m][n].relaxed_value : beams[m][n].Q;
        out.push_back(std::move(d));
    }
    return out;
}

// Subcarrier, power and rate allocation on top of fixed beams.
inline AllocationSolution solve_with_beams(const Instance &inst, const std::vector<Message> &msgs, const std::vector<std::vector<BeamSolution>> &beams,
                                           const AssignmentOptions &opt = {})
{
    auto alloc = solve_allocation(demands_from(msgs, beams, inst.sys.N), inst.sys.N, inst.sys.B, opt);
    auto sol = assemble_solution(alloc, beams, inst.sys.M);
    for (int n = 0; n < inst.sys.N; ++n)
        sol.rank_gt_one = sol.rank_gt_one || beams[sol.owner[n]][n].rank_gt_one;
    return sol;
}

// Dual bound on the optimum using the relaxed beam powers (valid for any beam design).
inline double relaxed_lower_bound(const Instance &inst, const std::vector<Message> &msgs, const std::vector<std::vector<BeamSolution>> &sdr_beams)
{
    auto alloc = solve_allocation(demands_from(msgs, sdr_beams, inst.sys.N, true), inst.sys.N, inst.sys.B);
    return alloc.lower_bound / inst.sys.M;
}

} // namespace vrcast
