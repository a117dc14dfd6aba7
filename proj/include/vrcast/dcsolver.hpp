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

#include "allocation.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace vrcast
{
namespace detail
{
// min x^T G x - 2 t^T x over x >= 0 (G positive semidefinite), Lawson-Hanson style active set.
inline Eigen::VectorXd nnls_gram(const Eigen::MatrixXd &G, const Eigen::VectorXd &t, double tol = 1e-13)
{
    const int k = static_cast<int>(t.size());
    Eigen::VectorXd x = Eigen::VectorXd::Zero(k);
    std::vector<bool> in(k, false);
    const double scale = t.cwiseAbs().maxCoeff();
    auto solve_sub = [&](Eigen::VectorXd &z) {
        std::vector<int> idx;
        for (int i = 0; i < k; ++i)
            if (in[i])
                idx.push_back(i);
        z = Eigen::VectorXd::Zero(k);
        if (idx.empty())
            return;
        Eigen::MatrixXd g(idx.size(), idx.size());
        Eigen::VectorXd r(idx.size());
        for (std::size_t a = 0; a < idx.size(); ++a)
        {
            r[a] = t[idx[a]];
            for (std::size_t b = 0; b < idx.size(); ++b)
                g(a, b) = G(idx[a], idx[b]);
        }
        Eigen::VectorXd s = g.completeOrthogonalDecomposition().solve(r);
        for (std::size_t a = 0; a < idx.size(); ++a)
            z[idx[a]] = s[a];
    };
    for (int outer = 0; outer < 4 * k + 10; ++outer)
    {
        Eigen::VectorXd w = t - G * x;
        int j = -1;
        double best = tol * scale;
        for (int i = 0; i < k; ++i)
            if (!in[i] && w[i] > best)
            {
                best = w[i];
                j = i;
            }
        if (j < 0)
            break;
        in[j] = true;
        Eigen::VectorXd z;
        for (int inner = 0; inner <= k; ++inner)
        {
            solve_sub(z);
            double alpha = 1.0;
            int drop = -1;
            for (int i = 0; i < k; ++i)
                if (in[i] && z[i] <= 0.0)
                {
                    double a = x[i] / (x[i] - z[i]);
                    if (a < alpha)
                    {
                        alpha = a;
                        drop = i;
                    }
                }
            if (drop < 0)
                break;
            x += alpha * (z - x);
            for (int i = 0; i < k; ++i)
                if (in[i] && (i == drop || x[i] <= 0.0))
                {
                    in[i] = false;
                    x[i] = 0.0;
                }
        }
        for (int i = 0; i < k; ++i)
            x[i] = in[i] ? std::max(0.0, z[i]) : 0.0;
    }
    return x;
}
} // namespace detail

// Convexified (message, subcarrier) link around a beam W0:
//   phi(g) = min ||W||^2  s.t.  Re(a_k^H W) >= s_k + g  for every user k of the group,
// with a_k = 2 beta_k h_k (h_k^H W0) / (M sigma^2) and s_k = beta_k |h_k^H W0|^2 / (M sigma^2).
// phi is convex piecewise quadratic in the SNR target g; its breakpoints are traced once so that
// every price query below is closed form.
class DcLink
{
  public:
    DcLink() = default;

    DcLink(const BeamInstance &bi, const CVector &w0, double B) : B_(B), M_(bi.M)
    {
        validate(bi);
        const int k = static_cast<int>(bi.h.size());
        a_.resize(k);
        an_.resize(k);
        s_.resize(k);
        for (int i = 0; i < k; ++i)
        {
            cplx p = bi.h[i].dot(w0); // h^H W0
            double c = bi.beta[i] / (bi.M * bi.sigma2);
            a_[i] = bi.h[i] * (2.0 * c * p);
            s_[i] = c * std::norm(p);
            an_[i] = a_[i].norm();
            if (!(an_[i] > 0.0) || !(s_[i] > 0.0))
                throw std::invalid_argument("DcLink: linearization point orthogonal to a user channel");
        }
        G_.resize(k, k);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j)
                G_(i, j) = (a_[i].dot(a_[j])).real() / (an_[i] * an_[j]);
        trace_path();
        phi0_ = phi(0.0);
    }

    // value and slope of phi
    double phi(double g) const
    {
        const auto &sg = segment(g);
        Eigen::VectorXd nu = sg.nu + (g - sg.g0) * sg.dnu;
        double v = 0.0;
        for (int i = 0; i < static_cast<int>(s_.size()); ++i)
            v += nu[i] * (s_[i] + g) / an_[i];
        return v;
    }
    double dphi(double g) const
    {
        const auto &sg = segment(g);
        return 2.0 * (sg.sum0 + (g - sg.g0) * sg.sum1);
    }

    // optimal SNR target at price gamma (rate weight)
    double target(double gamma) const
    {
        const double T = gamma * B_ * M_ / std::numbers::ln2;
        if (dphi_at(seg_.front(), 0.0) >= T)
            return 0.0;
        for (std::size_t j = 0; j < seg_.size(); ++j)
        {
            const auto &sg = seg_[j];
            double g1 = j + 1 < seg_.size() ? seg_[j + 1].g0 : std::numeric_limits<double>::infinity();
            if (std::isfinite(g1) && dphi_at(sg, g1) * (1.0 + g1) < T)
                continue;
            // 2 (p + q g)(1 + g) = T on this segment
            double p = sg.sum0 - sg.sum1 * sg.g0, q = sg.sum1;
            double g;
            if (q <= 1e-300 * std::max(1.0, std::abs(p)))
                g = T / (2.0 * p) - 1.0;
            else
            {
                double bq = p + q, cq = p - T / 2.0;
                double disc = bq * bq - 4.0 * q * cq;
                g = (-bq + std::sqrt(std::max(0.0, disc))) / (2.0 * q);
            }
            return std::clamp(g, sg.g0, g1);
        }
        return seg_.back().g0;
    }

    double gain(double gamma) const
    {
        double g = target(gamma);
        if (g == 0.0)
            return 0.0;
        return std::max(0.0, phi0_ / M_ - (phi(g) / M_ - gamma * B_ * std::log2(1.0 + g)));
    }
    double rate(double gamma) const { return B_ * std::log2(1.0 + target(gamma)); }
    double power(double gamma) const { return phi(target(gamma)) / M_; }
    double idle() const { return phi0_ / M_; }
    double price_for_rate(double r) const
    {
        double g = std::exp2(r / B_) - 1.0;
        return dphi(g) * (1.0 + g) * std::numbers::ln2 / (B_ * M_);
    }

    // minimizer of phi(g): W = sum_k nu_k a_k
    CVector beam(double g) const
    {
        const auto &sg = segment(g);
        Eigen::VectorXd nu = sg.nu + (g - sg.g0) * sg.dnu;
        CVector w = CVector::Zero(a_.front().size());
        for (std::size_t i = 0; i < a_.size(); ++i)
            w += a_[i] * (nu[i] / an_[i]);
        return w;
    }
    // multipliers of the per-user constraints for the objective ||W||^2 / M
    Eigen::VectorXd multipliers(double g) const
    {
        const auto &sg = segment(g);
        Eigen::VectorXd nu = sg.nu + (g - sg.g0) * sg.dnu;
        for (int i = 0; i < nu.size(); ++i)
            nu[i] *= 2.0 / (an_[i] * M_);
        return nu;
    }
    std::size_t segments() const { return seg_.size(); }

  private:
    struct Segment
    {
        double g0 = 0.0;
        Eigen::VectorXd nu, dnu; // normalized multipliers, affine in g
        double sum0 = 0.0, sum1 = 0.0; // sum nu_k / |a_k| and its slope
    };

    double B_ = 1.0;
    int M_ = 1;
    double phi0_ = 0.0;
    std::vector<CVector> a_;
    std::vector<double> an_, s_;
    Eigen::MatrixXd G_;
    std::vector<Segment> seg_;

    Eigen::VectorXd rhs(double g) const
    {
        Eigen::VectorXd t(s_.size());
        for (int i = 0; i < t.size(); ++i)
            t[i] = (s_[i] + g) / an_[i];
        return t;
    }

    static double dphi_at(const Segment &sg, double g) { return 2.0 * (sg.sum0 + (g - sg.g0) * sg.sum1); }

    const Segment &segment(double g) const
    {
        std::size_t j = 0;
        while (j + 1 < seg_.size() && seg_[j + 1].g0 <= g)
            ++j;
        return seg_[j];
    }

    void finish(Segment &sg) const
    {
        sg.sum0 = sg.sum1 = 0.0;
        for (int i = 0; i < sg.nu.size(); ++i)
        {
            sg.sum0 += sg.nu[i] / an_[i];
            sg.sum1 += sg.dnu[i] / an_[i];
        }
    }

    // direction of nu for the support of x (solve on the support, zero elsewhere)
    Eigen::VectorXd direction(const std::vector<bool> &in) const
    {
        const int k = static_cast<int>(s_.size());
        std::vector<int> idx;
        for (int i = 0; i < k; ++i)
            if (in[i])
                idx.push_back(i);
        Eigen::VectorXd d = Eigen::VectorXd::Zero(k);
        if (idx.empty())
            return d;
        Eigen::MatrixXd g(idx.size(), idx.size());
        Eigen::VectorXd r(idx.size());
        for (std::size_t a = 0; a < idx.size(); ++a)
        {
            r[a] = 1.0 / an_[idx[a]];
            for (std::size_t b = 0; b < idx.size(); ++b)
                g(a, b) = G_(idx[a], idx[b]);
        }
        Eigen::VectorXd s = g.completeOrthogonalDecomposition().solve(r);
        for (std::size_t a = 0; a < idx.size(); ++a)
            d[idx[a]] = s[a];
        return d;
    }

    void trace_path()
    {
        const int k = static_cast<int>(s_.size());
        double g = 0.0;
        Eigen::VectorXd nu = detail::nnls_gram(G_, rhs(0.0));
        const double tiny = 1e-12;
        for (int step = 0; step < 8 * k + 16; ++step)
        {
            std::vector<bool> in(k);
            for (int i = 0; i < k; ++i)
                in[i] = nu[i] > tiny * nu.cwiseAbs().maxCoeff();
            Eigen::VectorXd d = direction(in);
            // the support must stay valid just past g; otherwise re-solve slightly ahead
            Eigen::VectorXd slack = G_ * nu - rhs(g), dslack = G_ * d - rhs(1.0) + rhs(0.0);
            const double ts = rhs(g).cwiseAbs().maxCoeff(), ds = (rhs(1.0) - rhs(0.0)).cwiseAbs().maxCoeff();
            bool ok = true;
            for (int i = 0; i < k; ++i)
                ok = ok && (in[i] || slack[i] > 1e-12 * ts || dslack[i] >= -1e-12 * ds);
            if (!ok)
            {
                double ga = g + 1e-9 * (1.0 + g);
                Eigen::VectorXd ahead = detail::nnls_gram(G_, rhs(ga));
                for (int i = 0; i < k; ++i)
                    in[i] = ahead[i] > tiny * ahead.cwiseAbs().maxCoeff();
                d = direction(in);
            }
            Segment sg{g, nu, d};
            finish(sg);
            seg_.push_back(sg);
            // next event
            double dg = std::numeric_limits<double>::infinity();
            int who = -1;
            for (int i = 0; i < k; ++i)
            {
                if (in[i] && d[i] < 0.0)
                {
                    double t = -nu[i] / d[i];
                    if (t < dg)
                        dg = t, who = i;
                }
                else if (!in[i] && dslack[i] < 0.0)
                {
                    double t = std::max(0.0, slack[i]) / -dslack[i];
                    if (t < dg)
                        dg = t, who = i;
                }
            }
            if (who < 0 || !std::isfinite(dg))
                break;
            g += std::max(dg, 1e-14 * (1.0 + g));
            nu = detail::nnls_gram(G_, rhs(g));
        }
    }
};

inline constexpr double kDcBeamFloor = 1e-120;

// Iterate of the convexified problem: per (message, subcarrier) beam, share and rate.
struct DcIterate
{
    std::vector<std::vector<CVector>> W; // [m][n], sqrt(eta mu) w
    std::vector<std::vector<double>> mu;
    std::vector<std::vector<double>> c;
    double objective = 0.0; // sum ||W||^2 / M
};

struct DcDuals
{
    std::vector<double> gamma;                            // per message
    std::vector<std::vector<Eigen::VectorXd>> lambda;     // [m][n], per group member
};

enum class DcStart
{
    uniform,  // equal shares and rates on every subcarrier
    allocated // binary point from the normalized-MRT allocation
};

struct DcOptions
{
    DcStart start = DcStart::allocated;
    int max_outer = 100;
    double rel_tol = 1e-4; // on the objective change
    int patience = 3;      // consecutive small changes before stopping
    AssignmentOptions inner{10000, 1e-3, 1.0, 300, true};
};

struct DcTrace
{
    std::vector<double> objective; // initial point first
    int outer_iterations = 0;
    bool converged = false;
    bool inner_converged = true;
    bool ties = false;
};

// Demanded messages only; zero-demand messages are carried with W = 0.
inline DcIterate initial_point(const Instance &inst, const std::vector<Message> &msgs, const ChannelRealization &ch)
{
    const int N = inst.sys.N;
    int active = 0;
    for (const auto &m : msgs)
        active += m.demand > 0.0 ? 1 : 0;
    DcIterate it;
    it.W.assign(msgs.size(), std::vector<CVector>(N, CVector::Zero(inst.sys.M)));
    it.mu.assign(msgs.size(), std::vector<double>(N, 0.0));
    it.c.assign(msgs.size(), std::vector<double>(N, 0.0));
    if (active == 0)
        return it;
    const double share = 1.0 / active;
    double total = 0.0;
    for (std::size_t m = 0; m < msgs.size(); ++m)
    {
        if (msgs[m].demand <= 0.0)
            continue;
        const double c = msgs[m].demand / N;
        const double need = share * (std::exp2(c / (inst.sys.B * share)) - 1.0);
        for (int n = 0; n < N; ++n)
        {
            auto bi = beam_instance(inst, msgs[m].group, ch, n);
            auto b = mrt_beamformer(bi, bi.h.size() == 1 ? MrtMode::per_user : MrtMode::group);
            it.W[m][n] = b.v * std::sqrt(need);
            it.mu[m][n] = share;
            it.c[m][n] = c;
            total += it.W[m][n].squaredNorm();
        }
    }
    it.objective = total / inst.sys.M;
    return it;
}

// Binary start: owners carry the normalized-MRT allocation, other links keep the uniform-share
// MRT beam of initial_point so every link has a usable linearization.
inline DcIterate allocated_start(const Instance &inst, const std::vector<Message> &msgs, const ChannelRealization &ch,
                                 std::vector<int> *owner_out = nullptr)
{
    DcIterate it = initial_point(inst, msgs, ch);
    auto beams = compute_beams(inst, msgs, ch, BeamChoice::mrt);
    auto alloc = solve_allocation(demands_from(msgs, beams, inst.sys.N), inst.sys.N, inst.sys.B);
    double total = 0.0;
    for (std::size_t m = 0; m < msgs.size(); ++m)
        for (int n = 0; n < inst.sys.N; ++n)
        {
            it.mu[m][n] = 0.0;
            it.c[m][n] = 0.0;
            if (alloc.owner[n] == static_cast<int>(m))
            {
                const auto &b = beams[m][n];
                it.mu[m][n] = 1.0;
                it.c[m][n] = alloc.c[n];
                // zero rate still needs a nonzero beam for the linearization
                it.W[m][n] = b.v * std::sqrt(std::max(alloc.P[n], 1e-12 * b.Q) / b.Q);
            }
            total += it.W[m][n].squaredNorm();
        }
    it.objective = total / inst.sys.M;
    if (owner_out)
        *owner_out = alloc.owner;
    return it;
}

struct DcStepResult
{
    DcIterate next;
    DcDuals duals;
    AssignmentResult assignment;
};

inline std::vector<std::vector<DcLink>> dc_links(const Instance &inst, const std::vector<Message> &msgs, const ChannelRealization &ch, const DcIterate &lin)
{
    std::vector<std::vector<DcLink>> links(msgs.size());
    for (std::size_t m = 0; m < msgs.size(); ++m)
    {
        if (msgs[m].demand <= 0.0)
            continue;
        for (int n = 0; n < inst.sys.N; ++n)
            links[m].emplace_back(beam_instance(inst, msgs[m].group, ch, n), lin.W[m][n], inst.sys.B);
    }
    return links;
}

// Optimum of the problem linearized at lin, by the dual method over binary shares.
inline DcStepResult solve_inner_dual(const Instance &inst, const std::vector<Message> &msgs, const ChannelRealization &ch, const DcIterate &lin,
                                     const AssignmentOptions &opt = {}, const AssignmentWarmStart *warm = nullptr)
{
    std::vector<int> idx; // demanded messages
    std::vector<double> demand;
    for (std::size_t m = 0; m < msgs.size(); ++m)
        if (msgs[m].demand > 0.0)
        {
            idx.push_back(static_cast<int>(m));
            demand.push_back(msgs[m].demand);
        }
    if (idx.empty())
        throw std::invalid_argument("solve_inner_dual: no message carries demand");
    auto links = dc_links(inst, msgs, ch, lin);
    auto acc = [&](int j, int n) -> const DcLink & { return links[idx[j]][n]; };

    AssignmentWarmStart local;
    if (warm)
    {
        // warm start is indexed by message; compress to demanded ones
        if (warm->prices.size() == msgs.size())
            for (int m : idx)
                local.prices.push_back(warm->prices[m]);
        if (!warm->owner.empty())
        {
            local.owner.resize(warm->owner.size());
            for (std::size_t n = 0; n < warm->owner.size(); ++n)
            {
                auto p = std::find(idx.begin(), idx.end(), warm->owner[n]);
                local.owner[n] = p == idx.end() ? -1 : static_cast<int>(p - idx.begin());
            }
        }
    }
    auto r = solve_assignment(acc, demand, inst.sys.N, opt, warm ? &local : nullptr);

    DcStepResult out;
    out.assignment = r;
    auto &nx = out.next;
    nx.W.assign(msgs.size(), std::vector<CVector>(inst.sys.N, CVector::Zero(inst.sys.M)));
    nx.mu.assign(msgs.size(), std::vector<double>(inst.sys.N, 0.0));
    nx.c.assign(msgs.size(), std::vector<double>(inst.sys.N, 0.0));
    out.duals.gamma.assign(msgs.size(), 0.0);
    out.duals.lambda.assign(msgs.size(), std::vector<Eigen::VectorXd>(inst.sys.N));
    for (std::size_t j = 0; j < idx.size(); ++j)
    {
        int m = idx[j];
        out.duals.gamma[m] = r.price[j];
        for (int n = 0; n < inst.sys.N; ++n)
        {
            const auto &lk = links[m][n];
            double g = r.owner[n] == static_cast<int>(j) ? lk.target(r.price[j]) : 0.0;
            nx.W[m][n] = lk.beam(g);
            // idle beams shrink geometrically and can drift orthogonal to a member; keep them usable
            // as linearization points (the change is far below the objective tolerance)
            CVector &w = nx.W[m][n];
            if (w.norm() < kDcBeamFloor)
                w *= kDcBeamFloor / w.norm();
            for (int k : msgs[m].group)
            {
                const CVector &h = ch.at(n, k);
                if (std::abs(h.dot(w)) < 1e-8 * h.norm() * w.norm())
                    w += (1e-8 * w.norm() / h.norm()) * h;
            }
            out.duals.lambda[m][n] = lk.multipliers(g);
            if (r.owner[n] == static_cast<int>(j))
            {
                nx.mu[m][n] = 1.0;
                nx.c[m][n] = r.link_rate[n];
            }
        }
    }
    // the owner index in the assignment refers to demanded messages; store it by message
    for (auto &o : out.assignment.owner)
        o = idx[o];
    std::vector<double> full(msgs.size(), 0.0);
    for (std::size_t j = 0; j < idx.size(); ++j)
        full[idx[j]] = r.price[j];
    out.assignment.price = full;
    nx.objective = r.objective;
    return out;
}

// One majorize-minimize step; the previous assignment is always a candidate so the objective cannot rise.
inline DcStepResult dc_step(const Instance &inst, const std::vector<Message> &msgs, const ChannelRealization &ch, const DcIterate &prev,
                            const AssignmentOptions &opt = {}, const AssignmentWarmStart *warm = nullptr)
{
    return solve_inner_dual(inst, msgs, ch, prev, opt, warm);
}

struct DcResult
{
    AllocationSolution solution;
    DcIterate final_iterate;
    DcTrace trace;
    double dc_objective = 0.0;        // owners only, beams straight from the DC iterate
    double resolved_objective = 0.0;  // after re-allocating on the DC beam directions
};

// Beams along the DC directions, scaled so the weakest group member is at unit SNR.
inline std::vector<std::vector<BeamSolution>> beams_from_iterate(const Instance &inst, const std::vector<Message> &msgs, const ChannelRealization &ch,
                                                                 const DcIterate &it)
{
    std::vector<std::vector<BeamSolution>> beams(msgs.size());
    for (std::size_t m = 0; m < msgs.size(); ++m)
    {
        if (msgs[m].demand <= 0.0)
            continue;
        for (int n = 0; n < inst.sys.N; ++n)
        {
            auto bi = beam_instance(inst, msgs[m].group, ch, n);
            BeamSolution b;
            b.method = BeamMethod::sdr_rank1;
            b.v = scale_to_unit_snr(bi, it.W[m][n] / it.W[m][n].norm());
            b.Q = b.v.squaredNorm();
            b.relaxed_value = single_user_bound(bi);
            beams[m].push_back(b);
        }
    }
    return beams;
}

inline DcResult solve_general(const Instance &inst, const std::vector<Message> &msgs, const ChannelRealization &ch, const DcOptions &opt = {})
{
    DcResult res;
    AssignmentWarmStart warm;
    DcIterate cur = opt.start == DcStart::uniform ? initial_point(inst, msgs, ch) : allocated_start(inst, msgs, ch, &warm.owner);
    res.trace.objective.push_back(cur.objective);
    const bool have_owner = !warm.owner.empty();
    int calm = 0;
    AssignmentResult last;
    for (int t = 0; t < opt.max_outer; ++t)
    {
        auto step = dc_step(inst, msgs, ch, cur, opt.inner, t == 0 && !have_owner ? nullptr : &warm);
        double prev = cur.objective;
        cur = std::move(step.next);
        last = step.assignment;
        warm.prices = last.price;
        warm.owner = last.owner;
        res.trace.objective.push_back(cur.objective);
        res.trace.outer_iterations = t + 1;
        res.trace.inner_converged = last.converged;
        res.trace.ties = last.ties;
        double change = std::abs(prev - cur.objective) / std::max(cur.objective, 1e-300);
        calm = change < opt.rel_tol ? calm + 1 : 0;
        if (calm >= opt.patience)
        {
            res.trace.converged = true;
            break;
        }
    }
    res.final_iterate = cur;

    // binary extraction: eta = ||W||^2 and w = W / ||W|| on the owner
    const int N = inst.sys.N;
    AllocationSolution direct;
    direct.owner = last.owner;
    direct.eta.resize(N);
    direct.c.resize(N);
    direct.w.resize(N);
    direct.Q.resize(N);
    double total = 0.0;
    for (int n = 0; n < N; ++n)
    {
        int m = last.owner[n];
        const CVector &W = cur.W[m][n];
        direct.eta[n] = W.squaredNorm();
        direct.w[n] = W / W.norm();
        direct.c[n] = cur.c[m][n];
        auto bi = beam_instance(inst, msgs[m].group, ch, n);
        direct.Q[n] = 1.0 / min_snr(bi, direct.w[n]);
        total += direct.eta[n];
    }
    direct.objective = total / inst.sys.M;
    direct.converged = last.converged;
    direct.ties = last.ties;
    direct.max_rate_residual = last.max_rate_residual;
    res.dc_objective = direct.objective;

    auto beams = beams_from_iterate(inst, msgs, ch, cur);
    AssignmentOptions aopt;
    auto resolved = solve_with_beams(inst, msgs, beams, aopt);
    res.resolved_objective = resolved.objective;
    res.solution = resolved.objective < direct.objective ? resolved : direct;
    return res;
}

enum class InnerSolver
{
    optimal_small_groups, // SDR beams plus optimal allocation; falls back to DC for groups above three
    asymptotic,           // large-array closed-form beams plus optimal allocation
    dc_general
};

// Per-realization solve of the joint beam/subcarrier/power/rate problem for a message set.
inline AllocationSolution solve_realization(const Instance &inst, const std::vector<Message> &msgs, const ChannelRealization &ch, InnerSolver solver,
                                            BeamCache *cache = nullptr)
{
    if (solver == InnerSolver::optimal_small_groups)
    {
        bool small = true;
        for (const auto &m : msgs)
            small = small && (m.demand <= 0.0 || m.group.size() <= 3);
        if (!small)
            solver = InnerSolver::dc_general;
    }
    switch (solver)
    {
    case InnerSolver::optimal_small_groups:
        return solve_with_beams(inst, msgs, compute_beams(inst, msgs, ch, BeamChoice::sdr, cache));
    case InnerSolver::asymptotic:
        return solve_with_beams(inst, msgs, compute_beams(inst, msgs, ch, BeamChoice::asymptotic, cache));
    case InnerSolver::dc_general:
        break;
    }
    return solve_general(inst, msgs, ch).solution;
}

} // namespace vrcast
