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

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace vrcast
{
// Problem data for one (message, subcarrier): every listed user needs unit SNR.
struct BeamInstance
{
    std::vector<CVector> h;
    std::vector<double> beta;
    int M = 1;
    double sigma2 = 1.0;
};

enum class BeamMethod
{
    sdr_rank1,
    asymptotic,
    mrt
};

struct BeamSolution
{
    CVector v;                 // V = v v^H
    double Q = 0.0;            // ||v||^2
    double relaxed_value = 0.0; // SDP optimum for sdr_rank1; single-user lower bound otherwise
    BeamMethod method = BeamMethod::sdr_rank1;
    bool rank_gt_one = false;  // reduction stopped above rank one
    HermitianMatrix relaxed_V; // kept only when rank_gt_one
    int sdp_iterations = 0;
};

struct RankReduction
{
    HermitianMatrix V;
    bool irreducible = false;
    int steps = 0;
};

inline void validate(const BeamInstance &inst)
{
    if (inst.h.empty())
        throw std::invalid_argument("BeamInstance: at least one user");
    if (inst.beta.size() != inst.h.size())
        throw std::invalid_argument("BeamInstance: one beta per channel");
    if (inst.M < 1 || !(inst.sigma2 > 0.0))
        throw std::invalid_argument("BeamInstance: M >= 1 and sigma2 > 0 required");
    for (std::size_t k = 0; k < inst.h.size(); ++k)
    {
        if (inst.h[k].size() != inst.M)
            throw std::invalid_argument("BeamInstance: channel length must equal M");
        if (!(inst.beta[k] > 0.0) || inst.h[k].squaredNorm() == 0.0 || !inst.h[k].allFinite())
            throw std::invalid_argument("BeamInstance: channels must be nonzero and finite, beta > 0");
    }
}

// beta_k h_k h_k^H / (M sigma^2)
inline std::vector<HermitianMatrix> snr_matrices(const BeamInstance &inst)
{
    std::vector<HermitianMatrix> a;
    for (std::size_t k = 0; k < inst.h.size(); ++k)
        a.push_back(inst.h[k] * inst.h[k].adjoint() * (inst.beta[k] / (inst.M * inst.sigma2)));
    return a;
}

inline double snr(const BeamInstance &inst, std::size_t k, const CVector &v)
{
    return inst.beta[k] * std::norm(inst.h[k].dot(v)) / (inst.M * inst.sigma2);
}

inline double min_snr(const BeamInstance &inst, const CVector &v)
{
    double s = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < inst.h.size(); ++k)
        s = std::min(s, snr(inst, k, v));
    return s;
}

// Largest-magnitude entry made real and positive.
inline CVector fix_phase(const CVector &v)
{
    Eigen::Index idx = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (std::abs(v[i]) > best * (1.0 + 1e-12))
        {
            best = std::abs(v[i]);
            idx = i;
        }
    if (best <= 0.0)
        return v;
    return v * (std::conj(v[idx]) / std::abs(v[idx]));
}

// Scale direction w so that the weakest user sits exactly at unit SNR.
inline CVector scale_to_unit_snr(const BeamInstance &inst, const CVector &w)
{
    double s = min_snr(inst, w);
    if (!(s > 0.0))
        throw std::invalid_argument("beam direction is orthogonal to a user channel");
    return fix_phase(w / std::sqrt(s));
}

inline double single_user_bound(const BeamInstance &inst)
{
    double q = 0.0;
    for (std::size_t k = 0; k < inst.h.size(); ++k)
        q = std::max(q, inst.M * inst.sigma2 / (inst.beta[k] * inst.h[k].squaredNorm()));
    return q;
}

inline RankReduction rank_reduce(const HermitianMatrix &v_in, const std::vector<HermitianMatrix> &constraints, double rank_tol = 1e-7)
{
    RankReduction out;
    out.V = hermitian_part(v_in);
    for (int guard = 0; guard < 2 * static_cast<int>(v_in.rows()) + 2; ++guard)
    {
        auto e = eig_hermitian(out.V);
        const Eigen::Index n = e.values.size();
        double top = e.values[n - 1];
        if (top <= 0.0)
            return out;
        std::vector<Eigen::Index> keep;
        for (Eigen::Index i = 0; i < n; ++i)
            if (e.values[i] > rank_tol * top)
                keep.push_back(i);
        const Eigen::Index psi = static_cast<Eigen::Index>(keep.size());
        if (psi <= 1)
            return out;

        CMatrix u(out.V.rows(), psi);
        for (Eigen::Index c = 0; c < psi; ++c)
            u.col(c) = e.vectors.col(keep[c]) * std::sqrt(e.values[keep[c]]);

        // Hermitian psi x psi basis: diagonal units, then (E_ij + E_ji), i(E_ij - E_ji) for i < j.
        std::vector<CMatrix> basis;
        for (Eigen::Index i = 0; i < psi; ++i)
        {
            CMatrix b = CMatrix::Zero(psi, psi);
            b(i, i) = 1.0;
            basis.push_back(b);
        }
        for (Eigen::Index i = 0; i < psi; ++i)
            for (Eigen::Index j = i + 1; j < psi; ++j)
            {
                CMatrix b = CMatrix::Zero(psi, psi);
                b(i, j) = 1.0;
                b(j, i) = 1.0;
                basis.push_back(b);
                CMatrix c = CMatrix::Zero(psi, psi);
                c(i, j) = cplx(0.0, 1.0);
                c(j, i) = cplx(0.0, -1.0);
                basis.push_back(c);
            }

        const Eigen::Index m = static_cast<Eigen::Index>(constraints.size());
        const Eigen::Index d = static_cast<Eigen::Index>(basis.size());
        Eigen::MatrixXd lin = Eigen::MatrixXd::Zero(std::max<Eigen::Index>(m, 1), d);
        for (Eigen::Index k = 0; k < m; ++k)
        {
            CMatrix bk = u.adjoint() * constraints[k] * u;
            double scale = std::max(bk.norm(), 1e-300);
            for (Eigen::Index p = 0; p < d; ++p)
                lin(k, p) = trace_inner(bk, basis[p]) / scale;
        }
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(lin, Eigen::ComputeFullV);
        const auto &sv = svd.singularValues();
        Eigen::Index rank = 0;
        double smax = sv.size() ? sv[0] : 0.0;
        for (Eigen::Index i = 0; i < sv.size(); ++i)
            if (sv[i] > 1e-12 * std::max(1.0, smax) * d)
                ++rank;
        if (rank >= d)
        {
            out.irreducible = true;
            return out;
        }
        Eigen::VectorXd coef = svd.matrixV().col(rank);
        CMatrix delta = CMatrix::Zero(psi, psi);
        for (Eigen::Index p = 0; p < d; ++p)
            delta += coef[p] * basis[p];
        auto de = eig_hermitian(delta);
        Eigen::Index i0 = 0;
        for (Eigen::Index i = 1; i < psi; ++i)
            if (std::abs(de.values[i]) > std::abs(de.values[i0]))
                i0 = i;
        CMatrix step = CMatrix::Identity(psi, psi) - delta / de.values[i0];
        out.V = hermitian_part(u * step * u.adjoint());
        ++out.steps;
    }
    return out;
}

inline BeamSolution single_user_beam(const BeamInstance &inst, BeamMethod method)
{
    BeamSolution s;
    s.method = method;
    const CVector &h = inst.h[0];
    s.Q = inst.M * inst.sigma2 / (inst.beta[0] * h.squaredNorm());
    s.v = fix_phase(h / h.norm() * std::sqrt(s.Q));
    s.relaxed_value = s.Q;
    return s;
}

inline BeamSolution solve_qos_sdr(const BeamInstance &inst)
{
    validate(inst);
    if (inst.h.size() == 1)
        return single_user_beam(inst, BeamMethod::sdr_rank1);

    SdpProblem p;
    p.objective = CMatrix::Identity(inst.M, inst.M);
    auto a = snr_matrices(inst);
    for (const auto &ak : a)
        p.constraints.push_back({ak, 1.0, Sense::geq});
    auto sdp = solve_sdp(p);
    if (sdp.status == SdpStatus::infeasible)
        throw std::runtime_error("solve_qos_sdr: relaxation reported infeasible");

    BeamSolution s;
    s.method = BeamMethod::sdr_rank1;
    // dual objective: a lower bound on the relaxation up to solver tolerance
    s.relaxed_value = std::min(sdp.objective_value, sdp.dual_objective);
    s.sdp_iterations = sdp.iterations;

    auto red = rank_reduce(sdp.x, a);
    auto e = eig_hermitian(red.V);
    const Eigen::Index n = e.values.size();
    int rank = numerical_rank(red.V);
    s.rank_gt_one = rank > 1;
    if (s.rank_gt_one)
        s.relaxed_V = red.V;
    CVector w = e.vectors.col(n - 1);
    s.v = scale_to_unit_snr(inst, w);
    s.Q = s.v.squaredNorm();
    return s;
}

inline BeamSolution asymptotic_beamformer(const BeamInstance &inst)
{
    validate(inst);
    CVector u = CVector::Zero(inst.M);
    for (std::size_t k = 0; k < inst.h.size(); ++k)
        u += inst.h[k] / std::sqrt(inst.beta[k]);
    double un = u.norm();
    if (!(un > 1e-300))
        throw std::invalid_argument("asymptotic_beamformer: weighted channel sum is zero");
    BeamSolution s;
    s.method = BeamMethod::asymptotic;
    s.v = scale_to_unit_snr(inst, u / un);
    s.Q = s.v.squaredNorm();
    s.relaxed_value = single_user_bound(inst);
    return s;
}

enum class MrtMode
{
    per_user,
    group
};

inline BeamSolution mrt_beamformer(const BeamInstance &inst, MrtMode mode)
{
    validate(inst);
    if (mode == MrtMode::per_user && inst.h.size() != 1)
        throw std::invalid_argument("mrt_beamformer: per-user mode needs exactly one user");
    CVector w;
    if (inst.h.size() == 1)
        w = inst.h[0] / inst.h[0].norm();
    else
    {
        CMatrix g = CMatrix::Zero(inst.M, inst.M);
        for (std::size_t k = 0; k < inst.h.size(); ++k)
            g += inst.beta[k] * inst.h[k] * inst.h[k].adjoint();
        auto e = eig_hermitian(g);
        w = e.vectors.col(inst.M - 1);
    }
    BeamSolution s;
    s.method = BeamMethod::mrt;
    s.v = scale_to_unit_snr(inst, w);
    s.Q = s.v.squaredNorm();
    s.relaxed_value = single_user_bound(inst);
    return s;
}

} // namespace vrcast
