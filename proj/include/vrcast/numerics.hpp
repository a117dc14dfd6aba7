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

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <vector>

namespace vrcast
{
using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

// Dense complex matrix that callers keep Hermitian. Functions taking one
// symmetrize their input before use.
using HermitianMatrix = Eigen::MatrixXcd;

inline HermitianMatrix hermitian_part(const CMatrix &a)
{
    return (a + a.adjoint()) * 0.5;
}

// Re tr(A B) for Hermitian A, B.
inline double trace_inner(const CMatrix &a, const CMatrix &b)
{
    return (a.array() * b.transpose().array()).real().sum();
}

inline bool is_hermitian(const CMatrix &a, double tol = 1e-12)
{
    if (a.rows() != a.cols())
        return false;
    double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    return (a - a.adjoint()).cwiseAbs().maxCoeff() <= tol * scale;
}

struct EigenDecomposition
{
    Eigen::VectorXd values; // ascending
    CMatrix vectors;        // orthonormal columns
};

inline EigenDecomposition eig_hermitian(const HermitianMatrix &a)
{
    if (a.rows() != a.cols() || a.rows() == 0)
        throw std::invalid_argument("eig_hermitian: matrix must be square and nonempty");
    if (!a.allFinite())
        throw std::invalid_argument("eig_hermitian: non-finite entry");
    Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_part(a));
    if (es.info() != Eigen::Success)
        throw std::runtime_error("eig_hermitian: eigensolver did not converge");
    return {es.eigenvalues(), es.eigenvectors()};
}

// Number of eigenvalues above rel_tol * largest eigenvalue.
inline int numerical_rank(const HermitianMatrix &a, double rel_tol = 1e-7)
{
    auto e = eig_hermitian(a);
    double top = e.values.maxCoeff();
    if (top <= 0.0)
        return 0;
    int r = 0;
    for (Eigen::Index i = 0; i < e.values.size(); ++i)
        if (e.values[i] > rel_tol * top)
            ++r;
    return r;
}

// Clip tiny negative eigenvalues (in (-clip, 0)) to zero.
inline HermitianMatrix clip_psd(const HermitianMatrix &a, double clip = 1e-10)
{
    auto e = eig_hermitian(a);
    double scale = std::max(1.0, e.values.cwiseAbs().maxCoeff());
    if (e.values.minCoeff() >= 0.0 || e.values.minCoeff() <= -clip * scale)
        return hermitian_part(a);
    Eigen::VectorXd v = e.values.cwiseMax(0.0);
    return hermitian_part(e.vectors * v.cast<cplx>().asDiagonal() * e.vectors.adjoint());
}

enum class Sense
{
    geq,
    eq
};

struct SdpConstraint
{
    HermitianMatrix a;
    double rhs = 0.0;
    Sense sense = Sense::geq;
};

// min tr(C X) s.t. tr(A_j X) (>= | =) b_j, X PSD.
struct SdpProblem
{
    HermitianMatrix objective;
    std::vector<SdpConstraint> constraints;
    Eigen::Index dim() const { return objective.rows(); }
};

enum class SdpStatus
{
    optimal,
    infeasible,
    max_iter
};

struct SdpSolution
{
    HermitianMatrix x;
    double objective_value = 0.0;
    double dual_objective = 0.0;
    std::vector<double> dual_values;
    SdpStatus status = SdpStatus::max_iter;
    int iterations = 0;
    double primal_residual = 0.0; // max_j violation of constraint j, original units
    double gap = 0.0;
    // (primal, dual) objective per iteration, original units
    std::vector<std::pair<double, double>> history;
};

struct SdpOptions
{
    double tol = 1e-8;
    int max_iter = 100;
    double dual_cap = 1e12;
};

namespace detail
{
// Largest a in (0, inf] with X + a dX PSD, X PD.
inline double max_psd_step(const CMatrix &x, const CMatrix &dx)
{
    Eigen::LLT<CMatrix> llt(x);
    CMatrix l_inv_dx = llt.matrixL().solve(dx);
    CMatrix m = llt.matrixL().solve(l_inv_dx.adjoint()).adjoint();
    Eigen::SelfAdjointEigenSolver<CMatrix> es(hermitian_part(m), Eigen::EigenvaluesOnly);
    double lmin = es.eigenvalues().minCoeff();
    if (lmin >= 0.0)
        return std::numeric_limits<double>::infinity();
    return -1.0 / lmin;
}
} // namespace detail

// Infeasible primal-dual path following (HKM direction, Mehrotra predictor-corrector).
// Inequality rows carry a scalar slack s_j with multiplier y_j >= 0.
inline SdpSolution solve_sdp(const SdpProblem &p, const SdpOptions &opt)
{
    const Eigen::Index n = p.dim();
    const std::size_t m = p.constraints.size();
    if (n < 1 || p.objective.cols() != n)
        throw std::invalid_argument("solve_sdp: bad objective dimension");
    if (m == 0)
        throw std::invalid_argument("solve_sdp: at least one constraint required");
    for (const auto &c : p.constraints)
    {
        if (c.a.rows() != n || c.a.cols() != n)
            throw std::invalid_argument("solve_sdp: constraint dimension mismatch");
        if (!std::isfinite(c.rhs) || !c.a.allFinite())
            throw std::invalid_argument("solve_sdp: non-finite constraint data");
    }

    // Row scaling r_j, variable scaling kappa, objective scaling cn.
    std::vector<double> r(m);
    std::vector<CMatrix> a(m);
    Eigen::VectorXd b(m);
    std::vector<bool> ineq(m);
    double amax = 0.0;
    for (std::size_t j = 0; j < m; ++j)
    {
        const auto &c = p.constraints[j];
        double fn = c.a.norm();
        r[j] = c.rhs != 0.0 ? std::abs(c.rhs) : (fn > 0.0 ? fn : 1.0);
        a[j] = hermitian_part(c.a) / r[j];
        b[j] = c.rhs / r[j];
        ineq[j] = c.sense == Sense::geq;
        amax = std::max(amax, a[j].norm());
    }
    const double kappa = amax > 0.0 ? 1.0 / amax : 1.0;
    for (auto &aj : a)
        aj *= kappa;
    CMatrix cmat = hermitian_part(p.objective);
    const double cn = cmat.norm() > 0.0 ? cmat.norm() : 1.0;
    cmat /= cn;

    std::size_t n_ineq = 0;
    for (bool f : ineq)
        n_ineq += f ? 1 : 0;

    double xi_p = std::max(10.0, std::sqrt(double(n)));
    for (std::size_t j = 0; j < m; ++j)
        xi_p = std::max(xi_p, double(n) * (1.0 + std::abs(b[j])) / (1.0 + a[j].norm()));
    double xi_d = std::max({10.0, std::sqrt(double(n)), cmat.norm()});

    CMatrix x = CMatrix::Identity(n, n) * xi_p;
    CMatrix z = CMatrix::Identity(n, n) * xi_d;
    Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(m);
    for (std::size_t j = 0; j < m; ++j)
        if (ineq[j])
        {
            y[j] = xi_d;
            s[j] = xi_p;
        }

    const double nu = double(n) + double(n_ineq);
    const double tol = opt.tol;
    SdpSolution out;
    out.status = SdpStatus::max_iter;

    auto finish = [&](SdpStatus st, int it) {
        out.status = st;
        out.iterations = it;
        out.x = hermitian_part(x) * kappa;
        out.x = clip_psd(out.x);
        out.objective_value = trace_inner(p.objective, out.x);
        out.dual_values.assign(m, 0.0);
        double dobj = 0.0;
        for (std::size_t j = 0; j < m; ++j)
        {
            out.dual_values[j] = y[j] * kappa * cn / r[j];
        }
        for (std::size_t j = 0; j < m; ++j)
            dobj += out.dual_values[j] * p.constraints[j].rhs;
        out.dual_objective = dobj;
        double viol = 0.0;
        for (std::size_t j = 0; j < m; ++j)
        {
            double lhs = trace_inner(p.constraints[j].a, out.x);
            double v = p.constraints[j].rhs - lhs;
            if (!ineq[j])
                v = std::abs(v);
            viol = std::max(viol, v);
        }
        out.primal_residual = viol;
        out.gap = std::abs(out.objective_value - out.dual_objective);
        return out;
    };

    for (int it = 0; it < opt.max_iter; ++it)
    {
        // residuals
        Eigen::VectorXd rp(m);
        for (std::size_t j = 0; j < m; ++j)
            rp[j] = b[j] - trace_inner(a[j], x) + (ineq[j] ? s[j] : 0.0);
        CMatrix rd = cmat - z;
        for (std::size_t j = 0; j < m; ++j)
            rd -= y[j] * a[j];
        double pobj = trace_inner(cmat, x);
        double dobj = b.dot(y);
        out.history.emplace_back(pobj * cn * kappa, dobj * cn * kappa);
        double mu = (trace_inner(x, z) + s.dot(y)) / nu;

        double pinf = rp.cwiseAbs().maxCoeff();
        double dinf = rd.norm();
        if (pinf <= tol && dinf <= tol * (1.0 + cmat.norm()) && std::abs(pobj - dobj) <= tol * (1.0 + std::abs(pobj)))
            return finish(SdpStatus::optimal, it);
        if (dobj > opt.dual_cap || x.real().trace() > opt.dual_cap)
            return finish(SdpStatus::infeasible, it);

        Eigen::LLT<CMatrix> zllt(z);
        CMatrix zinv = zllt.solve(CMatrix::Identity(n, n));
        zinv = hermitian_part(zinv);

        std::vector<CMatrix> t(m);
        for (std::size_t i = 0; i < m; ++i)
            t[i] = x * a[i] * zinv;
        Eigen::MatrixXd h(m, m);
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t i = 0; i <= j; ++i)
            {
                double v = trace_inner(a[j], t[i]);
                h(j, i) = v;
                h(i, j) = v;
            }
        for (std::size_t j = 0; j < m; ++j)
            if (ineq[j])
                h(j, j) += s[j] / y[j];
        Eigen::LDLT<Eigen::MatrixXd> hf(h);

        CMatrix xrdz = x * rd * zinv;

        auto direction = [&](double sigma_mu, const CMatrix *corr, const Eigen::VectorXd *corr_s, CMatrix &dx, Eigen::VectorXd &dy, CMatrix &dz,
                             Eigen::VectorXd &ds) {
            CMatrix k0 = sigma_mu * zinv - x - xrdz;
            if (corr)
                k0 -= (*corr) * zinv;
            Eigen::VectorXd rhs(m);
            for (std::size_t j = 0; j < m; ++j)
            {
                rhs[j] = rp[j] - trace_inner(a[j], k0);
                if (ineq[j])
                {
                    double cj = corr_s ? (*corr_s)[j] : 0.0;
                    rhs[j] += (sigma_mu - s[j] * y[j] - cj) / y[j];
                }
            }
            dy = hf.solve(rhs);
            dz = rd;
            CMatrix acc = k0;
            for (std::size_t i = 0; i < m; ++i)
            {
                dz -= dy[i] * a[i];
                acc += dy[i] * t[i];
            }
            dx = hermitian_part(acc);
            ds = Eigen::VectorXd::Zero(m);
            for (std::size_t j = 0; j < m; ++j)
                if (ineq[j])
                {
                    double cj = corr_s ? (*corr_s)[j] : 0.0;
                    ds[j] = (sigma_mu - s[j] * y[j] - cj - s[j] * dy[j]) / y[j];
                }
        };

        auto steps = [&](const CMatrix &dx, const Eigen::VectorXd &dy, const CMatrix &dz, const Eigen::VectorXd &ds) {
            double ap = detail::max_psd_step(x, dx);
            double ad = detail::max_psd_step(z, dz);
            for (std::size_t j = 0; j < m; ++j)
                if (ineq[j])
                {
                    if (ds[j] < 0.0)
                        ap = std::min(ap, -s[j] / ds[j]);
                    if (dy[j] < 0.0)
                        ad = std::min(ad, -y[j] / dy[j]);
                }
            return std::pair<double, double>{ap, ad};
        };

        CMatrix dx, dz;
        Eigen::VectorXd dy, ds;
        direction(0.0, nullptr, nullptr, dx, dy, dz, ds);
        auto [ap_a, ad_a] = steps(dx, dy, dz, ds);
        ap_a = std::min(1.0, ap_a);
        ad_a = std::min(1.0, ad_a);
        double mu_aff = (trace_inner(x + ap_a * dx, z + ad_a * dz) + (s + ap_a * ds).dot(y + ad_a * dy)) / nu;
        double sigma = std::pow(std::max(0.0, mu_aff) / mu, 3.0);
        sigma = std::clamp(sigma, 0.0, 1.0);

        CMatrix corr = dx * dz;
        Eigen::VectorXd corr_s = ds.cwiseProduct(dy);
        direction(sigma * mu, &corr, &corr_s, dx, dy, dz, ds);
        auto [ap, ad] = steps(dx, dy, dz, ds);
        ap = std::min(1.0, 0.98 * ap);
        ad = std::min(1.0, 0.98 * ad);

        x = hermitian_part(x + ap * dx);
        s = s + ap * ds;
        z = hermitian_part(z + ad * dz);
        y = y + ad * dy;
    }
    return finish(SdpStatus::max_iter, opt.max_iter);
}

inline SdpSolution solve_sdp(const SdpProblem &p, double tol = 1e-8)
{
    SdpOptions opt;
    opt.tol = tol;
    return solve_sdp(p, opt);
}

} // namespace vrcast
