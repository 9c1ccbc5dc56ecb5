#include "stokesdd/solver.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "stokesdd/parallel.hpp"

namespace stokesdd {

std::vector<double> GOperator::apply(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != dim())
        throw std::invalid_argument("apply_G: vector length mismatch");
    const auto rhs = ts_->apply_Bc_transpose(x);
    const auto z = mono_ ? mono_->apply_inverse(rhs) : ts_->apply_inverse(rhs);
    return ts_->apply_Bc(z);
}

std::vector<double> GOperator::rhs(std::span<const double> tilde_load) const {
    const auto z = mono_ ? mono_->apply_inverse(tilde_load)
                         : ts_->apply_inverse(tilde_load);
    return ts_->apply_Bc(z);
}

std::vector<double> GOperator::null_vector() const {
    if (ts_->atilde_singular()) return {};
    const auto v = ts_->dual_flux_vector();
    std::vector<double> n(dim(), 0.0);
    for (int i = 0; i < ts_->n_pgamma; ++i) n[i] = 1.0;
    for (int r = 0; r < ts_->n_lambda; ++r) {
        const auto& pr = ts_->jumps.pairs[r];
        n[ts_->n_pgamma + r] = -(ts_->jumps.delta[pr.first] * v[pr.first] -
                                 ts_->jumps.delta[pr.second] * v[pr.second]);
    }
    return n;
}

double GOperator::range_defect(std::span<const double> y) const {
    const auto n = null_vector();
    if (n.empty()) return 0.0;
    const double ny = norm2(y), nn = norm2(n);
    if (ny == 0.0 || nn == 0.0) return 0.0;
    return std::abs(dot(y, n)) / (ny * nn);
}

LumpedPreconditioner::LumpedPreconditioner(const TildeSystem& ts) : ts_(&ts) {
    a_dd_.reserve(ts.subs.size());
    for (const auto& blk : ts.subs)
        a_dd_.push_back(blk.Ahat.submatrix(blk.dual_lv, blk.dual_lv));
}

std::vector<double> LumpedPreconditioner::apply(std::span<const double> x) const {
    const auto& ts = *ts_;
    std::vector<double> out(ts.x_dim(), 0.0);
    const double inv_h2 = 1.0 / (ts.h * ts.h);
    for (int i = 0; i < ts.n_pgamma; ++i) out[i] = inv_h2 * x[i];

    std::vector<double> w(ts.jumps.n_dual_total, 0.0);
    for (int r = 0; r < ts.n_lambda; ++r) {
        const auto& pr = ts.jumps.pairs[r];
        w[pr.first] += ts.jumps.delta[pr.first] * x[ts.n_pgamma + r];
        w[pr.second] -= ts.jumps.delta[pr.second] * x[ts.n_pgamma + r];
    }
    std::vector<double> y(ts.jumps.n_dual_total, 0.0);
    parallel_for(static_cast<int>(ts.subs.size()), [&](int s) {
        const int off = ts.jumps.sub_offset[s];
        const int nd = static_cast<int>(ts.jumps.sub_duals[s].size());
        if (nd == 0) return;
        a_dd_[s].multiply(std::span<const double>(w.data() + off, nd),
                          std::span<double>(y.data() + off, nd));
    });
    for (int r = 0; r < ts.n_lambda; ++r) {
        const auto& pr = ts.jumps.pairs[r];
        out[ts.n_pgamma + r] = ts.jumps.delta[pr.first] * y[pr.first] -
                               ts.jumps.delta[pr.second] * y[pr.second];
    }
    return out;
}

DirichletPreconditioner::DirichletPreconditioner(const TildeSystem& ts, int workers)
    : ts_(&ts) {
    blocks_.resize(ts.subs.size());
    parallel_for(static_cast<int>(ts.subs.size()), [&](int s) {
        const auto& blk = ts.subs[s];
        auto& b = blocks_[s];
        b.Avv_II = blk.Ahat.submatrix(blk.uI_lv, blk.uI_lv);
        b.A_ID = blk.Ahat.submatrix(blk.uI_lv, blk.dual_lv);
        b.A_DD = blk.Ahat.submatrix(blk.dual_lv, blk.dual_lv);
        b.AII_f = Factorization::compute(b.Avv_II);
    }, workers);
}

std::vector<double> DirichletPreconditioner::apply(std::span<const double> x) const {
    const auto& ts = *ts_;
    std::vector<double> out(ts.x_dim(), 0.0);
    const double inv_h2 = 1.0 / (ts.h * ts.h);
    for (int i = 0; i < ts.n_pgamma; ++i) out[i] = inv_h2 * x[i];

    std::vector<double> w(ts.jumps.n_dual_total, 0.0);
    for (int r = 0; r < ts.n_lambda; ++r) {
        const auto& pr = ts.jumps.pairs[r];
        w[pr.first] += ts.jumps.delta[pr.first] * x[ts.n_pgamma + r];
        w[pr.second] -= ts.jumps.delta[pr.second] * x[ts.n_pgamma + r];
    }
    std::vector<double> y(ts.jumps.n_dual_total, 0.0);
    parallel_for(static_cast<int>(ts.subs.size()), [&](int s) {
        const int off = ts.jumps.sub_offset[s];
        const int nd = static_cast<int>(ts.jumps.sub_duals[s].size());
        if (nd == 0) return;
        const auto& b = blocks_[s];
        std::span<const double> wd(w.data() + off, nd);
        // Harmonic extension: interior solve with the boundary data, then the
        // Schur product H w = A_DI w_I + A_DD w.
        std::vector<double> rhs = b.A_ID.multiply(wd);
        for (double& v : rhs) v = -v;
        const auto wi = b.AII_f.solve(rhs);
        std::vector<double> hd = b.A_ID.multiply_transpose(wi);
        std::vector<double> add = b.A_DD.multiply(wd);
        for (int d = 0; d < nd; ++d) y[off + d] = hd[d] + add[d];
    });
    for (int r = 0; r < ts.n_lambda; ++r) {
        const auto& pr = ts.jumps.pairs[r];
        out[ts.n_pgamma + r] = ts.jumps.delta[pr.first] * y[pr.first] -
                               ts.jumps.delta[pr.second] * y[pr.second];
    }
    return out;
}

ApplyFn identity_preconditioner() {
    return [](std::span<const double> x) {
        return std::vector<double>(x.begin(), x.end());
    };
}

PcgReport pcg(const ApplyFn& apply_a, const ApplyFn& apply_minv,
              std::span<const double> b, double rtol, int maxit) {
    const auto t0 = std::chrono::steady_clock::now();
    const int n = static_cast<int>(b.size());
    PcgReport rep;
    rep.solution.assign(n, 0.0);
    rep.rel_residual.push_back(1.0);
    const double bnorm = norm2(b);
    if (bnorm == 0.0) {
        rep.converged = true;
        return rep;
    }

    std::vector<double> r(b.begin(), b.end());
    std::vector<double> z = apply_minv(r);
    double rz = dot(r, z);
    if (rz <= 0.0) throw std::runtime_error("PCG breakdown: nonpositive <z,r> at start");
    const double pr0 = std::sqrt(rz);
    rep.rel_residual_precond.push_back(1.0);
    std::vector<double> p = z;

    std::vector<double> alphas, betas;
    for (int k = 0; k < maxit; ++k) {
        const std::vector<double> q = apply_a(p);
        const double pq = dot(p, q);
        if (pq <= 0.0)
            throw std::runtime_error("PCG breakdown: nonpositive <p,Gp> at iteration " +
                                     std::to_string(k));
        const double alpha = rz / pq;
        alphas.push_back(alpha);
        axpy(alpha, p, rep.solution);
        axpy(-alpha, q, r);
        rep.iterations = k + 1;
        const double rel = norm2(r) / bnorm;
        rep.rel_residual.push_back(rel);

        z = apply_minv(r);
        const double rz_new = dot(r, z);
        if (rel <= rtol) {
            rep.converged = true;
            rep.rel_residual_precond.push_back(
                std::sqrt(std::max(rz_new, 0.0)) / pr0);
            break;
        }
        if (rz_new <= 0.0)
            throw std::runtime_error("PCG breakdown: nonpositive <z,r> at iteration " +
                                     std::to_string(k));
        rep.rel_residual_precond.push_back(std::sqrt(rz_new) / pr0);
        const double beta = rz_new / rz;
        betas.push_back(beta);
        rz = rz_new;
        for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }

    // Lanczos tridiagonal from the PCG coefficients.
    const int it = rep.iterations;
    if (it > 0) {
        rep.lanczos.diag.resize(it);
        rep.lanczos.offdiag.resize(it - 1);
        for (int k = 0; k < it; ++k) {
            rep.lanczos.diag[k] = 1.0 / alphas[k];
            if (k > 0) rep.lanczos.diag[k] += betas[k - 1] / alphas[k - 1];
            if (k + 1 < it)
                rep.lanczos.offdiag[k] = std::sqrt(betas[k]) / alphas[k];
        }
        const auto eigs = tridiag_eig(rep.lanczos);
        rep.lambda_min_est = eigs.front();
        rep.lambda_max_est = eigs.back();
    }
    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

SolutionFields back_substitute(const TildeSystem& ts, std::span<const double> y,
                               std::span<const double> tilde_load,
                               const MonolithicTilde* mono) {
    std::vector<double> rhs(tilde_load.begin(), tilde_load.end());
    const auto bty = ts.apply_Bc_transpose(y);
    axpy(-1.0, bty, rhs);
    const auto x = mono ? mono->apply_inverse(rhs) : ts.apply_inverse(rhs);

    const auto& mesh = *ts.mesh;
    SolutionFields out;
    out.u_nodal.assign(2 * mesh.n_vnodes, 0.0);
    out.p.assign(mesh.n_pdofs, 0.0);

    double jump2 = 0.0, dual2 = 0.0;
    for (const auto& [lo, hi] : ts.lambda_slots) {
        const double d = x[lo] - x[hi];
        jump2 += d * d;
    }

    const bool edgemode = ts.primal == PrimalChoice::CornerPlusEdgeAverage;
    const int n_corners = static_cast<int>(ts.corner_nodes.size());

    for (int k = 0; k < n_corners; ++k)
        for (int c = 0; c < 2; ++c)
            out.u_nodal[2 * ts.corner_nodes[k] + c] = x[ts.pi_offset + 2 * k + c];

    for (size_t s = 0; s < ts.subs.size(); ++s) {
        const auto& blk = ts.subs[s];
        for (int i = 0; i < blk.n_uI(); ++i) {
            const int lv = blk.uI_lv[i];
            out.u_nodal[2 * blk.vnodes[lv / 2] + lv % 2] = x[blk.r_offset + i];
        }
        for (int jp = 0; jp < blk.n_p(); ++jp)
            out.p[blk.pdofs[blk.pr_lp[jp]]] = x[blk.r_offset + blk.n_uI() + jp];

        const auto& refs = ts.jumps.sub_duals[s];
        const int dual_base = blk.r_offset + blk.n_uI() + blk.n_p();
        for (size_t d = 0; d < refs.size(); ++d) dual2 += x[dual_base + d] * x[dual_base + d];

        if (!edgemode) {
            for (size_t d = 0; d < refs.size(); ++d)
                out.u_nodal[2 * refs[d].node + refs[d].comp] += 0.5 * x[dual_base + d];
        } else {
            // Tangential components stay nodal; normal components are
            // reconstructed per edge from (average, zero-average) coordinates.
            std::vector<std::vector<double>> z_by_edge(ts.edges.size());
            for (size_t d = 0; d < refs.size(); ++d) {
                const auto& ref = refs[d];
                if (ref.comp != ts.edges[ref.edge].normal_comp) {
                    out.u_nodal[2 * ref.node + ref.comp] += 0.5 * x[dual_base + d];
                } else {
                    auto& z = z_by_edge[ref.edge];
                    if (z.empty()) z.assign(ts.cob.per_edge[ref.edge].n(), 0.0);
                    z[ref.kpos] = x[dual_base + d];
                }
            }
            for (int e : ts.sub_edges[s]) {
                const auto& tr = ts.cob.per_edge[e];
                auto& z = z_by_edge[e];
                if (z.empty()) z.assign(tr.n(), 0.0);
                std::vector<double> abz(tr.n());
                abz[0] = x[ts.pi_offset + 2 * n_corners + e];
                for (int j = 1; j < tr.n(); ++j) abz[j] = z[j];
                std::vector<double> w(tr.n());
                tr.to_nodal(abz, w);
                const auto& edge = ts.edges[e];
                for (int k = 0; k < tr.n(); ++k)
                    out.u_nodal[2 * edge.nodes[k] + edge.normal_comp] += 0.5 * w[k];
            }
        }
    }

    for (int i = 0; i < ts.n_pgamma; ++i) out.p[ts.p_gamma[i]] = y[i];
    const double mean = pressure_integral(mesh, out.p);
    for (double& v : out.p) v -= mean;

    out.dual_jump_rel = dual2 > 0.0 ? std::sqrt(jump2 / dual2) : 0.0;
    return out;
}

std::vector<double> dense_from_apply(const ApplyFn& fn, int dim) {
    std::vector<double> m(static_cast<size_t>(dim) * dim, 0.0);
    std::vector<double> e(dim, 0.0);
    for (int j = 0; j < dim; ++j) {
        e[j] = 1.0;
        const auto col = fn(e);
        for (int i = 0; i < dim; ++i) m[static_cast<size_t>(i) * dim + j] = col[i];
        e[j] = 0.0;
    }
    return m;
}

std::vector<double> spectrum_oracle(const GOperator& g, const ApplyFn& apply_minv) {
    const int n = g.dim();
    if (n > 2000)
        throw std::invalid_argument("spectrum oracle limited to dimension 2000");
    const auto gd = dense_from_apply(g.as_fn(), n);
    const auto md = dense_from_apply(apply_minv, n);

    Eigen::MatrixXd G(n, n), Minv(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            G(i, j) = 0.5 * (gd[static_cast<size_t>(i) * n + j] +
                             gd[static_cast<size_t>(j) * n + i]);
            Minv(i, j) = 0.5 * (md[static_cast<size_t>(i) * n + j] +
                                md[static_cast<size_t>(j) * n + i]);
        }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_m(Minv);
    if (es_m.info() != Eigen::Success) throw std::runtime_error("eigensolver failed");
    const Eigen::VectorXd d = es_m.eigenvalues();
    if (d.minCoeff() <= 0.0)
        throw std::runtime_error("preconditioner is not positive definite");
    const Eigen::MatrixXd q = es_m.eigenvectors();
    const Eigen::MatrixXd minv_half =
        q * d.cwiseSqrt().asDiagonal() * q.transpose();
    const Eigen::MatrixXd m_half =
        q * d.cwiseSqrt().cwiseInverse().asDiagonal() * q.transpose();
    Eigen::MatrixXd S = minv_half * G * minv_half;
    S = 0.5 * (S + S.transpose());

    const auto nullvec = g.null_vector();
    Eigen::MatrixXd restricted;
    if (!nullvec.empty()) {
        Eigen::VectorXd z =
            m_half * Eigen::Map<const Eigen::VectorXd>(nullvec.data(), n);
        z.normalize();
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(z);
        const Eigen::MatrixXd full = qr.householderQ();
        const Eigen::MatrixXd u = full.rightCols(n - 1);
        restricted = u.transpose() * S * u;
        restricted = 0.5 * (restricted + restricted.transpose());
    } else {
        restricted = S;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(restricted);
    if (es.info() != Eigen::Success) throw std::runtime_error("eigensolver failed");
    return std::vector<double>(es.eigenvalues().data(),
                               es.eigenvalues().data() + es.eigenvalues().size());
}

}  // namespace stokesdd
