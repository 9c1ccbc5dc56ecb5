#include "stokesdd/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "stokesdd/parallel.hpp"

namespace stokesdd {

InterfaceClassification classify_dofs(const StructuredMesh& mesh,
                                      const DofMap& dofmap, PrimalChoice choice) {
    InterfaceClassification cls;
    cls.primal_choice = choice;
    cls.vnode_class.assign(mesh.n_vnodes, DofClass::Interior);
    cls.corner_rank.assign(mesh.n_vnodes, -1);
    cls.node_edge.assign(mesh.n_vnodes, -1);
    cls.node_kpos.assign(mesh.n_vnodes, 0);
    cls.sub_edges.resize(mesh.n_subdomains());

    for (int node = 0; node < mesh.n_vnodes; ++node) {
        switch (dofmap.vnode_cat[node]) {
            case VelCategory::InterfaceCorner:
                cls.vnode_class[node] = DofClass::PrimalCorner;
                cls.corner_rank[node] = static_cast<int>(cls.corner_nodes.size());
                cls.corner_nodes.push_back(node);
                break;
            case VelCategory::InterfaceEdge:
                cls.vnode_class[node] = DofClass::Dual;
                break;
            default:
                break;
        }
    }

    auto add_edge = [&](InterfaceEdge edge) {
        const int id = static_cast<int>(cls.edges.size());
        for (size_t k = 0; k < edge.nodes.size(); ++k) {
            cls.node_edge[edge.nodes[k]] = id;
            cls.node_kpos[edge.nodes[k]] = static_cast<int>(k);
        }
        cls.sub_edges[edge.sub_lo].push_back(id);
        cls.sub_edges[edge.sub_hi].push_back(id);
        cls.edges.push_back(std::move(edge));
    };

    const int m = mesh.m;
    for (int kx = 1; kx < mesh.nsub_x; ++kx)
        for (int sy = 0; sy < mesh.nsub_y; ++sy) {
            InterfaceEdge e;
            e.normal_comp = 0;
            e.sub_lo = mesh.subdomain_of_cell(kx * m - 1, sy * m);
            e.sub_hi = mesh.subdomain_of_cell(kx * m, sy * m);
            for (int j = 1; j < m; ++j)
                e.nodes.push_back(mesh.grid_node(kx * m, sy * m + j));
            add_edge(std::move(e));
        }
    for (int ky = 1; ky < mesh.nsub_y; ++ky)
        for (int sx = 0; sx < mesh.nsub_x; ++sx) {
            InterfaceEdge e;
            e.normal_comp = 1;
            e.sub_lo = mesh.subdomain_of_cell(sx * m, ky * m - 1);
            e.sub_hi = mesh.subdomain_of_cell(sx * m, ky * m);
            for (int i = 1; i < m; ++i)
                e.nodes.push_back(mesh.grid_node(sx * m + i, ky * m));
            add_edge(std::move(e));
        }
    for (auto& list : cls.sub_edges) std::sort(list.begin(), list.end());
    return cls;
}

void EdgeBasisTransform::to_nodal(std::span<const double> abz,
                                  std::span<double> w) const {
    const int nn = n();
    double zc = 0.0;
    for (int j = 1; j < nn; ++j) zc += weights[j] / weight_sum * abz[j];
    w[0] = abz[0] - zc;
    for (int j = 1; j < nn; ++j) w[j] = abz[j] + w[0];
}

void EdgeBasisTransform::from_nodal(std::span<const double> w,
                                    std::span<double> abz) const {
    const int nn = n();
    double a = 0.0;
    for (int k = 0; k < nn; ++k) a += weights[k] * w[k];
    abz[0] = a / weight_sum;
    for (int j = 1; j < nn; ++j) abz[j] = w[j] - w[0];
}

ChangeOfBasis build_edge_average_basis(const StructuredMesh& mesh,
                                       const InterfaceClassification& cls) {
    if (cls.primal_choice != PrimalChoice::CornerPlusEdgeAverage)
        throw std::invalid_argument(
            "edge-average basis requires the corner-plus-edge-average primal choice");
    ChangeOfBasis cob;
    cob.per_edge.resize(cls.edges.size());
    for (size_t e = 0; e < cls.edges.size(); ++e) {
        const auto& edge = cls.edges[e];
        if (edge.nodes.empty())
            throw std::invalid_argument("edge without dual nodes");
        EdgeBasisTransform tr;
        tr.edge = static_cast<int>(e);
        // Trace integral of each P1 hat over the open edge: the 1D hat of
        // half-width h, fully contained in the edge for every interior node.
        const double spacing = edge.normal_comp == 0 ? mesh.hy : mesh.hx;
        tr.weights.assign(edge.nodes.size(), spacing);
        tr.weight_sum = spacing * static_cast<double>(edge.nodes.size());
        cob.per_edge[e] = std::move(tr);
    }
    return cob;
}

namespace {

bool dual_comp_at(const InterfaceClassification& cls, int edge, int kpos, int comp) {
    if (cls.primal_choice == PrimalChoice::CornerOnly) return true;
    if (comp != cls.edges[edge].normal_comp) return true;
    return kpos > 0;  // the first node's normal slot carries the edge average
}

}  // namespace

JumpOperators build_jump_operators(const StructuredMesh& mesh,
                                   const InterfaceClassification& cls) {
    JumpOperators j;
    const int nsub = mesh.n_subdomains();
    j.sub_duals.resize(nsub);
    j.sub_offset.assign(nsub, 0);

    for (int s = 0; s < nsub; ++s) {
        auto& list = j.sub_duals[s];
        for (int e : cls.sub_edges[s]) {
            const auto& edge = cls.edges[e];
            for (size_t k = 0; k < edge.nodes.size(); ++k)
                for (int c = 0; c < 2; ++c)
                    if (dual_comp_at(cls, e, static_cast<int>(k), c))
                        list.push_back({edge.nodes[k], c, e, static_cast<int>(k)});
        }
        std::sort(list.begin(), list.end(), [](const DualDofRef& a, const DualDofRef& b) {
            if (a.node != b.node) return a.node < b.node;
            return a.comp < b.comp;
        });
    }
    int offset = 0;
    for (int s = 0; s < nsub; ++s) {
        j.sub_offset[s] = offset;
        offset += static_cast<int>(j.sub_duals[s].size());
    }
    j.n_dual_total = offset;
    j.delta.assign(j.n_dual_total, 0.5);

    auto find_dual = [&](int s, int node, int comp) {
        const auto& list = j.sub_duals[s];
        auto it = std::lower_bound(list.begin(), list.end(), std::pair<int, int>{node, comp},
                                   [](const DualDofRef& a, const std::pair<int, int>& key) {
                                       if (a.node != key.first) return a.node < key.first;
                                       return a.comp < key.second;
                                   });
        return j.sub_offset[s] + static_cast<int>(it - list.begin());
    };

    std::vector<Triplet> bts, bdts;
    for (size_t e = 0; e < cls.edges.size(); ++e) {
        const auto& edge = cls.edges[e];
        for (size_t k = 0; k < edge.nodes.size(); ++k)
            for (int c = 0; c < 2; ++c) {
                if (!dual_comp_at(cls, static_cast<int>(e), static_cast<int>(k), c))
                    continue;
                const int lo = find_dual(edge.sub_lo, edge.nodes[k], c);
                const int hi = find_dual(edge.sub_hi, edge.nodes[k], c);
                const int row = static_cast<int>(j.pairs.size());
                j.pairs.emplace_back(lo, hi);
                bts.push_back({row, lo, 1.0});
                bts.push_back({row, hi, -1.0});
                bdts.push_back({row, lo, j.delta[lo]});
                bdts.push_back({row, hi, -j.delta[hi]});
            }
    }
    j.n_lambda = static_cast<int>(j.pairs.size());
    j.B_delta = SparseMatrix::from_triplets(bts, j.n_lambda, j.n_dual_total);
    j.B_delta_D = SparseMatrix::from_triplets(bdts, j.n_lambda, j.n_dual_total);
    return j;
}

PressureSplit select_pressure_split(const StructuredMesh& mesh, const DofMap& dofmap,
                                    PGammaMode mode, PrimalChoice primal,
                                    bool use_li05_coarse) {
    if (mode == PGammaMode::FullBoundary && mesh.element != ElementKind::TaylorHood)
        throw std::invalid_argument(
            "pgamma=full requires the continuous-pressure Taylor-Hood element");
    if (mode != PGammaMode::FullBoundary && mesh.element != ElementKind::MacroDP)
        throw std::invalid_argument(
            "pgamma=one and pgamma=empty require the discontinuous-pressure element");
    if (use_li05_coarse && mode != PGammaMode::Empty)
        throw std::invalid_argument("li05 coarse augmentation requires pgamma=empty");
    if (mode == PGammaMode::Empty && primal == PrimalChoice::CornerPlusEdgeAverage &&
        !use_li05_coarse)
        throw std::invalid_argument("empty+edge requires li05 (A_rr is singular otherwise)");

    PressureSplit split;
    split.mode = mode;
    split.use_li05_coarse = use_li05_coarse;
    std::vector<char> in_gamma(mesh.n_pdofs, 0);
    if (mode == PGammaMode::FullBoundary) {
        for (int q = 0; q < mesh.n_pdofs; ++q)
            if (dofmap.pressure_shared(q)) in_gamma[q] = 1;
    } else if (mode == PGammaMode::OnePerSubdomain) {
        // First (lexicographic) pressure patch of each subdomain.
        const int npcx = mesh.ncx / 2;
        for (int sy = 0; sy < mesh.nsub_y; ++sy)
            for (int sx = 0; sx < mesh.nsub_x; ++sx)
                in_gamma[(sy * mesh.m) * npcx + sx * mesh.m / 2] = 1;
    }
    for (int q = 0; q < mesh.n_pdofs; ++q)
        (in_gamma[q] ? split.p_gamma : split.p_interior).push_back(q);
    return split;
}

namespace {

int local_node_index(const std::vector<int>& sorted_nodes, int node) {
    auto it = std::lower_bound(sorted_nodes.begin(), sorted_nodes.end(), node);
    return static_cast<int>(it - sorted_nodes.begin());
}

}  // namespace

std::vector<double> TildeSystem::SubdomainBlock::solve_r(
    std::span<const double> b) const {
    if (!bordered) return Arr_f.solve(b);
    std::vector<double> aug(b.begin(), b.end());
    aug.push_back(0.0);
    auto x = Arr_f.solve(aug);
    x.pop_back();
    return x;
}

TildeSystem build_tilde_system(const StructuredMesh& mesh, const DofMap& /*dofmap*/,
                               std::span<const SubdomainOperators> subops,
                               const InterfaceClassification& cls,
                               const ChangeOfBasis& cob, const JumpOperators& jumps,
                               const PressureSplit& split, int workers) {
    const int nsub = mesh.n_subdomains();
    if (static_cast<int>(subops.size()) != nsub)
        throw std::invalid_argument("need operators for every subdomain");
    const bool edgemode = cls.primal_choice == PrimalChoice::CornerPlusEdgeAverage;
    if (edgemode && cob.per_edge.size() != cls.edges.size())
        throw std::invalid_argument("edge-average mode requires a change of basis");

    TildeSystem ts;
    ts.mesh = &mesh;
    ts.primal = cls.primal_choice;
    ts.pmode = split.mode;
    ts.li05 = split.use_li05_coarse;
    ts.jumps = jumps;
    ts.cob = cob;
    ts.p_gamma = split.p_gamma;
    ts.corner_nodes = cls.corner_nodes;
    ts.edges = cls.edges;
    ts.sub_edges = cls.sub_edges;
    ts.n_pi = cls.n_primal();
    ts.n_pgamma = static_cast<int>(split.p_gamma.size());
    ts.n_lambda = jumps.n_lambda;
    ts.h = mesh.h();
    ts.subs.resize(nsub);

    std::vector<int> pgamma_row(mesh.n_pdofs, -1);
    for (size_t i = 0; i < split.p_gamma.size(); ++i)
        pgamma_row[split.p_gamma[i]] = static_cast<int>(i);

    const int n_corners = cls.n_corners();

    parallel_for(nsub, [&](int s) {
        const auto& ops = subops[s];
        auto& blk = ts.subs[s];
        blk.sub = s;
        blk.vnodes = ops.vnodes;
        blk.pdofs = ops.pdofs;
        const int nlv = static_cast<int>(ops.vdofs.size());

        if (edgemode) {
            std::vector<Triplet> t_ts;
            std::vector<char> replaced(nlv, 0);
            for (int e : cls.sub_edges[s]) {
                const auto& edge = cls.edges[e];
                const auto& tr = cob.per_edge[e];
                const int n = tr.n();
                std::vector<int> slot(n);
                for (int k = 0; k < n; ++k) {
                    slot[k] = 2 * local_node_index(blk.vnodes, edge.nodes[k]) +
                              edge.normal_comp;
                    replaced[slot[k]] = 1;
                }
                for (int k = 0; k < n; ++k) t_ts.push_back({slot[k], slot[0], 1.0});
                for (int jz = 1; jz < n; ++jz) {
                    t_ts.push_back({slot[jz], slot[jz], 1.0});
                    const double g = tr.weights[jz] / tr.weight_sum;
                    for (int k = 0; k < n; ++k) t_ts.push_back({slot[k], slot[jz], -g});
                }
            }
            for (int lv = 0; lv < nlv; ++lv)
                if (!replaced[lv]) t_ts.push_back({lv, lv, 1.0});
            const auto T = SparseMatrix::from_triplets(t_ts, nlv, nlv);
            blk.Ahat = T.transposed().multiply(ops.A.multiply(T));
            blk.Bhat = ops.B.multiply(T);
            blk.fhat = T.multiply_transpose(ops.f);
        } else {
            blk.Ahat = ops.A;
            blk.Bhat = ops.B;
            blk.fhat = ops.f;
        }

        // Classify local velocity dofs.
        std::vector<int> kind(nlv, 0);  // 0 uI, 1 dual, 2 pi
        std::vector<int> pos(nlv, -1);
        for (size_t ln = 0; ln < blk.vnodes.size(); ++ln) {
            const int node = blk.vnodes[ln];
            for (int c = 0; c < 2; ++c) {
                const int lv = static_cast<int>(2 * ln + c);
                if (cls.vnode_class[node] == DofClass::PrimalCorner) {
                    kind[lv] = 2;
                    pos[lv] = static_cast<int>(blk.pi_lv.size());
                    blk.pi_lv.push_back(lv);
                    blk.pi_gids.push_back(2 * cls.corner_rank[node] + c);
                } else if (cls.node_edge[node] >= 0) {
                    const int e = cls.node_edge[node];
                    const int k = cls.node_kpos[node];
                    if (!dual_comp_at(cls, e, k, c)) {
                        kind[lv] = 2;
                        pos[lv] = static_cast<int>(blk.pi_lv.size());
                        blk.pi_lv.push_back(lv);
                        blk.pi_gids.push_back(2 * n_corners + e);
                    } else {
                        kind[lv] = 1;
                        pos[lv] = static_cast<int>(blk.dual_lv.size());
                        blk.dual_lv.push_back(lv);
                    }
                } else {
                    kind[lv] = 0;
                    pos[lv] = static_cast<int>(blk.uI_lv.size());
                    blk.uI_lv.push_back(lv);
                }
            }
        }
        if (blk.dual_lv.size() != jumps.sub_duals[s].size())
            throw std::logic_error("dual enumeration mismatch");

        for (size_t lp = 0; lp < blk.pdofs.size(); ++lp) {
            if (pgamma_row[blk.pdofs[lp]] >= 0) {
                blk.pgamma_lp.push_back(static_cast<int>(lp));
                blk.pgamma_rows.push_back(pgamma_row[blk.pdofs[lp]]);
            } else {
                blk.pr_lp.push_back(static_cast<int>(lp));
            }
        }

        const int n_uI = blk.n_uI(), n_p = blk.n_p(), n_dual = blk.n_dual();
        const int r_dim = blk.r_dim();
        const int npi_loc = static_cast<int>(blk.pi_lv.size());

        // r index of each local velocity dof / pressure dof (-1 if primal).
        std::vector<int> r_of_lv(nlv, -1);
        for (int i = 0; i < n_uI; ++i) r_of_lv[blk.uI_lv[i]] = i;
        for (int d = 0; d < n_dual; ++d) r_of_lv[blk.dual_lv[d]] = n_uI + n_p + d;
        std::vector<int> r_of_lp(blk.pdofs.size(), -1);
        for (int jp = 0; jp < n_p; ++jp) r_of_lp[blk.pr_lp[jp]] = n_uI + jp;
        std::vector<int> pi_of_lv(nlv, -1);
        for (int a = 0; a < npi_loc; ++a) pi_of_lv[blk.pi_lv[a]] = a;

        std::vector<Triplet> arr_ts, arpi_ts, pipi_ts;
        const auto& A = blk.Ahat;
        for (int r = 0; r < A.rows(); ++r)
            for (int k = A.row_offsets()[r]; k < A.row_offsets()[r + 1]; ++k) {
                const int c = A.col_indices()[k];
                const double v = A.values()[k];
                if (r_of_lv[r] >= 0 && r_of_lv[c] >= 0)
                    arr_ts.push_back({r_of_lv[r], r_of_lv[c], v});
                else if (r_of_lv[r] >= 0 && pi_of_lv[c] >= 0)
                    arpi_ts.push_back({r_of_lv[r], pi_of_lv[c], v});
                else if (pi_of_lv[r] >= 0 && pi_of_lv[c] >= 0)
                    pipi_ts.push_back({pi_of_lv[r], pi_of_lv[c], v});
            }
        const auto& B = blk.Bhat;
        for (int r = 0; r < B.rows(); ++r) {
            const int rr = r_of_lp[r];
            if (rr < 0) continue;  // p_Gamma rows feed B_C instead
            for (int k = B.row_offsets()[r]; k < B.row_offsets()[r + 1]; ++k) {
                const int c = B.col_indices()[k];
                const double v = B.values()[k];
                if (r_of_lv[c] >= 0) {
                    arr_ts.push_back({rr, r_of_lv[c], v});
                    arr_ts.push_back({r_of_lv[c], rr, v});
                } else if (pi_of_lv[c] >= 0) {
                    arpi_ts.push_back({rr, pi_of_lv[c], v});
                }
            }
        }
        blk.Arr = SparseMatrix::from_triplets(arr_ts, r_dim, r_dim);
        blk.ArPi = SparseMatrix::from_triplets(arpi_ts, r_dim, npi_loc);
        blk.PiPi = SparseMatrix::from_triplets(pipi_ts, npi_loc, npi_loc);

        if (ts.li05) {
            std::vector<double> acc(nlv, 0.0);
            for (int jp : blk.pr_lp)
                for (int k = B.row_offsets()[jp]; k < B.row_offsets()[jp + 1]; ++k)
                    acc[B.col_indices()[k]] += B.values()[k];
            blk.Arc.assign(r_dim, 0.0);
            for (int i = 0; i < n_uI; ++i) blk.Arc[i] = acc[blk.uI_lv[i]];
            for (int d = 0; d < n_dual; ++d) blk.Arc[n_uI + n_p + d] = acc[blk.dual_lv[d]];
            blk.B0_pi.assign(npi_loc, 0.0);
            for (int a = 0; a < npi_loc; ++a) blk.B0_pi[a] = acc[blk.pi_lv[a]];

            // Bordered system pins the constant pressure component out of the
            // local solve; exact whether or not Arr is singular.
            std::vector<Triplet> aug;
            blk.Arr.append_triplets(aug);
            for (int jp = 0; jp < n_p; ++jp) {
                aug.push_back({n_uI + jp, r_dim, 1.0});
                aug.push_back({r_dim, n_uI + jp, 1.0});
            }
            blk.bordered = true;
            blk.Arr_f = Factorization::compute(
                SparseMatrix::from_triplets(aug, r_dim + 1, r_dim + 1));
        } else {
            try {
                blk.Arr_f = Factorization::compute(blk.Arr);
            } catch (const std::runtime_error& err) {
                throw std::runtime_error("singular A_rr in subdomain " +
                                         std::to_string(s) + ": " + err.what());
            }
        }
    }, workers);

    int offset = 0;
    for (auto& blk : ts.subs) {
        blk.r_offset = offset;
        offset += blk.r_dim();
    }
    ts.pi_offset = offset;
    ts.total_dim = offset + ts.n_pi;

    // Coarse Schur complement S_Pi, assembled as a sequential reduction over
    // per-subdomain contributions.
    const int n_coarse = ts.n_pi + (ts.li05 ? nsub : 0);
    std::vector<std::vector<double>> corr(nsub);
    parallel_for(nsub, [&](int s) {
        auto& blk = ts.subs[s];
        const int npi_loc = static_cast<int>(blk.pi_lv.size());
        const int ncol = npi_loc + (ts.li05 ? 1 : 0);
        const int r_dim = blk.r_dim();
        std::vector<std::vector<double>> cols(ncol, std::vector<double>(r_dim, 0.0));
        for (int r = 0; r < blk.ArPi.rows(); ++r)
            for (int k = blk.ArPi.row_offsets()[r]; k < blk.ArPi.row_offsets()[r + 1]; ++k)
                cols[blk.ArPi.col_indices()[k]][r] = blk.ArPi.values()[k];
        if (ts.li05) cols[npi_loc] = blk.Arc;
        std::vector<std::vector<double>> w(ncol);
        for (int b = 0; b < ncol; ++b) w[b] = blk.solve_r(cols[b]);
        auto& c = corr[s];
        c.assign(static_cast<size_t>(ncol) * ncol, 0.0);
        for (int a = 0; a < ncol; ++a)
            for (int b = a; b < ncol; ++b) {
                const double v = 0.5 * (dot(cols[a], w[b]) + dot(cols[b], w[a]));
                c[a * ncol + b] = v;
                c[b * ncol + a] = v;
            }
    }, workers);

    std::vector<Triplet> s_ts;
    for (int s = 0; s < nsub; ++s) {
        auto& blk = ts.subs[s];
        const int npi_loc = static_cast<int>(blk.pi_lv.size());
        const int ncol = npi_loc + (ts.li05 ? 1 : 0);
        auto coarse_id = [&](int a) {
            return a < npi_loc ? blk.pi_gids[a] : ts.n_pi + s;
        };
        blk.PiPi.append_triplets(s_ts);
        // remap the PiPi triplets appended above into global coarse ids
        for (size_t k = s_ts.size() - blk.PiPi.nnz(); k < s_ts.size(); ++k) {
            s_ts[k].row = blk.pi_gids[s_ts[k].row];
            s_ts[k].col = blk.pi_gids[s_ts[k].col];
        }
        if (ts.li05)
            for (int a = 0; a < npi_loc; ++a)
                if (blk.B0_pi[a] != 0.0) {
                    s_ts.push_back({coarse_id(a), ts.n_pi + s, blk.B0_pi[a]});
                    s_ts.push_back({ts.n_pi + s, coarse_id(a), blk.B0_pi[a]});
                }
        for (int a = 0; a < ncol; ++a)
            for (int b = 0; b < ncol; ++b) {
                const double v = corr[s][a * ncol + b];
                if (v != 0.0) s_ts.push_back({coarse_id(a), coarse_id(b), -v});
            }
    }
    ts.S = SparseMatrix::from_triplets(s_ts, n_coarse, n_coarse);
    if (n_coarse > 0) {
        if (ts.li05 && ts.atilde_singular()) {
            std::vector<double> null(n_coarse, 0.0);
            const double inv = 1.0 / std::sqrt(static_cast<double>(nsub));
            for (int s = 0; s < nsub; ++s) null[ts.n_pi + s] = inv;
            ts.S_f = Factorization::compute_with_null_basis(
                ts.S, std::span<const std::vector<double>>(&null, 1), 1e-7);
        } else {
            ts.S_f = Factorization::compute(ts.S);
        }
    }

    // B_C over the tilde layout: assembled p_Gamma rows, then the jump rows.
    std::vector<Triplet> bc_ts;
    for (int s = 0; s < nsub; ++s) {
        const auto& blk = ts.subs[s];
        const int nlv = static_cast<int>(2 * blk.vnodes.size());
        std::vector<int> slot(nlv, -1);
        for (size_t i = 0; i < blk.uI_lv.size(); ++i)
            slot[blk.uI_lv[i]] = blk.r_offset + static_cast<int>(i);
        for (size_t d = 0; d < blk.dual_lv.size(); ++d)
            slot[blk.dual_lv[d]] =
                blk.r_offset + blk.n_uI() + blk.n_p() + static_cast<int>(d);
        for (size_t a = 0; a < blk.pi_lv.size(); ++a)
            slot[blk.pi_lv[a]] = ts.pi_offset + blk.pi_gids[a];
        for (size_t i = 0; i < blk.pgamma_lp.size(); ++i) {
            const int lp = blk.pgamma_lp[i];
            const int row = blk.pgamma_rows[i];
            for (int k = blk.Bhat.row_offsets()[lp]; k < blk.Bhat.row_offsets()[lp + 1]; ++k)
                bc_ts.push_back({row, slot[blk.Bhat.col_indices()[k]],
                                 blk.Bhat.values()[k]});
        }
    }
    ts.lambda_slots.reserve(jumps.n_lambda);
    auto sub_of_dual = [&](int g) {
        int s = static_cast<int>(std::upper_bound(jumps.sub_offset.begin(),
                                                  jumps.sub_offset.end(), g) -
                                 jumps.sub_offset.begin()) - 1;
        return std::pair<int, int>{s, g - jumps.sub_offset[s]};
    };
    for (int r = 0; r < jumps.n_lambda; ++r) {
        const auto [slo, dlo] = sub_of_dual(jumps.pairs[r].first);
        const auto [shi, dhi] = sub_of_dual(jumps.pairs[r].second);
        const int lo = ts.dual_slot(slo, dlo);
        const int hi = ts.dual_slot(shi, dhi);
        ts.lambda_slots.emplace_back(lo, hi);
        bc_ts.push_back({ts.n_pgamma + r, lo, 1.0});
        bc_ts.push_back({ts.n_pgamma + r, hi, -1.0});
    }
    ts.Bc = SparseMatrix::from_triplets(bc_ts, ts.n_pgamma + ts.n_lambda, ts.total_dim);
    return ts;
}

std::vector<double> TildeSystem::apply_inverse(std::span<const double> rhs) const {
    if (static_cast<int>(rhs.size()) != total_dim)
        throw std::invalid_argument("apply_inverse: rhs length mismatch");
    const int nsub = static_cast<int>(subs.size());
    std::vector<std::vector<double>> y(nsub);
    parallel_for(nsub, [&](int s) {
        const auto& blk = subs[s];
        std::vector<double> b(rhs.begin() + blk.r_offset,
                              rhs.begin() + blk.r_offset + blk.r_dim());
        y[s] = blk.solve_r(b);
    });

    const int n_coarse = S.rows();
    std::vector<double> g(n_coarse, 0.0);
    for (int i = 0; i < n_pi; ++i) g[i] = rhs[pi_offset + i];
    for (int s = 0; s < nsub; ++s) {
        const auto& blk = subs[s];
        const auto t = blk.ArPi.multiply_transpose(y[s]);
        for (size_t a = 0; a < blk.pi_gids.size(); ++a) g[blk.pi_gids[a]] -= t[a];
        if (li05) {
            double bp = 0.0;
            for (int jp = 0; jp < blk.n_p(); ++jp)
                bp += rhs[blk.r_offset + blk.n_uI() + jp];
            g[n_pi + s] = bp - dot(blk.Arc, y[s]);
        }
    }
    std::vector<double> xc;
    if (n_coarse > 0) xc = S_f.solve(g);

    std::vector<double> out(total_dim, 0.0);
    for (int i = 0; i < n_pi; ++i) out[pi_offset + i] = xc[i];
    parallel_for(nsub, [&](int s) {
        const auto& blk = subs[s];
        std::vector<double> xloc(blk.pi_gids.size());
        for (size_t a = 0; a < blk.pi_gids.size(); ++a) xloc[a] = xc[blk.pi_gids[a]];
        std::vector<double> w = blk.ArPi.multiply(xloc);
        if (li05) axpy(xc[n_pi + s], blk.Arc, w);
        const auto d = blk.solve_r(w);
        for (int i = 0; i < blk.r_dim(); ++i)
            out[blk.r_offset + i] = y[s][i] - d[i];
        if (li05) {
            const double c = xc[n_pi + s];
            for (int jp = 0; jp < blk.n_p(); ++jp)
                out[blk.r_offset + blk.n_uI() + jp] += c;
        }
    });
    return out;
}

std::vector<double> TildeSystem::apply(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != total_dim)
        throw std::invalid_argument("apply: vector length mismatch");
    const int nsub = static_cast<int>(subs.size());
    std::vector<double> out(total_dim, 0.0);
    std::vector<std::vector<double>> pi_parts(nsub);
    parallel_for(nsub, [&](int s) {
        const auto& blk = subs[s];
        std::span<const double> xr(x.data() + blk.r_offset, blk.r_dim());
        std::vector<double> xloc(blk.pi_gids.size());
        for (size_t a = 0; a < blk.pi_gids.size(); ++a)
            xloc[a] = x[pi_offset + blk.pi_gids[a]];
        std::vector<double> yr = blk.Arr.multiply(xr);
        axpy(1.0, blk.ArPi.multiply(xloc), yr);
        std::copy(yr.begin(), yr.end(), out.begin() + blk.r_offset);
        pi_parts[s] = blk.ArPi.multiply_transpose(xr);
        axpy(1.0, blk.PiPi.multiply(xloc), pi_parts[s]);
    });
    for (int s = 0; s < nsub; ++s)
        for (size_t a = 0; a < subs[s].pi_gids.size(); ++a)
            out[pi_offset + subs[s].pi_gids[a]] += pi_parts[s][a];
    return out;
}

std::vector<double> TildeSystem::load_vector() const {
    std::vector<double> f(total_dim, 0.0);
    for (const auto& blk : subs) {
        for (int i = 0; i < blk.n_uI(); ++i)
            f[blk.r_offset + i] = blk.fhat[blk.uI_lv[i]];
        for (int d = 0; d < blk.n_dual(); ++d)
            f[blk.r_offset + blk.n_uI() + blk.n_p() + d] = blk.fhat[blk.dual_lv[d]];
        for (size_t a = 0; a < blk.pi_lv.size(); ++a)
            f[pi_offset + blk.pi_gids[a]] += blk.fhat[blk.pi_lv[a]];
    }
    return f;
}

std::vector<double> TildeSystem::apply_Bc(std::span<const double> x_tilde) const {
    return Bc.multiply(x_tilde);
}

std::vector<double> TildeSystem::apply_Bc_transpose(std::span<const double> y) const {
    return Bc.multiply_transpose(y);
}

std::vector<double> TildeSystem::pressure_ones() const {
    std::vector<double> v(total_dim, 0.0);
    for (const auto& blk : subs)
        for (int jp = 0; jp < blk.n_p(); ++jp)
            v[blk.r_offset + blk.n_uI() + jp] = 1.0;
    return v;
}

std::vector<double> TildeSystem::dual_flux_vector() const {
    std::vector<double> v(jumps.n_dual_total, 0.0);
    for (size_t s = 0; s < subs.size(); ++s) {
        const auto& blk = subs[s];
        std::vector<double> acc(2 * blk.vnodes.size(), 0.0);
        std::vector<double> ones(blk.pdofs.size(), 1.0);
        blk.Bhat.multiply_transpose(ones, acc);
        for (size_t d = 0; d < blk.dual_lv.size(); ++d)
            v[jumps.sub_offset[s] + d] = acc[blk.dual_lv[d]];
    }
    return v;
}

SparseMatrix TildeSystem::assemble_monolithic() const {
    std::vector<Triplet> ts;
    for (const auto& blk : subs) {
        blk.Arr.append_triplets(ts, blk.r_offset, blk.r_offset);
        for (int r = 0; r < blk.ArPi.rows(); ++r)
            for (int k = blk.ArPi.row_offsets()[r]; k < blk.ArPi.row_offsets()[r + 1]; ++k) {
                const int gp = pi_offset + blk.pi_gids[blk.ArPi.col_indices()[k]];
                ts.push_back({blk.r_offset + r, gp, blk.ArPi.values()[k]});
                ts.push_back({gp, blk.r_offset + r, blk.ArPi.values()[k]});
            }
        for (int r = 0; r < blk.PiPi.rows(); ++r)
            for (int k = blk.PiPi.row_offsets()[r]; k < blk.PiPi.row_offsets()[r + 1]; ++k)
                ts.push_back({pi_offset + blk.pi_gids[r],
                              pi_offset + blk.pi_gids[blk.PiPi.col_indices()[k]],
                              blk.PiPi.values()[k]});
    }
    return SparseMatrix::from_triplets(ts, total_dim, total_dim);
}

MonolithicTilde::MonolithicTilde(const TildeSystem& ts) {
    const auto a = ts.assemble_monolithic();
    if (ts.atilde_singular()) {
        auto null = ts.pressure_ones();
        const double nrm = norm2(null);
        for (double& v : null) v /= nrm;
        fac_ = Factorization::compute_with_null_basis(
            a, std::span<const std::vector<double>>(&null, 1));
    } else {
        fac_ = Factorization::compute(a);
    }
}

std::vector<double> MonolithicTilde::apply_inverse(std::span<const double> rhs) const {
    return fac_.solve(rhs);
}

}  // namespace stokesdd
