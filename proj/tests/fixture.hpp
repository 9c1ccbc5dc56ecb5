// Shared test fixture: builds the full decomposition pipeline for one
// configuration.
#pragma once

#include <random>

#include "stokesdd/decomposition.hpp"

namespace stokesdd::testing {

struct Fixture {
    StructuredMesh mesh;
    DofMap dofmap;
    std::vector<SubdomainOperators> subops;
    InterfaceClassification cls;
    ChangeOfBasis cob;
    JumpOperators jumps;
    PressureSplit split;
    TildeSystem ts;
};

inline Fixture make_fixture(int nsub, int m, ElementKind ek, PrimalChoice pc,
                            PGammaMode pg, bool li05 = false) {
    Fixture f;
    f.mesh = build_mesh(nsub, nsub, m, ek);
    f.dofmap = build_dof_map(f.mesh);
    for (int s = 0; s < f.mesh.n_subdomains(); ++s)
        f.subops.push_back(assemble_subdomain(f.mesh, f.dofmap, s));
    f.cls = classify_dofs(f.mesh, f.dofmap, pc);
    if (pc == PrimalChoice::CornerPlusEdgeAverage)
        f.cob = build_edge_average_basis(f.mesh, f.cls);
    f.jumps = build_jump_operators(f.mesh, f.cls);
    f.split = select_pressure_split(f.mesh, f.dofmap, pg, pc, li05);
    f.ts = build_tilde_system(f.mesh, f.dofmap, f.subops, f.cls, f.cob, f.jumps,
                              f.split);
    return f;
}

inline std::vector<double> random_vector(std::mt19937& rng, int n) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = dist(rng);
    return v;
}

/// Lagrange-multiplier part of the null vector of the big saddle system:
/// -B_{Delta,D} [B_IDelta^T B_GammaDelta^T][1;1].
inline std::vector<double> lambda_null(const TildeSystem& ts) {
    const auto v = ts.dual_flux_vector();
    std::vector<double> out(ts.n_lambda);
    for (int r = 0; r < ts.n_lambda; ++r) {
        const auto& pr = ts.jumps.pairs[r];
        out[r] = -(ts.jumps.delta[pr.first] * v[pr.first] -
                   ts.jumps.delta[pr.second] * v[pr.second]);
    }
    return out;
}

/// Velocity field of one subdomain reconstructed in the nodal basis from a
/// tilde vector: nodal values for every kept velocity dof of the subdomain
/// closure (its own dual copies), indexed 2*node+comp over the global mesh.
inline std::vector<double> subdomain_nodal_velocity(const TildeSystem& ts, int s,
                                                    std::span<const double> x) {
    const auto& blk = ts.subs[s];
    const auto& mesh = *ts.mesh;
    std::vector<double> u(2 * mesh.n_vnodes, 0.0);
    for (int i = 0; i < blk.n_uI(); ++i) {
        const int lv = blk.uI_lv[i];
        u[2 * blk.vnodes[lv / 2] + lv % 2] = x[blk.r_offset + i];
    }
    const int n_corners = static_cast<int>(ts.corner_nodes.size());
    for (size_t a = 0; a < blk.pi_lv.size(); ++a) {
        const int gid = blk.pi_gids[a];
        const int lv = blk.pi_lv[a];
        if (gid < 2 * n_corners)
            u[2 * blk.vnodes[lv / 2] + lv % 2] = x[ts.pi_offset + gid];
    }
    const auto& refs = ts.jumps.sub_duals[s];
    const int dual_base = blk.r_offset + blk.n_uI() + blk.n_p();
    if (ts.primal == PrimalChoice::CornerOnly) {
        for (size_t d = 0; d < refs.size(); ++d)
            u[2 * refs[d].node + refs[d].comp] = x[dual_base + d];
    } else {
        std::vector<std::vector<double>> z_by_edge(ts.edges.size());
        for (size_t d = 0; d < refs.size(); ++d) {
            const auto& ref = refs[d];
            if (ref.comp != ts.edges[ref.edge].normal_comp) {
                u[2 * ref.node + ref.comp] = x[dual_base + d];
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
            std::vector<double> abz(tr.n()), w(tr.n());
            abz[0] = x[ts.pi_offset + 2 * n_corners + e];
            for (int j = 1; j < tr.n(); ++j) abz[j] = z[j];
            tr.to_nodal(abz, w);
            const auto& edge = ts.edges[e];
            for (int k = 0; k < tr.n(); ++k)
                u[2 * edge.nodes[k] + edge.normal_comp] = w[k];
        }
    }
    return u;
}

/// Independent H1 seminorm of a P1 nodal field over one subdomain, by direct
/// per-triangle gradient quadrature.
inline double subdomain_h1_seminorm_sq(const StructuredMesh& mesh, int s,
                                       std::span<const double> u_nodal) {
    double total = 0.0;
    for (size_t t = 0; t < mesh.tris.size(); ++t) {
        if (mesh.tri_sub[t] != s) continue;
        const auto& tri = mesh.tris[t];
        const auto& p0 = mesh.vnode_xy[tri[0]];
        const auto& p1 = mesh.vnode_xy[tri[1]];
        const auto& p2 = mesh.vnode_xy[tri[2]];
        const double det =
            (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        const double area = 0.5 * det;
        const std::array<std::array<double, 2>, 3> grad = {{
            {(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det},
            {(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det},
            {(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det},
        }};
        for (int c = 0; c < 2; ++c) {
            double gx = 0.0, gy = 0.0;
            for (int v = 0; v < 3; ++v) {
                gx += u_nodal[2 * tri[v] + c] * grad[v][0];
                gy += u_nodal[2 * tri[v] + c] * grad[v][1];
            }
            total += area * (gx * gx + gy * gy);
        }
    }
    return total;
}

}  // namespace stokesdd::testing
