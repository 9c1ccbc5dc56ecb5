#include "stokesdd/mesh_fem.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace stokesdd {

namespace {

constexpr double kPi = std::numbers::pi;

// Dunavant 6-point rule, exact for degree 4 polynomials on a triangle.
// Barycentric coordinates and weights (weights sum to 1).
struct QuadPoint {
    double l1, l2, l3, w;
};

const std::array<QuadPoint, 6>& degree4_rule() {
    static const double a1 = 0.445948490915965;
    static const double w1 = 0.223381589678011;
    static const double a2 = 0.091576213509771;
    static const double w2 = 0.109951743655322;
    static const std::array<QuadPoint, 6> rule = {{
        {a1, a1, 1 - 2 * a1, w1},
        {a1, 1 - 2 * a1, a1, w1},
        {1 - 2 * a1, a1, a1, w1},
        {a2, a2, 1 - 2 * a2, w2},
        {a2, 1 - 2 * a2, a2, w2},
        {1 - 2 * a2, a2, a2, w2},
    }};
    return rule;
}

struct TriGeom {
    double area;
    // Constant P1 basis gradients: grad[i] = (dphi_i/dx, dphi_i/dy).
    std::array<std::array<double, 2>, 3> grad;
};

TriGeom tri_geometry(const StructuredMesh& mesh, int t) {
    const auto& tri = mesh.tris[t];
    const auto& p0 = mesh.vnode_xy[tri[0]];
    const auto& p1 = mesh.vnode_xy[tri[1]];
    const auto& p2 = mesh.vnode_xy[tri[2]];
    const double det = (p1[0] - p0[0]) * (p2[1] - p0[1]) -
                       (p2[0] - p0[0]) * (p1[1] - p0[1]);
    TriGeom g;
    g.area = 0.5 * det;
    const double inv = 1.0 / det;
    g.grad[0] = {(p1[1] - p2[1]) * inv, (p2[0] - p1[0]) * inv};
    g.grad[1] = {(p2[1] - p0[1]) * inv, (p0[0] - p2[0]) * inv};
    g.grad[2] = {(p0[1] - p1[1]) * inv, (p1[0] - p0[0]) * inv};
    return g;
}

// Barycentric coordinates of (x, y) in the triangle with the given vertices.
std::array<double, 3> barycentric(const std::array<double, 2>& a,
                                  const std::array<double, 2>& b,
                                  const std::array<double, 2>& c, double x,
                                  double y) {
    const double det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    const double l1 = ((b[0] - x) * (c[1] - y) - (c[0] - x) * (b[1] - y)) / det;
    const double l2 = ((c[0] - x) * (a[1] - y) - (a[0] - x) * (c[1] - y)) / det;
    return {l1, l2, 1.0 - l1 - l2};
}

// ∫_T psi_q for each pressure dof supported on triangle t (paired with
// mesh.tri_pdofs[t]); exact since psi is linear (or constant) on T.
std::array<double, 3> pressure_integrals_on_tri(const StructuredMesh& mesh, int t,
                                                double area) {
    if (mesh.element == ElementKind::MacroDP) return {area, 0.0, 0.0};
    const auto& pd = mesh.tri_pdofs[t];
    const auto& a = mesh.pdof_xy[pd[0]];
    const auto& b = mesh.pdof_xy[pd[1]];
    const auto& c = mesh.pdof_xy[pd[2]];
    std::array<double, 3> sums = {0.0, 0.0, 0.0};
    for (int v = 0; v < 3; ++v) {
        const auto& xy = mesh.vnode_xy[mesh.tris[t][v]];
        const auto l = barycentric(a, b, c, xy[0], xy[1]);
        for (int q = 0; q < 3; ++q) sums[q] += l[q];
    }
    return {area / 3.0 * sums[0], area / 3.0 * sums[1], area / 3.0 * sums[2]};
}

}  // namespace

double StructuredMesh::pressure_at(std::span<const double> p, int t, double x,
                                   double y) const {
    const auto& pd = tri_pdofs[t];
    if (element == ElementKind::MacroDP) return p[pd[0]];
    const auto l = barycentric(pdof_xy[pd[0]], pdof_xy[pd[1]], pdof_xy[pd[2]], x, y);
    return l[0] * p[pd[0]] + l[1] * p[pd[1]] + l[2] * p[pd[2]];
}

StructuredMesh build_mesh(int nsub_x, int nsub_y, int m, ElementKind element) {
    if (nsub_x < 1 || nsub_y < 1) throw std::invalid_argument("subdomain counts must be >= 1");
    if (m < 2) throw std::invalid_argument("cells per subdomain side must be >= 2");
    if (m % 2 != 0)
        throw std::invalid_argument("the pressure mesh has doubled size; the number of "
                                    "cells per subdomain side must be even");

    StructuredMesh mesh;
    mesh.nsub_x = nsub_x;
    mesh.nsub_y = nsub_y;
    mesh.m = m;
    mesh.element = element;
    mesh.ncx = nsub_x * m;
    mesh.ncy = nsub_y * m;
    mesh.hx = 1.0 / mesh.ncx;
    mesh.hy = 1.0 / mesh.ncy;

    mesh.n_grid_nodes = (mesh.ncx + 1) * (mesh.ncy + 1);
    mesh.n_vnodes = mesh.n_grid_nodes;
    mesh.vnode_xy.reserve(mesh.n_grid_nodes);
    for (int gj = 0; gj <= mesh.ncy; ++gj)
        for (int gi = 0; gi <= mesh.ncx; ++gi)
            mesh.vnode_xy.push_back({gi * mesh.hx, gj * mesh.hy});

    // Both elements share the P1 velocity mesh (lower-left -> upper-right
    // diagonal on every cell). TaylorHood carries continuous P1 pressure on
    // the 2h mesh split the same way (the velocity mesh is its uniform
    // refinement, so every fine triangle lies in exactly one pressure
    // triangle). MacroDP carries one pressure constant per pair of
    // horizontally adjacent cells -- the union of four triangles.
    const int npx = mesh.ncx / 2 + 1;
    const int npy = mesh.ncy / 2 + 1;
    if (element == ElementKind::TaylorHood) {
        auto pnode = [&](int pi, int pj) { return pj * npx + pi; };
        for (int pj = 0; pj + 1 < npy; ++pj)
            for (int pi = 0; pi + 1 < npx; ++pi) {
                mesh.coarse_tris.push_back({pnode(pi, pj), pnode(pi + 1, pj),
                                            pnode(pi + 1, pj + 1)});
                mesh.coarse_tris.push_back({pnode(pi, pj), pnode(pi + 1, pj + 1),
                                            pnode(pi, pj + 1)});
            }
        mesh.n_pdofs = npx * npy;
        for (int pj = 0; pj < npy; ++pj)
            for (int pi = 0; pi < npx; ++pi)
                mesh.pdof_xy.push_back({2.0 * pi * mesh.hx, 2.0 * pj * mesh.hy});
    } else {
        mesh.n_pdofs = (mesh.ncx / 2) * mesh.ncy;
        for (int cj = 0; cj < mesh.ncy; ++cj)
            for (int pi = 0; pi < mesh.ncx / 2; ++pi)
                mesh.pdof_xy.push_back(
                    {(2 * pi + 1) * mesh.hx, (cj + 0.5) * mesh.hy});
    }

    for (int cj = 0; cj < mesh.ncy; ++cj)
        for (int ci = 0; ci < mesh.ncx; ++ci) {
            const int sub = mesh.subdomain_of_cell(ci, cj);
            const int c00 = mesh.grid_node(ci, cj);
            const int c10 = mesh.grid_node(ci + 1, cj);
            const int c11 = mesh.grid_node(ci + 1, cj + 1);
            const int c01 = mesh.grid_node(ci, cj + 1);
            const std::array<std::array<int, 3>, 2> duo = {{{c00, c10, c11},
                                                            {c00, c11, c01}}};
            for (const auto& tri : duo) {
                mesh.tris.push_back(tri);
                mesh.tri_sub.push_back(sub);
                if (element == ElementKind::TaylorHood) {
                    // Containing coarse triangle: compare the centroid
                    // against the coarse-cell diagonal.
                    double cx = 0.0, cy = 0.0;
                    for (int v : tri) {
                        cx += mesh.vnode_xy[v][0];
                        cy += mesh.vnode_xy[v][1];
                    }
                    cx /= 3.0;
                    cy /= 3.0;
                    const int pi = ci / 2, pj = cj / 2;
                    const double lx = cx / (2.0 * mesh.hx) - pi;
                    const double ly = cy / (2.0 * mesh.hy) - pj;
                    const int coarse = 2 * (pj * (npx - 1) + pi) + (ly < lx ? 0 : 1);
                    const auto& cp = mesh.coarse_tris[coarse];
                    mesh.tri_pdofs.push_back({cp[0], cp[1], cp[2]});
                } else {
                    mesh.tri_pdofs.push_back({cj * (mesh.ncx / 2) + ci / 2, -1, -1});
                }
            }
        }
    return mesh;
}

int DofMap::n_shared_pdofs() const {
    int n = 0;
    for (const auto& owners : pdof_owners)
        if (owners.size() >= 2) ++n;
    return n;
}

DofMap build_dof_map(const StructuredMesh& mesh) {
    DofMap dm;
    dm.vnode_cat.resize(mesh.n_vnodes);
    dm.vnode_owners.resize(mesh.n_vnodes);
    dm.pdof_owners.resize(mesh.n_pdofs);

    auto owners_of_grid_node = [&](int gi, int gj) {
        std::vector<int> subs;
        for (int dj = -1; dj <= 0; ++dj)
            for (int di = -1; di <= 0; ++di) {
                const int ci = gi + di, cj = gj + dj;
                if (ci < 0 || ci >= mesh.ncx || cj < 0 || cj >= mesh.ncy) continue;
                subs.push_back(mesh.subdomain_of_cell(ci, cj));
            }
        std::sort(subs.begin(), subs.end());
        subs.erase(std::unique(subs.begin(), subs.end()), subs.end());
        return subs;
    };

    for (int gj = 0; gj <= mesh.ncy; ++gj)
        for (int gi = 0; gi <= mesh.ncx; ++gi) {
            const int node = mesh.grid_node(gi, gj);
            dm.vnode_owners[node] = owners_of_grid_node(gi, gj);
            if (gi == 0 || gi == mesh.ncx || gj == 0 || gj == mesh.ncy) {
                dm.vnode_cat[node] = VelCategory::Eliminated;
                continue;
            }
            const bool on_vert = gi % mesh.m == 0;
            const bool on_horz = gj % mesh.m == 0;
            if (on_vert && on_horz)
                dm.vnode_cat[node] = VelCategory::InterfaceCorner;
            else if (on_vert || on_horz)
                dm.vnode_cat[node] = VelCategory::InterfaceEdge;
            else
                dm.vnode_cat[node] = VelCategory::Interior;
        }

    if (mesh.element == ElementKind::MacroDP) {
        // One dof per cell pair, entirely inside one subdomain.
        const int npcx = mesh.ncx / 2;
        for (int q = 0; q < mesh.n_pdofs; ++q)
            dm.pdof_owners[q] = {mesh.subdomain_of_cell(2 * (q % npcx), q / npcx)};
    } else {
        const int npx = mesh.ncx / 2 + 1;
        const int npy = mesh.ncy / 2 + 1;
        for (int pj = 0; pj < npy; ++pj)
            for (int pi = 0; pi < npx; ++pi) {
                std::vector<int> subs;
                for (int dj = -1; dj <= 0; ++dj)
                    for (int di = -1; di <= 0; ++di) {
                        const int qi = pi + di, qj = pj + dj;  // coarse cell
                        if (qi < 0 || 2 * qi >= mesh.ncx || qj < 0 || 2 * qj >= mesh.ncy)
                            continue;
                        subs.push_back(mesh.subdomain_of_cell(2 * qi, 2 * qj));
                    }
                std::sort(subs.begin(), subs.end());
                subs.erase(std::unique(subs.begin(), subs.end()), subs.end());
                dm.pdof_owners[pj * npx + pi] = subs;
            }
    }

    dm.vel_dof.assign(2 * mesh.n_vnodes, -1);
    int next = 0;
    for (int node = 0; node < mesh.n_vnodes; ++node) {
        if (dm.vnode_cat[node] == VelCategory::Eliminated) continue;
        dm.vel_dof[2 * node] = next++;
        dm.vel_dof[2 * node + 1] = next++;
    }
    dm.n_vel_dofs = next;
    return dm;
}

namespace {

// Shared element loop for subdomain and global assembly: sub < 0 assembles
// every triangle.
struct Assembler {
    std::vector<Triplet> a_ts, b_ts;
    std::vector<double> f;

    void run(const StructuredMesh& mesh, const DofMap& dm, int sub,
             std::span<const int> vdof_map, std::span<const int> pdof_map,
             int nv, int np) {
        f.assign(nv, 0.0);
        const auto& rule = degree4_rule();
        for (size_t t = 0; t < mesh.tris.size(); ++t) {
            if (sub >= 0 && mesh.tri_sub[t] != sub) continue;
            const auto g = tri_geometry(mesh, static_cast<int>(t));
            const auto& tri = mesh.tris[t];

            std::array<int, 6> ldof;  // local kept dof ids or -1
            for (int v = 0; v < 3; ++v)
                for (int c = 0; c < 2; ++c) {
                    const int gd = dm.vel_dof[2 * tri[v] + c];
                    ldof[2 * v + c] = gd < 0 ? -1 : vdof_map[gd];
                }

            // Velocity stiffness: integral of grad(phi_i) . grad(phi_j),
            // identical for both components.
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    const double k = g.area * (g.grad[i][0] * g.grad[j][0] +
                                               g.grad[i][1] * g.grad[j][1]);
                    for (int c = 0; c < 2; ++c) {
                        const int r = ldof[2 * i + c], s = ldof[2 * j + c];
                        if (r >= 0 && s >= 0) a_ts.push_back({r, s, k});
                    }
                }

            // Divergence: B[q,(v,c)] = -∫ psi_q d(phi_v)/dx_c.
            const auto w = pressure_integrals_on_tri(mesh, static_cast<int>(t), g.area);
            const int nq = mesh.element == ElementKind::MacroDP ? 1 : 3;
            for (int q = 0; q < nq; ++q) {
                const int pr = pdof_map[mesh.tri_pdofs[t][q]];
                if (pr < 0) continue;
                for (int v = 0; v < 3; ++v)
                    for (int c = 0; c < 2; ++c) {
                        const int s = ldof[2 * v + c];
                        if (s >= 0) b_ts.push_back({pr, s, -w[q] * g.grad[v][c]});
                    }
            }

            // Load by degree-4 quadrature.
            for (const auto& qp : rule) {
                const double x = qp.l1 * mesh.vnode_xy[tri[0]][0] +
                                 qp.l2 * mesh.vnode_xy[tri[1]][0] +
                                 qp.l3 * mesh.vnode_xy[tri[2]][0];
                const double y = qp.l1 * mesh.vnode_xy[tri[0]][1] +
                                 qp.l2 * mesh.vnode_xy[tri[1]][1] +
                                 qp.l3 * mesh.vnode_xy[tri[2]][1];
                const auto mp = manufactured_fields(x, y);
                const std::array<double, 3> lambda = {qp.l1, qp.l2, qp.l3};
                for (int v = 0; v < 3; ++v)
                    for (int c = 0; c < 2; ++c) {
                        const int r = ldof[2 * v + c];
                        if (r >= 0) f[r] += qp.w * g.area * mp.f[c] * lambda[v];
                    }
            }
        }
        (void)np;
    }
};

}  // namespace

SubdomainOperators assemble_subdomain(const StructuredMesh& mesh,
                                      const DofMap& dofmap, int sub) {
    SubdomainOperators ops;
    ops.sub = sub;

    std::vector<char> vnode_in(mesh.n_vnodes, 0), pdof_in(mesh.n_pdofs, 0);
    for (size_t t = 0; t < mesh.tris.size(); ++t) {
        if (mesh.tri_sub[t] != sub) continue;
        for (int v : mesh.tris[t]) vnode_in[v] = 1;
        for (int q : mesh.tri_pdofs[t])
            if (q >= 0) pdof_in[q] = 1;
    }
    for (int node = 0; node < mesh.n_vnodes; ++node)
        if (vnode_in[node] && dofmap.vnode_cat[node] != VelCategory::Eliminated)
            ops.vnodes.push_back(node);
    for (int q = 0; q < mesh.n_pdofs; ++q)
        if (pdof_in[q]) ops.pdofs.push_back(q);

    std::vector<int> vdof_map(dofmap.n_vel_dofs, -1);
    for (size_t i = 0; i < ops.vnodes.size(); ++i)
        for (int c = 0; c < 2; ++c) {
            const int gd = dofmap.vel_dof[2 * ops.vnodes[i] + c];
            ops.vdofs.push_back(gd);
            vdof_map[gd] = static_cast<int>(2 * i + c);
        }
    std::vector<int> pdof_map(mesh.n_pdofs, -1);
    for (size_t i = 0; i < ops.pdofs.size(); ++i)
        pdof_map[ops.pdofs[i]] = static_cast<int>(i);

    const int nv = static_cast<int>(ops.vdofs.size());
    const int np = static_cast<int>(ops.pdofs.size());
    Assembler as;
    as.run(mesh, dofmap, sub, vdof_map, pdof_map, nv, np);
    ops.A = SparseMatrix::from_triplets(as.a_ts, nv, nv);
    ops.B = SparseMatrix::from_triplets(as.b_ts, np, nv);
    ops.f = std::move(as.f);
    return ops;
}

AssembledStokesSystem assemble_global(const StructuredMesh& mesh,
                                      const DofMap& dofmap) {
    AssembledStokesSystem sys;
    std::vector<int> vdof_map(dofmap.n_vel_dofs);
    for (int i = 0; i < dofmap.n_vel_dofs; ++i) vdof_map[i] = i;
    std::vector<int> pdof_map(mesh.n_pdofs);
    for (int i = 0; i < mesh.n_pdofs; ++i) pdof_map[i] = i;

    Assembler as;
    as.run(mesh, dofmap, -1, vdof_map, pdof_map, dofmap.n_vel_dofs, mesh.n_pdofs);
    sys.A = SparseMatrix::from_triplets(as.a_ts, dofmap.n_vel_dofs, dofmap.n_vel_dofs);
    sys.B = SparseMatrix::from_triplets(as.b_ts, mesh.n_pdofs, dofmap.n_vel_dofs);
    sys.f = std::move(as.f);

    std::vector<Triplet> z_ts;
    if (mesh.element == ElementKind::MacroDP) {
        const double area = 2.0 * mesh.hx * mesh.hy;  // coarse triangle area
        for (int q = 0; q < mesh.n_pdofs; ++q) z_ts.push_back({q, q, area});
    } else {
        const double area = 2.0 * mesh.hx * mesh.hy;  // coarse triangle area
        for (const auto& ct : mesh.coarse_tris)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    z_ts.push_back({ct[i], ct[j], area / 12.0 * (i == j ? 2.0 : 1.0)});
    }
    sys.Z = SparseMatrix::from_triplets(z_ts, mesh.n_pdofs, mesh.n_pdofs);
    return sys;
}

ManufacturedPoint manufactured_fields(double x, double y) {
    const double sx = std::sin(kPi * x), cx = std::cos(kPi * x);
    const double sy = std::sin(kPi * y), cy = std::cos(kPi * y);

    ManufacturedPoint out;
    out.u[0] = sx * sx * sx * sy * sy * cy;
    out.u[1] = -sx * sx * cx * sy * sy * sy;
    out.p = x * x - y * y;

    out.grad_u[0][0] = 3 * kPi * sx * sx * cx * sy * sy * cy;
    out.grad_u[0][1] = sx * sx * sx * (2 * kPi * sy * cy * cy - kPi * sy * sy * sy);
    out.grad_u[1][0] = -(2 * kPi * sx * cx * cx - kPi * sx * sx * sx) * sy * sy * sy;
    out.grad_u[1][1] = -sx * sx * cx * 3 * kPi * sy * sy * cy;

    const double pi2 = kPi * kPi;
    // Laplacians from the closed-form second derivatives.
    const double d2x_sx3 = 3 * pi2 * sx * (2 * cx * cx - sx * sx);
    const double gy = sy * sy * cy;
    const double gy_dd = 2 * pi2 * cy * cy * cy - 7 * pi2 * sy * sy * cy;
    const double lap_u1 = d2x_sx3 * gy + sx * sx * sx * gy_dd;

    const double qx = sx * sx * cx;
    const double qx_dd = 2 * pi2 * cx * cx * cx - 7 * pi2 * sx * sx * cx;
    const double d2y_sy3 = 3 * pi2 * sy * (2 * cy * cy - sy * sy);
    const double lap_u2 = -qx_dd * sy * sy * sy - qx * d2y_sy3;

    out.f[0] = -lap_u1 + 2 * x;
    out.f[1] = -lap_u2 - 2 * y;
    return out;
}

ErrorNorms error_norms(const StructuredMesh& mesh, std::span<const double> u_nodal,
                       std::span<const double> p) {
    if (static_cast<int>(u_nodal.size()) != 2 * mesh.n_vnodes ||
        static_cast<int>(p.size()) != mesh.n_pdofs)
        throw std::invalid_argument("error_norms: field size mismatch");

    // Match means: the exact pressure already has zero mean over [0,1]^2.
    const double shift = pressure_integral(mesh, p);

    ErrorNorms err;
    const auto& rule = degree4_rule();
    for (size_t t = 0; t < mesh.tris.size(); ++t) {
        const auto g = tri_geometry(mesh, static_cast<int>(t));
        const auto& tri = mesh.tris[t];

        std::array<std::array<double, 2>, 2> gh = {{{0, 0}, {0, 0}}};
        for (int v = 0; v < 3; ++v)
            for (int c = 0; c < 2; ++c)
                for (int d = 0; d < 2; ++d)
                    gh[c][d] += u_nodal[2 * tri[v] + c] * g.grad[v][d];

        for (const auto& qp : rule) {
            const std::array<double, 3> lambda = {qp.l1, qp.l2, qp.l3};
            double x = 0.0, y = 0.0, uh0 = 0.0, uh1 = 0.0;
            for (int v = 0; v < 3; ++v) {
                x += lambda[v] * mesh.vnode_xy[tri[v]][0];
                y += lambda[v] * mesh.vnode_xy[tri[v]][1];
                uh0 += lambda[v] * u_nodal[2 * tri[v]];
                uh1 += lambda[v] * u_nodal[2 * tri[v] + 1];
            }
            const auto mp = manufactured_fields(x, y);
            const double w = qp.w * g.area;
            for (int c = 0; c < 2; ++c)
                for (int d = 0; d < 2; ++d) {
                    const double e = gh[c][d] - mp.grad_u[c][d];
                    err.h1_u += w * e * e;
                }
            err.l2_u += w * ((uh0 - mp.u[0]) * (uh0 - mp.u[0]) +
                             (uh1 - mp.u[1]) * (uh1 - mp.u[1]));
            const double ep = mesh.pressure_at(p, static_cast<int>(t), x, y) - shift - mp.p;
            err.l2_p += w * ep * ep;
        }
    }
    err.h1_u = std::sqrt(err.h1_u);
    err.l2_u = std::sqrt(err.l2_u);
    err.l2_p = std::sqrt(err.l2_p);
    return err;
}

double pressure_integral(const StructuredMesh& mesh, std::span<const double> p) {
    double total = 0.0;
    if (mesh.element == ElementKind::MacroDP) {
        const double area = 2.0 * mesh.hx * mesh.hy;
        for (int q = 0; q < mesh.n_pdofs; ++q) total += area * p[q];
    } else {
        const double area = 2.0 * mesh.hx * mesh.hy;
        for (const auto& ct : mesh.coarse_tris)
            total += area / 3.0 * (p[ct[0]] + p[ct[1]] + p[ct[2]]);
    }
    return total;
}

DirectSolution solve_stokes_direct(const StructuredMesh& mesh, const DofMap& dofmap) {
    const auto sys = assemble_global(mesh, dofmap);
    const int nv = dofmap.n_vel_dofs;
    const int np = mesh.n_pdofs;
    const int n = nv + np;
    const int pinned = n - 1;  // last pressure dof

    std::vector<Triplet> ts;
    sys.A.append_triplets(ts);
    for (int r = 0; r < np; ++r) {
        if (nv + r == pinned) continue;
        for (int k = sys.B.row_offsets()[r]; k < sys.B.row_offsets()[r + 1]; ++k) {
            ts.push_back({nv + r, sys.B.col_indices()[k], sys.B.values()[k]});
            ts.push_back({sys.B.col_indices()[k], nv + r, sys.B.values()[k]});
        }
    }
    ts.push_back({pinned, pinned, 1.0});

    auto fac = Factorization::compute(SparseMatrix::from_triplets(ts, n, n));
    std::vector<double> rhs(n, 0.0);
    std::copy(sys.f.begin(), sys.f.end(), rhs.begin());
    const auto x = fac.solve(rhs);

    DirectSolution sol;
    sol.u_nodal.assign(2 * mesh.n_vnodes, 0.0);
    for (int node = 0; node < mesh.n_vnodes; ++node)
        for (int c = 0; c < 2; ++c) {
            const int gd = dofmap.vel_dof[2 * node + c];
            if (gd >= 0) sol.u_nodal[2 * node + c] = x[gd];
        }
    sol.p.assign(x.begin() + nv, x.end());
    const double mean = pressure_integral(mesh, sol.p);
    for (double& v : sol.p) v -= mean;
    return sol;
}

}  // namespace stokesdd
