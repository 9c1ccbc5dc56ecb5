#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "stokesdd/mesh_fem.hpp"

using namespace stokesdd;

namespace {

// Smallest nonzero generalized eigenvalue of (B A^-1 B^T) q = beta^2 Z q.
double infsup_beta2(const StructuredMesh& mesh, const DofMap& dm) {
    const auto sys = assemble_global(mesh, dm);
    const int np = mesh.n_pdofs;
    const auto fac = Factorization::compute(sys.A);

    std::vector<double> s(static_cast<size_t>(np) * np, 0.0);
    for (int q = 0; q < np; ++q) {
        std::vector<double> col(dm.n_vel_dofs, 0.0);
        for (int k = sys.B.row_offsets()[q]; k < sys.B.row_offsets()[q + 1]; ++k)
            col[sys.B.col_indices()[k]] = sys.B.values()[k];
        const auto w = fac.solve(col);
        const auto bw = sys.B.multiply(w);
        for (int r = 0; r < np; ++r) s[static_cast<size_t>(r) * np + q] = bw[r];
    }
    for (int i = 0; i < np; ++i)
        for (int j = 0; j < i; ++j) {
            const double v = 0.5 * (s[static_cast<size_t>(i) * np + j] +
                                    s[static_cast<size_t>(j) * np + i]);
            s[static_cast<size_t>(i) * np + j] = v;
            s[static_cast<size_t>(j) * np + i] = v;
        }

    const auto ze = dense_sym_eig(sys.Z.dense(), np);
    // W = Z^{-1/2} S Z^{-1/2}
    std::vector<double> zih(static_cast<size_t>(np) * np, 0.0);
    for (int i = 0; i < np; ++i)
        for (int j = 0; j < np; ++j) {
            double v = 0.0;
            for (int k = 0; k < np; ++k)
                v += ze.eigenvectors[k * np + i] / std::sqrt(ze.eigenvalues[k]) *
                     ze.eigenvectors[k * np + j];
            zih[static_cast<size_t>(i) * np + j] = v;
        }
    auto matmul = [np](const std::vector<double>& a, const std::vector<double>& b) {
        std::vector<double> c(static_cast<size_t>(np) * np, 0.0);
        for (int i = 0; i < np; ++i)
            for (int k = 0; k < np; ++k) {
                const double av = a[static_cast<size_t>(i) * np + k];
                if (av == 0.0) continue;
                for (int j = 0; j < np; ++j)
                    c[static_cast<size_t>(i) * np + j] +=
                        av * b[static_cast<size_t>(k) * np + j];
            }
        return c;
    };
    const auto w = matmul(matmul(zih, s), zih);
    const auto eigs = dense_sym_eig(w, np).eigenvalues;
    const double cutoff = 1e-8 * eigs.back();
    for (double v : eigs)
        if (v > cutoff) return v;
    return 0.0;
}

}  // namespace

TEST_CASE("mesh counts for the reference configurations") {
    SUBCASE("4x4 subdomains, m=8, Taylor-Hood") {
        const auto mesh = build_mesh(4, 4, 8, ElementKind::TaylorHood);
        CHECK(mesh.ncx == 32);
        CHECK(mesh.ncy == 32);
        CHECK(mesh.tris.size() == 2048);
        CHECK(mesh.n_vnodes == 1089);
        CHECK(mesh.n_pdofs == 289);
    }
    SUBCASE("1x1 subdomains, m=2, macroelement") {
        const auto mesh = build_mesh(1, 1, 2, ElementKind::MacroDP);
        CHECK(mesh.ncx * mesh.ncy == 4);
        CHECK(mesh.tris.size() == 8);
        CHECK(mesh.n_vnodes == 9);
        // One pressure constant per coarse triangle (union of 4 fine ones).
        CHECK(mesh.n_pdofs == 2);
        for (int q = 0; q < mesh.n_pdofs; ++q) {
            int count = 0;
            for (size_t t = 0; t < mesh.tris.size(); ++t)
                if (mesh.tri_pdofs[t][0] == q) ++count;
            CHECK(count == 4);
        }
    }
    SUBCASE("2x2 subdomains, m=2: triangles respect the subdomain grid") {
        const auto mesh = build_mesh(2, 2, 2, ElementKind::MacroDP);
        for (size_t t = 0; t < mesh.tris.size(); ++t) {
            const int s = mesh.tri_sub[t];
            const double x0 = (s % 2) * 0.5, y0 = (s / 2) * 0.5;
            for (int v : mesh.tris[t]) {
                CHECK(mesh.vnode_xy[v][0] >= x0 - 1e-15);
                CHECK(mesh.vnode_xy[v][0] <= x0 + 0.5 + 1e-15);
                CHECK(mesh.vnode_xy[v][1] >= y0 - 1e-15);
                CHECK(mesh.vnode_xy[v][1] <= y0 + 0.5 + 1e-15);
            }
        }
    }
}

TEST_CASE("mesh construction rejects invalid input") {
    CHECK_THROWS_AS(build_mesh(0, 1, 4, ElementKind::MacroDP), std::invalid_argument);
    CHECK_THROWS_AS(build_mesh(2, 2, 1, ElementKind::MacroDP), std::invalid_argument);
    CHECK_THROWS_AS(build_mesh(2, 2, 3, ElementKind::TaylorHood), std::invalid_argument);
    CHECK_THROWS_AS(build_mesh(2, 2, 3, ElementKind::MacroDP), std::invalid_argument);
}

TEST_CASE("dof map classification counts") {
    SUBCASE("Taylor-Hood 2x2, m=4") {
        const auto mesh = build_mesh(2, 2, 4, ElementKind::TaylorHood);
        const auto dm = build_dof_map(mesh);
        int corners = 0, edge_nodes = 0;
        for (int n = 0; n < mesh.n_vnodes; ++n) {
            if (dm.vnode_cat[n] == VelCategory::InterfaceCorner) ++corners;
            if (dm.vnode_cat[n] == VelCategory::InterfaceEdge) ++edge_nodes;
        }
        CHECK(corners == 1);
        CHECK(edge_nodes == 4 * 3);
        CHECK(2 * (corners + edge_nodes) == 26);

        // Every pressure dof on the two interface lines is shared, including
        // the line endpoints on the domain boundary (their basis support
        // straddles the interface): 1 cross + 4 edge-interior + 4 endpoints.
        CHECK(dm.n_shared_pdofs() == 9);
        for (int q = 0; q < mesh.n_pdofs; ++q) {
            const bool on_line = std::abs(mesh.pdof_xy[q][0] - 0.5) < 1e-12 ||
                                 std::abs(mesh.pdof_xy[q][1] - 0.5) < 1e-12;
            CHECK(dm.pressure_shared(q) == on_line);
        }
    }
    SUBCASE("macroelement pressures are never shared") {
        const auto mesh = build_mesh(2, 2, 4, ElementKind::MacroDP);
        const auto dm = build_dof_map(mesh);
        CHECK(dm.n_shared_pdofs() == 0);
        for (int q = 0; q < mesh.n_pdofs; ++q) CHECK(dm.pdof_owners[q].size() == 1);
    }
    SUBCASE("corner count scales with the grid") {
        const auto mesh = build_mesh(4, 3, 6, ElementKind::MacroDP);
        const auto dm = build_dof_map(mesh);
        int corners = 0;
        for (int n = 0; n < mesh.n_vnodes; ++n)
            if (dm.vnode_cat[n] == VelCategory::InterfaceCorner) ++corners;
        CHECK(corners == (4 - 1) * (3 - 1));
    }
    SUBCASE("domain boundary velocity dofs carry no unknowns") {
        const auto mesh = build_mesh(2, 2, 2, ElementKind::MacroDP);
        const auto dm = build_dof_map(mesh);
        for (int n = 0; n < mesh.n_vnodes; ++n) {
            const auto& xy = mesh.vnode_xy[n];
            const bool on_bdry =
                xy[0] == 0.0 || xy[0] == 1.0 || xy[1] == 0.0 || xy[1] == 1.0;
            CHECK((dm.vel_dof[2 * n] < 0) == on_bdry);
        }
    }
}

TEST_CASE("subdomain assembly: constants in the kernel") {
    for (ElementKind ek : {ElementKind::MacroDP, ElementKind::TaylorHood}) {
        const auto mesh = build_mesh(3, 3, 4, ek);
        const auto dm = build_dof_map(mesh);
        const auto ops = assemble_subdomain(mesh, dm, 4);  // interior subdomain

        const int nv = static_cast<int>(ops.vdofs.size());
        std::vector<double> w(nv);
        for (int i = 0; i < nv; ++i) w[i] = i % 2 == 0 ? 1.0 : 2.0;

        // A row sums vanish per component; the divergence of the constant
        // field vanishes on every pressure patch.
        const auto aw = ops.A.multiply(w);
        for (double v : aw) CHECK(std::abs(v) < 1e-12);
        const auto bw = ops.B.multiply(w);
        for (double v : bw) CHECK(std::abs(v) < 1e-13);
    }
}

TEST_CASE("sum of subdomain assemblies equals the global assembly") {
    for (ElementKind ek : {ElementKind::MacroDP, ElementKind::TaylorHood}) {
        const auto mesh = build_mesh(2, 2, 4, ek);
        const auto dm = build_dof_map(mesh);
        const auto sys = assemble_global(mesh, dm);

        std::vector<Triplet> a_ts, b_ts;
        std::vector<double> f_sum(dm.n_vel_dofs, 0.0);
        for (int s = 0; s < mesh.n_subdomains(); ++s) {
            const auto ops = assemble_subdomain(mesh, dm, s);
            for (int r = 0; r < ops.A.rows(); ++r)
                for (int k = ops.A.row_offsets()[r]; k < ops.A.row_offsets()[r + 1]; ++k)
                    a_ts.push_back({ops.vdofs[r], ops.vdofs[ops.A.col_indices()[k]],
                                    ops.A.values()[k]});
            for (int r = 0; r < ops.B.rows(); ++r)
                for (int k = ops.B.row_offsets()[r]; k < ops.B.row_offsets()[r + 1]; ++k)
                    b_ts.push_back({ops.pdofs[r], ops.vdofs[ops.B.col_indices()[k]],
                                    ops.B.values()[k]});
            for (size_t i = 0; i < ops.vdofs.size(); ++i) f_sum[ops.vdofs[i]] += ops.f[i];
        }
        const auto a_sum =
            SparseMatrix::from_triplets(a_ts, dm.n_vel_dofs, dm.n_vel_dofs).dense();
        const auto b_sum =
            SparseMatrix::from_triplets(b_ts, mesh.n_pdofs, dm.n_vel_dofs).dense();
        const auto a_ref = sys.A.dense();
        const auto b_ref = sys.B.dense();
        for (size_t i = 0; i < a_ref.size(); ++i)
            CHECK(std::abs(a_sum[i] - a_ref[i]) <= 1e-12);
        for (size_t i = 0; i < b_ref.size(); ++i)
            CHECK(std::abs(b_sum[i] - b_ref[i]) <= 1e-12);
        for (int i = 0; i < dm.n_vel_dofs; ++i)
            CHECK(std::abs(f_sum[i] - sys.f[i]) <= 1e-12);
    }
}

TEST_CASE("global system: divergence rows sum to zero and A is SPD") {
    for (ElementKind ek : {ElementKind::MacroDP, ElementKind::TaylorHood}) {
        const auto mesh = build_mesh(2, 2, 4, ek);
        const auto dm = build_dof_map(mesh);
        const auto sys = assemble_global(mesh, dm);

        std::vector<double> ones(mesh.n_pdofs, 1.0);
        const auto bt1 = sys.B.multiply_transpose(ones);
        for (double v : bt1) CHECK(std::abs(v) < 1e-13);

        const auto ad = sys.A.dense();
        double asym = 0.0;
        for (int i = 0; i < dm.n_vel_dofs; ++i)
            for (int j = 0; j < dm.n_vel_dofs; ++j)
                asym = std::max(asym, std::abs(ad[i * dm.n_vel_dofs + j] -
                                               ad[j * dm.n_vel_dofs + i]));
        CHECK(asym <= 1e-12);
        const auto eigs = dense_sym_eig(ad, dm.n_vel_dofs).eigenvalues;
        CHECK(eigs.front() > 0.0);
    }
}

TEST_CASE("pressure mass matrix is spectrally equivalent to h^2") {
    for (ElementKind ek : {ElementKind::MacroDP, ElementKind::TaylorHood}) {
        std::vector<double> ratios;
        for (int m : {2, 4, 8}) {
            const auto mesh = build_mesh(2, 2, m, ek);
            const auto dm = build_dof_map(mesh);
            const auto sys = assemble_global(mesh, dm);
            const auto eigs = dense_sym_eig(sys.Z.dense(), mesh.n_pdofs).eigenvalues;
            const double h2 = mesh.hx * mesh.hy;
            CHECK(eigs.front() > 0.05 * h2);
            CHECK(eigs.back() < 10.0 * h2);
            CHECK(eigs.back() / eigs.front() < 20.0);
            ratios.push_back(eigs.back() / eigs.front());
        }
        // h-independence of the equivalence constants.
        const double lo = *std::min_element(ratios.begin(), ratios.end());
        const double hi = *std::max_element(ratios.begin(), ratios.end());
        CHECK(hi / lo < 1.5);
    }
}

TEST_CASE("manufactured solution properties") {
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    SUBCASE("vanishes on the domain boundary") {
        for (int k = 0; k < 20; ++k) {
            const double t = dist(rng);
            for (const auto& mp :
                 {manufactured_fields(0.0, t), manufactured_fields(1.0, t),
                  manufactured_fields(t, 0.0), manufactured_fields(t, 1.0)}) {
                CHECK(std::abs(mp.u[0]) < 1e-14);
                CHECK(std::abs(mp.u[1]) < 1e-14);
            }
        }
    }
    SUBCASE("divergence free") {
        for (int k = 0; k < 50; ++k) {
            const auto mp = manufactured_fields(dist(rng), dist(rng));
            CHECK(std::abs(mp.grad_u[0][0] + mp.grad_u[1][1]) < 1e-12);
        }
    }
    SUBCASE("pressure profile") {
        CHECK(manufactured_fields(1.0, 0.0).p - manufactured_fields(0.0, 1.0).p ==
              doctest::Approx(2.0));
    }
    SUBCASE("force and gradients match finite differences") {
        const double d = 1e-5;
        for (int k = 0; k < 20; ++k) {
            const double x = 0.1 + 0.8 * dist(rng), y = 0.1 + 0.8 * dist(rng);
            const auto c = manufactured_fields(x, y);
            const auto xp = manufactured_fields(x + d, y);
            const auto xm = manufactured_fields(x - d, y);
            const auto yp = manufactured_fields(x, y + d);
            const auto ym = manufactured_fields(x, y - d);
            for (int comp = 0; comp < 2; ++comp) {
                const double lap =
                    (xp.u[comp] - 2 * c.u[comp] + xm.u[comp]) / (d * d) +
                    (yp.u[comp] - 2 * c.u[comp] + ym.u[comp]) / (d * d);
                const double grad_p =
                    comp == 0 ? (xp.p - xm.p) / (2 * d) : (yp.p - ym.p) / (2 * d);
                CHECK(c.f[comp] == doctest::Approx(-lap + grad_p).epsilon(1e-4));
            }
            CHECK(c.grad_u[0][0] ==
                  doctest::Approx((xp.u[0] - xm.u[0]) / (2 * d)).epsilon(1e-6));
            CHECK(c.grad_u[0][1] ==
                  doctest::Approx((yp.u[0] - ym.u[0]) / (2 * d)).epsilon(1e-6));
            CHECK(c.grad_u[1][0] ==
                  doctest::Approx((xp.u[1] - xm.u[1]) / (2 * d)).epsilon(1e-6));
            CHECK(c.grad_u[1][1] ==
                  doctest::Approx((yp.u[1] - ym.u[1]) / (2 * d)).epsilon(1e-6));
        }
    }
}

TEST_CASE("direct solve converges at first order in the H1 seminorm") {
    for (ElementKind ek : {ElementKind::MacroDP, ElementKind::TaylorHood}) {
        double prev_h1 = 0.0, prev_p = 0.0;
        for (int m : {4, 8, 16}) {
            const auto mesh = build_mesh(2, 2, m, ek);
            const auto dm = build_dof_map(mesh);
            const auto sol = solve_stokes_direct(mesh, dm);
            const auto err = error_norms(mesh, sol.u_nodal, sol.p);
            if (prev_h1 > 0.0) {
                CHECK(prev_h1 / err.h1_u > 1.7);
                CHECK(prev_h1 / err.h1_u < 2.3);
                CHECK(err.l2_p < prev_p);
            }
            prev_h1 = err.h1_u;
            prev_p = err.l2_p;
        }
    }
}

TEST_CASE("error norms: interpolant and zero-solution baselines") {
    for (ElementKind ek : {ElementKind::MacroDP, ElementKind::TaylorHood}) {
        double prev = 0.0;
        std::array<double, 2> zero_err = {0.0, 0.0};
        int li = 0;
        for (int m : {4, 8}) {
            const auto mesh = build_mesh(2, 2, m, ek);
            std::vector<double> u(2 * mesh.n_vnodes), p(mesh.n_pdofs);
            for (int n = 0; n < mesh.n_vnodes; ++n) {
                const auto mp =
                    manufactured_fields(mesh.vnode_xy[n][0], mesh.vnode_xy[n][1]);
                u[2 * n] = mp.u[0];
                u[2 * n + 1] = mp.u[1];
            }
            for (int q = 0; q < mesh.n_pdofs; ++q)
                p[q] = manufactured_fields(mesh.pdof_xy[q][0], mesh.pdof_xy[q][1]).p;
            const auto err = error_norms(mesh, u, p);
            CHECK(err.h1_u > 0.0);
            if (prev > 0.0) {
                CHECK(prev / err.h1_u > 1.7);
                CHECK(prev / err.h1_u < 2.3);
            }
            prev = err.h1_u;

            const std::vector<double> uz(2 * mesh.n_vnodes, 0.0), pz(mesh.n_pdofs, 0.0);
            zero_err[li++] = error_norms(mesh, uz, pz).h1_u;
        }
        // |u|_H1 of the exact fields, independent of the mesh.
        CHECK(std::abs(zero_err[0] / zero_err[1] - 1.0) < 1e-3);
    }
}

TEST_CASE("discrete inf-sup constant is stable under refinement") {
    for (ElementKind ek : {ElementKind::MacroDP, ElementKind::TaylorHood}) {
        std::vector<double> betas;
        for (int m : {2, 4, 8}) {
            const auto mesh = build_mesh(2, 2, m, ek);
            const auto dm = build_dof_map(mesh);
            betas.push_back(infsup_beta2(mesh, dm));
        }
        const double lo = *std::min_element(betas.begin(), betas.end());
        const double hi = *std::max_element(betas.begin(), betas.end());
        CHECK(lo > 0.0);
        CHECK((hi - lo) / hi < 0.25);
    }
}
