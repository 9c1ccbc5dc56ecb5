/// @file mesh_fem.hpp
/// @brief Structured triangulations of the unit square, the two mixed finite
///        elements (criss-cross P1-P0 macroelement and modified Taylor-Hood),
///        subdomain-wise and global Stokes assembly, the manufactured
///        solution, and discretization error norms.
#pragma once

#include <array>
#include <vector>

#include "stokesdd/sparse.hpp"

namespace stokesdd {

enum class ElementKind { MacroDP, TaylorHood };

/// Uniform triangulation of [0,1]^2 aligned with an nsub_x x nsub_y subdomain
/// grid, m fine cells per subdomain side.
///
/// MacroDP: each h-square is split by both diagonals into 4 triangles around
/// an added center node; pressure is one constant per square.
/// TaylorHood: each h-square is split by its lower-left -> upper-right
/// diagonal; pressure is continuous P1 on the 2h mesh split the same way
/// (the velocity mesh is its uniform refinement).
struct StructuredMesh {
    int nsub_x = 0, nsub_y = 0, m = 0;
    ElementKind element = ElementKind::MacroDP;
    int ncx = 0, ncy = 0;       // fine cells per direction
    double hx = 0.0, hy = 0.0;  // fine cell size

    int n_grid_nodes = 0;  // (ncx+1)*(ncy+1); MacroDP appends cell centers
    int n_vnodes = 0;
    std::vector<std::array<double, 2>> vnode_xy;

    std::vector<std::array<int, 3>> tris;  // CCW velocity connectivity
    std::vector<int> tri_sub;              // owning subdomain per triangle

    int n_pdofs = 0;
    std::vector<std::array<double, 2>> pdof_xy;
    /// Pressure dofs supported on each triangle: MacroDP {cell,-1,-1},
    /// TaylorHood the 3 nodes of the coarse triangle containing it.
    std::vector<std::array<int, 3>> tri_pdofs;
    /// TaylorHood pressure-mesh connectivity (empty for MacroDP).
    std::vector<std::array<int, 3>> coarse_tris;

    int grid_node(int gi, int gj) const { return gj * (ncx + 1) + gi; }
    int cell_index(int ci, int cj) const { return cj * ncx + ci; }
    int subdomain_of_cell(int ci, int cj) const {
        return (cj / m) * nsub_x + (ci / m);
    }
    int n_subdomains() const { return nsub_x * nsub_y; }
    double h() const { return hx; }

    /// Piecewise pressure value of the dof vector p at a point inside
    /// triangle t.
    double pressure_at(std::span<const double> p, int t, double x, double y) const;
};

StructuredMesh build_mesh(int nsub_x, int nsub_y, int m, ElementKind element);

enum class VelCategory { Eliminated, Interior, InterfaceEdge, InterfaceCorner };

/// Degree-of-freedom classification: velocity nodes by location relative to
/// the subdomain interface (domain-boundary nodes carry no unknowns),
/// pressure dofs by subdomain ownership.
struct DofMap {
    std::vector<VelCategory> vnode_cat;
    std::vector<std::vector<int>> vnode_owners;  // sorted subdomain ids
    std::vector<std::vector<int>> pdof_owners;

    /// Global id of kept velocity dof (node, component) or -1 if eliminated.
    std::vector<int> vel_dof;
    int n_vel_dofs = 0;

    bool pressure_shared(int p) const { return pdof_owners[p].size() >= 2; }
    int n_shared_pdofs() const;
};

DofMap build_dof_map(const StructuredMesh& mesh);

/// Per-subdomain Neumann-type operators in local numbering. Local velocity
/// dofs are the kept dofs on nodes of the subdomain closure; local pressure
/// dofs are all pressure dofs its triangles touch (rows of shared pressure
/// dofs hold this subdomain's partial contribution).
struct SubdomainOperators {
    int sub = -1;
    std::vector<int> vnodes;  // global velocity node ids, ascending
    std::vector<int> vdofs;   // local dof -> global kept dof (2 per node)
    std::vector<int> pdofs;   // local pressure -> global pressure id, ascending
    SparseMatrix A;           // velocity stiffness
    SparseMatrix B;           // divergence, rows = local pressures
    std::vector<double> f;    // load
};

SubdomainOperators assemble_subdomain(const StructuredMesh& mesh,
                                      const DofMap& dofmap, int sub);

struct AssembledStokesSystem {
    SparseMatrix A;  // kept velocity dofs, SPD
    SparseMatrix B;  // pressure x velocity
    SparseMatrix Z;  // pressure mass
    std::vector<double> f;
};

AssembledStokesSystem assemble_global(const StructuredMesh& mesh,
                                      const DofMap& dofmap);

/// Closed-form benchmark fields: divergence-free velocity vanishing on the
/// boundary, pressure x^2 - y^2, and the body force f = -Laplace(u) + grad(p).
struct ManufacturedPoint {
    std::array<double, 2> u;
    std::array<std::array<double, 2>, 2> grad_u;  // grad_u[i][j] = du_i/dx_j
    double p;
    std::array<double, 2> f;
};

ManufacturedPoint manufactured_fields(double x, double y);

struct ErrorNorms {
    double h1_u = 0.0;  // velocity H1-seminorm error
    double l2_u = 0.0;
    double l2_p = 0.0;  // pressure L2 error, means matched
};

/// Errors of a discrete solution (nodal velocity over all velocity nodes,
/// eliminated entries zero; pressure dof vector) against the manufactured
/// fields, via degree-4 element quadrature.
ErrorNorms error_norms(const StructuredMesh& mesh,
                       std::span<const double> u_nodal,
                       std::span<const double> p);

/// Monolithic direct solution of the assembled saddle system with the last
/// pressure dof pinned to zero, pressure shifted to zero mean afterwards.
/// Returns nodal velocity (eliminated dofs zero) and the pressure vector.
struct DirectSolution {
    std::vector<double> u_nodal;
    std::vector<double> p;
};

DirectSolution solve_stokes_direct(const StructuredMesh& mesh, const DofMap& dofmap);

/// Integral of the discrete pressure over the domain (for mean shifts).
double pressure_integral(const StructuredMesh& mesh, std::span<const double> p);

}  // namespace stokesdd
