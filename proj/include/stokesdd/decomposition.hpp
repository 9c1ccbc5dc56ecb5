/// @file decomposition.hpp
/// @brief Dual/primal interface splitting, jump operators B_Delta and
///        B_{Delta,D}, the edge-average change of basis, the p_Gamma
///        selection, and the partially assembled operator with its coarse
///        Schur complement.
#pragma once

#include <optional>
#include <utility>

#include "stokesdd/mesh_fem.hpp"

namespace stokesdd {

enum class PrimalChoice { CornerOnly, CornerPlusEdgeAverage };
enum class DofClass { Interior, Dual, PrimalCorner };

/// An open edge of the subdomain interface: the m-1 velocity nodes strictly
/// between two corners, shared by exactly two subdomains. The fixed edge
/// normal points from sub_lo to sub_hi (+x for vertical, +y for horizontal
/// edges).
struct InterfaceEdge {
    int sub_lo = -1, sub_hi = -1;
    int normal_comp = 0;     // 0: vertical edge, 1: horizontal edge
    std::vector<int> nodes;  // ordered by increasing coordinate
};

struct InterfaceClassification {
    PrimalChoice primal_choice = PrimalChoice::CornerOnly;
    std::vector<DofClass> vnode_class;  // per velocity node (eliminated -> Interior)
    std::vector<InterfaceEdge> edges;
    std::vector<int> corner_nodes;            // ascending node ids
    std::vector<int> corner_rank;             // node -> corner index or -1
    std::vector<int> node_edge;               // node -> edge index or -1
    std::vector<int> node_kpos;               // node -> position along its edge
    std::vector<std::vector<int>> sub_edges;  // per subdomain, ascending

    int n_corners() const { return static_cast<int>(corner_nodes.size()); }
    /// Primal velocity dof count: two per corner node, plus one normal
    /// edge-average dof per edge under CornerPlusEdgeAverage.
    int n_primal() const {
        return 2 * n_corners() +
               (primal_choice == PrimalChoice::CornerPlusEdgeAverage
                    ? static_cast<int>(edges.size())
                    : 0);
    }
    /// All dual dofs are shared by exactly two subdomains.
    double delta_dagger() const { return 0.5; }
};

InterfaceClassification classify_dofs(const StructuredMesh& mesh,
                                      const DofMap& dofmap, PrimalChoice choice);

/// Per-edge transformation of the normal velocity components of the dual
/// nodes: nodal basis -> {average-carrying dof, zero-average complement}.
/// With weights c_k (trace integrals of the P1 hats over the open edge) and
/// C = sum c_k, the carrier column is the all-ones vector and the dual columns
/// are e_k - (c_k/C) * ones for k = 1..n-1.
struct EdgeBasisTransform {
    int edge = -1;
    std::vector<double> weights;
    double weight_sum = 0.0;

    int n() const { return static_cast<int>(weights.size()); }
    /// abz = (a, z_1..z_{n-1}) -> nodal values.
    void to_nodal(std::span<const double> abz, std::span<double> w) const;
    /// nodal values -> (a, z_1..z_{n-1}).
    void from_nodal(std::span<const double> w, std::span<double> abz) const;
};

struct ChangeOfBasis {
    std::vector<EdgeBasisTransform> per_edge;  // aligned with classification.edges
};

ChangeOfBasis build_edge_average_basis(const StructuredMesh& mesh,
                                       const InterfaceClassification& cls);

/// One dual velocity dof of one subdomain copy, identified by its node slot.
/// Under CornerPlusEdgeAverage the normal component of the first edge node
/// carries the primal average and is absent from the dual set.
struct DualDofRef {
    int node = -1;
    int comp = 0;
    int edge = -1;
    int kpos = 0;
};

struct JumpOperators {
    int n_dual_total = 0;
    int n_lambda = 0;
    std::vector<int> sub_offset;                  // per subdomain
    std::vector<std::vector<DualDofRef>> sub_duals;  // ordered by (node, comp)
    std::vector<std::pair<int, int>> pairs;       // global dual ids (lo, hi) per row
    std::vector<double> delta;                    // delta^dagger per dual dof
    SparseMatrix B_delta;                         // rows: +1 at lo, -1 at hi
    SparseMatrix B_delta_D;                       // entrywise delta-scaled
};

JumpOperators build_jump_operators(const StructuredMesh& mesh,
                                   const InterfaceClassification& cls);

enum class PGammaMode { FullBoundary, OnePerSubdomain, Empty };

struct PressureSplit {
    PGammaMode mode = PGammaMode::Empty;
    bool use_li05_coarse = false;
    std::vector<int> p_gamma;     // ascending global pressure ids
    std::vector<int> p_interior;  // complement, ascending
};

PressureSplit select_pressure_split(const StructuredMesh& mesh, const DofMap& dofmap,
                                    PGammaMode mode, PrimalChoice primal,
                                    bool use_li05_coarse);

/// The partially assembled system. Vector layout: per subdomain a contiguous
/// r-block (u_I, p_I, u_Delta in the transformed basis), then the global
/// primal velocity dofs. Pressure dofs stay in the nodal basis throughout;
/// the li05 variant factors the per-subdomain saddle blocks in
/// singular-consistent mode and carries the subdomain constants in the
/// coarse problem.
class TildeSystem {
public:
    struct SubdomainBlock {
        int sub = -1;
        // Transformed local operators over the subdomain's full local dof set
        // (all kept velocity dofs of its closure x all touched pressures).
        SparseMatrix Ahat, Bhat;
        std::vector<double> fhat;
        std::vector<int> vnodes;        // global node ids, local velocity dof = 2*ln+c
        std::vector<int> pdofs;         // global pressure ids

        // Local velocity indices by class, pressure indices by split.
        std::vector<int> uI_lv;
        std::vector<int> dual_lv;       // aligned with jumps.sub_duals[sub]
        std::vector<int> pi_lv;
        std::vector<int> pi_gids;       // global primal ids, aligned with pi_lv
        std::vector<int> pr_lp;         // local pressure indices in the r block
        std::vector<int> pgamma_lp;     // local pressure indices in p_Gamma
        std::vector<int> pgamma_rows;   // their global p_Gamma row ids

        SparseMatrix Arr;               // r x r saddle block
        /// Plain factorization of Arr; in li05 mode a bordered factorization
        /// of [Arr n; n^T 0] with n the constant-pressure direction, which
        /// realizes the solve restricted to zero-average subdomain pressures
        /// whether or not Arr itself is singular.
        Factorization Arr_f;
        bool bordered = false;
        SparseMatrix ArPi;              // r x n_pi_local
        SparseMatrix PiPi;              // n_pi_local x n_pi_local
        std::vector<double> Arc;        // li05: r-column of the subdomain constant
        std::vector<double> B0_pi;      // li05: flux row over pi_lv

        /// Subdomain solve of the r block (border-aware).
        std::vector<double> solve_r(std::span<const double> b) const;

        int r_offset = 0;
        int n_uI() const { return static_cast<int>(uI_lv.size()); }
        int n_p() const { return static_cast<int>(pr_lp.size()); }
        int n_dual() const { return static_cast<int>(dual_lv.size()); }
        int r_dim() const { return n_uI() + n_p() + n_dual(); }
    };

    const StructuredMesh* mesh = nullptr;
    PrimalChoice primal = PrimalChoice::CornerOnly;
    PGammaMode pmode = PGammaMode::Empty;
    bool li05 = false;

    std::vector<SubdomainBlock> subs;
    JumpOperators jumps;
    ChangeOfBasis cob;  // empty for CornerOnly
    std::vector<int> p_gamma;
    std::vector<int> corner_nodes;  // primal gid 2k(+c) belongs to corner_nodes[k]
    std::vector<InterfaceEdge> edges;
    std::vector<std::vector<int>> sub_edges;

    int n_pi = 0;
    int n_pgamma = 0;
    int n_lambda = 0;
    int total_dim = 0;
    int pi_offset = 0;
    double h = 0.0;

    SparseMatrix S;  // coarse problem (n_pi [+ N] square)
    Factorization S_f;

    SparseMatrix Bc;  // (n_pgamma + n_lambda) x total_dim
    std::vector<std::pair<int, int>> lambda_slots;  // tilde slots (lo, hi)

    /// Whether the underlying partially assembled operator is singular
    /// (p_Gamma empty with the divergence-free edge constraints enforced).
    bool atilde_singular() const {
        return pmode == PGammaMode::Empty &&
               primal == PrimalChoice::CornerPlusEdgeAverage;
    }

    int x_dim() const { return n_pgamma + n_lambda; }

    /// Solution of the partially assembled system: two subdomain solves and
    /// one coarse solve per application.
    std::vector<double> apply_inverse(std::span<const double> rhs) const;

    /// Forward product with the partially assembled operator.
    std::vector<double> apply(std::span<const double> x) const;

    /// Load vector in the tilde layout (dual copies carry their own
    /// subdomain's contribution, primal entries are assembled).
    std::vector<double> load_vector() const;

    std::vector<double> apply_Bc(std::span<const double> x_tilde) const;
    std::vector<double> apply_Bc_transpose(std::span<const double> y) const;

    /// Tilde-layout vector with 1 on every pressure slot (the pressure part
    /// of the null vector of the big saddle system).
    std::vector<double> pressure_ones() const;

    /// The dual flux vector [B_IDelta^T B_GammaDelta^T][1;1] over the tilde
    /// dual slots.
    std::vector<double> dual_flux_vector() const;

    int dual_slot(int sub, int local_dual) const {
        return subs[sub].r_offset + subs[sub].n_uI() + subs[sub].n_p() + local_dual;
    }

    /// Assembles the full sparse partially assembled matrix (oracle use).
    SparseMatrix assemble_monolithic() const;
};

TildeSystem build_tilde_system(const StructuredMesh& mesh, const DofMap& dofmap,
                               std::span<const SubdomainOperators> subops,
                               const InterfaceClassification& cls,
                               const ChangeOfBasis& cob, const JumpOperators& jumps,
                               const PressureSplit& split, int workers = 0);

/// Monolithic factorization of the partially assembled matrix, consistent in
/// the singular case. Independent solve path used as an oracle and as the
/// singular-consistent realization of the reduced system.
class MonolithicTilde {
public:
    explicit MonolithicTilde(const TildeSystem& ts);
    std::vector<double> apply_inverse(std::span<const double> rhs) const;

private:
    Factorization fac_;
};

}  // namespace stokesdd
