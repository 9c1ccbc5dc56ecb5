/// @file solver.hpp
/// @brief Matrix-free reduced operator G and right-hand side g, the lumped
///        and Dirichlet preconditioners, PCG with Lanczos extreme-eigenvalue
///        estimates, back substitution to full fields, and a dense spectrum
///        oracle.
#pragma once

#include <functional>

#include "stokesdd/decomposition.hpp"

namespace stokesdd {

using ApplyFn = std::function<std::vector<double>(std::span<const double>)>;

/// Reduced Schur-complement operator on X = Q_Gamma + Lambda:
/// G x = B_C (Atilde^-1 (B_C^T x)). When a monolithic factorization is
/// attached, the singular-consistent direct solve replaces the block formula.
class GOperator {
public:
    explicit GOperator(const TildeSystem& ts, const MonolithicTilde* mono = nullptr)
        : ts_(&ts), mono_(mono) {}

    int dim() const { return ts_->x_dim(); }
    int n_pgamma() const { return ts_->n_pgamma; }
    int n_lambda() const { return ts_->n_lambda; }
    const TildeSystem& tilde() const { return *ts_; }

    std::vector<double> apply(std::span<const double> x) const;

    /// g = B_C Atilde^-1 f for a tilde-layout load vector.
    std::vector<double> rhs(std::span<const double> tilde_load) const;

    /// Null vector (1_{p_Gamma}, -B_{Delta,D} [B_IDelta^T B_GammaDelta^T][1;1])
    /// of G; empty when the partially assembled operator is singular (then G
    /// is positive definite on the whole of Lambda).
    std::vector<double> null_vector() const;

    /// Defect of membership in Range(G): |<y, n>| / (|y| |n|) against the
    /// null vector n; zero when there is no null vector.
    double range_defect(std::span<const double> y) const;

    ApplyFn as_fn() const {
        return [this](std::span<const double> x) { return apply(x); };
    }

private:
    const TildeSystem* ts_;
    const MonolithicTilde* mono_;
};

/// M_L^-1 = diag(1/h^2 I_{p_Gamma}, B_{Delta,D} A_DeltaDelta B_{Delta,D}^T):
/// one sparse multiply per application, no subdomain solves.
class LumpedPreconditioner {
public:
    explicit LumpedPreconditioner(const TildeSystem& ts);
    std::vector<double> apply(std::span<const double> x) const;
    ApplyFn as_fn() const {
        return [this](std::span<const double> x) { return apply(x); };
    }

private:
    const TildeSystem* ts_;
    std::vector<SparseMatrix> a_dd_;  // per-subdomain dual-dual stiffness blocks
};

/// M_D^-1 = diag(1/h^2 I_{p_Gamma}, B_{Delta,D} H_Delta B_{Delta,D}^T) with
/// H_Delta the discrete harmonic extension: one SPD interior velocity solve
/// per subdomain per application.
class DirichletPreconditioner {
public:
    DirichletPreconditioner(const TildeSystem& ts, int workers = 0);
    std::vector<double> apply(std::span<const double> x) const;
    ApplyFn as_fn() const {
        return [this](std::span<const double> x) { return apply(x); };
    }

private:
    const TildeSystem* ts_;
    struct Block {
        SparseMatrix Avv_II, A_ID, A_DD;  // velocity-only blocks
        Factorization AII_f;
    };
    std::vector<Block> blocks_;
};

ApplyFn identity_preconditioner();

struct PcgReport {
    int iterations = 0;
    bool converged = false;
    std::vector<double> rel_residual;          // starts at 1.0, unpreconditioned
    std::vector<double> rel_residual_precond;  // sqrt(<r,z>) history, diagnostic
    SymTridiagonal lanczos;
    double lambda_min_est = 0.0;
    double lambda_max_est = 0.0;
    std::vector<double> solution;
    double wall_seconds = 0.0;
};

/// Preconditioned conjugate gradients with zero initial guess, stopping on
/// the Euclidean norm of the unpreconditioned residual relative to |b|.
/// The Lanczos tridiagonal is rebuilt from the PCG coefficients and its
/// extreme eigenvalues reported as the spectrum estimates. A nonpositive
/// <z,r> throws (it cannot occur for an SPD preconditioner on Range(G)).
PcgReport pcg(const ApplyFn& apply_a, const ApplyFn& apply_minv,
              std::span<const double> b, double rtol = 1e-6, int maxit = 500);

struct SolutionFields {
    std::vector<double> u_nodal;  // 2 * n_vnodes, eliminated entries zero
    std::vector<double> p;        // zero mean
    double dual_jump_rel = 0.0;   // |B_Delta u_Delta| / |u_Delta| before averaging
};

/// Recovers (u_I, p_I, u_Delta, u_Pi) = Atilde^-1 (f - B_C^T y) from the
/// converged y = (p_Gamma, lambda), averages the dual copies into a
/// continuous velocity, and shifts the pressure to zero mean.
SolutionFields back_substitute(const TildeSystem& ts, std::span<const double> y,
                               std::span<const double> tilde_load,
                               const MonolithicTilde* mono = nullptr);

/// Dense generalized spectrum of M^-1 G restricted to Range(G), via explicit
/// formation on unit vectors (dimension capped at 2000). Ascending.
std::vector<double> spectrum_oracle(const GOperator& g, const ApplyFn& apply_minv);

/// Explicit dense matrix of a linear operator (column-major application to
/// unit vectors), row-major storage.
std::vector<double> dense_from_apply(const ApplyFn& fn, int dim);

}  // namespace stokesdd
