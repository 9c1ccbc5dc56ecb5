/// @file bench.hpp
/// @brief Configuration-driven experiment runner: single cases, table
///        presets, convergence studies, machine-readable output, and matrix
///        dumps.
#pragma once

#include <stdexcept>
#include <string>

#include "stokesdd/solver.hpp"

namespace stokesdd {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class PrecondKind { Lumped, Dirichlet, None };

struct CaseConfig {
    ElementKind element = ElementKind::MacroDP;
    PGammaMode pgamma = PGammaMode::Empty;
    PrimalChoice primal = PrimalChoice::CornerOnly;
    PrecondKind precond = PrecondKind::Lumped;
    int nsub = 4;  // subdomain grid is nsub x nsub
    int m = 8;     // cells per subdomain side (H/h)
    double rtol = 1e-6;
    int maxit = 500;
    bool li05 = false;
    unsigned seed = 0;  // echoed through for randomized harnesses
};

/// Throws ConfigError naming the violated combination rule.
void validate(const CaseConfig& cfg);

struct CaseResult {
    CaseConfig config;
    int iterations = 0;
    bool converged = false;
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    double err_u_h1 = 0.0;
    double err_p_l2 = 0.0;
    /// False for the Dirichlet preconditioner with corner-only primal space:
    /// the method runs but carries no condition number bound.
    bool bound_available = true;
    double assembly_s = 0.0;
    double factor_s = 0.0;
    double solve_s = 0.0;
    double per_iteration_s = 0.0;
};

CaseResult run_case(const CaseConfig& cfg);

/// Runs every config `repeat` times (results concatenated pass by pass).
/// Cases are independent; with parallel_cases they run across the worker
/// pool, with output order fixed by index either way.
std::vector<CaseResult> run_table(std::span<const CaseConfig> configs,
                                  int repeat = 1, bool parallel_cases = false);

/// Hard-coded benchmark grids: m=8 with nsub in {4,8,16,24,32}, then nsub=8
/// with m in {4,8,16,24,32}, for each of the three p_Gamma variants.
/// Names: table1 (lumped/corner), table2 (lumped/corner-edge),
/// table3 (dirichlet/corner), table4 (dirichlet/corner-edge).
std::vector<CaseConfig> preset_configs(const std::string& name);

enum class EmitFormat { Csv, Json, Markdown };

std::string render(std::span<const CaseResult> results, EmitFormat format);
void emit(std::span<const CaseResult> results, EmitFormat format,
          const std::string& path);
std::vector<CaseResult> parse_results_json(const std::string& text);

/// Writes A, B, Z, f, B_Delta (MatrixMarket) and the dof-category sidecar
/// into dir; adds dense G and the preconditioner inverse when the problem is
/// small enough. Total dof count capped at 200000.
void dump_matrices(const CaseConfig& cfg, const std::string& dir);

std::string to_string(ElementKind e);
std::string to_string(PGammaMode m);
std::string to_string(PrimalChoice p);
std::string to_string(PrecondKind p);
ElementKind element_from_string(const std::string& s);
PGammaMode pgamma_from_string(const std::string& s);
PrimalChoice primal_from_string(const std::string& s);
PrecondKind precond_from_string(const std::string& s);

}  // namespace stokesdd
