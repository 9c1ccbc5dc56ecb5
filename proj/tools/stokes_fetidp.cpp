// Command-line driver: single solves, table presets, and convergence studies
// for the FETI-DP Stokes solver.
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "stokesdd/bench.hpp"

using namespace stokesdd;

namespace {

EmitFormat format_from_string(const std::string& s) {
    if (s == "csv") return EmitFormat::Csv;
    if (s == "json") return EmitFormat::Json;
    if (s == "markdown") return EmitFormat::Markdown;
    throw ConfigError("unknown format '" + s + "' (expected csv|json|markdown)");
}

std::string fmtrate(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

void print_result_line(const CaseResult& r) {
    std::printf(
        "%s pgamma=%s primal=%s precond=%s nsub=%dx%d H/h=%d  iters=%d  "
        "lambda=[%.4g, %.4g]  err_u_H1=%.4g err_p_L2=%.4g  %s%s\n",
        to_string(r.config.element).c_str(), to_string(r.config.pgamma).c_str(),
        to_string(r.config.primal).c_str(), to_string(r.config.precond).c_str(),
        r.config.nsub, r.config.nsub, r.config.m, r.iterations, r.lambda_min,
        r.lambda_max, r.err_u_h1, r.err_p_l2,
        r.converged ? "converged" : "NOT CONVERGED",
        r.bound_available ? "" : " (no condition number bound)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FETI-DP solver benchmarks for 2D incompressible Stokes"};
    app.require_subcommand(1);

    // ---- solve ----
    auto* solve = app.add_subcommand("solve", "run a single configuration");
    std::string element = "dp", pgamma = "empty", primal = "corner",
                precond = "lumped", out_path, format = "csv", dump_dir;
    int nsub = 4, hh = 8, maxit = 500;
    double rtol = 1e-6;
    bool li05 = false;
    solve->add_option("--element", element, "dp|th");
    solve->add_option("--pgamma", pgamma, "full|one|empty");
    solve->add_option("--primal", primal, "corner|corner-edge");
    solve->add_option("--precond", precond, "lumped|dirichlet|none");
    solve->add_option("--nsub", nsub, "subdomains per direction");
    solve->add_option("--hh", hh, "cells per subdomain side (H/h)");
    solve->add_flag("--li05", li05, "coarse problem with subdomain constant pressures");
    solve->add_option("--rtol", rtol, "PCG relative residual tolerance");
    solve->add_option("--maxit", maxit, "PCG iteration cap");
    solve->add_option("--out", out_path, "write the result to this file");
    solve->add_option("--format", format, "csv|json|markdown");
    solve->add_option("--dump", dump_dir, "dump system matrices into this directory");

    // ---- table ----
    auto* table = app.add_subcommand("table", "run a benchmark preset");
    std::string preset = "table1", table_out, table_format = "csv";
    table->add_option("--preset", preset, "table1|table2|table3|table4");
    table->add_option("--out", table_out, "output file");
    table->add_option("--format", table_format, "csv|json|markdown");

    // ---- convergence ----
    auto* conv = app.add_subcommand("convergence",
                                    "manufactured-solution refinement study");
    std::string conv_element = "th";
    int levels = 4, conv_nsub = 2, m0 = 4;
    conv->add_option("--element", conv_element, "dp|th");
    conv->add_option("--levels", levels, "number of refinement levels");
    conv->add_option("--nsub", conv_nsub, "subdomains per direction");
    conv->add_option("--m0", m0, "coarsest cells per subdomain side");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // help/version exit clean, bad flags are config errors
    }

    try {
        if (*solve) {
            CaseConfig cfg;
            cfg.element = element_from_string(element);
            cfg.pgamma = pgamma_from_string(pgamma);
            cfg.primal = primal_from_string(primal);
            cfg.precond = precond_from_string(precond);
            cfg.nsub = nsub;
            cfg.m = hh;
            cfg.li05 = li05;
            cfg.rtol = rtol;
            cfg.maxit = maxit;
            validate(cfg);
            if (!dump_dir.empty()) dump_matrices(cfg, dump_dir);
            const auto res = run_case(cfg);
            print_result_line(res);
            if (!out_path.empty()) {
                const std::vector<CaseResult> rs = {res};
                emit(rs, format_from_string(format), out_path);
            }
            return res.converged ? 0 : 2;
        }
        if (*table) {
            const auto configs = preset_configs(preset);
            const auto results = run_table(configs);
            for (const auto& r : results) print_result_line(r);
            if (!table_out.empty())
                emit(results, format_from_string(table_format), table_out);
            for (const auto& r : results)
                if (!r.converged) return 2;
            return 0;
        }
        if (*conv) {
            CaseConfig cfg;
            cfg.element = element_from_string(conv_element);
            cfg.nsub = conv_nsub;
            if (cfg.element == ElementKind::TaylorHood) {
                cfg.pgamma = PGammaMode::FullBoundary;
            } else {
                cfg.pgamma = PGammaMode::OnePerSubdomain;
            }
            std::printf("%6s %6s %12s %8s %12s\n", "H/h", "h", "err_u_H1", "rate",
                        "err_p_L2");
            double prev = 0.0;
            bool all_converged = true;
            for (int level = 0; level < levels; ++level) {
                cfg.m = m0 << level;
                validate(cfg);
                const auto res = run_case(cfg);
                all_converged = all_converged && res.converged;
                const double h = 1.0 / (cfg.nsub * cfg.m);
                std::printf("%6d %6.4f %12.5g %8s %12.5g\n", cfg.m, h, res.err_u_h1,
                            level > 0 ? fmtrate(prev / res.err_u_h1).c_str() : "-",
                            res.err_p_l2);
                prev = res.err_u_h1;
            }
            return all_converged ? 0 : 2;
        }
    } catch (const ConfigError& err) {
        std::cerr << "configuration error: " << err.what() << "\n";
        return 1;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    return 0;
}
