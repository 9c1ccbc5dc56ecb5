#include "stokesdd/bench.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>

#include "stokesdd/parallel.hpp"

namespace stokesdd {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int precision = 10) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    return buf;
}

}  // namespace

std::string to_string(ElementKind e) {
    return e == ElementKind::MacroDP ? "dp" : "th";
}
std::string to_string(PGammaMode m) {
    switch (m) {
        case PGammaMode::FullBoundary: return "full";
        case PGammaMode::OnePerSubdomain: return "one";
        default: return "empty";
    }
}
std::string to_string(PrimalChoice p) {
    return p == PrimalChoice::CornerOnly ? "corner" : "corner-edge";
}
std::string to_string(PrecondKind p) {
    switch (p) {
        case PrecondKind::Lumped: return "lumped";
        case PrecondKind::Dirichlet: return "dirichlet";
        default: return "none";
    }
}

ElementKind element_from_string(const std::string& s) {
    if (s == "dp") return ElementKind::MacroDP;
    if (s == "th") return ElementKind::TaylorHood;
    throw ConfigError("unknown element '" + s + "' (expected dp|th)");
}
PGammaMode pgamma_from_string(const std::string& s) {
    if (s == "full") return PGammaMode::FullBoundary;
    if (s == "one") return PGammaMode::OnePerSubdomain;
    if (s == "empty") return PGammaMode::Empty;
    throw ConfigError("unknown pgamma '" + s + "' (expected full|one|empty)");
}
PrimalChoice primal_from_string(const std::string& s) {
    if (s == "corner") return PrimalChoice::CornerOnly;
    if (s == "corner-edge") return PrimalChoice::CornerPlusEdgeAverage;
    throw ConfigError("unknown primal '" + s + "' (expected corner|corner-edge)");
}
PrecondKind precond_from_string(const std::string& s) {
    if (s == "lumped") return PrecondKind::Lumped;
    if (s == "dirichlet") return PrecondKind::Dirichlet;
    if (s == "none") return PrecondKind::None;
    throw ConfigError("unknown precond '" + s + "' (expected lumped|dirichlet|none)");
}

void validate(const CaseConfig& cfg) {
    if (cfg.nsub < 2) throw ConfigError("nsub must be at least 2");
    if (cfg.m < 2) throw ConfigError("m (H/h) must be at least 2");
    if (cfg.element == ElementKind::TaylorHood && cfg.m % 2 != 0)
        throw ConfigError("Taylor-Hood requires even m (doubled pressure mesh size)");
    if (cfg.pgamma == PGammaMode::FullBoundary && cfg.element != ElementKind::TaylorHood)
        throw ConfigError("pgamma=full requires element=th (continuous pressure)");
    if (cfg.pgamma != PGammaMode::FullBoundary && cfg.element != ElementKind::MacroDP)
        throw ConfigError("pgamma=" + to_string(cfg.pgamma) +
                          " requires element=dp (discontinuous pressure)");
    if (cfg.li05 && cfg.pgamma != PGammaMode::Empty)
        throw ConfigError("li05 requires pgamma=empty");
    if (cfg.pgamma == PGammaMode::Empty &&
        cfg.primal == PrimalChoice::CornerPlusEdgeAverage && !cfg.li05)
        throw ConfigError("empty+edge requires li05");
    if (cfg.maxit < 1) throw ConfigError("maxit must be positive");
    if (!(cfg.rtol > 0.0)) throw ConfigError("rtol must be positive");
}

CaseResult run_case(const CaseConfig& cfg) {
    validate(cfg);
    CaseResult res;
    res.config = cfg;

    auto t0 = Clock::now();
    const auto mesh = build_mesh(cfg.nsub, cfg.nsub, cfg.m, cfg.element);
    const auto dofmap = build_dof_map(mesh);
    std::vector<SubdomainOperators> subops(mesh.n_subdomains());
    parallel_for(mesh.n_subdomains(),
                 [&](int s) { subops[s] = assemble_subdomain(mesh, dofmap, s); });
    res.assembly_s = seconds_since(t0);

    t0 = Clock::now();
    const auto cls = classify_dofs(mesh, dofmap, cfg.primal);
    ChangeOfBasis cob;
    if (cfg.primal == PrimalChoice::CornerPlusEdgeAverage)
        cob = build_edge_average_basis(mesh, cls);
    const auto jumps = build_jump_operators(mesh, cls);
    const auto split =
        select_pressure_split(mesh, dofmap, cfg.pgamma, cfg.primal, cfg.li05);
    const auto ts =
        build_tilde_system(mesh, dofmap, subops, cls, cob, jumps, split);

    GOperator g_op(ts);
    ApplyFn minv;
    std::optional<LumpedPreconditioner> lumped;
    std::optional<DirichletPreconditioner> dirichlet;
    switch (cfg.precond) {
        case PrecondKind::Lumped:
            lumped.emplace(ts);
            minv = lumped->as_fn();
            break;
        case PrecondKind::Dirichlet:
            dirichlet.emplace(ts);
            minv = dirichlet->as_fn();
            break;
        default:
            minv = identity_preconditioner();
    }
    res.factor_s = seconds_since(t0);

    t0 = Clock::now();
    const auto load = ts.load_vector();
    const auto g = g_op.rhs(load);
    const auto rep = pcg(g_op.as_fn(), minv, g, cfg.rtol, cfg.maxit);
    res.solve_s = seconds_since(t0);

    const auto fields = back_substitute(ts, rep.solution, load);
    const auto errs = error_norms(mesh, fields.u_nodal, fields.p);

    res.iterations = rep.iterations;
    res.converged = rep.converged;
    res.lambda_min = rep.lambda_min_est;
    res.lambda_max = rep.lambda_max_est;
    res.err_u_h1 = errs.h1_u;
    res.err_p_l2 = errs.l2_p;
    res.bound_available = !(cfg.precond == PrecondKind::Dirichlet &&
                            cfg.primal == PrimalChoice::CornerOnly);
    res.per_iteration_s =
        rep.iterations > 0 ? res.solve_s / rep.iterations : 0.0;
    return res;
}

std::vector<CaseResult> run_table(std::span<const CaseConfig> configs, int repeat,
                                  bool parallel_cases) {
    for (size_t i = 0; i < configs.size(); ++i) {
        try {
            validate(configs[i]);
        } catch (const ConfigError& err) {
            throw ConfigError("config " + std::to_string(i) + ": " + err.what());
        }
    }
    std::vector<CaseResult> all(configs.size() * std::max(repeat, 0));
    for (int pass = 0; pass < repeat; ++pass) {
        auto run_one = [&](int i) {
            all[pass * configs.size() + i] = run_case(configs[i]);
        };
        if (parallel_cases)
            parallel_for(static_cast<int>(configs.size()), run_one);
        else
            for (int i = 0; i < static_cast<int>(configs.size()); ++i) run_one(i);
    }
    return all;
}

std::vector<CaseConfig> preset_configs(const std::string& name) {
    PrecondKind precond;
    PrimalChoice primal;
    if (name == "table1") {
        precond = PrecondKind::Lumped;
        primal = PrimalChoice::CornerOnly;
    } else if (name == "table2") {
        precond = PrecondKind::Lumped;
        primal = PrimalChoice::CornerPlusEdgeAverage;
    } else if (name == "table3") {
        precond = PrecondKind::Dirichlet;
        primal = PrimalChoice::CornerOnly;
    } else if (name == "table4") {
        precond = PrecondKind::Dirichlet;
        primal = PrimalChoice::CornerPlusEdgeAverage;
    } else {
        throw ConfigError("unknown preset '" + name + "' (expected table1..table4)");
    }

    const int sizes[5] = {4, 8, 16, 24, 32};
    std::vector<CaseConfig> configs;
    for (PGammaMode pg :
         {PGammaMode::FullBoundary, PGammaMode::OnePerSubdomain, PGammaMode::Empty}) {
        CaseConfig base;
        base.element = pg == PGammaMode::FullBoundary ? ElementKind::TaylorHood
                                                      : ElementKind::MacroDP;
        base.pgamma = pg;
        base.primal = primal;
        base.precond = precond;
        base.li05 = pg == PGammaMode::Empty &&
                    primal == PrimalChoice::CornerPlusEdgeAverage;
        for (int nsub : sizes) {
            CaseConfig c = base;
            c.m = 8;
            c.nsub = nsub;
            configs.push_back(c);
        }
        for (int m : sizes) {
            CaseConfig c = base;
            c.nsub = 8;
            c.m = m;
            configs.push_back(c);
        }
    }
    return configs;
}

namespace {

std::string csv_render(std::span<const CaseResult> results) {
    std::string out =
        "element,pgamma,primal,precond,nsub,m,iters,lambda_min,lambda_max,"
        "err_u_h1,err_p_l2,assembly_s,factor_s,solve_s\n";
    for (const auto& r : results) {
        const auto& c = r.config;
        out += to_string(c.element) + "," + to_string(c.pgamma) + "," +
               to_string(c.primal) + "," + to_string(c.precond) + "," +
               std::to_string(c.nsub) + "," + std::to_string(c.m) + "," +
               std::to_string(r.iterations) + "," + fmt(r.lambda_min) + "," +
               fmt(r.lambda_max) + "," + fmt(r.err_u_h1) + "," + fmt(r.err_p_l2) +
               "," + fmt(r.assembly_s, 6) + "," + fmt(r.factor_s, 6) + "," +
               fmt(r.solve_s, 6) + "\n";
    }
    return out;
}

nlohmann::json to_json(const CaseResult& r) {
    const auto& c = r.config;
    return nlohmann::json{
        {"element", to_string(c.element)},
        {"pgamma", to_string(c.pgamma)},
        {"primal", to_string(c.primal)},
        {"precond", to_string(c.precond)},
        {"nsub", c.nsub},
        {"m", c.m},
        {"rtol", c.rtol},
        {"maxit", c.maxit},
        {"li05", c.li05},
        {"seed", c.seed},
        {"iterations", r.iterations},
        {"converged", r.converged},
        {"lambda_min", r.lambda_min},
        {"lambda_max", r.lambda_max},
        {"err_u_h1", r.err_u_h1},
        {"err_p_l2", r.err_p_l2},
        {"bound_available", r.bound_available},
        {"timings",
         {{"assembly_s", r.assembly_s},
          {"factor_s", r.factor_s},
          {"solve_s", r.solve_s},
          {"per_iteration_s", r.per_iteration_s}}}};
}

std::string variant_label(PGammaMode m) {
    switch (m) {
        case PGammaMode::FullBoundary: return "continuous pressure";
        case PGammaMode::OnePerSubdomain: return "discontinuous pressure";
        default: return "p_gamma empty";
    }
}

std::string markdown_render(std::span<const CaseResult> results) {
    // Benchmark-table grouping: one block per p_Gamma variant when the list
    // factors as variants x identical (nsub, m) rows; flat table otherwise.
    std::map<PGammaMode, std::vector<const CaseResult*>> by_variant;
    for (const auto& r : results) by_variant[r.config.pgamma].push_back(&r);
    bool grouped = by_variant.size() > 1;
    if (grouped) {
        const auto& first = by_variant.begin()->second;
        for (const auto& [mode, rows] : by_variant) {
            if (rows.size() != first.size()) grouped = false;
            for (size_t i = 0; grouped && i < rows.size(); ++i)
                if (rows[i]->config.nsub != first[i]->config.nsub ||
                    rows[i]->config.m != first[i]->config.m)
                    grouped = false;
        }
    }
    std::string out;
    if (grouped) {
        for (const auto& [mode, rows] : by_variant) {
            out += "### " + variant_label(mode) + " (" +
                   to_string(rows.front()->config.precond) + ", " +
                   to_string(rows.front()->config.primal) + ")\n\n";
            out += "| H/h | #sub | lambda_min | lambda_max | iter |\n";
            out += "|----:|-----:|-----------:|-----------:|-----:|\n";
            for (const auto* r : rows)
                out += "| " + std::to_string(r->config.m) + " | " +
                       std::to_string(r->config.nsub) + "x" +
                       std::to_string(r->config.nsub) + " | " +
                       fmt(r->lambda_min, 4) + " | " + fmt(r->lambda_max, 4) +
                       " | " + std::to_string(r->iterations) + " |\n";
            out += "\n";
        }
    } else {
        out += "| element | pgamma | primal | precond | nsub | H/h | lambda_min | "
               "lambda_max | iter | err_u_h1 | err_p_l2 |\n";
        out += "|--------|--------|--------|---------|-----:|----:|-----------:|"
               "-----------:|-----:|---------:|---------:|\n";
        for (const auto& r : results) {
            const auto& c = r.config;
            out += "| " + to_string(c.element) + " | " + to_string(c.pgamma) +
                   " | " + to_string(c.primal) + " | " + to_string(c.precond) +
                   " | " + std::to_string(c.nsub) + " | " + std::to_string(c.m) +
                   " | " + fmt(r.lambda_min, 4) + " | " + fmt(r.lambda_max, 4) +
                   " | " + std::to_string(r.iterations) + " | " +
                   fmt(r.err_u_h1, 4) + " | " + fmt(r.err_p_l2, 4) + " |\n";
        }
    }
    return out;
}

}  // namespace

std::string render(std::span<const CaseResult> results, EmitFormat format) {
    switch (format) {
        case EmitFormat::Csv: return csv_render(results);
        case EmitFormat::Markdown: return markdown_render(results);
        case EmitFormat::Json: {
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& r : results) arr.push_back(to_json(r));
            return arr.dump(2) + "\n";
        }
    }
    return {};
}

void emit(std::span<const CaseResult> results, EmitFormat format,
          const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << render(results, format);
}

std::vector<CaseResult> parse_results_json(const std::string& text) {
    const auto arr = nlohmann::json::parse(text);
    std::vector<CaseResult> results;
    for (const auto& j : arr) {
        CaseResult r;
        r.config.element = element_from_string(j.at("element"));
        r.config.pgamma = pgamma_from_string(j.at("pgamma"));
        r.config.primal = primal_from_string(j.at("primal"));
        r.config.precond = precond_from_string(j.at("precond"));
        r.config.nsub = j.at("nsub");
        r.config.m = j.at("m");
        r.config.rtol = j.at("rtol");
        r.config.maxit = j.at("maxit");
        r.config.li05 = j.at("li05");
        r.config.seed = j.at("seed");
        r.iterations = j.at("iterations");
        r.converged = j.at("converged");
        r.lambda_min = j.at("lambda_min");
        r.lambda_max = j.at("lambda_max");
        r.err_u_h1 = j.at("err_u_h1");
        r.err_p_l2 = j.at("err_p_l2");
        r.bound_available = j.at("bound_available");
        const auto& t = j.at("timings");
        r.assembly_s = t.at("assembly_s");
        r.factor_s = t.at("factor_s");
        r.solve_s = t.at("solve_s");
        r.per_iteration_s = t.at("per_iteration_s");
        results.push_back(r);
    }
    return results;
}

void dump_matrices(const CaseConfig& cfg, const std::string& dir) {
    validate(cfg);
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    const auto mesh = build_mesh(cfg.nsub, cfg.nsub, cfg.m, cfg.element);
    const auto dofmap = build_dof_map(mesh);
    const int total = dofmap.n_vel_dofs + mesh.n_pdofs;
    if (total > 200000)
        throw std::invalid_argument("dump size limit exceeded: " +
                                    std::to_string(total) + " dofs");

    const auto sys = assemble_global(mesh, dofmap);
    write_matrix_market(sys.A, dir + "/A.mtx");
    write_matrix_market(sys.B, dir + "/B.mtx");
    write_matrix_market(sys.Z, dir + "/Z.mtx");
    std::vector<Triplet> fts;
    for (int i = 0; i < dofmap.n_vel_dofs; ++i)
        if (sys.f[i] != 0.0) fts.push_back({i, 0, sys.f[i]});
    write_matrix_market(SparseMatrix::from_triplets(fts, dofmap.n_vel_dofs, 1),
                        dir + "/f.mtx");

    const auto cls = classify_dofs(mesh, dofmap, cfg.primal);
    ChangeOfBasis cob;
    if (cfg.primal == PrimalChoice::CornerPlusEdgeAverage)
        cob = build_edge_average_basis(mesh, cls);
    const auto jumps = build_jump_operators(mesh, cls);
    write_matrix_market(jumps.B_delta, dir + "/B_delta.mtx");

    std::ofstream side(dir + "/dofs.txt");
    for (int node = 0; node < mesh.n_vnodes; ++node)
        for (int c = 0; c < 2; ++c) {
            const int id = dofmap.vel_dof[2 * node + c];
            if (id < 0) continue;
            std::string cat, cl, delta = "-";
            switch (dofmap.vnode_cat[node]) {
                case VelCategory::Interior: cat = "interior"; break;
                case VelCategory::InterfaceEdge: cat = "edge"; break;
                case VelCategory::InterfaceCorner: cat = "corner"; break;
                default: cat = "eliminated";
            }
            switch (cls.vnode_class[node]) {
                case DofClass::PrimalCorner: cl = "primal"; break;
                case DofClass::Dual:
                    cl = "dual";
                    delta = "0.5";
                    break;
                default: cl = "interior";
            }
            side << "v " << id << " " << cat << " " << cl << " " << delta << " ";
            const auto& owners = dofmap.vnode_owners[node];
            for (size_t i = 0; i < owners.size(); ++i)
                side << owners[i] << (i + 1 < owners.size() ? "," : "");
            side << "\n";
        }
    const auto split =
        select_pressure_split(mesh, dofmap, cfg.pgamma, cfg.primal, cfg.li05);
    std::vector<char> in_gamma(mesh.n_pdofs, 0);
    for (int q : split.p_gamma) in_gamma[q] = 1;
    for (int q = 0; q < mesh.n_pdofs; ++q) {
        side << "p " << q << " "
             << (dofmap.pressure_shared(q) ? "shared" : "interior") << " "
             << (in_gamma[q] ? "pGamma" : "pI") << " - ";
        const auto& owners = dofmap.pdof_owners[q];
        for (size_t i = 0; i < owners.size(); ++i)
            side << owners[i] << (i + 1 < owners.size() ? "," : "");
        side << "\n";
    }
    side.close();

    if (total <= 2000) {
        std::vector<SubdomainOperators> subops(mesh.n_subdomains());
        for (int s = 0; s < mesh.n_subdomains(); ++s)
            subops[s] = assemble_subdomain(mesh, dofmap, s);
        const auto ts =
            build_tilde_system(mesh, dofmap, subops, cls, cob, jumps, split);
        GOperator g_op(ts);
        ApplyFn minv;
        std::optional<LumpedPreconditioner> lumped;
        std::optional<DirichletPreconditioner> dirichlet;
        switch (cfg.precond) {
            case PrecondKind::Lumped:
                lumped.emplace(ts);
                minv = lumped->as_fn();
                break;
            case PrecondKind::Dirichlet:
                dirichlet.emplace(ts);
                minv = dirichlet->as_fn();
                break;
            default:
                minv = identity_preconditioner();
        }
        const int dim = g_op.dim();
        auto dense_to_sparse = [&](const std::vector<double>& d) {
            std::vector<Triplet> ts2;
            for (int i = 0; i < dim; ++i)
                for (int j = 0; j < dim; ++j)
                    if (d[static_cast<size_t>(i) * dim + j] != 0.0)
                        ts2.push_back({i, j, d[static_cast<size_t>(i) * dim + j]});
            return SparseMatrix::from_triplets(ts2, dim, dim);
        };
        write_matrix_market(dense_to_sparse(dense_from_apply(g_op.as_fn(), dim)),
                            dir + "/G.mtx");
        write_matrix_market(dense_to_sparse(dense_from_apply(minv, dim)),
                            dir + "/Minv.mtx");
    }
}

}  // namespace stokesdd
