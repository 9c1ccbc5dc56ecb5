#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "stokesdd/bench.hpp"

using namespace stokesdd;

namespace {

CaseConfig make_config(ElementKind ek, PGammaMode pg, PrimalChoice pc, PrecondKind mk,
                       int nsub, int m, bool li05 = false) {
    CaseConfig cfg;
    cfg.element = ek;
    cfg.pgamma = pg;
    cfg.primal = pc;
    cfg.precond = mk;
    cfg.nsub = nsub;
    cfg.m = m;
    cfg.li05 = li05;
    return cfg;
}

// Everything but the timing columns.
std::vector<std::string> csv_payload(const std::string& csv) {
    std::vector<std::string> rows;
    std::istringstream in(csv);
    std::string line;
    while (std::getline(in, line)) {
        size_t pos = 0;
        for (int comma = 0; comma < 11 && pos != std::string::npos; ++comma)
            pos = line.find(',', pos + 1);
        rows.push_back(line.substr(0, pos));
    }
    return rows;
}

}  // namespace

TEST_CASE("run_case reproduces benchmark rows") {
    SUBCASE("continuous pressure, lumped, corners, 8x8, H/h=8") {
        const auto res = run_case(make_config(ElementKind::TaylorHood,
                                              PGammaMode::FullBoundary,
                                              PrimalChoice::CornerOnly,
                                              PrecondKind::Lumped, 8, 8));
        CHECK(res.converged);
        CHECK(std::abs(res.iterations - 28) <= 3);
        CHECK(res.lambda_min == doctest::Approx(0.35).epsilon(0.10));
        CHECK(res.lambda_max == doctest::Approx(10.07).epsilon(0.10));
        CHECK(res.bound_available);
        CHECK(std::isfinite(res.err_u_h1));
        CHECK(std::isfinite(res.err_p_l2));
    }
    SUBCASE("discontinuous pressure, Dirichlet, corners, 8x8, H/h=8") {
        const auto res = run_case(make_config(ElementKind::MacroDP,
                                              PGammaMode::OnePerSubdomain,
                                              PrimalChoice::CornerOnly,
                                              PrecondKind::Dirichlet, 8, 8));
        CHECK(res.converged);
        CHECK(std::abs(res.iterations - 18) <= 3);
        CHECK(res.lambda_min == doctest::Approx(0.33).epsilon(0.10));
        CHECK(res.lambda_max == doctest::Approx(3.01).epsilon(0.10));
        CHECK_FALSE(res.bound_available);  // usable, but carries no bound
    }
}

TEST_CASE("configuration validation names the violated rule") {
    auto expect_error = [](CaseConfig cfg, const char* fragment) {
        CHECK_THROWS_WITH_AS(validate(cfg), doctest::Contains(fragment), ConfigError);
    };
    expect_error(make_config(ElementKind::MacroDP, PGammaMode::Empty,
                             PrimalChoice::CornerPlusEdgeAverage, PrecondKind::Lumped,
                             4, 8),
                 "li05");
    expect_error(make_config(ElementKind::MacroDP, PGammaMode::FullBoundary,
                             PrimalChoice::CornerOnly, PrecondKind::Lumped, 4, 8),
                 "element=th");
    expect_error(make_config(ElementKind::TaylorHood, PGammaMode::OnePerSubdomain,
                             PrimalChoice::CornerOnly, PrecondKind::Lumped, 4, 8),
                 "element=dp");
    expect_error(make_config(ElementKind::MacroDP, PGammaMode::OnePerSubdomain,
                             PrimalChoice::CornerOnly, PrecondKind::Lumped, 4, 8, true),
                 "pgamma=empty");
    expect_error(make_config(ElementKind::MacroDP, PGammaMode::Empty,
                             PrimalChoice::CornerOnly, PrecondKind::Lumped, 1, 8),
                 "nsub");
    auto bad = make_config(ElementKind::TaylorHood, PGammaMode::FullBoundary,
                           PrimalChoice::CornerOnly, PrecondKind::Lumped, 4, 6);
    bad.maxit = 0;
    CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("every valid combination runs at 2x2, m=4") {
    int ran = 0;
    for (ElementKind ek : {ElementKind::MacroDP, ElementKind::TaylorHood})
        for (PGammaMode pg : {PGammaMode::FullBoundary, PGammaMode::OnePerSubdomain,
                              PGammaMode::Empty})
            for (PrimalChoice pc :
                 {PrimalChoice::CornerOnly, PrimalChoice::CornerPlusEdgeAverage})
                for (PrecondKind mk : {PrecondKind::Lumped, PrecondKind::Dirichlet}) {
                    auto cfg = make_config(ek, pg, pc, mk, 2, 4);
                    cfg.li05 = pg == PGammaMode::Empty &&
                               pc == PrimalChoice::CornerPlusEdgeAverage;
                    try {
                        validate(cfg);
                    } catch (const ConfigError&) {
                        continue;
                    }
                    const auto res = run_case(cfg);
                    CHECK(res.converged);
                    ++ran;
                }
    CHECK(ran == 12);
}

TEST_CASE("run_table: determinism, repeats, and bad configs") {
    std::vector<CaseConfig> configs = {
        make_config(ElementKind::MacroDP, PGammaMode::Empty, PrimalChoice::CornerOnly,
                    PrecondKind::Lumped, 2, 2),
        make_config(ElementKind::TaylorHood, PGammaMode::FullBoundary,
                    PrimalChoice::CornerOnly, PrecondKind::Lumped, 2, 2),
    };
    const auto twice = run_table(configs, 2);
    REQUIRE(twice.size() == 4);
    for (size_t i = 0; i < configs.size(); ++i) {
        CHECK(twice[i].iterations == twice[i + configs.size()].iterations);
        CHECK(twice[i].lambda_min == twice[i + configs.size()].lambda_min);
        CHECK(twice[i].lambda_max == twice[i + configs.size()].lambda_max);
        CHECK(twice[i].err_u_h1 == twice[i + configs.size()].err_u_h1);
    }

    CHECK(run_table({}, 1).empty());

    auto bad = configs;
    bad.push_back(make_config(ElementKind::MacroDP, PGammaMode::FullBoundary,
                              PrimalChoice::CornerOnly, PrecondKind::Lumped, 2, 2));
    CHECK_THROWS_WITH_AS(run_table(bad, 1), doctest::Contains("config 2"), ConfigError);

    const auto par = run_table(configs, 1, true);
    const auto seq = run_table(configs, 1, false);
    for (size_t i = 0; i < configs.size(); ++i) {
        CHECK(par[i].iterations == seq[i].iterations);
        CHECK(par[i].lambda_max == seq[i].lambda_max);
    }
}

TEST_CASE("table presets encode the benchmark grid") {
    const auto t1 = preset_configs("table1");
    CHECK(t1.size() == 30);
    for (const auto& cfg : t1) {
        CHECK(cfg.precond == PrecondKind::Lumped);
        CHECK(cfg.primal == PrimalChoice::CornerOnly);
        CHECK_NOTHROW(validate(cfg));
    }
    int th_rows = 0;
    for (const auto& cfg : t1)
        if (cfg.element == ElementKind::TaylorHood) ++th_rows;
    CHECK(th_rows == 10);

    const auto t4 = preset_configs("table4");
    for (const auto& cfg : t4) {
        CHECK(cfg.precond == PrecondKind::Dirichlet);
        CHECK(cfg.primal == PrimalChoice::CornerPlusEdgeAverage);
        if (cfg.pgamma == PGammaMode::Empty) CHECK(cfg.li05);
        CHECK_NOTHROW(validate(cfg));
    }
    CHECK_THROWS_AS(preset_configs("table9"), ConfigError);
}

TEST_CASE("emit: csv header contract and determinism") {
    const auto cfg = make_config(ElementKind::MacroDP, PGammaMode::Empty,
                                 PrimalChoice::CornerOnly, PrecondKind::Lumped, 2, 2);
    const std::vector<CaseResult> once = {run_case(cfg)};
    const std::vector<CaseResult> again = {run_case(cfg)};

    const auto csv = render(once, EmitFormat::Csv);
    CHECK(csv.substr(0, csv.find('\n')) ==
          "element,pgamma,primal,precond,nsub,m,iters,lambda_min,lambda_max,"
          "err_u_h1,err_p_l2,assembly_s,factor_s,solve_s");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);

    CHECK(csv_payload(csv) == csv_payload(render(again, EmitFormat::Csv)));
}

TEST_CASE("emit: json round trip") {
    std::vector<CaseResult> results = {
        run_case(make_config(ElementKind::TaylorHood, PGammaMode::FullBoundary,
                             PrimalChoice::CornerPlusEdgeAverage, PrecondKind::Dirichlet,
                             2, 2)),
        run_case(make_config(ElementKind::MacroDP, PGammaMode::Empty,
                             PrimalChoice::CornerOnly, PrecondKind::None, 2, 2)),
    };
    const auto text = render(results, EmitFormat::Json);
    const auto back = parse_results_json(text);
    REQUIRE(back.size() == results.size());
    for (size_t i = 0; i < results.size(); ++i) {
        CHECK(back[i].config.element == results[i].config.element);
        CHECK(back[i].config.pgamma == results[i].config.pgamma);
        CHECK(back[i].config.primal == results[i].config.primal);
        CHECK(back[i].config.precond == results[i].config.precond);
        CHECK(back[i].config.nsub == results[i].config.nsub);
        CHECK(back[i].config.m == results[i].config.m);
        CHECK(back[i].config.li05 == results[i].config.li05);
        CHECK(back[i].iterations == results[i].iterations);
        CHECK(back[i].converged == results[i].converged);
        CHECK(back[i].lambda_min == results[i].lambda_min);
        CHECK(back[i].lambda_max == results[i].lambda_max);
        CHECK(back[i].err_u_h1 == results[i].err_u_h1);
        CHECK(back[i].err_p_l2 == results[i].err_p_l2);
        CHECK(back[i].bound_available == results[i].bound_available);
        CHECK(back[i].assembly_s == results[i].assembly_s);
        CHECK(back[i].solve_s == results[i].solve_s);
    }
}

TEST_CASE("emit: markdown groups preset-shaped results by variant") {
    std::vector<CaseResult> results;
    for (PGammaMode pg : {PGammaMode::FullBoundary, PGammaMode::OnePerSubdomain,
                          PGammaMode::Empty}) {
        CaseConfig cfg = make_config(
            pg == PGammaMode::FullBoundary ? ElementKind::TaylorHood
                                           : ElementKind::MacroDP,
            pg, PrimalChoice::CornerOnly, PrecondKind::Lumped, 2, 2);
        for (int m : {2, 4}) {
            cfg.m = m;
            results.push_back(run_case(cfg));
        }
    }
    const auto md = render(results, EmitFormat::Markdown);
    CHECK(md.find("### continuous pressure") != std::string::npos);
    CHECK(md.find("### discontinuous pressure") != std::string::npos);
    CHECK(md.find("### p_gamma empty") != std::string::npos);
    CHECK(md.find("| H/h | #sub |") != std::string::npos);

    const auto flat = render({results.data(), 1}, EmitFormat::Markdown);
    CHECK(flat.find("| element |") != std::string::npos);
}

TEST_CASE("dump_matrices writes a parseable, consistent set of files") {
    namespace fs = std::filesystem;
    const std::string dir = "dump_test_out";
    fs::remove_all(dir);
    const auto cfg = make_config(ElementKind::MacroDP, PGammaMode::Empty,
                                 PrimalChoice::CornerOnly, PrecondKind::Lumped, 2, 2);
    dump_matrices(cfg, dir);

    for (const char* name : {"A.mtx", "B.mtx", "Z.mtx", "B_delta.mtx", "G.mtx", "Minv.mtx"})
        CHECK(fs::exists(dir + "/" + name));
    CHECK(fs::exists(dir + "/f.mtx"));
    CHECK(fs::exists(dir + "/dofs.txt"));

    const auto a = read_matrix_market(dir + "/A.mtx");
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j)
            CHECK(a.coeff(i, j) == doctest::Approx(a.coeff(j, i)).epsilon(1e-12));

    const auto bd = read_matrix_market(dir + "/B_delta.mtx");
    for (int r = 0; r < bd.rows(); ++r) {
        CHECK(bd.row_offsets()[r + 1] - bd.row_offsets()[r] == 2);
        for (int k = bd.row_offsets()[r]; k < bd.row_offsets()[r + 1]; ++k)
            CHECK(std::abs(bd.values()[k]) == 1.0);
    }
    for (const char* name : {"B.mtx", "Z.mtx", "G.mtx", "Minv.mtx", "f.mtx"})
        CHECK_NOTHROW(read_matrix_market(dir + "/" + std::string(name)));
    fs::remove_all(dir);

    auto too_big = make_config(ElementKind::MacroDP, PGammaMode::Empty,
                               PrimalChoice::CornerOnly, PrecondKind::Lumped, 32, 16);
    CHECK_THROWS_AS(dump_matrices(too_big, dir), std::invalid_argument);
    fs::remove_all(dir);
}
