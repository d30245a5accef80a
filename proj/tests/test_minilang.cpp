#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "plbk/minilang.hpp"
#include "plbk/rng.hpp"

#include <set>

using namespace plbk;
using namespace plbk::minilang;

TEST_CASE("smallest program parses to the expected shape") {
    const Ast ast = parse("fn f(x){ return x; }");
    REQUIRE(ast.kind == NodeKind::Program);
    REQUIRE(ast.children.size() == 1);
    const Ast& fn = ast.children[0];
    CHECK(fn.kind == NodeKind::FuncDecl);
    CHECK(fn.name == "f");
    REQUIRE(fn.children.size() == 2);
    CHECK(fn.children[0].kind == NodeKind::Param);
    CHECK(fn.children[0].name == "x");
    const Ast& block = fn.children[1];
    REQUIRE(block.kind == NodeKind::Block);
    REQUIRE(block.children.size() == 1);
    CHECK(block.children[0].kind == NodeKind::Return);
    CHECK(block.children[0].children[0].kind == NodeKind::Ident);
    CHECK(block.children[0].children[0].name == "x");
}

TEST_CASE("truncated expression reports offset and expected set") {
    const std::string src = "x = 1 +";
    try {
        parse(src);
        FAIL("expected a syntax error");
    } catch (const SyntaxError& e) {
        CHECK(e.error.offset == src.size()); // end of input
        CHECK(e.error.expected.find("primary expression") != std::string::npos);
    }
}

TEST_CASE("errors carry byte offsets into the source") {
    try {
        parse("fn f(x) { return @; }");
        FAIL("expected a syntax error");
    } catch (const SyntaxError& e) {
        CHECK(e.error.offset == 17); // the '@'
    }
    try {
        parse("fn 5() {}");
        FAIL("expected a syntax error");
    } catch (const SyntaxError& e) {
        CHECK(e.error.offset == 3);
        CHECK(e.error.expected.find("function name") != std::string::npos);
    }
}

TEST_CASE("precedence: 1+2*3 parses as 1+(2*3), comparisons bind loosest") {
    const Ast ast = parse("x = 1 + 2 * 3;");
    const Ast& assign = ast.children[0].children[0];
    REQUIRE(assign.kind == NodeKind::Assign);
    const Ast& plus = assign.children[0];
    CHECK(plus.name == "+");
    CHECK(plus.children[0].value == 1);
    CHECK(plus.children[1].name == "*");
    CHECK(plus.children[1].children[0].value == 2);
    CHECK(plus.children[1].children[1].value == 3);

    const Ast cmp = parse("y = a + 1 < b * 2;");
    const Ast& lt = cmp.children[0].children[0].children[0];
    CHECK(lt.name == "<");
    CHECK(lt.children[0].name == "+");
    CHECK(lt.children[1].name == "*");

    // left associativity
    const Ast sub = parse("z = 8 - 3 - 2;");
    const Ast& outer = sub.children[0].children[0].children[0];
    CHECK(outer.name == "-");
    CHECK(outer.children[0].name == "-");
    CHECK(outer.children[1].value == 2);
}

TEST_CASE("parse-print round trip is structurally exact") {
    for (const std::string src : {
             "fn f(x){ return x; }",
             "fn g(a, b) { c = a + b * 2; if c > 10 { return c; } else { return 0; } }",
             "fn h(n) { while n > 0 { n = n - 1; } return n; }",
             "fn k() { return f(1, 2 + 3); }",
             "x = 1; y = x + 2; foo(y);",
             "fn m(v) { if v == 0 { return 1; } return v * m(v - 1); }",
         }) {
        const Ast ast = parse(src);
        const std::string printed = pretty_print(ast);
        const Ast reparsed = parse(printed);
        CHECK(ast.structurally_equal(reparsed));
        CHECK(pretty_print(reparsed) == printed);
    }
}

TEST_CASE("subtree multiset counts are what hand enumeration gives") {
    // Program > FuncDecl > (Param, Block > Return > Ident): heights 5,4,1,3,2,1
    const auto m = subtree_multiset(parse("fn f(x){ return x; }"));
    int64_t total = 0;
    for (const auto& [enc, c] : m) total += c;
    CHECK(total == 4); // Return, Block, FuncDecl, Program reach height >= 2

    SUBCASE("identical programs produce identical multisets") {
        const auto m2 = subtree_multiset(parse("fn f(x){ return x; }"));
        CHECK(m == m2);
    }
    SUBCASE("renaming leaves the multiset unchanged") {
        const auto renamed = subtree_multiset(parse("fn q(w){ return w; }"));
        CHECK(m == renamed);
    }
    SUBCASE("literal values are preserved, so they distinguish trees") {
        const auto a = subtree_multiset(parse("fn f(){ return 1; }"));
        const auto b = subtree_multiset(parse("fn f(){ return 2; }"));
        CHECK(a != b);
    }
}

TEST_CASE("ast match: identity, hand-counted partial, disjoint") {
    const std::string ref = "fn f(x) { y = x; return y; }";
    CHECK(ast_match(parse(ref), parse(ref)) == 1.0);

    // reference multiset has 5 encodings of height >= 2 (Assign, Return,
    // Block, FuncDecl, Program); dropping the assignment leaves only the
    // Return subtree matching
    CHECK(ast_match(parse("fn f(x) { return y; }"), parse(ref)) == doctest::Approx(0.2));

    CHECK(ast_match(parse("a = 1;"), parse("fn z() { while q > w { } }")) == 0.0);

    // empty reference is vacuously perfect for any parseable candidate
    CHECK(ast_match(parse("fn f(x) { return x; }"), parse("")) == 1.0);
}

TEST_CASE("dataflow extraction on the param/assign fixture") {
    const auto graph = extract_dataflow(parse("fn f(x){ y = x; return y; }"));
    // sites in source order: def x (param), def y, use x, use y
    REQUIRE(graph.sites.size() == 4);
    CHECK(graph.sites[0].is_def);
    CHECK(graph.sites[0].variable == "var_0");
    CHECK(graph.sites[1].is_def);
    CHECK(graph.sites[1].variable == "var_1");
    CHECK_FALSE(graph.sites[2].is_def);
    CHECK(graph.sites[2].variable == "var_0");
    CHECK_FALSE(graph.sites[3].is_def);
    CHECK(graph.sites[3].variable == "var_1");
    REQUIRE(graph.edges.size() == 2);
    std::set<std::pair<int, int>> edges;
    for (const auto& e : graph.edges) edges.insert({e.use_site, e.def_site});
    CHECK(edges.count({2, 0}) == 1); // use x -> param def
    CHECK(edges.count({3, 1}) == 1); // use y -> assign def
}

TEST_CASE("straight-line reassignment: the use reaches only the latest def") {
    const auto graph = extract_dataflow(parse("x = 1; x = 2; return x;"));
    REQUIRE(graph.edges.size() == 1);
    const auto& e = graph.edges[0];
    CHECK(graph.sites[size_t(e.def_site)].def_ordinal == 1); // the second def of x
    CHECK(graph.unknown_uses == 0);
}

TEST_CASE("if/else arms both reach a following use") {
    const auto graph =
        extract_dataflow(parse("fn f(c) { if c > 0 { x = 1; } else { x = 2; } return x; }"));
    // edges: use c -> param, use x -> def#0, use x -> def#1
    int x_edges = 0;
    for (const auto& e : graph.edges) {
        if (graph.sites[size_t(e.use_site)].variable ==
            graph.sites[size_t(e.def_site)].variable) {
            if (graph.sites[size_t(e.def_site)].def_ordinal >= 0 &&
                !graph.sites[size_t(e.use_site)].is_def &&
                graph.sites[size_t(e.def_site)].variable == "var_1") {
                ++x_edges;
            }
        }
    }
    CHECK(x_edges == 2);
}

TEST_CASE("loop back edges: a self-referential def reaches its own use") {
    const auto graph =
        extract_dataflow(parse("fn g(n) { s = 0; while n > 0 { s = s + 1; n = n - 1; } return s; }"));
    // the use of s inside the loop body must see both the init def and the
    // loop def (via the second pass)
    int defs_reaching_inner_s = 0;
    for (const auto& e : graph.edges) {
        const auto& use = graph.sites[size_t(e.use_site)];
        const auto& def = graph.sites[size_t(e.def_site)];
        if (!use.is_def && use.variable == def.variable && use.variable == "var_1" &&
            use.index > def.index && def.is_def) {
            // uses of s: inner (s + 1) and the return
            ++defs_reaching_inner_s;
        }
    }
    CHECK(defs_reaching_inner_s >= 3); // inner use: 2 defs; return use: 2 defs, minus overlap
}

TEST_CASE("undeclared uses link to the synthetic unknown def") {
    const auto graph = extract_dataflow(parse("return q;"));
    REQUIRE(graph.edges.size() == 1);
    CHECK(graph.edges[0].def_site == -1);
    CHECK(graph.unknown_uses == 1);
}

TEST_CASE("dataflow match: renaming, dropped edges, vacuous") {
    const auto ref = extract_dataflow(parse("fn f(x){ y = x; return y; }"));
    const auto renamed = extract_dataflow(parse("fn f(a){ b = a; return b; }"));
    CHECK(dataflow_match(renamed, ref) == 1.0);

    // three edges in the reference; candidate keeps two
    const auto ref3 = extract_dataflow(parse("a = 1; b = a; c = b; return c;"));
    REQUIRE(ref3.edges.size() == 3);
    const auto cand = extract_dataflow(parse("a = 1; b = a; c = 9; return c;"));
    CHECK(dataflow_match(cand, ref3) == doctest::Approx(2.0 / 3.0));

    const auto empty_a = extract_dataflow(parse("fn f() { }"));
    const auto empty_b = extract_dataflow(parse("fn g() { }"));
    CHECK(dataflow_match(empty_a, empty_b) == 1.0);
}

TEST_CASE("parser is total over fuzzed byte strings") {
    Rng rng(99);
    int parsed = 0, rejected = 0;
    for (int iter = 0; iter < 100000; ++iter) {
        const size_t len = rng.below(40);
        std::string s;
        for (size_t i = 0; i < len; ++i) {
            // bias toward the grammar's alphabet so some inputs parse
            const uint64_t pick = rng.below(100);
            if (pick < 70) {
                static const char pool[] = "fnifwhilereturn(){};=+-*/<> 0123456789xyz,";
                s += pool[rng.below(sizeof(pool) - 1)];
            } else {
                s += static_cast<char>(rng.below(256));
            }
        }
        try {
            (void)parse(s);
            ++parsed;
        } catch (const SyntaxError&) {
            ++rejected;
        }
    }
    CHECK(parsed + rejected == 100000);
    CHECK(parsed > 0); // the empty string alone guarantees this
}

TEST_CASE("language profile surfaces keywords, lexer tokens, and parse fallback") {
    const auto& profile = mini_profile();
    CHECK(profile.name() == "mini");
    CHECK(profile.keywords().count("fn") == 1);
    CHECK(profile.keywords().count("while") == 1);
    CHECK(profile.keywords().size() == 5);

    const auto tokens = profile.tokenize("fn f(x){return x+1;}");
    const std::vector<std::string> want = {"fn", "f", "(", "x", ")", "{", "return",
                                           "x",  "+", "1", ";", "}"};
    CHECK(tokens == want);

    CHECK(profile.try_parse("fn f(x){ return x; }").has_value());
    CHECK_FALSE(profile.try_parse("fn f(x{").has_value());
    CHECK(find_profile("mini") == &profile);
    CHECK(find_profile("java") == nullptr);
}
