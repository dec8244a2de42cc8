#include <gtest/gtest.h>

#include "fom/corpus.hpp"
#include "fom/elimination.hpp"
#include "support/oracle.hpp"

using namespace fom;

namespace {

Graph sparse_graph(corpus::Rng& rng, int kind) {
    switch (kind % 3) {
        case 0: return corpus::grid(corpus::uniform(rng, 2, 4), corpus::uniform(rng, 2, 4));
        case 1: return corpus::planar_subgraph(rng, 3, corpus::uniform(rng, 3, 5));
        default: return corpus::bounded_degree(rng, corpus::uniform(rng, 4, 14), 3, 30);
    }
}

corpus::FormulaShape shape(std::size_t functions) {
    corpus::FormulaShape sh;
    sh.marks = {"P", "Q"};
    sh.functions = functions;
    sh.max_modulus = 4;
    return sh;
}

std::vector<std::string> xs(std::size_t k) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back("x" + std::to_string(i));
    return out;
}

std::uint64_t witnesses(const GuidedStructure& m, const Formula& rho, std::map<std::string, Vertex> env, const std::string& y) {
    std::uint64_t c = 0;
    for (Vertex w = 0; w < m.size(); ++w) {
        env[y] = w;
        c += oracle::holds(m, rho, env) ? 1 : 0;
    }
    return c;
}

// Calls visit on every k-tuple over [n].
template <class Visit>
void for_tuples(std::size_t n, std::size_t k, Visit&& visit) {
    std::vector<Vertex> t(k, 0);
    if (n == 0 && k > 0) return;
    while (true) {
        visit(t);
        std::size_t i = 0;
        while (i < k && ++t[i] == n) t[i++] = 0;
        if (i == k) break;
    }
}

}  // namespace

TEST(ColorType, EmptyTupleOnlyIsTheColor) {
    GuidedStructure m(corpus::path(4));
    std::vector<Color> gamma{0, 1, 0, 2};
    for (Vertex v = 0; v < 4; ++v) EXPECT_EQ(color_type_of(m, gamma, {{}}, v).colors, std::vector<Color>{gamma[v]});
}

TEST(ColorType, IdentityFunctionsGiveConstantType) {
    GuidedStructure m(corpus::path(3));
    m.add_function("f");
    std::vector<Color> gamma{0, 1, 2};
    for (Vertex v = 0; v < 3; ++v)
        EXPECT_EQ(color_type_of(m, gamma, {{}, {1}, {1, 1}}, v).colors, (std::vector<Color>(3, gamma[v])));
}

TEST(ColorType, MatchesTermEvaluation) {
    corpus::Rng rng(61);
    for (int i = 0; i < 50; ++i) {
        auto m = corpus::random_structure(rng, sparse_graph(rng, i), 1, 2);
        std::vector<Color> gamma(m.size());
        for (auto& c : gamma) c = Color(corpus::uniform(rng, 0, 5));
        std::vector<TermTuple> tuples{{}, {1}, {2}, {1, 2}, {2, 2, 1}};
        for (Vertex v = 0; v < m.size(); ++v) {
            auto t = color_type_of(m, gamma, tuples, v);
            for (std::size_t j = 0; j < tuples.size(); ++j)
                EXPECT_EQ(t.colors[j], gamma[oracle::term_value(m, Term{"x", tuples[j]}, {{"x", v}})]);
        }
    }
}

TEST(Theta, SingletonTupleSetIsOneMark) {
    auto f = theta(ColorType{{3}}, {{}}, "x");
    EXPECT_EQ(f->op, Op::Mark);
    EXPECT_EQ(f->name, color_mark(3));
}

TEST(Theta, TestsTheType) {
    corpus::Rng rng(62);
    for (int i = 0; i < 30; ++i) {
        auto m = corpus::random_structure(rng, sparse_graph(rng, i), 1, 1);
        auto rho = f_and({f_mark("P", Term{"x", {1, 1}}), f_edge(var_term("x"), Term{"y", {1}})});
        auto elim = eliminate_one(m, 0, 2, rho, "y");
        const auto& types = elim->realized_types();
        for (Vertex v = 0; v < m.size(); ++v) {
            EXPECT_TRUE(eval_naive(elim->plus(), theta(types[elim->type_of(v)], elim->tuples(), "x"), {{"x", v}}));
            std::size_t t = corpus::uniform(rng, 0, types.size() - 1);
            EXPECT_EQ(eval_naive(elim->plus(), theta(types[t], elim->tuples(), "x"), {{"x", v}}), elim->type_of(v) == t);
        }
    }
}

TEST(RhoRestrict, ShapeAndFreeVariables) {
    auto rho = f_mark("P", var_term("y"));
    auto r0 = rho_restrict(rho, {}, {}, ColorType{{1}}, "y", {{}});
    EXPECT_EQ(print_formula(r0), "(col#1(y) & P(y))");
    auto rho2 = f_edge(var_term("x"), var_term("y"));
    auto r1 = rho_restrict(rho2, {ColorType{{0}}}, {"x"}, ColorType{{2}}, "y", {{}});
    EXPECT_EQ(free_vars(r1), (std::vector<std::string>{"x", "y"}));
}

TEST(RhoRestrict, PieceSatisfactionMatchesWholeStructure) {
    corpus::Rng rng(63);
    for (int i = 0; i < 60; ++i) {
        auto m = corpus::random_structure(rng, sparse_graph(rng, i), 2, 1);
        auto rho = corpus::random_qf(rng, {"x0", "y"}, shape(1), 2);
        auto elim = eliminate_one(m, 0, 2, rho, "y");
        const auto& T = elim->tuples();
        const auto& types = elim->realized_types();
        const auto& outer = elim->free_variables();
        for_tuples(m.size(), outer.size(), [&](const std::vector<Vertex>& v) {
            std::vector<std::size_t> tbar;
            std::vector<ColorType> tb;
            for (Vertex x : v) {
                tbar.push_back(elim->type_of(x));
                tb.push_back(types[elim->type_of(x)]);
            }
            std::size_t tp = corpus::uniform(rng, 0, types.size() - 1);
            auto restricted = rho_restrict(rho, tb, outer, types[tp], "y", T);
            const auto& piece = elim->piece(elim->piece_colors(tbar, tp));
            for (Vertex w = 0; w < m.size(); ++w) {
                Valuation nu{{"y", w}};
                for (std::size_t j = 0; j < v.size(); ++j) nu[outer[j]] = v[j];
                bool whole = eval_naive(elim->plus(), restricted, nu);
                bool typed = elim->type_of(w) == tp;
                bool in_piece = false;
                if (typed) {
                    Valuation local;
                    bool all_in = true;
                    for (const auto& [name, val] : nu) {
                        auto l = piece.local(val);
                        all_in = all_in && l.has_value();
                        if (l) local[name] = *l;
                    }
                    in_piece = all_in && eval_naive(piece.sub, restricted, local);
                }
                EXPECT_EQ(whole, in_piece);
            }
        });
    }
}

TEST(ResidueDistributions, SingleType) {
    auto d = residue_distributions(2, 5, 1);
    auto r = d.next();
    ASSERT_TRUE(r);
    EXPECT_EQ(*r, std::vector<std::uint32_t>{2});
    EXPECT_FALSE(d.next());
}

TEST(ResidueDistributions, CountAndSums) {
    for (std::size_t m = 1; m <= 4; ++m)
        for (std::uint32_t b = 1; b <= 4; ++b)
            for (std::uint32_t a = 0; a < b; ++a) {
                std::set<std::vector<std::uint32_t>> seen;
                auto d = residue_distributions(a, b, m);
                while (auto r = d.next()) {
                    ASSERT_EQ(r->size(), m);
                    std::uint32_t s = 0;
                    for (auto x : *r) {
                        EXPECT_LT(x, b);
                        s += x;
                    }
                    EXPECT_EQ(s % b, a);
                    seen.insert(*r);
                }
                std::size_t expect = 1;
                for (std::size_t i = 1; i < m; ++i) expect *= b;
                EXPECT_EQ(seen.size(), expect);
            }
}

TEST(ResidueDistributions, NoTypes) {
    EXPECT_TRUE(residue_distributions(0, 3, 0).next());
    EXPECT_FALSE(residue_distributions(1, 3, 0).next());
}

TEST(EliminateOne, FalseMatrix) {
    GuidedStructure m(corpus::cycle(5));
    for (std::uint32_t a = 0; a < 3; ++a) {
        auto elim = eliminate_one(m, a, 3, f_and({f_false(), f_edge(var_term("x"), var_term("y"))}), "y");
        for (Vertex v = 0; v < 5; ++v) EXPECT_EQ(elim->zeta(std::vector<Vertex>{v}), a == 0);
    }
}

TEST(EliminateOne, CycleOfFourEvenDegree) {
    GuidedStructure m(corpus::cycle(4));
    auto elim = eliminate_one(m, 0, 2, f_edge(var_term("x"), var_term("y")), "y");
    for (Vertex v = 0; v < 4; ++v) EXPECT_TRUE(elim->zeta(std::vector<Vertex>{v}));
}

TEST(EliminateOne, AgreesWithOracleOnRandomGraphs) {
    corpus::Rng rng(64);
    std::size_t tuples = 0, pieces_checked = 0;
    for (int i = 0; i < 500; ++i) {
        auto m = corpus::random_structure(rng, sparse_graph(rng, i), 2, i % 2);
        std::size_t k = corpus::uniform(rng, 0, 2);
        auto vars = xs(k);
        vars.push_back("y");
        auto rho = corpus::random_qf(rng, vars, shape(i % 2), 2);
        std::uint32_t b = static_cast<std::uint32_t>(corpus::uniform(rng, 1, 4));
        std::uint32_t a = static_cast<std::uint32_t>(corpus::uniform(rng, 0, b - 1));
        auto elim = eliminate_one(m, a, b, rho, "y");
        const auto& outer = elim->free_variables();
        for_tuples(m.size(), outer.size(), [&](const std::vector<Vertex>& v) {
            std::map<std::string, Vertex> env;
            for (std::size_t j = 0; j < v.size(); ++j) env[outer[j]] = v[j];
            auto want = witnesses(m, rho, env, "y") % b;
            ASSERT_EQ(elim->residue(v), want) << print_formula(rho, {"f1"});
            EXPECT_EQ(elim->zeta(v), want == a);
            ++tuples;
        });
        for (std::size_t t = 0; t < elim->realized_types().size() && i % 10 == 0; ++t) {
            std::vector<std::size_t> tbar(outer.size(), t);
            auto colors = elim->piece_colors(tbar, t);
            EXPECT_LE(colors.size(), elim->p());
            const auto& pc = elim->piece(colors);
            EXPECT_LE(pc.forest.height(), elim->p());
            if (pc.members.size() <= 20) {
                EXPECT_LE(treedepth_exact(gaifman(pc.sub)), elim->p());
                ++pieces_checked;
            }
        }
    }
    EXPECT_GT(tuples, 5000u);
    EXPECT_GT(pieces_checked, 20u);
}

TEST(EliminateOne, PullbackRouteAgrees) {
    corpus::Rng rng(65);
    for (int i = 0; i < 60; ++i) {
        auto m = corpus::random_structure(rng, sparse_graph(rng, i), 2, 1);
        std::size_t k = corpus::uniform(rng, 0, 1);
        auto vars = xs(k);
        vars.push_back("y");
        auto rho = corpus::random_qf(rng, vars, shape(1), 2);
        std::uint32_t b = static_cast<std::uint32_t>(corpus::uniform(rng, 2, 4));
        EliminationOptions pull;
        pull.via_pullback = true;
        auto direct = eliminate_one(m, 0, b, rho, "y");
        auto pulled = eliminate_one(m, 0, b, rho, "y", pull);
        for_tuples(m.size(), direct->free_variables().size(), [&](const std::vector<Vertex>& v) {
            EXPECT_EQ(direct->residues_by_type(v), pulled->residues_by_type(v)) << print_formula(rho, {"f1"});
        });
    }
}

TEST(EliminateOne, ZetaIsTheDistributionDisjunction) {
    corpus::Rng rng(66);
    for (int i = 0; i < 40; ++i) {
        auto m = corpus::random_structure(rng, corpus::grid(2, 3), 2, 0);
        auto rho = corpus::random_qf(rng, {"x0", "y"}, shape(0), 2);
        std::uint32_t b = 3, a = static_cast<std::uint32_t>(corpus::uniform(rng, 0, 2));
        auto elim = eliminate_one(m, a, b, rho, "y");
        if (elim->realized_types().size() > 6) continue;
        for_tuples(m.size(), elim->free_variables().size(), [&](const std::vector<Vertex>& v) {
            auto res = elim->residues_by_type(v);
            bool any = false;
            auto d = residue_distributions(a, b, res.size());
            while (auto r = d.next()) any = any || *r == res;
            EXPECT_EQ(any, elim->zeta(v));
        });
    }
}

TEST(EliminateOne, DeterministicExpansion) {
    corpus::Rng rng(67);
    auto m = corpus::random_structure(rng, corpus::grid(3, 4), 2, 1);
    auto rho = f_and({f_edge(var_term("x"), var_term("y")), f_mark("P", Term{"y", {1}})});
    auto e1 = eliminate_one(m, 1, 2, rho, "y");
    auto e2 = eliminate_one(m, 1, 2, rho, "y");
    auto s1 = e1->expanded(), s2 = e2->expanded();
    EXPECT_EQ(s1, s2);
    EXPECT_GT(s1.mark_count(), m.mark_count());
    EXPECT_EQ(reduct_marks(s1, all_marks(m)).graph(), m.graph());
}

TEST(EliminateOne, RejectsQuantifiedMatrix) {
    GuidedStructure m(3);
    EXPECT_THROW(eliminate_one(m, 0, 2, f_exists("z", f_true()), "y"), InputError);
    EXPECT_THROW(eliminate_one(m, 2, 2, f_true(), "y"), InputError);
}

TEST(EliminateAll, QuantifierFreeIsIdentity) {
    corpus::Rng rng(68);
    auto m = corpus::random_structure(rng, corpus::grid(3, 3), 2, 0);
    auto phi = f_and({f_mark("P", var_term("x")), f_not(f_edge(var_term("x"), var_term("z")))});
    auto pipe = eliminate_all(m, phi);
    EXPECT_EQ(pipe->stage_count(), 0u);
    for_tuples(m.size(), 2, [&](const std::vector<Vertex>& v) {
        EXPECT_EQ(pipe->eval(v), NaiveEvaluator(m, phi).eval(v));
    });
}

TEST(EliminateAll, NestedOnTriangle) {
    GuidedStructure m(corpus::complete(3));
    Signature sig;
    auto phi = parse_formula("Emod[0,2] y. Emod[1,2] z. adj(y,z)", sig);
    auto pipe = eliminate_all(m, phi);
    EXPECT_EQ(pipe->stage_count(), 2u);
    EXPECT_TRUE(pipe->eval(std::vector<Vertex>{}));
}

TEST(EliminateAll, RejectsPlainQuantifierUnderModulo) {
    GuidedStructure m(corpus::path(3));
    Signature sig;
    auto phi = parse_formula("Emod[0,2] y. E z. adj(y,z)", sig);
    try {
        eliminate_all(m, phi);
        FAIL();
    } catch (const UnsupportedFragment& e) {
        EXPECT_NE(e.node().find("adj(y,z)"), std::string::npos);
    }
}

TEST(EliminateAll, RandomNestedAgreesWithOracle) {
    corpus::Rng rng(69);
    int direct = 0;
    for (int i = 0; i < 150; ++i) {
        auto m = corpus::random_structure(rng, sparse_graph(rng, i), 2, i % 2);
        std::size_t fresh = 0;
        auto phi = corpus::random_modulo_prenex(rng, xs(corpus::uniform(rng, 0, 1)), shape(i % 2), 2, fresh);
        auto pipe = eliminate_all(m, phi);
        direct += pipe->direct_sum_used() ? 1 : 0;
        const auto& fv = pipe->free_variables();
        for_tuples(m.size(), fv.size(), [&](const std::vector<Vertex>& v) {
            std::map<std::string, Vertex> env;
            for (std::size_t j = 0; j < v.size(); ++j) env[fv[j]] = v[j];
            ASSERT_EQ(pipe->eval(v), oracle::holds(m, phi, env)) << print_formula(phi, {"f1"});
        });
    }
    EXPECT_GT(direct, 0);
}

TEST(EvalPipeline, AnyFormulaAgreesWithNaive) {
    corpus::Rng rng(70);
    for (int i = 0; i < 150; ++i) {
        auto m = corpus::random_structure(rng, sparse_graph(rng, i), 2, 1);
        std::size_t fresh = 0;
        auto phi = corpus::random_fom(rng, xs(corpus::uniform(rng, 0, 1)), shape(1), 3, fresh);
        PipelineEvaluator pipe(m, phi);
        NaiveEvaluator naive(m, phi);
        const auto& fv = naive.free_variables();
        for_tuples(m.size(), fv.size(), [&](const std::vector<Vertex>& v) {
            Valuation nu;
            for (std::size_t j = 0; j < v.size(); ++j) nu[fv[j]] = v[j];
            ASSERT_EQ(pipe.eval(nu), naive.eval(v)) << print_formula(phi, {"f1"});
        });
    }
}

TEST(CountDefinable, Examples) {
    Signature sig;
    auto phi = parse_formula("Emod[0,2] y. adj(x,y)", sig);
    auto c4 = count_definable(GuidedStructure(corpus::cycle(4)), phi);
    EXPECT_EQ(c4.count, 4u);
    EXPECT_FALSE(c4.fallback);
    // centre has 5 neighbours, leaves 1
    auto star = count_definable(GuidedStructure(corpus::star(5)), phi);
    EXPECT_EQ(star.count, 0u);
    EXPECT_EQ(star.count, count_naive(GuidedStructure(corpus::star(5)), phi));
}

TEST(CountDefinable, FallbackForTwoFreeVariables) {
    Signature sig;
    auto phi = parse_formula("adj(x,y) & Emod[1,2] z. adj(x,z)", sig);
    GuidedStructure m(corpus::path(4));
    auto r = count_definable(m, phi);
    EXPECT_TRUE(r.fallback);
    EXPECT_EQ(r.count, count_naive(m, phi));
}

TEST(CountDefinable, RandomAgreesWithNaiveCount) {
    corpus::Rng rng(71);
    for (int i = 0; i < 100; ++i) {
        auto m = corpus::random_structure(rng, sparse_graph(rng, i), 2, i % 2);
        std::size_t fresh = 0;
        auto phi = corpus::random_modulo_prenex(rng, {"x0"}, shape(i % 2), 2, fresh);
        auto r = count_definable(m, phi);
        EXPECT_EQ(r.count, count_naive(m, phi));
        if (free_vars(phi).size() == 1) EXPECT_FALSE(r.fallback);
    }
}

TEST(EliminateOne, ThreadedPiecesMatchSerial) {
    corpus::Rng rng(72);
    auto m = corpus::random_structure(rng, corpus::grid(4, 5), 2, 1);
    auto rho = f_and({f_edge(var_term("x"), var_term("y")), f_mark("Q", Term{"y", {1}})});
    EliminationOptions par;
    par.threads = 4;
    auto serial = eliminate_one(m, 0, 3, rho, "y");
    auto threaded = eliminate_one(m, 0, 3, rho, "y", par);
    EXPECT_EQ(serial->expanded(), threaded->expanded());
    for (Vertex v = 0; v < m.size(); ++v) EXPECT_EQ(serial->zeta(std::vector<Vertex>{v}), threaded->zeta(std::vector<Vertex>{v}));
}
