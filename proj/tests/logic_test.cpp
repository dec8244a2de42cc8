#include <gtest/gtest.h>

#include "fom/corpus.hpp"
#include "fom/logic.hpp"
#include "support/oracle.hpp"

using namespace fom;

namespace {

Signature sig_pq_f() { return Signature{{"P", "Q"}, {"f1", "f2"}}; }

corpus::FormulaShape shape_pq_f() {
    corpus::FormulaShape sh;
    sh.marks = {"P", "Q"};
    sh.functions = 2;
    return sh;
}

// Structural equality up to a consistent renaming of bound variables.
bool alpha_equal(const Formula& a, const Formula& b, std::vector<std::pair<std::string, std::string>>& bound) {
    if (a->op != b->op || a->name.empty() != b->name.empty()) return false;
    if (a->residue != b->residue || a->modulus != b->modulus) return false;
    if (a->terms.size() != b->terms.size() || a->kids.size() != b->kids.size()) return false;
    auto same_var = [&](const std::string& x, const std::string& y) {
        for (auto it = bound.rbegin(); it != bound.rend(); ++it) {
            if (it->first == x || it->second == y) return it->first == x && it->second == y;
        }
        return x == y;
    };
    for (std::size_t i = 0; i < a->terms.size(); ++i)
        if (a->terms[i].fns != b->terms[i].fns || !same_var(a->terms[i].var, b->terms[i].var)) return false;
    if (a->op == Op::Mark && a->name != b->name) return false;
    if (is_quantifier(a->op)) bound.emplace_back(a->name, b->name);
    bool ok = true;
    for (std::size_t i = 0; ok && i < a->kids.size(); ++i) ok = alpha_equal(a->kids[i], b->kids[i], bound);
    if (is_quantifier(a->op)) bound.pop_back();
    return ok;
}

bool alpha_equal(const Formula& a, const Formula& b) {
    std::vector<std::pair<std::string, std::string>> bound;
    return alpha_equal(a, b, bound);
}

// Textbook recursive free-variable set.
std::set<std::string> free_set(const Formula& f) {
    std::set<std::string> out;
    for (const auto& t : f->terms) out.insert(t.var);
    for (const auto& k : f->kids) {
        auto s = free_set(k);
        out.insert(s.begin(), s.end());
    }
    if (is_quantifier(f->op)) out.erase(f->name);
    return out;
}

void collect_tuples_by_hand(const Formula& f, std::set<std::vector<std::size_t>>& out) {
    for (const auto& t : f->terms) out.insert(t.fns);
    for (const auto& k : f->kids) collect_tuples_by_hand(k, out);
}

}  // namespace

TEST(ParseFormula, ModuloQuantifier) {
    auto f = parse_formula("Emod[0,2] y. adj(x,y)", Signature{});
    ASSERT_EQ(f->op, Op::ModExists);
    EXPECT_EQ(f->residue, 0u);
    EXPECT_EQ(f->modulus, 2u);
    EXPECT_EQ(f->name, "y");
    const auto& body = f->kids[0];
    ASSERT_EQ(body->op, Op::Edge);
    EXPECT_EQ(body->terms[0], var_term("x"));
    EXPECT_EQ(body->terms[1], var_term("y"));
}

TEST(ParseFormula, FunctionTerm) {
    auto f = parse_formula("adj(f(x), x)", Signature{{}, {"f"}});
    ASSERT_EQ(f->op, Op::Edge);
    EXPECT_EQ(f->terms[0], (Term{"x", {1}}));
    EXPECT_EQ(f->terms[1], var_term("x"));
}

TEST(ParseFormula, NestedFunctionsOutermostFirst) {
    auto f = parse_formula("adj(f1(f2(x)), y)", sig_pq_f());
    EXPECT_EQ(f->terms[0], (Term{"x", {1, 2}}));
    EXPECT_EQ(collect_term_tuples(f), (std::set<std::vector<std::size_t>>{{}, {1, 2}}));
}

TEST(ParseFormula, Precedence) {
    auto f = parse_formula("!P(x) & Q(x) | x = x", sig_pq_f());
    ASSERT_EQ(f->op, Op::Or);
    ASSERT_EQ(f->kids[0]->op, Op::And);
    EXPECT_EQ(f->kids[0]->kids[0]->op, Op::Not);
    EXPECT_EQ(f->kids[1]->op, Op::Eq);
}

TEST(ParseFormula, QuantifierExtendsRight) {
    auto f = parse_formula("E y. P(y) & Q(x)", sig_pq_f());
    ASSERT_EQ(f->op, Op::Exists);
    EXPECT_EQ(f->kids[0]->op, Op::And);
    EXPECT_EQ(free_vars(f), (std::vector<std::string>{"x"}));
}

TEST(ParseFormula, ShadowedBinderRenamed) {
    auto f = parse_formula("E y. (P(y) & E y. Q(y))", sig_pq_f());
    const auto& inner = f->kids[0]->kids[1];
    ASSERT_EQ(inner->op, Op::Exists);
    EXPECT_NE(inner->name, f->name);
    EXPECT_EQ(inner->kids[0]->terms[0].var, inner->name);
    EXPECT_EQ(f->kids[0]->kids[0]->terms[0].var, "y");
}

TEST(ParseFormula, Errors) {
    EXPECT_THROW(parse_formula("adj(x,", Signature{}), FormulaSyntaxError);
    EXPECT_THROW(parse_formula("E . adj(x,y)", Signature{}), FormulaSyntaxError);
    EXPECT_THROW(parse_formula("Emod[2,2] y. adj(x,y)", Signature{}), FormulaSyntaxError);
    EXPECT_THROW(parse_formula("Emod[0,0] y. adj(x,y)", Signature{}), FormulaSyntaxError);
    EXPECT_THROW(parse_formula("adj(g(x), y)", Signature{}), UnknownSymbol);
    EXPECT_THROW(parse_formula("adj(x,y) )", Signature{}), FormulaSyntaxError);
    try {
        parse_formula("adj(x,y) & & P(x)", sig_pq_f());
        FAIL();
    } catch (const FormulaSyntaxError& e) {
        EXPECT_GE(e.position(), 10u);
    }
}

TEST(ParseFormula, PrintParseRoundTrip) {
    corpus::Rng rng(7);
    auto sig = sig_pq_f();
    for (int i = 0; i < 500; ++i) {
        std::size_t fresh = 0;
        auto f = corpus::random_fom(rng, {"x", "y"}, shape_pq_f(), 4, fresh);
        auto text = print_formula(f, sig.unary_functions);
        auto g = parse_formula(text, sig);
        EXPECT_TRUE(alpha_equal(f, g)) << text;
    }
}

TEST(FreeVars, Examples) {
    EXPECT_TRUE(free_vars(parse_formula("E x. A y. adj(x,y)", Signature{})).empty());
    EXPECT_EQ(free_vars(parse_formula("adj(x,y) & Emod[1,3] z. adj(y,z)", Signature{})),
              (std::vector<std::string>{"x", "y"}));
}

TEST(FreeVars, AgreesWithRecursiveDefinition) {
    corpus::Rng rng(11);
    for (int i = 0; i < 1000; ++i) {
        std::size_t fresh = 0;
        std::vector<std::string> vars{"x", "y", "z"};
        vars.resize(corpus::uniform(rng, 1, 3));
        auto f = corpus::random_fom(rng, vars, shape_pq_f(), 4, fresh);
        auto fv = free_vars(f);
        EXPECT_EQ(std::set<std::string>(fv.begin(), fv.end()), free_set(f));
        EXPECT_EQ(std::set<std::string>(fv.begin(), fv.end()).size(), fv.size());
    }
}

TEST(CollectTermTuples, BareVariablesAndRandom) {
    EXPECT_EQ(collect_term_tuples(parse_formula("adj(x,y) & x = y", Signature{})),
              (std::set<std::vector<std::size_t>>{{}}));
    corpus::Rng rng(12);
    auto sh = shape_pq_f();
    sh.max_term_depth = 3;
    for (int i = 0; i < 300; ++i) {
        auto f = corpus::random_qf(rng, {"x", "y"}, sh, 4);
        std::set<std::vector<std::size_t>> expect{{}};
        collect_tuples_by_hand(f, expect);
        EXPECT_EQ(collect_term_tuples(f), expect);
    }
    EXPECT_THROW(collect_term_tuples(parse_formula("E y. adj(x,y)", Signature{})), InputError);
}

TEST(SuffixClosure, AddsInnerPositions) {
    EXPECT_EQ(suffix_closure({{}, {1, 2, 1}}),
              (std::set<std::vector<std::size_t>>{{}, {1}, {2, 1}, {1, 2, 1}}));
}

TEST(EvalNaive, CycleAndTriangleDegrees) {
    GuidedStructure c4(corpus::cycle(4));
    GuidedStructure k3(corpus::complete(3));
    auto even = parse_formula("Emod[0,2] y. adj(x,y)", Signature{});
    auto odd = parse_formula("Emod[1,2] y. adj(x,y)", Signature{});
    for (Vertex v = 0; v < 4; ++v) EXPECT_TRUE(eval_naive(c4, even, {{"x", v}}));
    for (Vertex v = 0; v < 3; ++v) EXPECT_FALSE(eval_naive(k3, odd, {{"x", v}}));
}

TEST(EvalNaive, NestedModuloOnTriangle) {
    GuidedStructure k3(corpus::complete(3));
    auto f = parse_formula("Emod[0,2] y. Emod[1,2] z. adj(y,z)", Signature{});
    EXPECT_TRUE(eval_naive(k3, f, {}));
}

TEST(EvalNaive, UnboundVariableIsError) {
    GuidedStructure g(corpus::path(3));
    EXPECT_THROW(eval_naive(g, parse_formula("adj(x,y)", Signature{}), {{"x", 0}}), UnboundVariable);
}

TEST(EvalNaive, AgreesWithIndependentEvaluator) {
    corpus::Rng rng(21);
    for (int i = 0; i < 400; ++i) {
        std::size_t n = corpus::uniform(rng, 1, 10);
        auto m = corpus::random_structure(rng, corpus::erdos_renyi(rng, n, 0.35), 2, 2);
        std::size_t fresh = 0;
        auto f = corpus::random_fom(rng, {"x", "y"}, shape_pq_f(), 4, fresh);
        auto fv = free_vars(f);
        NaiveEvaluator ev(m, f);
        std::map<std::string, Vertex> env;
        for (int trial = 0; trial < 4; ++trial) {
            std::vector<Vertex> tuple;
            for (const auto& v : fv) {
                env[v] = Vertex(corpus::uniform(rng, 0, n - 1));
                tuple.push_back(env[v]);
            }
            EXPECT_EQ(ev.eval(tuple), oracle::holds(m, f, env)) << print_formula(f);
        }
    }
}

TEST(EvalNaive, AlphaRenamingInvariant) {
    corpus::Rng rng(22);
    for (int i = 0; i < 200; ++i) {
        auto m = corpus::random_structure(rng, corpus::erdos_renyi(rng, 7, 0.4), 2, 2);
        auto body = corpus::random_qf(rng, {"x", "y"}, shape_pq_f(), 3);
        auto f = f_mod_exists(1, 3, "y", body);
        auto g = f_mod_exists(1, 3, "w", rename_free(body, "y", "w"));
        for (Vertex v = 0; v < m.size(); ++v) EXPECT_EQ(eval_naive(m, f, {{"x", v}}), eval_naive(m, g, {{"x", v}}));
    }
}

TEST(EvalNaive, ModOneZeroAlwaysTrue) {
    corpus::Rng rng(23);
    for (int i = 0; i < 100; ++i) {
        auto m = corpus::random_structure(rng, corpus::erdos_renyi(rng, 6, 0.5), 2, 2);
        std::size_t fresh = 0;
        auto f = f_mod_exists(0, 1, "y", corpus::random_fom(rng, {"x", "y"}, shape_pq_f(), 3, fresh));
        for (Vertex v = 0; v < m.size(); ++v) EXPECT_TRUE(eval_naive(m, f, {{"x", v}}));
    }
}

TEST(EvalNaive, ModuloMatchesExplicitWitnessCountExhaustive) {
    corpus::Rng rng(24);
    for (std::size_t n = 1; n <= 8; ++n) {
        auto m = corpus::random_structure(rng, corpus::erdos_renyi(rng, n, 0.4), 2, 2);
        auto body = corpus::random_qf(rng, {"x", "y"}, shape_pq_f(), 3);
        NaiveEvaluator bev(m, f_and({f_eq(var_term("x"), var_term("x")), f_eq(var_term("y"), var_term("y")), body}));
        for (std::uint32_t b = 1; b <= 5; ++b)
            for (std::uint32_t a = 0; a < b; ++a) {
                NaiveEvaluator ev(m, f_and({f_eq(var_term("x"), var_term("x")), f_mod_exists(a, b, "y", body)}));
                for (Vertex x = 0; x < n; ++x) {
                    std::uint64_t hits = 0;
                    for (Vertex w = 0; w < n; ++w) hits += bev.eval(std::vector<Vertex>{x, w}) ? 1 : 0;
                    EXPECT_EQ(ev.eval(std::vector<Vertex>{x}), hits % b == a);
                }
            }
    }
}

TEST(EvalNaive, DeMorganDuality) {
    corpus::Rng rng(25);
    for (int i = 0; i < 200; ++i) {
        auto m = corpus::random_structure(rng, corpus::erdos_renyi(rng, 7, 0.4), 2, 2);
        std::size_t fresh = 0;
        auto body = corpus::random_fom(rng, {"x", "y"}, shape_pq_f(), 3, fresh);
        auto lhs = f_not(f_exists("y", body));
        auto rhs = f_forall("y", f_not(body));
        for (Vertex v = 0; v < m.size(); ++v) {
            EXPECT_EQ(eval_naive(m, lhs, {{"x", v}}), eval_naive(m, rhs, {{"x", v}}));
            EXPECT_EQ(eval_naive(m, f_forall("y", body), {{"x", v}}),
                      eval_naive(m, eliminate_forall(f_forall("y", body)), {{"x", v}}));
        }
    }
}

TEST(CountNaive, Examples) {
    GuidedStructure c4(corpus::cycle(4));
    EXPECT_EQ(count_naive(c4, parse_formula("adj(x,y)", Signature{})), 8u);
    GuidedStructure g(corpus::path(6));
    EXPECT_EQ(count_naive(g, parse_formula("x = x", Signature{})), 6u);
    GuidedStructure s(corpus::star(5));
    EXPECT_EQ(count_naive(s, parse_formula("Emod[0,2] y. adj(x,y)", Signature{})), 0u);
}

TEST(CountNaive, EqualsSumOfEvaluations) {
    corpus::Rng rng(26);
    for (int i = 0; i < 100; ++i) {
        auto m = corpus::random_structure(rng, corpus::erdos_renyi(rng, 6, 0.4), 2, 2);
        std::size_t fresh = 0;
        auto f = corpus::random_fom(rng, {"x", "y"}, shape_pq_f(), 3, fresh);
        EXPECT_EQ(count_naive(m, f), oracle::count(m, f, free_vars(f)));
    }
}
