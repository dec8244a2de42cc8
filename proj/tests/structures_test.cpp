#include <gtest/gtest.h>

#include "fom/corpus.hpp"
#include "fom/structures.hpp"

using namespace fom;

namespace {

corpus::Rng rng_for(std::uint64_t seed) { return corpus::Rng(seed); }

// Gaifman adjacency straight from the definition.
bool gaifman_adjacent(const GuidedStructure& m, Vertex u, Vertex v) {
    if (u == v) return false;
    if (m.adjacent(u, v)) return true;
    for (std::size_t f = 0; f < m.function_count(); ++f)
        if (m.function(f)[u] == v || m.function(f)[v] == u) return true;
    return false;
}

}  // namespace

TEST(Gaifman, FunctionFreeEqualsEdges) {
    auto rng = rng_for(1);
    GuidedStructure m(corpus::erdos_renyi(rng, 12, 0.3));
    EXPECT_EQ(gaifman(m), m.graph());
}

TEST(Gaifman, SelfMapsAddNothing) {
    GuidedStructure m(2);
    m.add_function("f");
    EXPECT_EQ(gaifman(m).num_edges(), 0u);
}

TEST(Gaifman, MatchesPairwiseDefinition) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        auto rng = rng_for(seed);
        auto m = corpus::random_structure(rng, corpus::erdos_renyi(rng, 10, 0.3), 2, 2);
        Graph g = gaifman(m);
        for (Vertex u = 0; u < m.size(); ++u)
            for (Vertex v = 0; v < m.size(); ++v) EXPECT_EQ(g.has_edge(u, v), gaifman_adjacent(m, u, v));
    }
}

TEST(Restrict, WholeDomainIsIdentity) {
    auto rng = rng_for(2);
    auto m = corpus::random_structure(rng, corpus::grid(3, 3), 2, 1);
    VertexSet all(m.size());
    for (Vertex v = 0; v < m.size(); ++v) all[v] = v;
    EXPECT_EQ(restrict(m, all), m);
}

TEST(Restrict, ClampsFunctionLeavingSubset) {
    GuidedStructure m(2);
    m.add_edge(0, 1);
    m.add_function("f", {1, 1});
    auto r = restrict(m, {0});
    EXPECT_EQ(r.function(0)[0], 0u);
}

TEST(Restrict, MatchesDefinitionAndComposes) {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        auto rng = rng_for(100 + seed);
        auto m = corpus::random_structure(rng, corpus::erdos_renyi(rng, 9, 0.35), 2, 2);
        VertexSet x, y;
        for (Vertex v = 0; v < m.size(); ++v)
            if (corpus::coin(rng, 0.7)) {
                x.push_back(v);
                if (corpus::coin(rng, 0.6)) y.push_back(v);
            }
        auto r = restrict(m, x);
        ASSERT_EQ(r.size(), x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            for (std::size_t j = 0; j < x.size(); ++j)
                EXPECT_EQ(r.adjacent(Vertex(i), Vertex(j)), m.adjacent(x[i], x[j]));
            for (std::size_t k = 0; k < m.mark_count(); ++k) EXPECT_EQ(r.marked(k, Vertex(i)), m.marked(k, x[i]));
            for (std::size_t f = 0; f < m.function_count(); ++f) {
                Vertex img = m.function(f)[x[i]];
                Vertex expect = contains(x, img) ? Vertex(std::lower_bound(x.begin(), x.end(), img) - x.begin()) : Vertex(i);
                EXPECT_EQ(r.function(f)[i], expect);
            }
        }
        EXPECT_TRUE(validate_guided(r).empty());
        // Y as positions inside X
        VertexSet y_in_x;
        for (Vertex v : y) y_in_x.push_back(Vertex(std::lower_bound(x.begin(), x.end(), v) - x.begin()));
        EXPECT_EQ(restrict(r, y_in_x), restrict(m, y));
    }
}

TEST(Restrict, RejectsOutsideDomain) {
    GuidedStructure m(3);
    EXPECT_THROW(restrict(m, {0, 5}), InputError);
}

TEST(ExpandMonadic, EmptyIsIdentityAndReductInverts) {
    GuidedStructure m(2);
    m.add_edge(0, 1);
    EXPECT_EQ(expand_monadic(m, {}), m);
    auto e = expand_monadic(m, {{"P1", {0}}});
    EXPECT_TRUE(e.has_mark("P1"));
    EXPECT_EQ(reduct_marks(e, {}), m);
}

TEST(ExpandMonadic, ChainedExpansionsCommute) {
    auto rng = rng_for(3);
    auto m = corpus::random_structure(rng, corpus::grid(2, 4), 1, 1);
    std::map<std::string, VertexSet> a{{"A", {0, 3}}}, b{{"B", {1, 2, 7}}};
    auto ab = expand_monadic(expand_monadic(m, a), b);
    auto ba = expand_monadic(expand_monadic(m, b), a);
    EXPECT_EQ(ab, ba);
    EXPECT_EQ(gaifman(ab), gaifman(m));
}

TEST(ExpandMonadic, ClashIsError) {
    GuidedStructure m(2);
    m.add_mark("P", {0});
    m.add_function("f");
    EXPECT_THROW(expand_monadic(m, {{"P", {1}}}), InputError);
    EXPECT_THROW(expand_monadic(m, {{"f", {1}}}), InputError);
}

TEST(ValidateGuided, FunctionFreeGraphPasses) {
    auto rng = rng_for(4);
    EXPECT_TRUE(validate_guided(GuidedStructure(corpus::erdos_renyi(rng, 15, 0.2))).empty());
}

TEST(ValidateGuided, UnguidedFunctionReported) {
    GuidedStructure m(2);
    m.add_function("f", {1, 1});
    auto v = validate_guided(m);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].kind, Violation::Kind::NotGuided);
    EXPECT_EQ(v[0].function, "f");
    EXPECT_EQ(v[0].x, 0u);
}

TEST(ValidateGuided, InjectedViolationsAllDetected) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto rng = rng_for(200 + seed);
        auto m = corpus::random_structure(rng, corpus::erdos_renyi(rng, 10, 0.3), 0, 2);
        ASSERT_TRUE(validate_guided(m).empty());
        std::set<std::pair<std::size_t, Vertex>> injected;
        for (int k = 0; k < 4; ++k) {
            std::size_t f = corpus::uniform(rng, 0, 1);
            auto x = Vertex(corpus::uniform(rng, 0, m.size() - 1));
            auto y = Vertex(corpus::uniform(rng, 0, m.size() - 1));
            if (x == y || m.adjacent(x, y)) continue;
            m.set_function(f, x, y);
            injected.insert({f, x});
        }
        std::set<std::pair<std::size_t, Vertex>> found;
        for (const auto& v : validate_guided(m)) found.insert({*m.function_index(v.function), v.x});
        EXPECT_EQ(found, injected);
    }
}

TEST(ValidateGuided, AsymmetricAdjacencyReported) {
    GuidedStructure m(Graph::from_adjacency({{1}, {}}));
    auto v = validate_guided(m);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].kind, Violation::Kind::Asymmetric);
}

TEST(GraphFormat, RoundTrip) {
    std::string text =
        "# sample\n"
        "n 4\n"
        "v 0 P Q\n"
        "v 2 Q\n"
        "e 0 1\n"
        "e 1 2\n"
        "e 2 3\n"
        "f g 1 2\n"
        "f g 3 2\n";
    auto m = parse_graph(text);
    EXPECT_EQ(m.size(), 4u);
    EXPECT_EQ(m.mark_set("Q"), (VertexSet{0, 2}));
    EXPECT_EQ(m.function(0)[1], 2u);
    EXPECT_EQ(m.function(0)[0], 0u);
    EXPECT_EQ(parse_graph(print_graph(m)), m);
}

TEST(GraphFormat, ErrorsCarryLineNumbers) {
    auto line_of = [](const std::string& text) -> std::size_t {
        try {
            parse_graph(text);
        } catch (const ParseError& e) {
            return e.line();
        }
        return 0;
    };
    EXPECT_EQ(line_of("n 3\nx 1 2\n"), 2u);
    EXPECT_EQ(line_of("n 3\ne 0 1\ne 1 0\n"), 3u);
    EXPECT_EQ(line_of("n 3\ne 0 0\n"), 2u);
    EXPECT_EQ(line_of("n 3\ne 0 1\nf g 0 2\n"), 3u);
    EXPECT_EQ(line_of("n 3\ne 0 7\n"), 2u);
    EXPECT_EQ(line_of("e 0 1\n"), 1u);
}
