#include <gtest/gtest.h>

#include "fom/coloring.hpp"
#include "fom/corpus.hpp"

using namespace fom;

namespace {

bool connected_mask(const Graph& g, std::uint32_t mask) {
    if (!mask) return false;
    std::uint32_t seen = mask & (~mask + 1), frontier = seen;
    while (frontier) {
        std::uint32_t next = 0;
        for (std::uint32_t f = frontier; f; f &= f - 1)
            for (Vertex w : g.neighbors(Vertex(__builtin_ctz(f)))) next |= 1u << w;
        next &= mask & ~seen;
        seen |= next;
        frontier = next;
    }
    return seen == mask;
}

// Definition check over every connected vertex subset.
bool centered_by_definition(const Graph& g, const std::vector<Color>& color, std::size_t p) {
    for (std::uint32_t mask = 1; mask < (1u << g.size()); ++mask) {
        if (!connected_mask(g, mask)) continue;
        std::map<Color, int> cnt;
        for (std::uint32_t f = mask; f; f &= f - 1) ++cnt[color[__builtin_ctz(f)]];
        if (cnt.size() >= p) continue;
        bool unique = false;
        for (auto [c, k] : cnt) unique |= k == 1;
        if (!unique) return false;
    }
    return true;
}

// Tree-depth by plain recursion over deletions.
std::size_t td_reference(const Graph& g, std::uint32_t mask) {
    if (!mask) return 0;
    // split into components
    std::uint32_t first = mask & (~mask + 1), comp = first, frontier = first;
    while (frontier) {
        std::uint32_t next = 0;
        for (std::uint32_t f = frontier; f; f &= f - 1)
            for (Vertex w : g.neighbors(Vertex(__builtin_ctz(f)))) next |= 1u << w;
        next &= mask & ~comp;
        comp |= next;
        frontier = next;
    }
    if (comp != mask) return std::max(td_reference(g, comp), td_reference(g, mask & ~comp));
    std::size_t best = SIZE_MAX;
    for (std::uint32_t f = mask; f; f &= f - 1) best = std::min(best, 1 + td_reference(g, mask & ~(f & (~f + 1))));
    return best;
}

CenteredColoring make(std::vector<Color> c, std::size_t p) {
    CenteredColoring out;
    out.p = p;
    out.num_colors = count_colors(c);
    out.color = std::move(c);
    return out;
}

}  // namespace

TEST(Validate, StarTwoColors) {
    Graph s = corpus::star(5);
    EXPECT_TRUE(validate_p_centered(s, make({0, 1, 1, 1, 1, 1}, 3)).ok);
}

TEST(Validate, PathAlternatingFails) {
    auto r = validate_p_centered(corpus::path(4), make({0, 1, 0, 1}, 3));
    EXPECT_FALSE(r.ok);
    EXPECT_GE(r.witness.size(), 3u);
}

TEST(Validate, AllDistinctIsAlwaysValid) {
    corpus::Rng rng(1);
    Graph g = corpus::erdos_renyi(rng, 10, 0.4);
    std::vector<Color> c(10);
    std::iota(c.begin(), c.end(), 0);
    for (std::size_t p = 1; p <= 6; ++p) EXPECT_TRUE(validate_p_centered(g, make(c, p)).ok);
}

TEST(Validate, AgreesWithConnectedSubgraphEnumeration) {
    corpus::Rng rng(2);
    int accepted = 0, rejected = 0;
    for (int i = 0; i < 300; ++i) {
        std::size_t n = corpus::uniform(rng, 1, 12);
        Graph g = corpus::erdos_renyi(rng, n, 0.3);
        std::size_t ncol = corpus::uniform(rng, 1, n);
        std::vector<Color> c(n);
        for (auto& x : c) x = Color(corpus::uniform(rng, 0, ncol - 1));
        std::size_t p = corpus::uniform(rng, 1, 5);
        bool expect = centered_by_definition(g, c, p);
        EXPECT_EQ(validate_p_centered(g, make(c, p)).ok, expect);
        (expect ? accepted : rejected)++;
    }
    EXPECT_GT(accepted, 20);
    EXPECT_GT(rejected, 20);
}

TEST(Validate, WitnessHasNoUniqueColor) {
    corpus::Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        Graph g = corpus::erdos_renyi(rng, 10, 0.35);
        std::vector<Color> c(10);
        for (auto& x : c) x = Color(corpus::uniform(rng, 0, 3));
        auto r = validate_p_centered(g, make(c, 4));
        if (r.ok) continue;
        std::map<Color, int> cnt;
        for (Vertex v : r.witness) ++cnt[c[v]];
        for (auto [col, k] : cnt) EXPECT_GE(k, 2);
        EXPECT_LT(cnt.size(), 4u);
    }
}

TEST(Compute, EdgelessUsesOneColor) {
    Graph g(7);
    for (auto backend : {ColoringBackend::Exact, ColoringBackend::Heuristic}) {
        auto c = compute_p_centered(g, 4, backend);
        EXPECT_EQ(c.num_colors, 1u);
        EXPECT_TRUE(validate_p_centered(g, c).ok);
    }
}

TEST(Compute, GridTenByTen) {
    Graph g = corpus::grid(10, 10);
    for (auto backend : {ColoringBackend::Exact, ColoringBackend::Heuristic}) {
        auto c = compute_p_centered(g, 3, backend);
        EXPECT_TRUE(validate_p_centered(g, c).ok);
        EXPECT_EQ(c.num_colors, count_colors(c.color));
    }
}

TEST(Compute, BothBackendsValidOnCorpus) {
    corpus::Rng rng(4);
    for (int i = 0; i < 60; ++i) {
        Graph g;
        switch (i % 4) {
            case 0: g = corpus::planar_subgraph(rng, 4, 5); break;
            case 1: g = corpus::bounded_degree(rng, 18, 4, 40); break;
            case 2: g = corpus::forest_graph(corpus::random_forest_parents(rng, 20, 4)); break;
            default: g = corpus::erdos_renyi(rng, 12, 0.25); break;
        }
        std::size_t p = corpus::uniform(rng, 1, 5);
        for (auto backend : {ColoringBackend::Exact, ColoringBackend::Heuristic}) {
            auto c = compute_p_centered(g, p, backend);
            EXPECT_TRUE(validate_p_centered(g, c).ok);
            if (g.size() <= 12) EXPECT_TRUE(centered_by_definition(g, c.color, p));
        }
    }
}

TEST(Compute, FewClassesHaveSmallTreedepth) {
    corpus::Rng rng(5);
    for (int i = 0; i < 30; ++i) {
        Graph g = corpus::planar_subgraph(rng, 3, 5);
        std::size_t p = 4;
        auto c = compute_p_centered(g, p, ColoringBackend::Heuristic);
        for (std::uint32_t pick = 1; pick < (1u << std::min<std::size_t>(c.num_colors, 12)); ++pick) {
            if (std::size_t(__builtin_popcount(pick)) > p - 1) continue;
            VertexSet keep;
            for (Vertex v = 0; v < g.size(); ++v)
                if (c.color[v] < 32 && (pick >> c.color[v] & 1)) keep.push_back(v);
            EXPECT_LE(treedepth_exact(induced_subgraph(g, keep)), std::size_t(__builtin_popcount(pick)));
        }
    }
}

TEST(Treedepth, SmallCases) {
    EXPECT_EQ(treedepth_exact(Graph(1)), 1u);
    EXPECT_EQ(treedepth_exact(Graph(6)), 1u);
    EXPECT_EQ(treedepth_exact(corpus::complete(4)), 4u);
    EXPECT_EQ(treedepth_exact(Graph(0)), 0u);
    for (std::size_t h = 1; h <= 4; ++h) EXPECT_EQ(treedepth_exact(corpus::path((1u << h) - 1)), h);
    EXPECT_EQ(treedepth_exact(corpus::path(8)), 4u);
    EXPECT_EQ(treedepth_exact(corpus::star(7)), 2u);
    EXPECT_THROW(treedepth_exact(Graph(30)), InputError);
}

TEST(Treedepth, MatchesReferenceRecursion) {
    corpus::Rng rng(6);
    for (int i = 0; i < 60; ++i) {
        std::size_t n = corpus::uniform(rng, 1, 9);
        Graph g = i % 2 ? corpus::erdos_renyi(rng, n, 0.35)
                        : corpus::forest_graph(corpus::random_forest_parents(rng, n, 3, 0.1));
        std::size_t td = treedepth_exact(g);
        EXPECT_EQ(td, td_reference(g, (1u << n) - 1));
        auto f = treedepth_forest(g);
        EXPECT_EQ(f.height, td);
        EXPECT_FALSE(closure_violation(g, f));
    }
}

TEST(ForestFromCentered, SingleVertex) {
    GuidedStructure m(1);
    auto f = forest_from_centered(m, {0});
    EXPECT_EQ(f.parent[0], 0u);
    EXPECT_EQ(f.level[0], 1u);
}

TEST(ForestFromCentered, PathOneTwoOne) {
    GuidedStructure m(corpus::path(3));
    auto f = forest_from_centered(m, {0, 1, 0});
    EXPECT_TRUE(f.is_root(1));
    EXPECT_EQ(f.parent[0], 1u);
    EXPECT_EQ(f.parent[2], 1u);
    EXPECT_EQ(f.level[0], 2u);
}

TEST(ForestFromCentered, TieBreakSmallestColorThenId) {
    GuidedStructure m(corpus::path(3));
    auto f = forest_from_centered(m, {2, 1, 0});
    EXPECT_TRUE(f.is_root(2));
}

TEST(ForestFromCentered, NotCenteredCarriesComponent) {
    GuidedStructure m(corpus::path(4));
    try {
        forest_from_centered(m, {0, 1, 0, 1});
        FAIL();
    } catch (const NotCenteredError& e) {
        EXPECT_EQ(e.component(), (VertexSet{0, 1, 2, 3}));
    }
}

TEST(ForestFromCentered, ClosureAndHeightOnPieces) {
    corpus::Rng rng(7);
    for (int i = 0; i < 80; ++i) {
        auto m = corpus::random_structure(rng, corpus::planar_subgraph(rng, 4, 4), 1, 1);
        Graph g = gaifman(m);
        std::size_t p = corpus::uniform(rng, 2, 5);
        auto c = compute_p_centered(g, p + 1);
        // pieces: at most p colors
        for (Color a = 0; a < c.num_colors; ++a) {
            VertexSet piece;
            for (Vertex v = 0; v < g.size(); ++v)
                if (c.color[v] >= a && c.color[v] < a + p) piece.push_back(v);
            auto sub = restrict(m, piece);
            std::vector<Color> sc;
            for (Vertex v : piece) sc.push_back(c.color[v]);
            auto f = forest_from_centered(sub, sc);
            EXPECT_FALSE(closure_violation(gaifman(sub), f));
            EXPECT_LE(f.height, count_colors(sc));
        }
    }
}
