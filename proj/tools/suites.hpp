#pragma once

// Oracle-equivalence suites shared by the acceptance binary and `fomc selftest`.

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fom/coloring.hpp"
#include "fom/corpus.hpp"
#include "fom/elimination.hpp"
#include "fom/forest_codec.hpp"
#include "fom/forest_eval.hpp"
#include "fom/logic.hpp"
#include "fom/matrix.hpp"
#include "fom/structures.hpp"
#include "fom/vertex_minor.hpp"

namespace fom::suites {

struct SuiteResult {
    std::string id;
    std::string name;
    bool gating = true;
    std::size_t cases = 0;
    std::size_t failures = 0;
    std::vector<std::string> notes;
    std::vector<std::string> first_failures;
    bool extra_ok = true;  // side conditions such as case counters

    bool passed() const { return failures == 0 && extra_ok && cases > 0; }

    void fail(const std::string& why) {
        ++failures;
        if (first_failures.size() < 5) first_failures.push_back(why);
    }
};

// scale 1.0 is the acceptance size; selftest runs smaller.
struct SuiteConfig {
    double scale = 1.0;
    std::uint64_t seed = 20240611;

    std::size_t count(std::size_t full) const {
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(static_cast<double>(full) * scale)));
    }
};

namespace detail {

inline std::size_t mod_quantifiers(const Formula& f) {
    std::size_t c = f->op == Op::ModExists ? 1 : 0;
    for (const auto& k : f->kids) c += mod_quantifiers(k);
    return c;
}

template <class Visit>
void for_tuples(std::size_t n, std::size_t k, Visit&& visit) {
    if (n == 0 && k > 0) return;
    std::vector<Vertex> t(k, 0);
    while (true) {
        visit(t);
        std::size_t i = 0;
        while (i < k && ++t[i] == n) t[i++] = 0;
        if (i == k) break;
    }
}

inline std::vector<std::vector<Vertex>> some_tuples(corpus::Rng& rng, std::size_t n, std::size_t k, std::size_t cap) {
    std::vector<std::vector<Vertex>> out;
    double total = std::pow(static_cast<double>(n), static_cast<double>(k));
    if (total <= static_cast<double>(cap)) {
        for_tuples(n, k, [&](const std::vector<Vertex>& t) { out.push_back(t); });
        return out;
    }
    for (std::size_t i = 0; i < cap; ++i) {
        std::vector<Vertex> t(k);
        for (auto& x : t) x = static_cast<Vertex>(corpus::uniform(rng, 0, n - 1));
        out.push_back(t);
    }
    return out;
}

inline std::string tuple_text(const std::vector<Vertex>& t) {
    std::string s = "(";
    for (std::size_t i = 0; i < t.size(); ++i) s += (i ? "," : "") + std::to_string(t[i]);
    return s + ")";
}

inline Graph family_graph(corpus::Rng& rng, std::size_t family) {
    switch (family % 4) {
        case 0: return corpus::grid(corpus::uniform(rng, 1, 15), corpus::uniform(rng, 2, 15));
        case 1: return corpus::planar_subgraph(rng, corpus::uniform(rng, 2, 10), corpus::uniform(rng, 2, 10));
        case 2: return corpus::bounded_degree(rng, corpus::uniform(rng, 4, 80), 4, 200);
        default: return corpus::forest_graph(corpus::random_forest_parents(rng, corpus::uniform(rng, 2, 80), corpus::uniform(rng, 2, 5)));
    }
}

inline ColoredForest colored_forest(corpus::Rng& rng, const std::vector<Vertex>& parent, double mark_prob) {
    std::map<std::string, VertexSet> marks;
    for (const char* name : {"P", "Q"}) {
        VertexSet s;
        for (Vertex v = 0; v < parent.size(); ++v)
            if (corpus::coin(rng, mark_prob)) s.push_back(v);
        marks[name] = s;
    }
    return assemble_forest(forest_from_parents(parent), marks, {}, {"P", "Q"});
}

// Rooted forests with parent[v] < v or v a root, height <= h, deduplicated up
// to isomorphism.
inline std::vector<std::vector<Vertex>> forests_up_to_iso(std::size_t max_n, std::size_t h) {
    std::vector<std::vector<Vertex>> out;
    std::set<std::string> seen;
    std::function<std::string(const std::vector<Vertex>&, Vertex, const std::vector<std::vector<Vertex>>&)> code =
        [&](const std::vector<Vertex>& par, Vertex v, const std::vector<std::vector<Vertex>>& kids) {
            std::vector<std::string> parts;
            for (Vertex c : kids[v]) parts.push_back(code(par, c, kids));
            std::sort(parts.begin(), parts.end());
            std::string s = "(";
            for (const auto& p : parts) s += p;
            return s + ")";
        };
    for (std::size_t n = 1; n <= max_n; ++n) {
        std::vector<Vertex> parent(n, 0);
        std::vector<std::size_t> depth(n, 1);
        std::function<void(Vertex)> extend = [&](Vertex v) {
            if (v == n) {
                std::vector<std::vector<Vertex>> kids(n);
                std::vector<std::string> trees;
                for (Vertex u = 0; u < n; ++u)
                    if (parent[u] != u) kids[parent[u]].push_back(u);
                for (Vertex u = 0; u < n; ++u)
                    if (parent[u] == u) trees.push_back(code(parent, u, kids));
                std::sort(trees.begin(), trees.end());
                std::string key;
                for (const auto& t : trees) key += t;
                if (seen.insert(key).second) out.push_back(parent);
                return;
            }
            parent[v] = v;
            depth[v] = 1;
            extend(v + 1);
            for (Vertex u = 0; u < v; ++u) {
                if (depth[u] >= h) continue;
                parent[v] = u;
                depth[v] = depth[u] + 1;
                extend(v + 1);
            }
        };
        extend(0);
    }
    return out;
}

inline bool connected_mask(const Graph& g, std::uint32_t mask) {
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

inline bool centered_by_definition(const Graph& g, const std::vector<Color>& color, std::size_t p) {
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

using Dense = std::vector<std::vector<std::uint32_t>>;

inline Dense dense_eval(const MatrixExpr& e, std::uint32_t p, std::size_t n, const std::map<std::string, Dense>& named) {
    auto zero = [&] { return Dense(n, std::vector<std::uint32_t>(n, 0)); };
    switch (e->op) {
        case MatOp::Input: return named.at(e->name);
        case MatOp::Const: {
            auto c = zero();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) c[i][j] = e->constant->entry(i, j);
            return c;
        }
        case MatOp::Identity: {
            auto c = zero();
            for (std::size_t i = 0; i < n; ++i) c[i][i] = 1;
            return c;
        }
        case MatOp::AllOnes: return Dense(n, std::vector<std::uint32_t>(n, 1));
        case MatOp::Transpose: {
            auto a = dense_eval(e->args[0], p, n, named), c = zero();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) c[i][j] = a[j][i];
            return c;
        }
        case MatOp::Scalar: {
            auto a = dense_eval(e->args[0], p, n, named);
            auto s = static_cast<std::uint32_t>(((e->scalar % static_cast<std::int64_t>(p)) + p) % p);
            for (auto& r : a)
                for (auto& x : r) x = x * s % p;
            return a;
        }
        default: break;
    }
    auto a = dense_eval(e->args[0], p, n, named), b = dense_eval(e->args[1], p, n, named), c = zero();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (e->op == MatOp::Add) c[i][j] = (a[i][j] + b[i][j]) % p;
            if (e->op == MatOp::Hadamard) c[i][j] = a[i][j] * b[i][j] % p;
            if (e->op == MatOp::Mul)
                for (std::size_t k = 0; k < n; ++k) c[i][j] = (c[i][j] + a[i][k] * b[k][j]) % p;
        }
    return c;
}

inline SparseFieldMatrix random_sparse(corpus::Rng& rng, std::uint32_t p, std::size_t n, double per_row) {
    SparseFieldMatrix m(p, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (corpus::coin(rng, per_row / static_cast<double>(n))) m.set(i, j, corpus::uniform(rng, 1, p - 1));
    return m;
}

inline SparseFieldMatrix random_dense(corpus::Rng& rng, std::uint32_t p, std::size_t n) {
    SparseFieldMatrix m(p, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m.set(i, j, corpus::uniform(rng, 0, p - 1));
    return m;
}

inline SparseFieldMatrix random_low_srank(corpus::Rng& rng, std::uint32_t p, std::size_t n, std::size_t blocks) {
    SparseFieldMatrix m(p, n);
    for (std::size_t b = 0; b < blocks; ++b) {
        auto d = static_cast<std::uint32_t>(corpus::uniform(rng, 1, p - 1));
        std::vector<std::size_t> rows, cols;
        for (std::size_t i = 0; i < n; ++i) {
            if (corpus::coin(rng, 0.4)) rows.push_back(i);
            if (corpus::coin(rng, 0.4)) cols.push_back(i);
        }
        for (auto i : rows)
            for (auto j : cols) m.set(i, j, d);
    }
    return m;
}

inline MatrixExpr random_expr(corpus::Rng& rng, std::size_t depth, const std::vector<std::string>& names) {
    if (depth == 0 || corpus::coin(rng, 0.2)) {
        auto k = corpus::uniform(rng, 0, names.size() + 1);
        if (k == names.size()) return m_ones();
        if (k > names.size()) return m_identity();
        return m_input(names[k]);
    }
    switch (corpus::uniform(rng, 0, 4)) {
        case 0: return m_add(random_expr(rng, depth - 1, names), random_expr(rng, depth - 1, names));
        case 1: return m_mul(random_expr(rng, depth - 1, names), random_expr(rng, depth - 1, names));
        case 2: return m_hadamard(random_expr(rng, depth - 1, names), random_expr(rng, depth - 1, names));
        case 3: return m_transpose(random_expr(rng, depth - 1, names));
        default: return m_scalar(static_cast<std::int64_t>(corpus::uniform(rng, 0, 8)) - 4, random_expr(rng, depth - 1, names));
    }
}

inline std::size_t rank_mod_p(Dense a, std::uint32_t p) {
    std::size_t n = a.size(), rank = 0;
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t r = rank;
        while (r < n && a[r][c] == 0) ++r;
        if (r == n) continue;
        std::swap(a[r], a[rank]);
        std::uint32_t iv = 1;
        while (a[rank][c] * iv % p != 1) ++iv;
        for (auto& x : a[rank]) x = x * iv % p;
        for (std::size_t o = 0; o < n; ++o) {
            if (o == rank || a[o][c] == 0) continue;
            auto f = a[o][c];
            for (std::size_t x = 0; x < n; ++x) a[o][x] = (a[o][x] + (p - f) * a[rank][x]) % p;
        }
        ++rank;
    }
    return rank;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

// 1. eval_pipeline against eval_naive on the modulo-prenex fragment.
inline SuiteResult master_oracle(const SuiteConfig& cfg) {
    SuiteResult r{"1", "master oracle equivalence"};
    corpus::Rng rng(cfg.seed + 1);
    std::size_t instances = cfg.count(2000), tuples = 0;
    std::array<std::size_t, 4> per_family{};
    for (std::size_t i = 0; i < instances; ++i) {
        std::size_t family = i % 4;
        auto g = detail::family_graph(rng, family);
        std::size_t fns = corpus::uniform(rng, 0, 1);
        auto m = corpus::random_structure(rng, std::move(g), 2, fns);
        corpus::FormulaShape sh;
        sh.marks = {"P", "Q"};
        sh.functions = fns;
        sh.max_modulus = 5;
        std::vector<std::string> free;
        for (std::size_t k = corpus::uniform(rng, 0, 2), j = 0; j < k; ++j) free.push_back("x" + std::to_string(j));
        Formula phi;
        do {
            std::size_t fresh = 0;
            phi = corpus::random_modulo_prenex(rng, free, sh, 2, fresh);
        } while (detail::mod_quantifiers(phi) > 2);
        ++r.cases;
        ++per_family[family];
        try {
            PipelineEvaluator fast(m, phi);
            NaiveEvaluator slow(m, phi);
            const auto& fv = slow.free_variables();
            for (const auto& t : detail::some_tuples(rng, m.size(), fv.size(), 12)) {
                Valuation nu;
                for (std::size_t j = 0; j < t.size(); ++j) nu[fv[j]] = t[j];
                ++tuples;
                if (fast.eval(nu) != slow.eval(t)) {
                    r.fail(print_formula(phi, m.signature().unary_functions) + " at " + detail::tuple_text(t) + ", n=" +
                           std::to_string(m.size()));
                    break;
                }
            }
        } catch (const std::exception& e) {
            r.fail(std::string("exception: ") + e.what());
        }
    }
    r.notes.push_back(std::to_string(tuples) + " tuples; grids/planar/degree<=4/forests = " + std::to_string(per_family[0]) + "/" +
                      std::to_string(per_family[1]) + "/" + std::to_string(per_family[2]) + "/" + std::to_string(per_family[3]));
    return r;
}

// 2. The counting configuration of the residue illustration.
inline SuiteResult figure_golden(const SuiteConfig&) {
    SuiteResult r{"2", "residue illustration golden"};
    std::vector<Vertex> parent{0, 0, 0, 0, 1, 1, 2, 2, 3, 3, 6, 7};
    auto y = assemble_forest(forest_from_parents(parent), {{"Q", {1, 2, 3}}, {"R", {4, 5, 6, 7, 8, 9}}}, {}, {"Q", "R"});
    const Vertex s = 0, v4 = 1, a = 2;
    std::vector<Vertex> tuple{11, 6, 10, 1};
    auto vw = tuple;
    vw.push_back(8);
    auto pattern = shape_at(y, vw);

    // raw counts with a modulus larger than any count
    PatternResidue raw(y, pattern, 1000, "raw", {"x1", "x2", "x3", "x4"});
    auto ystar = raw.expanded(y);
    auto has = [&](const std::string& mark, Vertex v) {
        auto k = ystar.mark_index(mark);
        return k && ystar.marked(*k, v);
    };
    r.cases = 4;
    if (!has(raw.blue_mark(6), s)) r.fail("blue label at s is not 6");
    if (!has(raw.green_mark(2), v4) || !has(raw.green_mark(2), a)) r.fail("green labels at the children are not 2 and 2");
    CaseCounters cases;
    auto residue = count_instances_mod(y, pattern, tuple, 3, &cases);
    if (residue != 2) r.fail("count_instances_mod returned " + std::to_string(residue) + " instead of 2");
    if (cases.below != 1) r.fail("the count did not go through the below-anchor case");
    PatternResidue mod3(y, pattern, 3, "fig", {"x1", "x2", "x3", "x4"});
    auto y3 = mod3.expanded(y);
    Valuation nu{{"x1", 11}, {"x2", 6}, {"x3", 10}, {"x4", 1}};
    for (std::uint64_t c = 0; c < 3; ++c)
        if (eval_naive(y3, mod3.formula(c), nu) != (c == 2)) r.fail("residue formula wrong for c=" + std::to_string(c));
    r.notes.push_back("6 - (2+2) = " + std::to_string(residue) + " mod 3");
    return r;
}

// 3. decode(encode(M, F)) == M.
inline SuiteResult codec_roundtrip(const SuiteConfig& cfg) {
    SuiteResult r{"3", "forest codec roundtrip"};
    corpus::Rng rng(cfg.seed + 3);
    std::size_t random_cases = cfg.count(500);
    for (std::size_t i = 0; i < random_cases; ++i) {
        auto [m, parent] = corpus::random_bounded_td(rng, corpus::uniform(rng, 1, 24), 5, 2, 1);
        ++r.cases;
        try {
            if (!(decode_IS(encode_IY(m, forest_from_parents(parent))) == m)) r.fail("random structure " + std::to_string(i));
        } catch (const std::exception& e) {
            r.fail(std::string("exception: ") + e.what());
        }
    }
    // every structure on at most 4 vertices with at most 2 marks and 1 function
    std::size_t exhaustive = 0, max_n = cfg.scale >= 1.0 ? 4 : 3;
    for (std::size_t n = 1; n <= max_n; ++n) {
        std::vector<std::pair<Vertex, Vertex>> pairs;
        for (Vertex u = 0; u < n; ++u)
            for (Vertex v = u + 1; v < n; ++v) pairs.emplace_back(u, v);
        for (std::uint32_t emask = 0; emask < (1u << pairs.size()); ++emask) {
            Graph g(n);
            for (std::size_t e = 0; e < pairs.size(); ++e)
                if (emask >> e & 1) g.add_edge(pairs[e].first, pairs[e].second);
            auto forest = treedepth_forest(g);
            // function choices: none, or every guided map
            std::vector<std::optional<std::vector<Vertex>>> fchoices{std::nullopt};
            std::vector<Vertex> img(n);
            std::function<void(Vertex)> pick = [&](Vertex v) {
                if (v == n) {
                    fchoices.push_back(img);
                    return;
                }
                img[v] = v;
                pick(v + 1);
                for (Vertex w : g.neighbors(v)) {
                    img[v] = w;
                    pick(v + 1);
                }
            };
            pick(0);
            std::uint32_t subsets = 1u << n;
            for (std::size_t marks = 0; marks <= 2; ++marks) {
                std::uint32_t combos = marks == 0 ? 1 : marks == 1 ? subsets : subsets * subsets;
                for (std::uint32_t mc = 0; mc < combos; ++mc) {
                    for (const auto& fc : fchoices) {
                        GuidedStructure m(g);
                        for (std::size_t k = 0; k < marks; ++k) {
                            std::uint32_t set = k == 0 ? mc % subsets : mc / subsets;
                            VertexSet vs;
                            for (Vertex v = 0; v < n; ++v)
                                if (set >> v & 1) vs.push_back(v);
                            m.add_mark(k == 0 ? "P" : "Q", vs);
                        }
                        if (fc) m.add_function("f", *fc);
                        ++exhaustive;
                        ++r.cases;
                        try {
                            if (!(decode_IS(encode_IY(m, forest)) == m)) r.fail("exhaustive structure on " + std::to_string(n) + " vertices");
                        } catch (const std::exception& e) {
                            r.fail(std::string("exception: ") + e.what());
                        }
                    }
                }
            }
        }
    }
    r.notes.push_back(std::to_string(random_cases) + " random (td<=5) + " + std::to_string(exhaustive) + " exhaustive (n<=" +
                      std::to_string(max_n) + ")");
    return r;
}

// 4. Extensional contract of the forest modulo elimination.
inline SuiteResult forest_elimination(const SuiteConfig& cfg) {
    SuiteResult r{"4", "forest modulo-elimination"};
    corpus::Rng rng(cfg.seed + 4);
    corpus::FormulaShape sh;
    sh.marks = {"P", "Q"};
    sh.functions = 1;
    sh.max_term_depth = 2;
    CaseCounters cases;
    std::size_t tuples = 0;
    auto check = [&](const ColoredForest& y, bool all_tuples) {
        std::size_t k = corpus::uniform(rng, 0, 2);
        std::vector<std::string> vars;
        for (std::size_t j = 0; j < k; ++j) vars.push_back("x" + std::to_string(j));
        vars.push_back("w");
        std::size_t fresh = 0;
        auto sigma = corpus::coin(rng, 0.7) ? corpus::random_qf(rng, vars, sh, 3) : corpus::random_fom(rng, vars, sh, 2, fresh);
        auto b = static_cast<std::uint32_t>(corpus::uniform(rng, 2, 5));
        auto c = static_cast<std::uint32_t>(corpus::uniform(rng, 0, b - 1));
        ++r.cases;
        try {
            auto elim = eliminate_mod_on_forest(y, sigma, "w", c, b);
            const auto& outer = elim.free_variables();
            NaiveEvaluator body(y.y, sigma);
            auto ts = all_tuples ? detail::some_tuples(rng, y.size(), outer.size(), SIZE_MAX)
                                 : detail::some_tuples(rng, y.size(), outer.size(), 8);
            for (const auto& t : ts) {
                Valuation nu;
                for (std::size_t j = 0; j < outer.size(); ++j) nu[outer[j]] = t[j];
                std::uint64_t direct = 0;
                for (Vertex w = 0; w < y.size(); ++w) {
                    nu["w"] = w;
                    direct += body.eval(nu) ? 1 : 0;
                }
                ++tuples;
                if (elim.residue(t, &cases) != direct % b || elim.zeta(t) != (direct % b == c)) {
                    r.fail(print_formula(sigma, {"pi"}) + " at " + detail::tuple_text(t));
                    return;
                }
            }
        } catch (const std::exception& e) {
            r.fail(std::string("exception: ") + e.what());
        }
    };
    auto shapes = detail::forests_up_to_iso(cfg.scale >= 1.0 ? 8 : 6, 3);
    for (const auto& parent : shapes)
        for (int rep = 0; rep < 2; ++rep) check(detail::colored_forest(rng, parent, 0.4), true);
    std::size_t random = cfg.count(10000);
    for (std::size_t i = 0; i < random; ++i) {
        auto parent = corpus::random_forest_parents(rng, corpus::uniform(rng, 9, 40), corpus::uniform(rng, 2, 5), 0.2);
        check(detail::colored_forest(rng, parent, 0.35), false);
    }
    std::size_t need = cfg.scale >= 1.0 ? 100 : 10;
    r.extra_ok = cases.anchored >= need && cases.detached >= need && cases.below >= need;
    r.notes.push_back(std::to_string(shapes.size()) + " forest shapes exhaustively, " + std::to_string(random) + " random forests, " +
                      std::to_string(tuples) + " tuples; cases anchored/detached/below = " + std::to_string(cases.anchored) + "/" +
                      std::to_string(cases.detached) + "/" + std::to_string(cases.below));
    return r;
}

// 5. Both coloring backends are p-centered; the validator matches the definition.
inline SuiteResult coloring_validity(const SuiteConfig& cfg) {
    SuiteResult r{"5", "coloring validity"};
    corpus::Rng rng(cfg.seed + 5);
    std::size_t graphs = cfg.count(120);
    for (std::size_t i = 0; i < graphs; ++i) {
        auto g = detail::family_graph(rng, i);
        for (std::size_t p : {2, 3, 4})
            for (auto backend : {ColoringBackend::Heuristic, ColoringBackend::Exact}) {
                ++r.cases;
                try {
                    auto c = compute_p_centered(g, p, backend);
                    if (!validate_p_centered(g, c).ok)
                        r.fail("graph " + std::to_string(i) + " p=" + std::to_string(p) +
                               (backend == ColoringBackend::Exact ? " exact" : " heuristic"));
                } catch (const std::exception& e) {
                    r.fail(std::string("exception: ") + e.what());
                }
            }
    }
    std::size_t checks = cfg.count(300);
    for (std::size_t i = 0; i < checks; ++i) {
        std::size_t n = corpus::uniform(rng, 1, 12);
        Graph g = corpus::erdos_renyi(rng, n, 0.3);
        std::size_t ncol = corpus::uniform(rng, 1, n);
        CenteredColoring c;
        c.p = corpus::uniform(rng, 1, 5);
        c.color.resize(n);
        for (auto& x : c.color) x = Color(corpus::uniform(rng, 0, ncol - 1));
        c.num_colors = count_colors(c.color);
        ++r.cases;
        if (validate_p_centered(g, c).ok != detail::centered_by_definition(g, c.color, c.p))
            r.fail("validator disagrees with connected-subgraph enumeration");
    }
    r.notes.push_back(std::to_string(graphs) + " corpus graphs x p in {2,3,4} x 2 backends; " + std::to_string(checks) +
                      " validator cross-checks (n<=12)");
    return r;
}

// 6. Matrix calculus against dense arithmetic.
inline SuiteResult matrix_oracle(const SuiteConfig& cfg) {
    SuiteResult r{"6", "matrix oracle equivalence"};
    corpus::Rng rng(cfg.seed + 6);
    const std::uint32_t fields[] = {2, 3, 5};
    std::size_t exprs = cfg.count(500);
    for (std::size_t t = 0; t < exprs; ++t) {
        std::uint32_t p = fields[t % 3];
        std::size_t n = corpus::uniform(rng, 1, 64);
        ExprInputs in;
        std::map<std::string, detail::Dense> named;
        for (const char* name : {"A", "B", "C"}) {
            auto m = detail::random_sparse(rng, p, n, 2.5);
            named[name] = m.dense();
            in.sparse.emplace(name, std::move(m));
        }
        in.constants.emplace("K", build_marking(detail::random_low_srank(rng, p, n, 2), 12));
        named["K"] = in.constants.at("K").materialize().dense();
        auto e = detail::random_expr(rng, corpus::uniform(rng, 1, 4), {"A", "B", "C", "K"});
        ++r.cases;
        try {
            if (eval_expr(e, in).materialize().dense() != detail::dense_eval(e, p, n, named))
                r.fail(print_expr(e) + " over F_" + std::to_string(p) + ", n=" + std::to_string(n));
        } catch (const std::exception& ex) {
            r.fail(std::string("exception: ") + ex.what());
        }
    }
    std::size_t markings = cfg.count(200), built = 0;
    while (built < markings) {
        std::uint32_t p = fields[built % 3];
        std::size_t n = corpus::uniform(rng, 1, 40);
        auto m = detail::random_low_srank(rng, p, n, corpus::uniform(rng, 1, 3));
        if (srank(m) > 6) continue;
        ++built;
        ++r.cases;
        auto s = build_marking(m, 6);
        bool ok = true;
        for (std::size_t i = 0; i < n && ok; ++i)
            for (std::size_t j = 0; j < n && ok; ++j)
                for (std::uint32_t d = 1; d < p; ++d)
                    if (s.query_qd(d, i, j) != (m.get(i, j) == d)) ok = false;
        if (!ok) r.fail("marking does not reconstruct a matrix with srank " + std::to_string(srank(m)));
    }
    for (std::uint32_t p : fields) {
        SparseFieldMatrix j(p, 17);
        for (std::size_t a = 0; a < 17; ++a)
            for (std::size_t b = 0; b < 17; ++b) j.set(a, b, 1);
        ++r.cases;
        if (srank(j) != 1) r.fail("srank(J) != 1 over F_" + std::to_string(p));
    }
    std::size_t sandwich = cfg.count(200);
    for (std::size_t t = 0; t < sandwich; ++t) {
        std::uint32_t p = t % 2 ? 3 : 5;
        std::size_t n = corpus::uniform(rng, 1, 12);
        auto m = t % 4 < 2 ? detail::random_dense(rng, p, n) : detail::random_low_srank(rng, p, n, 2);
        auto rp = detail::rank_mod_p(m.dense(), p);
        auto sr = srank(m);
        ++r.cases;
        if (rp > sr || sr > p * rp) r.fail("sandwich violated: rank_p=" + std::to_string(rp) + " srank=" + std::to_string(sr));
    }
    r.notes.push_back(std::to_string(exprs) + " expressions, " + std::to_string(markings) + " markings, " + std::to_string(sandwich) +
                      " sandwich samples");
    return r;
}

// 7. Local complementation laws.
inline SuiteResult vertex_minor_laws(const SuiteConfig& cfg) {
    SuiteResult r{"7", "vertex-minor properties"};
    corpus::Rng rng(cfg.seed + 7);
    std::size_t count = cfg.count(1000);
    for (std::size_t t = 0; t < count; ++t) {
        auto g = corpus::erdos_renyi(rng, corpus::uniform(rng, 1, 16), corpus::coin(rng) ? 0.2 : 0.5);
        Vertex v = static_cast<Vertex>(corpus::uniform(rng, 0, g.size() - 1));
        ++r.cases;
        if (!(local_complement(local_complement(g, v), v) == g)) r.fail("involution fails");
    }
    for (std::size_t t = 0; t < count; ++t) {
        auto g = corpus::erdos_renyi(rng, corpus::uniform(rng, 2, 16), corpus::coin(rng) ? 0.2 : 0.5);
        std::vector<Vertex> order(g.size()), set;
        for (Vertex v = 0; v < g.size(); ++v) order[v] = v;
        std::shuffle(order.begin(), order.end(), rng);
        for (Vertex v : order)
            if (set.size() < 4 && std::none_of(set.begin(), set.end(), [&](Vertex u) { return g.has_edge(u, v); })) set.push_back(v);
        std::sort(set.begin(), set.end());
        auto want = local_complement_set(g, set);
        ++r.cases;
        bool ok = true;
        while (std::next_permutation(set.begin(), set.end()))
            if (!(local_complement_set(g, set) == want)) ok = false;
        if (!ok) r.fail("order dependence on an independent set");
    }
    r.notes.push_back(std::to_string(count) + " involution + " + std::to_string(count) + " order-independence instances");
    return r;
}

// 8. Wall time of a fixed one-variable query on grids of doubling size.
inline SuiteResult scaling_smoke(const SuiteConfig& cfg) {
    SuiteResult r{"8", "scaling smoke test"};
    r.gating = false;
    Signature sig;
    auto phi = parse_formula("Emod[0,2] y. adj(x,y)", sig);
    std::size_t rows = cfg.scale >= 1.0 ? 40 : 10;
    std::vector<std::pair<std::size_t, std::size_t>> sizes{{rows, rows}, {rows, 2 * rows}, {2 * rows, 2 * rows}, {2 * rows, 4 * rows}};
    std::vector<double> times;
    for (auto [a, b] : sizes) {
        GuidedStructure m(corpus::grid(a, b));
        Vertex x = static_cast<Vertex>((a / 2) * b + b / 2);
        double best = 1e30;
        for (int rep = 0; rep < 3; ++rep) {
            auto t0 = std::chrono::steady_clock::now();
            bool got = eval_pipeline(m, phi, {{"x", x}});
            best = std::min(best, detail::seconds_since(t0));
            ++r.cases;
            if (!got) r.fail("interior grid vertex has even degree");
        }
        times.push_back(best);
    }
    std::ostringstream os;
    os.precision(3);
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        os << (i ? ", " : "") << sizes[i].first * sizes[i].second << "v " << times[i] * 1000 << "ms";
        if (i) {
            double ratio = times[i] / std::max(times[i - 1], 1e-9);
            os << " (x" << ratio << ")";
            if (ratio > 2.5) r.extra_ok = false;
        }
    }
    r.notes.push_back(os.str());
    return r;
}

inline std::vector<std::function<SuiteResult(const SuiteConfig&)>> all_suites() {
    return {master_oracle, figure_golden, codec_roundtrip, forest_elimination, coloring_validity, matrix_oracle, vertex_minor_laws,
            scaling_smoke};
}

}  // namespace fom::suites
