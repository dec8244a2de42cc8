#pragma once

// Seeded generators for graphs, guided structures and formulas. Shared by the
// test suites and the `selftest` subcommand.

#include <random>
#include <string>
#include <vector>

#include "fom/logic.hpp"
#include "fom/structures.hpp"

namespace fom::corpus {

using Rng = std::mt19937_64;

inline std::size_t uniform(Rng& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}
inline bool coin(Rng& rng, double p = 0.5) { return std::bernoulli_distribution(p)(rng); }

inline Graph grid(std::size_t rows, std::size_t cols) {
    Graph g(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            auto v = static_cast<Vertex>(r * cols + c);
            if (c + 1 < cols) g.add_edge(v, v + 1);
            if (r + 1 < rows) g.add_edge(v, static_cast<Vertex>(v + cols));
        }
    return g;
}

inline Graph path(std::size_t n) {
    Graph g(n);
    for (std::size_t i = 0; i + 1 < n; ++i) g.add_edge(static_cast<Vertex>(i), static_cast<Vertex>(i + 1));
    return g;
}

inline Graph cycle(std::size_t n) {
    Graph g = path(n);
    if (n > 2) g.add_edge(0, static_cast<Vertex>(n - 1));
    return g;
}

inline Graph complete(std::size_t n) {
    Graph g(n);
    for (Vertex u = 0; u < n; ++u)
        for (Vertex v = u + 1; v < n; ++v) g.add_edge(u, v);
    return g;
}

inline Graph star(std::size_t leaves) {
    Graph g(leaves + 1);
    for (Vertex v = 1; v <= leaves; ++v) g.add_edge(0, v);
    return g;
}

// Random subgraph of a triangulated grid (planar).
inline Graph planar_subgraph(Rng& rng, std::size_t rows, std::size_t cols, double keep = 0.6) {
    Graph g(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            auto v = static_cast<Vertex>(r * cols + c);
            if (c + 1 < cols && coin(rng, keep)) g.add_edge(v, v + 1);
            if (r + 1 < rows && coin(rng, keep)) g.add_edge(v, static_cast<Vertex>(v + cols));
            if (c + 1 < cols && r + 1 < rows && coin(rng, keep)) g.add_edge(v, static_cast<Vertex>(v + cols + 1));
        }
    return g;
}

inline Graph bounded_degree(Rng& rng, std::size_t n, std::size_t max_degree, std::size_t attempts) {
    Graph g(n);
    if (n < 2) return g;
    for (std::size_t i = 0; i < attempts; ++i) {
        auto u = static_cast<Vertex>(uniform(rng, 0, n - 1));
        auto v = static_cast<Vertex>(uniform(rng, 0, n - 1));
        if (u == v || g.degree(u) >= max_degree || g.degree(v) >= max_degree) continue;
        g.add_edge(u, v);
    }
    return g;
}

inline Graph erdos_renyi(Rng& rng, std::size_t n, double p) {
    Graph g(n);
    for (Vertex u = 0; u < n; ++u)
        for (Vertex v = u + 1; v < n; ++v)
            if (coin(rng, p)) g.add_edge(u, v);
    return g;
}

// Random rooted forest with height at most `height`; parent[root] = root.
inline std::vector<Vertex> random_forest_parents(Rng& rng, std::size_t n, std::size_t height, double root_prob = 0.2) {
    std::vector<Vertex> parent(n);
    std::vector<std::size_t> depth(n, 1);
    for (Vertex v = 0; v < n; ++v) {
        parent[v] = v;
        if (v == 0 || coin(rng, root_prob)) continue;
        for (int tries = 0; tries < 8; ++tries) {
            auto u = static_cast<Vertex>(uniform(rng, 0, v - 1));
            if (depth[u] < height) {
                parent[v] = u;
                depth[v] = depth[u] + 1;
                break;
            }
        }
    }
    return parent;
}

inline Graph forest_graph(const std::vector<Vertex>& parent) {
    Graph g(parent.size());
    for (Vertex v = 0; v < parent.size(); ++v)
        if (parent[v] != v) g.add_edge(v, parent[v]);
    return g;
}

inline void add_random_marks(Rng& rng, GuidedStructure& m, const std::vector<std::string>& names, double p = 0.4) {
    for (const auto& name : names) {
        VertexSet s;
        for (Vertex v = 0; v < m.size(); ++v)
            if (coin(rng, p)) s.push_back(v);
        m.add_mark(name, std::move(s));
    }
}

// Guided function: each vertex maps to itself or to a random neighbor.
inline void add_random_function(Rng& rng, GuidedStructure& m, const std::string& name, double move_prob = 0.6) {
    std::vector<Vertex> img(m.size());
    for (Vertex v = 0; v < m.size(); ++v) {
        const auto& nb = m.graph().neighbors(v);
        img[v] = (!nb.empty() && coin(rng, move_prob)) ? nb[uniform(rng, 0, nb.size() - 1)] : v;
    }
    m.add_function(name, std::move(img));
}

inline GuidedStructure random_structure(Rng& rng, Graph g, std::size_t marks, std::size_t functions) {
    GuidedStructure m(std::move(g));
    std::vector<std::string> names;
    for (std::size_t i = 0; i < marks; ++i) names.push_back(std::string(1, static_cast<char>('P' + i)));
    add_random_marks(rng, m, names);
    for (std::size_t i = 0; i < functions; ++i) add_random_function(rng, m, "f" + std::to_string(i + 1));
    return m;
}

// Guided structure whose Gaifman graph lies in the closure of a random forest
// of height <= h.
struct TdSample {
    GuidedStructure m;
    std::vector<Vertex> parent;
};

inline TdSample random_bounded_td(Rng& rng, std::size_t n, std::size_t h, std::size_t marks, std::size_t functions,
                                  double edge_prob = 0.5) {
    auto parent = random_forest_parents(rng, n, h);
    Graph g(n);
    for (Vertex v = 0; v < n; ++v)
        for (Vertex u = v; parent[u] != u;) {
            u = parent[u];
            if (coin(rng, edge_prob)) g.add_edge(u, v);
        }
    return {random_structure(rng, std::move(g), marks, functions), std::move(parent)};
}

// Formula generation -------------------------------------------------------

struct FormulaShape {
    std::vector<std::string> marks;
    std::size_t functions = 0;     // available function indices 1..functions
    std::size_t max_term_depth = 1;
    std::size_t max_modulus = 5;
};

inline Term random_term(Rng& rng, const std::vector<std::string>& vars, const FormulaShape& sh) {
    Term t = var_term(vars[uniform(rng, 0, vars.size() - 1)]);
    if (sh.functions > 0) {
        std::size_t d = uniform(rng, 0, sh.max_term_depth);
        for (std::size_t i = 0; i < d; ++i) t.fns.push_back(uniform(rng, 1, sh.functions));
    }
    return t;
}

inline Formula random_atom(Rng& rng, const std::vector<std::string>& vars, const FormulaShape& sh) {
    std::size_t kinds = sh.marks.empty() ? 2 : 3;
    switch (uniform(rng, 0, kinds - 1)) {
        case 0: return f_edge(random_term(rng, vars, sh), random_term(rng, vars, sh));
        case 1: return f_eq(random_term(rng, vars, sh), random_term(rng, vars, sh));
        default: return f_mark(sh.marks[uniform(rng, 0, sh.marks.size() - 1)], random_term(rng, vars, sh));
    }
}

inline Formula random_qf(Rng& rng, const std::vector<std::string>& vars, const FormulaShape& sh, std::size_t depth) {
    if (depth == 0 || coin(rng, 0.3)) return random_atom(rng, vars, sh);
    switch (uniform(rng, 0, 2)) {
        case 0: return f_not(random_qf(rng, vars, sh, depth - 1));
        case 1: return f_and({random_qf(rng, vars, sh, depth - 1), random_qf(rng, vars, sh, depth - 1)});
        default: return f_or({random_qf(rng, vars, sh, depth - 1), random_qf(rng, vars, sh, depth - 1)});
    }
}

inline Formula random_mod(Rng& rng, const std::string& var, Formula body, const FormulaShape& sh) {
    auto b = static_cast<std::uint32_t>(uniform(rng, 1, sh.max_modulus));
    auto a = static_cast<std::uint32_t>(uniform(rng, 0, b - 1));
    return f_mod_exists(a, b, var, std::move(body));
}

// Arbitrary FOM formula (all quantifier kinds) over the given free variables.
inline Formula random_fom(Rng& rng, std::vector<std::string> vars, const FormulaShape& sh, std::size_t depth,
                          std::size_t& fresh) {
    if (vars.empty() || depth == 0 || coin(rng, 0.25)) {
        if (vars.empty()) {
            std::string v = "q" + std::to_string(fresh++);
            return f_exists(v, random_qf(rng, {v}, sh, 1));
        }
        return random_qf(rng, vars, sh, 1);
    }
    switch (uniform(rng, 0, 5)) {
        case 0: return f_not(random_fom(rng, vars, sh, depth - 1, fresh));
        case 1: return f_and({random_fom(rng, vars, sh, depth - 1, fresh), random_fom(rng, vars, sh, depth - 1, fresh)});
        case 2: return f_or({random_fom(rng, vars, sh, depth - 1, fresh), random_fom(rng, vars, sh, depth - 1, fresh)});
        default: {
            std::string v = "q" + std::to_string(fresh++);
            auto inner = vars;
            inner.push_back(v);
            Formula body = random_fom(rng, inner, sh, depth - 1, fresh);
            switch (uniform(rng, 0, 2)) {
                case 0: return f_exists(v, body);
                case 1: return f_forall(v, body);
                default: return random_mod(rng, v, body, sh);
            }
        }
    }
}

// Modulo-prenex fragment: Boolean combinations of modulo quantifiers whose
// matrices are quantifier-free apart from nested modulo quantifiers.
inline Formula random_modulo_prenex(Rng& rng, const std::vector<std::string>& free, const FormulaShape& sh,
                                    std::size_t max_mods, std::size_t& fresh) {
    std::string y = "y" + std::to_string(fresh++);
    auto vars = free;
    vars.push_back(y);
    Formula matrix = random_qf(rng, vars, sh, 2);
    if (max_mods >= 2 && coin(rng, 0.5)) {
        std::string z = "z" + std::to_string(fresh++);
        auto inner_vars = vars;
        inner_vars.push_back(z);
        // the nested quantifier may keep or drop outer variables
        std::vector<std::string> used{z};
        for (const auto& v : vars)
            if (coin(rng, 0.6)) used.push_back(v);
        Formula inner = random_mod(rng, z, random_qf(rng, used, sh, 2), sh);
        matrix = coin(rng) ? f_and({matrix, inner}) : f_or({f_not(matrix), inner});
        if (coin(rng, 0.3)) matrix = inner;
    }
    Formula top = random_mod(rng, y, matrix, sh);
    if (coin(rng, 0.2)) top = f_not(top);
    if (max_mods >= 2 && coin(rng, 0.15)) {
        std::string y2 = "y" + std::to_string(fresh++);
        auto v2 = free;
        v2.push_back(y2);
        top = f_and({top, random_mod(rng, y2, random_qf(rng, v2, sh, 2), sh)});
    }
    return top;
}

}  // namespace fom::corpus
