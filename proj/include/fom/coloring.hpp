#pragma once

// p-centered colorings, their validation, and elimination forests.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <unordered_map>
#include <vector>

#include "fom/structures.hpp"

namespace fom {

using Color = std::uint32_t;

struct CenteredColoring {
    std::size_t p = 1;
    std::vector<Color> color;  // 0-based colors
    std::size_t num_colors = 0;

    std::vector<Color> colors_of(const VertexSet& s) const {
        std::vector<Color> out;
        for (Vertex v : s) out.push_back(color[v]);
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }
};

inline std::size_t count_colors(const std::vector<Color>& color) {
    std::vector<Color> c = color;
    std::sort(c.begin(), c.end());
    return static_cast<std::size_t>(std::unique(c.begin(), c.end()) - c.begin());
}

// Rooted forest; parent[root] = root, levels start at 1.
struct EliminationForest {
    std::vector<Vertex> parent;
    std::vector<std::uint32_t> level;
    std::size_t height = 0;

    std::size_t size() const { return parent.size(); }
    bool is_root(Vertex v) const { return parent[v] == v; }

    Vertex ancestor_at_level(Vertex v, std::uint32_t j) const {
        if (j == 0 || j > level[v]) throw InputError("no ancestor at level " + std::to_string(j));
        while (level[v] > j) v = parent[v];
        return v;
    }

    // u is an ancestor of v (or equal).
    bool is_ancestor(Vertex u, Vertex v) const {
        if (level[u] > level[v]) return false;
        return ancestor_at_level(v, level[u]) == u;
    }

    Vertex root_of(Vertex v) const { return ancestor_at_level(v, 1); }

    std::vector<VertexSet> children() const {
        std::vector<VertexSet> ch(size());
        for (Vertex v = 0; v < size(); ++v)
            if (!is_root(v)) ch[parent[v]].push_back(v);
        return ch;
    }

    std::vector<Vertex> roots() const {
        std::vector<Vertex> r;
        for (Vertex v = 0; v < size(); ++v)
            if (is_root(v)) r.push_back(v);
        return r;
    }
};

// Builds levels from a parent array; rejects cycles.
inline EliminationForest forest_from_parents(std::vector<Vertex> parent) {
    const std::size_t n = parent.size();
    EliminationForest f;
    f.level.assign(n, 0);
    for (Vertex v = 0; v < n; ++v)
        if (parent[v] >= n) throw InputError("parent out of range");
    for (Vertex v = 0; v < n; ++v) {
        std::vector<Vertex> chain;
        Vertex u = v;
        while (f.level[u] == 0) {
            chain.push_back(u);
            if (parent[u] == u) {
                f.level[u] = 1;
                chain.pop_back();
                break;
            }
            u = parent[u];
            if (chain.size() > n) throw InputError("parent map has a cycle");
        }
        for (auto it = chain.rbegin(); it != chain.rend(); ++it) f.level[*it] = f.level[parent[*it]] + 1;
    }
    f.parent = std::move(parent);
    for (auto l : f.level) f.height = std::max<std::size_t>(f.height, l);
    return f;
}

// Every edge of g joins an ancestor-descendant pair.
inline std::optional<std::pair<Vertex, Vertex>> closure_violation(const Graph& g, const EliminationForest& f) {
    for (auto [u, v] : g.edges())
        if (!f.is_ancestor(u, v) && !f.is_ancestor(v, u)) return std::make_pair(u, v);
    return std::nullopt;
}

class NotCenteredError : public Error {
public:
    NotCenteredError(VertexSet component, const std::string& what) : Error(what), component_(std::move(component)) {}
    const VertexSet& component() const noexcept { return component_; }

private:
    VertexSet component_;
};

namespace detail {

// Components of g[within], each sorted.
inline std::vector<VertexSet> components_within(const Graph& g, const VertexSet& within, std::vector<char>& inside) {
    for (Vertex v : within) inside[v] = 1;
    std::vector<VertexSet> comps;
    std::vector<Vertex> stack;
    for (Vertex s : within) {
        if (inside[s] != 1) continue;
        VertexSet comp;
        inside[s] = 2;
        stack.push_back(s);
        while (!stack.empty()) {
            Vertex u = stack.back();
            stack.pop_back();
            comp.push_back(u);
            for (Vertex w : g.neighbors(u))
                if (inside[w] == 1) {
                    inside[w] = 2;
                    stack.push_back(w);
                }
        }
        std::sort(comp.begin(), comp.end());
        comps.push_back(std::move(comp));
    }
    for (Vertex v : within) inside[v] = 0;
    return comps;
}

// Vertex of `comp` carrying a color that occurs once in comp: smallest such
// color, then smallest id.
inline std::optional<Vertex> unique_color_vertex(const VertexSet& comp, const std::vector<Color>& color) {
    std::unordered_map<Color, std::pair<std::size_t, Vertex>> seen;
    for (Vertex v : comp) {
        auto [it, fresh] = seen.try_emplace(color[v], 0, v);
        ++it->second.first;
        if (!fresh) it->second.second = std::min(it->second.second, v);
    }
    std::optional<std::pair<Color, Vertex>> best;
    for (const auto& [c, cnt] : seen)
        if (cnt.first == 1 && (!best || c < best->first)) best = std::make_pair(c, cnt.second);
    if (!best) return std::nullopt;
    return best->second;
}

// Every connected subgraph of comp has a uniquely colored vertex.
inline std::optional<VertexSet> centered_failure(const Graph& g, const VertexSet& comp, const std::vector<Color>& color,
                                                 std::vector<char>& inside) {
    std::vector<VertexSet> work{comp};
    while (!work.empty()) {
        VertexSet c = std::move(work.back());
        work.pop_back();
        auto v = unique_color_vertex(c, color);
        if (!v) return c;
        VertexSet rest;
        for (Vertex u : c)
            if (u != *v) rest.push_back(u);
        for (auto& sub : components_within(g, rest, inside)) work.push_back(std::move(sub));
    }
    return std::nullopt;
}

// Connected vertex subsets of size <= k (each reported once).
inline void connected_subsets(const Graph& q, std::size_t k, const std::function<void(const std::vector<Vertex>&)>& visit) {
    if (k == 0) return;
    std::vector<Vertex> sub;
    std::function<void(std::vector<Vertex>, Vertex)> extend = [&](std::vector<Vertex> ext, Vertex root) {
        visit(sub);
        if (sub.size() == k) return;
        while (!ext.empty()) {
            Vertex w = ext.back();
            ext.pop_back();
            std::vector<Vertex> next = ext;
            for (Vertex u : q.neighbors(w)) {
                if (u <= root) continue;
                if (std::find(sub.begin(), sub.end(), u) != sub.end()) continue;
                if (std::find(next.begin(), next.end(), u) != next.end()) continue;
                bool exclusive = true;
                for (Vertex s : sub)
                    if (q.has_edge(s, u)) {
                        exclusive = false;
                        break;
                    }
                if (exclusive) next.push_back(u);
            }
            sub.push_back(w);
            extend(std::move(next), root);
            sub.pop_back();
        }
    };
    for (Vertex v = 0; v < q.size(); ++v) {
        std::vector<Vertex> ext;
        for (Vertex u : q.neighbors(v))
            if (u > v) ext.push_back(u);
        sub.assign(1, v);
        extend(std::move(ext), v);
    }
}

}  // namespace detail

struct CenteredCheck {
    bool ok = true;
    VertexSet witness;  // connected set without a uniquely colored vertex
};

// Exhaustive over connected sets of at most p-1 color classes.
inline CenteredCheck validate_p_centered(const Graph& g, const CenteredColoring& c) {
    if (c.color.size() != g.size()) throw InputError("coloring size does not match the graph");
    if (c.p <= 1) return {};
    Color ncol = 0;
    for (Color x : c.color) ncol = std::max<Color>(ncol, x + 1);
    std::vector<VertexSet> classes(ncol);
    for (Vertex v = 0; v < g.size(); ++v) classes[c.color[v]].push_back(v);
    Graph quotient(ncol);
    for (auto [u, v] : g.edges())
        if (c.color[u] != c.color[v]) quotient.add_edge(c.color[u], c.color[v]);

    std::vector<char> inside(g.size(), 0);
    CenteredCheck result;
    detail::connected_subsets(quotient, c.p - 1, [&](const std::vector<Vertex>& cols) {
        if (!result.ok) return;
        VertexSet members;
        for (Vertex col : cols) members.insert(members.end(), classes[col].begin(), classes[col].end());
        std::sort(members.begin(), members.end());
        for (const auto& comp : detail::components_within(g, members, inside)) {
            if (auto bad = detail::centered_failure(g, comp, c.color, inside)) {
                result.ok = false;
                result.witness = std::move(*bad);
                return;
            }
        }
    });
    return result;
}

// Levelled decomposition of the Gaifman graph of m: at each stage every
// component gives up its uniquely colored vertex.
inline EliminationForest forest_from_centered(const GuidedStructure& m, const std::vector<Color>& color) {
    if (color.size() != m.size()) throw InputError("coloring size does not match the structure");
    Graph g = gaifman(m);
    std::vector<Vertex> parent(m.size());
    std::vector<char> inside(m.size(), 0);
    struct Item {
        VertexSet comp;
        std::optional<Vertex> above;
    };
    VertexSet all(m.size());
    std::iota(all.begin(), all.end(), Vertex{0});
    std::vector<Item> work;
    for (auto& comp : detail::components_within(g, all, inside)) work.push_back({std::move(comp), std::nullopt});
    while (!work.empty()) {
        Item it = std::move(work.back());
        work.pop_back();
        auto v = detail::unique_color_vertex(it.comp, color);
        if (!v) throw NotCenteredError(it.comp, "coloring is not centered on a component");
        parent[*v] = it.above ? *it.above : *v;
        VertexSet rest;
        for (Vertex u : it.comp)
            if (u != *v) rest.push_back(u);
        for (auto& sub : detail::components_within(g, rest, inside)) work.push_back({std::move(sub), *v});
    }
    return forest_from_parents(std::move(parent));
}

// Colors each vertex by its level; centered for every p.
inline CenteredColoring level_coloring(const EliminationForest& f, std::size_t p) {
    CenteredColoring c;
    c.p = p;
    c.color.resize(f.size());
    for (Vertex v = 0; v < f.size(); ++v) c.color[v] = f.level[v] - 1;
    c.num_colors = f.height;
    return c;
}

// tree-depth ------------------------------------------------------------------

inline constexpr std::size_t kTreedepthCap = 24;

namespace detail {

class TreedepthSolver {
public:
    explicit TreedepthSolver(const Graph& g) : n_(g.size()), adj_(g.size(), 0) {
        if (n_ > kTreedepthCap) throw InputError("treedepth_exact: graph exceeds the size cap");
        for (Vertex v = 0; v < n_; ++v)
            for (Vertex w : g.neighbors(v)) adj_[v] |= std::uint32_t{1} << w;
    }

    std::size_t td(std::uint32_t set) {
        if (set == 0) return 0;
        std::size_t best = 0;
        for (std::uint32_t comp : components(set)) best = std::max(best, td_connected(comp));
        return best;
    }

    // Optimal forest over `set`, hung below `above` (or as roots).
    void build(std::uint32_t set, std::optional<Vertex> above, std::vector<Vertex>& parent) {
        for (std::uint32_t comp : components(set)) {
            td_connected(comp);
            Vertex pick = best_choice_.at(comp);
            parent[pick] = above ? *above : pick;
            build(comp & ~(std::uint32_t{1} << pick), pick, parent);
        }
    }

private:
    std::vector<std::uint32_t> components(std::uint32_t set) const {
        std::vector<std::uint32_t> out;
        while (set) {
            std::uint32_t comp = set & (~set + 1), frontier = comp;
            while (frontier) {
                std::uint32_t next = 0;
                for (std::uint32_t f = frontier; f; f &= f - 1) next |= adj_[static_cast<std::size_t>(__builtin_ctz(f))];
                next &= set & ~comp;
                comp |= next;
                frontier = next;
            }
            out.push_back(comp);
            set &= ~comp;
        }
        return out;
    }

    std::size_t td_connected(std::uint32_t comp) {
        auto pc = static_cast<std::size_t>(__builtin_popcount(comp));
        if (pc == 1) {
            best_choice_[comp] = static_cast<Vertex>(__builtin_ctz(comp));
            return 1;
        }
        if (auto it = memo_.find(comp); it != memo_.end()) return it->second;
        const std::size_t lower = 2;
        std::size_t best = pc + 1;
        Vertex choice = 0;
        // try high-degree vertices first
        std::vector<std::pair<int, Vertex>> order;
        for (std::uint32_t s = comp; s; s &= s - 1) {
            auto v = static_cast<Vertex>(__builtin_ctz(s));
            order.emplace_back(-__builtin_popcount(adj_[v] & comp), v);
        }
        std::sort(order.begin(), order.end());
        for (auto [negdeg, v] : order) {
            std::uint32_t rest = comp & ~(std::uint32_t{1} << v);
            std::size_t worst = 0;
            for (std::uint32_t sub : components(rest)) {
                worst = std::max(worst, td_connected(sub));
                if (worst + 1 >= best) break;
            }
            if (worst + 1 < best) {
                best = worst + 1;
                choice = v;
                if (best <= lower) break;
            }
        }
        memo_[comp] = best;
        best_choice_[comp] = choice;
        return best;
    }

    std::size_t n_;
    std::vector<std::uint32_t> adj_;
    std::unordered_map<std::uint32_t, std::size_t> memo_;
    std::unordered_map<std::uint32_t, Vertex> best_choice_;
};

inline std::uint32_t full_mask(std::size_t n) {
    return n == 32 ? ~std::uint32_t{0} : (std::uint32_t{1} << n) - 1;
}

}  // namespace detail

inline std::size_t treedepth_exact(const Graph& g) {
    detail::TreedepthSolver s(g);
    return s.td(detail::full_mask(g.size()));
}

// Minimum-height elimination forest (size-capped).
inline EliminationForest treedepth_forest(const Graph& g) {
    detail::TreedepthSolver s(g);
    std::vector<Vertex> parent(g.size());
    s.build(detail::full_mask(g.size()), std::nullopt, parent);
    return forest_from_parents(std::move(parent));
}

// Elimination forest by recursive BFS-layer separators; components of at most
// `exact_cap` vertices are solved optimally.
inline EliminationForest separator_forest(const Graph& g, std::size_t exact_cap) {
    exact_cap = std::min(exact_cap, kTreedepthCap);
    std::vector<Vertex> parent(g.size());
    std::vector<char> inside(g.size(), 0);
    std::vector<std::int64_t> dist(g.size(), -1);
    struct Item {
        VertexSet comp;
        std::optional<Vertex> above;
    };
    VertexSet all(g.size());
    std::iota(all.begin(), all.end(), Vertex{0});
    std::vector<Item> work;
    for (auto& comp : detail::components_within(g, all, inside)) work.push_back({std::move(comp), std::nullopt});

    auto bfs = [&](const VertexSet& comp, Vertex src) {
        for (Vertex v : comp) inside[v] = 1;
        std::vector<VertexSet> layers{{src}};
        dist[src] = 0;
        while (true) {
            VertexSet next;
            for (Vertex u : layers.back())
                for (Vertex w : g.neighbors(u))
                    if (inside[w] && dist[w] < 0) {
                        dist[w] = dist[u] + 1;
                        next.push_back(w);
                    }
            if (next.empty()) break;
            layers.push_back(std::move(next));
        }
        for (Vertex v : comp) {
            inside[v] = 0;
            dist[v] = -1;
        }
        return layers;
    };

    while (!work.empty()) {
        Item it = std::move(work.back());
        work.pop_back();
        const VertexSet& comp = it.comp;
        if (comp.size() <= exact_cap) {
            Graph h = induced_subgraph(g, comp);
            auto local = treedepth_forest(h);
            for (Vertex i = 0; i < comp.size(); ++i)
                parent[comp[i]] = local.is_root(i) ? (it.above ? *it.above : comp[i]) : comp[local.parent[i]];
            continue;
        }
        auto far = bfs(comp, comp.front()).back().front();
        auto layers = bfs(comp, far);
        // smallest layer in the middle third by cumulative size
        const std::size_t total = comp.size();
        std::size_t acc = 0, pick = layers.size() / 2, best_size = SIZE_MAX;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            std::size_t before = acc;
            acc += layers[i].size();
            if (3 * before <= 2 * total && 3 * acc >= total && layers[i].size() < best_size) {
                best_size = layers[i].size();
                pick = i;
            }
        }
        VertexSet sep = layers[pick];
        std::sort(sep.begin(), sep.end());
        std::optional<Vertex> above = it.above;
        for (Vertex v : sep) {
            parent[v] = above ? *above : v;
            above = v;
        }
        VertexSet rest;
        std::set_difference(comp.begin(), comp.end(), sep.begin(), sep.end(), std::back_inserter(rest));
        for (auto& sub : detail::components_within(g, rest, inside)) work.push_back({std::move(sub), above});
    }
    return forest_from_parents(std::move(parent));
}

// Greedy coloring where vertices within distance p-1 get distinct colors;
// nullopt when a ball exceeds `ball_budget` vertices.
inline std::optional<CenteredColoring> distance_coloring(const Graph& g, std::size_t p, std::size_t ball_budget) {
    const std::size_t n = g.size();
    CenteredColoring c;
    c.p = p;
    c.color.assign(n, 0);
    if (p <= 1 || n == 0) {
        c.num_colors = n ? 1 : 0;
        return c;
    }
    // smallest-last order
    std::vector<std::size_t> deg(n);
    std::size_t maxdeg = 0;
    for (Vertex v = 0; v < n; ++v) maxdeg = std::max(maxdeg, deg[v] = g.degree(v));
    std::vector<std::vector<Vertex>> bucket(maxdeg + 1);
    for (Vertex v = 0; v < n; ++v) bucket[deg[v]].push_back(v);
    std::vector<char> removed(n, 0);
    std::vector<Vertex> order;
    std::size_t lo = 0;
    while (order.size() < n) {
        while (bucket[lo].empty()) ++lo;
        Vertex v = bucket[lo].back();
        bucket[lo].pop_back();
        if (removed[v] || deg[v] != lo) continue;
        removed[v] = 1;
        order.push_back(v);
        for (Vertex w : g.neighbors(v))
            if (!removed[w]) {
                bucket[--deg[w]].push_back(w);
                lo = std::min(lo, deg[w]);
            }
    }
    std::reverse(order.begin(), order.end());

    std::vector<char> colored(n, 0);
    std::vector<std::int64_t> dist(n, -1);
    std::vector<char> used;
    for (Vertex v : order) {
        std::vector<Vertex> ball{v}, frontier{v};
        dist[v] = 0;
        for (std::size_t d = 1; d < p && !frontier.empty(); ++d) {
            std::vector<Vertex> next;
            for (Vertex u : frontier)
                for (Vertex w : g.neighbors(u))
                    if (dist[w] < 0) {
                        dist[w] = static_cast<std::int64_t>(d);
                        next.push_back(w);
                        ball.push_back(w);
                    }
            frontier = std::move(next);
            if (ball.size() > ball_budget) break;
        }
        for (Vertex w : ball) dist[w] = -1;
        if (ball.size() > ball_budget) return std::nullopt;
        used.assign(ball.size() + 1, 0);
        for (Vertex w : ball)
            if (colored[w] && c.color[w] < used.size()) used[c.color[w]] = 1;
        Color k = 0;
        while (used[k]) ++k;
        c.color[v] = k;
        colored[v] = 1;
    }
    c.num_colors = count_colors(c.color);
    return c;
}

enum class ColoringBackend { Exact, Heuristic };

struct ColoringOptions {
    std::size_t exact_component_cap = 22;
    std::size_t heuristic_component_cap = 12;
    std::size_t ball_budget = 4096;
    // validator is run when (sum of C(colors, <= p-1)) * n stays below this
    double validation_budget = 2e6;
};

namespace detail {
inline double subset_estimate(std::size_t colors, std::size_t k) {
    double total = 0, term = 1;
    for (std::size_t j = 1; j <= k && j <= colors; ++j) {
        term = term * static_cast<double>(colors - j + 1) / static_cast<double>(j);
        total += term;
    }
    return total;
}
}  // namespace detail

inline CenteredColoring compute_p_centered(const Graph& g, std::size_t p, ColoringBackend backend = ColoringBackend::Heuristic,
                                           const ColoringOptions& opt = {}) {
    if (p == 0) throw InputError("p must be at least 1");
    if (backend == ColoringBackend::Exact) return level_coloring(separator_forest(g, opt.exact_component_cap), p);

    CenteredColoring best = level_coloring(separator_forest(g, opt.heuristic_component_cap), p);
    if (auto d = distance_coloring(g, p, opt.ball_budget); d && d->num_colors < best.num_colors) {
        bool checked = detail::subset_estimate(d->num_colors, p - 1) * static_cast<double>(g.size() + 1) <=
                       opt.validation_budget;
        if (!checked || validate_p_centered(g, *d).ok) best = std::move(*d);
    }
    if (g.size() == 0) best.num_colors = 0;
    return best;
}

}  // namespace fom
