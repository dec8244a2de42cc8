#pragma once

// Local complementation and depth-k vertex minors.

#include <algorithm>
#include <cctype>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fom/structures.hpp"

namespace fom {

class NotIndependent : public InputError {
public:
    NotIndependent(std::size_t stage, Vertex u, Vertex v)
        : InputError("stage " + std::to_string(stage) + ": vertices " + std::to_string(u) + " and " + std::to_string(v) +
                     " are adjacent"),
          stage_(stage), edge_(u, v) {}
    std::size_t stage() const noexcept { return stage_; }
    std::pair<Vertex, Vertex> edge() const noexcept { return edge_; }

private:
    std::size_t stage_;
    std::pair<Vertex, Vertex> edge_;
};

inline Graph local_complement(const Graph& g, Vertex v) {
    if (v >= g.size()) throw InputError("local_complement: unknown vertex " + std::to_string(v));
    Graph out = g;
    const auto& nb = g.neighbors(v);
    for (std::size_t a = 0; a < nb.size(); ++a)
        for (std::size_t b = a + 1; b < nb.size(); ++b) out.toggle_edge(nb[a], nb[b]);
    return out;
}

inline std::optional<std::pair<Vertex, Vertex>> independence_violation(const Graph& g, const VertexSet& set) {
    for (Vertex v : set)
        if (v >= g.size()) throw InputError("unknown vertex " + std::to_string(v));
    for (std::size_t a = 0; a < set.size(); ++a)
        for (std::size_t b = a + 1; b < set.size(); ++b)
            if (g.has_edge(set[a], set[b])) return std::pair{set[a], set[b]};
    return std::nullopt;
}

// G (+) I for an independent set, applied in the given order.
inline Graph local_complement_set(const Graph& g, const std::vector<Vertex>& set, std::size_t stage = 1) {
    if (auto bad = independence_violation(g, make_vertex_set(set))) throw NotIndependent(stage, bad->first, bad->second);
    Graph out = g;
    for (Vertex v : set) out = local_complement(out, v);
    return out;
}

struct VmStep {
    std::vector<Vertex> independent;
};

struct VertexMinor {
    Graph graph;
    std::vector<Vertex> kept;  // kept[i] = original id of vertex i
};

inline VertexMinor delete_vertices(const Graph& g, const VertexSet& del) {
    VertexMinor out;
    for (Vertex v = 0; v < g.size(); ++v)
        if (!contains(del, v)) out.kept.push_back(v);
    out.graph = induced_subgraph(g, out.kept);
    return out;
}

// ((G (+) I_1) ... (+) I_k) - S.
inline VertexMinor depth_k_vertex_minor(const Graph& g, const std::vector<VmStep>& steps, const std::vector<Vertex>& del,
                                        std::optional<std::size_t> k = std::nullopt) {
    if (k && *k != steps.size())
        throw InputError("depth " + std::to_string(*k) + " needs " + std::to_string(*k) + " steps, got " + std::to_string(steps.size()));
    Graph cur = g;
    for (std::size_t i = 0; i < steps.size(); ++i) cur = local_complement_set(cur, steps[i].independent, i + 1);
    auto s = make_vertex_set(del);
    for (Vertex v : s)
        if (v >= g.size()) throw InputError("deletion of unknown vertex " + std::to_string(v));
    return delete_vertices(cur, s);
}

struct VmProgram {
    std::vector<VmStep> steps;
    std::vector<Vertex> deleted;
};

// Steps file: "I <v...>" lines in order, then at most one "S <v...>" line.
inline VmProgram parse_steps(std::istream& in) {
    VmProgram prog;
    bool seen_s = false;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        auto tok = detail::split_ws(line);
        if (tok.empty()) continue;
        if (tok[0] != "I" && tok[0] != "S") throw ParseError(lineno, "steps: expected 'I' or 'S', got '" + tok[0] + "'");
        if (seen_s) throw ParseError(lineno, "steps: nothing may follow the 'S' line");
        std::vector<Vertex> vs;
        for (std::size_t i = 1; i < tok.size(); ++i) {
            const auto& t = tok[i];
            if (t.empty() || !std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
                throw ParseError(lineno, "steps: bad vertex '" + t + "'");
            vs.push_back(static_cast<Vertex>(std::stoul(t)));
        }
        if (tok[0] == "I") {
            prog.steps.push_back({std::move(vs)});
        } else {
            prog.deleted = std::move(vs);
            seen_s = true;
        }
    }
    return prog;
}

inline VmProgram parse_steps(const std::string& text) {
    std::istringstream in(text);
    return parse_steps(in);
}

}  // namespace fom
