#pragma once

// FOM evaluation and modulo counting on bounded-height colored forests.
//
// Vertices of a forest are labelled (by marks, or by subtree types). For a
// downward path u = p_1, ..., p_m = w the label sequence is interned in a
// trie, and every vertex u stores how many w below it realize each sequence.
// Witness classes relative to an ancestor-closed anchor set A are then
// counted by inclusion/exclusion:
//   w in A                      one class per vertex
//   deepest A-ancestor a of w   count(a, a..w) - sum over A-children c of a of count(c, c..w)
//   no A-ancestor               roots(root..w) - sum over A-roots r of count(r, root..w)

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "fom/coloring.hpp"
#include "fom/forest_codec.hpp"
#include "fom/logic.hpp"

namespace fom {

// labels ----------------------------------------------------------------------

// Interned mark sets over a fixed alphabet.
struct MarkLabeling {
    std::vector<std::string> alphabet;
    std::vector<std::uint32_t> label;                      // per vertex
    std::vector<std::vector<std::uint32_t>> label_marks;   // label id -> sorted alphabet indices
    std::map<std::vector<std::uint32_t>, std::uint32_t> ids;

    std::optional<std::uint32_t> id_of(const std::vector<std::uint32_t>& marks) const {
        auto it = ids.find(marks);
        if (it == ids.end()) return std::nullopt;
        return it->second;
    }
};

inline MarkLabeling label_by_marks(const GuidedStructure& y, std::vector<std::string> alphabet) {
    MarkLabeling out;
    out.alphabet = std::move(alphabet);
    std::vector<std::optional<std::size_t>> idx;
    for (const auto& a : out.alphabet) idx.push_back(y.mark_index(a));
    out.label.resize(y.size());
    for (Vertex v = 0; v < y.size(); ++v) {
        std::vector<std::uint32_t> ms;
        for (std::uint32_t a = 0; a < out.alphabet.size(); ++a)
            if (idx[a] && y.marked(*idx[a], v)) ms.push_back(a);
        auto [it, fresh] = out.ids.emplace(ms, static_cast<std::uint32_t>(out.label_marks.size()));
        if (fresh) out.label_marks.push_back(ms);
        out.label[v] = it->second;
    }
    return out;
}

inline std::vector<std::string> all_marks(const GuidedStructure& y) {
    std::vector<std::string> out;
    for (std::size_t k = 0; k < y.mark_count(); ++k) out.push_back(y.mark_name(k));
    return out;
}

// Subtree types: a vertex's label together with the multiset of its
// children's types. With threshold 0 the multiset is exact (isomorphism
// classes); otherwise multiplicities are kept as (min(count, threshold),
// count mod modulus).
struct SubtreeTypeTable {
    std::size_t threshold = 0;
    std::uint64_t modulus = 1;
    std::vector<std::uint32_t> type;
    std::size_t num_types = 0;
};

inline SubtreeTypeTable compute_subtree_types(const EliminationForest& f, const std::vector<std::uint32_t>& labels,
                                              std::size_t threshold = 0, std::uint64_t modulus = 1) {
    SubtreeTypeTable t;
    t.threshold = threshold;
    t.modulus = std::max<std::uint64_t>(modulus, 1);
    t.type.assign(f.size(), 0);
    std::vector<Vertex> order(f.size());
    std::iota(order.begin(), order.end(), Vertex{0});
    std::sort(order.begin(), order.end(), [&](Vertex a, Vertex b) { return f.level[a] > f.level[b]; });
    auto children = f.children();
    std::map<std::vector<std::uint64_t>, std::uint32_t> intern;
    std::vector<std::uint32_t> kids;
    for (Vertex v : order) {
        kids.clear();
        for (Vertex c : children[v]) kids.push_back(t.type[c]);
        std::sort(kids.begin(), kids.end());
        std::vector<std::uint64_t> key{labels[v]};
        for (std::size_t i = 0; i < kids.size();) {
            std::size_t j = i;
            while (j < kids.size() && kids[j] == kids[i]) ++j;
            std::uint64_t cnt = j - i;
            key.push_back(kids[i]);
            if (threshold == 0) {
                key.push_back(cnt);
            } else {
                key.push_back(std::min<std::uint64_t>(cnt, threshold));
                key.push_back(cnt % t.modulus);
            }
            i = j;
        }
        auto [it, fresh] = intern.emplace(std::move(key), static_cast<std::uint32_t>(intern.size()));
        t.type[v] = it->second;
    }
    t.num_types = intern.size();
    return t;
}

// label paths -------------------------------------------------------------------

// Sequences of labels; a node's tail is the sequence without its first label.
class PathTrie {
public:
    struct Node {
        std::uint32_t tail;
        std::uint32_t head;
        std::uint32_t length;
    };

    PathTrie() : nodes_{{0, 0, 0}} {}

    std::uint32_t prepend(std::uint32_t tail, std::uint32_t label) {
        auto [it, fresh] = index_.try_emplace(key(tail, label), static_cast<std::uint32_t>(nodes_.size()));
        if (fresh) nodes_.push_back({tail, label, nodes_[tail].length + 1});
        return it->second;
    }
    std::optional<std::uint32_t> find(std::uint32_t tail, std::uint32_t label) const {
        auto it = index_.find(key(tail, label));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }
    // Top-down label sequence -> node.
    std::optional<std::uint32_t> find_sequence(const std::vector<std::uint32_t>& labels) const {
        std::uint32_t node = 0;
        for (auto it = labels.rbegin(); it != labels.rend(); ++it) {
            auto next = find(node, *it);
            if (!next) return std::nullopt;
            node = *next;
        }
        return node;
    }
    const Node& node(std::uint32_t id) const { return nodes_[id]; }
    std::size_t size() const { return nodes_.size(); }

private:
    static std::uint64_t key(std::uint32_t tail, std::uint32_t label) {
        return (static_cast<std::uint64_t>(tail) << 32) | label;
    }
    std::vector<Node> nodes_;
    std::unordered_map<std::uint64_t, std::uint32_t> index_;
};

enum class WitnessCase { Anchor, Below, Detached };

inline VertexSet ancestor_closure(const EliminationForest& f, const std::vector<Vertex>& v) {
    VertexSet out;
    for (Vertex x : v) {
        if (x >= f.size()) throw InputError("vertex outside the forest");
        for (Vertex u = x;; u = f.parent[u]) {
            out.push_back(u);
            if (f.is_root(u)) break;
        }
    }
    return make_vertex_set(std::move(out));
}

class ForestIndex {
public:
    struct Entry {
        std::uint64_t count = 0;
        std::vector<std::pair<Vertex, Vertex>> reps;  // (witness, first vertex below the path start)
    };

    ForestIndex(EliminationForest f, std::vector<std::uint32_t> labels, std::size_t rep_cap)
        : f_(std::move(f)), labels_(std::move(labels)), rep_cap_(std::max<std::size_t>(rep_cap, 1)), below_(f_.size()) {
        if (labels_.size() != f_.size()) throw InputError("labeling size does not match the forest");
        std::vector<Vertex> order(f_.size());
        std::iota(order.begin(), order.end(), Vertex{0});
        std::stable_sort(order.begin(), order.end(), [&](Vertex a, Vertex b) { return f_.level[a] < f_.level[b]; });
        for (Vertex w : order) {
            std::uint32_t node = trie_.prepend(0, labels_[w]);
            record(below_[w], node, w, w);
            Vertex prev = w;
            Vertex u = w;
            while (!f_.is_root(u)) {
                prev = u;
                u = f_.parent[u];
                node = trie_.prepend(node, labels_[u]);
                record(below_[u], node, w, prev);
            }
            record(roots_, node, w, u);
        }
    }

    const EliminationForest& forest() const { return f_; }
    const std::vector<std::uint32_t>& labels() const { return labels_; }
    const PathTrie& trie() const { return trie_; }
    std::size_t rep_cap() const { return rep_cap_; }

    // Witnesses w below-or-at u whose path u..w has the given label sequence.
    std::uint64_t count_below(Vertex u, std::uint32_t node) const {
        auto it = below_[u].find(node);
        return it == below_[u].end() ? 0 : it->second.count;
    }
    std::uint64_t count_from_roots(std::uint32_t node) const {
        auto it = roots_.find(node);
        return it == roots_.end() ? 0 : it->second.count;
    }
    const std::unordered_map<std::uint32_t, Entry>& paths_below(Vertex u) const { return below_[u]; }
    const std::unordered_map<std::uint32_t, Entry>& paths_from_roots() const { return roots_; }

    // Node of the label path from u down to its descendant w.
    std::optional<std::uint32_t> path_node(Vertex u, Vertex w) const {
        std::uint32_t node = 0;
        for (Vertex x = w;; x = f_.parent[x]) {
            auto next = trie_.find(node, labels_[x]);
            if (!next) return std::nullopt;
            node = *next;
            if (x == u) return node;
            if (f_.is_root(x)) return std::nullopt;
        }
    }

    // Visits one representative per witness class relative to the ancestor
    // closed set `closure`, with the exact class size.
    template <class Visit>
    void classes(const VertexSet& closure, Visit&& visit) const {
        std::unordered_map<Vertex, std::vector<Vertex>> kids;
        std::vector<Vertex> closure_roots;
        for (Vertex c : closure) {
            if (f_.is_root(c))
                closure_roots.push_back(c);
            else
                kids[f_.parent[c]].push_back(c);
        }
        auto pick = [&](const Entry& e, const std::vector<Vertex>& excluded) -> Vertex {
            for (const auto& [rep, first] : e.reps)
                if (std::find(excluded.begin(), excluded.end(), first) == excluded.end()) return rep;
            throw Error("forest index representative budget exceeded");
        };
        for (Vertex a : closure) visit(a, std::uint64_t{1}, WitnessCase::Anchor);
        static const std::vector<Vertex> none;
        for (Vertex a : closure) {
            auto kit = kids.find(a);
            const auto& ak = kit == kids.end() ? none : kit->second;
            for (const auto& [node, e] : below_[a]) {
                if (trie_.node(node).length < 2) continue;
                std::uint64_t cnt = e.count;
                std::uint32_t tail = trie_.node(node).tail;
                for (Vertex c : ak) cnt -= count_below(c, tail);
                if (cnt) visit(pick(e, ak), cnt, WitnessCase::Below);
            }
        }
        for (const auto& [node, e] : roots_) {
            std::uint64_t cnt = e.count;
            for (Vertex r : closure_roots) cnt -= count_below(r, node);
            if (cnt) visit(pick(e, closure_roots), cnt, WitnessCase::Detached);
        }
    }

private:
    void record(std::unordered_map<std::uint32_t, Entry>& table, std::uint32_t node, Vertex w, Vertex first) {
        Entry& e = table[node];
        ++e.count;
        if (e.reps.size() < rep_cap_ &&
            std::none_of(e.reps.begin(), e.reps.end(), [&](const auto& r) { return r.second == first; }))
            e.reps.emplace_back(w, first);
    }

    EliminationForest f_;
    std::vector<std::uint32_t> labels_;
    std::size_t rep_cap_;
    PathTrie trie_;
    std::vector<std::unordered_map<std::uint32_t, Entry>> below_;
    std::unordered_map<std::uint32_t, Entry> roots_;
};

// patterns ----------------------------------------------------------------------

// k-labeled rooted colored forest; marks are indices into `alphabet`.
struct TightLabeledForest {
    std::vector<std::string> alphabet;
    std::vector<Vertex> parent;  // parent[root] = root
    std::vector<std::vector<std::uint32_t>> marks;
    std::vector<Vertex> lambda;

    std::size_t size() const { return parent.size(); }
    std::size_t k() const { return lambda.size(); }
    bool is_root(Vertex v) const { return parent[v] == v; }
    std::size_t depth(Vertex v) const {
        std::size_t d = 1;
        while (!is_root(v)) {
            v = parent[v];
            ++d;
        }
        return d;
    }
    bool is_ancestor(Vertex u, Vertex v) const {
        for (;; v = parent[v]) {
            if (u == v) return true;
            if (is_root(v)) return false;
        }
    }
    bool is_tight() const {
        std::vector<char> covered(size(), 0);
        for (Vertex l : lambda)
            for (Vertex u = l;; u = parent[u]) {
                covered[u] = 1;
                if (is_root(u)) break;
            }
        return std::all_of(covered.begin(), covered.end(), [](char c) { return c != 0; });
    }

    // Canonical code: equal iff isomorphic respecting marks and labels.
    std::string code() const;
};

namespace detail {

inline std::vector<std::string> subtree_codes(const TightLabeledForest& p, std::vector<VertexSet>& children) {
    const std::size_t n = p.size();
    children.assign(n, {});
    for (Vertex v = 0; v < n; ++v)
        if (!p.is_root(v)) children[p.parent[v]].push_back(v);
    std::vector<std::vector<std::size_t>> lab(n);
    for (std::size_t i = 0; i < p.lambda.size(); ++i) lab[p.lambda[i]].push_back(i + 1);
    std::vector<std::size_t> depth(n);
    std::vector<Vertex> order(n);
    std::iota(order.begin(), order.end(), Vertex{0});
    for (Vertex v = 0; v < n; ++v) depth[v] = p.depth(v);
    std::sort(order.begin(), order.end(), [&](Vertex a, Vertex b) { return depth[a] > depth[b]; });
    std::vector<std::string> code(n);
    for (Vertex v : order) {
        std::string s = "(";
        for (std::size_t i = 0; i < p.marks[v].size(); ++i) s += (i ? "," : "") + std::to_string(p.marks[v][i]);
        s += "|";
        for (std::size_t i = 0; i < lab[v].size(); ++i) s += (i ? "," : "") + std::to_string(lab[v][i]);
        auto& ch = children[v];
        std::sort(ch.begin(), ch.end(), [&](Vertex a, Vertex b) { return code[a] < code[b] || (code[a] == code[b] && a < b); });
        for (Vertex c : ch) s += code[c];
        code[v] = s + ")";
    }
    return code;
}

}  // namespace detail

inline std::string TightLabeledForest::code() const {
    std::vector<VertexSet> children;
    auto codes = detail::subtree_codes(*this, children);
    std::vector<std::string> roots;
    for (Vertex v = 0; v < size(); ++v)
        if (is_root(v)) roots.push_back(codes[v]);
    std::sort(roots.begin(), roots.end());
    std::string s = "k" + std::to_string(k()) + ":";
    for (const auto& r : roots) s += r;
    return s;
}

// Reorders vertices canonically (roots, then children, by code).
// `to_old[i]` is the old index of new vertex i.
inline TightLabeledForest canonicalize(const TightLabeledForest& p, std::vector<Vertex>* to_old = nullptr) {
    std::vector<VertexSet> children;
    auto codes = detail::subtree_codes(p, children);
    std::vector<Vertex> roots;
    for (Vertex v = 0; v < p.size(); ++v)
        if (p.is_root(v)) roots.push_back(v);
    std::sort(roots.begin(), roots.end(), [&](Vertex a, Vertex b) { return codes[a] < codes[b] || (codes[a] == codes[b] && a < b); });
    std::vector<Vertex> order;
    std::function<void(Vertex)> dfs = [&](Vertex v) {
        order.push_back(v);
        for (Vertex c : children[v]) dfs(c);
    };
    for (Vertex r : roots) dfs(r);
    std::vector<Vertex> to_new(p.size());
    for (std::size_t i = 0; i < order.size(); ++i) to_new[order[i]] = static_cast<Vertex>(i);
    TightLabeledForest q;
    q.alphabet = p.alphabet;
    q.parent.resize(p.size());
    q.marks.resize(p.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        Vertex old = order[i];
        q.parent[i] = to_new[p.parent[old]];
        q.marks[i] = p.marks[old];
    }
    for (Vertex l : p.lambda) q.lambda.push_back(to_new[l]);
    if (to_old) *to_old = order;
    return q;
}

// Y|v as a canonical pattern; `to_forest[i]` is the forest vertex of pattern vertex i.
inline TightLabeledForest shape_at(const EliminationForest& f, const MarkLabeling& lab, const std::vector<Vertex>& v,
                                   std::vector<Vertex>* to_forest = nullptr) {
    VertexSet closure = ancestor_closure(f, v);
    TightLabeledForest p;
    p.alphabet = lab.alphabet;
    auto pos = [&](Vertex x) { return static_cast<Vertex>(std::lower_bound(closure.begin(), closure.end(), x) - closure.begin()); };
    for (Vertex x : closure) {
        p.parent.push_back(pos(f.parent[x]));
        p.marks.push_back(lab.label_marks[lab.label[x]]);
    }
    for (Vertex x : v) p.lambda.push_back(pos(x));
    std::vector<Vertex> order;
    auto q = canonicalize(p, &order);
    if (to_forest) {
        to_forest->clear();
        for (Vertex o : order) to_forest->push_back(closure[o]);
    }
    return q;
}

inline TightLabeledForest shape_at(const ColoredForest& y, const std::vector<Vertex>& v) {
    return shape_at(y.forest, label_by_marks(y.y, all_marks(y.y)), v);
}

// Subpattern induced by the first k labels and their ancestors.
inline TightLabeledForest restrict_labels(const TightLabeledForest& p, std::size_t k, std::vector<Vertex>* to_old = nullptr) {
    std::vector<char> keep(p.size(), 0);
    for (std::size_t i = 0; i < k; ++i)
        for (Vertex u = p.lambda[i];; u = p.parent[u]) {
            keep[u] = 1;
            if (p.is_root(u)) break;
        }
    std::vector<Vertex> old;
    std::vector<Vertex> idx(p.size(), 0);
    for (Vertex v = 0; v < p.size(); ++v)
        if (keep[v]) {
            idx[v] = static_cast<Vertex>(old.size());
            old.push_back(v);
        }
    TightLabeledForest q;
    q.alphabet = p.alphabet;
    for (Vertex o : old) {
        q.parent.push_back(idx[p.parent[o]]);
        q.marks.push_back(p.marks[o]);
    }
    for (std::size_t i = 0; i < k; ++i) q.lambda.push_back(idx[p.lambda[i]]);
    std::vector<Vertex> order;
    auto c = canonicalize(q, &order);
    if (to_old) {
        to_old->clear();
        for (Vertex o : order) to_old->push_back(old[o]);
    }
    return c;
}

// residue annotation ----------------------------------------------------------------

struct ResidueAnnotation {
    std::uint64_t modulus = 1;
    std::vector<std::uint32_t> blue;    // instances of the path rooted at v
    std::vector<std::uint32_t> green;   // instances of the path minus its root rooted at v
    std::map<Vertex, std::uint32_t> B;  // per root: copies in its component
    std::uint32_t N = 0;
};

namespace detail {
// Top-down labels of a one-label tight pattern (a path), or nullopt when
// some mark set does not occur in the forest.
inline std::optional<std::vector<std::uint32_t>> path_labels(const TightLabeledForest& p, const MarkLabeling& lab,
                                                            Vertex bottom, std::optional<Vertex> stop = std::nullopt) {
    std::vector<std::uint32_t> seq;
    for (Vertex u = bottom;; u = p.parent[u]) {
        if (stop && u == *stop) break;
        auto id = lab.id_of(p.marks[u]);
        if (!id) return std::nullopt;
        seq.push_back(*id);
        if (p.is_root(u)) break;
    }
    std::reverse(seq.begin(), seq.end());
    return seq;
}

}  // namespace detail

inline ResidueAnnotation annotate_counts(const ColoredForest& y, const TightLabeledForest& f1, std::uint64_t b) {
    if (b == 0) throw InputError("modulus must be positive");
    if (f1.k() != 1 || !f1.is_tight()) throw InputError("annotate_counts expects a one-label tight pattern");
    std::size_t roots = 0;
    for (Vertex v = 0; v < f1.size(); ++v) roots += f1.is_root(v) ? 1 : 0;
    if (roots != 1) throw InputError("annotate_counts expects a single tree");
    auto lab = label_by_marks(y.y, f1.alphabet);
    ForestIndex idx(y.forest, lab.label, 1);
    ResidueAnnotation out;
    out.modulus = b;
    out.blue.assign(y.size(), 0);
    out.green.assign(y.size(), 0);
    Vertex root = f1.lambda[0];
    while (!f1.is_root(root)) root = f1.parent[root];
    auto seq = detail::path_labels(f1, lab, f1.lambda[0]);
    auto rest_seq = detail::path_labels(f1, lab, f1.lambda[0], root);
    std::optional<std::uint32_t> full, rest;
    if (seq) full = idx.trie().find_sequence(*seq);
    if (rest_seq && !rest_seq->empty()) rest = idx.trie().find_sequence(*rest_seq);
    for (Vertex v = 0; v < y.size(); ++v) {
        if (full) out.blue[v] = static_cast<std::uint32_t>(idx.count_below(v, *full) % b);
        if (rest) out.green[v] = static_cast<std::uint32_t>(idx.count_below(v, *rest) % b);
    }
    for (Vertex v = 0; v < y.size(); ++v) {
        Vertex r = y.forest.root_of(v);
        out.B[r] = static_cast<std::uint32_t>((out.B[r] + out.blue[v]) % b);
    }
    for (const auto& [r, x] : out.B) out.N = static_cast<std::uint32_t>((out.N + x) % b);
    return out;
}

// instance counting ------------------------------------------------------------------

struct CaseCounters {
    std::uint64_t anchored = 0;      // the new label is an ancestor of (or equal to) an old one
    std::uint64_t detached = 0;      // the new label is alone in its component
    std::uint64_t below = 0;         // split below the deepest shared ancestor
    std::uint64_t shape_mismatch = 0;
};

// Index over a mark alphabet for repeated instance counting.
class PatternCounter {
public:
    PatternCounter(const ColoredForest& y, std::vector<std::string> alphabet)
        : lab_(label_by_marks(y.y, std::move(alphabet))), idx_(y.forest, lab_.label, 1) {}

    const MarkLabeling& labeling() const { return lab_; }
    const ForestIndex& index() const { return idx_; }

    // |{ w : Y|(v, w) ~ (P, lambda) }| mod b.
    std::uint64_t count_mod(const TightLabeledForest& p, const std::vector<Vertex>& v, std::uint64_t b,
                            CaseCounters* counters = nullptr) const {
        if (b == 0) throw InputError("modulus must be positive");
        if (p.k() != v.size() + 1) throw InputError("pattern must carry one more label than the tuple");
        if (p.alphabet != lab_.alphabet) throw InputError("pattern alphabet differs from the counter alphabet");
        const auto& f = idx_.forest();
        const std::size_t k = v.size();
        // old part of the pattern and its image in the forest
        std::vector<Vertex> sub_to_p;
        auto sub = restrict_labels(p, k, &sub_to_p);
        std::vector<Vertex> sub_to_y;
        auto here = shape_at(f, lab_, v, &sub_to_y);
        if (here.code() != sub.code()) {
            if (counters) ++counters->shape_mismatch;
            return 0;
        }
        std::vector<std::optional<Vertex>> p_to_y(p.size());
        for (std::size_t i = 0; i < sub_to_p.size(); ++i) p_to_y[sub_to_p[i]] = sub_to_y[i];

        const Vertex target = p.lambda[k];
        if (p_to_y[target]) {
            if (counters) ++counters->anchored;
            auto vw = v;
            vw.push_back(*p_to_y[target]);
            return shape_at(f, lab_, vw).code() == p.code() ? 1 % b : 0;
        }
        // deepest ancestor of the new label inside the old part
        std::optional<Vertex> s;
        for (Vertex u = target; !p.is_root(u);) {
            u = p.parent[u];
            if (p_to_y[u]) {
                s = u;
                break;
            }
        }
        auto q = detail::path_labels(p, lab_, target, s);
        auto q_node = q ? idx_.trie().find_sequence(*q) : std::nullopt;
        if (!s) {
            if (counters) ++counters->detached;
            if (!q_node) return 0;
            std::uint64_t cnt = idx_.count_from_roots(*q_node);
            for (Vertex r : ancestor_closure(f, v))
                if (f.is_root(r)) cnt -= idx_.count_below(r, *q_node);
            return cnt % b;
        }
        if (counters) ++counters->below;
        if (!q_node) return 0;
        Vertex vs = *p_to_y[*s];
        auto full = idx_.trie().find(*q_node, lab_.label[vs]);
        if (!full) return 0;
        std::uint64_t cnt = idx_.count_below(vs, *full);
        for (Vertex c : ancestor_closure(f, v))
            if (!f.is_root(c) && f.parent[c] == vs) cnt -= idx_.count_below(c, *q_node);
        return cnt % b;
    }

private:
    MarkLabeling lab_;
    ForestIndex idx_;
};

inline std::uint64_t count_instances_mod(const ColoredForest& y, const TightLabeledForest& p, const std::vector<Vertex>& v,
                                         std::uint64_t b, CaseCounters* counters = nullptr) {
    return PatternCounter(y, p.alphabet).count_mod(p, v, b, counters);
}

// evaluation ---------------------------------------------------------------------------

struct ForestEvalOptions {
    bool exact_types = false;     // isomorphism classes instead of thresholded types
    std::size_t max_height = 0;   // 0: no bound
};

inline std::vector<std::string> marks_in(const Formula& f) {
    std::vector<std::string> out;
    std::function<void(const Formula&)> walk = [&](const Formula& g) {
        if (g->op == Op::Mark && std::find(out.begin(), out.end(), g->name) == out.end()) out.push_back(g->name);
        for (const auto& k : g->kids) walk(k);
    };
    walk(f);
    std::sort(out.begin(), out.end());
    return out;
}

// Shared type index for evaluating formulas on one forest.
struct ForestTypeIndex {
    MarkLabeling labeling;
    SubtreeTypeTable types;
    ForestIndex index;
};

inline std::shared_ptr<const ForestTypeIndex> build_type_index(const ColoredForest& y, std::vector<std::string> alphabet,
                                                               std::size_t threshold, std::uint64_t modulus,
                                                               std::size_t anchors) {
    auto lab = label_by_marks(y.y, std::move(alphabet));
    auto types = compute_subtree_types(y.forest, lab.label, threshold, modulus);
    ForestIndex idx(y.forest, types.type, anchors + 1);
    return std::make_shared<const ForestTypeIndex>(ForestTypeIndex{std::move(lab), std::move(types), std::move(idx)});
}

class HeightExceeded : public Error {
public:
    using Error::Error;
};

// Evaluates a formula over the forest vocabulary (marks, tree adjacency, the
// parent function) one witness class at a time.
class ForestEvaluator {
public:
    ForestEvaluator(const ColoredForest& y, const Formula& phi, const ForestEvalOptions& opt = {})
        : y_(y), free_(free_vars(phi)) {
        if (opt.max_height && y.height() > opt.max_height) throw HeightExceeded("forest height exceeds the bound");
        const std::size_t anchors = free_.size() + quantifier_depth(phi);
        const std::size_t threshold = opt.exact_types ? 0 : anchors + 1;
        index_ = build_type_index(y, marks_in(phi), threshold, moduli_lcm(phi), anchors);
        compile_root(phi);
    }

    ForestEvaluator(const ColoredForest& y, const Formula& phi, std::shared_ptr<const ForestTypeIndex> index)
        : y_(y), free_(free_vars(phi)), index_(std::move(index)) {
        compile_root(phi);
    }

    const std::vector<std::string>& free_variables() const { return free_; }
    const ForestTypeIndex& type_index() const { return *index_; }

    bool eval(const std::vector<Vertex>& tuple) const {
        if (tuple.size() != free_.size()) throw InputError("tuple size does not match the free variables");
        std::vector<Vertex> val(slots_, 0);
        for (std::size_t i = 0; i < tuple.size(); ++i) {
            if (tuple[i] >= y_.size()) throw InputError("vertex outside the forest");
            val[i] = tuple[i];
        }
        return eval(root_, val);
    }

    bool eval(const Valuation& nu) const {
        std::vector<Vertex> tuple;
        for (const auto& v : free_) {
            auto it = nu.find(v);
            if (it == nu.end()) throw UnboundVariable("unbound free variable '" + v + "'");
            tuple.push_back(it->second);
        }
        return eval(tuple);
    }

    // Bound variable of a top-level quantifier evaluated with a given body.
    template <class Visit>
    void witness_classes(const std::vector<Vertex>& anchors, Visit&& visit) const {
        index_->index.classes(ancestor_closure(y_.forest, anchors), visit);
    }

private:
    struct CTerm {
        std::size_t slot;
        std::size_t ups;
    };
    struct CNode {
        Op op;
        std::vector<CTerm> terms;
        std::int64_t mark = -1;
        std::size_t slot = 0;
        std::vector<std::size_t> scope;  // slots bound around a quantifier
        std::vector<std::size_t> kids;
        std::uint32_t residue = 0, modulus = 1;
    };

    void compile_root(const Formula& phi) {
        for (const auto& v : free_) scope_.emplace_back(v, slots_++);
        root_ = compile(phi);
    }

    std::size_t slot_of(const std::string& v) const {
        for (auto it = scope_.rbegin(); it != scope_.rend(); ++it)
            if (it->first == v) return it->second;
        throw UnboundVariable("unbound free variable '" + v + "'");
    }

    std::size_t compile(const Formula& f) {
        CNode n{f->op};
        for (const auto& t : f->terms) {
            for (auto a : t.fns)
                if (a != 1) throw UnknownSymbol("forest formulas may only use the parent function");
            n.terms.push_back({slot_of(t.var), t.fns.size()});
        }
        if (f->op == Op::Mark) {
            auto idx = y_.y.mark_index(f->name);
            n.mark = idx ? static_cast<std::int64_t>(*idx) : -1;
        }
        if (is_quantifier(f->op)) {
            for (const auto& [name, slot] : scope_) n.scope.push_back(slot);
            n.slot = slots_++;
            n.residue = f->residue;
            n.modulus = f->modulus;
            scope_.emplace_back(f->name, n.slot);
            n.kids.push_back(compile(f->kids[0]));
            scope_.pop_back();
        } else {
            for (const auto& k : f->kids) n.kids.push_back(compile(k));
        }
        nodes_.push_back(std::move(n));
        return nodes_.size() - 1;
    }

    Vertex term_value(const CTerm& t, const std::vector<Vertex>& val) const {
        Vertex v = val[t.slot];
        for (std::size_t i = 0; i < t.ups; ++i) v = y_.forest.parent[v];
        return v;
    }

    bool eval(std::size_t id, std::vector<Vertex>& val) const {
        const CNode& n = nodes_[id];
        switch (n.op) {
            case Op::True: return true;
            case Op::False: return false;
            case Op::Edge: return y_.y.adjacent(term_value(n.terms[0], val), term_value(n.terms[1], val));
            case Op::Eq: return term_value(n.terms[0], val) == term_value(n.terms[1], val);
            case Op::Mark:
                return n.mark >= 0 && y_.y.marked(static_cast<std::size_t>(n.mark), term_value(n.terms[0], val));
            case Op::Not: return !eval(n.kids[0], val);
            case Op::And:
                for (auto k : n.kids)
                    if (!eval(k, val)) return false;
                return true;
            case Op::Or:
                for (auto k : n.kids)
                    if (eval(k, val)) return true;
                return false;
            default: break;
        }
        std::vector<Vertex> anchors;
        for (auto s : n.scope) anchors.push_back(val[s]);
        std::uint64_t hits = 0;
        bool decided = false, result = false;
        index_->index.classes(ancestor_closure(y_.forest, anchors), [&](Vertex rep, std::uint64_t cnt, WitnessCase) {
            if (decided) return;
            if (n.op == Op::ModExists && cnt % n.modulus == 0) return;
            val[n.slot] = rep;
            bool body = eval(n.kids[0], val);
            if (n.op == Op::Exists && body) {
                decided = true;
                result = true;
            } else if (n.op == Op::Forall && !body) {
                decided = true;
                result = false;
            } else if (n.op == Op::ModExists && body) {
                hits = (hits + cnt % n.modulus) % n.modulus;
            }
        });
        if (decided) return result;
        if (n.op == Op::Exists) return false;
        if (n.op == Op::Forall) return true;
        return hits == n.residue;
    }

    const ColoredForest& y_;
    std::vector<std::string> free_;
    std::shared_ptr<const ForestTypeIndex> index_;
    std::vector<std::pair<std::string, std::size_t>> scope_;
    std::size_t slots_ = 0;
    std::vector<CNode> nodes_;
    std::size_t root_ = 0;
};

inline bool eval_forest(const ColoredForest& y, const Formula& phi, const Valuation& nu, const ForestEvalOptions& opt = {}) {
    return ForestEvaluator(y, phi, opt).eval(nu);
}

// modulo elimination on a forest ---------------------------------------------------------

// Y |= Emod[c,b] y. sigma(v, y)  iff  residue(v) == c, where residue sums the
// class sizes (read from the per-vertex path counts) of the witness classes
// whose representative satisfies sigma.
class ForestModElimination {
public:
    ForestModElimination(const ColoredForest& y, Formula sigma, std::string bound, std::uint32_t c, std::uint32_t b,
                         const ForestEvalOptions& opt = {})
        : y_(y), sigma_(std::move(sigma)), bound_(std::move(bound)), c_(c), b_(b) {
        if (b == 0 || c >= b) throw InputError("malformed modulus: need 0 <= c < b");
        if (opt.max_height && y.height() > opt.max_height) throw HeightExceeded("forest height exceeds the bound");
        for (const auto& v : free_vars(sigma_))
            if (v != bound_) outer_.push_back(v);
        Formula whole = f_mod_exists(c, b, bound_, sigma_);
        const std::size_t anchors = outer_.size() + quantifier_depth(whole);
        const std::size_t threshold = opt.exact_types ? 0 : anchors + 1;
        index_ = build_type_index(y, marks_in(whole), threshold, moduli_lcm(whole), anchors);
        // evaluate sigma with the bound variable last
        std::vector<std::string> order = outer_;
        order.push_back(bound_);
        body_order_ = order;
        body_ = std::make_unique<ForestEvaluator>(y, sigma_, index_);
        for (const auto& v : body_->free_variables())
            slot_map_.push_back(static_cast<std::size_t>(std::find(order.begin(), order.end(), v) - order.begin()));
    }

    const std::vector<std::string>& free_variables() const { return outer_; }
    std::uint32_t residue_target() const { return c_; }
    std::uint32_t modulus() const { return b_; }

    std::uint32_t residue(const std::vector<Vertex>& v, CaseCounters* counters = nullptr) const {
        if (v.size() != outer_.size()) throw InputError("tuple size does not match the free variables");
        std::uint64_t total = 0;
        std::vector<Vertex> full = v;
        full.push_back(0);
        std::vector<Vertex> arg(slot_map_.size());
        index_->index.classes(ancestor_closure(y_.forest, v), [&](Vertex rep, std::uint64_t cnt, WitnessCase wc) {
            if (counters) {
                if (wc == WitnessCase::Anchor) ++counters->anchored;
                if (wc == WitnessCase::Below) ++counters->below;
                if (wc == WitnessCase::Detached) ++counters->detached;
            }
            if (cnt % b_ == 0) return;
            full.back() = rep;
            for (std::size_t i = 0; i < slot_map_.size(); ++i) arg[i] = full[slot_map_[i]];
            if (body_->eval(arg)) total = (total + cnt % b_) % b_;
        });
        return static_cast<std::uint32_t>(total);
    }

    bool zeta(const std::vector<Vertex>& v) const { return residue(v) == c_; }

    // Y with the residue marks "cnt#<path>#<i>": vertex u carries it when the
    // number of witnesses below u along the label path is i mod b. Root totals
    // are in "N#<path>#<i>" on every vertex.
    GuidedStructure expanded() const {
        GuidedStructure out = y_.y;
        const auto& idx = index_->index;
        std::map<std::string, VertexSet> marks;
        for (Vertex u = 0; u < y_.size(); ++u)
            for (const auto& [node, e] : idx.paths_below(u))
                marks["cnt#" + std::to_string(node) + "#" + std::to_string(e.count % b_)].push_back(u);
        VertexSet all(y_.size());
        std::iota(all.begin(), all.end(), Vertex{0});
        for (const auto& [node, e] : idx.paths_from_roots())
            marks["N#" + std::to_string(node) + "#" + std::to_string(e.count % b_)] = all;
        for (auto& [name, set] : marks) out.add_mark(name, make_vertex_set(std::move(set)));
        return out;
    }

private:
    const ColoredForest& y_;
    Formula sigma_;
    std::string bound_;
    std::uint32_t c_, b_;
    std::vector<std::string> outer_;
    std::vector<std::string> body_order_;
    std::shared_ptr<const ForestTypeIndex> index_;
    std::unique_ptr<ForestEvaluator> body_;
    std::vector<std::size_t> slot_map_;
};

inline ForestModElimination eliminate_mod_on_forest(const ColoredForest& y, const Formula& sigma, const std::string& bound,
                                                    std::uint32_t c, std::uint32_t b, const ForestEvalOptions& opt = {}) {
    return ForestModElimination(y, sigma, bound, c, b, opt);
}

// single-pattern residue formula ----------------------------------------------------------

// Quantifier-free formula over the forest vocabulary plus the marks
// "blue#<tag>#i" and "green#<tag>#i", true at v iff the number of w with
// Y|(v, w) ~ (P, lambda) is c mod b.
class PatternResidue {
public:
    PatternResidue(const ColoredForest& y, TightLabeledForest p, std::uint64_t b, std::string tag,
                   std::vector<std::string> vars)
        : p_(std::move(p)), b_(b), tag_(std::move(tag)), vars_(std::move(vars)), counter_(y, p_.alphabet) {
        if (b_ == 0) throw InputError("modulus must be positive");
        if (vars_.size() + 1 != p_.k()) throw InputError("need one variable per old label");
        analyse(y);
    }

    // Y plus the blue/green marks for this pattern.
    GuidedStructure expanded(const ColoredForest& y) const {
        GuidedStructure out = y.y;
        const auto& idx = counter_.index();
        std::vector<VertexSet> blue(b_), green(b_);
        for (Vertex u = 0; u < y.size(); ++u) {
            std::uint64_t bc = blue_node_ ? idx.count_below(u, *blue_node_) : 0;
            std::uint64_t gc = green_node_ ? idx.count_below(u, *green_node_) : 0;
            blue[bc % b_].push_back(u);
            green[gc % b_].push_back(u);
        }
        for (std::uint64_t i = 0; i < b_; ++i) {
            out.add_mark(blue_mark(i), blue[i]);
            out.add_mark(green_mark(i), green[i]);
        }
        return out;
    }

    Formula formula(std::uint64_t c) const {
        c %= b_;
        Formula shape = shape_formula();
        Formula count;
        if (kind_ == Kind::Anchored) {
            count = f_bool(1 % b_ == c);
        } else {
            // terms whose marks are added (+1) or subtracted (-1)
            std::vector<std::pair<Term, bool>> parts;
            std::uint64_t constant = 0;
            if (kind_ == Kind::Below) {
                parts.emplace_back(s_term_, true);
                for (const auto& t : child_terms_) parts.emplace_back(t, false);
            } else {
                constant = root_total_ % b_;
                for (const auto& t : root_terms_) parts.emplace_back(t, false);
            }
            std::vector<Formula> alts;
            std::vector<std::uint64_t> pick(parts.size(), 0);
            while (true) {
                std::uint64_t sum = constant;
                for (std::size_t i = 0; i < parts.size(); ++i)
                    sum = parts[i].second ? (sum + pick[i]) % b_ : (sum + b_ - pick[i]) % b_;
                if (sum == c) {
                    std::vector<Formula> conj;
                    for (std::size_t i = 0; i < parts.size(); ++i) {
                        bool is_blue = parts[i].second || kind_ == Kind::Detached;
                        conj.push_back(f_mark(is_blue ? blue_mark(pick[i]) : green_mark(pick[i]), parts[i].first));
                    }
                    alts.push_back(f_and(std::move(conj)));
                }
                std::size_t i = 0;
                while (i < pick.size() && ++pick[i] == b_) pick[i++] = 0;
                if (i == pick.size()) break;
            }
            count = f_or(std::move(alts));
        }
        Formula hit = f_and({shape, count});
        return c == 0 ? f_or({hit, f_not(shape)}) : hit;
    }

    std::string blue_mark(std::uint64_t i) const { return "blue#" + tag_ + "#" + std::to_string(i); }
    std::string green_mark(std::uint64_t i) const { return "green#" + tag_ + "#" + std::to_string(i); }

private:
    enum class Kind { Anchored, Detached, Below };

    Term term_for(Vertex u) const {
        // a labelled descendant of u among the old labels
        const std::size_t k = vars_.size();
        for (std::size_t i = 0; i < k; ++i)
            if (p_.is_ancestor(u, p_.lambda[i]))
                return Term{vars_[i], std::vector<std::size_t>(p_.depth(p_.lambda[i]) - p_.depth(u), 1)};
        throw InputError("pattern vertex has no labelled descendant");
    }

    void analyse(const ColoredForest& y) {
        const std::size_t k = vars_.size();
        std::vector<Vertex> sub_to_p;
        restrict_labels(p_, k, &sub_to_p);
        in_old_.assign(p_.size(), 0);
        for (Vertex u : sub_to_p) in_old_[u] = 1;
        const Vertex target = p_.lambda[k];
        const auto& lab = counter_.labeling();
        const auto& idx = counter_.index();
        if (in_old_[target]) {
            kind_ = Kind::Anchored;
            return;
        }
        std::optional<Vertex> s;
        for (Vertex u = target; !p_.is_root(u);) {
            u = p_.parent[u];
            if (in_old_[u]) {
                s = u;
                break;
            }
        }
        auto q = detail::path_labels(p_, lab, target, s);
        auto q_node = q ? idx.trie().find_sequence(*q) : std::nullopt;
        if (!s) {
            kind_ = Kind::Detached;
            blue_node_ = q_node;
            root_total_ = q_node ? idx.count_from_roots(*q_node) : 0;
            for (Vertex u = 0; u < p_.size(); ++u)
                if (in_old_[u] && p_.is_root(u)) root_terms_.push_back(term_for(u));
            return;
        }
        kind_ = Kind::Below;
        green_node_ = q_node;
        auto s_label = lab.id_of(p_.marks[*s]);
        if (q_node && s_label) blue_node_ = idx.trie().find(*q_node, *s_label);
        s_term_ = term_for(*s);
        for (Vertex u = 0; u < p_.size(); ++u)
            if (in_old_[u] && !p_.is_root(u) && p_.parent[u] == *s) child_terms_.push_back(term_for(u));
        (void)y;
    }

    // Y|x ~ restriction of P to the old labels.
    Formula shape_formula() const {
        const std::size_t k = vars_.size();
        std::vector<Formula> conj;
        std::vector<std::size_t> d(k);
        for (std::size_t i = 0; i < k; ++i) {
            d[i] = p_.depth(p_.lambda[i]);
            conj.push_back(f_mark(level_mark(d[i]), var_term(vars_[i])));
        }
        auto up = [&](std::size_t i, std::size_t steps) { return Term{vars_[i], std::vector<std::size_t>(steps, 1)}; };
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = i + 1; j < k; ++j) {
                // depth of the deepest common ancestor (0: none)
                std::size_t e = 0;
                for (std::size_t depth = 1; depth <= std::min(d[i], d[j]); ++depth) {
                    Vertex ai = p_.lambda[i], aj = p_.lambda[j];
                    for (std::size_t s = 0; s < d[i] - depth; ++s) ai = p_.parent[ai];
                    for (std::size_t s = 0; s < d[j] - depth; ++s) aj = p_.parent[aj];
                    if (ai == aj) e = depth;
                }
                if (e >= 1) conj.push_back(f_eq(up(i, d[i] - e), up(j, d[j] - e)));
                if (e < std::min(d[i], d[j])) conj.push_back(f_not(f_eq(up(i, d[i] - e - 1), up(j, d[j] - e - 1))));
            }
        for (Vertex u = 0; u < p_.size(); ++u) {
            if (!in_old_[u]) continue;
            Term t = term_for(u);
            for (std::uint32_t a = 0; a < p_.alphabet.size(); ++a) {
                bool has = std::binary_search(p_.marks[u].begin(), p_.marks[u].end(), a);
                Formula m = f_mark(p_.alphabet[a], t);
                conj.push_back(has ? m : f_not(m));
            }
        }
        return f_and(std::move(conj));
    }

    TightLabeledForest p_;
    std::uint64_t b_;
    std::string tag_;
    std::vector<std::string> vars_;
    PatternCounter counter_;
    Kind kind_ = Kind::Anchored;
    std::vector<char> in_old_;
    std::optional<std::uint32_t> blue_node_, green_node_;
    std::uint64_t root_total_ = 0;
    Term s_term_;
    std::vector<Term> child_terms_, root_terms_;
};

}  // namespace fom
