#pragma once

// Elimination of modulo counting quantifiers over guided structures.
//
// For Emod[a,b] y. rho(x, y) with rho quantifier-free: color the Gaifman graph
// with a (p+1)-centered coloring, p = (k+1)|T| where T holds the composition
// tuples of rho closed under suffixes. The color type of v lists the colors of
// f(v) for f in T. For a tuple v of types t and a witness type t', every term
// of rho lands in the piece spanned by the colors of t and t', which has tree
// depth at most p. Witness counts per type are read off the piece's forest,
// and the verdict is the sum of the per-type residues.

#include <atomic>
#include <cstdint>
#include <future>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "fom/coloring.hpp"
#include "fom/forest_codec.hpp"
#include "fom/forest_eval.hpp"
#include "fom/logic.hpp"
#include "fom/structures.hpp"

namespace fom {

class UnsupportedFragment : public Error {
public:
    explicit UnsupportedFragment(std::string node)
        : Error("unsupported fragment: plain quantifier in '" + node + "'"), node_(std::move(node)) {}
    const std::string& node() const { return node_; }

private:
    std::string node_;
};

using TermTuple = std::vector<std::size_t>;

// f_alpha(v); tuples list function indices (1-based) outermost first.
inline Vertex apply_tuple(const GuidedStructure& m, const TermTuple& fns, Vertex v) {
    for (auto it = fns.rbegin(); it != fns.rend(); ++it) {
        if (*it == 0 || *it > m.function_count()) throw UnknownSymbol("function index " + std::to_string(*it) + " not in signature");
        v = m.function(*it - 1)[v];
    }
    return v;
}

struct ColorType {
    std::vector<Color> colors;  // aligned with the tuple list T

    auto operator<=>(const ColorType&) const = default;
    bool operator==(const ColorType&) const = default;
};

inline ColorType color_type_of(const GuidedStructure& m, const std::vector<Color>& gamma, const std::vector<TermTuple>& tuples,
                               Vertex v) {
    ColorType t;
    for (const auto& a : tuples) t.colors.push_back(gamma[apply_tuple(m, a, v)]);
    return t;
}

inline std::string color_mark(Color c, const std::string& stage = "") { return stage + "col#" + std::to_string(c); }
inline std::string type_mark(std::size_t id, const std::string& stage = "") { return stage + "tp#" + std::to_string(id); }

// tp(x) = t, through the color marks.
inline Formula theta(const ColorType& t, const std::vector<TermTuple>& tuples, const std::string& var,
                     const std::string& stage = "") {
    std::vector<Formula> conj;
    for (std::size_t i = 0; i < tuples.size(); ++i) conj.push_back(f_mark(color_mark(t.colors[i], stage), Term{var, tuples[i]}));
    return f_and(std::move(conj));
}

inline Formula rho_restrict(const Formula& rho, const std::vector<ColorType>& tbar, const std::vector<std::string>& xs,
                            const ColorType& tprime, const std::string& y, const std::vector<TermTuple>& tuples,
                            const std::string& stage = "") {
    if (!is_quantifier_free(rho)) throw InputError("rho_restrict: formula is not quantifier-free");
    if (tbar.size() != xs.size()) throw InputError("rho_restrict: one type per variable");
    std::vector<Formula> conj;
    for (std::size_t i = 0; i < xs.size(); ++i) conj.push_back(theta(tbar[i], tuples, xs[i], stage));
    conj.push_back(theta(tprime, tuples, y, stage));
    conj.push_back(rho);
    return f_and(std::move(conj));
}

// Maps from m types to Z_b summing to a, produced one at a time.
class ResidueDistributions {
public:
    ResidueDistributions(std::uint32_t a, std::uint32_t b, std::size_t m) : target_(a), mod_(b), m_(m) {
        if (b == 0 || a >= b) throw InputError("malformed modulus: need 0 <= a < b");
        done_ = m == 0 && a != 0;
        if (m > 0) free_.assign(m - 1, 0);
    }

    std::optional<std::vector<std::uint32_t>> next() {
        if (done_) return std::nullopt;
        std::vector<std::uint32_t> r = free_;
        if (m_ > 0) {
            std::uint64_t s = 0;
            for (auto x : free_) s += x;
            r.push_back(static_cast<std::uint32_t>((target_ + mod_ - s % mod_) % mod_));
        }
        std::size_t i = 0;
        while (i < free_.size() && ++free_[i] == mod_) free_[i++] = 0;
        done_ = i == free_.size();
        return r;
    }

private:
    std::uint32_t target_, mod_;
    std::size_t m_;
    std::vector<std::uint32_t> free_;
    bool done_ = false;
};

inline ResidueDistributions residue_distributions(std::uint32_t a, std::uint32_t b, std::size_t realized_types) {
    return ResidueDistributions(a, b, realized_types);
}

struct EliminationOptions {
    ColoringBackend backend = ColoringBackend::Heuristic;
    ColoringOptions coloring{};
    // Count witnesses with the pulled-back formula on the piece forest
    // instead of evaluating rho on the decoded piece.
    bool via_pullback = false;
    // Worker threads for building pieces; 1 keeps everything on the caller.
    std::size_t threads = 1;
};

// One eliminated quantifier: Emod[a,b] bound. rho.
class ModElimination {
public:
    struct Piece {
        std::vector<Color> colors;
        VertexSet members;  // sorted ids of the structure
        GuidedStructure sub;
        ColoredForest forest;
        std::unique_ptr<ForestIndex> index;
        std::unique_ptr<NaiveEvaluator> rho;

        std::optional<Vertex> local(Vertex v) const {
            auto it = std::lower_bound(members.begin(), members.end(), v);
            if (it == members.end() || *it != v) return std::nullopt;
            return static_cast<Vertex>(it - members.begin());
        }
        std::string key() const {
            std::string s;
            for (std::size_t i = 0; i < colors.size(); ++i) s += (i ? "." : "") + std::to_string(colors[i]);
            return s;
        }
    };

    ModElimination(const GuidedStructure& m, std::uint32_t a, std::uint32_t b, Formula rho, std::string bound,
                   std::string stage = "", const EliminationOptions& opt = {})
        : a_(a), b_(b), rho_(std::move(rho)), bound_(std::move(bound)), stage_(std::move(stage)), opt_(opt) {
        if (b == 0 || a >= b) throw InputError("malformed modulus: need 0 <= a < b");
        if (!is_quantifier_free(rho_)) throw InputError("eliminate_one: matrix is not quantifier-free");
        if (!validate_guided(m).empty()) throw InputError("eliminate_one: structure is not guided");
        for (const auto& v : free_vars(rho_))
            if (v != bound_) outer_.push_back(v);
        for (const auto& t : suffix_closure(collect_term_tuples(rho_))) tuples_.push_back(t);
        p_ = (outer_.size() + 1) * tuples_.size();
        coloring_ = compute_p_centered(gaifman(m), p_ + 1, opt_.backend, opt_.coloring);

        type_of_.resize(m.size());
        std::map<ColorType, std::size_t> ids;
        for (Vertex v = 0; v < m.size(); ++v) {
            auto t = color_type_of(m, coloring_.color, tuples_, v);
            auto [it, fresh] = ids.emplace(t, types_.size());
            if (fresh) types_.push_back(t);
            type_of_[v] = it->second;
        }
        std::map<std::string, VertexSet> marks;
        for (Vertex v = 0; v < m.size(); ++v) {
            marks[color_mark(coloring_.color[v], stage_)].push_back(v);
            marks[type_mark(type_of_[v], stage_)].push_back(v);
        }
        plus_ = expand_monadic(m, marks);
    }

    ModElimination(const ModElimination&) = delete;
    ModElimination& operator=(const ModElimination&) = delete;

    const std::vector<std::string>& free_variables() const { return outer_; }
    const std::string& bound_variable() const { return bound_; }
    const Formula& matrix() const { return rho_; }
    std::uint32_t residue_target() const { return a_; }
    std::uint32_t modulus() const { return b_; }
    std::size_t p() const { return p_; }
    const std::vector<TermTuple>& tuples() const { return tuples_; }
    const CenteredColoring& coloring() const { return coloring_; }
    const std::vector<ColorType>& realized_types() const { return types_; }
    std::size_t type_of(Vertex v) const { return type_of_[v]; }
    const GuidedStructure& plus() const { return plus_; }
    const std::string& stage() const { return stage_; }

    std::size_t piece_count() const {
        std::lock_guard<std::mutex> lock(mu_);
        return pieces_.size();
    }

    // Colors spanned by the types t and t'.
    std::vector<Color> piece_colors(const std::vector<std::size_t>& tbar, std::size_t tprime) const {
        std::set<Color> c;
        for (auto t : tbar)
            for (Color x : types_[t].colors) c.insert(x);
        for (Color x : types_[tprime].colors) c.insert(x);
        return {c.begin(), c.end()};
    }

    const Piece& piece(const std::vector<Color>& colors) const {
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto it = pieces_.find(colors);
            if (it != pieces_.end()) return *it->second;
        }
        auto pc = make_piece(colors);
        std::lock_guard<std::mutex> lock(mu_);
        return *pieces_.emplace(colors, std::move(pc)).first->second;
    }

    // Witness count mod b for every realized witness type.
    std::vector<std::uint32_t> residues_by_type(const std::vector<Vertex>& v) const {
        if (v.size() != outer_.size()) throw InputError("tuple size does not match the free variables");
        for (Vertex x : v)
            if (x >= plus_.size()) throw InputError("vertex outside the domain");
        std::vector<std::size_t> tbar;
        for (Vertex x : v) tbar.push_back(type_of_[x]);
        std::map<std::vector<Color>, std::vector<std::size_t>> groups;
        for (std::size_t t = 0; t < types_.size(); ++t) groups[piece_colors(tbar, t)].push_back(t);
        std::vector<std::uint32_t> res(types_.size(), 0);
        for (const auto& [colors, wanted] : groups) {
            const Piece& pc = piece(colors);
            std::vector<Vertex> anchors;
            for (Vertex x : v) anchors.push_back(*pc.local(x));
            if (opt_.via_pullback) {
                for (auto t : wanted) res[t] = pulled_residue(pc, tbar, t, anchors);
                continue;
            }
            std::vector<char> in_group(types_.size(), 0);
            for (auto t : wanted) in_group[t] = 1;
            const auto& order = pc.rho->free_variables();
            std::vector<Vertex> arg(order.size());
            pc.index->classes(ancestor_closure(pc.forest.forest, anchors), [&](Vertex rep, std::uint64_t cnt, WitnessCase) {
                std::size_t t = type_of_[pc.members[rep]];
                if (!in_group[t] || cnt % b_ == 0) return;
                for (std::size_t i = 0; i < order.size(); ++i) {
                    if (order[i] == bound_) {
                        arg[i] = rep;
                    } else {
                        auto j = std::find(outer_.begin(), outer_.end(), order[i]) - outer_.begin();
                        arg[i] = anchors[static_cast<std::size_t>(j)];
                    }
                }
                if (pc.rho->eval(arg)) res[t] = static_cast<std::uint32_t>((res[t] + cnt % b_) % b_);
            });
        }
        return res;
    }

    std::uint32_t residue(const std::vector<Vertex>& v) const {
        std::uint64_t s = 0;
        for (auto r : residues_by_type(v)) s += r;
        return static_cast<std::uint32_t>(s % b_);
    }

    // The disjunction over r in P(a) of the conjunction over t' holds exactly
    // when the observed residue vector is one of the distributions, i.e. sums to a.
    bool zeta(const std::vector<Vertex>& v) const { return residue(v) == a_; }

    bool zeta(const Valuation& nu) const {
        std::vector<Vertex> t;
        for (const auto& x : outer_) {
            auto it = nu.find(x);
            if (it == nu.end()) throw UnboundVariable("unbound free variable '" + x + "'");
            t.push_back(it->second);
        }
        return zeta(t);
    }

    // Builds every piece some tuple of realized types can ask for.
    void build_all_pieces() const {
        if (types_.empty()) return;
        std::set<std::vector<Color>> keys;
        std::vector<std::size_t> tbar(outer_.size(), 0);
        while (true) {
            for (std::size_t t = 0; t < types_.size(); ++t) keys.insert(piece_colors(tbar, t));
            std::size_t i = 0;
            while (i < tbar.size() && ++tbar[i] == types_.size()) tbar[i++] = 0;
            if (i == tbar.size()) break;
        }
        std::vector<std::vector<Color>> todo(keys.begin(), keys.end());
        std::size_t workers = std::min(opt_.threads, todo.size());
        if (workers <= 1) {
            for (const auto& k : todo) piece(k);
            return;
        }
        std::atomic<std::size_t> next{0};
        std::vector<std::future<void>> jobs;
        for (std::size_t w = 0; w < workers; ++w)
            jobs.push_back(std::async(std::launch::async, [&] {
                for (std::size_t i; (i = next++) < todo.size();) piece(todo[i]);
            }));
        for (auto& j : jobs) j.get();
    }

    // M*: M+ plus, for every piece, its parent function and its path count
    // residues, namespaced by stage and piece key.
    GuidedStructure expanded() const {
        build_all_pieces();
        GuidedStructure out = plus_;
        std::lock_guard<std::mutex> lock(mu_);
        for (const auto& [colors, pc] : pieces_) {
            const std::string key = stage_ + "@" + pc->key();
            std::vector<Vertex> parent(plus_.size());
            std::iota(parent.begin(), parent.end(), Vertex{0});
            for (Vertex i = 0; i < pc->members.size(); ++i)
                parent[pc->members[i]] = pc->members[pc->forest.forest.parent[i]];
            out.add_function("pi" + key, std::move(parent));
            std::map<std::string, VertexSet> marks;
            for (Vertex i = 0; i < pc->members.size(); ++i)
                for (const auto& [node, e] : pc->index->paths_below(i))
                    marks["cnt" + key + "#" + std::to_string(node) + "#" + std::to_string(e.count % b_)].push_back(
                        pc->members[i]);
            for (auto& [name, set] : marks) out.add_mark(name, make_vertex_set(std::move(set)));
        }
        return out;
    }

private:
    std::unique_ptr<Piece> make_piece(const std::vector<Color>& colors) const {
        auto pc = std::make_unique<Piece>();
        pc->colors = colors;
        for (Vertex v = 0; v < plus_.size(); ++v)
            if (std::binary_search(colors.begin(), colors.end(), coloring_.color[v])) pc->members.push_back(v);
        pc->sub = restrict(plus_, pc->members);
        std::vector<Color> local_colors;
        for (Vertex v : pc->members) local_colors.push_back(coloring_.color[v]);
        auto f = forest_from_centered(pc->sub, local_colors);
        pc->forest = encode_IY(pc->sub, f);
        auto lab = label_by_marks(pc->forest.y, all_marks(pc->forest.y));
        auto types = compute_subtree_types(pc->forest.forest, lab.label);
        pc->index = std::make_unique<ForestIndex>(pc->forest.forest, types.type, outer_.size() + 1);
        pc->rho = std::make_unique<NaiveEvaluator>(pc->sub, rho_);
        return pc;
    }

    std::uint32_t pulled_residue(const Piece& pc, const std::vector<std::size_t>& tbar, std::size_t t,
                                 const std::vector<Vertex>& anchors) const {
        const ForestModElimination* elim = nullptr;
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto& slot = pulled_[{pc.colors, tbar, t}];
            if (!slot) {
                std::vector<Formula> conj;
                for (std::size_t i = 0; i < outer_.size(); ++i)
                    conj.push_back(f_mark(type_mark(tbar[i], stage_), var_term(outer_[i])));
                conj.push_back(f_mark(type_mark(t, stage_), var_term(bound_)));
                conj.push_back(rho_);
                auto sigma = pullback_IS(f_and(std::move(conj)), pc.forest);
                slot = std::make_unique<ForestModElimination>(pc.forest, sigma, bound_, 0, b_);
            }
            elim = slot.get();
        }
        std::vector<Vertex> arg;
        for (const auto& x : elim->free_variables()) {
            auto j = std::find(outer_.begin(), outer_.end(), x) - outer_.begin();
            arg.push_back(anchors[static_cast<std::size_t>(j)]);
        }
        return elim->residue(arg);
    }

    std::uint32_t a_, b_;
    Formula rho_;
    std::string bound_;
    std::string stage_;
    EliminationOptions opt_;
    std::vector<std::string> outer_;
    std::vector<TermTuple> tuples_;
    std::size_t p_ = 0;
    CenteredColoring coloring_;
    std::vector<ColorType> types_;
    std::vector<std::size_t> type_of_;
    GuidedStructure plus_;
    mutable std::mutex mu_;
    mutable std::map<std::vector<Color>, std::unique_ptr<Piece>> pieces_;
    using PulledKey = std::tuple<std::vector<Color>, std::vector<std::size_t>, std::size_t>;
    mutable std::map<PulledKey, std::unique_ptr<ForestModElimination>> pulled_;
};

inline std::unique_ptr<ModElimination> eliminate_one(const GuidedStructure& m, std::uint32_t a, std::uint32_t b,
                                                     const Formula& rho, const std::string& bound,
                                                     const EliminationOptions& opt = {}) {
    return std::make_unique<ModElimination>(m, a, b, rho, bound, "", opt);
}

// whole formulas ------------------------------------------------------------------------

inline bool has_plain_quantifier(const Formula& f) {
    if (f->op == Op::Exists || f->op == Op::Forall) return true;
    for (const auto& k : f->kids)
        if (has_plain_quantifier(k)) return true;
    return false;
}

inline bool has_mod_quantifier(const Formula& f) {
    if (f->op == Op::ModExists) return true;
    for (const auto& k : f->kids)
        if (has_mod_quantifier(k)) return true;
    return false;
}

// Boolean combinations of modulo quantifiers, innermost first. An inner
// quantifier with no free variable becomes a constant, with one free variable
// a mark on the cumulative structure; with more, the enclosing quantifier is
// summed directly over the domain.
class EliminationPipeline {
public:
    EliminationPipeline(const GuidedStructure& m, const Formula& phi, const EliminationOptions& opt = {})
        : m_(std::make_unique<GuidedStructure>(m)), opt_(opt), free_(free_vars(phi)) {
        root_ = compile(phi);
    }

    const std::vector<std::string>& free_variables() const { return free_; }
    const GuidedStructure& structure() const { return *m_; }
    std::size_t stage_count() const { return stages_.size(); }
    const ModElimination& stage(std::size_t i) const { return *stages_[i]; }
    bool direct_sum_used() const { return direct_; }

    bool eval(const Valuation& nu) const { return eval(root_, nu); }
    bool eval(const std::vector<Vertex>& tuple) const {
        if (tuple.size() != free_.size()) throw InputError("tuple size does not match the free variables");
        Valuation nu;
        for (std::size_t i = 0; i < tuple.size(); ++i) nu[free_[i]] = tuple[i];
        return eval(nu);
    }

    // Cumulative expansion: the structure with the inner verdict marks and every
    // stage's coloring, type, parent and residue data.
    GuidedStructure expanded() const {
        GuidedStructure out = *m_;
        for (const auto& st : stages_) {
            auto e = st->expanded();
            for (std::size_t k = 0; k < e.mark_count(); ++k)
                if (!out.has_mark(e.mark_name(k))) out.add_mark(e.mark_name(k), e.mark_set(k));
            for (std::size_t f = 0; f < e.function_count(); ++f)
                if (!out.function_index(e.function_name(f))) out.add_function(e.function_name(f), e.function(f));
        }
        return out;
    }

    std::string describe() const { return describe(root_); }

    // The evaluation tree, one node per compiled subformula.
    struct ZetaNode {
        std::string kind;
        std::string text;
        std::size_t stage = 0;  // for "stage"
        std::string bound;      // for "direct"
        std::uint32_t residue = 0, modulus = 1;
        std::vector<ZetaNode> kids;
    };
    ZetaNode zeta_tree() const { return zeta_tree(root_); }

private:
    enum class Kind { Leaf, Not, And, Or, Stage, Direct };
    struct CNode {
        Kind kind;
        Formula formula;  // leaf formula, or the original subformula
        std::vector<std::size_t> kids;
        std::size_t stage = 0;
        mutable std::shared_ptr<NaiveEvaluator> leaf;
    };

    std::string stage_name() const { return "s" + std::to_string(stages_.size()) + ":"; }

    std::size_t add(CNode n) {
        nodes_.push_back(std::move(n));
        return nodes_.size() - 1;
    }

    std::string text(const Formula& f) const { return print_formula(f, m_->signature().unary_functions); }

    // Replaces inner modulo quantifiers by constants or marks; nullopt when
    // one of them has two or more free variables.
    std::optional<Formula> flatten(const Formula& f) {
        if (f->op == Op::Exists || f->op == Op::Forall) throw UnsupportedFragment(text(f));
        if (f->op == Op::ModExists) {
            auto fv = free_vars(f);
            if (fv.size() >= 2) return std::nullopt;
            std::size_t id = compile(f);
            if (fv.empty()) return f_bool(eval(id, {}));
            VertexSet set;
            for (Vertex v = 0; v < m_->size(); ++v)
                if (eval(id, Valuation{{fv[0], v}})) set.push_back(v);
            std::string name = "s" + std::to_string(stages_.size()) + ":zeta" + std::to_string(zeta_marks_++);
            m_->add_mark(name, std::move(set));
            return f_mark(name, var_term(fv[0]));
        }
        if (f->kids.empty()) return f;
        Node n = *f;
        for (auto& k : n.kids) {
            auto g = flatten(k);
            if (!g) return std::nullopt;
            k = *g;
        }
        return make_node(std::move(n));
    }

    std::size_t compile(const Formula& f) {
        switch (f->op) {
            case Op::Exists:
            case Op::Forall: throw UnsupportedFragment(text(f));
            case Op::Not: {
                if (!has_mod_quantifier(f)) break;
                auto k = compile(f->kids[0]);
                return add({Kind::Not, f, {k}});
            }
            case Op::And:
            case Op::Or: {
                if (!has_mod_quantifier(f)) break;
                std::vector<std::size_t> ks;
                for (const auto& k : f->kids) ks.push_back(compile(k));
                return add({f->op == Op::And ? Kind::And : Kind::Or, f, ks});
            }
            case Op::ModExists: {
                auto body = flatten(f->kids[0]);
                if (!body) {
                    direct_ = true;
                    auto k = compile(f->kids[0]);
                    return add({Kind::Direct, f, {k}});
                }
                stages_.push_back(std::make_unique<ModElimination>(*m_, f->residue, f->modulus, *body, f->name,
                                                                   stage_name(), opt_));
                return add({Kind::Stage, f, {}, stages_.size() - 1});
            }
            default: break;
        }
        if (has_plain_quantifier(f)) throw UnsupportedFragment(text(f));
        return add({Kind::Leaf, f});
    }

    bool eval(std::size_t id, const Valuation& nu) const {
        const CNode& n = nodes_[id];
        switch (n.kind) {
            case Kind::Leaf: {
                std::shared_ptr<NaiveEvaluator> ev;
                {
                    std::lock_guard<std::mutex> lock(mu_);
                    if (!n.leaf) n.leaf = std::make_shared<NaiveEvaluator>(*m_, n.formula);
                    ev = n.leaf;
                }
                return ev->eval(nu);
            }
            case Kind::Not: return !eval(n.kids[0], nu);
            case Kind::And:
                for (auto k : n.kids)
                    if (!eval(k, nu)) return false;
                return true;
            case Kind::Or:
                for (auto k : n.kids)
                    if (eval(k, nu)) return true;
                return false;
            case Kind::Stage: return stages_[n.stage]->zeta(nu);
            case Kind::Direct: {
                Valuation inner = nu;
                std::uint64_t hits = 0;
                for (Vertex w = 0; w < m_->size(); ++w) {
                    inner[n.formula->name] = w;
                    hits += eval(n.kids[0], inner) ? 1 : 0;
                }
                return hits % n.formula->modulus == n.formula->residue;
            }
        }
        return false;
    }

    std::string describe(std::size_t id) const {
        const CNode& n = nodes_[id];
        switch (n.kind) {
            case Kind::Leaf: return text(n.formula);
            case Kind::Not: return "!" + describe(n.kids[0]);
            case Kind::And:
            case Kind::Or: {
                std::string s = "(";
                for (std::size_t i = 0; i < n.kids.size(); ++i)
                    s += (i ? (n.kind == Kind::And ? " & " : " | ") : "") + describe(n.kids[i]);
                return s + ")";
            }
            case Kind::Stage: {
                const auto& st = *stages_[n.stage];
                std::string args;
                for (std::size_t i = 0; i < st.free_variables().size(); ++i) args += (i ? "," : "") + st.free_variables()[i];
                return "zeta[" + st.stage() + "](" + args + ")";
            }
            case Kind::Direct:
                return "Emod[" + std::to_string(n.formula->residue) + "," + std::to_string(n.formula->modulus) + "] " +
                       n.formula->name + ". " + describe(n.kids[0]);
        }
        return {};
    }

    ZetaNode zeta_tree(std::size_t id) const {
        static const char* names[] = {"leaf", "not", "and", "or", "stage", "direct"};
        const CNode& n = nodes_[id];
        ZetaNode z{names[static_cast<int>(n.kind)], describe(id)};
        if (n.kind == Kind::Stage) z.stage = n.stage;
        if (n.kind == Kind::Stage || n.kind == Kind::Direct) {
            z.bound = n.formula->name;
            z.residue = n.formula->residue;
            z.modulus = n.formula->modulus;
        }
        for (auto k : n.kids) z.kids.push_back(zeta_tree(k));
        return z;
    }

    std::unique_ptr<GuidedStructure> m_;
    EliminationOptions opt_;
    std::vector<std::string> free_;
    std::vector<std::unique_ptr<ModElimination>> stages_;
    std::vector<CNode> nodes_;
    std::size_t root_ = 0;
    std::size_t zeta_marks_ = 0;
    bool direct_ = false;
    mutable std::mutex mu_;
};

inline std::unique_ptr<EliminationPipeline> eliminate_all(const GuidedStructure& m, const Formula& phi,
                                                          const EliminationOptions& opt = {}) {
    return std::make_unique<EliminationPipeline>(m, phi, opt);
}

// Model checking for arbitrary formulas: modulo-quantified parts go through the
// pipeline, plain quantifier layers are evaluated by iteration.
class PipelineEvaluator {
public:
    PipelineEvaluator(const GuidedStructure& m, Formula phi, const EliminationOptions& opt = {})
        : m_(m), phi_(std::move(phi)), opt_(opt) {}

    bool eval(const Valuation& nu) const { return eval(phi_, nu); }

    std::size_t stage_count() const {
        std::size_t s = 0;
        for (const auto& [node, p] : cache_) s += p->stage_count();
        return s;
    }
    std::size_t piece_count() const {
        std::size_t s = 0;
        for (const auto& [node, p] : cache_)
            for (std::size_t i = 0; i < p->stage_count(); ++i) s += p->stage(i).piece_count();
        return s;
    }
    // Marks added on top of the input structure by all stages.
    std::size_t expansion_marks() const {
        std::size_t s = 0;
        for (const auto& [node, p] : cache_) {
            s += p->structure().mark_count() - m_.mark_count();
            for (std::size_t i = 0; i < p->stage_count(); ++i)
                s += p->stage(i).plus().mark_count() - p->structure().mark_count();
        }
        return s;
    }

private:
    bool eval(const Formula& f, const Valuation& nu) const {
        if (!has_plain_quantifier(f)) {
            if (!has_mod_quantifier(f)) return eval_naive(m_, f, restrict_to(f, nu));
            auto it = cache_.find(f.get());
            if (it == cache_.end()) it = cache_.emplace(f.get(), eliminate_all(m_, f, opt_)).first;
            return it->second->eval(restrict_to(f, nu));
        }
        switch (f->op) {
            case Op::Not: return !eval(f->kids[0], nu);
            case Op::And:
                for (const auto& k : f->kids)
                    if (!eval(k, nu)) return false;
                return true;
            case Op::Or:
                for (const auto& k : f->kids)
                    if (eval(k, nu)) return true;
                return false;
            default: break;
        }
        Valuation inner = nu;
        std::uint64_t hits = 0;
        for (Vertex w = 0; w < m_.size(); ++w) {
            inner[f->name] = w;
            bool body = eval(f->kids[0], inner);
            if (f->op == Op::Exists && body) return true;
            if (f->op == Op::Forall && !body) return false;
            hits += body ? 1 : 0;
        }
        if (f->op == Op::Exists) return false;
        if (f->op == Op::Forall) return true;
        return hits % f->modulus == f->residue;
    }

    static Valuation restrict_to(const Formula& f, const Valuation& nu) {
        Valuation out;
        for (const auto& v : free_vars(f)) {
            auto it = nu.find(v);
            if (it == nu.end()) throw UnboundVariable("unbound free variable '" + v + "'");
            out[v] = it->second;
        }
        return out;
    }

    const GuidedStructure& m_;
    Formula phi_;
    EliminationOptions opt_;
    mutable std::map<const Node*, std::unique_ptr<EliminationPipeline>> cache_;
};

inline bool eval_pipeline(const GuidedStructure& m, const Formula& phi, const Valuation& nu,
                          const EliminationOptions& opt = {}) {
    for (const auto& [v, x] : nu)
        if (x >= m.size()) throw InputError("valuation of '" + v + "' outside the domain");
    return PipelineEvaluator(m, phi, opt).eval(nu);
}

struct CountResult {
    std::uint64_t count = 0;
    bool fallback = false;  // counted by the naive evaluator
};

inline CountResult count_definable(const GuidedStructure& m, const Formula& phi, const EliminationOptions& opt = {}) {
    auto fv = free_vars(phi);
    if (fv.size() != 1 || has_plain_quantifier(phi)) return {count_naive(m, phi), true};
    auto pipe = eliminate_all(m, phi, opt);
    CountResult r;
    for (Vertex v = 0; v < m.size(); ++v) r.count += pipe->eval(std::vector<Vertex>{v}) ? 1 : 0;
    return r;
}

}  // namespace fom
