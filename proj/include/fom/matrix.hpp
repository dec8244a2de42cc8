#pragma once

// Sparse matrices over prime fields, set-rank markings and an expression
// evaluator that keeps results as a sparse part plus a short sum of
// rank-one terms.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <future>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fom/structures.hpp"

namespace fom {

inline constexpr std::uint32_t kMaxPrime = 257;

inline bool is_prime(std::uint32_t p) {
    if (p < 2) return false;
    for (std::uint32_t q = 2; q * q <= p; ++q)
        if (p % q == 0) return false;
    return true;
}

inline void check_field(std::uint32_t p) {
    if (!is_prime(p) || p > kMaxPrime)
        throw InputError("field size must be a prime <= " + std::to_string(kMaxPrime) + ", got " + std::to_string(p));
}

namespace fp {

inline std::uint32_t add(std::uint32_t a, std::uint32_t b, std::uint32_t p) { return (a + b) % p; }
inline std::uint32_t sub(std::uint32_t a, std::uint32_t b, std::uint32_t p) { return (a + p - b) % p; }
inline std::uint32_t mul(std::uint32_t a, std::uint32_t b, std::uint32_t p) { return (a * b) % p; }

inline std::uint32_t inv(std::uint32_t a, std::uint32_t p) {
    std::uint32_t r = 1, e = p - 2;
    while (e) {
        if (e & 1) r = mul(r, a, p);
        a = mul(a, a, p);
        e >>= 1;
    }
    return r;
}

inline std::uint32_t reduce(std::int64_t c, std::uint32_t p) {
    auto m = c % static_cast<std::int64_t>(p);
    return static_cast<std::uint32_t>(m < 0 ? m + p : m);
}

}  // namespace fp

using DenseMatrix = std::vector<std::vector<std::uint32_t>>;

class SparseFieldMatrix {
public:
    using Row = std::map<std::size_t, std::uint32_t>;

    SparseFieldMatrix() = default;
    SparseFieldMatrix(std::uint32_t p, std::size_t n) : p_(p), rows_(n) { check_field(p); }

    static SparseFieldMatrix identity(std::uint32_t p, std::size_t n) {
        SparseFieldMatrix m(p, n);
        for (std::size_t i = 0; i < n; ++i) m.set(i, i, 1);
        return m;
    }

    std::uint32_t p() const noexcept { return p_; }
    std::size_t n() const noexcept { return rows_.size(); }

    std::uint32_t get(std::size_t i, std::size_t j) const {
        check(i, j);
        auto it = rows_[i].find(j);
        return it == rows_[i].end() ? 0 : it->second;
    }

    void set(std::size_t i, std::size_t j, std::uint32_t v) {
        check(i, j);
        v %= p_;
        if (v == 0)
            rows_[i].erase(j);
        else
            rows_[i][j] = v;
    }

    void add_to(std::size_t i, std::size_t j, std::uint32_t v) { set(i, j, fp::add(get(i, j), v % p_, p_)); }

    const Row& row(std::size_t i) const { return rows_.at(i); }

    std::size_t nnz() const {
        std::size_t s = 0;
        for (const auto& r : rows_) s += r.size();
        return s;
    }

    // Sorted nonzero values that occur.
    std::vector<std::uint32_t> domain() const {
        std::vector<char> seen(p_, 0);
        for (const auto& r : rows_)
            for (const auto& [j, v] : r) seen[v] = 1;
        std::vector<std::uint32_t> out;
        for (std::uint32_t d = 1; d < p_; ++d)
            if (seen[d]) out.push_back(d);
        return out;
    }

    SparseFieldMatrix transpose() const {
        SparseFieldMatrix t(p_, n());
        for (std::size_t i = 0; i < n(); ++i)
            for (const auto& [j, v] : rows_[i]) t.rows_[j][i] = v;
        return t;
    }

    DenseMatrix dense() const {
        DenseMatrix d(n(), std::vector<std::uint32_t>(n(), 0));
        for (std::size_t i = 0; i < n(); ++i)
            for (const auto& [j, v] : rows_[i]) d[i][j] = v;
        return d;
    }

    static SparseFieldMatrix from_dense(std::uint32_t p, const DenseMatrix& d) {
        SparseFieldMatrix m(p, d.size());
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (d[i].size() != d.size()) throw InputError("dense matrix is not square");
            for (std::size_t j = 0; j < d.size(); ++j) m.set(i, j, d[i][j]);
        }
        return m;
    }

    bool operator==(const SparseFieldMatrix&) const = default;

private:
    void check(std::size_t i, std::size_t j) const {
        if (i >= n() || j >= n()) throw InputError("matrix index out of range");
    }

    std::uint32_t p_ = 2;
    std::vector<Row> rows_;
};

// Undirected graph of positions (i,j), i != j, that are nonzero in any input.
inline Graph support_graph(const std::vector<const SparseFieldMatrix*>& ms, std::size_t n) {
    Graph g(n);
    for (const auto* m : ms)
        for (std::size_t i = 0; i < m->n(); ++i)
            for (const auto& [j, v] : m->row(i))
                if (i != j) g.add_edge(static_cast<Vertex>(i), static_cast<Vertex>(j));
    return g;
}

inline std::size_t degeneracy(const Graph& g) {
    std::size_t n = g.size(), best = 0;
    std::vector<std::size_t> deg(n);
    std::size_t maxd = 0;
    for (Vertex v = 0; v < n; ++v) maxd = std::max(maxd, deg[v] = g.neighbors(v).size());
    std::vector<std::vector<Vertex>> bucket(maxd + 1);
    for (Vertex v = 0; v < n; ++v) bucket[deg[v]].push_back(v);
    std::vector<char> gone(n, 0);
    std::size_t d = 0;
    for (std::size_t done = 0; done < n;) {
        d = std::min(d, maxd);
        while (bucket[d].empty()) ++d;
        Vertex v = bucket[d].back();
        bucket[d].pop_back();
        if (gone[v] || deg[v] != d) continue;
        gone[v] = 1;
        ++done;
        best = std::max(best, d);
        for (Vertex w : g.neighbors(v))
            if (!gone[w]) bucket[--deg[w]].push_back(w);
        if (d > 0) --d;
    }
    return best;
}

// Dense 0/1 matrix with bit-packed rows.
class BitMatrix {
public:
    BitMatrix() = default;
    BitMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), words_((cols + 63) / 64), bits_(rows * words_, 0) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t words() const noexcept { return words_; }

    bool get(std::size_t i, std::size_t j) const { return (bits_[i * words_ + j / 64] >> (j % 64)) & 1; }
    void set(std::size_t i, std::size_t j, bool b = true) {
        auto& w = bits_[i * words_ + j / 64];
        if (b)
            w |= std::uint64_t{1} << (j % 64);
        else
            w &= ~(std::uint64_t{1} << (j % 64));
    }

    std::vector<std::uint64_t> row(std::size_t i) const {
        return {bits_.begin() + static_cast<std::ptrdiff_t>(i * words_),
                bits_.begin() + static_cast<std::ptrdiff_t>((i + 1) * words_)};
    }

    bool operator==(const BitMatrix&) const = default;

private:
    std::size_t rows_ = 0, cols_ = 0, words_ = 0;
    std::vector<std::uint64_t> bits_;
};

inline BitMatrix slice(const SparseFieldMatrix& m, std::uint32_t d) {
    if (d % m.p() == 0) throw InputError("slice: d must be nonzero");
    d %= m.p();
    BitMatrix out(m.n(), m.n());
    for (std::size_t i = 0; i < m.n(); ++i)
        for (const auto& [j, v] : m.row(i))
            if (v == d) out.set(i, j);
    return out;
}

// Greedy row basis over F_2 in row order. combination[i] is the set of basis
// indices (bit k for basis row k) whose sum is row i.
struct F2RowBasis {
    std::vector<std::size_t> basis_rows;
    std::vector<std::uint64_t> combination;
    std::size_t rank() const { return basis_rows.size(); }
};

inline F2RowBasis f2_row_basis(const BitMatrix& a, std::size_t max_rank = 63) {
    struct Echelon {
        std::vector<std::uint64_t> bits;
        std::size_t pivot;
        std::uint64_t combo;
    };
    F2RowBasis out;
    out.combination.assign(a.rows(), 0);
    std::vector<Echelon> ech;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto v = a.row(i);
        std::uint64_t combo = 0;
        for (const auto& e : ech)
            if ((v[e.pivot / 64] >> (e.pivot % 64)) & 1) {
                for (std::size_t w = 0; w < v.size(); ++w) v[w] ^= e.bits[w];
                combo ^= e.combo;
            }
        std::size_t w = 0;
        while (w < v.size() && v[w] == 0) ++w;
        if (w == v.size()) {
            out.combination[i] = combo;
            continue;
        }
        std::size_t k = out.basis_rows.size();
        if (k >= max_rank) throw InputError("F2 rank exceeds " + std::to_string(max_rank));
        out.basis_rows.push_back(i);
        out.combination[i] = std::uint64_t{1} << k;
        std::size_t pivot = w * 64 + static_cast<std::size_t>(__builtin_ctzll(v[w]));
        ech.push_back({std::move(v), pivot, combo | (std::uint64_t{1} << k)});
    }
    return out;
}

inline std::size_t rank_f2(const BitMatrix& a) {
    std::vector<std::vector<std::uint64_t>> rows;
    for (std::size_t i = 0; i < a.rows(); ++i) rows.push_back(a.row(i));
    std::size_t rank = 0;
    for (std::size_t c = 0; c < a.cols() && rank < rows.size(); ++c) {
        std::size_t w = c / 64;
        std::uint64_t bit = std::uint64_t{1} << (c % 64);
        std::size_t piv = rank;
        while (piv < rows.size() && !(rows[piv][w] & bit)) ++piv;
        if (piv == rows.size()) continue;
        std::swap(rows[piv], rows[rank]);
        for (std::size_t r = rank + 1; r < rows.size(); ++r)
            if (rows[r][w] & bit)
                for (std::size_t x = w; x < rows[r].size(); ++x) rows[r][x] ^= rows[rank][x];
        ++rank;
    }
    return rank;
}

inline std::size_t rank_fp(DenseMatrix a, std::uint32_t p) {
    std::size_t rank = 0, cols = a.empty() ? 0 : a[0].size();
    for (std::size_t c = 0; c < cols && rank < a.size(); ++c) {
        std::size_t piv = rank;
        while (piv < a.size() && a[piv][c] % p == 0) ++piv;
        if (piv == a.size()) continue;
        std::swap(a[piv], a[rank]);
        auto iv = fp::inv(a[rank][c] % p, p);
        for (std::size_t r = rank + 1; r < a.size(); ++r) {
            auto f = fp::mul(a[r][c] % p, iv, p);
            if (f == 0) continue;
            for (std::size_t x = c; x < cols; ++x) a[r][x] = fp::sub(a[r][x] % p, fp::mul(f, a[rank][x] % p, p), p);
        }
        ++rank;
    }
    return rank;
}

inline std::size_t srank(const SparseFieldMatrix& m) {
    std::size_t s = 0;
    for (auto d : m.domain()) s += rank_f2(slice(m, d));
    return s;
}

// Marking with W and V marks for a matrix of bounded set-rank. Row i carries
// W_{d,l} for l = row_mask (nonzero masks only); column j carries V_{d,l}
// exactly when the parity of l & col_bits[j] is odd.
class SetRankMatrix {
public:
    struct Slice {
        std::uint32_t d = 0;
        std::size_t rank = 0;
        std::vector<std::uint64_t> row_mask;
        std::vector<std::uint64_t> col_bits;  // bit k: column entry of basis row k
    };

    SetRankMatrix() = default;

    std::uint32_t p() const noexcept { return p_; }
    std::size_t n() const noexcept { return n_; }
    std::size_t budget() const noexcept { return r_; }
    const std::vector<Slice>& slices() const noexcept { return slices_; }

    std::vector<std::uint32_t> domain() const {
        std::vector<std::uint32_t> out;
        for (const auto& s : slices_) out.push_back(s.d);
        return out;
    }

    bool W(std::uint32_t d, std::uint64_t ell, std::size_t i) const {
        const auto* s = find(d);
        return s && ell != 0 && s->row_mask.at(i) == ell;
    }

    bool V(std::uint32_t d, std::uint64_t ell, std::size_t j) const {
        const auto* s = find(d);
        return s && ell != 0 && (__builtin_popcountll(ell & s->col_bits.at(j)) & 1);
    }

    bool query_qd(std::uint32_t d, std::size_t i, std::size_t j) const {
        const auto* s = find(d);
        if (!s) return false;
        auto ell = s->row_mask.at(i);
        return ell != 0 && (__builtin_popcountll(ell & s->col_bits.at(j)) & 1);
    }

    std::uint32_t entry(std::size_t i, std::size_t j) const {
        for (const auto& s : slices_)
            if (query_qd(s.d, i, j)) return s.d;
        return 0;
    }

    SparseFieldMatrix materialize() const {
        SparseFieldMatrix m(p_, n_);
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j) m.set(i, j, entry(i, j));
        return m;
    }

    static std::string w_mark(std::uint32_t d, std::uint64_t ell) { return "W" + std::to_string(d) + "#" + std::to_string(ell); }
    static std::string v_mark(std::uint32_t d, std::uint64_t ell) { return "V" + std::to_string(d) + "#" + std::to_string(ell); }

    // The marked structure [n]*: every W_{d,l} and V_{d,l} for l nonempty.
    GuidedStructure marking(std::size_t max_slice_rank = 16) const {
        GuidedStructure m(n_);
        for (const auto& s : slices_) {
            if (s.rank > max_slice_rank) throw InputError("marking: slice rank too large to materialize");
            for (std::uint64_t ell = 1; ell < (std::uint64_t{1} << s.rank); ++ell) {
                VertexSet w, v;
                for (std::size_t i = 0; i < n_; ++i) {
                    if (s.row_mask[i] == ell) w.push_back(static_cast<Vertex>(i));
                    if (__builtin_popcountll(ell & s.col_bits[i]) & 1) v.push_back(static_cast<Vertex>(i));
                }
                m.add_mark(w_mark(s.d, ell), w);
                m.add_mark(v_mark(s.d, ell), v);
            }
        }
        return m;
    }

    friend SetRankMatrix build_marking(const SparseFieldMatrix& m, std::size_t r);

private:
    const Slice* find(std::uint32_t d) const {
        for (const auto& s : slices_)
            if (s.d == d) return &s;
        return nullptr;
    }

    std::uint32_t p_ = 2;
    std::size_t n_ = 0, r_ = 0;
    std::vector<Slice> slices_;
};

inline SetRankMatrix build_marking(const SparseFieldMatrix& m, std::size_t r) {
    if (r > 63) throw InputError("build_marking: budget above 63 is not supported");
    SetRankMatrix out;
    out.p_ = m.p();
    out.n_ = m.n();
    out.r_ = r;
    std::size_t total = 0;
    for (auto d : m.domain()) {
        auto a = slice(m, d);
        auto basis = f2_row_basis(a, 63);
        total += basis.rank();
        if (total > r) throw InputError("build_marking: set-rank exceeds the budget " + std::to_string(r));
        SetRankMatrix::Slice s;
        s.d = d;
        s.rank = basis.rank();
        s.row_mask = std::move(basis.combination);
        s.col_bits.assign(m.n(), 0);
        for (std::size_t k = 0; k < basis.rank(); ++k)
            for (const auto& [j, v] : m.row(basis.basis_rows[k]))
                if (v == d) s.col_bits[j] |= std::uint64_t{1} << k;
        out.slices_.push_back(std::move(s));
    }
    return out;
}

// Expressions ---------------------------------------------------------------

enum class MatOp { Input, Const, Identity, AllOnes, Add, Mul, Transpose, Hadamard, Scalar };

struct MatrixNode;
using MatrixExpr = std::shared_ptr<const MatrixNode>;

struct MatrixNode {
    MatOp op;
    std::string name;
    std::shared_ptr<const SetRankMatrix> constant;
    std::int64_t scalar = 0;
    std::vector<MatrixExpr> args;
};

inline MatrixExpr m_input(std::string name) { return std::make_shared<MatrixNode>(MatrixNode{MatOp::Input, std::move(name), nullptr, 0, {}}); }
inline MatrixExpr m_const(std::shared_ptr<const SetRankMatrix> c, std::string name = "K") {
    return std::make_shared<MatrixNode>(MatrixNode{MatOp::Const, std::move(name), std::move(c), 0, {}});
}
inline MatrixExpr m_identity() { return std::make_shared<MatrixNode>(MatrixNode{MatOp::Identity, "I", nullptr, 0, {}}); }
inline MatrixExpr m_ones() { return std::make_shared<MatrixNode>(MatrixNode{MatOp::AllOnes, "J", nullptr, 0, {}}); }
inline MatrixExpr m_add(MatrixExpr a, MatrixExpr b) { return std::make_shared<MatrixNode>(MatrixNode{MatOp::Add, "", nullptr, 0, {std::move(a), std::move(b)}}); }
inline MatrixExpr m_mul(MatrixExpr a, MatrixExpr b) { return std::make_shared<MatrixNode>(MatrixNode{MatOp::Mul, "", nullptr, 0, {std::move(a), std::move(b)}}); }
inline MatrixExpr m_hadamard(MatrixExpr a, MatrixExpr b) {
    return std::make_shared<MatrixNode>(MatrixNode{MatOp::Hadamard, "", nullptr, 0, {std::move(a), std::move(b)}});
}
inline MatrixExpr m_transpose(MatrixExpr a) { return std::make_shared<MatrixNode>(MatrixNode{MatOp::Transpose, "", nullptr, 0, {std::move(a)}}); }
inline MatrixExpr m_scalar(std::int64_t c, MatrixExpr a) { return std::make_shared<MatrixNode>(MatrixNode{MatOp::Scalar, "", nullptr, c, {std::move(a)}}); }

inline std::string print_expr(const MatrixExpr& e) {
    switch (e->op) {
        case MatOp::Input:
        case MatOp::Const:
        case MatOp::Identity:
        case MatOp::AllOnes: return e->name;
        case MatOp::Add: return "(" + print_expr(e->args[0]) + " + " + print_expr(e->args[1]) + ")";
        case MatOp::Mul: return "(" + print_expr(e->args[0]) + " * " + print_expr(e->args[1]) + ")";
        case MatOp::Hadamard: return "(" + print_expr(e->args[0]) + " o " + print_expr(e->args[1]) + ")";
        case MatOp::Transpose: return "t(" + print_expr(e->args[0]) + ")";
        case MatOp::Scalar: return "(" + std::to_string(e->scalar) + " * " + print_expr(e->args[0]) + ")";
    }
    return "";
}

namespace detail {

class ExprParser {
public:
    explicit ExprParser(std::string s) : s_(std::move(s)) {}

    MatrixExpr run() {
        auto e = expr();
        skip();
        if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
        return as_matrix(e);
    }

private:
    // A bare number is kept apart until it meets a matrix.
    struct Item {
        MatrixExpr m;
        std::optional<std::int64_t> num;
    };

    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError(1, "expression, column " + std::to_string(pos_ + 1) + ": " + what);
    }

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool eat(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    std::string ident() {
        skip();
        std::size_t b = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
        return s_.substr(b, pos_ - b);
    }

    bool peek_word(const std::string& w) {
        skip();
        if (s_.compare(pos_, w.size(), w) != 0) return false;
        std::size_t end = pos_ + w.size();
        return end == s_.size() || !(std::isalnum(static_cast<unsigned char>(s_[end])) || s_[end] == '_');
    }

    static MatrixExpr as_matrix(const Item& it) { return it.num ? m_scalar(*it.num, m_identity()) : it.m; }

    Item expr() {
        Item a = term();
        while (true) {
            if (eat('+')) {
                a = combine_add(a, term(), 1);
            } else if (eat('-')) {
                a = combine_add(a, term(), -1);
            } else {
                return a;
            }
        }
    }

    static Item combine_add(const Item& a, const Item& b, std::int64_t sign) {
        if (a.num && b.num) return {nullptr, *a.num + sign * *b.num};
        MatrixExpr rhs = sign < 0 ? m_scalar(-1, as_matrix(b)) : as_matrix(b);
        return {m_add(as_matrix(a), rhs), std::nullopt};
    }

    Item term() {
        Item a = unary();
        while (true) {
            if (eat('*')) {
                Item b = unary();
                if (a.num && b.num)
                    a = {nullptr, *a.num * *b.num};
                else if (a.num)
                    a = {m_scalar(*a.num, b.m), std::nullopt};
                else if (b.num)
                    a = {m_scalar(*b.num, a.m), std::nullopt};
                else
                    a = {m_mul(a.m, b.m), std::nullopt};
            } else if (peek_word("o")) {
                pos_ += 1;
                Item b = unary();
                a = {m_hadamard(as_matrix(a), as_matrix(b)), std::nullopt};
            } else {
                return a;
            }
        }
    }

    Item unary() {
        if (eat('-')) {
            Item a = unary();
            if (a.num) return {nullptr, -*a.num};
            return {m_scalar(-1, a.m), std::nullopt};
        }
        return atom();
    }

    Item atom() {
        skip();
        if (pos_ == s_.size()) fail("unexpected end");
        char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t b = pos_;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            return {nullptr, std::stoll(s_.substr(b, pos_ - b))};
        }
        if (eat('(')) {
            Item e = expr();
            if (!eat(')')) fail("expected ')'");
            return e;
        }
        std::string id = ident();
        if (id.empty()) fail("unexpected '" + std::string(1, c) + "'");
        if (id == "t") {
            if (!eat('(')) fail("expected '(' after t");
            Item e = expr();
            if (!eat(')')) fail("expected ')'");
            return {m_transpose(as_matrix(e)), std::nullopt};
        }
        if (id == "o") fail("'o' is the Hadamard operator");
        if (id == "I") return {m_identity(), std::nullopt};
        if (id == "J") return {m_ones(), std::nullopt};
        return {m_input(id), std::nullopt};
    }

    std::string s_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline MatrixExpr parse_expr(const std::string& s) { return detail::ExprParser(s).run(); }

// Value S + sum_k u_k v_k^T with S sparse and the u_k, v_k dense vectors.
class MatrixValue {
public:
    struct Term {
        std::vector<std::uint32_t> u, v;
    };

    MatrixValue() = default;
    explicit MatrixValue(SparseFieldMatrix s) : sparse_(std::move(s)) {}
    MatrixValue(SparseFieldMatrix s, std::vector<Term> terms) : sparse_(std::move(s)), terms_(std::move(terms)) {}

    std::uint32_t p() const { return sparse_.p(); }
    std::size_t n() const { return sparse_.n(); }
    const SparseFieldMatrix& sparse() const noexcept { return sparse_; }
    const std::vector<Term>& terms() const noexcept { return terms_; }

    std::uint32_t entry(std::size_t i, std::size_t j) const {
        std::uint32_t x = sparse_.get(i, j), q = p();
        for (const auto& t : terms_) x = fp::add(x, fp::mul(t.u[i], t.v[j], q), q);
        return x;
    }

    SparseFieldMatrix materialize() const {
        if (terms_.empty()) return sparse_;
        SparseFieldMatrix out(p(), n());
        for (std::size_t i = 0; i < n(); ++i)
            for (std::size_t j = 0; j < n(); ++j) out.set(i, j, entry(i, j));
        return out;
    }

    // this * x for a dense vector x.
    std::vector<std::uint32_t> apply(const std::vector<std::uint32_t>& x) const {
        std::uint32_t q = p();
        std::vector<std::uint32_t> y(n(), 0);
        for (std::size_t i = 0; i < n(); ++i)
            for (const auto& [j, a] : sparse_.row(i)) y[i] = fp::add(y[i], fp::mul(a, x[j], q), q);
        for (const auto& t : terms_) {
            std::uint32_t dot = 0;
            for (std::size_t j = 0; j < n(); ++j) dot = fp::add(dot, fp::mul(t.v[j], x[j], q), q);
            if (dot == 0) continue;
            for (std::size_t i = 0; i < n(); ++i) y[i] = fp::add(y[i], fp::mul(t.u[i], dot, q), q);
        }
        return y;
    }

    // Rewrites the rank-one terms so that the left vectors are independent,
    // then the right ones.
    void compress() {
        reduce_left();
        for (auto& t : terms_) std::swap(t.u, t.v);
        reduce_left();
        for (auto& t : terms_) std::swap(t.u, t.v);
    }

private:
    void reduce_left() {
        std::uint32_t q = p();
        struct Echelon {
            std::vector<std::uint32_t> w;
            std::size_t pivot;
            std::uint32_t inv_pivot;
            std::vector<std::uint32_t> right;
        };
        std::vector<Echelon> ech;
        for (auto& t : terms_) {
            auto v = t.u;
            std::vector<std::uint32_t> coef(ech.size(), 0);
            for (std::size_t e = 0; e < ech.size(); ++e) {
                auto c = fp::mul(v[ech[e].pivot], ech[e].inv_pivot, q);
                if (c == 0) continue;
                coef[e] = c;
                for (std::size_t i = 0; i < v.size(); ++i) v[i] = fp::sub(v[i], fp::mul(c, ech[e].w[i], q), q);
            }
            for (std::size_t e = 0; e < ech.size(); ++e)
                if (coef[e])
                    for (std::size_t j = 0; j < n(); ++j) ech[e].right[j] = fp::add(ech[e].right[j], fp::mul(coef[e], t.v[j], q), q);
            auto nz = std::find_if(v.begin(), v.end(), [](std::uint32_t x) { return x != 0; });
            if (nz == v.end()) continue;
            std::size_t piv = static_cast<std::size_t>(nz - v.begin());
            ech.push_back({std::move(v), piv, fp::inv(*nz, q), t.v});
        }
        std::vector<Term> out;
        for (auto& e : ech)
            if (std::any_of(e.right.begin(), e.right.end(), [](std::uint32_t x) { return x != 0; }))
                out.push_back({std::move(e.w), std::move(e.right)});
        terms_ = std::move(out);
    }

    SparseFieldMatrix sparse_;
    std::vector<Term> terms_;
};

namespace matrix_ops {

inline SparseFieldMatrix sparse_add(const SparseFieldMatrix& a, const SparseFieldMatrix& b) {
    SparseFieldMatrix out = a;
    for (std::size_t i = 0; i < b.n(); ++i)
        for (const auto& [j, v] : b.row(i)) out.add_to(i, j, v);
    return out;
}

inline SparseFieldMatrix sparse_mul(const SparseFieldMatrix& a, const SparseFieldMatrix& b) {
    SparseFieldMatrix out(a.p(), a.n());
    std::uint32_t q = a.p();
    for (std::size_t i = 0; i < a.n(); ++i)
        for (const auto& [k, x] : a.row(i))
            for (const auto& [j, y] : b.row(k)) out.add_to(i, j, fp::mul(x, y, q));
    return out;
}

inline std::vector<std::uint32_t> transpose_apply(const SparseFieldMatrix& s, const std::vector<std::uint32_t>& x) {
    std::uint32_t q = s.p();
    std::vector<std::uint32_t> y(s.n(), 0);
    for (std::size_t i = 0; i < s.n(); ++i) {
        if (x[i] == 0) continue;
        for (const auto& [j, a] : s.row(i)) y[j] = fp::add(y[j], fp::mul(a, x[i], q), q);
    }
    return y;
}

inline MatrixValue add(const MatrixValue& a, const MatrixValue& b) {
    auto terms = a.terms();
    terms.insert(terms.end(), b.terms().begin(), b.terms().end());
    MatrixValue out(sparse_add(a.sparse(), b.sparse()), std::move(terms));
    if (out.terms().size() > 1) out.compress();
    return out;
}

inline MatrixValue scale(std::uint32_t c, const MatrixValue& a) {
    std::uint32_t q = a.p();
    if (c == 0) return MatrixValue(SparseFieldMatrix(q, a.n()));
    SparseFieldMatrix s(q, a.n());
    for (std::size_t i = 0; i < a.n(); ++i)
        for (const auto& [j, v] : a.sparse().row(i)) s.set(i, j, fp::mul(c, v, q));
    auto terms = a.terms();
    for (auto& t : terms)
        for (auto& x : t.u) x = fp::mul(c, x, q);
    return MatrixValue(std::move(s), std::move(terms));
}

inline MatrixValue transpose(const MatrixValue& a) {
    auto terms = a.terms();
    for (auto& t : terms) std::swap(t.u, t.v);
    return MatrixValue(a.sparse().transpose(), std::move(terms));
}

// (S1 + sum u1 v1^T)(S2 + sum u2 v2^T): S1 S2 by support traversal, then
// terms (X u2, v2) and (u1, S2^T v1).
inline MatrixValue mul(const MatrixValue& a, const MatrixValue& b) {
    std::vector<MatrixValue::Term> terms;
    for (const auto& t : b.terms()) terms.push_back({a.apply(t.u), t.v});
    for (const auto& t : a.terms()) terms.push_back({t.u, transpose_apply(b.sparse(), t.v)});
    MatrixValue out(sparse_mul(a.sparse(), b.sparse()), std::move(terms));
    if (!out.terms().empty()) out.compress();
    return out;
}

inline MatrixValue hadamard(const MatrixValue& a, const MatrixValue& b) {
    std::uint32_t q = a.p();
    SparseFieldMatrix s(q, a.n());
    // S1 o (S2 + L2) and L1 o S2 live on the sparse supports.
    for (std::size_t i = 0; i < a.n(); ++i) {
        for (const auto& [j, x] : a.sparse().row(i)) s.add_to(i, j, fp::mul(x, b.entry(i, j), q));
        if (a.terms().empty()) continue;
        for (const auto& [j, y] : b.sparse().row(i)) {
            std::uint32_t l = 0;
            for (const auto& t : a.terms()) l = fp::add(l, fp::mul(t.u[i], t.v[j], q), q);
            s.add_to(i, j, fp::mul(l, y, q));
        }
    }
    std::vector<MatrixValue::Term> terms;
    for (const auto& ta : a.terms())
        for (const auto& tb : b.terms()) {
            MatrixValue::Term t{std::vector<std::uint32_t>(a.n()), std::vector<std::uint32_t>(a.n())};
            for (std::size_t i = 0; i < a.n(); ++i) {
                t.u[i] = fp::mul(ta.u[i], tb.u[i], q);
                t.v[i] = fp::mul(ta.v[i], tb.v[i], q);
            }
            terms.push_back(std::move(t));
        }
    MatrixValue out(std::move(s), std::move(terms));
    if (out.terms().size() > 1) out.compress();
    return out;
}

inline MatrixValue from_set_rank(const SetRankMatrix& c) {
    std::vector<MatrixValue::Term> terms;
    for (const auto& s : c.slices()) {
        std::map<std::uint64_t, std::vector<std::uint32_t>> rows;
        for (std::size_t i = 0; i < c.n(); ++i) {
            if (s.row_mask[i] == 0) continue;
            auto& u = rows[s.row_mask[i]];
            if (u.empty()) u.assign(c.n(), 0);
            u[i] = s.d;
        }
        for (auto& [ell, u] : rows) {
            std::vector<std::uint32_t> v(c.n(), 0);
            for (std::size_t j = 0; j < c.n(); ++j) v[j] = c.V(s.d, ell, j) ? 1 : 0;
            terms.push_back({std::move(u), std::move(v)});
        }
    }
    MatrixValue out(SparseFieldMatrix(c.p(), c.n()), std::move(terms));
    if (out.terms().size() > 1) out.compress();
    return out;
}

}  // namespace matrix_ops

struct ExprInputs {
    std::map<std::string, SparseFieldMatrix> sparse;
    std::map<std::string, SetRankMatrix> constants;
    std::uint32_t p = 0;  // used when no named input fixes the field
    std::size_t n = 0;
};

struct ExprOptions {
    bool parallel = false;
    std::size_t degeneracy_warning = 12;
};

struct ExprResult {
    MatrixValue value;
    std::vector<std::string> warnings;

    std::uint32_t entry(std::size_t i, std::size_t j) const { return value.entry(i, j); }
    SparseFieldMatrix materialize() const { return value.materialize(); }
};

namespace detail {

class ExprEvaluator {
public:
    ExprEvaluator(const ExprInputs& in, std::uint32_t p, std::size_t n, bool parallel)
        : in_(in), p_(p), n_(n), parallel_(parallel) {}

    MatrixValue eval(const MatrixExpr& e, int depth = 0) const {
        switch (e->op) {
            case MatOp::Input: {
                if (auto it = in_.sparse.find(e->name); it != in_.sparse.end()) return MatrixValue(it->second);
                if (auto it = in_.constants.find(e->name); it != in_.constants.end()) return matrix_ops::from_set_rank(it->second);
                throw InputError("expression: unknown matrix '" + e->name + "'");
            }
            case MatOp::Const: {
                check(e->constant->p(), e->constant->n());
                return matrix_ops::from_set_rank(*e->constant);
            }
            case MatOp::Identity: return MatrixValue(SparseFieldMatrix::identity(p_, n_));
            case MatOp::AllOnes:
                return MatrixValue(SparseFieldMatrix(p_, n_), {{std::vector<std::uint32_t>(n_, 1), std::vector<std::uint32_t>(n_, 1)}});
            case MatOp::Transpose: return matrix_ops::transpose(eval(e->args[0], depth + 1));
            case MatOp::Scalar: return matrix_ops::scale(fp::reduce(e->scalar, p_), eval(e->args[0], depth + 1));
            case MatOp::Add:
            case MatOp::Mul:
            case MatOp::Hadamard: {
                auto [a, b] = both(e, depth);
                if (e->op == MatOp::Add) return matrix_ops::add(a, b);
                if (e->op == MatOp::Mul) return matrix_ops::mul(a, b);
                return matrix_ops::hadamard(a, b);
            }
        }
        throw InputError("expression: bad node");
    }

private:
    std::pair<MatrixValue, MatrixValue> both(const MatrixExpr& e, int depth) const {
        if (parallel_ && depth < 3) {
            auto left = std::async(std::launch::async, [&] { return eval(e->args[0], depth + 1); });
            auto right = eval(e->args[1], depth + 1);
            return {left.get(), std::move(right)};
        }
        return {eval(e->args[0], depth + 1), eval(e->args[1], depth + 1)};
    }

    void check(std::uint32_t p, std::size_t n) const {
        if (p != p_) throw InputError("field mismatch");
        if (n != n_) throw InputError("dimension mismatch");
    }

    const ExprInputs& in_;
    std::uint32_t p_;
    std::size_t n_;
    bool parallel_;
};

inline void collect_consts(const MatrixExpr& e, std::vector<const SetRankMatrix*>& out) {
    if (e->op == MatOp::Const) out.push_back(e->constant.get());
    for (const auto& a : e->args) collect_consts(a, out);
}

}  // namespace detail

inline ExprResult eval_expr(const MatrixExpr& expr, const ExprInputs& in, const ExprOptions& opt = {}) {
    std::optional<std::uint32_t> p;
    std::optional<std::size_t> n;
    auto fix = [&](std::uint32_t q, std::size_t m) {
        if (p && *p != q) throw InputError("field mismatch: F_" + std::to_string(*p) + " vs F_" + std::to_string(q));
        if (n && *n != m) throw InputError("dimension mismatch: " + std::to_string(*n) + " vs " + std::to_string(m));
        p = q;
        n = m;
    };
    for (const auto& [name, m] : in.sparse) fix(m.p(), m.n());
    for (const auto& [name, c] : in.constants) fix(c.p(), c.n());
    std::vector<const SetRankMatrix*> consts;
    detail::collect_consts(expr, consts);
    for (const auto* c : consts) fix(c->p(), c->n());
    if (!p) {
        if (in.p == 0) throw InputError("expression: field and dimension are not determined");
        check_field(in.p);
        fix(in.p, in.n);
    } else if (in.p != 0) {
        fix(in.p, in.n ? in.n : *n);
    }

    ExprResult out;
    std::vector<const SparseFieldMatrix*> ms;
    for (const auto& [name, m] : in.sparse) ms.push_back(&m);
    if (!ms.empty()) {
        auto d = degeneracy(support_graph(ms, *n));
        if (d > opt.degeneracy_warning)
            out.warnings.push_back("support degeneracy " + std::to_string(d) + " exceeds " + std::to_string(opt.degeneracy_warning));
    }
    out.value = detail::ExprEvaluator(in, *p, *n, opt.parallel).eval(expr);
    return out;
}

// Matrix files: "p <prime>", "n <dim>", then "<i> <j> <val>" lines.
inline SparseFieldMatrix parse_matrix(std::istream& in) {
    std::optional<std::uint32_t> p;
    std::optional<std::size_t> n;
    std::optional<SparseFieldMatrix> m;
    std::string line;
    std::size_t lineno = 0;
    auto fail = [&](const std::string& what) -> ParseError { return ParseError(lineno, "matrix: " + what); };
    auto number = [&](const std::string& tok) -> std::uint64_t {
        if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
            throw fail("expected a non-negative integer, got '" + tok + "'");
        return std::stoull(tok);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        auto tok = detail::split_ws(line);
        if (tok.empty()) continue;
        if (tok[0] == "p" || tok[0] == "n") {
            if (tok.size() != 2) throw fail("expected '" + tok[0] + " <value>'");
            if (m) throw fail("header after entries");
            if (tok[0] == "p") {
                p = static_cast<std::uint32_t>(number(tok[1]));
                try {
                    check_field(*p);
                } catch (const InputError& e) {
                    throw fail(e.what());
                }
            } else {
                n = number(tok[1]);
            }
            continue;
        }
        if (!p || !n) throw fail("entries before the 'p' and 'n' header");
        if (!m) m.emplace(*p, *n);
        if (tok.size() != 3) throw fail("expected '<i> <j> <val>'");
        auto i = number(tok[0]), j = number(tok[1]), v = number(tok[2]);
        if (i >= *n || j >= *n) throw fail("index out of range");
        if (v >= *p) throw fail("value not in F_" + std::to_string(*p));
        if (m->get(i, j) != 0) throw fail("duplicate entry");
        m->set(i, j, static_cast<std::uint32_t>(v));
    }
    if (!p || !n) throw ParseError(lineno, "matrix: missing 'p' or 'n' header");
    if (!m) m.emplace(*p, *n);
    return *m;
}

inline SparseFieldMatrix parse_matrix(const std::string& text) {
    std::istringstream in(text);
    return parse_matrix(in);
}

inline std::string print_matrix(const SparseFieldMatrix& m) {
    std::ostringstream out;
    out << "p " << m.p() << "\nn " << m.n() << "\n";
    for (std::size_t i = 0; i < m.n(); ++i)
        for (const auto& [j, v] : m.row(i)) out << i << " " << j << " " << v << "\n";
    return out.str();
}

}  // namespace fom
