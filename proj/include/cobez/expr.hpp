#pragma once

#include <charconv>
#include <cstdint>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cobez/xnum.hpp"

namespace cobez::expr {

using xnum::LogComplex;

class parse_error : public std::runtime_error {
public:
    parse_error(const std::string& msg, std::size_t offset)
        : std::runtime_error(msg + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

// Only entire primitives: no division, no log, integer powers >= 0.
enum class NodeKind { Lit, Var, BoundVar, Add, Sub, Neg, Mul, Pow, Exp, Sin, Cos, Sum, Prod };

struct Node;
using ExprAst = std::shared_ptr<const Node>;

struct Node {
    NodeKind kind;
    double lit_re = 0.0, lit_im = 0.0;   // Lit
    int var_index = 0;                   // Var (0-based)
    std::string name;                    // BoundVar / Sum / Prod index name
    std::int64_t pow_exp = 0;            // Pow
    std::int64_t lo = 0, hi = 0;         // Sum / Prod bounds (inclusive)
    ExprAst a, b;                        // children (b: Sum/Prod body unused, a = body)
};

namespace detail {

inline ExprAst mk(Node n) { return std::make_shared<const Node>(std::move(n)); }

struct Lexer {
    std::string_view s;
    std::size_t pos = 0;

    void skip_ws() {
        while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t' || s[pos] == '\n' || s[pos] == '\r')) ++pos;
    }
    bool eof() {
        skip_ws();
        return pos >= s.size();
    }
    char peek() {
        skip_ws();
        return pos < s.size() ? s[pos] : '\0';
    }
    bool accept(char c) {
        if (peek() == c) {
            ++pos;
            return true;
        }
        return false;
    }
    void expect(char c, const char* what) {
        if (!accept(c)) throw parse_error(std::string("expected '") + c + "' " + what, pos);
    }
};

struct Parser {
    Lexer lex;
    int n_vars;
    std::vector<std::string> bound;

    ExprAst parse_expr() {
        ExprAst lhs = parse_term();
        for (;;) {
            if (lex.accept('+')) {
                ExprAst rhs = parse_term();
                lhs = mk({.kind = NodeKind::Add, .a = lhs, .b = rhs});
            } else if (lex.accept('-')) {
                ExprAst rhs = parse_term();
                lhs = mk({.kind = NodeKind::Sub, .a = lhs, .b = rhs});
            } else {
                return lhs;
            }
        }
    }

    ExprAst parse_term() {
        ExprAst lhs = parse_factor();
        for (;;) {
            if (lex.accept('*')) {
                ExprAst rhs = parse_factor();
                lhs = mk({.kind = NodeKind::Mul, .a = lhs, .b = rhs});
            } else if (lex.peek() == '/') {
                throw parse_error("non-entire operation", lex.pos);
            } else {
                return lhs;
            }
        }
    }

    ExprAst parse_factor() {
        if (lex.accept('-')) {
            ExprAst inner = parse_factor();
            return mk({.kind = NodeKind::Neg, .a = inner});
        }
        return parse_power();
    }

    ExprAst parse_power() {
        ExprAst base = parse_atom();
        if (lex.accept('^')) {
            std::size_t at = lex.pos;
            if (lex.peek() == '-') throw parse_error("non-entire operation (negative power)", lex.pos);
            if (std::isalpha(static_cast<unsigned char>(lex.peek())) || lex.peek() == '_') {
                // Exponent may be a sum/prod index variable (integer-valued).
                std::string id = parse_ident();
                for (auto it = bound.rbegin(); it != bound.rend(); ++it)
                    if (*it == id)
                        return mk({.kind = NodeKind::Pow,
                                   .a = base,
                                   .b = mk({.kind = NodeKind::BoundVar, .name = id})});
                throw parse_error("power exponent must be an integer or index variable", at);
            }
            std::int64_t e = parse_int("power exponent", at);
            return mk({.kind = NodeKind::Pow, .pow_exp = e, .a = base});
        }
        return base;
    }

    std::int64_t parse_int(const char* what, std::size_t at) {
        lex.skip_ws();
        std::size_t start = lex.pos;
        while (lex.pos < lex.s.size() && std::isdigit(static_cast<unsigned char>(lex.s[lex.pos]))) ++lex.pos;
        if (lex.pos == start) throw parse_error(std::string("expected integer ") + what, at);
        std::int64_t v = 0;
        auto res = std::from_chars(lex.s.data() + start, lex.s.data() + lex.pos, v);
        if (res.ec != std::errc()) throw parse_error(std::string("bad integer ") + what, start);
        return v;
    }

    std::int64_t parse_signed_int(const char* what) {
        lex.skip_ws();
        std::size_t at = lex.pos;
        bool negd = lex.accept('-');
        std::int64_t v = parse_int(what, at);
        return negd ? -v : v;
    }

    ExprAst parse_atom() {
        lex.skip_ws();
        std::size_t at = lex.pos;
        char c = lex.peek();
        if (c == '(') {
            lex.expect('(', "");
            ExprAst inner = parse_expr();
            lex.expect(')', "to close group");
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::string id = parse_ident();
            if (id == "i") return mk({.kind = NodeKind::Lit, .lit_re = 0.0, .lit_im = 1.0});
            if (id == "exp" || id == "sin" || id == "cos") {
                lex.expect('(', "after function name");
                ExprAst arg = parse_expr();
                lex.expect(')', "to close call");
                NodeKind k = id == "exp" ? NodeKind::Exp : (id == "sin" ? NodeKind::Sin : NodeKind::Cos);
                return mk({.kind = k, .a = arg});
            }
            if (id == "sum" || id == "prod") {
                lex.expect('(', "after sum/prod");
                std::size_t name_at = lex.pos;
                std::string idx = parse_ident();
                if (idx.empty()) throw parse_error("expected index name", name_at);
                lex.expect(',', "after index name");
                std::int64_t lo = parse_signed_int("lower bound");
                lex.expect(',', "after lower bound");
                std::int64_t hi = parse_signed_int("upper bound");
                lex.expect(',', "after upper bound");
                bound.push_back(idx);
                ExprAst body = parse_expr();
                bound.pop_back();
                lex.expect(')', "to close sum/prod");
                return mk({.kind = id == "sum" ? NodeKind::Sum : NodeKind::Prod,
                           .name = idx,
                           .lo = lo,
                           .hi = hi,
                           .a = body});
            }
            // zK variables
            if (id.size() >= 2 && id[0] == 'z' && std::isdigit(static_cast<unsigned char>(id[1]))) {
                bool all_digits = true;
                for (std::size_t k = 1; k < id.size(); ++k)
                    if (!std::isdigit(static_cast<unsigned char>(id[k]))) all_digits = false;
                if (all_digits) {
                    int k = std::atoi(id.c_str() + 1);
                    if (k < 1 || k > n_vars)
                        throw parse_error("variable index out of range: " + id, at);
                    return mk({.kind = NodeKind::Var, .var_index = k - 1});
                }
            }
            for (auto it = bound.rbegin(); it != bound.rend(); ++it)
                if (*it == id) return mk({.kind = NodeKind::BoundVar, .name = id});
            throw parse_error("unknown identifier: " + id, at);
        }
        if (c == '/') throw parse_error("non-entire operation", lex.pos);
        throw parse_error("unexpected character", lex.pos);
    }

    std::string parse_ident() {
        lex.skip_ws();
        std::size_t start = lex.pos;
        while (lex.pos < lex.s.size() &&
               (std::isalnum(static_cast<unsigned char>(lex.s[lex.pos])) || lex.s[lex.pos] == '_'))
            ++lex.pos;
        return std::string(lex.s.substr(start, lex.pos - start));
    }

    ExprAst parse_number() {
        lex.skip_ws();
        std::size_t start = lex.pos;
        while (lex.pos < lex.s.size() && std::isdigit(static_cast<unsigned char>(lex.s[lex.pos]))) ++lex.pos;
        if (lex.pos < lex.s.size() && lex.s[lex.pos] == '.') {
            ++lex.pos;
            while (lex.pos < lex.s.size() && std::isdigit(static_cast<unsigned char>(lex.s[lex.pos]))) ++lex.pos;
        }
        if (lex.pos < lex.s.size() && (lex.s[lex.pos] == 'e' || lex.s[lex.pos] == 'E')) {
            std::size_t save = lex.pos;
            ++lex.pos;
            if (lex.pos < lex.s.size() && (lex.s[lex.pos] == '+' || lex.s[lex.pos] == '-')) ++lex.pos;
            if (lex.pos < lex.s.size() && std::isdigit(static_cast<unsigned char>(lex.s[lex.pos]))) {
                while (lex.pos < lex.s.size() && std::isdigit(static_cast<unsigned char>(lex.s[lex.pos]))) ++lex.pos;
            } else {
                lex.pos = save;  // 'e' belongs to something else
            }
        }
        double v = 0.0;
        auto res = std::from_chars(lex.s.data() + start, lex.s.data() + lex.pos, v);
        if (res.ec != std::errc() || lex.pos == start) throw parse_error("bad number", start);
        return mk({.kind = NodeKind::Lit, .lit_re = v, .lit_im = 0.0});
    }
};

}  // namespace detail

// Parses one scalar component over variables z1..z<n_vars>.
inline ExprAst parse(std::string_view text, int n_vars) {
    if (text.empty()) throw parse_error("empty expression", 0);
    detail::Parser p{detail::Lexer{text, 0}, n_vars, {}};
    ExprAst ast = p.parse_expr();
    if (!p.lex.eof()) throw parse_error("trailing input", p.lex.pos);
    return ast;
}

namespace detail {

inline int precedence(NodeKind k) {
    switch (k) {
        case NodeKind::Add:
        case NodeKind::Sub: return 1;
        case NodeKind::Mul: return 2;
        case NodeKind::Neg: return 3;
        case NodeKind::Pow: return 4;
        default: return 5;
    }
}

inline void fmt_double(std::ostringstream& os, double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    os << std::string_view(buf, res.ptr - buf);
}

inline void print_node(std::ostringstream& os, const Node& n, int parent_prec) {
    int prec = precedence(n.kind);
    bool parens = prec < parent_prec;
    if (parens) os << '(';
    switch (n.kind) {
        case NodeKind::Lit:
            if (n.lit_im == 0.0) {
                fmt_double(os, n.lit_re);
            } else if (n.lit_re == 0.0 && n.lit_im == 1.0) {
                os << 'i';
            } else if (n.lit_re == 0.0) {
                fmt_double(os, n.lit_im);
                os << "*i";
            } else {
                os << '(';
                fmt_double(os, n.lit_re);
                os << '+';
                fmt_double(os, n.lit_im);
                os << "*i)";
            }
            break;
        case NodeKind::Var: os << 'z' << (n.var_index + 1); break;
        case NodeKind::BoundVar: os << n.name; break;
        case NodeKind::Add:
            print_node(os, *n.a, prec);
            os << '+';
            print_node(os, *n.b, prec + 1);
            break;
        case NodeKind::Sub:
            print_node(os, *n.a, prec);
            os << '-';
            print_node(os, *n.b, prec + 1);
            break;
        case NodeKind::Mul:
            print_node(os, *n.a, prec);
            os << '*';
            print_node(os, *n.b, prec + 1);
            break;
        case NodeKind::Neg:
            os << '-';
            print_node(os, *n.a, prec + 1);
            break;
        case NodeKind::Pow:
            print_node(os, *n.a, prec + 1);
            os << '^';
            if (n.b)
                os << n.b->name;
            else
                os << n.pow_exp;
            break;
        case NodeKind::Exp:
        case NodeKind::Sin:
        case NodeKind::Cos:
            os << (n.kind == NodeKind::Exp ? "exp" : n.kind == NodeKind::Sin ? "sin" : "cos") << '(';
            print_node(os, *n.a, 0);
            os << ')';
            break;
        case NodeKind::Sum:
        case NodeKind::Prod:
            os << (n.kind == NodeKind::Sum ? "sum" : "prod") << '(' << n.name << ',' << n.lo << ',' << n.hi << ',';
            print_node(os, *n.a, 0);
            os << ')';
            break;
    }
    if (parens) os << ')';
}

struct Env {
    const Env* up = nullptr;
    std::string_view name;
    std::int64_t ival = 0;
    LogComplex value;

    const Env* lookup(std::string_view id) const {
        for (const Env* e = this; e; e = e->up)
            if (e->name == id) return e;
        return nullptr;
    }
};

inline std::int64_t pow_exponent(const Node& n, const Env* env) {
    if (!n.b) return n.pow_exp;
    const Env* e = env ? env->lookup(n.b->name) : nullptr;
    if (!e) throw std::logic_error("unbound index variable in exponent");
    if (e->ival < 0) throw std::domain_error("non-entire operation (negative power)");
    return e->ival;
}

struct Dual {
    LogComplex v;
    LogComplex d;
};

inline Dual eval_dual(const Node& n, std::span<const LogComplex> z, int wrt, const Env* env);

inline LogComplex eval_node(const Node& n, std::span<const LogComplex> z, const Env* env) {
    using namespace xnum;
    switch (n.kind) {
        case NodeKind::Lit: return from_complex(n.lit_re, n.lit_im);
        case NodeKind::Var: return z[static_cast<std::size_t>(n.var_index)];
        case NodeKind::BoundVar: {
            const Env* e = env ? env->lookup(n.name) : nullptr;
            if (!e) throw std::logic_error("unbound index variable");
            return e->value;
        }
        case NodeKind::Add: return add(eval_node(*n.a, z, env), eval_node(*n.b, z, env));
        case NodeKind::Sub: return sub(eval_node(*n.a, z, env), eval_node(*n.b, z, env));
        case NodeKind::Neg: return neg(eval_node(*n.a, z, env));
        case NodeKind::Mul: return mul(eval_node(*n.a, z, env), eval_node(*n.b, z, env));
        case NodeKind::Pow:
            return pow_int(eval_node(*n.a, z, env), static_cast<std::uint64_t>(pow_exponent(n, env)));
        case NodeKind::Exp: return cexp(eval_node(*n.a, z, env));
        case NodeKind::Sin: return csin(eval_node(*n.a, z, env));
        case NodeKind::Cos: return ccos(eval_node(*n.a, z, env));
        case NodeKind::Sum: {
            LogComplex acc = zero();
            for (std::int64_t k = n.lo; k <= n.hi; ++k) {
                Env e{env, n.name, k, from_double(static_cast<double>(k))};
                acc = add(acc, eval_node(*n.a, z, &e));
            }
            return acc;
        }
        case NodeKind::Prod: {
            LogComplex acc = one();
            for (std::int64_t k = n.lo; k <= n.hi; ++k) {
                Env e{env, n.name, k, from_double(static_cast<double>(k))};
                acc = mul(acc, eval_node(*n.a, z, &e));
                if (acc.is_zero()) break;
            }
            return acc;
        }
    }
    throw std::logic_error("unreachable");
}

inline Dual eval_dual(const Node& n, std::span<const LogComplex> z, int wrt, const Env* env) {
    using namespace xnum;
    switch (n.kind) {
        case NodeKind::Lit: return {from_complex(n.lit_re, n.lit_im), zero()};
        case NodeKind::Var:
            return {z[static_cast<std::size_t>(n.var_index)], n.var_index == wrt ? one() : zero()};
        case NodeKind::BoundVar: return {eval_node(n, z, env), zero()};
        case NodeKind::Add: {
            Dual x = eval_dual(*n.a, z, wrt, env), y = eval_dual(*n.b, z, wrt, env);
            return {add(x.v, y.v), add(x.d, y.d)};
        }
        case NodeKind::Sub: {
            Dual x = eval_dual(*n.a, z, wrt, env), y = eval_dual(*n.b, z, wrt, env);
            return {sub(x.v, y.v), sub(x.d, y.d)};
        }
        case NodeKind::Neg: {
            Dual x = eval_dual(*n.a, z, wrt, env);
            return {neg(x.v), neg(x.d)};
        }
        case NodeKind::Mul: {
            Dual x = eval_dual(*n.a, z, wrt, env), y = eval_dual(*n.b, z, wrt, env);
            return {mul(x.v, y.v), add(mul(x.d, y.v), mul(x.v, y.d))};
        }
        case NodeKind::Pow: {
            Dual x = eval_dual(*n.a, z, wrt, env);
            std::uint64_t e = static_cast<std::uint64_t>(pow_exponent(n, env));
            if (e == 0) return {one(), zero()};
            LogComplex pm1 = pow_int(x.v, e - 1);
            return {mul(pm1, x.v), mul(from_double(static_cast<double>(e)), mul(pm1, x.d))};
        }
        case NodeKind::Exp: {
            Dual x = eval_dual(*n.a, z, wrt, env);
            LogComplex v = cexp(x.v);
            return {v, mul(v, x.d)};
        }
        case NodeKind::Sin: {
            Dual x = eval_dual(*n.a, z, wrt, env);
            return {csin(x.v), mul(ccos(x.v), x.d)};
        }
        case NodeKind::Cos: {
            Dual x = eval_dual(*n.a, z, wrt, env);
            return {ccos(x.v), neg(mul(csin(x.v), x.d))};
        }
        case NodeKind::Sum: {
            Dual acc{zero(), zero()};
            for (std::int64_t k = n.lo; k <= n.hi; ++k) {
                Env e{env, n.name, k, from_double(static_cast<double>(k))};
                Dual t = eval_dual(*n.a, z, wrt, &e);
                acc = {add(acc.v, t.v), add(acc.d, t.d)};
            }
            return acc;
        }
        case NodeKind::Prod: {
            Dual acc{one(), zero()};
            for (std::int64_t k = n.lo; k <= n.hi; ++k) {
                Env e{env, n.name, k, from_double(static_cast<double>(k))};
                Dual t = eval_dual(*n.a, z, wrt, &e);
                acc = {mul(acc.v, t.v), add(mul(acc.d, t.v), mul(acc.v, t.d))};
            }
            return acc;
        }
    }
    throw std::logic_error("unreachable");
}

}  // namespace detail

inline std::string print(const ExprAst& ast) {
    std::ostringstream os;
    detail::print_node(os, *ast, 0);
    return os.str();
}

inline LogComplex eval(const ExprAst& ast, std::span<const LogComplex> point) {
    return detail::eval_node(*ast, point, nullptr);
}

// Value and exact forward-mode partial d/dz_{wrt} at the point.
inline std::pair<LogComplex, LogComplex> eval_d(const ExprAst& ast, std::span<const LogComplex> point, int wrt) {
    auto d = detail::eval_dual(*ast, point, wrt, nullptr);
    return {d.v, d.d};
}

// Row-major m x n matrix of partials.
inline std::vector<LogComplex> jacobian(std::span<const ExprAst> components, std::span<const LogComplex> point) {
    std::size_t m = components.size(), n = point.size();
    std::vector<LogComplex> J(m * n);
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c)
            J[r * n + c] = eval_d(components[r], point, static_cast<int>(c)).second;
    return J;
}

inline bool equal(const ExprAst& x, const ExprAst& y) {
    if (x == y) return true;
    if (!x || !y) return false;
    const Node &a = *x, &b = *y;
    if (a.kind != b.kind) return false;
    switch (a.kind) {
        case NodeKind::Lit: return a.lit_re == b.lit_re && a.lit_im == b.lit_im;
        case NodeKind::Var: return a.var_index == b.var_index;
        case NodeKind::BoundVar: return a.name == b.name;
        case NodeKind::Pow:
            if (static_cast<bool>(a.b) != static_cast<bool>(b.b)) return false;
            if (a.b && a.b->name != b.b->name) return false;
            return a.pow_exp == b.pow_exp && equal(a.a, b.a);
        case NodeKind::Sum:
        case NodeKind::Prod:
            return a.name == b.name && a.lo == b.lo && a.hi == b.hi && equal(a.a, b.a);
        case NodeKind::Neg:
        case NodeKind::Exp:
        case NodeKind::Sin:
        case NodeKind::Cos: return equal(a.a, b.a);
        default: return equal(a.a, b.a) && equal(a.b, b.b);
    }
}

}  // namespace cobez::expr
