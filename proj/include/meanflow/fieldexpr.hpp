#pragma once

#include <cctype>
#include <cmath>
#include <cstdio>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "meanflow/errors.hpp"
#include "meanflow/format.hpp"
#include "meanflow/mesh.hpp"

namespace meanflow {

// Immutable expression tree over scalars, two coordinate variables, the
// constant pi, and the functions sin, cos, exp, log (natural), abs.
struct ExprNode;
using ExprPtr = std::shared_ptr<const ExprNode>;

struct ExprNode {
  enum class Op {
    Literal, Variable, Neg, Add, Sub, Mul, Div, Pow, Sin, Cos, Exp, Log, Abs
  };
  Op op = Op::Literal;
  double value = 0.0;    // Literal
  std::string name;      // Variable
  ExprPtr lhs, rhs;      // children: unary ops use lhs only
};

struct FieldExpr {
  ExprPtr root;
};

namespace detail {

inline ExprPtr make_node(ExprNode::Op op, ExprPtr lhs, ExprPtr rhs = nullptr) {
  auto n = std::make_shared<ExprNode>();
  n->op = op;
  n->lhs = std::move(lhs);
  n->rhs = std::move(rhs);
  return n;
}

class ExprParser {
 public:
  explicit ExprParser(const std::string& src) : src_(src) {}

  ExprPtr parse() {
    ExprPtr e = parse_expr();
    skip_ws();
    if (pos_ != src_.size()) {
      fail("unexpected trailing input");
    }
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("syntax error at offset " + std::to_string(pos_) + ": " + what,
                     pos_);
  }

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool consume(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!consume(c)) fail(std::string("expected '") + c + "'");
  }

  ExprPtr parse_expr() {
    ExprPtr lhs = parse_term();
    for (;;) {
      if (consume('+')) {
        lhs = make_node(ExprNode::Op::Add, lhs, parse_term());
      } else if (consume('-')) {
        lhs = make_node(ExprNode::Op::Sub, lhs, parse_term());
      } else {
        return lhs;
      }
    }
  }

  ExprPtr parse_term() {
    ExprPtr lhs = parse_unary();
    for (;;) {
      if (consume('*')) {
        lhs = make_node(ExprNode::Op::Mul, lhs, parse_unary());
      } else if (consume('/')) {
        lhs = make_node(ExprNode::Op::Div, lhs, parse_unary());
      } else {
        return lhs;
      }
    }
  }

  // Unary minus binds looser than '^', so -x^2 is -(x^2); the exponent
  // itself is parsed as a unary, so 2^-3 is legal and ^ associates right.
  ExprPtr parse_unary() {
    if (consume('-')) {
      return make_node(ExprNode::Op::Neg, parse_unary());
    }
    return parse_power();
  }

  ExprPtr parse_power() {
    ExprPtr base = parse_atom();
    if (consume('^')) {
      return make_node(ExprNode::Op::Pow, base, parse_unary());
    }
    return base;
  }

  ExprPtr parse_atom() {
    skip_ws();
    if (pos_ >= src_.size()) fail("unexpected end of input");
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      ExprPtr e = parse_expr();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      return parse_number();
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      return parse_ident();
    }
    fail("expected a number, identifier, or '('");
  }

  ExprPtr parse_number() {
    const char* begin = src_.c_str() + pos_;
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) fail("malformed number");
    pos_ += static_cast<std::size_t>(end - begin);
    auto n = std::make_shared<ExprNode>();
    n->op = ExprNode::Op::Literal;
    n->value = v;
    return n;
  }

  ExprPtr parse_ident() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
      ++pos_;
    }
    const std::string name = src_.substr(start, pos_ - start);
    if (name == "pi") {
      auto n = std::make_shared<ExprNode>();
      n->op = ExprNode::Op::Literal;
      n->value = kPi;
      return n;
    }
    ExprNode::Op fn;
    if (name == "sin") fn = ExprNode::Op::Sin;
    else if (name == "cos") fn = ExprNode::Op::Cos;
    else if (name == "exp") fn = ExprNode::Op::Exp;
    else if (name == "log") fn = ExprNode::Op::Log;
    else if (name == "abs") fn = ExprNode::Op::Abs;
    else if (name == "x" || name == "y" || name == "theta" || name == "phi") {
      auto n = std::make_shared<ExprNode>();
      n->op = ExprNode::Op::Variable;
      n->name = name;
      return n;
    } else {
      pos_ = start;
      fail("unknown identifier '" + name + "'");
    }
    expect('(');
    ExprPtr arg = parse_expr();
    expect(')');
    return make_node(fn, arg);
  }

  const std::string& src_;
  std::size_t pos_ = 0;
};

inline int precedence(ExprNode::Op op) {
  switch (op) {
    case ExprNode::Op::Add:
    case ExprNode::Op::Sub: return 1;
    case ExprNode::Op::Mul:
    case ExprNode::Op::Div: return 2;
    case ExprNode::Op::Neg: return 3;
    case ExprNode::Op::Pow: return 4;
    default: return 5;
  }
}

inline void print_node(const ExprNode& n, std::string& out) {
  using Op = ExprNode::Op;
  auto child = [&out](const ExprNode& c, bool parens) {
    if (parens) out += '(';
    print_node(c, out);
    if (parens) out += ')';
  };
  switch (n.op) {
    case Op::Literal:
      out += format_g17(n.value);
      return;
    case Op::Variable:
      out += n.name;
      return;
    case Op::Neg:
      out += '-';
      child(*n.lhs, precedence(n.lhs->op) < 3);
      return;
    case Op::Add:
    case Op::Sub: {
      child(*n.lhs, precedence(n.lhs->op) < 1);
      out += n.op == Op::Add ? " + " : " - ";
      child(*n.rhs, precedence(n.rhs->op) <= 1);
      return;
    }
    case Op::Mul:
    case Op::Div: {
      child(*n.lhs, precedence(n.lhs->op) < 2);
      out += n.op == Op::Mul ? "*" : "/";
      child(*n.rhs, precedence(n.rhs->op) <= 2);
      return;
    }
    case Op::Pow: {
      child(*n.lhs, precedence(n.lhs->op) < 5);
      out += '^';
      child(*n.rhs, precedence(n.rhs->op) < 3);
      return;
    }
    case Op::Sin: out += "sin("; break;
    case Op::Cos: out += "cos("; break;
    case Op::Exp: out += "exp("; break;
    case Op::Log: out += "log("; break;
    case Op::Abs: out += "abs("; break;
  }
  print_node(*n.lhs, out);
  out += ')';
}

inline double eval_node(const ExprNode& n, double c1, double c2, MeshKind kind) {
  using Op = ExprNode::Op;
  switch (n.op) {
    case Op::Literal: return n.value;
    case Op::Variable: {
      const bool torus = kind == MeshKind::Torus;
      if (n.name == "x") {
        if (!torus) throw EvalError("variable 'x' is not defined on sphere meshes");
        return c1;
      }
      if (n.name == "y") {
        if (!torus) throw EvalError("variable 'y' is not defined on sphere meshes");
        return c2;
      }
      if (n.name == "theta") {
        if (torus) throw EvalError("variable 'theta' is not defined on torus meshes");
        return c1;
      }
      if (torus) throw EvalError("variable 'phi' is not defined on torus meshes");
      return c2;
    }
    case Op::Neg: return -eval_node(*n.lhs, c1, c2, kind);
    case Op::Add: return eval_node(*n.lhs, c1, c2, kind) + eval_node(*n.rhs, c1, c2, kind);
    case Op::Sub: return eval_node(*n.lhs, c1, c2, kind) - eval_node(*n.rhs, c1, c2, kind);
    case Op::Mul: return eval_node(*n.lhs, c1, c2, kind) * eval_node(*n.rhs, c1, c2, kind);
    case Op::Div: {
      const double den = eval_node(*n.rhs, c1, c2, kind);
      if (den == 0.0) throw EvalError("division by zero");
      return eval_node(*n.lhs, c1, c2, kind) / den;
    }
    case Op::Pow: {
      const double b = eval_node(*n.lhs, c1, c2, kind);
      const double e = eval_node(*n.rhs, c1, c2, kind);
      if (b < 0.0 && e != std::floor(e)) {
        throw EvalError("negative base raised to a non-integer exponent");
      }
      if (b == 0.0 && e < 0.0) throw EvalError("zero raised to a negative exponent");
      return std::pow(b, e);
    }
    case Op::Sin: return std::sin(eval_node(*n.lhs, c1, c2, kind));
    case Op::Cos: return std::cos(eval_node(*n.lhs, c1, c2, kind));
    case Op::Exp: return std::exp(eval_node(*n.lhs, c1, c2, kind));
    case Op::Log: {
      const double v = eval_node(*n.lhs, c1, c2, kind);
      if (v <= 0.0) throw EvalError("log of a non-positive argument");
      return std::log(v);
    }
    case Op::Abs: return std::fabs(eval_node(*n.lhs, c1, c2, kind));
  }
  throw EvalError("corrupt expression node");
}

}  // namespace detail

inline FieldExpr parse_expr(const std::string& src) {
  return FieldExpr{detail::ExprParser(src).parse()};
}

// Canonical text form; parsing it back yields a structurally identical tree,
// so pretty_print(parse_expr(pretty_print(e))) == pretty_print(e).
inline std::string pretty_print(const FieldExpr& e) {
  std::string out;
  detail::print_node(*e.root, out);
  return out;
}

// Point evaluation with coordinates interpreted per mesh kind:
// torus (x, y), sphere (theta, phi).
inline double eval(const FieldExpr& e, MeshKind kind, double c1, double c2) {
  return detail::eval_node(*e.root, c1, c2, kind);
}

inline Field materialize(const MeshGeometry& mesh, const FieldExpr& e) {
  Field out = mesh.make_field();
  for (int idx = 0; idx < mesh.node_count(); ++idx) {
    double v;
    try {
      v = detail::eval_node(*e.root, mesh.coord1[idx], mesh.coord2[idx], mesh.kind);
    } catch (const EvalError& err) {
      throw EvalError("evaluation error at node " + std::to_string(idx) + " (" +
                      format_g17(mesh.coord1[idx]) + ", " +
                      format_g17(mesh.coord2[idx]) + "): " + err.what());
    }
    if (!std::isfinite(v)) {
      throw EvalError("evaluation error at node " + std::to_string(idx) +
                      ": expression produced a non-finite value");
    }
    out[idx] = v;
  }
  return out;
}

}  // namespace meanflow
