#include "sdelab/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

#include "sdelab/errors.hpp"

namespace sdelab {

struct Expr::Node {
  enum class Op { Const, Time, Neg, Add, Sub, Mul, Div, Pow, Sin, Cos, Tan, Exp, Log, Sqrt, Abs };

  Op op = Op::Const;
  double value = 0.0;
  std::shared_ptr<const Node> lhs;
  std::shared_ptr<const Node> rhs;
};

namespace {

using Node = Expr::Node;
using NodePtr = std::shared_ptr<const Node>;
using Op = Node::Op;

NodePtr make_const(double v) {
  auto n = std::make_shared<Node>();
  n->op = Op::Const;
  n->value = v;
  return n;
}

NodePtr make_node(Op op, NodePtr a, NodePtr b = nullptr) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->lhs = std::move(a);
  n->rhs = std::move(b);
  return n;
}

double eval_node(const Node& n, double t) {
  switch (n.op) {
    case Op::Const: return n.value;
    case Op::Time: return t;
    case Op::Neg: return -eval_node(*n.lhs, t);
    case Op::Add: return eval_node(*n.lhs, t) + eval_node(*n.rhs, t);
    case Op::Sub: return eval_node(*n.lhs, t) - eval_node(*n.rhs, t);
    case Op::Mul: return eval_node(*n.lhs, t) * eval_node(*n.rhs, t);
    case Op::Div: return eval_node(*n.lhs, t) / eval_node(*n.rhs, t);
    case Op::Pow: return std::pow(eval_node(*n.lhs, t), eval_node(*n.rhs, t));
    case Op::Sin: return std::sin(eval_node(*n.lhs, t));
    case Op::Cos: return std::cos(eval_node(*n.lhs, t));
    case Op::Tan: return std::tan(eval_node(*n.lhs, t));
    case Op::Exp: return std::exp(eval_node(*n.lhs, t));
    case Op::Log: return std::log(eval_node(*n.lhs, t));
    case Op::Sqrt: return std::sqrt(eval_node(*n.lhs, t));
    case Op::Abs: return std::abs(eval_node(*n.lhs, t));
  }
  return 0.0;
}

void render(const Node& n, std::ostringstream& os) {
  auto fn = [&](const char* name) {
    os << name << '(';
    render(*n.lhs, os);
    os << ')';
  };
  auto bin = [&](char c) {
    os << '(';
    render(*n.lhs, os);
    os << ' ' << c << ' ';
    render(*n.rhs, os);
    os << ')';
  };
  switch (n.op) {
    case Op::Const: {
      std::ostringstream num;
      num.precision(17);
      num << n.value;
      // Negative literals are rendered parenthesised so they re-parse as unary minus.
      if (n.value < 0) os << '(' << num.str() << ')';
      else os << num.str();
      break;
    }
    case Op::Time: os << 't'; break;
    case Op::Neg: os << "(-"; render(*n.lhs, os); os << ')'; break;
    case Op::Add: bin('+'); break;
    case Op::Sub: bin('-'); break;
    case Op::Mul: bin('*'); break;
    case Op::Div: bin('/'); break;
    case Op::Pow: bin('^'); break;
    case Op::Sin: fn("sin"); break;
    case Op::Cos: fn("cos"); break;
    case Op::Tan: fn("tan"); break;
    case Op::Exp: fn("exp"); break;
    case Op::Log: fn("log"); break;
    case Op::Sqrt: fn("sqrt"); break;
    case Op::Abs: fn("abs"); break;
  }
}

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  NodePtr parse_full() {
    auto n = parse_expr();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    return n;
  }

  NodePtr parse_expr() {
    auto lhs = parse_term();
    for (;;) {
      skip_ws();
      if (accept('+')) lhs = make_node(Op::Add, lhs, parse_term());
      else if (accept('-')) lhs = make_node(Op::Sub, lhs, parse_term());
      else return lhs;
    }
  }

  std::size_t pos() const noexcept { return pos_; }
  void set_pos(std::size_t p) noexcept { pos_ = p; }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw ArgumentError("expression parse error at column " + std::to_string(pos_ + 1) + ": " + why +
                        " in \"" + std::string(text_) + "\"");
  }

 private:
  NodePtr parse_term() {
    auto lhs = parse_unary();
    for (;;) {
      skip_ws();
      if (accept('*')) lhs = make_node(Op::Mul, lhs, parse_unary());
      else if (accept('/')) lhs = make_node(Op::Div, lhs, parse_unary());
      else return lhs;
    }
  }

  NodePtr parse_unary() {
    skip_ws();
    if (accept('-')) return make_node(Op::Neg, parse_unary());
    if (accept('+')) return parse_unary();
    return parse_power();
  }

  NodePtr parse_power() {
    auto base = parse_primary();
    skip_ws();
    if (accept('^')) return make_node(Op::Pow, base, parse_unary());
    return base;
  }

  NodePtr parse_primary() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      auto inner = parse_expr();
      expect(')');
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
        ++pos_;
      const std::string_view name = text_.substr(start, pos_ - start);
      if (name == "t") return make_node(Op::Time, nullptr);
      if (name == "pi") return make_const(std::numbers::pi);
      Op op;
      if (name == "sin") op = Op::Sin;
      else if (name == "cos") op = Op::Cos;
      else if (name == "tan") op = Op::Tan;
      else if (name == "exp") op = Op::Exp;
      else if (name == "log") op = Op::Log;
      else if (name == "sqrt") op = Op::Sqrt;
      else if (name == "abs") op = Op::Abs;
      else {
        pos_ = start;
        fail("unknown identifier '" + std::string(name) + "'");
      }
      expect('(');
      auto arg = parse_expr();
      expect(')');
      return make_node(op, arg);
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  NodePtr parse_number() {
    const char* first = text_.data() + pos_;
    const char* last = text_.data() + text_.size();
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc()) fail("malformed number");
    pos_ += static_cast<std::size_t>(ptr - first);
    return make_const(v);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

Expr::Expr() : root_(make_const(0.0)) {}

Expr Expr::parse(std::string_view text) {
  Parser p(text);
  return Expr(p.parse_full());
}

Expr Expr::constant(double value) { return Expr(make_const(value)); }

double Expr::eval(double t) const { return eval_node(*root_, t); }

bool Expr::is_constant_zero() const noexcept { return root_->op == Op::Const && root_->value == 0.0; }

std::string Expr::to_string() const {
  std::ostringstream os;
  render(*root_, os);
  return os.str();
}

MatrixFunction MatrixFunction::parse(std::string_view text, std::size_t dim) {
  if (dim == 0) throw ArgumentError("matrix function dimension must be >= 1");
  MatrixFunction mf;
  mf.dim_ = dim;
  mf.source_ = std::string(text);
  mf.entries_.assign(dim * dim, Expr());

  Parser p(text);
  p.skip_ws();
  if (!p.accept('[')) {
    // Scalar form: s(t) * Id.
    p.set_pos(0);
    const Expr s = Expr::parse(text);
    for (std::size_t i = 0; i < dim; ++i) mf.entries_[i * dim + i] = s;
    return mf;
  }

  std::size_t row = 0;
  do {
    if (row >= dim) p.fail("more than " + std::to_string(dim) + " rows");
    p.expect('[');
    std::size_t col = 0;
    do {
      if (col >= dim) p.fail("more than " + std::to_string(dim) + " columns in row " + std::to_string(row));
      mf.entries_[row * dim + col] = Expr(p.parse_expr());
      ++col;
    } while (p.accept(','));
    p.expect(']');
    if (col != dim) p.fail("row " + std::to_string(row) + " has " + std::to_string(col) + " entries, expected " +
                           std::to_string(dim));
    ++row;
  } while (p.accept(','));
  p.expect(']');
  p.skip_ws();
  if (row != dim) p.fail("expected " + std::to_string(dim) + " rows, got " + std::to_string(row));
  if (p.pos() != text.size()) p.fail("unexpected trailing input");
  return mf;
}

MatrixFunction MatrixFunction::constant(const Matrix& m) {
  if (!m.square() || m.rows() == 0) throw ArgumentError("constant matrix function needs a non-empty square matrix");
  MatrixFunction mf;
  mf.dim_ = m.rows();
  mf.entries_.reserve(m.rows() * m.cols());
  std::ostringstream os;
  os.precision(17);
  os << '[';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    os << (i ? ", [" : "[");
    for (std::size_t j = 0; j < m.cols(); ++j) {
      mf.entries_.push_back(Expr::constant(m(i, j)));
      os << (j ? ", " : "") << m(i, j);
    }
    os << ']';
  }
  os << ']';
  mf.source_ = os.str();
  return mf;
}

MatrixFunction MatrixFunction::zero(std::size_t dim) { return constant(Matrix::zeros(dim)); }

Matrix MatrixFunction::eval(double t) const {
  Matrix m(dim_, dim_);
  for (std::size_t k = 0; k < entries_.size(); ++k) m.data()[k] = entries_[k].eval(t);
  return m;
}

bool MatrixFunction::is_zero() const noexcept {
  for (const auto& e : entries_)
    if (!e.is_constant_zero()) return false;
  return true;
}

}  // namespace sdelab
