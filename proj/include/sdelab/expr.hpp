#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "sdelab/linalg.hpp"

namespace sdelab {

/// Closed-form scalar function of time.
///
/// Grammar (whitespace-insensitive):
///   expr    := term (('+' | '-') term)*
///   term    := unary (('*' | '/') unary)*
///   unary   := ('-' | '+') unary | power
///   power   := primary ('^' unary)?
///   primary := number | 't' | 'pi' | func '(' expr ')' | '(' expr ')'
///   func    := sin | cos | tan | exp | log | sqrt | abs
///
/// Evaluation is pure; the tree is immutable and shared between copies.
class Expr {
 public:
  Expr();  // the constant 0

  static Expr parse(std::string_view text);
  static Expr constant(double value);

  double eval(double t) const;
  bool is_constant_zero() const noexcept;

  /// Canonical fully-parenthesised rendering; parse(to_string()) evaluates identically.
  std::string to_string() const;

  struct Node;

 private:
  friend class MatrixFunction;
  explicit Expr(std::shared_ptr<const Node> root) : root_(std::move(root)) {}
  std::shared_ptr<const Node> root_;
};

/// dim x dim matrix whose entries are Exprs in t.
///
/// Text form is either a nested literal "[[e, e], [e, e]]" or a bare scalar
/// expression s(t), meaning s(t) * Id.
class MatrixFunction {
 public:
  MatrixFunction() = default;

  static MatrixFunction parse(std::string_view text, std::size_t dim);
  static MatrixFunction constant(const Matrix& m);
  static MatrixFunction zero(std::size_t dim);

  std::size_t dim() const noexcept { return dim_; }
  Matrix eval(double t) const;
  bool is_zero() const noexcept;
  const std::string& source() const noexcept { return source_; }

 private:
  std::size_t dim_ = 0;
  std::vector<Expr> entries_;  // row-major
  std::string source_;
};

}  // namespace sdelab
