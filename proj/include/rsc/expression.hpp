#pragma once

// Tiny arithmetic-expression evaluator for config-defined coefficients.
// Grammar (whitespace ignored):
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('+' | '-') unary | power
//   power   := primary ('^' unary)?          right-associative; -x^2 == -(x^2)
//   primary := number | name | func '(' expr ')' | '(' expr ')'
//   func    := arctan | exp | log | sin | cos
//   name    := s | pi | x1..xn | u1..um
//
// The full grammar with examples lives in docs/expression-grammar.md.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rsc {

struct VariableLayout {
  std::size_t state_dim = 1;
  std::size_t control_dim = 1;
  bool allow_time = true;
  bool allow_control = true;
};

class Expression {
 public:
  // Throws ConfigError with the offending position on malformed input.
  static Expression parse(std::string_view text, const VariableLayout& layout);

  double evaluate(double s, std::span<const double> x, std::span<const double> u) const;

  const std::string& source() const { return source_; }
  bool depends_on_time() const { return uses_time_; }
  bool depends_on_control() const { return uses_control_; }

  enum class Op : std::uint8_t {
    constant, time, state, control, add, sub, mul, div, pow, neg, arctan, exp, log, sin, cos
  };
  struct Instruction {
    Op op;
    std::uint32_t index = 0;
    double value = 0.0;
  };

 private:
  std::string source_;
  std::vector<Instruction> program_;  // postfix
  std::size_t max_depth_ = 0;
  bool uses_time_ = false;
  bool uses_control_ = false;
};

}  // namespace rsc
