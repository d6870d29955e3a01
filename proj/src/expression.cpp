#include "rsc/expression.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>

#include "rsc/error.hpp"

namespace rsc {

namespace {

using Op = Expression::Op;
using Instruction = Expression::Instruction;

class Parser {
 public:
  Parser(std::string_view text, const VariableLayout& layout) : text_(text), layout_(layout) {}

  std::vector<Instruction> run() {
    parse_expr();
    skip_space();
    if (pos_ != text_.size()) fail("unexpected character");
    return std::move(program_);
  }

  bool uses_time = false;
  bool uses_control = false;

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("expression '" + std::string(text_) + "': " + what + " at position " +
                      std::to_string(pos_));
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void emit(Op op, std::uint32_t index = 0, double value = 0.0) {
    program_.push_back(Instruction{op, index, value});
  }

  void parse_expr() {
    parse_term();
    for (;;) {
      if (accept('+')) {
        parse_term();
        emit(Op::add);
      } else if (accept('-')) {
        parse_term();
        emit(Op::sub);
      } else {
        return;
      }
    }
  }

  void parse_term() {
    parse_unary();
    for (;;) {
      if (accept('*')) {
        parse_unary();
        emit(Op::mul);
      } else if (accept('/')) {
        parse_unary();
        emit(Op::div);
      } else {
        return;
      }
    }
  }

  void parse_unary() {
    if (accept('-')) {
      parse_unary();
      emit(Op::neg);
      return;
    }
    if (accept('+')) {
      parse_unary();
      return;
    }
    parse_power();
  }

  void parse_power() {
    parse_primary();
    if (accept('^')) {
      parse_unary();
      emit(Op::pow);
    }
  }

  void parse_primary() {
    skip_space();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      parse_expr();
      if (!accept(')')) fail("expected ')'");
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      parse_number();
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      parse_name();
      return;
    }
    fail("unexpected character");
  }

  void parse_number() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) ||
                                   text_[pos_] == '.')) {
      ++pos_;
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t look = pos_ + 1;
      if (look < text_.size() && (text_[look] == '+' || text_[look] == '-')) ++look;
      if (look < text_.size() && std::isdigit(static_cast<unsigned char>(text_[look]))) {
        pos_ = look;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
      }
    }
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, value);
    if (ec != std::errc() || ptr != text_.data() + pos_) {
      pos_ = start;
      fail("malformed number");
    }
    emit(Op::constant, 0, value);
  }

  void parse_name() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() && std::isalnum(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    const std::string_view name = text_.substr(start, pos_ - start);

    static constexpr std::pair<std::string_view, Op> functions[] = {
        {"arctan", Op::arctan}, {"exp", Op::exp}, {"log", Op::log}, {"sin", Op::sin},
        {"cos", Op::cos}};
    for (const auto& [fname, op] : functions) {
      if (name == fname) {
        if (!accept('(')) fail("expected '(' after " + std::string(fname));
        parse_expr();
        if (!accept(')')) fail("expected ')'");
        emit(op);
        return;
      }
    }
    if (name == "pi") {
      emit(Op::constant, 0, std::numbers::pi);
      return;
    }
    if (name == "s") {
      if (!layout_.allow_time) fail("time variable 's' not allowed here");
      uses_time = true;
      emit(Op::time);
      return;
    }
    if (name.size() >= 2 && (name[0] == 'x' || name[0] == 'u')) {
      std::uint32_t index = 0;
      const auto [ptr, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), index);
      if (ec == std::errc() && ptr == name.data() + name.size() && index >= 1) {
        if (name[0] == 'x') {
          if (index > layout_.state_dim) fail("state variable out of range: " + std::string(name));
          emit(Op::state, index - 1);
        } else {
          if (!layout_.allow_control) fail("control variable not allowed here");
          if (index > layout_.control_dim) {
            fail("control variable out of range: " + std::string(name));
          }
          uses_control = true;
          emit(Op::control, index - 1);
        }
        return;
      }
    }
    pos_ = start;
    fail("unknown name '" + std::string(name) + "'");
  }

  std::string_view text_;
  const VariableLayout& layout_;
  std::size_t pos_ = 0;
  std::vector<Instruction> program_;
};

std::size_t stack_depth(const std::vector<Instruction>& program) {
  std::size_t depth = 0;
  std::size_t max_depth = 0;
  for (const auto& ins : program) {
    switch (ins.op) {
      case Op::constant:
      case Op::time:
      case Op::state:
      case Op::control:
        ++depth;
        break;
      case Op::add:
      case Op::sub:
      case Op::mul:
      case Op::div:
      case Op::pow:
        --depth;
        break;
      default:
        break;
    }
    max_depth = std::max(max_depth, depth);
  }
  return max_depth;
}

constexpr std::size_t kMaxStack = 64;

}  // namespace

Expression Expression::parse(std::string_view text, const VariableLayout& layout) {
  Parser parser(text, layout);
  Expression e;
  e.program_ = parser.run();
  e.source_ = std::string(text);
  e.uses_time_ = parser.uses_time;
  e.uses_control_ = parser.uses_control;
  e.max_depth_ = stack_depth(e.program_);
  if (e.max_depth_ > kMaxStack) {
    throw ConfigError("expression '" + e.source_ + "' is nested too deeply");
  }
  return e;
}

double Expression::evaluate(double s, std::span<const double> x, std::span<const double> u) const {
  double stack[kMaxStack];
  std::size_t top = 0;
  for (const auto& ins : program_) {
    switch (ins.op) {
      case Op::constant:
        stack[top++] = ins.value;
        break;
      case Op::time:
        stack[top++] = s;
        break;
      case Op::state:
        stack[top++] = x[ins.index];
        break;
      case Op::control:
        stack[top++] = u[ins.index];
        break;
      case Op::add:
        --top;
        stack[top - 1] = stack[top - 1] + stack[top];
        break;
      case Op::sub:
        --top;
        stack[top - 1] = stack[top - 1] - stack[top];
        break;
      case Op::mul:
        --top;
        stack[top - 1] = stack[top - 1] * stack[top];
        break;
      case Op::div:
        --top;
        stack[top - 1] = stack[top - 1] / stack[top];
        break;
      case Op::pow:
        --top;
        stack[top - 1] = std::pow(stack[top - 1], stack[top]);
        break;
      case Op::neg:
        stack[top - 1] = -stack[top - 1];
        break;
      case Op::arctan:
        stack[top - 1] = std::atan(stack[top - 1]);
        break;
      case Op::exp:
        stack[top - 1] = std::exp(stack[top - 1]);
        break;
      case Op::log:
        stack[top - 1] = std::log(stack[top - 1]);
        break;
      case Op::sin:
        stack[top - 1] = std::sin(stack[top - 1]);
        break;
      case Op::cos:
        stack[top - 1] = std::cos(stack[top - 1]);
        break;
    }
  }
  return stack[0];
}

}  // namespace rsc
