#include "iss/expr.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cctype>
#include <charconv>
#include <cmath>
#include <utility>

namespace iss {

namespace {

double checked(double v, const char* what, bool operands_finite = true) {
  if (std::isnan(v)) throw EvalError(std::string("domain error in ") + what);
  if (std::isinf(v)) {
    if (operands_finite) throw OverflowError(std::string("overflow in ") + what);
    throw EvalError(std::string("non-finite value in ") + what);
  }
  return v;
}

double apply_pow(double base, double exponent) {
  if (base < 0.0 && exponent != std::floor(exponent))
    throw EvalError("domain error: negative base with non-integer exponent");
  if (base == 0.0 && exponent < 0.0) throw EvalError("domain error: zero to a negative power");
  return checked(std::pow(base, exponent), "^");
}

double apply_binary(BinaryOp op, double a, double b) {
  switch (op) {
    case BinaryOp::Add: return checked(a + b, "+");
    case BinaryOp::Sub: return checked(a - b, "-");
    case BinaryOp::Mul: return checked(a * b, "*");
    case BinaryOp::Div:
      if (b == 0.0) throw EvalError("domain error: division by zero");
      return checked(a / b, "/");
    case BinaryOp::Pow: return apply_pow(a, b);
  }
  return 0.0;
}

double apply_unary(Func f, double a) {
  switch (f) {
    case Func::Abs: return std::fabs(a);
    case Func::Sqrt:
      if (a < 0.0) throw EvalError("domain error: sqrt of negative value");
      return std::sqrt(a);
    case Func::Exp: return checked(std::exp(a), "exp");
    case Func::Ln:
      if (a <= 0.0) throw EvalError("domain error: ln of non-positive value");
      return std::log(a);
    default: break;
  }
  throw EvalError("internal: not a unary function");
}

struct FuncInfo {
  const char* name;
  Func func;
  int min_args;
  int max_args;  // -1 = variadic
};

constexpr std::array<FuncInfo, 7> kFunctions{{
    {"abs", Func::Abs, 1, 1},
    {"sqrt", Func::Sqrt, 1, 1},
    {"exp", Func::Exp, 1, 1},
    {"ln", Func::Ln, 1, 1},
    {"min", Func::Min, 2, -1},
    {"max", Func::Max, 2, -1},
    {"pow", Func::Pow, 2, 2},
}};

class Parser {
 public:
  explicit Parser(std::string_view src) : src_(src) {}

  Expr parse_all() {
    skip_ws();
    if (pos_ >= src_.size()) throw ParseError("empty expression", pos_);
    Expr e = parse_sum();
    skip_ws();
    if (pos_ != src_.size()) throw ParseError(std::string("unexpected '") + src_[pos_] + "'", pos_);
    return e;
  }

 private:
  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) {
      if (pos_ >= src_.size())
        throw ParseError(std::string("expected '") + c + "' but reached end of input", pos_);
      throw ParseError(std::string("expected '") + c + "'", pos_);
    }
  }

  Expr parse_sum() {
    Expr lhs = parse_product();
    for (;;) {
      if (accept('+')) lhs = Expr::binary(BinaryOp::Add, lhs, parse_product());
      else if (accept('-')) lhs = Expr::binary(BinaryOp::Sub, lhs, parse_product());
      else return lhs;
    }
  }

  Expr parse_product() {
    Expr lhs = parse_unary();
    for (;;) {
      if (accept('*')) lhs = Expr::binary(BinaryOp::Mul, lhs, parse_unary());
      else if (accept('/')) lhs = Expr::binary(BinaryOp::Div, lhs, parse_unary());
      else return lhs;
    }
  }

  Expr parse_unary() {
    if (accept('-')) return Expr::negate(parse_unary());
    return parse_power();
  }

  // ^ binds tighter than unary minus on its left and is right-associative.
  Expr parse_power() {
    Expr base = parse_primary();
    if (accept('^')) return Expr::binary(BinaryOp::Pow, base, parse_unary());
    return base;
  }

  Expr parse_primary() {
    skip_ws();
    if (pos_ >= src_.size()) throw ParseError("unexpected end of input", pos_);
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = parse_sum();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier();
    throw ParseError(std::string("unexpected '") + c + "'", pos_);
  }

  Expr parse_number() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.')) ++pos_;
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) ++p;
      if (p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]))) {
        pos_ = p;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      }
    }
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(src_.data() + start, src_.data() + pos_, v);
    if (ec != std::errc() || ptr != src_.data() + pos_) throw ParseError("malformed number", start);
    return Expr::number(v);
  }

  Expr parse_identifier() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) ++pos_;
    std::string name(src_.substr(start, pos_ - start));
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == '(') {
      const FuncInfo* info = nullptr;
      for (const auto& f : kFunctions)
        if (name == f.name) info = &f;
      if (info == nullptr) throw ParseError("unknown function '" + name + "'", start);
      ++pos_;
      std::vector<Expr> args;
      if (!accept(')')) {
        do {
          args.push_back(parse_sum());
        } while (accept(','));
        expect(')');
      }
      const int n = static_cast<int>(args.size());
      if (n < info->min_args || (info->max_args >= 0 && n > info->max_args))
        throw ParseError("wrong number of arguments to '" + name + "'", start);
      return Expr::call(info->func, std::move(args));
    }
    return Expr::variable(std::move(name));
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

int precedence(const Expr& e) {
  switch (e.kind()) {
    case Expr::Kind::Number:
    case Expr::Kind::Variable:
    case Expr::Kind::Call: return 5;
    case Expr::Kind::Negate: return 3;
    case Expr::Kind::Binary:
      switch (e.node().op) {
        case BinaryOp::Add:
        case BinaryOp::Sub: return 1;
        case BinaryOp::Mul:
        case BinaryOp::Div: return 2;
        case BinaryOp::Pow: return 4;
      }
  }
  return 0;
}

std::string format_number(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  (void)ec;
  return std::string(buf.data(), ptr);
}

void render(const Expr& e, std::string& out);

void render_child(const Expr& child, bool parens, std::string& out) {
  if (parens) out += '(';
  render(child, out);
  if (parens) out += ')';
}

void render(const Expr& e, std::string& out) {
  const auto& n = e.node();
  switch (n.kind) {
    case Expr::Kind::Number:
      if (std::signbit(n.value)) out += "(" + format_number(n.value) + ")";
      else out += format_number(n.value);
      return;
    case Expr::Kind::Variable: out += n.name; return;
    case Expr::Kind::Negate:
      out += '-';
      render_child(n.children[0], precedence(n.children[0]) < 3, out);
      return;
    case Expr::Kind::Call:
      out += function_name(n.func);
      out += '(';
      for (std::size_t i = 0; i < n.children.size(); ++i) {
        if (i) out += ", ";
        render(n.children[i], out);
      }
      out += ')';
      return;
    case Expr::Kind::Binary: {
      const int p = precedence(e);
      const Expr& l = n.children[0];
      const Expr& r = n.children[1];
      if (n.op == BinaryOp::Pow) {
        // base must be atomic; exponent may be a unary expression
        render_child(l, precedence(l) <= 4, out);
        out += '^';
        render_child(r, precedence(r) < 3, out);
        return;
      }
      render_child(l, precedence(l) < p, out);
      switch (n.op) {
        case BinaryOp::Add: out += " + "; break;
        case BinaryOp::Sub: out += " - "; break;
        case BinaryOp::Mul: out += "*"; break;
        case BinaryOp::Div: out += "/"; break;
        default: break;
      }
      render_child(r, precedence(r) <= p, out);
      return;
    }
  }
}

}  // namespace

Expr Expr::number(double v) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Number;
  n->value = v;
  return Expr(std::move(n));
}

Expr Expr::variable(std::string name) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Variable;
  n->name = std::move(name);
  return Expr(std::move(n));
}

Expr Expr::negate(Expr e) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Negate;
  n->children.push_back(std::move(e));
  return Expr(std::move(n));
}

Expr Expr::binary(BinaryOp op, Expr lhs, Expr rhs) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Binary;
  n->op = op;
  n->children.push_back(std::move(lhs));
  n->children.push_back(std::move(rhs));
  return Expr(std::move(n));
}

Expr Expr::call(Func f, std::vector<Expr> args) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Call;
  n->func = f;
  n->children = std::move(args);
  return Expr(std::move(n));
}

Expr Expr::substitute(const std::map<std::string, double>& values) const {
  const auto& n = *node_;
  switch (n.kind) {
    case Kind::Number: return *this;
    case Kind::Variable: {
      auto it = values.find(n.name);
      return it == values.end() ? *this : number(it->second);
    }
    default: break;
  }
  auto copy = std::make_shared<Node>(n);
  for (auto& c : copy->children) c = c.substitute(values);
  return Expr(std::move(copy));
}

bool Expr::operator==(const Expr& other) const {
  const auto& a = *node_;
  const auto& b = *other.node_;
  if (a.kind != b.kind || a.children.size() != b.children.size()) return false;
  switch (a.kind) {
    case Kind::Number:
      if (std::bit_cast<std::uint64_t>(a.value) != std::bit_cast<std::uint64_t>(b.value)) return false;
      break;
    case Kind::Variable:
      if (a.name != b.name) return false;
      break;
    case Kind::Binary:
      if (a.op != b.op) return false;
      break;
    case Kind::Call:
      if (a.func != b.func) return false;
      break;
    case Kind::Negate: break;
  }
  for (std::size_t i = 0; i < a.children.size(); ++i)
    if (!(a.children[i] == b.children[i])) return false;
  return true;
}

Expr parse(std::string_view source) { return Parser(source).parse_all(); }

double eval(const Expr& e, const std::map<std::string, double>& bindings) {
  const auto& n = e.node();
  switch (n.kind) {
    case Expr::Kind::Number: return n.value;
    case Expr::Kind::Variable: {
      auto it = bindings.find(n.name);
      if (it == bindings.end()) throw EvalError("unbound variable '" + n.name + "'");
      return checked(it->second, n.name.c_str(), false);
    }
    case Expr::Kind::Negate: return -eval(n.children[0], bindings);
    case Expr::Kind::Binary:
      return apply_binary(n.op, eval(n.children[0], bindings), eval(n.children[1], bindings));
    case Expr::Kind::Call: {
      switch (n.func) {
        case Func::Min:
        case Func::Max: {
          double acc = eval(n.children[0], bindings);
          for (std::size_t i = 1; i < n.children.size(); ++i) {
            const double v = eval(n.children[i], bindings);
            acc = n.func == Func::Min ? std::min(acc, v) : std::max(acc, v);
          }
          return acc;
        }
        case Func::Pow: return apply_pow(eval(n.children[0], bindings), eval(n.children[1], bindings));
        default: return apply_unary(n.func, eval(n.children[0], bindings));
      }
    }
  }
  return 0.0;
}

std::set<std::string> free_vars(const Expr& e) {
  std::set<std::string> out;
  std::vector<const Expr*> stack{&e};
  while (!stack.empty()) {
    const Expr* cur = stack.back();
    stack.pop_back();
    if (cur->kind() == Expr::Kind::Variable) out.insert(cur->node().name);
    for (const auto& c : cur->node().children) stack.push_back(&c);
  }
  return out;
}

std::string to_string(const Expr& e) {
  std::string out;
  render(e, out);
  return out;
}

const char* function_name(Func f) {
  for (const auto& info : kFunctions)
    if (info.func == f) return info.name;
  return "?";
}

CompiledExpr::CompiledExpr(const Expr& e, std::span<const std::string> slots) : arity_(slots.size()) {
  emit(e, slots, 1);
}

void CompiledExpr::emit(const Expr& e, std::span<const std::string> slots, std::size_t depth) {
  max_depth_ = std::max(max_depth_, depth);
  const auto& n = e.node();
  switch (n.kind) {
    case Expr::Kind::Number: code_.push_back({Op::Push, 0, 0, n.value}); return;
    case Expr::Kind::Variable: {
      for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i] == n.name) {
          code_.push_back({Op::Load, 0, i, 0.0});
          return;
        }
      }
      throw EvalError("unbound variable '" + n.name + "'");
    }
    case Expr::Kind::Negate:
      emit(n.children[0], slots, depth);
      code_.push_back({Op::Neg});
      return;
    case Expr::Kind::Binary: {
      emit(n.children[0], slots, depth);
      emit(n.children[1], slots, depth + 1);
      static constexpr Op ops[] = {Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Pow};
      code_.push_back({ops[static_cast<int>(n.op)]});
      return;
    }
    case Expr::Kind::Call: {
      for (std::size_t i = 0; i < n.children.size(); ++i) emit(n.children[i], slots, depth + i);
      Op op = Op::Abs;
      switch (n.func) {
        case Func::Abs: op = Op::Abs; break;
        case Func::Sqrt: op = Op::Sqrt; break;
        case Func::Exp: op = Op::Exp; break;
        case Func::Ln: op = Op::Ln; break;
        case Func::Min: op = Op::Min; break;
        case Func::Max: op = Op::Max; break;
        case Func::Pow: op = Op::Pow; break;
      }
      code_.push_back({op, static_cast<unsigned short>(n.children.size())});
      return;
    }
  }
}

double CompiledExpr::operator()(std::span<const double> values) const {
  if (code_.empty()) throw EvalError("evaluating an empty expression");
  constexpr std::size_t kInline = 64;
  std::array<double, kInline> small{};
  std::vector<double> big;
  double* stack = small.data();
  if (max_depth_ > kInline) {
    big.resize(max_depth_);
    stack = big.data();
  }
  std::size_t sp = 0;
  for (const Instr& in : code_) {
    switch (in.op) {
      case Op::Push: stack[sp++] = in.value; break;
      case Op::Load: stack[sp++] = checked(values[in.slot], "input", false); break;
      case Op::Neg: stack[sp - 1] = -stack[sp - 1]; break;
      case Op::Add: --sp; stack[sp - 1] = apply_binary(BinaryOp::Add, stack[sp - 1], stack[sp]); break;
      case Op::Sub: --sp; stack[sp - 1] = apply_binary(BinaryOp::Sub, stack[sp - 1], stack[sp]); break;
      case Op::Mul: --sp; stack[sp - 1] = apply_binary(BinaryOp::Mul, stack[sp - 1], stack[sp]); break;
      case Op::Div: --sp; stack[sp - 1] = apply_binary(BinaryOp::Div, stack[sp - 1], stack[sp]); break;
      case Op::Pow: --sp; stack[sp - 1] = apply_pow(stack[sp - 1], stack[sp]); break;
      case Op::Abs: stack[sp - 1] = apply_unary(Func::Abs, stack[sp - 1]); break;
      case Op::Sqrt: stack[sp - 1] = apply_unary(Func::Sqrt, stack[sp - 1]); break;
      case Op::Exp: stack[sp - 1] = apply_unary(Func::Exp, stack[sp - 1]); break;
      case Op::Ln: stack[sp - 1] = apply_unary(Func::Ln, stack[sp - 1]); break;
      case Op::Min:
      case Op::Max: {
        const std::size_t base = sp - in.argc;
        double acc = stack[base];
        for (std::size_t i = base + 1; i < sp; ++i)
          acc = in.op == Op::Min ? std::min(acc, stack[i]) : std::max(acc, stack[i]);
        sp = base;
        stack[sp++] = acc;
        break;
      }
    }
  }
  return stack[0];
}

}  // namespace iss
