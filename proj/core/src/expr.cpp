#include "homlab/expr.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>

#include "homlab/error.hpp"

namespace homlab::expr {

namespace {

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Shared arithmetic so the tree walker and the compiled program agree bit for bit.
double apply_binary(BinaryOp op, double a, double b) {
    switch (op) {
        case BinaryOp::Add: return a + b;
        case BinaryOp::Sub: return a - b;
        case BinaryOp::Mul: return a * b;
        case BinaryOp::Div:
            if (b == 0.0) throw Error(ErrorKind::DivisionByZero, "division by zero");
            return a / b;
        case BinaryOp::Pow:
            if (a < 0.0 && std::trunc(b) != b)
                throw Error(ErrorKind::DomainError, "negative base with non-integer exponent");
            if (a == 0.0 && b < 0.0) throw Error(ErrorKind::DivisionByZero, "zero to a negative power");
            return std::pow(a, b);
    }
    return 0.0;
}

double apply_call(Function fn, double a, double b) {
    switch (fn) {
        case Function::Sin: return std::sin(a);
        case Function::Cos: return std::cos(a);
        case Function::Exp: return std::exp(a);
        case Function::Tanh: return std::tanh(a);
        case Function::Sqrt:
            if (a < 0.0) throw Error(ErrorKind::DomainError, "sqrt of a negative number");
            return std::sqrt(a);
        case Function::Abs: return std::fabs(a);
        case Function::Floor: return std::floor(a);
        case Function::Min: return std::min(a, b);
        case Function::Max: return std::max(a, b);
    }
    return 0.0;
}

struct FunctionEntry {
    std::string_view name;
    Function fn;
    int arity;
};

constexpr std::array<FunctionEntry, 9> kFunctions{{
    {"sin", Function::Sin, 1},
    {"cos", Function::Cos, 1},
    {"exp", Function::Exp, 1},
    {"tanh", Function::Tanh, 1},
    {"sqrt", Function::Sqrt, 1},
    {"abs", Function::Abs, 1},
    {"floor", Function::Floor, 1},
    {"min", Function::Min, 2},
    {"max", Function::Max, 2},
}};

const FunctionEntry* find_function(std::string_view name) {
    for (const auto& entry : kFunctions)
        if (entry.name == name) return &entry;
    return nullptr;
}

Expr make(Node node) { return Expr(std::make_shared<const Node>(std::move(node))); }

// Parses "x<k>" / "y<k>"; returns k or 0 when the name has another shape.
int indexed_name(std::string_view name, char prefix) {
    if (name.size() < 2 || name[0] != prefix) return 0;
    int k = 0;
    for (std::size_t i = 1; i < name.size(); ++i) {
        if (!is_digit(name[i])) return 0;
        if (k > 100000) return 0;
        k = 10 * k + (name[i] - '0');
    }
    if (name[1] == '0') return 0;
    return k;
}

// Binding powers. Unary minus sits between the multiplicative operators and '^'.
constexpr int kBpSum = 10;
constexpr int kBpProduct = 20;
constexpr int kBpUnary = 25;
constexpr int kBpPower = 30;
constexpr int kMaxDepth = 200;

class Parser {
public:
    Parser(std::span<const Token> tokens, int dim) : tokens_(tokens), dim_(dim) {}

    Expr parse_all() {
        Expr e = parse_expr(0);
        if (pos_ < tokens_.size())
            throw Error(ErrorKind::TrailingInput, "unexpected '" + tokens_[pos_].lexeme + "' after expression",
                        tokens_[pos_].position);
        return e;
    }

private:
    const Token* peek() const { return pos_ < tokens_.size() ? &tokens_[pos_] : nullptr; }

    std::size_t end_position() const {
        if (tokens_.empty()) return 0;
        const Token& last = tokens_.back();
        return last.position + last.lexeme.size();
    }

    const Token& next() {
        if (pos_ >= tokens_.size())
            throw Error(ErrorKind::UnexpectedToken, "unexpected end of input", end_position());
        return tokens_[pos_++];
    }

    void expect(TokenKind kind, std::string_view what) {
        const Token* t = peek();
        if (t == nullptr)
            throw Error(ErrorKind::UnexpectedToken, "expected " + std::string(what) + " at end of input",
                        end_position());
        if (t->kind != kind)
            throw Error(ErrorKind::UnexpectedToken,
                        "expected " + std::string(what) + ", found '" + t->lexeme + "'", t->position);
        ++pos_;
    }

    static int infix_bp(TokenKind kind) {
        switch (kind) {
            case TokenKind::Plus:
            case TokenKind::Minus: return kBpSum;
            case TokenKind::Star:
            case TokenKind::Slash: return kBpProduct;
            case TokenKind::Caret: return kBpPower;
            default: return -1;
        }
    }

    Expr parse_expr(int min_bp) {
        if (++depth_ > kMaxDepth) {
            const Token* t = peek();
            throw Error(ErrorKind::UnexpectedToken, "expression nested too deeply",
                        t != nullptr ? t->position : end_position());
        }
        Expr lhs = prefix();
        while (const Token* t = peek()) {
            const int bp = infix_bp(t->kind);
            if (bp < 0 || bp <= min_bp) break;
            ++pos_;
            BinaryOp op{};
            int rbp = bp;
            switch (t->kind) {
                case TokenKind::Plus: op = BinaryOp::Add; break;
                case TokenKind::Minus: op = BinaryOp::Sub; break;
                case TokenKind::Star: op = BinaryOp::Mul; break;
                case TokenKind::Slash: op = BinaryOp::Div; break;
                default:
                    op = BinaryOp::Pow;
                    // right associative, and the exponent may carry a unary minus
                    rbp = kBpPower - 1;
                    break;
            }
            Expr rhs = parse_expr(rbp);
            lhs = make(Node{Binary{op, lhs, rhs}});
        }
        --depth_;
        return lhs;
    }

    Expr prefix() {
        const Token& t = next();
        switch (t.kind) {
            case TokenKind::Number: {
                double v = std::strtod(t.lexeme.c_str(), nullptr);
                return make(Node{Constant{v, {}}});
            }
            case TokenKind::Minus: return make(Node{Negate{parse_expr(kBpUnary)}});
            case TokenKind::LParen: {
                Expr inner = parse_expr(0);
                expect(TokenKind::RParen, "')'");
                return inner;
            }
            case TokenKind::Identifier: return identifier(t);
            default:
                throw Error(ErrorKind::UnexpectedToken, "unexpected '" + t.lexeme + "'", t.position);
        }
    }

    Expr identifier(const Token& t) {
        const Token* after = peek();
        if (after != nullptr && after->kind == TokenKind::LParen) {
            const FunctionEntry* entry = find_function(t.lexeme);
            if (entry == nullptr)
                throw Error(ErrorKind::UnknownFunction, "unknown function '" + t.lexeme + "'", t.position);
            ++pos_;
            std::vector<Expr> args;
            if (peek() != nullptr && peek()->kind == TokenKind::RParen) {
                ++pos_;
            } else {
                for (;;) {
                    args.push_back(parse_expr(0));
                    const Token& sep = next();
                    if (sep.kind == TokenKind::RParen) break;
                    if (sep.kind != TokenKind::Comma)
                        throw Error(ErrorKind::UnexpectedToken, "expected ',' or ')', found '" + sep.lexeme + "'",
                                    sep.position);
                }
            }
            if (static_cast<int>(args.size()) != entry->arity)
                throw Error(ErrorKind::BadArity,
                            std::string(entry->name) + " takes " + std::to_string(entry->arity) +
                                " argument(s), got " + std::to_string(args.size()),
                            t.position);
            return make(Node{Call{entry->fn, std::move(args)}});
        }
        if (t.lexeme == "pi") return make(Node{Constant{std::numbers::pi, "pi"}});
        if (t.lexeme == "e") return make(Node{Constant{std::numbers::e, "e"}});
        if (t.lexeme == "t" || t.lexeme == "u") return make(Node{Variable{t.lexeme}});
        for (char prefix : {'x', 'y'}) {
            const int k = indexed_name(t.lexeme, prefix);
            if (k > 0) {
                if (k > dim_)
                    throw Error(ErrorKind::VariableOutOfRange,
                                "'" + t.lexeme + "' exceeds dimension " + std::to_string(dim_), t.position);
                return make(Node{Variable{t.lexeme}});
            }
        }
        if (find_function(t.lexeme) != nullptr)
            throw Error(ErrorKind::UnexpectedToken, "function '" + t.lexeme + "' used without arguments",
                        t.position);
        throw Error(ErrorKind::UnknownVariable, "unknown name '" + t.lexeme + "'", t.position);
    }

    std::span<const Token> tokens_;
    int dim_;
    std::size_t pos_ = 0;
    int depth_ = 0;
};

void collect_variables(const Expr& e, std::set<std::string>& out) {
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, Variable>) {
                out.insert(n.name);
            } else if constexpr (std::is_same_v<T, Negate>) {
                collect_variables(n.operand, out);
            } else if constexpr (std::is_same_v<T, Binary>) {
                collect_variables(n.lhs, out);
                collect_variables(n.rhs, out);
            } else if constexpr (std::is_same_v<T, Call>) {
                for (const auto& a : n.args) collect_variables(a, out);
            }
        },
        e.node().value);
}

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

char op_char(BinaryOp op) {
    switch (op) {
        case BinaryOp::Add: return '+';
        case BinaryOp::Sub: return '-';
        case BinaryOp::Mul: return '*';
        case BinaryOp::Div: return '/';
        case BinaryOp::Pow: return '^';
    }
    return '?';
}

}  // namespace

std::string_view name_of(Function fn) noexcept {
    for (const auto& entry : kFunctions)
        if (entry.fn == fn) return entry.name;
    return "?";
}

int arity_of(Function fn) noexcept {
    for (const auto& entry : kFunctions)
        if (entry.fn == fn) return entry.arity;
    return 0;
}

std::vector<Token> tokenize(std::string_view src) {
    std::vector<Token> out;
    std::size_t i = 0;
    const std::size_t n = src.size();
    while (i < n) {
        const char c = src[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        const std::size_t start = i;
        if (is_digit(c)) {
            while (i < n && is_digit(src[i])) ++i;
            if (i < n && src[i] == '.') {
                if (i + 1 >= n || !is_digit(src[i + 1]))
                    throw Error(ErrorKind::MalformedNumber, "expected digit after '.'", i);
                ++i;
                while (i < n && is_digit(src[i])) ++i;
            }
            if (i < n && (src[i] == 'e' || src[i] == 'E')) {
                std::size_t j = i + 1;
                if (j < n && (src[j] == '+' || src[j] == '-')) ++j;
                if (j >= n || !is_digit(src[j]))
                    throw Error(ErrorKind::MalformedNumber, "expected exponent digits", i);
                i = j;
                while (i < n && is_digit(src[i])) ++i;
            }
            // "1.5.2" or "2.3e4.1": a number may not run straight into another '.'
            if (i < n && src[i] == '.') throw Error(ErrorKind::MalformedNumber, "unexpected '.' in number", i);
            out.push_back({TokenKind::Number, std::string(src.substr(start, i - start)), start});
            continue;
        }
        if (is_ident_start(c)) {
            while (i < n && is_ident_char(src[i])) ++i;
            out.push_back({TokenKind::Identifier, std::string(src.substr(start, i - start)), start});
            continue;
        }
        TokenKind kind;
        switch (c) {
            case '+': kind = TokenKind::Plus; break;
            case '-': kind = TokenKind::Minus; break;
            case '*': kind = TokenKind::Star; break;
            case '/': kind = TokenKind::Slash; break;
            case '^': kind = TokenKind::Caret; break;
            case '(': kind = TokenKind::LParen; break;
            case ')': kind = TokenKind::RParen; break;
            case ',': kind = TokenKind::Comma; break;
            default:
                throw Error(ErrorKind::UnexpectedCharacter, std::string("unexpected character '") + c + "'", i);
        }
        out.push_back({kind, std::string(1, c), start});
        ++i;
    }
    return out;
}

Expr parse(std::span<const Token> tokens, int dim) { return Parser(tokens, dim).parse_all(); }

Expr parse_expression(std::string_view source, int dim) {
    const auto tokens = tokenize(source);
    return parse(tokens, dim);
}

bool operator==(const Expr& a, const Expr& b) {
    if (a.empty() || b.empty()) return a.empty() == b.empty();
    const auto& va = a.node().value;
    const auto& vb = b.node().value;
    if (va.index() != vb.index()) return false;
    return std::visit(
        [&](const auto& x) -> bool {
            using T = std::decay_t<decltype(x)>;
            const T& y = std::get<T>(vb);
            if constexpr (std::is_same_v<T, Constant>) {
                return x.value == y.value && x.name == y.name;
            } else if constexpr (std::is_same_v<T, Variable>) {
                return x.name == y.name;
            } else if constexpr (std::is_same_v<T, Negate>) {
                return x.operand == y.operand;
            } else if constexpr (std::is_same_v<T, Binary>) {
                return x.op == y.op && x.lhs == y.lhs && x.rhs == y.rhs;
            } else {
                if (x.fn != y.fn || x.args.size() != y.args.size()) return false;
                for (std::size_t i = 0; i < x.args.size(); ++i)
                    if (!(x.args[i] == y.args[i])) return false;
                return true;
            }
        },
        va);
}

double eval(const Expr& e, const Environment& env) {
    return std::visit(
        [&](const auto& n) -> double {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, Constant>) {
                return n.value;
            } else if constexpr (std::is_same_v<T, Variable>) {
                auto it = env.find(n.name);
                if (it == env.end()) throw Error(ErrorKind::UnboundVariable, "'" + n.name + "' is not bound");
                return it->second;
            } else if constexpr (std::is_same_v<T, Negate>) {
                return -eval(n.operand, env);
            } else if constexpr (std::is_same_v<T, Binary>) {
                const double a = eval(n.lhs, env);
                const double b = eval(n.rhs, env);
                return apply_binary(n.op, a, b);
            } else {
                const double a = eval(n.args[0], env);
                const double b = n.args.size() > 1 ? eval(n.args[1], env) : 0.0;
                return apply_call(n.fn, a, b);
            }
        },
        e.node().value);
}

std::string to_string(const Expr& e) {
    return std::visit(
        [&](const auto& n) -> std::string {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, Constant>) {
                return n.name.empty() ? format_number(n.value) : n.name;
            } else if constexpr (std::is_same_v<T, Variable>) {
                return n.name;
            } else if constexpr (std::is_same_v<T, Negate>) {
                return "(-" + to_string(n.operand) + ")";
            } else if constexpr (std::is_same_v<T, Binary>) {
                return "(" + to_string(n.lhs) + " " + op_char(n.op) + " " + to_string(n.rhs) + ")";
            } else {
                std::string s(name_of(n.fn));
                s += '(';
                for (std::size_t i = 0; i < n.args.size(); ++i) {
                    if (i > 0) s += ", ";
                    s += to_string(n.args[i]);
                }
                s += ')';
                return s;
            }
        },
        e.node().value);
}

std::set<std::string> variables(const Expr& e) {
    std::set<std::string> out;
    collect_variables(e, out);
    return out;
}

bool is_constant(const Expr& e) { return variables(e).empty(); }

int SlotLayout::slot_of(std::string_view name) const noexcept {
    if (name == "t") return t();
    if (name == "u") return u();
    if (int k = indexed_name(name, 'x'); k > 0 && k <= dim) return x(k - 1);
    if (int k = indexed_name(name, 'y'); k > 0 && k <= dim) return y(k - 1);
    return -1;
}

namespace {

struct Compiler {
    SlotLayout layout;
    std::vector<Program::Instr> code;
    int depth = 0;
    int max_depth = 0;

    void push_depth(int delta) {
        depth += delta;
        max_depth = std::max(max_depth, depth);
    }

    // Constant subtrees become a single Push of the value the tree evaluator computes.
    // A subtree that fails to evaluate is compiled as is, so the error surfaces per call.
    void emit(const Expr& e) {
        if (is_constant(e)) {
            bool folded = true;
            double v = 0.0;
            try {
                v = eval(e, {});
            } catch (const Error&) {
                folded = false;
            }
            if (folded) {
                code.push_back({Program::Op::Push, 0, 0, v});
                push_depth(1);
                return;
            }
        }
        std::visit(
            [&](const auto& n) {
                using T = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<T, Constant>) {
                    code.push_back({Program::Op::Push, 0, 0, n.value});
                    push_depth(1);
                } else if constexpr (std::is_same_v<T, Variable>) {
                    const int slot = layout.slot_of(n.name);
                    if (slot < 0) throw Error(ErrorKind::UnboundVariable, "'" + n.name + "' has no slot");
                    code.push_back({Program::Op::Load, 0, slot, 0.0});
                    push_depth(1);
                } else if constexpr (std::is_same_v<T, Negate>) {
                    emit(n.operand);
                    code.push_back({Program::Op::Neg, 0, 0, 0.0});
                } else if constexpr (std::is_same_v<T, Binary>) {
                    emit(n.lhs);
                    emit(n.rhs);
                    Program::Op op = Program::Op::Add;
                    switch (n.op) {
                        case BinaryOp::Add: op = Program::Op::Add; break;
                        case BinaryOp::Sub: op = Program::Op::Sub; break;
                        case BinaryOp::Mul: op = Program::Op::Mul; break;
                        case BinaryOp::Div: op = Program::Op::Div; break;
                        case BinaryOp::Pow: op = Program::Op::Pow; break;
                    }
                    code.push_back({op, 0, 0, 0.0});
                    push_depth(-1);
                } else {
                    for (const auto& a : n.args) emit(a);
                    const bool two = n.args.size() > 1;
                    code.push_back({two ? Program::Op::Call2 : Program::Op::Call1,
                                    static_cast<unsigned char>(n.fn), 0, 0.0});
                    if (two) push_depth(-1);
                }
            },
            e.node().value);
    }
};

constexpr int kStackSize = 64;

}  // namespace

Program::Program(const Expr& expr, SlotLayout layout) {
    if (expr::is_constant(expr)) {
        try {
            value_ = eval(expr, {});
            constant_ = true;
            code_.push_back({Op::Push, 0, 0, value_});
            max_depth_ = 1;
            return;
        } catch (const Error&) {
        }
    }
    constant_ = false;
    Compiler c{layout, {}, 0, 0};
    c.emit(expr);
    code_ = std::move(c.code);
    max_depth_ = c.max_depth;
}

double Program::operator()(std::span<const double> slots) const {
    if (constant_) return value_;
    std::array<double, kStackSize> small;
    small[0] = 0.0;
    std::vector<double> large;
    double* stack = small.data();
    if (max_depth_ > kStackSize) {
        large.resize(static_cast<std::size_t>(max_depth_));
        stack = large.data();
    }
    int top = -1;
    for (const Instr& ins : code_) {
        switch (ins.op) {
            case Op::Push: stack[++top] = ins.value; break;
            case Op::Load: stack[++top] = slots[static_cast<std::size_t>(ins.slot)]; break;
            case Op::Neg: stack[top] = -stack[top]; break;
            case Op::Add: --top; stack[top] = stack[top] + stack[top + 1]; break;
            case Op::Sub: --top; stack[top] = stack[top] - stack[top + 1]; break;
            case Op::Mul: --top; stack[top] = stack[top] * stack[top + 1]; break;
            case Op::Div: --top; stack[top] = apply_binary(BinaryOp::Div, stack[top], stack[top + 1]); break;
            case Op::Pow: --top; stack[top] = apply_binary(BinaryOp::Pow, stack[top], stack[top + 1]); break;
            case Op::Call1: stack[top] = apply_call(static_cast<Function>(ins.fn), stack[top], 0.0); break;
            case Op::Call2:
                --top;
                stack[top] = apply_call(static_cast<Function>(ins.fn), stack[top], stack[top + 1]);
                break;
        }
    }
    return stack[0];
}

}  // namespace homlab::expr
