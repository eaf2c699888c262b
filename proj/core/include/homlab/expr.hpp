#pragma once

// Coefficient expression language: tokenizer, Pratt parser, tree evaluator
// and a flat compiled form for hot loops.
//
// Grammar (lowest to highest precedence):
//   sum     := product (('+' | '-') product)*
//   product := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := atom ('^' unary)?            right associative
//   atom    := number | name | name '(' args ')' | '(' sum ')'

#include <cstddef>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace homlab::expr {

enum class TokenKind { Number, Identifier, Plus, Minus, Star, Slash, Caret, LParen, RParen, Comma };

struct Token {
    TokenKind kind;
    std::string lexeme;
    std::size_t position;

    bool operator==(const Token&) const = default;
};

std::vector<Token> tokenize(std::string_view source);

enum class BinaryOp { Add, Sub, Mul, Div, Pow };
enum class Function { Sin, Cos, Exp, Tanh, Sqrt, Abs, Floor, Min, Max };

std::string_view name_of(Function fn) noexcept;
int arity_of(Function fn) noexcept;

struct Node;

/// Immutable, cheaply copyable handle to an expression tree.
class Expr {
public:
    Expr() = default;
    explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

    const Node& node() const { return *node_; }
    bool empty() const noexcept { return node_ == nullptr; }

private:
    std::shared_ptr<const Node> node_;
};

struct Constant {
    double value;
    std::string name;  // "pi", "e", or empty for a numeric literal
};
struct Variable {
    std::string name;
};
struct Negate {
    Expr operand;
};
struct Binary {
    BinaryOp op;
    Expr lhs;
    Expr rhs;
};
struct Call {
    Function fn;
    std::vector<Expr> args;
};

struct Node {
    std::variant<Constant, Variable, Negate, Binary, Call> value;
};

bool operator==(const Expr& a, const Expr& b);

/// Parses a token stream. `dim` bounds the indices of x1..xd and y1..yd;
/// `t` and `u` are always accepted.
Expr parse(std::span<const Token> tokens, int dim);

/// tokenize + parse.
Expr parse_expression(std::string_view source, int dim);

using Environment = std::map<std::string, double, std::less<>>;

double eval(const Expr& expr, const Environment& env);

/// Fully parenthesised rendering that parses back to the same tree.
std::string to_string(const Expr& expr);

/// Names of all variables referenced by the expression.
std::set<std::string> variables(const Expr& expr);

/// True when the expression references no variables.
bool is_constant(const Expr& expr);

/// Slot layout shared by every compiled coefficient:
///   [x1..xd, y1..yd, t, u]
struct SlotLayout {
    int dim = 1;

    int size() const noexcept { return 2 * dim + 2; }
    int x(int i) const noexcept { return i; }
    int y(int i) const noexcept { return dim + i; }
    int t() const noexcept { return 2 * dim; }
    int u() const noexcept { return 2 * dim + 1; }
    /// Slot index for a vocabulary name, or -1.
    int slot_of(std::string_view name) const noexcept;
};

/// Postfix program compiled from an Expr. Produces results bit-identical to
/// eval() for the same bindings; constant subtrees are folded.
class Program {
public:
    Program() = default;
    Program(const Expr& expr, SlotLayout layout);

    double operator()(std::span<const double> slots) const;

    bool is_constant() const noexcept { return constant_; }
    double constant_value() const noexcept { return value_; }

    enum class Op : unsigned char { Push, Load, Neg, Add, Sub, Mul, Div, Pow, Call1, Call2 };
    struct Instr {
        Op op;
        unsigned char fn;
        int slot;
        double value;
    };

private:
    std::vector<Instr> code_;
    int max_depth_ = 0;
    bool constant_ = true;
    double value_ = 0.0;
};

}  // namespace homlab::expr
