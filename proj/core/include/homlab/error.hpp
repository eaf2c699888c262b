#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace homlab {

enum class ErrorKind {
    // expression language
    UnexpectedCharacter,
    MalformedNumber,
    UnexpectedToken,
    UnknownFunction,
    UnknownVariable,
    BadArity,
    VariableOutOfRange,
    TrailingInput,
    DivisionByZero,
    DomainError,
    UnboundVariable,
    // geometry
    DegeneratePoint,
    // problem loading
    SchemaError,
    ParseError,
    DimensionMismatch,
    NonNegativeBeta,
    // cell problem
    SolverDiverged,
    CenteringViolated,
    NonEllipticEffective,
    NoBoundaryMass,
    // forward simulation
    StepSizeTooLarge,
    NonFiniteState,
    TangentialReflection,
    // backward solvers
    SingularRegression,
    ObstacleInconsistent,
    // finite differences
    SORDiverged,
    NewtonDiverged,
    // harness
    ConfigError,
    IoError,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// True for errors that mean "the input problem is unacceptable" as opposed
/// to "a numerical method failed on an acceptable input".
bool is_validation_error(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message,
          std::optional<std::size_t> position = std::nullopt)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message),
          kind_(kind), position_(position) {}

    ErrorKind kind() const noexcept { return kind_; }
    /// Byte offset into the source text, for lexer and parser errors.
    std::optional<std::size_t> position() const noexcept { return position_; }

private:
    ErrorKind kind_;
    std::optional<std::size_t> position_;
};

/// Wraps an error raised while processing a named configuration field.
/// The original kind is kept as `cause()`.
class FieldError : public Error {
public:
    FieldError(ErrorKind kind, std::string field, const Error& inner)
        : Error(kind, field + ": " + inner.what(), inner.position()),
          field_(std::move(field)), cause_(inner.kind()) {}

    const std::string& field() const noexcept { return field_; }
    ErrorKind cause() const noexcept { return cause_; }

private:
    std::string field_;
    ErrorKind cause_;
};

}  // namespace homlab
