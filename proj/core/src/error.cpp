#include "homlab/error.hpp"

namespace homlab {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::UnexpectedCharacter: return "UnexpectedCharacter";
        case ErrorKind::MalformedNumber: return "MalformedNumber";
        case ErrorKind::UnexpectedToken: return "UnexpectedToken";
        case ErrorKind::UnknownFunction: return "UnknownFunction";
        case ErrorKind::UnknownVariable: return "UnknownVariable";
        case ErrorKind::BadArity: return "BadArity";
        case ErrorKind::VariableOutOfRange: return "VariableOutOfRange";
        case ErrorKind::TrailingInput: return "TrailingInput";
        case ErrorKind::DivisionByZero: return "DivisionByZero";
        case ErrorKind::DomainError: return "DomainError";
        case ErrorKind::UnboundVariable: return "UnboundVariable";
        case ErrorKind::DegeneratePoint: return "DegeneratePoint";
        case ErrorKind::SchemaError: return "SchemaError";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::NonNegativeBeta: return "NonNegativeBeta";
        case ErrorKind::SolverDiverged: return "SolverDiverged";
        case ErrorKind::CenteringViolated: return "CenteringViolated";
        case ErrorKind::NonEllipticEffective: return "NonEllipticEffective";
        case ErrorKind::NoBoundaryMass: return "NoBoundaryMass";
        case ErrorKind::StepSizeTooLarge: return "StepSizeTooLarge";
        case ErrorKind::NonFiniteState: return "NonFiniteState";
        case ErrorKind::TangentialReflection: return "TangentialReflection";
        case ErrorKind::SingularRegression: return "SingularRegression";
        case ErrorKind::ObstacleInconsistent: return "ObstacleInconsistent";
        case ErrorKind::SORDiverged: return "SORDiverged";
        case ErrorKind::NewtonDiverged: return "NewtonDiverged";
        case ErrorKind::ConfigError: return "ConfigError";
        case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

bool is_validation_error(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::SchemaError:
        case ErrorKind::ParseError:
        case ErrorKind::DimensionMismatch:
        case ErrorKind::NonNegativeBeta:
        case ErrorKind::CenteringViolated:
        case ErrorKind::ConfigError:
        case ErrorKind::UnexpectedCharacter:
        case ErrorKind::MalformedNumber:
        case ErrorKind::UnexpectedToken:
        case ErrorKind::UnknownFunction:
        case ErrorKind::UnknownVariable:
        case ErrorKind::BadArity:
        case ErrorKind::VariableOutOfRange:
        case ErrorKind::TrailingInput:
            return true;
        default:
            return false;
    }
}

}  // namespace homlab
