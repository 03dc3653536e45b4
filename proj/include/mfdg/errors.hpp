#pragma once

#include <stdexcept>
#include <string>

namespace mfdg {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// torus
struct InvalidPoint : Error { using Error::Error; };
struct DimError : Error { using Error::Error; };

// measure
struct InvalidMeasure : Error { using Error::Error; };
struct OracleTooLarge : Error { using Error::Error; };
struct DegenerateMarginal : Error { using Error::Error; };
struct InvalidKernel : Error { using Error::Error; };

// control
struct UnknownAtom : Error { using Error::Error; };
struct IncompleteResponse : Error { using Error::Error; };
struct SearchSpaceTooLarge : Error { using Error::Error; };

// dynamics
struct DynamicsError : Error { using Error::Error; };
struct FlowDomainError : Error { using Error::Error; };
struct StepTooLarge : Error { using Error::Error; };

// shift / engine
struct PlanMismatch : Error { using Error::Error; };
struct GridError : Error { using Error::Error; };

// pim
struct GraphTooLarge : Error { using Error::Error; };
struct TableIncomplete : Error { using Error::Error; };

// cli / io
struct ConfigError : Error { using Error::Error; };

}  // namespace mfdg
