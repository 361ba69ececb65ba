#pragma once

#include <stdexcept>
#include <string>

namespace qfluid
{
    /// Base class of every error raised by the library.
    struct Error : std::runtime_error
    {
        using std::runtime_error::runtime_error;
    };

    /// Bad parameters: distribution literals, configs, probe sets.
    struct InvalidArgument : Error
    {
        using Error::Error;
    };

    /// A fluid initial condition that violates the validity constraints.
    struct InvalidInitialCondition : Error
    {
        using Error::Error;
    };

    /// The per-step inner fixed-point iteration hit its cap.
    struct NoConvergence : Error
    {
        using Error::Error;
    };

    /// A post-hoc structural check on a fluid solution failed.
    struct InvariantViolation : Error
    {
        using Error::Error;
    };
}
