#pragma once

#include <stdexcept>
#include <string>

namespace shockfit {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define SHOCKFIT_ERROR(Name)                                   \
    class Name : public Error {                                \
    public:                                                    \
        explicit Name(const std::string& what) : Error(what) {} \
    }

SHOCKFIT_ERROR(VacuumError);
SHOCKFIT_ERROR(EntropyError);
SHOCKFIT_ERROR(DetachmentError);
SHOCKFIT_ERROR(ConvergenceError);
SHOCKFIT_ERROR(SupersonicInflowError);
SHOCKFIT_ERROR(StencilError);
SHOCKFIT_ERROR(GeometryError);
SHOCKFIT_ERROR(SingularJacobianError);
SHOCKFIT_ERROR(LineSearchError);
SHOCKFIT_ERROR(ConeError);
SHOCKFIT_ERROR(GraphError);
SHOCKFIT_ERROR(DegenerateError);
SHOCKFIT_ERROR(RadiusError);
SHOCKFIT_ERROR(NonTerminationError);
SHOCKFIT_ERROR(ConfigError);
SHOCKFIT_ERROR(KeyMismatchError);

#undef SHOCKFIT_ERROR

}  // namespace shockfit
