#pragma once

#include <stdexcept>
#include <string>

namespace tsc {

// Base of every error raised by the library. Callers that only need to know
// "something in the benchmark failed" catch this.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define TSC_DEFINE_ERROR(Name)              \
    class Name : public Error {             \
    public:                                 \
        using Error::Error;                 \
    }

// files
TSC_DEFINE_ERROR(IoError);

// roadnet / flow
TSC_DEFINE_ERROR(SchemaError);
TSC_DEFINE_ERROR(TopologyError);
TSC_DEFINE_ERROR(UnknownPreset);
TSC_DEFINE_ERROR(RouteError);

// sim
TSC_DEFINE_ERROR(InvalidPhase);
TSC_DEFINE_ERROR(DrainTimeout);

// nn / agent
TSC_DEFINE_ERROR(ShapeError);
TSC_DEFINE_ERROR(EmptySet);
TSC_DEFINE_ERROR(EmptyPhase);
TSC_DEFINE_ERROR(EmptyBuffer);
TSC_DEFINE_ERROR(ShapeMismatch);

// policy
TSC_DEFINE_ERROR(MissingLane);

// metrics
TSC_DEFINE_ERROR(UnfinishedVehicles);
TSC_DEFINE_ERROR(DivisionDomain);

// experiment configuration
TSC_DEFINE_ERROR(ConfigError);

#undef TSC_DEFINE_ERROR

} // namespace tsc
