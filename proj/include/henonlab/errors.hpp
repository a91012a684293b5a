#pragma once
#include <stdexcept>
#include <string>

namespace henon {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define HENON_ERROR(Name) \
    struct Name : Error { using Error::Error; }

HENON_ERROR(NoRealRootError);
HENON_ERROR(OverflowError);
HENON_ERROR(IsotropyError);
HENON_ERROR(TubeExitError);
HENON_ERROR(HypothesisError);
HENON_ERROR(NonHyperbolicError);
HENON_ERROR(ResamplingError);
HENON_ERROR(NoBindingError);
HENON_ERROR(ResolutionError);
HENON_ERROR(DivergenceError);
HENON_ERROR(EmptyPartitionError);
HENON_ERROR(EmptyIntersectionError);
HENON_ERROR(VersionError);
HENON_ERROR(ChecksumError);
HENON_ERROR(ConfigError);

#undef HENON_ERROR

}  // namespace henon
