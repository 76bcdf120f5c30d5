#pragma once

#include <stdexcept>
#include <string>

namespace fieldloc {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

#define FIELDLOC_DEFINE_ERROR(Name)                                        \
    class Name : public Error                                              \
    {                                                                      \
    public:                                                                \
        explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
    }

// geometry
FIELDLOC_DEFINE_ERROR(CollinearityError);
FIELDLOC_DEFINE_ERROR(DegenerateCrossRatio);
FIELDLOC_DEFINE_ERROR(DegenerateDLT);
FIELDLOC_DEFINE_ERROR(PointAtInfinity);
FIELDLOC_DEFINE_ERROR(DegenerateFrame);

// vanishing points
FIELDLOC_DEFINE_ERROR(VPEstimationFailed);
FIELDLOC_DEFINE_ERROR(EllipseFitFailed);
FIELDLOC_DEFINE_ERROR(FallbackFailed);

// ray grid / accumulators
FIELDLOC_DEFINE_ERROR(VPInsideImage);
FIELDLOC_DEFINE_ERROR(OutOfGrid);
FIELDLOC_DEFINE_ERROR(RegionError);

// search
FIELDLOC_DEFINE_ERROR(EmptyBox);
FIELDLOC_DEFINE_ERROR(CannotBranch);
FIELDLOC_DEFINE_ERROR(TooLarge);

// learning / data
FIELDLOC_DEFINE_ERROR(TrainingError);
FIELDLOC_DEFINE_ERROR(SynthFailed);
FIELDLOC_DEFINE_ERROR(UndefinedIOU);
FIELDLOC_DEFINE_ERROR(InputError);

#undef FIELDLOC_DEFINE_ERROR

} // namespace fieldloc
