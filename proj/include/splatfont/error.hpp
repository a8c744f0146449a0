#pragma once

#include <stdexcept>
#include <string>

namespace splatfont {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define SPLATFONT_DEFINE_ERROR(Name)                                          \
    class Name : public Error {                                               \
    public:                                                                   \
        explicit Name(const std::string& what) : Error(#Name ": " + what) {}  \
    }

// gsplat-core
SPLATFONT_DEFINE_ERROR(BehindCamera);
SPLATFONT_DEFINE_ERROR(DegenerateCovariance);
SPLATFONT_DEFINE_ERROR(StaleForward);

// glyph2cloud
SPLATFONT_DEFINE_ERROR(ShapeMismatch);
SPLATFONT_DEFINE_ERROR(EmptyMask);

// dca
SPLATFONT_DEFINE_ERROR(ZeroMass);

// sds-optimizer
SPLATFONT_DEFINE_ERROR(NoTarget);
SPLATFONT_DEFINE_ERROR(ProviderFailure);

// I/O and configuration
SPLATFONT_DEFINE_ERROR(IoError);
SPLATFONT_DEFINE_ERROR(FormatError);
SPLATFONT_DEFINE_ERROR(ConfigError);

#undef SPLATFONT_DEFINE_ERROR

} // namespace splatfont
