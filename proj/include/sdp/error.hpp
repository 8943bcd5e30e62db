// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace sdp {

/// Base class for every pipeline failure. `name()` is the stable error
/// identifier (e.g. "BadMagic") surfaced by the CLI.
class Error : public std::runtime_error {
public:
    Error(std::string name, const std::string& what)
        : std::runtime_error(what), name_(std::move(name)) {}

    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

#define SDP_DEFINE_ERROR(Type)                                              \
    class Type : public Error {                                             \
    public:                                                                 \
        explicit Type(const std::string& what) : Error(#Type, what) {}      \
    }

SDP_DEFINE_ERROR(InvalidArgument);
SDP_DEFINE_ERROR(ZeroMagnitudeSubcarrier);
SDP_DEFINE_ERROR(DegenerateBand);
SDP_DEFINE_ERROR(IdenticalClassSignatures);
SDP_DEFINE_ERROR(BadMagic);
SDP_DEFINE_ERROR(UnsupportedVersion);
SDP_DEFINE_ERROR(TruncatedFile);
SDP_DEFINE_ERROR(ShapeMismatch);
SDP_DEFINE_ERROR(IoError);
SDP_DEFINE_ERROR(ParseError);
SDP_DEFINE_ERROR(EmptyTrain);
SDP_DEFINE_ERROR(EmptySplit);
SDP_DEFINE_ERROR(NonFiniteLoss);
SDP_DEFINE_ERROR(SequenceTooLong);
SDP_DEFINE_ERROR(EventClassMissing);
SDP_DEFINE_ERROR(SampleRateMismatch);

#undef SDP_DEFINE_ERROR

}  // namespace sdp
