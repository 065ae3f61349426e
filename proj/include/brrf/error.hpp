#ifndef BRRF_ERROR_HPP
#define BRRF_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace brrf {

enum class Errc {
    MagicMismatch,
    TruncatedPayload,
    NonFiniteValue,
    InvalidShape,
    KindMismatch,
    IoFailure,
    ChannelCountMismatch,
    ShrinkRequested,
    DegenerateInput,
    DimMismatch,
    NotAdjacent,
    EmptyHierarchy,
    SingleClass,
    SchemaVersionMismatch,
    SingleSegmentImage,
    InvalidArgument,
    InvariantViolation,
};

constexpr std::string_view errc_name(Errc code) {
    switch (code) {
    case Errc::MagicMismatch: return "MagicMismatch";
    case Errc::TruncatedPayload: return "TruncatedPayload";
    case Errc::NonFiniteValue: return "NonFiniteValue";
    case Errc::InvalidShape: return "InvalidShape";
    case Errc::KindMismatch: return "KindMismatch";
    case Errc::IoFailure: return "IoFailure";
    case Errc::ChannelCountMismatch: return "ChannelCountMismatch";
    case Errc::ShrinkRequested: return "ShrinkRequested";
    case Errc::DegenerateInput: return "DegenerateInput";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::NotAdjacent: return "NotAdjacent";
    case Errc::EmptyHierarchy: return "EmptyHierarchy";
    case Errc::SingleClass: return "SingleClass";
    case Errc::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case Errc::SingleSegmentImage: return "SingleSegmentImage";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::InvariantViolation: return "InvariantViolation";
    }
    return "Unknown";
}

/// Every failure raised by the library carries a machine-readable code; the
/// CLI prints errc_name() so scripts can match on it.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}

#endif
