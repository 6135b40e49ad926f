#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hero {

enum class Errc {
    BadMagic,
    CorruptHeader,
    ShapeMismatch,
    NonFiniteValue,
    InvariantViolation,
    ZeroNorm,
    EmptyInput,
    DimensionMismatch,
    IndexOutOfRange,
    MissingTextEmbedding,
    MissingClipEmbedding,
    AlphaOutOfRange,
    RatioOutOfRange,
    ScoresNotNormalized,
    LayerOutOfRange,
    QuotaExceedsN,
    EmptyCorpus,
    InvalidSpec,
    TooLarge,
    InvalidProfile,
    InvalidConfig,
    IoError,
};

constexpr std::string_view to_string(Errc code) noexcept {
    switch (code) {
        case Errc::BadMagic: return "BadMagic";
        case Errc::CorruptHeader: return "CorruptHeader";
        case Errc::ShapeMismatch: return "ShapeMismatch";
        case Errc::NonFiniteValue: return "NonFiniteValue";
        case Errc::InvariantViolation: return "InvariantViolation";
        case Errc::ZeroNorm: return "ZeroNorm";
        case Errc::EmptyInput: return "EmptyInput";
        case Errc::DimensionMismatch: return "DimensionMismatch";
        case Errc::IndexOutOfRange: return "IndexOutOfRange";
        case Errc::MissingTextEmbedding: return "MissingTextEmbedding";
        case Errc::MissingClipEmbedding: return "MissingClipEmbedding";
        case Errc::AlphaOutOfRange: return "AlphaOutOfRange";
        case Errc::RatioOutOfRange: return "RatioOutOfRange";
        case Errc::ScoresNotNormalized: return "ScoresNotNormalized";
        case Errc::LayerOutOfRange: return "LayerOutOfRange";
        case Errc::QuotaExceedsN: return "QuotaExceedsN";
        case Errc::EmptyCorpus: return "EmptyCorpus";
        case Errc::InvalidSpec: return "InvalidSpec";
        case Errc::TooLarge: return "TooLarge";
        case Errc::InvalidProfile: return "InvalidProfile";
        case Errc::InvalidConfig: return "InvalidConfig";
        case Errc::IoError: return "IoError";
    }
    return "Unknown";
}

/// Every failure raised by the library. The message is prefixed with the
/// error code name so diagnostics stay greppable.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), m_code(code), m_detail(what) {}

    [[nodiscard]] Errc code() const noexcept { return m_code; }
    /// Message without the code prefix, for re-wrapping with more context.
    [[nodiscard]] const std::string& detail() const noexcept { return m_detail; }

private:
    Errc m_code;
    std::string m_detail;
};

}  // namespace hero
