#pragma once

#include <stdexcept>
#include <string>

namespace dispel {

/// Base of every error raised by the library. `kind()` is a stable short tag
/// used in machine-parsable CLI error lines.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define DISPEL_DEFINE_ERROR(Name, tag)                                   \
    class Name : public Error {                                          \
    public:                                                              \
        explicit Name(const std::string& what) : Error(tag, what) {}     \
    };

DISPEL_DEFINE_ERROR(DimensionError, "dimension")
DISPEL_DEFINE_ERROR(DomainError, "domain")
DISPEL_DEFINE_ERROR(NumericError, "numeric")
DISPEL_DEFINE_ERROR(UsageError, "usage")
DISPEL_DEFINE_ERROR(ContractError, "contract")
DISPEL_DEFINE_ERROR(CorruptFileError, "corrupt_file")
DISPEL_DEFINE_ERROR(ParseError, "parse")
DISPEL_DEFINE_ERROR(ConfigError, "config")
DISPEL_DEFINE_ERROR(DegenerateDataError, "degenerate_data")
DISPEL_DEFINE_ERROR(IoError, "io")
DISPEL_DEFINE_ERROR(MissingArtifactError, "missing_artifact")

#undef DISPEL_DEFINE_ERROR

}  // namespace dispel
