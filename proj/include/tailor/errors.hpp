// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace tailor {

// Error taxonomy shared by the library and the CLI exit-code mapping.
// User-facing input problems (bad recipe, bad geometry, missing files)
// map to exit code 1; violated internal invariants map to exit code 2.
enum class ErrorKind {
    InvalidModule,      // module does not exist for this model spec
    Geometry,           // length/shape/rank-count mismatch
    NonFinite,          // non-finite gradient fed to the optimizer
    Recipe,             // recipe schema or coverage violation
    SourceLacksModule,  // source checkpoint manifest misses a requested module
    MissingArtifact,    // expected file absent
    CorruptContainer,   // container header/payload disagreement
    UnrecoverableModule,// module never saved before the failure step
    MissingModules,     // resume attempted from a partial checkpoint
    Consistency,        // internal invariant violated (never a user error)
    Storage             // I/O failure
};

inline const char* error_kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidModule: return "InvalidModule";
        case ErrorKind::Geometry: return "GeometryError";
        case ErrorKind::NonFinite: return "NonFiniteError";
        case ErrorKind::Recipe: return "RecipeError";
        case ErrorKind::SourceLacksModule: return "SourceLacksModule";
        case ErrorKind::MissingArtifact: return "MissingArtifact";
        case ErrorKind::CorruptContainer: return "CorruptContainer";
        case ErrorKind::UnrecoverableModule: return "UnrecoverableModule";
        case ErrorKind::MissingModules: return "MissingModules";
        case ErrorKind::Consistency: return "ConsistencyError";
        case ErrorKind::Storage: return "StorageError";
    }
    return "UnknownError";
}

class TailorError : public std::runtime_error {
  public:
    TailorError(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

    // True for errors caused by user input rather than internal bugs.
    bool is_user_error() const {
        return kind_ != ErrorKind::Consistency && kind_ != ErrorKind::NonFinite &&
               kind_ != ErrorKind::Storage;
    }

  private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw TailorError(kind, message);
}

} // namespace tailor
