#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace plab {

// Process exit codes used by the CLI.
enum class ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kConfig = 2,
    kData = 3,
    kDiverged = 4,
    kResource = 5,
};

class Error : public std::runtime_error {
   public:
    explicit Error(const std::string& what, ExitCode code = ExitCode::kFailure)
        : std::runtime_error(what), code_(code) {}

    ExitCode code() const noexcept { return code_; }

   private:
    ExitCode code_;
};

/// Shape mismatch between operands.
class DimensionError : public Error {
   public:
    explicit DimensionError(const std::string& what) : Error("dimension error: " + what) {}
};

/// Violated call contract (e.g. backward on a non-scalar).
class ContractError : public Error {
   public:
    explicit ContractError(const std::string& what) : Error("contract error: " + what) {}
};

class UnsupportedDegreeError : public Error {
   public:
    explicit UnsupportedDegreeError(const std::string& what)
        : Error("unsupported degree: " + what) {}
};

/// Adapter does not fit the site it is attached to.
class AttachmentError : public Error {
   public:
    explicit AttachmentError(const std::string& what) : Error("attachment error: " + what) {}
};

class DomainError : public Error {
   public:
    explicit DomainError(const std::string& what) : Error("domain error: " + what) {}
};

/// Invalid configuration; `what` starts with the offending field path when known.
class ConfigError : public Error {
   public:
    explicit ConfigError(const std::string& what)
        : Error("config error: " + what, ExitCode::kConfig) {}
};

class DataError : public Error {
   public:
    explicit DataError(const std::string& what) : Error("data error: " + what, ExitCode::kData) {}
};

class DivergedError : public Error {
   public:
    explicit DivergedError(std::size_t step)
        : Error("training diverged (non-finite loss) at step " + std::to_string(step),
                ExitCode::kDiverged),
          step_(step) {}

    std::size_t step() const noexcept { return step_; }

   private:
    std::size_t step_;
};

class ResourceError : public Error {
   public:
    explicit ResourceError(const std::string& what)
        : Error("resource limit: " + what, ExitCode::kResource) {}
};

}  // namespace plab
