#pragma once

#include <stdexcept>
#include <string>

namespace deephedge {

// Every library error carries a stable machine-readable kind so the CLI can
// emit a structured summary without string matching on messages.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

struct DomainError : Error {
    explicit DomainError(const std::string& w) : Error("domain", w) {}
};

struct OutOfBoundsError : Error {
    explicit OutOfBoundsError(const std::string& w) : Error("out_of_bounds", w) {}
};

struct NonConvergenceError : Error {
    explicit NonConvergenceError(const std::string& w) : Error("non_convergence", w) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& w) : Error("shape_mismatch", w) {}
};

struct StaleCacheError : Error {
    explicit StaleCacheError(const std::string& w) : Error("stale_cache", w) {}
};

struct NonFiniteGradientError : Error {
    explicit NonFiniteGradientError(const std::string& w) : Error("non_finite_gradient", w) {}
};

struct DivergenceError : Error {
    explicit DivergenceError(const std::string& w) : Error("divergence", w) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string& w) : Error("malformed_file", w) {}
};

struct UnitInconsistencyError : Error {
    explicit UnitInconsistencyError(const std::string& w) : Error("unit_inconsistency", w) {}
};

struct EmptyPartitionError : Error {
    explicit EmptyPartitionError(const std::string& w) : Error("empty_partition", w) {}
};

struct DegenerateError : Error {
    explicit DegenerateError(const std::string& w) : Error("degenerate", w) {}
};

struct SpecMismatchError : Error {
    explicit SpecMismatchError(const std::string& w) : Error("spec_mismatch", w) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error("config", w) {}
};

struct IoError : Error {
    explicit IoError(const std::string& w) : Error("io", w) {}
};

}  // namespace deephedge
