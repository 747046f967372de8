#ifndef TAGKIT_ERRORS_HPP
#define TAGKIT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace tagkit {

// Error taxonomy used across the toolkit. Each category maps to a stable
// CLI exit behavior: usage problems exit 2, everything below exits 1.

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& m) : std::runtime_error("shape error: " + m) {}
};

struct RangeError : std::runtime_error {
    explicit RangeError(const std::string& m) : std::runtime_error("range error: " + m) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& m) : std::runtime_error("configuration error: " + m) {}
};

struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& m) : std::runtime_error("domain error: " + m) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& m) : std::runtime_error("numeric error: " + m) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& m) : std::runtime_error("i/o error: " + m) {}
};

struct IngestError : std::runtime_error {
    explicit IngestError(const std::string& m) : std::runtime_error("ingestion error: " + m) {}
};

struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& m) : std::runtime_error("checkpoint error: " + m) {}
};

struct ExternalToolError : std::runtime_error {
    explicit ExternalToolError(const std::string& m, bool partial = false)
        : std::runtime_error("external tool error: " + m), partial_results(partial) {}
    // True when an evaluation had already finished some rows before the tool
    // failed; those rows are discarded with the run.
    bool partial_results;
};

struct DependencyError : std::runtime_error {
    explicit DependencyError(const std::string& m) : std::runtime_error("dependency error: " + m) {}
};

struct ProvenanceError : std::runtime_error {
    explicit ProvenanceError(const std::string& m) : std::runtime_error("provenance error: " + m) {}
};

struct CapacityError : std::runtime_error {
    explicit CapacityError(const std::string& m) : std::runtime_error("capacity error: " + m) {}
};

}  // namespace tagkit

#endif
