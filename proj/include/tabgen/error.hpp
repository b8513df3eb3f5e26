#pragma once

#include <stdexcept>
#include <string>

namespace tabgen {

// Raised for bad user input: malformed configs, schema mismatches,
// precondition violations. Maps to exit code 2 at the CLI.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised for failures during computation: I/O errors, non-finite losses,
// corrupt checkpoints. Maps to exit code 3 at the CLI.
struct ComputeError : std::runtime_error {
    explicit ComputeError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace tabgen
