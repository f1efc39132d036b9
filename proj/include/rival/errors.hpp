#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace rival {

// Base class for all library errors. Subcommands map these to one-line
// stderr messages; the python module maps them to ValueError/RuntimeError.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad argument values: shape mismatches, out-of-range timesteps, empty input.
struct InvalidInputError : Error {
    using Error::Error;
};

// Inconsistent wiring: unknown attention site, codec channel mismatch,
// chain/denoiser incompatibility.
struct ConfigError : Error {
    using Error::Error;
};

// Lookup of a (site, step) pair that was never captured.
struct MissingCacheError : Error {
    using Error::Error;
};

// Unreadable or malformed file content (latent blobs, PNG, config).
struct FormatError : Error {
    using Error::Error;
};

// Zero-variance input where a Gaussian fit is required.
struct DegenerateDistributionError : Error {
    using Error::Error;
};

inline void warn(const std::string& msg) {
    std::fprintf(stderr, "warning: %s\n", msg.c_str());
}

}  // namespace rival
