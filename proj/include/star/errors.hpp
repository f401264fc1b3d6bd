#pragma once

#include <stdexcept>
#include <string>

namespace star {

// Precondition and shape violations use std::invalid_argument directly.
// The types below name the signals other modules branch on.

/// A gradient or update produced a non-finite value; the step was not applied.
class CorruptedTraining : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A point lies outside the modeled oracle space.
class OutOfDomain : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Not enough recorded data to answer the query (e.g. no records for a pair).
class InsufficientData : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A reachability ratio query whose denominator box has zero volume.
class IllPosedQuery : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Snapshot or config file could not be read as the expected format/version.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration document; the message carries the line number.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace star
