#pragma once

#include <stdexcept>
#include <string>

namespace perfdro {

// Input data does not match the declared schema (missing column, bad mask).
class SchemaError : public std::runtime_error {
public:
    explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

// A cell failed to parse; message carries the 1-based data row index.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Structurally empty input where at least one record is required.
class EmptyDataError : public std::runtime_error {
public:
    explicit EmptyDataError(const std::string& what) : std::runtime_error(what) {}
};

// A matrix required to be invertible / well conditioned is not.
class SingularityError : public std::runtime_error {
public:
    explicit SingularityError(const std::string& what) : std::runtime_error(what) {}
};

// Absolute-continuity violation: q places mass where p has none.
class SupportError : public std::runtime_error {
public:
    explicit SupportError(const std::string& what) : std::runtime_error(what) {}
};

// Iterative solve produced a non-finite objective.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, int iteration)
        : std::runtime_error(what), iteration_(iteration) {}
    int iteration() const { return iteration_; }

private:
    int iteration_;
};

// A bisection/search bracket does not contain a solution.
class BracketError : public std::runtime_error {
public:
    explicit BracketError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed experiment or CLI configuration.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace perfdro
