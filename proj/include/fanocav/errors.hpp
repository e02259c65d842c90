#pragma once

#include <stdexcept>
#include <string>

namespace fanocav {

/// Argument outside the domain of a physical formula (e.g. a grazing angle <= 0).
class DomainError : public std::domain_error {
public:
    explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

/// Evaluation hit a pole of the model, e.g. r_E at critical coupling and zero detuning.
class SingularityError : public std::domain_error {
public:
    explicit SingularityError(const std::string& what) : std::domain_error(what) {}
};

/// Malformed user input: stack files, scan files, configuration blocks.
class InputError : public std::invalid_argument {
public:
    explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

/// A fit could not produce a usable result (degenerate data, collapsed width, ...).
class FitError : public std::runtime_error {
public:
    explicit FitError(const std::string& what) : std::runtime_error(what) {}
};

/// Geometry fit on degenerate point sets (coincident or collinear).
class DegenerateError : public std::runtime_error {
public:
    explicit DegenerateError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace fanocav
