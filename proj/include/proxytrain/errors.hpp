#pragma once

#include <stdexcept>
#include <string>

namespace proxytrain {

// Shape disagreement between operands (message names both shapes).
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values: NaN/Inf encountered where finite math is required.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Domain/precondition violations other than shape.
class ValueError : public std::runtime_error {
public:
    explicit ValueError(const std::string& what) : std::runtime_error(what) {}
};

// Configuration problems found during validation (CLI exits 1 on these).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Corrupt or inconsistent files on disk (checkpoints, datasets).
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace proxytrain
