#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace xbody {

// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

// A BVH queried against a vertex buffer it was not built from.
class ContractError : public Error {
public:
    using Error::Error;
};

class InitializationError : public Error {
public:
    using Error::Error;
};

class DegenerateAlignment : public Error {
public:
    using Error::Error;
};

class BehindCamera : public Error {
public:
    BehindCamera(const std::string& what, std::vector<int> indices)
        : Error(what), indices_(std::move(indices)) {}
    const std::vector<int>& indices() const { return indices_; }

private:
    std::vector<int> indices_;
};

}  // namespace xbody
