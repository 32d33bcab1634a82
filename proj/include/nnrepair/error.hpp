#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nnrepair {

/// Base class for every error raised by the library.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error
{
public:
    using Error::Error;
};

class ContractError : public Error
{
public:
    using Error::Error;
};

/// Malformed NNet input. `line()` is 1-based; 0 means end of file.
class NnetParseError : public Error
{
public:
    NnetParseError(const std::string &source, std::size_t line, const std::string &what)
        : Error(source + ":" + std::to_string(line) + ": " + what)
        , _line(line)
    {
    }

    std::size_t line() const { return _line; }

private:
    std::size_t _line;
};

class TrainingError : public Error
{
public:
    TrainingError(const std::string &what, std::size_t batch)
        : Error(what + " (batch " + std::to_string(batch) + ")")
        , _batch(batch)
    {
    }

    std::size_t batch() const { return _batch; }

private:
    std::size_t _batch;
};

} // namespace nnrepair
