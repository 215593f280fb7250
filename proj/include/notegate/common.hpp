#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace notegate {

// Base class for everything the library throws. The CLI maps these to the
// data/validation exit code; anything else escaping is a bug.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or inconsistent input: bad file contents, shape mismatches,
// out-of-range values.
class DataError : public Error {
public:
    using Error::Error;
};

template <class... Args>
std::string cat(Args&&... args)
{
    std::ostringstream os;
    (os << ... << args);
    return os.str();
}

} // namespace notegate
