#pragma once

#include <stdexcept>
#include <string>

namespace codemix {

// Base class for all data/model errors raised by this library. The CLI maps
// these to exit code 2; anything else is a usage or internal error.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace codemix
