#pragma once

#include <stdexcept>
#include <string>

namespace patchproto {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed binary container (bad magic, version, truncated payload).
struct FormatError : Error {
    using Error::Error;
};

// A value or document violates a domain invariant.
struct ValidationError : Error {
    using Error::Error;
};

// A caller-supplied parameter is out of range.
struct ParameterError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace patchproto
