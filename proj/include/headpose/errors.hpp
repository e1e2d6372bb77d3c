#pragma once

#include <stdexcept>
#include <string>

namespace headpose {

// Error taxonomy shared by all modules. Everything derives from Error so
// callers can catch the whole family at an API boundary.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A 6D rotation input whose vectors are (near-)zero or (near-)parallel.
struct DegenerateInput : Error {
    using Error::Error;
};

// A point landed at or behind the camera plane during projection.
struct BehindCamera : Error {
    explicit BehindCamera(int point_index, double depth)
        : Error("point " + std::to_string(point_index) + " has non-positive depth " +
                std::to_string(depth)),
          index(point_index) {}
    int index;
};

struct DegenerateBox : Error {
    using Error::Error;
};

struct NonPositiveDepth : Error {
    using Error::Error;
};

struct DegenerateCloud : Error {
    using Error::Error;
};

struct ShapeMismatch : Error {
    using Error::Error;
};

struct IndexOutOfRange : Error {
    using Error::Error;
};

struct StaleCache : Error {
    using Error::Error;
};

struct Unprojectable : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct IoFailure : Error {
    using Error::Error;
};

}  // namespace headpose
