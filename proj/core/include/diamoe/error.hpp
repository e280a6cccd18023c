// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace diamoe {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Error carrying a module-specific kind enum and an optional position
/// (code point index, line number or record index depending on the kind).
template <typename Kind>
class KindedError : public Error {
public:
    KindedError(Kind kind, std::string message, std::size_t position = npos)
        : Error(std::move(message)), kind_(kind), position_(position) {}

    Kind kind() const noexcept { return kind_; }
    std::size_t position() const noexcept { return position_; }
    bool has_position() const noexcept { return position_ != npos; }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    Kind kind_;
    std::size_t position_;
};

/// Raised by file readers when a path cannot be opened or written.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace diamoe
