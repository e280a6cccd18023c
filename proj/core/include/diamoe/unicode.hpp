// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "diamoe/error.hpp"

namespace diamoe::unicode {

/// Thrown for byte sequences that are not valid UTF-8.
class Utf8Error : public Error {
public:
    using Error::Error;
};

/// NFC-normalizes a UTF-8 string.
std::string nfc(std::string_view utf8);

bool is_nfc(std::string_view utf8);

/// Splits a UTF-8 string into its code points, each returned as its own
/// UTF-8 encoded string.
std::vector<std::string> code_points(std::string_view utf8);

/// True when the UTF-8 string is a single whitespace code point.
bool is_whitespace(std::string_view code_point);

/// Splits on Unicode whitespace, dropping empty pieces.
std::vector<std::string> split_whitespace(std::string_view utf8);

}  // namespace diamoe::unicode
