// SPDX-License-Identifier: Apache-2.0
#include "diamoe/unicode.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

namespace diamoe::unicode {
namespace {

const icu::Normalizer2& nfc_instance() {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status) || norm == nullptr) {
        throw Error("ICU NFC normalizer unavailable");
    }
    return *norm;
}

// Walks the code points of `utf8`, calling fn(begin, end, cp) for each one.
template <typename Fn>
void for_each_code_point(std::string_view utf8, Fn&& fn) {
    const auto* s = reinterpret_cast<const uint8_t*>(utf8.data());
    const auto length = static_cast<int32_t>(utf8.size());
    int32_t i = 0;
    while (i < length) {
        const int32_t start = i;
        UChar32 c = 0;
        U8_NEXT(s, i, length, c);
        if (c < 0) {
            throw Utf8Error("invalid UTF-8 at byte " + std::to_string(start));
        }
        fn(static_cast<std::size_t>(start), static_cast<std::size_t>(i), c);
    }
}

}  // namespace

std::string nfc(std::string_view utf8) {
    // Validate first so malformed input is reported instead of silently
    // replaced with U+FFFD by ICU.
    for_each_code_point(utf8, [](std::size_t, std::size_t, UChar32) {});
    UErrorCode status = U_ZERO_ERROR;
    const auto src = icu::UnicodeString::fromUTF8(
        icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
    const icu::UnicodeString out = nfc_instance().normalize(src, status);
    if (U_FAILURE(status)) {
        throw Utf8Error("NFC normalization failed");
    }
    std::string result;
    out.toUTF8String(result);
    return result;
}

bool is_nfc(std::string_view utf8) {
    return nfc(utf8) == utf8;
}

std::vector<std::string> code_points(std::string_view utf8) {
    std::vector<std::string> out;
    out.reserve(utf8.size());
    for_each_code_point(utf8, [&](std::size_t b, std::size_t e, UChar32) {
        out.emplace_back(utf8.substr(b, e - b));
    });
    return out;
}

bool is_whitespace(std::string_view code_point) {
    bool ws = false;
    std::size_t count = 0;
    for_each_code_point(code_point, [&](std::size_t, std::size_t, UChar32 c) {
        ++count;
        ws = u_isUWhiteSpace(c) != 0;
    });
    return count == 1 && ws;
}

std::vector<std::string> split_whitespace(std::string_view utf8) {
    std::vector<std::string> out;
    std::string current;
    for_each_code_point(utf8, [&](std::size_t b, std::size_t e, UChar32 c) {
        if (u_isUWhiteSpace(c)) {
            if (!current.empty()) {
                out.push_back(std::move(current));
                current.clear();
            }
        } else {
            current.append(utf8.substr(b, e - b));
        }
    });
    if (!current.empty()) {
        out.push_back(std::move(current));
    }
    return out;
}

}  // namespace diamoe::unicode
