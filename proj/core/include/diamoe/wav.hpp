// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "diamoe/error.hpp"

namespace diamoe {

enum class WavErrorKind { NotRiff, UnsupportedFormat, Truncated, BadBuffer };
using WavError = KindedError<WavErrorKind>;

/// Mono audio; samples are in 16-bit PCM units held as doubles.
struct AudioBuffer {
    std::vector<double> samples;
    std::uint32_t sample_rate = 16000;

    double duration() const {
        return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
    }
};

struct WavInfo {
    std::uint32_t sample_rate = 0;
    std::uint16_t channels = 0;
    std::uint16_t bits_per_sample = 0;
    std::uint64_t frames = 0;
    double duration = 0.0;
    bool size_from_header = true;  // false when the data chunk length had to be measured
};

/// RIFF/WAVE, PCM 16-bit mono. Samples are rounded and clamped to int16.
std::string encode_wav(const AudioBuffer& audio);
AudioBuffer decode_wav(const std::string& bytes);

void write_wav(const std::filesystem::path& path, const AudioBuffer& audio);
AudioBuffer read_wav(const std::filesystem::path& path);

/// Reads only the header chunks. When the data chunk length is unset
/// (0 or 0xFFFFFFFF, as streaming writers leave it) the remaining file
/// size is used instead.
WavInfo probe_wav(const std::filesystem::path& path);

}  // namespace diamoe
