// SPDX-License-Identifier: Apache-2.0
//
// Time-scale and pitch modification of mono PCM audio, and manifest expansion.

#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "diamoe/error.hpp"
#include "diamoe/manifest.hpp"
#include "diamoe/wav.hpp"

namespace diamoe {

enum class AugmentErrorKind { BadFactor, TooShort, MissingAudio };
using AugmentError = KindedError<AugmentErrorKind>;

inline constexpr std::array<double, 6> kDefaultAugmentFactors = {0.85, 0.9, 0.95, 1.05, 1.1, 1.15};
inline constexpr double kMinFactor = 0.5;
inline constexpr double kMaxFactor = 2.0;

/// WSOLA frame geometry in samples.
struct WsolaParams {
    std::size_t frame = 512;
    std::size_t hop = 128;
    std::size_t search = 64;

    /// 512/128/64 at 16 kHz, scaled linearly with the sample rate.
    static WsolaParams for_rate(std::uint32_t sample_rate);
};

/// WSOLA time-scale modification. `factor` multiplies the duration; the
/// output has exactly round(factor * N) samples.
AudioBuffer time_stretch(const AudioBuffer& audio, double factor);

/// Same as time_stretch but with an explicit output length.
AudioBuffer time_stretch_to(const AudioBuffer& audio, double factor, std::size_t out_length);

/// Linear-interpolation resampling: output sample i reads input position
/// i * step. `step` > 1 raises frequencies and shortens the signal.
AudioBuffer resample_linear(const AudioBuffer& audio, double step);

/// Multiplies every frequency by `factor`, keeping the length unchanged.
AudioBuffer pitch_shift(const AudioBuffer& audio, double factor);

enum class AugmentMode { TimeStretch, PitchShift };

struct AugmentOptions {
    std::vector<double> factors{kDefaultAugmentFactors.begin(), kDefaultAugmentFactors.end()};
    std::vector<AugmentMode> modes{AugmentMode::TimeStretch, AugmentMode::PitchShift};
    std::filesystem::path source_dir = ".";    // input audio paths are relative to this
    std::filesystem::path out_dir = ".";       // augmented WAVs are written here
    std::filesystem::path manifest_dir = ".";  // output audio paths are relative to this
};

/// Id suffix for one variant, e.g. "_ts0.85" or "_ps1.1".
std::string variant_suffix(AugmentMode mode, double factor);

/// Emits each source record followed by its variants, factor-major with the
/// time-stretched variant before the pitch-shifted one. Records without audio
/// raise MissingAudio (position = record index).
std::vector<ManifestRecord> augment_manifest(std::span<const ManifestRecord> records,
                                             const AugmentOptions& options);

}  // namespace diamoe
