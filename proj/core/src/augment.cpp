// SPDX-License-Identifier: Apache-2.0
#include "diamoe/augment.hpp"

#include <charconv>
#include <cmath>
#include <numbers>

namespace diamoe {
namespace {

void check_factor(double factor) {
    if (!(factor >= kMinFactor && factor <= kMaxFactor)) {
        throw AugmentError(AugmentErrorKind::BadFactor,
                           "factor must lie in [0.5, 2.0], got " + std::to_string(factor));
    }
}

void check_length(const AudioBuffer& audio, const WsolaParams& p) {
    if (audio.samples.size() < p.frame) {
        throw AugmentError(AugmentErrorKind::TooShort,
                           "input shorter than one analysis frame (" + std::to_string(p.frame) +
                               " samples)");
    }
}

double sample_at(const std::vector<double>& x, std::ptrdiff_t i) {
    return (i >= 0 && static_cast<std::size_t>(i) < x.size()) ? x[static_cast<std::size_t>(i)] : 0.0;
}

std::string format_factor(double factor) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, factor);
    return std::string(buf, res.ptr);
}

}  // namespace

WsolaParams WsolaParams::for_rate(std::uint32_t sample_rate) {
    const double scale = static_cast<double>(sample_rate) / 16000.0;
    auto scaled = [scale](double n) {
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(n * scale)));
    };
    WsolaParams p;
    p.hop = scaled(128);
    p.frame = 4 * p.hop;
    p.search = scaled(64);
    return p;
}

AudioBuffer time_stretch(const AudioBuffer& audio, double factor) {
    check_factor(factor);
    const auto n = static_cast<double>(audio.samples.size());
    return time_stretch_to(audio, factor, static_cast<std::size_t>(std::llround(factor * n)));
}

AudioBuffer time_stretch_to(const AudioBuffer& audio, double factor, std::size_t out_length) {
    check_factor(factor);
    const WsolaParams p = WsolaParams::for_rate(audio.sample_rate);
    check_length(audio, p);
    const auto& x = audio.samples;
    const auto frame = static_cast<std::ptrdiff_t>(p.frame);
    const auto hop = static_cast<std::ptrdiff_t>(p.hop);
    const auto search = static_cast<std::ptrdiff_t>(p.search);
    const double analysis_hop = static_cast<double>(p.hop) / factor;

    std::vector<double> window(p.frame);
    for (std::size_t i = 0; i < p.frame; ++i) {
        window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                          static_cast<double>(p.frame));
    }

    std::vector<double> out(out_length + p.frame, 0.0);
    std::vector<double> weight(out.size(), 0.0);
    std::ptrdiff_t previous = 0;
    for (std::size_t j = 0; j * p.hop < out_length; ++j) {
        const auto nominal = static_cast<std::ptrdiff_t>(std::llround(static_cast<double>(j) * analysis_hop));
        std::ptrdiff_t chosen = nominal;
        if (j > 0) {
            // Pick the offset whose frame best continues the previous one.
            const std::ptrdiff_t natural = previous + hop;
            double best = -std::numeric_limits<double>::infinity();
            for (std::ptrdiff_t d = -search; d <= search; ++d) {
                const std::ptrdiff_t candidate = nominal + d;
                double score = 0.0;
                for (std::ptrdiff_t i = 0; i < frame; ++i) {
                    score += sample_at(x, candidate + i) * sample_at(x, natural + i);
                }
                if (score > best) {
                    best = score;
                    chosen = candidate;
                }
            }
        }
        const std::size_t base = j * p.hop;
        for (std::size_t i = 0; i < p.frame; ++i) {
            out[base + i] += window[i] * sample_at(x, chosen + static_cast<std::ptrdiff_t>(i));
            weight[base + i] += window[i];
        }
        previous = chosen;
    }

    AudioBuffer result;
    result.sample_rate = audio.sample_rate;
    result.samples.resize(out_length);
    for (std::size_t i = 0; i < out_length; ++i) {
        result.samples[i] = weight[i] > 1e-9 ? out[i] / weight[i] : 0.0;
    }
    return result;
}

AudioBuffer resample_linear(const AudioBuffer& audio, double step) {
    if (!(step > 0.0)) {
        throw AugmentError(AugmentErrorKind::BadFactor, "resampling step must be positive");
    }
    AudioBuffer result;
    result.sample_rate = audio.sample_rate;
    const auto& x = audio.samples;
    if (x.empty()) {
        return result;
    }
    const auto last = static_cast<double>(x.size() - 1);
    const auto count = static_cast<std::size_t>(std::floor(last / step)) + 1;
    result.samples.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double pos = static_cast<double>(i) * step;
        const auto lo = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(lo);
        const double hi = lo + 1 < x.size() ? x[lo + 1] : x[lo];
        result.samples[i] = x[lo] + frac * (hi - x[lo]);
    }
    return result;
}

AudioBuffer pitch_shift(const AudioBuffer& audio, double factor) {
    check_factor(factor);
    const WsolaParams p = WsolaParams::for_rate(audio.sample_rate);
    check_length(audio, p);
    const AudioBuffer squeezed = resample_linear(audio, factor);
    check_length(squeezed, p);
    return time_stretch_to(squeezed, factor, audio.samples.size());
}

std::string variant_suffix(AugmentMode mode, double factor) {
    return (mode == AugmentMode::TimeStretch ? "_ts" : "_ps") + format_factor(factor);
}

std::vector<ManifestRecord> augment_manifest(std::span<const ManifestRecord> records,
                                             const AugmentOptions& options) {
    for (const double f : options.factors) {
        check_factor(f);
    }
    std::vector<ManifestRecord> out;
    out.reserve(records.size() * (1 + options.factors.size() * options.modes.size()));
    for (std::size_t r = 0; r < records.size(); ++r) {
        const auto& record = records[r];
        out.push_back(record);
        if (options.factors.empty() || options.modes.empty()) {
            continue;
        }
        if (!record.audio) {
            throw AugmentError(AugmentErrorKind::MissingAudio,
                               "record '" + record.id + "' has no audio", r);
        }
        const auto source = options.source_dir / *record.audio;
        AudioBuffer audio;
        try {
            audio = read_wav(source);
        } catch (const IoError&) {
            throw AugmentError(AugmentErrorKind::MissingAudio,
                               "record '" + record.id + "': cannot read " + source.string(), r);
        }
        for (const double f : options.factors) {
            for (const auto mode : options.modes) {
                const AudioBuffer variant =
                    mode == AugmentMode::TimeStretch ? time_stretch(audio, f) : pitch_shift(audio, f);
                ManifestRecord next = record;
                next.id = record.id + variant_suffix(mode, f);
                const auto wav = options.out_dir / (next.id + ".wav");
                std::filesystem::create_directories(options.out_dir);
                write_wav(wav, variant);
                next.audio = std::filesystem::relative(wav, options.manifest_dir).generic_string();
                next.duration = variant.duration();
                out.push_back(std::move(next));
            }
        }
    }
    return out;
}

}  // namespace diamoe
