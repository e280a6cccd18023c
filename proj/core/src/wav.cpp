// SPDX-License-Identifier: Apache-2.0
#include "diamoe/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace diamoe {
namespace {

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

std::uint16_t get_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

struct Layout {
    WavInfo info;
    std::size_t data_offset = 0;
    std::size_t data_bytes = 0;
};

// Parses the chunk list. `total_size` is the full file length; `bytes` may be
// only a prefix of the file when probing.
Layout parse_layout(const std::string& bytes, std::size_t total_size) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0) {
        throw WavError(WavErrorKind::NotRiff, "not a RIFF/WAVE file");
    }
    Layout layout;
    bool have_fmt = false;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t size = get_u32(p + pos + 4);
        if (std::memcmp(p + pos, "fmt ", 4) == 0) {
            if (size < 16 || pos + 8 + 16 > bytes.size()) {
                throw WavError(WavErrorKind::Truncated, "fmt chunk truncated");
            }
            const std::uint16_t format = get_u16(p + pos + 8);
            layout.info.channels = get_u16(p + pos + 10);
            layout.info.sample_rate = get_u32(p + pos + 12);
            layout.info.bits_per_sample = get_u16(p + pos + 22);
            if (format != 1) {
                throw WavError(WavErrorKind::UnsupportedFormat, "only PCM WAV is supported");
            }
            have_fmt = true;
        } else if (std::memcmp(p + pos, "data", 4) == 0) {
            if (!have_fmt) {
                throw WavError(WavErrorKind::UnsupportedFormat, "data chunk before fmt chunk");
            }
            layout.data_offset = pos + 8;
            const std::size_t available = total_size - layout.data_offset;
            if (size == 0 || size == 0xffffffffu) {
                layout.data_bytes = available;
                layout.info.size_from_header = false;
            } else {
                layout.data_bytes = std::min<std::size_t>(size, available);
            }
            const std::size_t block = static_cast<std::size_t>(layout.info.channels) *
                                      (layout.info.bits_per_sample / 8u);
            if (block == 0 || layout.info.sample_rate == 0) {
                throw WavError(WavErrorKind::UnsupportedFormat, "degenerate WAV format");
            }
            layout.info.frames = layout.data_bytes / block;
            layout.info.duration =
                static_cast<double>(layout.info.frames) / static_cast<double>(layout.info.sample_rate);
            return layout;
        }
        pos += 8 + size + (size & 1u);
    }
    throw WavError(WavErrorKind::Truncated, "no data chunk found");
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open WAV file: " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

std::string encode_wav(const AudioBuffer& audio) {
    if (audio.sample_rate == 0) {
        throw WavError(WavErrorKind::BadBuffer, "sample rate must be positive");
    }
    const auto data_bytes = static_cast<std::uint32_t>(audio.samples.size() * 2);
    std::string out;
    out.reserve(44 + data_bytes);
    out += "RIFF";
    put_u32(out, 36 + data_bytes);
    out += "WAVEfmt ";
    put_u32(out, 16);
    put_u16(out, 1);  // PCM
    put_u16(out, 1);  // mono
    put_u32(out, audio.sample_rate);
    put_u32(out, audio.sample_rate * 2);
    put_u16(out, 2);
    put_u16(out, 16);
    out += "data";
    put_u32(out, data_bytes);
    for (const double s : audio.samples) {
        if (!std::isfinite(s)) {
            throw WavError(WavErrorKind::BadBuffer, "non-finite sample");
        }
        const double clamped = std::clamp(std::round(s), -32768.0, 32767.0);
        put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(clamped)));
    }
    return out;
}

AudioBuffer decode_wav(const std::string& bytes) {
    const Layout layout = parse_layout(bytes, bytes.size());
    if (layout.info.channels != 1 || layout.info.bits_per_sample != 16) {
        throw WavError(WavErrorKind::UnsupportedFormat, "only 16-bit mono WAV is supported");
    }
    AudioBuffer audio;
    audio.sample_rate = layout.info.sample_rate;
    audio.samples.resize(layout.info.frames);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + layout.data_offset;
    for (std::size_t i = 0; i < audio.samples.size(); ++i) {
        audio.samples[i] = static_cast<double>(static_cast<std::int16_t>(get_u16(p + 2 * i)));
    }
    return audio;
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& audio) {
    const std::string bytes = encode_wav(audio);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write WAV file: " + path.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

AudioBuffer read_wav(const std::filesystem::path& path) {
    return decode_wav(slurp(path));
}

WavInfo probe_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open WAV file: " + path.string());
    }
    const auto total = static_cast<std::size_t>(std::filesystem::file_size(path));
    // Header chunks are small; 4 KiB covers fmt plus typical LIST/fact chunks.
    std::string head(std::min<std::size_t>(total, 4096), '\0');
    in.read(head.data(), static_cast<std::streamsize>(head.size()));
    try {
        return parse_layout(head, total).info;
    } catch (const WavError& e) {
        if (e.kind() != WavErrorKind::Truncated || head.size() == total) {
            throw;
        }
    }
    return parse_layout(slurp(path), total).info;
}

}  // namespace diamoe
