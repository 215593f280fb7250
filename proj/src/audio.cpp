#include "notegate/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "notegate/ioutil.hpp"

namespace notegate {

namespace {

constexpr std::uint16_t kFormatPcm = 0x0001;
constexpr std::uint16_t kFormatFloat = 0x0003;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t le_u32(const unsigned char* p)
{
    return p[0] | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

std::uint16_t le_u16(const unsigned char* p) { return p[0] | (std::uint16_t(p[1]) << 8); }

struct WavFormat {
    std::uint16_t codec = 0;
    std::uint16_t channels = 0;
    std::uint32_t sample_rate = 0;
    std::uint16_t bits = 0;
};

double decode_sample(const unsigned char* p, const WavFormat& fmt)
{
    switch (fmt.bits) {
    case 8: // unsigned
        return (int(p[0]) - 128) / 128.0;
    case 16: {
        std::int16_t v = static_cast<std::int16_t>(le_u16(p));
        return v / 32768.0;
    }
    case 24: {
        std::int32_t v = p[0] | (std::int32_t(p[1]) << 8) | (std::int32_t(p[2]) << 16);
        if (v & 0x800000) v -= 0x1000000;
        return v / 8388608.0;
    }
    case 32:
        if (fmt.codec == kFormatFloat) {
            float f;
            std::uint32_t bits = le_u32(p);
            std::memcpy(&f, &bits, 4);
            return f;
        } else {
            std::int32_t v = static_cast<std::int32_t>(le_u32(p));
            return v / 2147483648.0;
        }
    default:
        throw DataError(cat("unsupported WAV bit depth: ", fmt.bits));
    }
}

} // namespace

AudioClip load_audio(const std::string& path)
{
    std::string bytes = read_file(path);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    std::size_t n = bytes.size();

    if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
        throw DataError(cat("not a RIFF WAV file: ", path));

    WavFormat fmt;
    bool have_fmt = false;
    const unsigned char* data = nullptr;
    std::size_t data_len = 0;

    std::size_t pos = 12;
    while (pos + 8 <= n) {
        std::uint32_t chunk_len = le_u32(p + pos + 4);
        const unsigned char* chunk = p + pos + 8;
        if (pos + 8 + chunk_len > n)
            throw DataError(cat("truncated WAV chunk in ", path));
        if (std::memcmp(p + pos, "fmt ", 4) == 0) {
            if (chunk_len < 16) throw DataError(cat("short fmt chunk in ", path));
            fmt.codec = le_u16(chunk);
            fmt.channels = le_u16(chunk + 2);
            fmt.sample_rate = le_u32(chunk + 4);
            fmt.bits = le_u16(chunk + 14);
            if (fmt.codec == kFormatExtensible) {
                if (chunk_len < 40) throw DataError(cat("short extensible fmt chunk in ", path));
                fmt.codec = le_u16(chunk + 24); // first two bytes of SubFormat GUID
            }
            have_fmt = true;
        } else if (std::memcmp(p + pos, "data", 4) == 0) {
            data = chunk;
            data_len = chunk_len;
        }
        pos += 8 + chunk_len + (chunk_len & 1); // chunks are word-aligned
    }

    if (!have_fmt) throw DataError(cat("WAV file has no fmt chunk: ", path));
    if (!data) throw DataError(cat("WAV file has no data chunk: ", path));
    if (fmt.codec != kFormatPcm && fmt.codec != kFormatFloat)
        throw DataError(cat("unsupported WAV encoding ", fmt.codec, " in ", path));
    if (fmt.codec == kFormatFloat && fmt.bits != 32)
        throw DataError(cat("unsupported float WAV bit depth ", fmt.bits, " in ", path));
    if (fmt.channels == 0) throw DataError(cat("WAV file reports zero channels: ", path));
    if (fmt.sample_rate == 0) throw DataError(cat("WAV file reports zero sample rate: ", path));
    if (fmt.bits != 8 && fmt.bits != 16 && fmt.bits != 24 && fmt.bits != 32)
        throw DataError(cat("unsupported WAV bit depth ", fmt.bits, " in ", path));

    std::size_t bytes_per_sample = fmt.bits / 8;
    std::size_t frame_size = bytes_per_sample * fmt.channels;
    std::size_t frames = frame_size ? data_len / frame_size : 0;
    if (frames == 0) throw DataError(cat("WAV file contains no audio: ", path));

    AudioClip clip;
    clip.sample_rate = static_cast<int>(fmt.sample_rate);
    clip.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (unsigned ch = 0; ch < fmt.channels; ++ch)
            acc += decode_sample(data + i * frame_size + ch * bytes_per_sample, fmt);
        if (!std::isfinite(acc))
            throw DataError(cat("non-finite sample at frame ", i, " in ", path));
        clip.samples[i] = acc / fmt.channels;
    }
    return clip;
}

void save_wav(const std::string& path, const AudioClip& clip)
{
    if (clip.samples.empty()) throw DataError("refusing to write empty WAV");
    if (clip.sample_rate <= 0) throw DataError("invalid sample rate for WAV");

    std::string out;
    std::size_t data_len = clip.samples.size() * 2;
    auto u32 = [&](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
    };
    auto u16 = [&](std::uint16_t v) {
        out.push_back(char(v & 0xff));
        out.push_back(char((v >> 8) & 0xff));
    };

    out += "RIFF";
    u32(static_cast<std::uint32_t>(36 + data_len));
    out += "WAVEfmt ";
    u32(16);
    u16(kFormatPcm);
    u16(1); // mono
    u32(static_cast<std::uint32_t>(clip.sample_rate));
    u32(static_cast<std::uint32_t>(clip.sample_rate * 2));
    u16(2);  // block align
    u16(16); // bits
    out += "data";
    u32(static_cast<std::uint32_t>(data_len));
    for (double s : clip.samples) {
        double c = std::clamp(s, -1.0, 1.0);
        auto v = static_cast<std::int16_t>(std::lround(c * 32767.0));
        u16(static_cast<std::uint16_t>(v));
    }
    write_file_atomic(path, out);
}

AudioClip resample(const AudioClip& clip, int target_rate)
{
    if (target_rate <= 0) throw DataError(cat("invalid target sample rate: ", target_rate));
    if (clip.samples.empty()) throw DataError("cannot resample empty audio");
    if (clip.sample_rate == target_rate) return clip;

    const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
    const auto in_len = static_cast<long long>(clip.samples.size());
    auto out_len = static_cast<std::size_t>(std::llround(in_len * ratio));
    if (out_len == 0) out_len = 1;

    // Low-pass at the narrower of the two Nyquist frequencies, in cycles per
    // input sample; 16 sinc zero crossings per side under a Hann window.
    const double cutoff = 0.5 * std::min(1.0, ratio);
    const int zero_crossings = 16;
    const double half_width = zero_crossings / (2.0 * cutoff);

    auto sinc = [](double x) {
        if (std::abs(x) < 1e-12) return 1.0;
        double px = M_PI * x;
        return std::sin(px) / px;
    };

    AudioClip out;
    out.sample_rate = target_rate;
    out.samples.resize(out_len);
    for (std::size_t n = 0; n < out_len; ++n) {
        const double t = n / ratio;
        auto j0 = static_cast<long long>(std::ceil(t - half_width));
        auto j1 = static_cast<long long>(std::floor(t + half_width));
        j0 = std::max(j0, 0LL);
        j1 = std::min(j1, in_len - 1);
        double acc = 0.0;
        for (long long j = j0; j <= j1; ++j) {
            const double d = t - j;
            const double w = 0.5 * (1.0 + std::cos(M_PI * d / half_width));
            acc += clip.samples[static_cast<std::size_t>(j)] * 2.0 * cutoff * sinc(2.0 * cutoff * d) * w;
        }
        out.samples[n] = acc;
    }
    return out;
}

} // namespace notegate
