#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "attncodec/error.hpp"
#include "attncodec/formats.hpp"
#include "attncodec/guidance.hpp"
#include "attncodec/image.hpp"
#include "attncodec/metrics.hpp"
#include "attncodec/range_coder.hpp"

namespace attncodec {

inline constexpr int kNumPresets = 10;
inline constexpr std::size_t kBlock = 8;
inline constexpr std::size_t kBlockArea = kBlock * kBlock;
inline constexpr double kDefaultGamma = 2.0;
inline constexpr double kMinGamma = 1.1;
inline constexpr double kMaxGamma = 8.0;

/// Base quantizer step of a quality preset: 64 * 2^(-p/1.5). Index 9 is the
/// finest.
inline double preset_step(int preset) {
    require(preset >= 0 && preset < kNumPresets, "preset must be in [0, 9], got " + std::to_string(preset));
    return 64.0 * std::pow(2.0, -static_cast<double>(preset) / 1.5);
}

/// Effective step for a block at guidance `level`: S_p * gamma^(-level).
inline double step_for_block(int preset, double gamma, int level) {
    return preset_step(preset) * std::pow(gamma, -static_cast<double>(level));
}

/// gamma is carried as unsigned 4.4 fixed point.
inline std::uint8_t gamma_to_code(double gamma) {
    require(gamma >= kMinGamma && gamma <= kMaxGamma, "gamma must lie in [1.1, 8]");
    return static_cast<std::uint8_t>(round_half_away(gamma * 16.0));
}
inline double gamma_from_code(std::uint8_t code) { return code / 16.0; }

// ---------------------------------------------------------------------------
// Transform helpers

inline constexpr std::array<std::uint8_t, 64> kZigzag = {
    0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,  12, 19, 26, 33, 40, 48,
    41, 34, 27, 20, 13, 6,  7,  14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23,
    30, 37, 44, 51, 58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};

namespace detail {

struct DctTable {
    std::array<double, 64> c{};  // c[u*8 + x]
    DctTable() {
        for (std::size_t u = 0; u < 8; ++u) {
            const double a = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
            for (std::size_t x = 0; x < 8; ++x)
                c[u * 8 + x] = a * std::cos((2.0 * x + 1.0) * u * std::numbers::pi / 16.0);
        }
    }
};

inline const DctTable& dct_table() {
    static const DctTable t;
    return t;
}

/// Orthonormal 2-D DCT-II of an 8x8 block (natural order in and out).
inline std::array<double, 64> fdct(const std::array<double, 64>& in) {
    const auto& c = dct_table().c;
    std::array<double, 64> tmp{}, out{};
    for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t u = 0; u < 8; ++u) {
            double s = 0.0;
            for (std::size_t x = 0; x < 8; ++x) s += c[u * 8 + x] * in[y * 8 + x];
            tmp[y * 8 + u] = s;
        }
    for (std::size_t v = 0; v < 8; ++v)
        for (std::size_t u = 0; u < 8; ++u) {
            double s = 0.0;
            for (std::size_t y = 0; y < 8; ++y) s += c[v * 8 + y] * tmp[y * 8 + u];
            out[v * 8 + u] = s;
        }
    return out;
}

inline std::array<double, 64> idct(const std::array<double, 64>& in) {
    const auto& c = dct_table().c;
    std::array<double, 64> tmp{}, out{};
    for (std::size_t v = 0; v < 8; ++v)
        for (std::size_t x = 0; x < 8; ++x) {
            double s = 0.0;
            for (std::size_t u = 0; u < 8; ++u) s += c[u * 8 + x] * in[v * 8 + u];
            tmp[v * 8 + x] = s;
        }
    for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) {
            double s = 0.0;
            for (std::size_t v = 0; v < 8; ++v) s += c[v * 8 + y] * tmp[v * 8 + x];
            out[y * 8 + x] = s;
        }
    return out;
}

// BT.601 full range.
inline std::array<double, 3> rgb_to_ycbcr(double r, double g, double b) {
    return {0.299 * r + 0.587 * g + 0.114 * b, -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0,
            0.5 * r - 0.418688 * g - 0.081312 * b + 128.0};
}

inline std::array<double, 3> ycbcr_to_rgb(double y, double cb, double cr) {
    return {y + 1.402 * (cr - 128.0), y - 0.344136 * (cb - 128.0) - 0.714136 * (cr - 128.0),
            y + 1.772 * (cb - 128.0)};
}

}  // namespace detail

/// Dequantized DCT coefficients of every (padded) block, blocks x 3 x 8 x 8
/// in natural order. Pixel-domain scale is 0..255.
struct Latent {
    std::size_t blocks_x = 0;
    std::size_t blocks_y = 0;
    std::vector<double> coefficients;

    std::size_t block_count() const { return blocks_x * blocks_y; }
    double at(std::size_t block, std::size_t channel, std::size_t natural_index) const {
        return coefficients[(block * 3 + channel) * kBlockArea + natural_index];
    }

    friend bool operator==(const Latent&, const Latent&) = default;
};

/// Guidance level of every block, looked up at the block centre:
/// cell = (cy * rows / H, cx * cols / W), clamped to the grid.
inline std::vector<std::int8_t> block_levels(std::size_t width, std::size_t height, const GuidanceMap* guidance) {
    const std::size_t bx = (width + kBlock - 1) / kBlock, by = (height + kBlock - 1) / kBlock;
    std::vector<std::int8_t> out(bx * by, 0);
    if (guidance == nullptr || guidance->empty()) return out;
    for (std::size_t y = 0; y < by; ++y)
        for (std::size_t x = 0; x < bx; ++x) {
            const std::size_t cy = y * kBlock + kBlock / 2, cx = x * kBlock + kBlock / 2;
            const std::size_t r = std::min(guidance->rows - 1, cy * guidance->rows / height);
            const std::size_t c = std::min(guidance->cols - 1, cx * guidance->cols / width);
            out[y * bx + x] = (*guidance)(r, c);
        }
    return out;
}

// ---------------------------------------------------------------------------
// Bitstream container

struct Bitstream {
    static constexpr std::string_view kMagic = "CTAM";
    static constexpr std::uint8_t kVersion = 1;
    static constexpr std::uint8_t kFlagGuidance = 0x01;
    static constexpr std::uint8_t kFlagFiveLevel = 0x02;

    std::uint8_t flags = 0;
    std::uint16_t width = 0;
    std::uint16_t height = 0;
    std::uint8_t preset = 0;
    std::uint8_t gamma_code = 32;
    std::uint8_t map_rows = 0;
    std::uint8_t map_cols = 0;
    std::vector<std::uint8_t> packed_map;
    std::vector<std::uint8_t> payload;

    bool has_guidance() const { return flags & kFlagGuidance; }
    int level_count() const { return (flags & kFlagFiveLevel) ? 5 : 3; }
    double gamma() const { return gamma_from_code(gamma_code); }
    /// Bytes before the payload.
    std::size_t header_size() const { return 4 + 1 + 1 + 2 + 2 + 1 + 1 + 1 + 1 + packed_map.size() + 4; }

    std::vector<std::uint8_t> serialize() const {
        ByteWriter w;
        w.raw(kMagic);
        w.u8(kVersion);
        w.u8(flags);
        w.u16(width);
        w.u16(height);
        w.u8(preset);
        w.u8(gamma_code);
        w.u8(map_rows);
        w.u8(map_cols);
        w.raw(packed_map);
        w.u32(static_cast<std::uint32_t>(payload.size()));
        w.raw(payload);
        return w.take();
    }

    static Bitstream parse(std::span<const std::uint8_t> bytes) {
        ByteReader r(bytes);
        if (bytes.size() < 4 || std::string_view(reinterpret_cast<const char*>(bytes.data()), 4) != kMagic)
            throw FormatError("bitstream: bad magic (expected CTAM)");
        r.raw(4);
        const std::uint8_t version = r.u8();
        if (version != kVersion) throw FormatError("bitstream: unsupported version " + std::to_string(version));
        Bitstream bs;
        bs.flags = r.u8();
        if (bs.flags & ~(kFlagGuidance | kFlagFiveLevel))
            throw FormatError("bitstream: unknown flag bits " + std::to_string(bs.flags));
        bs.width = r.u16();
        bs.height = r.u16();
        bs.preset = r.u8();
        bs.gamma_code = r.u8();
        bs.map_rows = r.u8();
        bs.map_cols = r.u8();
        if (bs.width < kBlock || bs.height < kBlock) throw FormatError("bitstream: image smaller than one block");
        if (bs.preset >= kNumPresets) throw FormatError("bitstream: preset " + std::to_string(bs.preset) + " out of range");
        if (bs.gamma() < kMinGamma - 1.0 / 32 || bs.gamma() > kMaxGamma)
            throw FormatError("bitstream: gamma code " + std::to_string(bs.gamma_code) + " out of range");
        if (bs.has_guidance()) {
            if (bs.map_rows == 0 || bs.map_cols == 0) throw FormatError("bitstream: guidance flag set with empty map");
            auto m = r.raw(packed_map_size(bs.map_rows, bs.map_cols, bs.level_count()));
            bs.packed_map.assign(m.begin(), m.end());
        } else if (bs.map_rows != 0 || bs.map_cols != 0 || (bs.flags & kFlagFiveLevel)) {
            throw FormatError("bitstream: map dimensions present without guidance flag");
        }
        const std::uint32_t len = r.u32();
        auto p = r.raw(len);
        bs.payload.assign(p.begin(), p.end());
        return bs;
    }
};

// ---------------------------------------------------------------------------
// Coefficient entropy model

namespace detail {

inline constexpr std::size_t kBands = 3;
inline constexpr std::size_t kHistory = 3;
inline constexpr std::size_t kPrefixContexts = 8;
inline constexpr std::size_t kMaxPrefix = 24;

/// 0 = DC, 1 = low (zigzag 1..14), 2 = high.
inline std::size_t band_of(std::size_t zz) { return zz == 0 ? 0 : (zz < 15 ? 1 : 2); }

struct CoefficientModel {
    std::array<std::array<std::array<rc::Prob, kHistory>, kBands>, 3> significance{};
    std::array<std::array<std::array<rc::Prob, kPrefixContexts>, kBands>, 3> prefix{};
};

/// Walks the coefficients of one channel block in zigzag order, tracking the
/// significance-history context. DC is coded as a difference against the
/// previous block of the same channel.
struct ChannelContext {
    std::size_t history(std::size_t zz, const std::array<std::int32_t, 64>& vals, bool prev_dc_nonzero) const {
        if (zz == 0) return prev_dc_nonzero ? 1 : 0;
        std::size_t h = vals[zz - 1] != 0 ? 1 : 0;
        if (zz >= 2 && vals[zz - 2] != 0) ++h;
        return h;
    }
};

inline void encode_value(rc::Encoder& enc, CoefficientModel& m, std::size_t ch, std::size_t band, std::size_t hist,
                         std::int32_t v) {
    enc.encode(m.significance[ch][band][hist], v != 0);
    if (v == 0) return;
    enc.encode_bypass(v < 0);
    const std::uint32_t mag = static_cast<std::uint32_t>(v < 0 ? -static_cast<std::int64_t>(v) : v) - 1;
    // Exp-Golomb order 0 of mag: prefix of n ones + terminating zero, n-bit suffix.
    const std::uint32_t value = mag + 1;
    std::size_t n = 0;
    while ((value >> (n + 1)) != 0) ++n;
    for (std::size_t i = 0; i <= n; ++i)
        enc.encode(m.prefix[ch][band][std::min(i, kPrefixContexts - 1)], i < n ? 1 : 0);
    for (std::size_t i = n; i-- > 0;) enc.encode_bypass(static_cast<int>((value >> i) & 1u));
}

inline std::int32_t decode_value(rc::Decoder& dec, CoefficientModel& m, std::size_t ch, std::size_t band,
                                 std::size_t hist) {
    if (!dec.decode(m.significance[ch][band][hist])) return 0;
    const bool negative = dec.decode_bypass();
    std::size_t n = 0;
    while (dec.decode(m.prefix[ch][band][std::min(n, kPrefixContexts - 1)])) {
        if (++n > kMaxPrefix) throw CorruptStreamError("coefficient magnitude prefix too long", dec.position());
    }
    std::uint32_t value = 1;
    for (std::size_t i = 0; i < n; ++i) value = (value << 1) | static_cast<std::uint32_t>(dec.decode_bypass());
    const auto mag = static_cast<std::int32_t>(value);  // = |v|
    return negative ? -mag : mag;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Encoder / decoder

struct EncodeOptions {
    int preset = 6;
    double gamma = kDefaultGamma;
    std::optional<GuidanceMap> guidance;
};

struct EncodeResult {
    Bitstream stream;
    std::vector<std::int32_t> symbols;     // per block, per channel, zigzag order (DC absolute)
    std::vector<double> block_bits;        // ideal code length spent on each block
    std::vector<std::int8_t> levels;       // guidance level of each block
    std::vector<std::uint8_t> bytes() const { return stream.serialize(); }
};

struct DecodeResult {
    Image image;
    Latent latent;
    GuidanceMap guidance;  // empty when the stream carries none
    std::vector<std::int32_t> symbols;
    int preset = 0;
    double gamma = kDefaultGamma;
};

namespace detail {

/// Level-shifted YCbCr planes padded by edge replication to whole blocks.
inline std::array<std::vector<double>, 3> to_planes(const Image& img, std::size_t pw, std::size_t ph) {
    std::array<std::vector<double>, 3> planes;
    for (auto& p : planes) p.assign(pw * ph, 0.0);
    for (std::size_t y = 0; y < ph; ++y) {
        const std::size_t sy = std::min(y, img.height - 1);
        for (std::size_t x = 0; x < pw; ++x) {
            const std::size_t sx = std::min(x, img.width - 1);
            const auto ycc = rgb_to_ycbcr(img.at(sx, sy, 0), img.at(sx, sy, 1), img.at(sx, sy, 2));
            for (std::size_t c = 0; c < 3; ++c) planes[c][y * pw + x] = ycc[c] - 128.0;
        }
    }
    return planes;
}

inline Image reconstruct(const Latent& latent, std::size_t width, std::size_t height) {
    const std::size_t pw = latent.blocks_x * kBlock, ph = latent.blocks_y * kBlock;
    std::array<std::vector<double>, 3> planes;
    for (auto& p : planes) p.assign(pw * ph, 0.0);
    for (std::size_t by = 0; by < latent.blocks_y; ++by)
        for (std::size_t bx = 0; bx < latent.blocks_x; ++bx) {
            const std::size_t b = by * latent.blocks_x + bx;
            for (std::size_t c = 0; c < 3; ++c) {
                std::array<double, 64> coef{};
                for (std::size_t i = 0; i < 64; ++i) coef[i] = latent.at(b, c, i);
                const auto px = idct(coef);
                for (std::size_t y = 0; y < 8; ++y)
                    for (std::size_t x = 0; x < 8; ++x)
                        planes[c][(by * 8 + y) * pw + bx * 8 + x] = px[y * 8 + x] + 128.0;
            }
        }
    Image img(width, height);
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
            const std::size_t i = y * pw + x;
            const auto rgb = ycbcr_to_rgb(planes[0][i], planes[1][i], planes[2][i]);
            for (std::size_t c = 0; c < 3; ++c) img.at(x, y, c) = to_u8(rgb[c]);
        }
    return img;
}

}  // namespace detail

inline EncodeResult encode_detailed(const Image& img, const EncodeOptions& opt) {
    require(img.width >= kBlock && img.height >= kBlock, "encode: image must be at least 8x8");
    require(img.width <= 0xFFFF && img.height <= 0xFFFF, "encode: image dimensions exceed 65535");
    require(img.pixels.size() == img.width * img.height * 3, "encode: pixel buffer size mismatch");
    const std::uint8_t gcode = gamma_to_code(opt.gamma);
    const double gamma = gamma_from_code(gcode);
    preset_step(opt.preset);

    EncodeResult res;
    Bitstream& bs = res.stream;
    bs.width = static_cast<std::uint16_t>(img.width);
    bs.height = static_cast<std::uint16_t>(img.height);
    bs.preset = static_cast<std::uint8_t>(opt.preset);
    bs.gamma_code = gcode;
    const GuidanceMap* guidance = opt.guidance && !opt.guidance->empty() ? &*opt.guidance : nullptr;
    if (guidance) {
        if (guidance->rows > 0xFF || guidance->cols > 0xFF)
            throw FormatError("encode: guidance map " + std::to_string(guidance->rows) + "x" +
                              std::to_string(guidance->cols) + " exceeds 255x255");
        bs.flags |= Bitstream::kFlagGuidance;
        if (guidance->level_count == 5) bs.flags |= Bitstream::kFlagFiveLevel;
        bs.map_rows = static_cast<std::uint8_t>(guidance->rows);
        bs.map_cols = static_cast<std::uint8_t>(guidance->cols);
        bs.packed_map = pack_map(*guidance);
    }

    const std::size_t bx_count = (img.width + kBlock - 1) / kBlock, by_count = (img.height + kBlock - 1) / kBlock;
    const std::size_t pw = bx_count * kBlock, ph = by_count * kBlock;
    const auto planes = detail::to_planes(img, pw, ph);
    res.levels = block_levels(img.width, img.height, guidance);

    // Transform + quantize (independent per block).
    res.symbols.assign(bx_count * by_count * 3 * kBlockArea, 0);
    for (std::size_t by = 0; by < by_count; ++by)
        for (std::size_t bx = 0; bx < bx_count; ++bx) {
            const std::size_t b = by * bx_count + bx;
            const double step = step_for_block(opt.preset, gamma, res.levels[b]);
            for (std::size_t c = 0; c < 3; ++c) {
                std::array<double, 64> px{};
                for (std::size_t y = 0; y < 8; ++y)
                    for (std::size_t x = 0; x < 8; ++x) px[y * 8 + x] = planes[c][(by * 8 + y) * pw + bx * 8 + x];
                const auto coef = detail::fdct(px);
                for (std::size_t zz = 0; zz < 64; ++zz)
                    res.symbols[(b * 3 + c) * kBlockArea + zz] =
                        static_cast<std::int32_t>(round_half_away(coef[kZigzag[zz]] / step));
            }
        }

    // Sequential entropy coding.
    rc::Encoder enc;
    detail::CoefficientModel model;
    std::array<std::int32_t, 3> prev_dc{};
    std::array<bool, 3> prev_dc_nonzero{};
    res.block_bits.assign(bx_count * by_count, 0.0);
    for (std::size_t b = 0; b < bx_count * by_count; ++b) {
        const double before = enc.estimated_bits();
        for (std::size_t c = 0; c < 3; ++c) {
            std::array<std::int32_t, 64> coded{};
            const std::int32_t* q = &res.symbols[(b * 3 + c) * kBlockArea];
            for (std::size_t zz = 0; zz < 64; ++zz) {
                const std::int32_t v = zz == 0 ? q[0] - prev_dc[c] : q[zz];
                const std::size_t hist = detail::ChannelContext{}.history(zz, coded, prev_dc_nonzero[c]);
                detail::encode_value(enc, model, c, detail::band_of(zz), hist, v);
                coded[zz] = v;
            }
            prev_dc_nonzero[c] = coded[0] != 0;
            prev_dc[c] = q[0];
        }
        res.block_bits[b] = enc.estimated_bits() - before;
    }
    bs.payload = enc.finish();
    return res;
}

inline std::vector<std::uint8_t> encode(const Image& img, const EncodeOptions& opt) {
    return encode_detailed(img, opt).bytes();
}

inline DecodeResult decode(std::span<const std::uint8_t> bytes) {
    const Bitstream bs = Bitstream::parse(bytes);
    DecodeResult res;
    res.preset = bs.preset;
    res.gamma = bs.gamma();
    if (bs.has_guidance()) res.guidance = unpack_map(bs.packed_map, bs.map_rows, bs.map_cols, bs.level_count());
    const std::vector<std::int8_t> levels =
        block_levels(bs.width, bs.height, bs.has_guidance() ? &res.guidance : nullptr);

    const std::size_t bx_count = (bs.width + kBlock - 1) / kBlock, by_count = (bs.height + kBlock - 1) / kBlock;
    const std::size_t blocks = bx_count * by_count;
    res.symbols.assign(blocks * 3 * kBlockArea, 0);
    res.latent.blocks_x = bx_count;
    res.latent.blocks_y = by_count;
    res.latent.coefficients.assign(blocks * 3 * kBlockArea, 0.0);

    rc::Decoder dec(bs.payload, bs.header_size());
    detail::CoefficientModel model;
    std::array<std::int32_t, 3> prev_dc{};
    std::array<bool, 3> prev_dc_nonzero{};
    for (std::size_t b = 0; b < blocks; ++b) {
        const double step = step_for_block(bs.preset, bs.gamma(), levels[b]);
        for (std::size_t c = 0; c < 3; ++c) {
            std::array<std::int32_t, 64> coded{};
            std::int32_t* q = &res.symbols[(b * 3 + c) * kBlockArea];
            for (std::size_t zz = 0; zz < 64; ++zz) {
                const std::size_t hist = detail::ChannelContext{}.history(zz, coded, prev_dc_nonzero[c]);
                const std::int32_t v = detail::decode_value(dec, model, c, detail::band_of(zz), hist);
                coded[zz] = v;
                q[zz] = zz == 0 ? v + prev_dc[c] : v;
                res.latent.coefficients[(b * 3 + c) * kBlockArea + kZigzag[zz]] = q[zz] * step;
            }
            prev_dc_nonzero[c] = coded[0] != 0;
            prev_dc[c] = q[0];
        }
    }
    res.image = detail::reconstruct(res.latent, bs.width, bs.height);
    return res;
}

/// (bpp, PSNR) per preset.
inline std::vector<RDPoint> rd_sweep(const Image& img, const std::vector<int>& presets,
                                     const std::optional<GuidanceMap>& guidance = std::nullopt,
                                     double gamma = kDefaultGamma) {
    require(presets.size() >= 2, "rd_sweep: need at least 2 presets");
    std::vector<RDPoint> out;
    for (int p : presets) {
        const auto bytes = encode(img, EncodeOptions{p, gamma, guidance});
        const auto dec = decode(bytes);
        out.push_back({bpp(bytes.size(), img.width, img.height), psnr(img, dec.image)});
    }
    return out;
}

}  // namespace attncodec
