#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "attncodec/image.hpp"
#include "attncodec/random.hpp"

namespace attncodec::synthetic {

enum class Kind { gradient, rectangles, checkerboard, strokes };

namespace detail {

inline void fill_gradient(Image& img, Rng& rng) {
    double c0[3], c1[3];
    for (int c = 0; c < 3; ++c) {
        c0[c] = rng.uniform(0, 255);
        c1[c] = rng.uniform(0, 255);
    }
    const double angle = rng.uniform(0, 2 * std::numbers::pi);
    const double ux = std::cos(angle), uy = std::sin(angle);
    const double w = static_cast<double>(img.width), h = static_cast<double>(img.height);
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x) {
            double t = ((x / w - 0.5) * ux + (y / h - 0.5) * uy) / std::numbers::sqrt2 + 0.5;
            t = std::clamp(t, 0.0, 1.0);
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = to_u8(c0[c] + t * (c1[c] - c0[c]));
        }
}

inline void paint_rect(Image& img, Rng& rng) {
    const std::size_t x0 = rng.below(img.width), y0 = rng.below(img.height);
    const std::size_t x1 = std::min(img.width, x0 + 2 + rng.below(img.width / 2 + 1));
    const std::size_t y1 = std::min(img.height, y0 + 2 + rng.below(img.height / 2 + 1));
    std::uint8_t col[3];
    for (auto& c : col) c = static_cast<std::uint8_t>(rng.below(256));
    for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x)
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = col[c];
}

inline void fill_checkerboard(Image& img, Rng& rng) {
    const std::size_t cell = 2 + rng.below(7);
    std::uint8_t a[3], b[3];
    for (int c = 0; c < 3; ++c) {
        a[c] = static_cast<std::uint8_t>(rng.below(256));
        b[c] = static_cast<std::uint8_t>(rng.below(256));
    }
    const std::size_t ox = rng.below(cell), oy = rng.below(cell);
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x) {
            const bool odd = (((x + ox) / cell) + ((y + oy) / cell)) % 2;
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = odd ? a[c] : b[c];
        }
}

// Glyph-like strokes: thick polyline segments on a flat background.
inline void paint_strokes(Image& img, Rng& rng) {
    const int segments = 2 + static_cast<int>(rng.below(5));
    std::uint8_t ink[3];
    for (auto& c : ink) c = static_cast<std::uint8_t>(rng.below(256));
    const double thickness = 0.8 + rng.uniform(0, 2.0);
    double px = rng.uniform(0, static_cast<double>(img.width)), py = rng.uniform(0, static_cast<double>(img.height));
    for (int s = 0; s < segments; ++s) {
        const double qx = rng.uniform(0, static_cast<double>(img.width));
        const double qy = rng.uniform(0, static_cast<double>(img.height));
        const double dx = qx - px, dy = qy - py, len2 = std::max(dx * dx + dy * dy, 1e-9);
        for (std::size_t y = 0; y < img.height; ++y)
            for (std::size_t x = 0; x < img.width; ++x) {
                const double t = std::clamp(((x - px) * dx + (y - py) * dy) / len2, 0.0, 1.0);
                const double ex = x - (px + t * dx), ey = y - (py + t * dy);
                if (ex * ex + ey * ey <= thickness * thickness)
                    for (int c = 0; c < 3; ++c) img.at(x, y, c) = ink[c];
            }
        px = qx;
        py = qy;
    }
}

}  // namespace detail

/// One seeded training image of the given kind.
inline Image make(Kind kind, std::size_t size, std::uint64_t seed) {
    Rng rng(seed);
    Image img(size, size);
    switch (kind) {
        case Kind::gradient:
            detail::fill_gradient(img, rng);
            break;
        case Kind::rectangles:
            detail::fill_gradient(img, rng);
            for (int i = 0, n = 2 + static_cast<int>(rng.below(5)); i < n; ++i) detail::paint_rect(img, rng);
            break;
        case Kind::checkerboard:
            detail::fill_checkerboard(img, rng);
            break;
        case Kind::strokes: {
            std::uint8_t bg[3];
            for (auto& c : bg) c = static_cast<std::uint8_t>(rng.below(256));
            for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = bg[i % 3];
            detail::paint_strokes(img, rng);
            break;
        }
    }
    return img;
}

/// `count` images cycling through all kinds.
inline std::vector<Image> corpus(std::size_t count, std::size_t size, std::uint64_t seed) {
    constexpr Kind kinds[] = {Kind::gradient, Kind::rectangles, Kind::checkerboard, Kind::strokes};
    std::vector<Image> out;
    out.reserve(count);
    Rng seeds(seed);
    for (std::size_t i = 0; i < count; ++i) out.push_back(make(kinds[i % 4], size, seeds.next()));
    return out;
}

/// Training corpus as the adapter sees it: images generated at `source_size`
/// and resized to the model input size.
inline std::vector<Image> training_corpus(std::size_t count, std::size_t source_size, std::size_t model_size,
                                          std::uint64_t seed) {
    std::vector<Image> out;
    out.reserve(count);
    for (const Image& img : corpus(count, source_size, seed)) out.push_back(to_image(preprocess(img, model_size)));
    return out;
}

/// Image with roughly 1/f amplitude spectrum (sum of random oriented
/// sinusoids) plus a few soft-edged blobs, giving natural-image-like
/// statistics without external data.
inline Image natural(std::size_t width, std::size_t height, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> planes(width * height * 3, 0.0);
    constexpr int kWaves = 48;
    for (int i = 0; i < kWaves; ++i) {
        const double f = std::exp(rng.uniform(std::log(0.5), std::log(std::min(width, height) / 2.5)));
        const double theta = rng.uniform(0, std::numbers::pi);
        const double phase = rng.uniform(0, 2 * std::numbers::pi);
        const double amp = 60.0 / f;
        double tint[3];
        for (double& t : tint) t = rng.uniform(0.6, 1.0);
        const double kx = 2 * std::numbers::pi * f * std::cos(theta) / width;
        const double ky = 2 * std::numbers::pi * f * std::sin(theta) / height;
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t x = 0; x < width; ++x) {
                const double v = amp * std::sin(kx * x + ky * y + phase);
                for (int c = 0; c < 3; ++c) planes[(y * width + x) * 3 + c] += tint[c] * v;
            }
    }
    for (int b = 0; b < 4; ++b) {
        const double cx = rng.uniform(0, width), cy = rng.uniform(0, height);
        const double r = rng.uniform(0.08, 0.25) * std::min(width, height);
        double col[3];
        for (double& c : col) c = rng.uniform(-50, 50);
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t x = 0; x < width; ++x) {
                const double d = std::hypot(x - cx, y - cy);
                const double w = 1.0 / (1.0 + std::exp((d - r) / 1.5));
                for (int c = 0; c < 3; ++c) planes[(y * width + x) * 3 + c] += w * col[c];
            }
    }
    Image img(width, height);
    for (std::size_t i = 0; i < planes.size(); ++i) img.pixels[i] = to_u8(128.0 + 0.8 * planes[i]);
    return img;
}

}  // namespace attncodec::synthetic
