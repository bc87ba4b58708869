#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "attncodec/error.hpp"
#include "attncodec/tensor.hpp"

namespace attncodec {

/// 8-bit interleaved RGB image.
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // width*height*3

    Image() = default;
    Image(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h * 3, fill) {}

    std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
    std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }

    friend bool operator==(const Image&, const Image&) = default;
};

/// Round half away from zero; used for every float -> integer conversion in
/// the codec so encoder and decoder agree bit for bit.
inline double round_half_away(double v) { return v < 0.0 ? -std::floor(-v + 0.5) : std::floor(v + 0.5); }

inline std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::clamp(round_half_away(v), 0.0, 255.0)); }

/// H x W x 3 tensor with values in [0, 1].
inline Tensor to_tensor(const Image& img) {
    Tensor t(Shape{img.height, img.width, 3});
    for (std::size_t i = 0; i < img.pixels.size(); ++i) t[i] = img.pixels[i] / 255.0;
    return t;
}

inline Image to_image(const Tensor& t) {
    require(t.rank() == 3 && t.dim(2) == 3, "to_image: expected HxWx3 tensor, got " + shape_string(t.shape()));
    Image img(t.dim(1), t.dim(0));
    for (std::size_t i = 0; i < t.size(); ++i) img.pixels[i] = to_u8(t[i] * 255.0);
    return img;
}

/// Largest centred square.
inline Image center_crop_square(const Image& img) {
    const std::size_t side = std::min(img.width, img.height);
    const std::size_t x0 = (img.width - side) / 2;
    const std::size_t y0 = (img.height - side) / 2;
    Image out(side, side);
    for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x)
            for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x + x0, y + y0, c);
    return out;
}

/// Rectangular sub-image.
inline Image crop(const Image& img, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
    require(x0 + w <= img.width && y0 + h <= img.height, "crop: region outside image");
    Image out(w, h);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x + x0, y + y0, c);
    return out;
}

/// Bilinear resize of an HxWx3 tensor, half-pixel centres with edge clamping.
inline Tensor resize_bilinear(const Tensor& src, std::size_t out_h, std::size_t out_w) {
    require(src.rank() == 3 && src.dim(2) == 3, "resize_bilinear: expected HxWx3 tensor");
    require(out_h > 0 && out_w > 0, "resize_bilinear: empty target");
    const std::size_t in_h = src.dim(0), in_w = src.dim(1);
    if (in_h == out_h && in_w == out_w) return src;
    Tensor out(Shape{out_h, out_w, 3});
    auto coord = [](std::size_t o, std::size_t in, std::size_t outn, std::size_t& i0, std::size_t& i1, double& f) {
        double s = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(outn) - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(in - 1));
        i0 = static_cast<std::size_t>(std::floor(s));
        i1 = std::min(i0 + 1, in - 1);
        f = s - static_cast<double>(i0);
    };
    for (std::size_t y = 0; y < out_h; ++y) {
        std::size_t y0, y1;
        double fy;
        coord(y, in_h, out_h, y0, y1, fy);
        for (std::size_t x = 0; x < out_w; ++x) {
            std::size_t x0, x1;
            double fx;
            coord(x, in_w, out_w, x0, x1, fx);
            for (std::size_t c = 0; c < 3; ++c) {
                auto px = [&](std::size_t yy, std::size_t xx) { return src[(yy * in_w + xx) * 3 + c]; };
                const double top = px(y0, x0) * (1.0 - fx) + px(y0, x1) * fx;
                const double bot = px(y1, x0) * (1.0 - fx) + px(y1, x1) * fx;
                out[(y * out_w + x) * 3 + c] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    return out;
}

/// Model input: centre-crop to square, bilinear resize to `target_size`,
/// scale to [0, 1]. No mean/std normalisation.
inline Tensor preprocess(const Image& img, std::size_t target_size) {
    require(img.width > 0 && img.height > 0, "preprocess: empty image");
    const Image square = img.width == img.height ? img : center_crop_square(img);
    return resize_bilinear(to_tensor(square), target_size, target_size);
}

}  // namespace attncodec
